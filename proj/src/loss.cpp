#include "annoclean/loss.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "annoclean/error.hpp"

namespace annoclean {

namespace {

std::string trim_lower(std::string_view s) {
  std::string out;
  for (char ch : s) {
    if (!std::isspace(static_cast<unsigned char>(ch))) {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  return out;
}

LossComponent parse_term(const std::string& token) {
  std::string name = token;
  double param = 1.0;
  bool has_param = false;
  if (auto open = token.find('('); open != std::string::npos) {
    if (token.back() != ')') {
      throw ConfigError("malformed loss term '" + token + "'");
    }
    name = token.substr(0, open);
    const std::string arg = token.substr(open + 1, token.size() - open - 2);
    char* end = nullptr;
    param = std::strtod(arg.c_str(), &end);
    if (arg.empty() || end != arg.c_str() + arg.size()) {
      throw ConfigError("malformed loss parameter in '" + token + "'");
    }
    has_param = true;
  }
  LossComponent c;
  c.param = param;
  if (name == "l1") {
    c.term = LossTerm::L1;
  } else if (name == "mse" || name == "l2") {
    c.term = LossTerm::MSE;
  } else if (name == "huber") {
    c.term = LossTerm::Huber;
  } else if (name == "smooth_l1" || name == "smoothl1") {
    c.term = LossTerm::SmoothL1;
  } else {
    throw ConfigError("unknown loss term '" + name + "' (expected l1, mse, huber, smooth_l1)");
  }
  if (has_param && (c.term == LossTerm::L1 || c.term == LossTerm::MSE)) {
    throw ConfigError("loss term '" + name + "' takes no parameter");
  }
  return c;
}

std::string format_param(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

LossSpec LossSpec::parse(std::string_view text) {
  const std::string s = trim_lower(text);
  LossSpec spec;
  if (s == "all") {
    spec.terms = {{LossTerm::L1}, {LossTerm::Huber}, {LossTerm::SmoothL1}, {LossTerm::MSE}};
    return spec;
  }
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t plus = s.find('+', start);
    const std::string token = s.substr(start, plus == std::string::npos ? plus : plus - start);
    if (token.empty()) {
      throw ConfigError("empty loss term in '" + std::string(text) + "'");
    }
    spec.terms.push_back(parse_term(token));
    if (plus == std::string::npos) {
      break;
    }
    start = plus + 1;
  }
  return spec;
}

std::string LossSpec::name() const {
  std::string out;
  for (const auto& c : terms) {
    if (!out.empty()) {
      out += "+";
    }
    switch (c.term) {
      case LossTerm::L1:
        out += "l1";
        break;
      case LossTerm::MSE:
        out += "mse";
        break;
      case LossTerm::Huber:
        out += c.param == 1.0 ? "huber" : "huber(" + format_param(c.param) + ")";
        break;
      case LossTerm::SmoothL1:
        out += c.param == 1.0 ? "smooth_l1" : "smooth_l1(" + format_param(c.param) + ")";
        break;
    }
  }
  return out;
}

bool LossSpec::has_mse() const {
  for (const auto& c : terms) {
    if (c.term == LossTerm::MSE) {
      return true;
    }
  }
  return false;
}

double term_value(const LossComponent& c, double d) {
  const double a = std::abs(d);
  switch (c.term) {
    case LossTerm::L1:
      return a;
    case LossTerm::MSE:
      return d * d;
    case LossTerm::Huber:
      return a <= c.param ? 0.5 * d * d : c.param * (a - 0.5 * c.param);
    case LossTerm::SmoothL1:
      return a < c.param ? 0.5 * d * d / c.param : a - 0.5 * c.param;
  }
  return 0.0;
}

double term_derivative(const LossComponent& c, double d) {
  const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
  switch (c.term) {
    case LossTerm::L1:
      return sign;
    case LossTerm::MSE:
      return 2.0 * d;
    case LossTerm::Huber:
      return std::abs(d) <= c.param ? d : c.param * sign;
    case LossTerm::SmoothL1:
      return std::abs(d) < c.param ? d / c.param : sign;
  }
  return 0.0;
}

LossFunction::LossFunction(LossSpec spec) : spec_(std::move(spec)) {}

double LossFunction::value(std::span<const float> prediction, std::span<const float> target) const {
  if (prediction.size() != target.size() || prediction.empty()) {
    throw ShapeError("loss: prediction and target sizes differ or are empty");
  }
  double total = 0.0;
  for (const auto& c : spec_.terms) {
    double sum = 0.0;
    for (std::size_t i = 0; i < prediction.size(); ++i) {
      sum += term_value(c, static_cast<double>(prediction[i]) - target[i]);
    }
    total += c.weight * sum / static_cast<double>(prediction.size());
  }
  return total;
}

double LossFunction::value_and_grad(std::span<const float> prediction, std::span<const float> target,
                                    std::span<float> grad) const {
  if (prediction.size() != target.size() || prediction.size() != grad.size() ||
      prediction.empty()) {
    throw ShapeError("loss: prediction, target and gradient sizes differ or are empty");
  }
  const double n = static_cast<double>(prediction.size());
  double total = 0.0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double d = static_cast<double>(prediction[i]) - target[i];
    double g = 0.0;
    for (const auto& c : spec_.terms) {
      total += c.weight * term_value(c, d);
      g += c.weight * term_derivative(c, d);
    }
    grad[i] = static_cast<float>(g / n);
  }
  return total / n;
}

LossFunction make_loss(const LossSpec& spec) {
  if (spec.terms.empty()) {
    throw ConfigError("loss needs at least one term");
  }
  for (const auto& c : spec.terms) {
    if ((c.term == LossTerm::Huber || c.term == LossTerm::SmoothL1) && !(c.param > 0.0)) {
      throw ConfigError("Huber delta / SmoothL1 beta must be positive");
    }
  }
  return LossFunction(spec);
}

}  // namespace annoclean
