#include "annoclean/optimizer.hpp"

#include <cmath>

#include "annoclean/error.hpp"

namespace annoclean {

void RmsProp::step(std::span<Parameter* const> params) {
  const auto alpha = static_cast<float>(config_.alpha);
  const auto eps = static_cast<float>(config_.eps);
  const auto lr = static_cast<float>(config_.learning_rate);
  const auto mu = static_cast<float>(config_.momentum);
  const auto decay = static_cast<float>(config_.weight_decay);

  for (Parameter* p : params) {
    auto& sq = state_.square_avg[p->name];
    if (sq.empty()) {
      sq.assign(p->size(), 0.0f);
    }
    if (sq.size() != p->size()) {
      throw ShapeError("optimizer state for " + p->name + " has the wrong size");
    }
    std::vector<float>* buf = nullptr;
    if (mu > 0.0f) {
      buf = &state_.momentum_buffer[p->name];
      if (buf->empty()) {
        buf->assign(p->size(), 0.0f);
      }
    }
    for (std::size_t i = 0; i < p->size(); ++i) {
      float g = p->grad[i];
      if (decay != 0.0f) {
        g += decay * p->value[i];
      }
      sq[i] = alpha * sq[i] + (1.0f - alpha) * g * g;
      const float scaled = g / (std::sqrt(sq[i]) + eps);
      if (buf) {
        (*buf)[i] = mu * (*buf)[i] + scaled;
        p->value[i] -= lr * (*buf)[i];
      } else {
        p->value[i] -= lr * scaled;
      }
    }
  }
  ++state_.steps;
}

}  // namespace annoclean
