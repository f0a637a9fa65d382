#include "annoclean/config.hpp"

#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "annoclean/error.hpp"

namespace annoclean {

namespace fs = std::filesystem;

namespace {

constexpr std::int64_t kMaxSeed = std::numeric_limits<std::int64_t>::max();

class Section {
 public:
  Section(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

  bool has(const std::string& key) {
    seen_.insert(key);
    return table_ != nullptr && table_->contains(key);
  }

  const toml::node& node(const std::string& key) const { return *table_->get(key); }

  std::string where(const std::string& key) const { return name_ + "." + key; }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!has(key)) {
      return;
    }
    const auto v = node(key).value<T>();
    if (!v) {
      throw ConfigError(where(key) + " has the wrong type");
    }
    out = *v;
  }

  void read_int(const std::string& key, int& out, std::int64_t lo, std::int64_t hi) {
    std::int64_t v = out;
    read(key, v);
    if (v < lo || v > hi) {
      throw ConfigError(where(key) + " = " + std::to_string(v) + " is out of range [" +
                        std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    out = static_cast<int>(v);
  }

  void read_seed(const std::string& key, std::uint64_t& out) {
    std::int64_t v = static_cast<std::int64_t>(out);
    read(key, v);
    if (v < 0) {
      throw ConfigError(where(key) + " must be non-negative");
    }
    out = static_cast<std::uint64_t>(v);
  }

  std::vector<std::string> read_strings(const std::string& key) {
    std::vector<std::string> out;
    if (!has(key)) {
      return out;
    }
    const toml::array* arr = node(key).as_array();
    if (arr == nullptr) {
      throw ConfigError(where(key) + " must be an array of strings");
    }
    for (const auto& el : *arr) {
      const auto s = el.value<std::string>();
      if (!s) {
        throw ConfigError(where(key) + " must be an array of strings");
      }
      out.push_back(*s);
    }
    return out;
  }

  void reject_unknown() const {
    if (table_ == nullptr) {
      return;
    }
    for (const auto& [key, value] : *table_) {
      if (!seen_.contains(std::string(key.str()))) {
        throw ConfigError("unknown config key '" + where(std::string(key.str())) + "'");
      }
    }
  }

 private:
  const toml::table* table_;
  std::string name_;
  std::set<std::string> seen_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal();
}

std::string sanitize(const std::string& text) {
  std::string out;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '+') {
      out += c;
    } else if (c == '(') {
      out += '_';
    }
  }
  return out;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const fs::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "invalid TOML at line " << e.source().begin.line << ": " << e.description();
    throw ConfigError(msg.str());
  }
  const fs::path base = fs::absolute(base_dir);
  ExperimentConfig cfg;

  for (const auto& [key, value] : root) {
    static const std::set<std::string> kSections = {"dataset", "model", "train", "eval",
                                                    "matrix"};
    if (!kSections.contains(std::string(key.str())) || !value.is_table()) {
      throw ConfigError("unknown config section '" + std::string(key.str()) + "'");
    }
  }

  Section ds(root["dataset"].as_table(), "dataset");
  std::string path_text;
  if (ds.has("clean_dir")) {
    ds.read("clean_dir", path_text);
    cfg.dataset.clean_dir = resolve(base, path_text);
  }
  if (ds.has("stamp_dir")) {
    path_text.clear();
    ds.read("stamp_dir", path_text);
    cfg.dataset.stamp_dir = resolve(base, path_text);
  }
  ds.read_int("procedural_count", cfg.dataset.procedural_count, 0, 100000);
  ds.read_int("procedural_height", cfg.dataset.procedural_dims.height, 1, 1 << 15);
  ds.read_int("procedural_width", cfg.dataset.procedural_dims.width, 1, 1 << 15);
  std::string kind(to_string(cfg.dataset.kind));
  ds.read("kind", kind);
  cfg.dataset.kind = parse_annotation_kind(kind);
  std::int64_t n_pairs = static_cast<std::int64_t>(cfg.dataset.n_pairs);
  ds.read("n_pairs", n_pairs);
  if (n_pairs < 1) {
    throw ConfigError("dataset.n_pairs must be >= 1");
  }
  cfg.dataset.n_pairs = static_cast<std::size_t>(n_pairs);
  ds.read_seed("seed", cfg.dataset.seed);
  path_text = "dataset";
  ds.read("out", path_text);
  cfg.dataset.out = resolve(base, path_text);
  ds.read("train_fraction", cfg.dataset.fractions.train);
  ds.read("val_fraction", cfg.dataset.fractions.val);
  ds.read("test_fraction", cfg.dataset.fractions.test);
  ds.reject_unknown();
  if (!cfg.dataset.clean_dir && cfg.dataset.procedural_count == 0) {
    throw ConfigError("dataset needs clean_dir or procedural_count > 0");
  }
  const auto& fr = cfg.dataset.fractions;
  if (fr.train < 0 || fr.val < 0 || fr.test < 0 ||
      std::abs(fr.train + fr.val + fr.test - 1.0) > 1e-9) {
    throw ConfigError("dataset split fractions must be non-negative and sum to 1");
  }

  Section md(root["model"].as_table(), "model");
  md.read("architecture", cfg.model.architecture);
  md.read_int("depth", cfg.model.depth, 1, 8);
  md.read_int("base_channels", cfg.model.base_channels, 1, 4096);
  md.read_int("channel_multiplier", cfg.model.channel_multiplier, 1, 16);
  md.read_int("in_channels", cfg.model.in_channels, 1, 64);
  md.read_int("out_channels", cfg.model.out_channels, 1, 64);
  md.read("leaky_slope", cfg.model.leaky_slope);
  md.reject_unknown();
  cfg.model.validate();

  Section tr(root["train"].as_table(), "train");
  std::string text_value(to_string(cfg.train.scheme));
  tr.read("scheme", text_value);
  cfg.train.scheme = parse_scheme(text_value);
  text_value = cfg.train.loss.name();
  tr.read("loss", text_value);
  cfg.train.loss = LossSpec::parse(text_value);
  text_value = std::string(to_string(cfg.train.normalization));
  tr.read("normalization", text_value);
  cfg.train.normalization = parse_normalization(text_value);
  tr.read_int("batch_size", cfg.train.batch_size, 0, 1 << 20);
  tr.read_int("epochs", cfg.train.epochs, 0, 1 << 20);
  tr.read_seed("seed", cfg.train.seed);
  tr.read("split", cfg.train.split);
  tr.read("learning_rate", cfg.train.optimizer.learning_rate);
  text_value = std::string(to_string(cfg.train.lr_schedule));
  tr.read("lr_schedule", text_value);
  cfg.train.lr_schedule = parse_lr_schedule(text_value);
  tr.read("alpha", cfg.train.optimizer.alpha);
  tr.read("eps", cfg.train.optimizer.eps);
  tr.read("momentum", cfg.train.optimizer.momentum);
  tr.read("weight_decay", cfg.train.optimizer.weight_decay);
  path_text = "runs";
  tr.read("runs_dir", path_text);
  cfg.runs_dir = resolve(base, path_text);
  tr.read("run_prefix", cfg.run_prefix);
  tr.reject_unknown();

  Section ev(root["eval"].as_table(), "eval");
  ev.read("tau", cfg.eval.tau);
  ev.read("split", cfg.eval.split);
  ev.read("ssim_window", cfg.eval.ssim.window);
  ev.read("ssim_sigma", cfg.eval.ssim.sigma);
  ev.read("ssim_k1", cfg.eval.ssim.k1);
  ev.read("ssim_k2", cfg.eval.ssim.k2);
  ev.reject_unknown();
  if (!(cfg.eval.tau > 0.0 && cfg.eval.tau <= 1.0)) {
    throw ConfigError("eval.tau must lie in (0, 1]");
  }
  if (cfg.eval.ssim.window < 3 || cfg.eval.ssim.window % 2 == 0) {
    throw ConfigError("eval.ssim_window must be an odd size >= 3");
  }
  if (!(cfg.eval.ssim.sigma > 0.0 && cfg.eval.ssim.k1 > 0.0 && cfg.eval.ssim.k2 > 0.0)) {
    throw ConfigError("eval.ssim_sigma, ssim_k1 and ssim_k2 must be positive");
  }

  Section mx(root["matrix"].as_table(), "matrix");
  for (const auto& s : mx.read_strings("scheme")) {
    cfg.matrix.schemes.push_back(parse_scheme(s));
  }
  for (const auto& s : mx.read_strings("loss")) {
    cfg.matrix.losses.push_back(LossSpec::parse(s));
  }
  for (const auto& s : mx.read_strings("normalization")) {
    cfg.matrix.normalizations.push_back(parse_normalization(s));
  }
  mx.reject_unknown();
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("config file not found: " + path.string());
  }
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), fs::absolute(path).parent_path());
}

std::string to_toml(const ExperimentConfig& c) {
  auto seed = [](std::uint64_t s) { return static_cast<std::int64_t>(s); };
  toml::table dataset;
  if (c.dataset.clean_dir) {
    dataset.insert("clean_dir", c.dataset.clean_dir->string());
  }
  if (c.dataset.stamp_dir) {
    dataset.insert("stamp_dir", c.dataset.stamp_dir->string());
  }
  dataset.insert("procedural_count", c.dataset.procedural_count);
  dataset.insert("procedural_height", c.dataset.procedural_dims.height);
  dataset.insert("procedural_width", c.dataset.procedural_dims.width);
  dataset.insert("kind", std::string(to_string(c.dataset.kind)));
  dataset.insert("n_pairs", static_cast<std::int64_t>(c.dataset.n_pairs));
  dataset.insert("seed", seed(c.dataset.seed));
  dataset.insert("out", c.dataset.out.string());
  dataset.insert("train_fraction", c.dataset.fractions.train);
  dataset.insert("val_fraction", c.dataset.fractions.val);
  dataset.insert("test_fraction", c.dataset.fractions.test);

  toml::table model;
  model.insert("architecture", c.model.architecture);
  model.insert("depth", c.model.depth);
  model.insert("base_channels", c.model.base_channels);
  model.insert("channel_multiplier", c.model.channel_multiplier);
  model.insert("in_channels", c.model.in_channels);
  model.insert("out_channels", c.model.out_channels);
  model.insert("leaky_slope", c.model.leaky_slope);

  toml::table train;
  train.insert("scheme", std::string(to_string(c.train.scheme)));
  train.insert("loss", c.train.loss.name());
  train.insert("normalization", std::string(to_string(c.train.normalization)));
  train.insert("batch_size", c.train.batch_size);
  train.insert("epochs", c.train.epochs);
  train.insert("seed", seed(c.train.seed));
  train.insert("split", c.train.split);
  train.insert("learning_rate", c.train.optimizer.learning_rate);
  train.insert("lr_schedule", std::string(to_string(c.train.lr_schedule)));
  train.insert("alpha", c.train.optimizer.alpha);
  train.insert("eps", c.train.optimizer.eps);
  train.insert("momentum", c.train.optimizer.momentum);
  train.insert("weight_decay", c.train.optimizer.weight_decay);
  train.insert("runs_dir", c.runs_dir.string());
  train.insert("run_prefix", c.run_prefix);

  toml::table eval;
  eval.insert("tau", c.eval.tau);
  eval.insert("split", c.eval.split);
  eval.insert("ssim_window", c.eval.ssim.window);
  eval.insert("ssim_sigma", c.eval.ssim.sigma);
  eval.insert("ssim_k1", c.eval.ssim.k1);
  eval.insert("ssim_k2", c.eval.ssim.k2);

  toml::table matrix;
  toml::array schemes, losses, norms;
  for (Scheme s : c.matrix.schemes) {
    schemes.push_back(std::string(to_string(s)));
  }
  for (const auto& l : c.matrix.losses) {
    losses.push_back(l.name());
  }
  for (auto n : c.matrix.normalizations) {
    norms.push_back(std::string(to_string(n)));
  }
  matrix.insert("scheme", schemes);
  matrix.insert("loss", losses);
  matrix.insert("normalization", norms);

  toml::table root;
  root.insert("dataset", dataset);
  root.insert("model", model);
  root.insert("train", train);
  root.insert("eval", eval);
  root.insert("matrix", matrix);
  std::ostringstream out;
  out << root << '\n';
  return out.str();
}

std::string make_run_id(const std::string& prefix, const TrainConfig& train) {
  std::string id = std::string(to_string(train.scheme)) + "-" + sanitize(train.loss.name()) + "-" +
                   std::string(to_string(train.normalization));
  return prefix.empty() ? id : prefix + "-" + id;
}

std::vector<RunCell> expand_matrix(const ExperimentConfig& config) {
  const auto& m = config.matrix;
  const std::vector<Scheme> schemes =
      m.schemes.empty() ? std::vector<Scheme>{config.train.scheme} : m.schemes;
  const std::vector<LossSpec> losses =
      m.losses.empty() ? std::vector<LossSpec>{config.train.loss} : m.losses;
  const std::vector<NormalizationMode> norms =
      m.normalizations.empty() ? std::vector<NormalizationMode>{config.train.normalization}
                               : m.normalizations;
  std::vector<RunCell> cells;
  std::set<std::string> ids;
  for (Scheme s : schemes) {
    for (const auto& l : losses) {
      for (auto n : norms) {
        TrainConfig t = config.train;
        t.scheme = s;
        t.loss = l;
        t.normalization = n;
        std::string id = make_run_id(config.run_prefix, t);
        if (!ids.insert(id).second) {
          throw ConfigError("matrix produces duplicate run id '" + id + "'");
        }
        cells.push_back({std::move(id), std::move(t)});
      }
    }
  }
  return cells;
}

std::optional<std::uint64_t> seed_from_env() {
  const char* raw = std::getenv("ANNOCLEAN_SEED");
  if (raw == nullptr || *raw == '\0') {
    return std::nullopt;
  }
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(raw, &end, 10);
  if (errno != 0 || *end != '\0' || raw[0] == '-' ||
      v > static_cast<unsigned long long>(kMaxSeed)) {
    throw ConfigError(std::string("ANNOCLEAN_SEED='") + raw +
                      "' is not an integer in [0, 2^63)");
  }
  return static_cast<std::uint64_t>(v);
}

}  // namespace annoclean
