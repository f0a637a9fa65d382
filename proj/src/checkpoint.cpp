#include "annoclean/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "annoclean/error.hpp"

namespace annoclean {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint arrays are little-endian");

namespace {

constexpr char kMagic[8] = {'A', 'N', 'N', 'O', 'C', 'K', 'P', 'T'};
constexpr const char* kFormat = "annoclean-checkpoint/1";

struct Entry {
  std::string section;
  std::string name;
  std::vector<int> shape;
  const std::vector<float>* data;
};

std::size_t element_count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

}  // namespace

void save_checkpoint(const TrainedModel& model, const fs::path& path,
                     const OptimizerState* optimizer, const ResumeState* resume) {
  std::vector<Entry> entries;
  for (const Parameter* p : std::as_const(*model.network).parameters()) {
    entries.push_back({"param", p->name, p->shape, &p->value});
  }
  if (optimizer) {
    for (const auto& [name, v] : optimizer->square_avg) {
      entries.push_back({"square_avg", name, {static_cast<int>(v.size())}, &v});
    }
    for (const auto& [name, v] : optimizer->momentum_buffer) {
      entries.push_back({"momentum", name, {static_cast<int>(v.size())}, &v});
    }
  }

  json directory = json::array();
  for (const auto& e : entries) {
    directory.push_back({{"section", e.section}, {"name", e.name}, {"shape", e.shape}});
  }
  json header{{"format", kFormat},
              {"spec", to_json(model.spec)},
              {"training_meta", to_json(model.meta)},
              {"tensors", directory}};
  if (optimizer) {
    header["optimizer"] = {{"steps", optimizer->steps}};
  }
  if (resume) {
    header["resume"] = {{"epochs_completed", resume->epochs_completed},
                        {"global_step", resume->global_step},
                        {"curve", resume->curve}};
  }
  const std::string text = header.dump();

  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) {
      throw Error("cannot write checkpoint: " + path.string());
    }
    out.write(kMagic, sizeof(kMagic));
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& e : entries) {
      out.write(reinterpret_cast<const char*>(e.data->data()),
                static_cast<std::streamsize>(e.data->size() * sizeof(float)));
    }
    if (!out) {
      throw Error("short write on checkpoint: " + path.string());
    }
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path, const ArchitectureRegistry& registry) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("checkpoint not found: " + path.string());
  }
  char magic[sizeof(kMagic)] = {};
  std::uint64_t len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0 || len > (1ULL << 32)) {
    throw ConfigError("corrupt checkpoint (bad magic or header): " + path.string());
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  if (header.value("format", "") != kFormat) {
    throw ConfigError("unsupported checkpoint format in " + path.string());
  }

  Checkpoint ckpt;
  ckpt.model = build_model(model_spec_from_json(header.at("spec")), 0, registry);
  ckpt.model.meta = training_meta_from_json(header.at("training_meta"));

  std::map<std::string, Parameter*> params;
  for (Parameter* p : ckpt.model.network->parameters()) {
    params[p->name] = p;
  }
  OptimizerState opt;
  std::size_t restored = 0;
  for (const auto& entry : header.at("tensors")) {
    const std::string section = entry.at("section").get<std::string>();
    const std::string name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<int>>();
    std::vector<float>* dst = nullptr;
    std::vector<float> scratch;
    if (section == "param") {
      auto it = params.find(name);
      if (it == params.end()) {
        throw ConfigError("checkpoint layer '" + name + "' does not exist in architecture '" +
                          ckpt.model.spec.architecture + "'");
      }
      if (it->second->shape != shape) {
        std::string want, got;
        for (int d : it->second->shape) want += (want.empty() ? "" : "x") + std::to_string(d);
        for (int d : shape) got += (got.empty() ? "" : "x") + std::to_string(d);
        throw ConfigError("checkpoint layer '" + name + "' has shape " + got +
                          " but the model spec expects " + want);
      }
      dst = &it->second->value;
      ++restored;
    } else if (section == "square_avg") {
      dst = &opt.square_avg[name];
      dst->resize(element_count(shape));
    } else if (section == "momentum") {
      dst = &opt.momentum_buffer[name];
      dst->resize(element_count(shape));
    } else {
      throw ConfigError("corrupt checkpoint: unknown section '" + section + "'");
    }
    in.read(reinterpret_cast<char*>(dst->data()),
            static_cast<std::streamsize>(dst->size() * sizeof(float)));
    if (!in) {
      throw ConfigError("corrupt checkpoint (truncated at '" + name + "'): " + path.string());
    }
  }
  if (restored != params.size()) {
    throw ConfigError("checkpoint " + path.string() + " is missing " +
                      std::to_string(params.size() - restored) + " parameter arrays");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ConfigError("corrupt checkpoint (trailing bytes): " + path.string());
  }
  if (header.contains("optimizer")) {
    opt.steps = header["optimizer"].value("steps", std::int64_t{0});
    ckpt.optimizer = std::move(opt);
  }
  if (header.contains("resume")) {
    const json& r = header["resume"];
    ckpt.resume = ResumeState{r.at("epochs_completed").get<int>(),
                              r.at("global_step").get<std::int64_t>(),
                              r.at("curve").get<std::vector<double>>()};
  }
  return ckpt;
}

}  // namespace annoclean
