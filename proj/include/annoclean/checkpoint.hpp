#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "annoclean/model.hpp"
#include "annoclean/optimizer.hpp"

namespace annoclean {

/// Where an interrupted run picks up.
struct ResumeState {
  int epochs_completed = 0;
  std::int64_t global_step = 0;
  std::vector<double> curve;  // loss per step so far
};

struct Checkpoint {
  TrainedModel model;
  std::optional<OptimizerState> optimizer;
  std::optional<ResumeState> resume;
};

// Archive layout: 8-byte magic "ANNOCKPT", little-endian u64 header length, JSON header
// (model spec, training meta, tensor directory, resume info), then the float32 arrays in
// directory order.

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path,
                     const OptimizerState* optimizer = nullptr, const ResumeState* resume = nullptr);

/// Rebuilds the architecture from the registry and restores every array bit-exactly.
/// Shape disagreements between the header spec and stored arrays name the offending layer.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const ArchitectureRegistry& registry = default_registry());

}  // namespace annoclean
