#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include <json.hpp>

#include "dart/model.hpp"
#include "dart/trainer.hpp"

namespace dart {

/// Raw contents of a checkpoint file: a JSON header and named arrays.
struct CheckpointData {
  nlohmann::json header;
  std::map<std::string, Matrix> arrays;
};

/// Layout: "DARTCKPT", u32 version, u64 header length, header JSON, u64
/// array count, then per array: u32 name length, name, u64 rows, u64 cols,
/// rows·cols little-endian f64 in row-major order.
void write_checkpoint_file(const std::filesystem::path& path, const CheckpointData& data);
CheckpointData read_checkpoint_file(const std::filesystem::path& path);

/// Serializes config, vocabulary, graph, parameters, and (optionally) the
/// training state with optimizer moments.
void save_checkpoint(const std::filesystem::path& path, const DartModel& model, const Trainer* trainer = nullptr);

struct LoadedRun {
  std::unique_ptr<DartModel> model;
  nlohmann::json header;
};

/// Rebuilds the model and restores its parameters.
LoadedRun load_model(const std::filesystem::path& path);

/// Restores step, RNG, batch order and optimizer moments into `trainer`.
void restore_trainer(const std::filesystem::path& path, Trainer& trainer);

}  // namespace dart
