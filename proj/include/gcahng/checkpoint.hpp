#pragma once

// Checkpoint directory: manifest.json plus one binary blob per parameter
// group. Blob layout (little-endian): "GCAP", u32 version, u32 tensor count,
// then per tensor u32 name length, name bytes, u32 rows, u32 cols and
// rows*cols float32 values in row-major order.

#include "gcahng/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace gcahng {

inline constexpr int kCheckpointVersion = 1;

struct TensorRecord {
  std::string name;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<float> values;  // row-major
};

struct Checkpoint {
  int version = kCheckpointVersion;
  nlohmann::ordered_json config;  // resolved TrainConfig
  std::string config_hash;
  int epoch = 0;
  Index input_dim = 0;
  int num_classes = 0;
  nlohmann::ordered_json metric_history = nlohmann::ordered_json::array();
  std::map<std::string, std::vector<TensorRecord>> groups;
};

/// 16 hex digits of FNV-1a over the canonical JSON dump.
std::string config_hash(const nlohmann::ordered_json& j);

/// Parameters rounded to float32 exactly as they would be saved.
Checkpoint snapshot(const Model& model, const TrainConfig& cfg, int epoch);

/// Copies checkpoint tensors into `model`. Throws CheckpointError when the
/// parameter groups or tensor shapes differ.
void load_parameters(Model& model, const Checkpoint& ckpt);

/// Builds a model from the embedded config and loads its parameters.
Model model_from_checkpoint(const Checkpoint& ckpt);
TrainConfig config_from_checkpoint(const Checkpoint& ckpt);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace gcahng
