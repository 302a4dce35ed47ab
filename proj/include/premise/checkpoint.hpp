#pragma once

#include <filesystem>
#include <string>

#include "premise/model.hpp"

namespace premise {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string config_text;  // RunConfig::emit() of the run that produced it
  Model model;
};

// Little-endian binary: magic, version, config text, then one record per
// parameter matrix (name, rows, cols, row-major doubles).
void save_checkpoint(const std::filesystem::path& path, const Model& model, const std::string& config_text);

// Rebuilds a Model from `config` and fills it from the file. Names and shapes
// must match exactly.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& config);
// Reads only the embedded config text.
std::string read_checkpoint_config(const std::filesystem::path& path);

}  // namespace premise
