#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "inet/model.hpp"
#include "inet/synthetic.hpp"
#include "inet/training.hpp"

namespace inet {

/// Everything a run needs. Loaded from a flat `key = value` file; see
/// `config_keys()` for the accepted names.
struct ExperimentConfig {
  std::filesystem::path dataset_dir = "data";
  std::filesystem::path output_dir = "runs";
  ModelConfig model;
  TrainConfig train;
  std::size_t stride = 3;
  std::size_t levels = 4;
  ShapeCycleSpec synthetic;  // image size follows the encoder input
  std::size_t threads = 0;   // 0 keeps the OpenMP default
  bool save_checkpoints = true;
  bool save_meshes = true;

  /// Throws ConfigError on the first invalid value.
  void validate() const;
  /// Synthetic spec with the image size taken from the encoder.
  ShapeCycleSpec cycle_spec() const;
};

/// Sets one key; throws ConfigError naming the key for unknown keys or
/// unparsable values.
void apply_setting(ExperimentConfig& config, std::string_view key, std::string_view value);

/// Lines of `key = value`; '#' starts a comment. Errors carry the line number.
/// The result is validated.
ExperimentConfig parse_config(std::string_view text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical text form; parse_config(format_config(c)) reproduces c.
std::string format_config(const ExperimentConfig& config);

std::vector<std::string> config_keys();

}  // namespace inet
