#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "densedyn/dataset.hpp"
#include "densedyn/dynamics.hpp"
#include "densedyn/model.hpp"

namespace densedyn::cli {

struct YaleSource {
  std::filesystem::path root;
  std::optional<std::filesystem::path> crops;
  /// Label order. Empty means the first `classes` subdirectories of root in sorted order.
  std::vector<std::string> identities;
  std::size_t classes = 5;
  std::size_t image_size = 128;
};

struct AnalysisConfig {
  int k_max = 3;
  double theta = 0.5;
  int window = 3;
  std::size_t n_components = 5;
  AxisAlignment alignment = AxisAlignment::kSignOnly;
};

struct RunConfig {
  std::optional<SynthSpec> synth;
  std::optional<YaleSource> yale;
  SplitOptions splits;
  DscConfig model;  // num_classes and image_size follow the dataset
  AnalysisConfig analysis;
  std::filesystem::path output;
  std::uint64_t seed = 7;
};

/// Invalid configuration. `what()` reads "<source>:<line>: <message>".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, std::size_t line, const std::string& message);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Parses and validates. Relative paths resolve against `base_dir`.
RunConfig parse_run_config(std::string_view text, const std::string& source_name,
                           const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical TOML with absolute paths; parses back to the same config.
std::string to_toml(const RunConfig& config);

/// Flattened `section.key` settings for the trace manifest, plus the canonical TOML under "run_config".
std::vector<std::pair<std::string, std::string>> config_echo(const RunConfig& config);

std::string to_string(AxisAlignment alignment);

/// Builds the configured dataset with splits; the model's class count and image size follow it.
DenseDataset load_dataset(const RunConfig& config);

/// Model settings completed from a dataset.
DscConfig model_config(const RunConfig& config, const DenseDataset& dataset);

/// Shortest decimal text that parses back to the same double.
std::string format_number(double v);

}  // namespace densedyn::cli
