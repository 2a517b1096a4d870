#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nlcnn/augment.hpp"
#include "nlcnn/constraints.hpp"
#include "nlcnn/dataset.hpp"
#include "nlcnn/error.hpp"
#include "nlcnn/training.hpp"

namespace nlcnn {

/// Invalid or unreadable run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class DataSource { Synthetic, Tep };

struct SyntheticDataConfig {
  std::size_t channels = 1;
  double exponent = 2.0;
  double noise = 0.05;
  std::size_t train_count = 256;
  std::size_t test_count = 256;
  double margin = 0.25;
  double min_magnitude = 0.1;
  double max_magnitude = 2.5;
};

struct TepDataConfig {
  std::string path;
  /// Fault ids to load; class index = position in this list, and the list
  /// must start with 0 (normal operation).
  std::vector<int> faults = {0, 1};
};

struct DataConfig {
  DataSource source = DataSource::Synthetic;
  std::size_t win_len = 40;
  std::size_t stride = 10;
  SyntheticDataConfig synthetic;
  TepDataConfig tep;
};

/// Parsed run configuration with every default made explicit.
struct RunConfig {
  std::uint64_t seed = 0;
  DataConfig data;
  std::vector<LayerSpec> layers = {LayerSpec{}};
  ConstraintPolicy constraints;
  TrainConfig train;  ///< train.seed and train.augment are filled from the top level
  std::string output_dir = "nlcnn_out";

  /// Whole-config checks (layer geometry, policy vs variants, hyperparameters).
  void validate() const;
};

/// Parses JSON text. Unknown keys, wrong types, and out-of-range values raise
/// ConfigError naming the field path (e.g. "model.layers[0].k_h").
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Pretty-printed JSON of the effective configuration; parse_run_config of
/// this text yields an identical configuration.
std::string dump_run_config(const RunConfig& config);

/// Train and test windows for a run, labels mapped to class indices.
struct DataSplits {
  WindowedDataset train;
  WindowedDataset test;
  std::size_t classes = 2;
};

/// Generates (synthetic) or loads, normalizes, and windows (TEP) the data.
DataSplits load_data(const RunConfig& config);

}  // namespace nlcnn
