#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nlcnn/tensor.hpp"

namespace nlcnn {

// Tennessee Eastman Process layout.
inline constexpr std::size_t kTepVariables = 52;
inline constexpr std::size_t kTepFaultyTrainRows = 480;
inline constexpr std::size_t kTepTestRows = 960;
/// Index of the first faulty sample in a test run (8 h at 3 min sampling).
inline constexpr std::size_t kTepFaultOnset = 160;
inline constexpr int kTepMaxFault = 21;

enum class Split { Train, Test };

struct RawRun {
  Tensor matrix;  ///< samples x 52
  int fault_id = 0;
  Split split = Split::Train;
};

/// "d05.dat" for train runs, "d05_te.dat" for test runs.
std::string run_filename(int fault_id, Split split);

/// Parses a whitespace-delimited numeric matrix. A 52 x N matrix with N > 52
/// is transposed to N x 52. Row counts are checked against the split:
/// 480 for faulty train runs, 960 for test runs, anything for the normal
/// train run.
RawRun parse_run(std::istream& in, int fault_id, Split split, const std::string& source = "<stream>");
RawRun load_run(const std::filesystem::path& path, int fault_id, Split split);
/// Writes the matrix one row per line with round-trip exact doubles.
void write_run(const std::filesystem::path& path, const Tensor& matrix);

struct NormStats {
  Tensor mean;
  Tensor std;  ///< population standard deviation
};

/// Per-column mean and population std over the concatenated training runs.
/// Throws on a zero-variance column or fewer than two rows.
NormStats fit_normalize(std::span<const RawRun> train_runs);
RawRun apply_normalize(const RawRun& run, const NormStats& stats);

struct LabeledWindow {
  Tensor x;  ///< win_len x channels
  int label = 0;
};

struct WindowedDataset {
  std::size_t win_len = 0;
  std::size_t stride = 0;
  std::size_t channels = 0;
  std::vector<LabeledWindow> windows;
  std::size_t dropped = 0;  ///< test windows straddling the fault onset

  std::size_t size() const { return windows.size(); }
  bool empty() const { return windows.empty(); }
  /// Appends another dataset's windows; geometry must agree.
  void append(const WindowedDataset& other);
  /// Number of classes implied by the labels (max label + 1).
  int class_count() const;
};

/// Sliding windows along time. Train runs: every window carries fault_id.
/// Faulty test runs: windows starting at or after the onset carry fault_id,
/// windows ending before it are normal (0), straddling windows are dropped.
WindowedDataset make_windows(const RawRun& run, std::size_t win_len, std::size_t stride);

/// CSV with header "label,v0,...": one window per line, values row-major.
void write_windows_csv(std::ostream& out, const WindowedDataset& data);
void write_windows_csv(const std::filesystem::path& path, const WindowedDataset& data);
WindowedDataset read_windows_csv(std::istream& in, std::size_t win_len, std::size_t channels);

struct SyntheticParams {
  std::size_t n_classes = 2;
  std::size_t win_len = 8;
  std::size_t channels = 1;
  double exponent = 2.0;  ///< ground-truth g
  double noise = 0.05;    ///< std of Gaussian noise added after labeling
  std::size_t count = 256;
  std::uint64_t seed = 0;
  double margin = 0.25;   ///< minimum |feature| for an accepted window
  double min_magnitude = 0.1;
  double max_magnitude = 2.5;
  std::size_t max_attempts = 10000;  ///< per window
};

struct SyntheticTask {
  SyntheticParams params;
  WindowedDataset data;
};

/// sum over the window of signed_pow(x, g).
double synthetic_feature(const Tensor& x, double exponent);

/// Two-class windows whose clean values satisfy feature < -margin (class 0)
/// or feature > margin (class 1); classes alternate. Values have a random
/// sign and a log-uniform magnitude. Gaussian noise is added afterwards.
SyntheticTask gen_synthetic(const SyntheticParams& params);

}  // namespace nlcnn
