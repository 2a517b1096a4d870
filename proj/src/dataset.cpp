#include "nlcnn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "nlcnn/error.hpp"
#include "nlcnn/numerics.hpp"
#include "nlcnn/rng.hpp"
#include "nlcnn/text.hpp"

namespace nlcnn {

std::string run_filename(int fault_id, Split split) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "d%02d%s.dat", fault_id, split == Split::Test ? "_te" : "");
  return buf;
}

RawRun parse_run(std::istream& in, int fault_id, Split split, const std::string& source) {
  if (fault_id < 0 || fault_id > kTepMaxFault)
    throw FormatError(source + ": fault id " + std::to_string(fault_id) + " outside [0, 21]");

  std::vector<double> values;
  std::size_t rows = 0, cols = 0, line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = split_whitespace(line);
    if (tokens.empty()) continue;
    if (rows == 0) cols = tokens.size();
    if (tokens.size() != cols)
      throw FormatError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(cols) +
                        " columns, found " + std::to_string(tokens.size()));
    for (std::string_view tok : tokens) {
      const auto v = parse_double(tok);
      if (!v || !std::isfinite(*v))
        throw FormatError(source + ":" + std::to_string(line_no) + ": not a number: '" +
                          std::string(tok) + "'");
      values.push_back(*v);
    }
    ++rows;
  }
  if (rows == 0) throw FormatError(source + ": no data");

  Tensor matrix({rows, cols}, std::move(values));
  if (cols != kTepVariables) {
    if (rows == kTepVariables && cols > kTepVariables) {
      matrix = transpose(matrix);
    } else {
      throw FormatError(source + ": expected " + std::to_string(kTepVariables) +
                        " variables per sample, got a " + std::to_string(rows) + "x" +
                        std::to_string(cols) + " matrix");
    }
  }

  const std::size_t samples = matrix.rows();
  std::size_t expected = 0;
  if (split == Split::Test)
    expected = kTepTestRows;
  else if (fault_id != 0)
    expected = kTepFaultyTrainRows;
  if (expected != 0 && samples != expected)
    throw FormatError(source + ": " + (split == Split::Test ? "test" : "faulty train") +
                      " run must have " + std::to_string(expected) + " samples, found " +
                      std::to_string(samples));
  return RawRun{std::move(matrix), fault_id, split};
}

RawRun load_run(const std::filesystem::path& path, int fault_id, Split split) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return parse_run(in, fault_id, split, path.string());
}

void write_run(const std::filesystem::path& path, const Tensor& matrix) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    for (std::size_t j = 0; j < matrix.cols(); ++j) {
      if (j > 0) out << ' ';
      out << format_double(matrix(i, j));
    }
    out << '\n';
  }
  if (!out) throw FormatError("write failed for " + path.string());
}

NormStats fit_normalize(std::span<const RawRun> train_runs) {
  if (train_runs.empty()) throw Error("fit_normalize needs at least one training run");
  const std::size_t cols = train_runs.front().matrix.cols();
  Tensor sum({cols}), sq({cols});
  std::size_t n = 0;
  for (const RawRun& run : train_runs) {
    if (run.split != Split::Train) throw Error("fit_normalize only accepts training runs");
    if (run.matrix.cols() != cols) throw ShapeError("fit_normalize: column counts differ");
    for (std::size_t i = 0; i < run.matrix.rows(); ++i)
      for (std::size_t j = 0; j < cols; ++j) sum[j] += run.matrix(i, j);
    n += run.matrix.rows();
  }
  if (n < 2) throw Error("fit_normalize needs at least two rows");
  NormStats stats{Tensor({cols}), Tensor({cols})};
  for (std::size_t j = 0; j < cols; ++j) stats.mean[j] = sum[j] / static_cast<double>(n);
  // Two-pass variance.
  for (const RawRun& run : train_runs)
    for (std::size_t i = 0; i < run.matrix.rows(); ++i)
      for (std::size_t j = 0; j < cols; ++j) {
        const double d = run.matrix(i, j) - stats.mean[j];
        sq[j] += d * d;
      }
  for (std::size_t j = 0; j < cols; ++j) {
    stats.std[j] = std::sqrt(sq[j] / static_cast<double>(n));
    if (!(stats.std[j] > 0.0))
      throw Error("fit_normalize: column " + std::to_string(j) + " has zero variance");
  }
  return stats;
}

RawRun apply_normalize(const RawRun& run, const NormStats& stats) {
  if (run.matrix.cols() != stats.mean.size())
    throw ShapeError("apply_normalize: run has " + std::to_string(run.matrix.cols()) +
                     " columns, stats have " + std::to_string(stats.mean.size()));
  RawRun out = run;
  for (std::size_t i = 0; i < out.matrix.rows(); ++i)
    for (std::size_t j = 0; j < out.matrix.cols(); ++j)
      out.matrix(i, j) = (run.matrix(i, j) - stats.mean[j]) / stats.std[j];
  return out;
}

void WindowedDataset::append(const WindowedDataset& other) {
  if (windows.empty() && win_len == 0) {
    win_len = other.win_len;
    stride = other.stride;
    channels = other.channels;
  } else if (other.win_len != win_len || other.channels != channels) {
    throw ShapeError("cannot merge datasets with different window geometry");
  }
  windows.insert(windows.end(), other.windows.begin(), other.windows.end());
  dropped += other.dropped;
}

int WindowedDataset::class_count() const {
  int max_label = -1;
  for (const auto& w : windows) max_label = std::max(max_label, w.label);
  return max_label + 1;
}

WindowedDataset make_windows(const RawRun& run, std::size_t win_len, std::size_t stride) {
  const std::size_t rows = run.matrix.rows(), cols = run.matrix.cols();
  if (win_len == 0 || win_len > rows)
    throw ShapeError("window length " + std::to_string(win_len) + " does not fit a run of " +
                     std::to_string(rows) + " samples");
  if (stride == 0) throw ShapeError("window stride must be at least 1");

  WindowedDataset ds;
  ds.win_len = win_len;
  ds.stride = stride;
  ds.channels = cols;
  const bool onset_rule = run.split == Split::Test && run.fault_id != 0;
  for (std::size_t start = 0; start + win_len <= rows; start += stride) {
    int label = run.fault_id;
    if (onset_rule) {
      if (start >= kTepFaultOnset) {
        label = run.fault_id;
      } else if (start + win_len - 1 < kTepFaultOnset) {
        label = 0;
      } else {
        ++ds.dropped;
        continue;
      }
    }
    Tensor x({win_len, cols});
    for (std::size_t t = 0; t < win_len; ++t)
      for (std::size_t c = 0; c < cols; ++c) x(t, c) = run.matrix(start + t, c);
    ds.windows.push_back({std::move(x), label});
  }
  return ds;
}

void write_windows_csv(std::ostream& out, const WindowedDataset& data) {
  out << "label";
  const std::size_t n = data.win_len * data.channels;
  for (std::size_t i = 0; i < n; ++i) out << ",v" << i;
  out << '\n';
  for (const LabeledWindow& w : data.windows) {
    out << w.label;
    for (double v : w.x.values()) out << ',' << format_double(v);
    out << '\n';
  }
}

void write_windows_csv(const std::filesystem::path& path, const WindowedDataset& data) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  write_windows_csv(out, data);
  if (!out) throw FormatError("write failed for " + path.string());
}

WindowedDataset read_windows_csv(std::istream& in, std::size_t win_len, std::size_t channels) {
  WindowedDataset ds;
  ds.win_len = win_len;
  ds.channels = channels;
  const std::size_t n = win_len * channels;
  std::string line;
  if (!std::getline(in, line)) throw FormatError("window CSV is empty");
  if (split_char(line, ',').size() != n + 1)
    throw FormatError("window CSV header does not match " + std::to_string(win_len) + "x" +
                      std::to_string(channels) + " windows");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_char(line, ',');
    if (fields.size() != n + 1)
      throw FormatError("window CSV line " + std::to_string(line_no) + ": expected " +
                        std::to_string(n + 1) + " fields");
    const auto label = parse_double(fields[0]);
    if (!label || *label < 0 || *label != std::floor(*label))
      throw FormatError("window CSV line " + std::to_string(line_no) + ": bad label");
    std::vector<double> vals(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto v = parse_double(fields[i + 1]);
      if (!v) throw FormatError("window CSV line " + std::to_string(line_no) + ": bad value");
      vals[i] = *v;
    }
    ds.windows.push_back({Tensor({win_len, channels}, std::move(vals)), static_cast<int>(*label)});
  }
  return ds;
}

double synthetic_feature(const Tensor& x, double exponent) {
  double acc = 0.0;
  for (double v : x.values()) acc += signed_pow(v, exponent);
  return acc;
}

SyntheticTask gen_synthetic(const SyntheticParams& p) {
  if (p.n_classes != 2) throw Error("gen_synthetic supports exactly 2 classes");
  if (p.win_len == 0 || p.channels == 0) throw Error("gen_synthetic needs a non-empty window");
  if (!(p.noise >= 0.0)) throw Error("gen_synthetic noise must be non-negative");
  if (!(p.margin >= 0.0)) throw Error("gen_synthetic margin must be non-negative");
  if (!(p.min_magnitude > 0.0 && p.min_magnitude <= p.max_magnitude))
    throw Error("gen_synthetic needs 0 < min_magnitude <= max_magnitude");

  SyntheticTask task;
  task.params = p;
  task.data.win_len = p.win_len;
  task.data.stride = p.win_len;
  task.data.channels = p.channels;

  SeededRng rng(p.seed);
  const double log_lo = std::log(p.min_magnitude), log_hi = std::log(p.max_magnitude);
  for (std::size_t k = 0; k < p.count; ++k) {
    const int target = static_cast<int>(k % 2);
    Tensor x({p.win_len, p.channels});
    bool accepted = false;
    for (std::size_t attempt = 0; attempt < p.max_attempts && !accepted; ++attempt) {
      for (double& v : x.values()) {
        const double mag = std::exp(rng.uniform(log_lo, log_hi));
        v = rng.bernoulli(0.5) ? mag : -mag;
      }
      const double f = synthetic_feature(x, p.exponent);
      accepted = target == 1 ? f > p.margin : f < -p.margin;
    }
    if (!accepted)
      throw Error("gen_synthetic: no window of class " + std::to_string(target) + " within " +
                  std::to_string(p.max_attempts) + " attempts; margin too large");
    if (p.noise > 0.0)
      for (double& v : x.values()) v += p.noise * rng.normal();
    task.data.windows.push_back({std::move(x), target});
  }
  return task;
}

}  // namespace nlcnn
