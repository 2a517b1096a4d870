// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "nlcnn/augment.hpp"
#include "nlcnn/commands.hpp"
#include "nlcnn/constraints.hpp"
#include "nlcnn/dataset.hpp"
#include "nlcnn/gradients.hpp"
#include "nlcnn/nlconv.hpp"
#include "nlcnn/training.hpp"

using namespace nlcnn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && out_.pass) {
      out_.pass = false;
      out_.detail = what;
    }
  }
  void note(const std::string& s) {
    if (out_.pass) out_.detail = s;
  }
  Outcome outcome() const { return out_; }

 private:
  Outcome out_;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

Tensor uniform_tensor(const Shape& shape, double lo, double hi, SeededRng& rng) {
  Tensor t(shape);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

Tensor signed_log_uniform(const Shape& shape, double lo, double hi, SeededRng& rng) {
  Tensor t(shape);
  for (double& v : t.values()) {
    const double mag = std::exp(rng.uniform(std::log(lo), std::log(hi)));
    v = rng.bernoulli(0.5) ? mag : -mag;
  }
  return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

const std::vector<KernelShape> kKernels{{1, 1}, {2, 2}, {3, 2}, {3, 3}};

Outcome reduction_identity() {
  Checker c;
  SeededRng rng(101);
  const ConstraintPolicy policy;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const KernelShape k = kKernels[trial % kKernels.size()];
    LayerParams standard{k, {1, 1}, Activation::Relu, {}};
    for (int m = 0; m < 2; ++m)
      standard.channels.push_back({uniform_tensor({k.height, k.width}, -1, 1, rng), rng.uniform(-0.5, 0.5), StandardEwm{}});
    const Tensor in = signed_log_uniform({k.height + 4, k.width + 3}, 1e-3, 10, rng);
    const Tensor ref = layer_forward(in, standard).values;
    for (VariantKind kind : all_variants()) {
      LayerParams layer = standard;
      for (ChannelParams& ch : layer.channels) ch.ewm = init_exponents(kind, k, policy).effective;
      const double d = max_abs_diff(layer_forward(in, layer).values, ref);
      worst = std::max(worst, d);
      c.expect(d <= 1e-12, std::string(variant_name(kind)) + fmt(" differs by %.3g", d));
    }
  }
  c.note(fmt("max |diff| %.3g over 100 inputs x 5 variants", worst));
  return c.outcome();
}

Outcome formula_equivalence() {
  Checker c;
  SeededRng rng(202);
  double worst_explog = 0.0, worst_full = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const KernelShape k = kKernels[trial % kKernels.size()];
    const Shape s{k.height, k.width};
    const Tensor x = uniform_tensor(s, 0.05, 5, rng);
    const Tensor w1 = uniform_tensor(s, -1, 1, rng);
    const Tensor w2 = uniform_tensor(s, -2, 4, rng);
    const double b = rng.uniform(-1, 1);
    const double d = std::abs(unit_elementwise(x, w1, b, w2) - unit_elementwise_explog(x, w1, b, w2));
    worst_explog = std::max(worst_explog, d);
    c.expect(d <= 1e-12, fmt("power-sum vs exp-log differ by %.3g", d));

    const Tensor xs = signed_log_uniform(s, 0.05, 5, rng);
    const RowSharedEwm row{uniform_tensor({k.height}, -2, 4, rng)};
    const ColSharedEwm col{uniform_tensor({k.width}, -2, 4, rng)};
    c.expect(unit_row_shared(xs, w1, b, row.w_row) == unit_elementwise(xs, w1, b, expand_shared(row, k)),
             "row-shared differs from expanded elementwise");
    c.expect(unit_col_shared(xs, w1, b, col.w_col) == unit_elementwise(xs, w1, b, expand_shared(col, k)),
             "col-shared differs from expanded elementwise");
  }
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor x = signed_log_uniform({3, 3}, 0.05, 5, rng);
    const Tensor w1 = uniform_tensor({3, 3}, -1, 1, rng);
    const Tensor w3 = uniform_tensor({3, 3}, -0.7, 1.2, rng), w4 = uniform_tensor({3, 3}, -0.7, 1.2, rng);
    const double b = rng.uniform(-1, 1);
    const double bil = unit_bilinear(x, w1, b, w3, w4);
    const double full = unit_full(vec(x), vec(w1), b, kron(transpose(w4), w3));
    const double d = std::abs(bil - full) / std::max(1.0, std::abs(bil));
    worst_full = std::max(worst_full, d);
    c.expect(d <= 1e-10, fmt("bilinear vs full differ by %.3g", d));
  }
  c.note(fmt("exp-log %.3g, shared exact, bilinear/full %.3g", worst_explog, worst_full));
  return c.outcome();
}

Outcome gradient_correctness() {
  Checker c;
  const auto cases = grad_check_suite(all_variants(), {{1, 1}, {2, 2}, {3, 2}}, 50, 303, 1e-6, 1e-5);
  std::map<std::string, double> worst;
  std::size_t failed = 0;
  for (const auto& k : cases) {
    for (const auto& g : k.report.groups) {
      double& w = worst[std::string(variant_name(k.kind)) + "/" + g.group];
      w = std::max(w, g.max_rel_error);
    }
    if (!k.report.pass()) ++failed;
  }
  double overall = 0.0;
  std::string where;
  for (const auto& [key, w] : worst)
    if (w >= overall) {
      overall = w;
      where = key;
    }
  c.expect(failed == 0, std::to_string(failed) + " of " + std::to_string(cases.size()) + " instances fail");
  c.note(std::to_string(cases.size()) + " instances, worst rel error " + fmt("%.3g", overall) + " (" + where + ")");
  return c.outcome();
}

Outcome constraint_enforcement() {
  Checker c;
  std::size_t at_bound = 0, total = 0;
  const std::vector<std::pair<ConstraintMode, ReparamKind>> modes{
      {ConstraintMode::ClipParams, ReparamKind::ScaledSigmoid},
      {ConstraintMode::ProjectAfterStep, ReparamKind::ScaledSigmoid},
      {ConstraintMode::Reparam, ReparamKind::ScaledSigmoid},
      {ConstraintMode::Reparam, ReparamKind::ScaledTanh},
      {ConstraintMode::Reparam, ReparamKind::HardSigmoidClip}};
  for (const auto& [mode, kind] : modes) {
    ConstraintPolicy policy;
    policy.mode = mode;
    policy.kind = kind;
    SeededRng rng(404);
    LayerSpec a;
    a.kernel = {2, 2};
    a.out_channels = 2;
    a.activation = Activation::Tanh;
    LayerSpec b;
    b.variant = VariantKind::FullMatrix;
    b.kernel = {2, 2};
    b.activation = Activation::Tanh;
    Network net = build_network(6, 4, {a, b}, 3, policy, rng);
    Optimizer opt(OptimizerKind::Adam, 0.1);
    std::vector<double> flat = pack_params(net);
    double worst = 0.0;
    for (int step = 0; step < 1000; ++step) {
      // Random objective: cross-entropy against a random label on a random window.
      const Tensor x = signed_log_uniform({6, 4}, 0.01, 20, rng);
      NetworkGrad g = zero_grad(net);
      sample_loss(net, x, static_cast<int>(rng.below(3)), &g);
      opt.step(flat, pack_grads(net, g));
      unpack_params(net, flat);
      enforce_constraints(net);
      flat = pack_params(net);
      worst = std::max(worst, max_bound_violation(net));
    }
    for (double e : effective_exponents(net)) {
      ++total;
      if (e <= policy.v_min + 1e-9 || e >= policy.v_max - 1e-9) ++at_bound;
      c.expect(e >= policy.v_min && e <= policy.v_max, fmt("exponent %.6g outside bounds", e));
    }
    c.expect(worst == 0.0, std::string(constraint_mode_name(mode)) + fmt(" bound violation %.3g", worst));
  }

  double max_gap = 0.0;
  std::size_t resolvable = 0;
  for (ReparamKind kind : {ReparamKind::ScaledSigmoid, ReparamKind::ScaledTanh, ReparamKind::HardSigmoidClip}) {
    ConstraintPolicy p;
    p.mode = ConstraintMode::Reparam;
    p.kind = kind;
    const std::string name(reparam_kind_name(kind));
    double prev = 0.0, prev_raw = 0.0;
    for (int i = 0; i < 10000; ++i) {
      const double w = -100.0 + 200.0 * i / 9999.0;
      const double v = reparam_forward(w, p);
      const double raw = reparam_map(w, p);
      c.expect(v >= p.v_min && v <= p.v_max, name + fmt(" value %.6g outside bounds", v));
      c.expect(reparam_grad(w, p) > 0.0, name + fmt(" derivative not positive at %.6g", w));
      if (i > 0) {
        c.expect(v >= prev, name + fmt(" decreases at %.6g", w));
        c.expect(raw >= prev_raw, name + fmt(" map decreases at %.6g", w));
        // Strict increase wherever the true step exceeds double resolution.
        const double step = reparam_grad(w, p) * (200.0 / 9999.0);
        const double ulp = std::nextafter(std::abs(raw), INFINITY) - std::abs(raw);
        if (step > 4.0 * ulp) {
          ++resolvable;
          c.expect(raw > prev_raw, name + fmt(" map not strictly increasing at %.6g", w));
        }
        max_gap = std::max(max_gap, v - prev);
      }
      prev = v;
      prev_raw = raw;
    }
    c.expect(reparam_forward(-100.0, p) - p.v_min <= 1e-6 && p.v_max - reparam_forward(100.0, p) <= 1e-6,
             name + " does not reach the interval ends");
    for (double t = p.v_min + 0.01; t < p.v_max; t += 0.01)
      c.expect(std::abs(reparam_forward(reparam_invert(t, p), p) - t) <= 1e-9, name + fmt(" misses %.6g", t));
  }
  c.note(std::to_string(at_bound) + "/" + std::to_string(total) + " exponents at a bound after 1000 steps; " +
         fmt("max sample gap %.3g, ", max_gap) +
         std::to_string(resolvable) + "/29997 steps resolvable and strictly increasing");
  return c.outcome();
}

Outcome exponent_recovery() {
  Checker c;
  constexpr int kSeeds = 20;
  std::vector<double> exponents;
  double acc_nl = 0.0, acc_std = 0.0;
  int wins = 0;
  for (int s = 0; s < kSeeds; ++s) {
    SyntheticParams p;
    p.exponent = 2.0;
    p.noise = 0.05;
    p.count = 1024;
    p.seed = 5000 + s;
    const WindowedDataset train_set = gen_synthetic(p).data;
    p.count = 512;
    p.seed = 9000 + s;
    const WindowedDataset test_set = gen_synthetic(p).data;
    double acc[2] = {0, 0};
    for (int v = 0; v < 2; ++v) {
      LayerSpec spec;
      spec.variant = v == 0 ? VariantKind::Standard : VariantKind::Elementwise;
      spec.kernel = {1, 1};
      spec.activation = Activation::Identity;
      SeededRng rng(s);
      Network net = build_network(p.win_len, p.channels, {spec}, 2, ConstraintPolicy{}, rng);
      TrainConfig cfg;
      cfg.epochs = 60;
      cfg.learning_rate = 0.01;
      cfg.seed = static_cast<std::uint64_t>(s);
      cfg.eval_every = cfg.epochs;
      train(net, train_set, cfg);
      acc[v] = evaluate(net, test_set).accuracy;
      if (v == 1) exponents.push_back(effective_exponents(net).front());
    }
    acc_std += acc[0] / kSeeds;
    acc_nl += acc[1] / kSeeds;
    wins += acc[1] >= acc[0];
  }
  std::sort(exponents.begin(), exponents.end());
  const double median = 0.5 * (exponents[kSeeds / 2 - 1] + exponents[kSeeds / 2]);
  c.expect(median >= 1.8 && median <= 2.2, fmt("median exponent %.4f", median));
  c.expect(acc_nl >= acc_std, fmt("mean accuracy %.4f below baseline %.4f", acc_nl, acc_std));
  c.note(fmt("median exponent %.4f; mean accuracy %.4f vs baseline %.4f", median, acc_nl, acc_std) + ", wins " +
         std::to_string(wins) + "/20");
  return c.outcome();
}

Outcome augmentation_suite() {
  Checker c;
  SeededRng rng(606);
  for (int trial = 0; trial < 200; ++trial) {
    const Shape s{1 + rng.below(20), 1 + rng.below(6)};
    const Tensor x = uniform_tensor(s, -5, 5, rng);
    const std::size_t block = 1 + rng.below(8);
    c.expect(flip_lr(flip_lr(x)) == x, "flip_lr is not an involution");
    c.expect(flip_bidirectional(flip_bidirectional(x)) == x, "flip_bidirectional is not an involution");
    c.expect(flip_blockwise(flip_blockwise(x, block), block) == x, "flip_blockwise is not an involution");
    std::vector<double> ref(x.values().begin(), x.values().end());
    std::sort(ref.begin(), ref.end());
    for (const Tensor& y : {flip_lr(x), flip_blockwise(x, block), flip_bidirectional(x)}) {
      std::vector<double> got(y.values().begin(), y.values().end());
      std::sort(got.begin(), got.end());
      c.expect(got == ref, "a flip changed the value multiset");
    }
  }

  constexpr std::size_t kDraws = 100000;
  const ExponentAugment spec{ExponentGranularity::PerPoint, -2.0, 4.0};
  const Tensor draws = draw_exponents({kDraws, 1}, spec, rng);
  double sum = 0.0;
  for (double e : draws.values()) {
    c.expect(e >= -2.0 && e <= 4.0, fmt("exponent %.6g outside [-2, 4]", e));
    sum += e;
  }
  const double mean = sum / kDraws;
  const double se = 6.0 / std::sqrt(12.0) / std::sqrt(static_cast<double>(kDraws));
  c.expect(std::abs(mean - 1.0) <= 3.0 * se, fmt("mean %.5f is more than 3 SE from 1", mean));

  for (int trial = 0; trial < 100; ++trial) {
    Tensor x({10, 5});
    for (std::size_t t = 0; t < 10; ++t) {
      const double mag = rng.uniform(0.2, 3.0);
      for (std::size_t ch = 0; ch < 5; ++ch) x(t, ch) = rng.bernoulli(0.5) ? mag : -mag;
    }
    const Tensor y = exp_augment(x, {ExponentGranularity::PerRow, -2.0, 4.0}, rng);
    for (std::size_t t = 0; t < 10; ++t)
      for (std::size_t ch = 1; ch < 5; ++ch)
        c.expect(std::abs(y(t, ch)) == std::abs(y(t, 0)), "per_row exponent varies within a row");
  }
  c.note(fmt("mean of 1e5 draws %.5f (3 SE = %.5f)", mean, 3.0 * se));
  return c.outcome();
}

Outcome tep_ingestion() {
  Checker c;
  const fs::path dir = fs::temp_directory_path() / "nlcnn_acceptance_tep";
  fs::remove_all(dir);
  fs::create_directories(dir);
  SeededRng rng(707);
  const auto fixture = [&](std::size_t rows) {
    Tensor m({rows, kTepVariables});
    for (std::size_t j = 0; j < kTepVariables; ++j) {
      const double shift = rng.uniform(-50, 50), scale = rng.uniform(0.1, 20);
      for (std::size_t i = 0; i < rows; ++i) m(i, j) = shift + scale * rng.normal();
    }
    return m;
  };
  write_run(dir / run_filename(0, Split::Train), fixture(500));
  write_run(dir / run_filename(1, Split::Train), fixture(480));
  write_run(dir / run_filename(1, Split::Test), fixture(960));
  const Tensor upright = fixture(960);
  Tensor sideways({kTepVariables, 960});
  for (std::size_t i = 0; i < 960; ++i)
    for (std::size_t j = 0; j < kTepVariables; ++j) sideways(j, i) = upright(i, j);
  write_run(dir / run_filename(2, Split::Test), sideways);
  write_run(dir / run_filename(3, Split::Train), fixture(479));

  std::vector<RawRun> train_runs{load_run(dir / "d00.dat", 0, Split::Train), load_run(dir / "d01.dat", 1, Split::Train)};
  const RawRun test1 = load_run(dir / "d01_te.dat", 1, Split::Test);
  const RawRun test2 = load_run(dir / "d02_te.dat", 2, Split::Test);
  c.expect(train_runs[1].matrix.shape() == Shape{480, 52}, "faulty train run is not 480x52");
  c.expect(test1.matrix.shape() == Shape{960, 52}, "test run is not 960x52");
  c.expect(test2.matrix == upright, "52x960 file was not transposed to 960x52");
  bool rejected = false;
  try {
    load_run(dir / "d03.dat", 3, Split::Train);
  } catch (const FormatError&) {
    rejected = true;
  }
  c.expect(rejected, "479-row faulty train run was accepted");

  for (const auto& [win, stride] : std::vector<std::pair<std::size_t, std::size_t>>{{20, 20}, {40, 10}, {30, 7}}) {
    const WindowedDataset ds = make_windows(test1, win, stride);
    std::size_t normal = 0, faulty = 0, dropped = 0;
    for (std::size_t start = 0; start + win <= 960; start += stride) {
      if (start + win <= kTepFaultOnset) ++normal;
      else if (start >= kTepFaultOnset) ++faulty;
      else ++dropped;
    }
    std::size_t got_normal = 0, got_faulty = 0;
    for (const auto& w : ds.windows) (w.label == 0 ? got_normal : got_faulty)++;
    c.expect(got_normal == normal && got_faulty == faulty && ds.dropped == dropped,
             "window counts disagree with the onset rule for win_len " + std::to_string(win));
  }
  const WindowedDataset ds20 = make_windows(test1, 20, 20);
  std::size_t n20 = 0;
  for (const auto& w : ds20.windows) n20 += w.label == 0;
  c.expect(n20 == 8 && ds20.size() == 48, "win_len 20 stride 20 does not give 8 normal + 40 faulty");
  c.expect(make_windows(train_runs[1], 40, 40).size() == 12, "faulty train run does not give 12 windows");

  const NormStats stats = fit_normalize(train_runs);
  double worst_mean = 0.0, worst_std = 0.0;
  for (std::size_t j = 0; j < kTepVariables; ++j) {
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (const RawRun& r : train_runs) {
      const RawRun z = apply_normalize(r, stats);
      for (std::size_t i = 0; i < z.matrix.rows(); ++i, ++n) {
        sum += z.matrix(i, j);
        sq += z.matrix(i, j) * z.matrix(i, j);
      }
    }
    const double mean = sum / static_cast<double>(n);
    worst_mean = std::max(worst_mean, std::abs(mean));
    worst_std = std::max(worst_std, std::abs(std::sqrt(sq / static_cast<double>(n) - mean * mean) - 1.0));
  }
  c.expect(worst_mean <= 1e-10, fmt("normalized column mean %.3g", worst_mean));
  c.expect(worst_std <= 1e-10, fmt("normalized column std off by %.3g", worst_std));
  fs::remove_all(dir);
  c.note(fmt("shapes, transpose and onset counts exact; max |mean| %.3g, max |std-1| %.3g", worst_mean, worst_std));
  return c.outcome();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome end_to_end_determinism() {
  Checker c;
  const fs::path dir = fs::temp_directory_path() / "nlcnn_acceptance_determinism";
  fs::remove_all(dir);
  const std::string config = (fs::path(NLCNN_SOURCE_DIR) / "configs" / "tiny.json").string();
  for (const char* run : {"a", "b"}) {
    std::ostringstream out, err;
    const int rc = run_cli({"--config", config, "--seed", "11", "--out", (dir / run).string(), "train"}, out, err);
    c.expect(rc == kExitOk, "train exited with " + std::to_string(rc) + ": " + err.str());
  }
  const std::string model = slurp(dir / "a" / "model.txt"), metrics = slurp(dir / "a" / "metrics.csv");
  c.expect(!model.empty() && !metrics.empty(), "train wrote no artifacts");
  c.expect(model == slurp(dir / "b" / "model.txt"), "model files differ");
  c.expect(metrics == slurp(dir / "b" / "metrics.csv"), "metrics files differ");
  c.note(std::to_string(model.size()) + " model bytes and " + std::to_string(metrics.size()) +
         " metrics bytes identical");
  fs::remove_all(dir);
  return c.outcome();
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "reduction identity at neutral init", 5, reduction_identity},
      {2, "formula equivalence", 5, formula_equivalence},
      {3, "gradient correctness", 60, gradient_correctness},
      {4, "constraint enforcement", 30, constraint_enforcement},
      {5, "exponent recovery", 600, exponent_recovery},
      {6, "augmentation suite", 10, augmentation_suite},
      {7, "TEP ingestion", 5, tep_ingestion},
      {8, "end-to-end determinism", 120, end_to_end_determinism},
  };
  int failed = 0;
  for (const Criterion& cr : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = cr.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (o.pass && secs > cr.budget_s) o = {false, o.detail + fmt("; took %.1fs, budget %.0fs", secs, cr.budget_s)};
    failed += !o.pass;
    std::printf("[%s] %d %s: %s (%.2fs)\n", o.pass ? "PASS" : "FAIL", cr.id, cr.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed;
}
