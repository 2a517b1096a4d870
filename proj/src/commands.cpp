#include "nlcnn/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "nlcnn/config.hpp"
#include "nlcnn/gradients.hpp"
#include "nlcnn/training.hpp"

namespace nlcnn {

namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

RunConfig effective_config(const GlobalOptions& g) {
  RunConfig cfg = g.config_path.empty() ? parse_run_config("{}") : load_run_config(g.config_path);
  if (g.seed) {
    cfg.seed = *g.seed;
    cfg.train.seed = *g.seed;
  }
  if (!g.out_dir.empty()) cfg.output_dir = g.out_dir;
  return cfg;
}

fs::path prepare_output(const RunConfig& cfg) {
  const fs::path dir = cfg.output_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw FormatError("cannot create output directory " + dir.string() + ": " + ec.message());
  std::ofstream echo(dir / "config.json");
  if (!echo) throw FormatError("cannot write " + (dir / "config.json").string());
  echo << dump_run_config(cfg);
  return dir;
}

void print_metrics(std::ostream& out, const Metrics& m) {
  char line[160];
  std::snprintf(line, sizeof line, "accuracy %.6f  false_alarm %.6f  loss %.6f  windows %zu\n",
                m.accuracy, m.false_alarm, m.loss, m.total());
  out << line;
  for (std::size_t c = 0; c < m.classes; ++c) {
    std::snprintf(line, sizeof line, "  class %zu detection %.6f\n", c, m.detection_rate[c]);
    out << line;
  }
}

int cmd_gradcheck(const GlobalOptions& g, const std::string& variant, double tol, std::size_t seeds,
                  std::ostream& out) {
  const RunConfig cfg = effective_config(g);
  std::vector<VariantKind> kinds;
  if (variant == "all") {
    kinds = all_variants();
  } else if (!variant.empty()) {
    try {
      kinds = {parse_variant(variant)};
    } catch (const Error& e) {
      throw ConfigError(std::string("--variant: ") + e.what());
    }
  } else if (!g.config_path.empty()) {
    for (const LayerSpec& l : cfg.layers)
      if (std::find(kinds.begin(), kinds.end(), l.variant) == kinds.end()) kinds.push_back(l.variant);
  } else {
    kinds = all_variants();
  }
  const std::vector<KernelShape> kernels = {{1, 1}, {2, 2}, {3, 2}};
  const auto cases = grad_check_suite(kinds, kernels, seeds, cfg.seed, tol);

  bool all_pass = true;
  for (VariantKind kind : kinds) {
    const GradSuiteCase* worst = nullptr;
    double worst_err = -1.0;
    std::size_t failed = 0, total = 0;
    for (const GradSuiteCase& c : cases) {
      if (c.kind != kind) continue;
      ++total;
      if (!c.report.pass()) ++failed;
      for (const GroupCheck& gc : c.report.groups)
        if (gc.max_rel_error > worst_err) {
          worst_err = gc.max_rel_error;
          worst = &c;
        }
    }
    all_pass = all_pass && failed == 0;
    out << "== " << variant_name(kind) << ": " << (total - failed) << "/" << total
        << " instances pass";
    if (worst)
      out << "; worst case kernel " << worst->kernel.height << "x" << worst->kernel.width
          << " seed " << worst->seed << "\n"
          << worst->report.to_table();
    else
      out << "\n";
  }
  out << (all_pass ? "gradcheck PASS\n" : "gradcheck FAIL\n");
  return all_pass ? kExitOk : kExitFailure;
}

int cmd_train(const GlobalOptions& g, std::ostream& out) {
  const RunConfig cfg = effective_config(g);
  const fs::path dir = prepare_output(cfg);
  const DataSplits data = load_data(cfg);
  SeededRng init_rng = SeededRng(cfg.seed).derive(12);
  Network net = build_network(data.train.win_len, data.train.channels, cfg.layers, data.classes,
                              cfg.constraints, init_rng);
  const auto history = train(net, data.train, cfg.train, data.test.empty() ? nullptr : &data.test);

  std::ofstream metrics(dir / "metrics.csv");
  write_metrics_csv(metrics, history, data.classes);
  if (!metrics) throw FormatError("cannot write " + (dir / "metrics.csv").string());
  save_model(dir / "model.txt", net);

  out << "trained " << history.size() << " epochs on " << data.train.size() << " windows\n";
  if (!history.empty()) {
    char line[96];
    std::snprintf(line, sizeof line, "final train loss %.6f\n", history.back().train_loss);
    out << line;
    if (history.back().eval) print_metrics(out, *history.back().eval);
  }
  out << "wrote " << (dir / "metrics.csv").string() << " and " << (dir / "model.txt").string() << "\n";
  return kExitOk;
}

int cmd_eval(const GlobalOptions& g, const std::string& model_path, std::ostream& out) {
  const RunConfig cfg = effective_config(g);
  const fs::path path = model_path.empty() ? fs::path(cfg.output_dir) / "model.txt" : fs::path(model_path);
  const Network net = load_model(path);
  const DataSplits data = load_data(cfg);
  const WindowedDataset& set = data.test.empty() ? data.train : data.test;
  if (set.win_len != net.input_rows || set.channels != net.input_cols)
    throw ConfigError("model expects " + std::to_string(net.input_rows) + "x" +
                      std::to_string(net.input_cols) + " windows, data has " +
                      std::to_string(set.win_len) + "x" + std::to_string(set.channels));
  print_metrics(out, evaluate(net, set, cfg.train.eps));
  return kExitOk;
}

int cmd_synth(const GlobalOptions& g, std::ostream& out) {
  const RunConfig cfg = effective_config(g);
  const fs::path dir = prepare_output(cfg);
  const DataSplits data = load_data(cfg);
  write_windows_csv(dir / "train.csv", data.train);
  write_windows_csv(dir / "test.csv", data.test);
  out << "wrote " << data.train.size() << " train and " << data.test.size() << " test windows to "
      << dir.string() << "\n";
  return kExitOk;
}

int cmd_augment(const GlobalOptions& g, std::ostream& out) {
  const RunConfig cfg = effective_config(g);
  // --out naming a .csv file selects the file itself; anything else is a directory.
  fs::path file;
  RunConfig dir_cfg = cfg;
  if (fs::path(cfg.output_dir).extension() == ".csv") {
    file = cfg.output_dir;
    dir_cfg.output_dir = file.has_parent_path() ? file.parent_path().string() : ".";
    prepare_output(dir_cfg);
  } else {
    file = prepare_output(cfg) / "augmented.csv";
  }
  const DataSplits data = load_data(cfg);
  SeededRng rng = SeededRng(cfg.seed).derive(13);
  WindowedDataset augmented = data.train;
  for (LabeledWindow& w : augmented.windows) w.x = apply_pipeline(w.x, cfg.train.augment, rng);
  write_windows_csv(file, augmented);
  out << "wrote " << augmented.size() << " augmented windows to " << file.string() << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Nonlinear convolution networks with exponential weight matrices", "nlcnn"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config_path, "Run configuration (JSON)");
  app.add_option("--seed", g.seed, "Override the configured seed");
  app.add_option("--out", g.out_dir, "Output directory (augment also accepts a .csv path)");

  std::string variant;
  double tol = 1e-6;
  std::size_t seeds = 5;
  auto* gradcheck = app.add_subcommand("gradcheck", "Check analytic gradients against finite differences");
  gradcheck->add_option("--variant", variant, "EWM variant name or 'all'");
  gradcheck->add_option("--tol", tol, "Relative error tolerance")->check(CLI::NonNegativeNumber);
  gradcheck->add_option("--seeds", seeds, "Random instances per variant and kernel shape")
      ->check(CLI::PositiveNumber);

  std::string model_path;
  auto* train_cmd = app.add_subcommand("train", "Train a network and write metrics.csv and model.txt");
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a saved model on the test split");
  eval_cmd->add_option("--model", model_path, "Model file (default <out>/model.txt)");
  auto* synth_cmd = app.add_subcommand("synth", "Write the generated dataset as CSV");
  auto* augment_cmd = app.add_subcommand("augment", "Write augmented training windows as CSV");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (gradcheck->parsed()) return cmd_gradcheck(g, variant, tol, seeds, out);
    if (train_cmd->parsed()) return cmd_train(g, out);
    if (eval_cmd->parsed()) return cmd_eval(g, model_path, out);
    if (synth_cmd->parsed()) return cmd_synth(g, out);
    if (augment_cmd->parsed()) return cmd_augment(g, out);
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace nlcnn
