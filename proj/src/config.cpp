#include "nlcnn/config.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace nlcnn {

using nlohmann::json;

namespace {

// Reads fields from one JSON object, remembering which keys were consumed so
// that leftovers can be rejected.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) const { return obj_.contains(key); }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  double number(const std::string& key, double fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_number()) throw ConfigError(field(key) + ": expected a number");
    return v->get<double>();
  }

  std::size_t count(const std::string& key, std::size_t fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_number_integer() || v->get<long long>() < 0)
      throw ConfigError(field(key) + ": expected a non-negative integer");
    return v->get<std::size_t>();
  }

  std::uint64_t u64(const std::string& key, std::uint64_t fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0))
      throw ConfigError(field(key) + ": expected an unsigned integer");
    return v->get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_boolean()) throw ConfigError(field(key) + ": expected true or false");
    return v->get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_string()) throw ConfigError(field(key) + ": expected a string");
    return v->get<std::string>();
  }

  /// Parses an enum-like string through `parse`, rewrapping errors with the field path.
  template <typename Parse>
  auto choice(const std::string& key, const std::string& fallback, Parse parse) {
    const std::string s = string(key, fallback);
    try {
      return parse(s);
    } catch (const Error& e) {
      throw ConfigError(field(key) + ": " + e.what());
    }
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items())
      if (!seen_.count(key)) throw ConfigError(field(key) + ": unknown key");
  }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

const json& empty_object() {
  static const json obj = json::object();
  return obj;
}

AugmentSpec parse_augment(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  AugmentSpec spec;
  const std::string op = r.string("op", "");
  if (op == "flip_lr") {
    spec.op = LeftRightFlip{};
  } else if (op == "flip_blockwise") {
    spec.op = BlockwiseFlip{r.count("block_len", 4)};
  } else if (op == "flip_bidirectional") {
    spec.op = BiDirectionalFlip{};
  } else if (op == "exp_augment") {
    ExponentAugment e;
    e.granularity = r.choice("granularity", "per_row", parse_granularity);
    e.lo = r.number("lo", -2.0);
    e.hi = r.number("hi", 4.0);
    spec.op = e;
  } else {
    throw ConfigError(r.field("op") +
                      ": expected flip_lr, flip_blockwise, flip_bidirectional or exp_augment");
  }
  spec.probability = r.number("p", 0.5);
  r.finish();
  try {
    spec.validate();
  } catch (const Error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return spec;
}

json augment_to_json(const AugmentSpec& spec) {
  json j;
  j["op"] = std::string(augment_op_name(spec.op));
  if (const auto* b = std::get_if<BlockwiseFlip>(&spec.op)) j["block_len"] = b->block_len;
  if (const auto* e = std::get_if<ExponentAugment>(&spec.op)) {
    j["granularity"] = std::string(granularity_name(e->granularity));
    j["lo"] = e->lo;
    j["hi"] = e->hi;
  }
  j["p"] = spec.probability;
  return j;
}

}  // namespace

void RunConfig::validate() const {
  try {
    if (layers.empty()) throw Error("model.layers must contain at least one layer");
    if (data.win_len == 0 || data.stride == 0) throw Error("data.win_len and data.stride must be positive");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const LayerSpec& l = layers[i];
      const std::string at = "model.layers[" + std::to_string(i) + "]";
      if (l.kernel.height == 0 || l.kernel.width == 0) throw Error(at + ": k_h and k_w must be positive");
      if (l.stride.time == 0 || l.stride.channel == 0) throw Error(at + ": strides must be positive");
      if (l.out_channels == 0) throw Error(at + ": out_channels must be positive");
      try {
        constraints.validate(l.variant);
      } catch (const Error& e) {
        throw Error("constraints (" + at + "): " + e.what());
      }
    }
    if (data.source == DataSource::Synthetic) {
      const auto& s = data.synthetic;
      if (s.channels == 0) throw Error("data.synthetic.channels must be positive");
      if (!(s.exponent > constraints.v_min && s.exponent < constraints.v_max))
        throw Error("data.synthetic.exponent must lie inside the constraint bounds");
      if (!(s.noise >= 0.0)) throw Error("data.synthetic.noise must be non-negative");
      if (!(s.min_magnitude > 0.0 && s.min_magnitude <= s.max_magnitude))
        throw Error("data.synthetic needs 0 < min_magnitude <= max_magnitude");
    } else {
      if (data.tep.path.empty()) throw Error("data.tep.path is required for TEP data");
      if (data.tep.faults.size() < 2) throw Error("data.tep.faults needs at least two entries");
      if (data.tep.faults.front() != 0) throw Error("data.tep.faults must start with 0 (normal)");
      std::set<int> seen;
      for (int f : data.tep.faults) {
        if (f < 0 || f > kTepMaxFault) throw Error("data.tep.faults entries must lie in [0, 21]");
        if (!seen.insert(f).second) throw Error("data.tep.faults contains duplicates");
      }
    }
    train.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

RunConfig parse_run_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }

  RunConfig cfg;
  ObjectReader top(root, "");
  cfg.seed = top.u64("seed", 0);

  {
    const json* d = top.raw("data");
    ObjectReader r(d ? *d : empty_object(), "data");
    const std::string source = r.string("source", "synthetic");
    if (source == "synthetic")
      cfg.data.source = DataSource::Synthetic;
    else if (source == "tep")
      cfg.data.source = DataSource::Tep;
    else
      throw ConfigError("data.source: expected 'synthetic' or 'tep'");
    cfg.data.win_len = r.count("win_len", cfg.data.win_len);
    cfg.data.stride = r.count("stride", cfg.data.stride);
    if (const json* s = r.raw("synthetic")) {
      ObjectReader sr(*s, "data.synthetic");
      auto& sc = cfg.data.synthetic;
      sc.channels = sr.count("channels", sc.channels);
      sc.exponent = sr.number("exponent", sc.exponent);
      sc.noise = sr.number("noise", sc.noise);
      sc.train_count = sr.count("train_count", sc.train_count);
      sc.test_count = sr.count("test_count", sc.test_count);
      sc.margin = sr.number("margin", sc.margin);
      sc.min_magnitude = sr.number("min_magnitude", sc.min_magnitude);
      sc.max_magnitude = sr.number("max_magnitude", sc.max_magnitude);
      sr.finish();
    }
    if (const json* t = r.raw("tep")) {
      ObjectReader tr(*t, "data.tep");
      cfg.data.tep.path = tr.string("path", "");
      if (const json* f = tr.raw("faults")) {
        if (!f->is_array()) throw ConfigError("data.tep.faults: expected an array of integers");
        cfg.data.tep.faults.clear();
        for (const json& v : *f) {
          if (!v.is_number_integer()) throw ConfigError("data.tep.faults: expected integers");
          cfg.data.tep.faults.push_back(v.get<int>());
        }
      }
      tr.finish();
    }
    r.finish();
  }

  {
    const json* m = top.raw("model");
    ObjectReader r(m ? *m : empty_object(), "model");
    if (const json* layers = r.raw("layers")) {
      if (!layers->is_array()) throw ConfigError("model.layers: expected an array");
      cfg.layers.clear();
      for (std::size_t i = 0; i < layers->size(); ++i) {
        ObjectReader lr((*layers)[i], "model.layers[" + std::to_string(i) + "]");
        LayerSpec l;
        l.variant = lr.choice("variant", "elementwise", parse_variant);
        l.kernel.height = lr.count("k_h", 1);
        l.kernel.width = lr.count("k_w", 1);
        l.stride.time = lr.count("stride_t", 1);
        l.stride.channel = lr.count("stride_c", 1);
        l.out_channels = lr.count("out_channels", 1);
        l.activation = lr.choice("activation", "relu", parse_activation);
        lr.finish();
        cfg.layers.push_back(l);
      }
    }
    r.finish();
  }

  {
    const json* c = top.raw("constraints");
    ObjectReader r(c ? *c : empty_object(), "constraints");
    cfg.constraints.v_min = r.number("v_min", -2.0);
    cfg.constraints.v_max = r.number("v_max", 4.0);
    cfg.constraints.mode = r.choice("mode", "clip_params", parse_constraint_mode);
    cfg.constraints.kind = r.choice("kind", "scaled_sigmoid", parse_reparam_kind);
    r.finish();
  }

  if (const json* a = top.raw("augment")) {
    if (!a->is_array()) throw ConfigError("augment: expected an array of specs");
    for (std::size_t i = 0; i < a->size(); ++i)
      cfg.train.augment.push_back(parse_augment((*a)[i], "augment[" + std::to_string(i) + "]"));
  }

  {
    const json* t = top.raw("train");
    ObjectReader r(t ? *t : empty_object(), "train");
    TrainConfig& tc = cfg.train;
    tc.epochs = r.count("epochs", tc.epochs);
    tc.batch_size = r.count("batch_size", tc.batch_size);
    tc.learning_rate = r.number("learning_rate", tc.learning_rate);
    tc.optimizer = r.choice("optimizer", "adam", [](const std::string& s) {
      if (s == "adam") return OptimizerKind::Adam;
      if (s == "sgd") return OptimizerKind::Sgd;
      throw Error("expected 'adam' or 'sgd'");
    });
    tc.beta1 = r.number("beta1", tc.beta1);
    tc.beta2 = r.number("beta2", tc.beta2);
    tc.adam_epsilon = r.number("adam_epsilon", tc.adam_epsilon);
    tc.train_exponents = r.boolean("train_exponents", tc.train_exponents);
    tc.eval_every = r.count("eval_every", tc.eval_every);
    tc.eps = r.number("eps", tc.eps);
    r.finish();
  }

  {
    const json* o = top.raw("output");
    ObjectReader r(o ? *o : empty_object(), "output");
    cfg.output_dir = r.string("dir", cfg.output_dir);
    r.finish();
  }
  top.finish();

  cfg.train.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string dump_run_config(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  json data;
  data["source"] = cfg.data.source == DataSource::Synthetic ? "synthetic" : "tep";
  data["win_len"] = cfg.data.win_len;
  data["stride"] = cfg.data.stride;
  const auto& s = cfg.data.synthetic;
  data["synthetic"] = {{"channels", s.channels},       {"exponent", s.exponent},
                       {"noise", s.noise},             {"train_count", s.train_count},
                       {"test_count", s.test_count},   {"margin", s.margin},
                       {"min_magnitude", s.min_magnitude}, {"max_magnitude", s.max_magnitude}};
  data["tep"] = {{"path", cfg.data.tep.path}, {"faults", cfg.data.tep.faults}};
  j["data"] = data;

  json layers = json::array();
  for (const LayerSpec& l : cfg.layers)
    layers.push_back({{"variant", std::string(variant_name(l.variant))},
                      {"k_h", l.kernel.height},
                      {"k_w", l.kernel.width},
                      {"stride_t", l.stride.time},
                      {"stride_c", l.stride.channel},
                      {"out_channels", l.out_channels},
                      {"activation", std::string(activation_name(l.activation))}});
  j["model"] = {{"layers", layers}};
  j["constraints"] = {{"v_min", cfg.constraints.v_min},
                      {"v_max", cfg.constraints.v_max},
                      {"mode", std::string(constraint_mode_name(cfg.constraints.mode))},
                      {"kind", std::string(reparam_kind_name(cfg.constraints.kind))}};
  json aug = json::array();
  for (const AugmentSpec& a : cfg.train.augment) aug.push_back(augment_to_json(a));
  j["augment"] = aug;
  const TrainConfig& t = cfg.train;
  j["train"] = {{"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"learning_rate", t.learning_rate},
                {"optimizer", t.optimizer == OptimizerKind::Adam ? "adam" : "sgd"},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"adam_epsilon", t.adam_epsilon},
                {"train_exponents", t.train_exponents},
                {"eval_every", t.eval_every},
                {"eps", t.eps}};
  j["output"] = {{"dir", cfg.output_dir}};
  return j.dump(2) + "\n";
}

namespace {

WindowedDataset remap_labels(WindowedDataset ds, const std::map<int, int>& classes) {
  for (LabeledWindow& w : ds.windows) w.label = classes.at(w.label);
  return ds;
}

}  // namespace

DataSplits load_data(const RunConfig& cfg) {
  DataSplits out;
  const SeededRng master(cfg.seed);
  if (cfg.data.source == DataSource::Synthetic) {
    const auto& s = cfg.data.synthetic;
    SyntheticParams p;
    p.win_len = cfg.data.win_len;
    p.channels = s.channels;
    p.exponent = s.exponent;
    p.noise = s.noise;
    p.margin = s.margin;
    p.min_magnitude = s.min_magnitude;
    p.max_magnitude = s.max_magnitude;
    p.count = s.train_count;
    p.seed = master.derive(10).seed();
    out.train = gen_synthetic(p).data;
    p.count = s.test_count;
    p.seed = master.derive(11).seed();
    out.test = gen_synthetic(p).data;
    out.classes = 2;
    return out;
  }

  const std::filesystem::path dir = cfg.data.tep.path;
  std::map<int, int> classes;
  for (std::size_t i = 0; i < cfg.data.tep.faults.size(); ++i)
    classes[cfg.data.tep.faults[i]] = static_cast<int>(i);

  std::vector<RawRun> train_runs, test_runs;
  for (int fault : cfg.data.tep.faults) {
    train_runs.push_back(load_run(dir / run_filename(fault, Split::Train), fault, Split::Train));
    test_runs.push_back(load_run(dir / run_filename(fault, Split::Test), fault, Split::Test));
  }
  const NormStats stats = fit_normalize(train_runs);
  for (const RawRun& run : train_runs)
    out.train.append(remap_labels(make_windows(apply_normalize(run, stats), cfg.data.win_len,
                                               cfg.data.stride),
                                  classes));
  for (const RawRun& run : test_runs)
    out.test.append(remap_labels(make_windows(apply_normalize(run, stats), cfg.data.win_len,
                                              cfg.data.stride),
                                 classes));
  out.classes = cfg.data.tep.faults.size();
  return out;
}

}  // namespace nlcnn
