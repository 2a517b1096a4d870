#include "nlcnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "nlcnn/text.hpp"

namespace nlcnn {

std::vector<Shape> Network::layer_input_shapes() const {
  std::vector<Shape> shapes{{input_rows, input_cols}};
  for (const NetworkLayer& layer : layers) {
    const Shape& in = shapes.back();
    const std::size_t gt = output_extent(in[0], layer.params.kernel.height, layer.params.stride.time);
    const std::size_t gc = output_extent(in[1], layer.params.kernel.width, layer.params.stride.channel);
    shapes.push_back({gt, gc * layer.params.out_channels()});
  }
  return shapes;
}

std::size_t Network::feature_count() const { return element_count(layer_input_shapes().back()); }

void Network::validate() const {
  if (input_rows == 0 || input_cols == 0) throw ShapeError("network input shape must be positive");
  for (const NetworkLayer& layer : layers) {
    layer.params.validate();
    layer.policy.validate(layer.params.variant());
    if (layer.latent) {
      if (layer.policy.mode != ConstraintMode::Reparam)
        throw Error("latent exponents are only meaningful in reparam mode");
      if (layer.latent->size() != layer.params.out_channels())
        throw ShapeError("latent payload count does not match channel count");
      for (const EwmVariant& l : *layer.latent) check_payload_shape(l, layer.params.kernel);
    }
  }
  const std::size_t features = feature_count();  // throws if a kernel does not fit
  if (head_b.rank() != 1 || head_b.size() < 2) throw ShapeError("classifier needs at least 2 classes");
  if (head_w.shape() != Shape{head_b.size(), features})
    throw ShapeError("classifier weights " + shape_string(head_w.shape()) + " do not match " +
                     std::to_string(head_b.size()) + " classes x " + std::to_string(features) +
                     " features");
}

namespace {

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace

Network build_network(std::size_t input_rows, std::size_t input_cols,
                      const std::vector<LayerSpec>& specs, std::size_t classes,
                      const ConstraintPolicy& policy, SeededRng& rng) {
  Network net;
  net.input_rows = input_rows;
  net.input_cols = input_cols;
  for (const LayerSpec& spec : specs) {
    if (spec.out_channels == 0) throw ShapeError("layer needs at least one output channel");
    policy.validate(spec.variant);
    NetworkLayer layer;
    layer.policy = policy;
    layer.params.kernel = spec.kernel;
    layer.params.stride = spec.stride;
    layer.params.activation = spec.activation;
    const std::size_t fan_in = spec.kernel.size();
    const double limit = glorot_limit(fan_in, fan_in * spec.out_channels);
    const bool reparam = policy.mode == ConstraintMode::Reparam && spec.variant != VariantKind::Standard;
    if (reparam) layer.latent.emplace();
    for (std::size_t m = 0; m < spec.out_channels; ++m) {
      ExponentInit init = init_exponents(spec.variant, spec.kernel, policy);
      ChannelParams ch{Tensor({spec.kernel.height, spec.kernel.width}), 0.0, std::move(init.effective)};
      for (double& v : ch.w1.values()) v = rng.uniform(-limit, limit);
      layer.params.channels.push_back(std::move(ch));
      if (reparam) layer.latent->push_back(std::move(*init.latent));
    }
    net.layers.push_back(std::move(layer));
  }
  const std::size_t features = net.feature_count();
  net.head_w = Tensor({classes, features});
  net.head_b = Tensor({classes});
  const double limit = glorot_limit(features, classes);
  for (double& v : net.head_w.values()) v = rng.uniform(-limit, limit);
  net.validate();
  return net;
}

Tensor softmax(const Tensor& logits) {
  const double top = *std::max_element(logits.values().begin(), logits.values().end());
  Tensor p(logits.shape());
  double z = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) z += (p[k] = std::exp(logits[k] - top));
  for (double& v : p.values()) v /= z;
  return p;
}

namespace {

struct NetworkTrace {
  std::vector<Tensor> inputs;  ///< matrix input of each layer
  std::vector<LayerTrace> layers;
  Tensor features;
  Tensor logits;
};

NetworkTrace trace_network(const Network& net, const Tensor& window, double eps) {
  if (window.shape() != Shape{net.input_rows, net.input_cols})
    throw ShapeError("window " + shape_string(window.shape()) + " does not match network input " +
                     shape_string({net.input_rows, net.input_cols}));
  NetworkTrace tr;
  Tensor current = window;
  for (const NetworkLayer& layer : net.layers) {
    tr.inputs.push_back(current);
    tr.layers.push_back(layer_forward_trace(current, layer.params, eps));
    current = tr.layers.back().out.as_matrix();
  }
  tr.features = current.reshaped({current.size()});
  tr.logits = matvec(net.head_w, tr.features);
  for (std::size_t k = 0; k < tr.logits.size(); ++k) tr.logits[k] += net.head_b[k];
  tr.logits.require_finite("logits");
  return tr;
}

}  // namespace

Tensor network_logits(const Network& net, const Tensor& window, double eps) {
  return trace_network(net, window, eps).logits;
}

Tensor forward_network(const Network& net, const Tensor& window, double eps) {
  return softmax(network_logits(net, window, eps));
}

NetworkGrad zero_grad(const Network& net) {
  NetworkGrad g;
  const auto shapes = net.layer_input_shapes();
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    LayerGrad lg;
    lg.dinput = Tensor(shapes[l]);
    for (const ChannelParams& ch : net.layers[l].params.channels)
      lg.channels.push_back(ChannelGrad::zeros_like(ch, net.layers[l].params.kernel));
    g.layers.push_back(std::move(lg));
  }
  g.head_w = Tensor(net.head_w.shape());
  g.head_b = Tensor(net.head_b.shape());
  return g;
}

double sample_loss(const Network& net, const Tensor& window, int label, NetworkGrad* grad,
                   double eps) {
  if (label < 0 || static_cast<std::size_t>(label) >= net.classes())
    throw Error("label " + std::to_string(label) + " outside the classifier's " +
                std::to_string(net.classes()) + " classes");
  const NetworkTrace tr = trace_network(net, window, eps);
  const Tensor p = softmax(tr.logits);
  const double top = *std::max_element(tr.logits.values().begin(), tr.logits.values().end());
  double z = 0.0;
  for (double v : tr.logits.values()) z += std::exp(v - top);
  const double loss = top + std::log(z) - tr.logits[static_cast<std::size_t>(label)];
  if (!grad) return loss;

  Tensor dlogits = p;
  dlogits[static_cast<std::size_t>(label)] -= 1.0;
  const std::size_t features = tr.features.size();
  Tensor dfeat({features});
  for (std::size_t k = 0; k < net.classes(); ++k) {
    grad->head_b[k] += dlogits[k];
    for (std::size_t f = 0; f < features; ++f) {
      grad->head_w(k, f) += dlogits[k] * tr.features[f];
      dfeat[f] += dlogits[k] * net.head_w(k, f);
    }
  }

  Tensor dout = dfeat;
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const LayerTrace& lt = tr.layers[l];
    const LayerGrad lg = layer_backward(tr.inputs[l], net.layers[l].params, lt,
                                        dout.reshaped(lt.pre.shape()), eps);
    for (std::size_t m = 0; m < lg.channels.size(); ++m) grad->layers[l].channels[m].add(lg.channels[m]);
    dout = lg.dinput;
  }
  return loss;
}

namespace {

template <typename Visit>
void for_each_param(const Network& net, bool include_exponents, Visit&& visit) {
  for (const NetworkLayer& layer : net.layers)
    for (std::size_t m = 0; m < layer.params.out_channels(); ++m) {
      const ChannelParams& ch = layer.params.channels[m];
      for (double v : ch.w1.values()) visit(v);
      visit(ch.bias);
      if (!include_exponents) continue;
      const EwmVariant& payload = layer.latent ? (*layer.latent)[m] : ch.ewm;
      for (const Tensor* t : exponent_tensors(payload))
        for (double v : t->values()) visit(v);
    }
  for (double v : net.head_w.values()) visit(v);
  for (double v : net.head_b.values()) visit(v);
}

}  // namespace

std::vector<double> pack_params(const Network& net, bool include_exponents) {
  std::vector<double> flat;
  for_each_param(net, include_exponents, [&](double v) { flat.push_back(v); });
  return flat;
}

void unpack_params(Network& net, const std::vector<double>& flat, bool include_exponents) {
  std::size_t pos = 0;
  auto take = [&]() {
    if (pos >= flat.size()) throw ShapeError("unpack_params: parameter vector too short");
    return flat[pos++];
  };
  for (NetworkLayer& layer : net.layers) {
    for (std::size_t m = 0; m < layer.params.out_channels(); ++m) {
      ChannelParams& ch = layer.params.channels[m];
      for (double& v : ch.w1.values()) v = take();
      ch.bias = take();
      if (!include_exponents) continue;
      EwmVariant& payload = layer.latent ? (*layer.latent)[m] : ch.ewm;
      for (Tensor* t : exponent_tensors(payload))
        for (double& v : t->values()) v = take();
      if (layer.latent) ch.ewm = reparam_payload(payload, layer.policy);
    }
  }
  for (double& v : net.head_w.values()) v = take();
  for (double& v : net.head_b.values()) v = take();
  if (pos != flat.size()) throw ShapeError("unpack_params: parameter vector too long");
}

std::vector<double> pack_grads(const Network& net, const NetworkGrad& grad, bool include_exponents) {
  std::vector<double> flat;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const NetworkLayer& layer = net.layers[l];
    for (std::size_t m = 0; m < layer.params.out_channels(); ++m) {
      const ChannelGrad& cg = grad.layers[l].channels[m];
      for (double v : cg.dw1.values()) flat.push_back(v);
      flat.push_back(cg.dbias);
      if (!include_exponents) continue;
      EwmVariant dexp = cg.dewm;
      if (layer.policy.mode == ConstraintMode::ProjectAfterStep)
        project_gradient(layer.params.channels[m].ewm, dexp, layer.policy);
      const auto dts = exponent_tensors(dexp);
      if (layer.latent) {
        const auto lts = exponent_tensors((*layer.latent)[m]);
        for (std::size_t t = 0; t < dts.size(); ++t)
          for (std::size_t i = 0; i < dts[t]->size(); ++i)
            flat.push_back((*dts[t])[i] * reparam_grad((*lts[t])[i], layer.policy));
      } else {
        for (const Tensor* t : dts)
          for (double v : t->values()) flat.push_back(v);
      }
    }
  }
  for (double v : grad.head_w.values()) flat.push_back(v);
  for (double v : grad.head_b.values()) flat.push_back(v);
  return flat;
}

void enforce_constraints(Network& net) {
  for (NetworkLayer& layer : net.layers) {
    for (std::size_t m = 0; m < layer.params.out_channels(); ++m) {
      ChannelParams& ch = layer.params.channels[m];
      if (layer.latent)
        ch.ewm = reparam_payload((*layer.latent)[m], layer.policy);
      else
        ch.ewm = clip_params(ch.ewm, layer.policy);
    }
  }
}

double max_bound_violation(const Network& net) {
  double worst = 0.0;
  for (const NetworkLayer& layer : net.layers)
    for (const ChannelParams& ch : layer.params.channels)
      for (const Tensor* t : exponent_tensors(ch.ewm))
        for (double v : t->values()) {
          if (!std::isfinite(v)) return INFINITY;
          worst = std::max({worst, layer.policy.v_min - v, v - layer.policy.v_max});
        }
  return worst;
}

std::vector<double> effective_exponents(const Network& net) {
  std::vector<double> out;
  for (const NetworkLayer& layer : net.layers)
    for (const ChannelParams& ch : layer.params.channels)
      for (const Tensor* t : exponent_tensors(ch.ewm))
        out.insert(out.end(), t->values().begin(), t->values().end());
  return out;
}

Optimizer::Optimizer(OptimizerKind kind, double lr, double beta1, double beta2, double epsilon)
    : kind_(kind), lr_(lr), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

void Optimizer::step(std::vector<double>& params, const std::vector<double>& grads) {
  if (params.size() != grads.size()) throw ShapeError("optimizer: parameter/gradient size mismatch");
  if (kind_ == OptimizerKind::Sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr_ * grads[i];
    return;
  }
  if (m_.empty()) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
  }
  if (m_.size() != params.size()) throw ShapeError("optimizer: parameter count changed");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i] * grads[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + epsilon_);
  }
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw Error("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw Error("learning_rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
    throw Error("Adam betas must lie in (0, 1)");
  if (!(adam_epsilon > 0.0)) throw Error("adam_epsilon must be positive");
  if (eval_every == 0) throw Error("eval_every must be positive");
  if (!(eps > 0.0)) throw Error("eps must be positive");
  for (const AugmentSpec& s : augment) s.validate();
}

std::size_t Metrics::total() const {
  std::size_t n = 0;
  for (const auto& row : confusion) n = std::accumulate(row.begin(), row.end(), n);
  return n;
}

Metrics metrics_from_predictions(const std::vector<int>& truth, const std::vector<int>& predicted,
                                 std::size_t classes) {
  if (truth.size() != predicted.size()) throw ShapeError("metrics: label count mismatch");
  Metrics m;
  m.classes = classes;
  m.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = static_cast<std::size_t>(truth[i]), p = static_cast<std::size_t>(predicted[i]);
    if (truth[i] < 0 || t >= classes || predicted[i] < 0 || p >= classes)
      throw Error("metrics: label outside [0, " + std::to_string(classes) + ")");
    ++m.confusion[t][p];
    if (t == p) ++correct;
  }
  m.accuracy = truth.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(truth.size());
  m.detection_rate.assign(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    const std::size_t row = std::accumulate(m.confusion[c].begin(), m.confusion[c].end(), std::size_t{0});
    if (row > 0) m.detection_rate[c] = static_cast<double>(m.confusion[c][c]) / static_cast<double>(row);
  }
  const std::size_t normal =
      std::accumulate(m.confusion[0].begin(), m.confusion[0].end(), std::size_t{0});
  if (normal > 0)
    m.false_alarm = static_cast<double>(normal - m.confusion[0][0]) / static_cast<double>(normal);
  return m;
}

Metrics evaluate(const Network& net, const WindowedDataset& data, double eps) {
  if (data.empty()) throw Error("evaluate needs a non-empty dataset");
  std::vector<int> truth, predicted;
  double loss = 0.0;
  for (const LabeledWindow& w : data.windows) {
    const Tensor logits = network_logits(net, w.x, eps);
    const auto best = std::max_element(logits.values().begin(), logits.values().end());
    truth.push_back(w.label);
    predicted.push_back(static_cast<int>(best - logits.values().begin()));
    loss += sample_loss(net, w.x, w.label, nullptr, eps);
  }
  Metrics m = metrics_from_predictions(truth, predicted, net.classes());
  m.loss = loss / static_cast<double>(data.size());
  return m;
}

NonFiniteLoss::NonFiniteLoss(std::size_t epoch_, std::size_t batch_)
    : NumericError("non-finite loss in epoch " + std::to_string(epoch_) + ", batch " +
                   std::to_string(batch_)),
      epoch(epoch_),
      batch(batch_) {}

std::vector<EpochRecord> train(Network& net, const WindowedDataset& data, const TrainConfig& config,
                               const WindowedDataset* eval_data) {
  config.validate();
  net.validate();
  std::vector<EpochRecord> history;
  if (config.epochs == 0) return history;
  if (data.empty()) throw Error("train needs a non-empty dataset");

  const SeededRng master(config.seed);
  SeededRng order_rng = master.derive(1);
  SeededRng augment_rng = master.derive(2);
  Optimizer opt(config.optimizer, config.learning_rate, config.beta1, config.beta2,
                config.adam_epsilon);
  const bool with_exp = config.train_exponents;

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    order_rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(start + config.batch_size, order.size());
      NetworkGrad grad = zero_grad(net);
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const LabeledWindow& w = data.windows[order[k]];
        if (config.augment.empty()) {
          batch_loss += sample_loss(net, w.x, w.label, &grad, config.eps);
        } else {
          const Tensor x = apply_pipeline(w.x, config.augment, augment_rng);
          batch_loss += sample_loss(net, x, w.label, &grad, config.eps);
        }
      }
      if (!std::isfinite(batch_loss)) throw NonFiniteLoss(epoch, batch_index);
      epoch_loss += batch_loss;

      const double scale = 1.0 / static_cast<double>(end - start);
      std::vector<double> g = pack_grads(net, grad, with_exp);
      for (double& v : g) v *= scale;
      std::vector<double> params = pack_params(net, with_exp);
      opt.step(params, g);
      unpack_params(net, params, with_exp);
      enforce_constraints(net);
      if (max_bound_violation(net) > 0.0)
        throw Error("internal: exponent left its bounds after epoch " + std::to_string(epoch) +
                    ", batch " + std::to_string(batch_index));
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(data.size());
    if (epoch % config.eval_every == 0 || epoch == config.epochs)
      rec.eval = evaluate(net, eval_data ? *eval_data : data, config.eps);
    history.push_back(std::move(rec));
  }
  return history;
}

void write_metrics_csv(std::ostream& out, const std::vector<EpochRecord>& history, std::size_t classes) {
  out << "epoch,loss,accuracy,false_alarm";
  for (std::size_t c = 0; c < classes; ++c) out << ",det_" << c;
  out << '\n';
  for (const EpochRecord& r : history) {
    out << r.epoch << ',' << format_double(r.train_loss);
    if (r.eval) {
      out << ',' << format_double(r.eval->accuracy) << ',' << format_double(r.eval->false_alarm);
      for (std::size_t c = 0; c < classes; ++c)
        out << ',' << format_double(c < r.eval->detection_rate.size() ? r.eval->detection_rate[c] : 0.0);
    } else {
      out << ",,";
      for (std::size_t c = 0; c < classes; ++c) out << ',';
    }
    out << '\n';
  }
}

// Model text format, version 1:
//
//   nlcnn-model 1
//   input <rows> <cols>
//   classes <K>
//   layers <L>
//   layer <variant> <k_h> <k_w> <stride_t> <stride_c> <channels> <activation>
//   constraint <v_min> <v_max> <mode> <kind>
//   channel <m> <bias>
//   tensor <name> <rank> <dims...>
//   <row-major values on one line>
//   ...
//   head
//   tensor head_w ...
//   tensor head_b ...
//   end
//
// Each channel lists W1, its exponent tensors, and in reparam mode the latent
// tensors prefixed with "latent_".

namespace {

void write_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
  out << "tensor " << name << ' ' << t.rank();
  for (std::size_t d : t.shape()) out << ' ' << d;
  out << '\n';
  for (std::size_t i = 0; i < t.size(); ++i) out << (i ? " " : "") << format_double(t[i]);
  out << '\n';
}

class ModelReader {
 public:
  explicit ModelReader(std::istream& in) : in_(in) {}

  std::string word() {
    std::string w;
    if (!(in_ >> w)) throw FormatError("model file truncated");
    return w;
  }
  void expect(const std::string& token) {
    const std::string w = word();
    if (w != token) throw FormatError("model file: expected '" + token + "', found '" + w + "'");
  }
  std::size_t count() {
    const std::string w = word();
    const auto v = parse_double(w);
    if (!v || *v < 0 || *v != std::floor(*v)) throw FormatError("model file: bad count '" + w + "'");
    return static_cast<std::size_t>(*v);
  }
  double number() {
    const std::string w = word();
    const auto v = parse_double(w);
    if (!v) throw FormatError("model file: bad number '" + w + "'");
    return *v;
  }
  Tensor tensor(const std::string& name, const Shape& expected) {
    expect("tensor");
    expect(name);
    const std::size_t rank = count();
    Shape shape(rank);
    for (auto& d : shape) d = count();
    if (shape != expected)
      throw FormatError("model file: tensor " + name + " has shape " + shape_string(shape) +
                        ", expected " + shape_string(expected));
    std::vector<double> vals(element_count(shape));
    for (double& v : vals) v = number();
    return Tensor(std::move(shape), std::move(vals));
  }

 private:
  std::istream& in_;
};

}  // namespace

void save_model(std::ostream& out, const Network& net) {
  out << "nlcnn-model " << kModelFormatVersion << '\n';
  out << "input " << net.input_rows << ' ' << net.input_cols << '\n';
  out << "classes " << net.classes() << '\n';
  out << "layers " << net.layers.size() << '\n';
  for (const NetworkLayer& layer : net.layers) {
    const LayerParams& p = layer.params;
    out << "layer " << variant_name(p.variant()) << ' ' << p.kernel.height << ' ' << p.kernel.width
        << ' ' << p.stride.time << ' ' << p.stride.channel << ' ' << p.out_channels() << ' '
        << activation_name(p.activation) << '\n';
    out << "constraint " << format_double(layer.policy.v_min) << ' '
        << format_double(layer.policy.v_max) << ' ' << constraint_mode_name(layer.policy.mode) << ' '
        << reparam_kind_name(layer.policy.kind) << '\n';
    const auto names = exponent_tensor_names(p.variant());
    for (std::size_t m = 0; m < p.out_channels(); ++m) {
      const ChannelParams& ch = p.channels[m];
      out << "channel " << m << ' ' << format_double(ch.bias) << '\n';
      write_tensor(out, "W1", ch.w1);
      const auto eff = exponent_tensors(ch.ewm);
      for (std::size_t t = 0; t < eff.size(); ++t) write_tensor(out, names[t], *eff[t]);
      if (layer.latent) {
        const auto lat = exponent_tensors((*layer.latent)[m]);
        for (std::size_t t = 0; t < lat.size(); ++t) write_tensor(out, "latent_" + names[t], *lat[t]);
      }
    }
  }
  out << "head\n";
  write_tensor(out, "head_w", net.head_w);
  write_tensor(out, "head_b", net.head_b);
  out << "end\n";
}

void save_model(const std::filesystem::path& path, const Network& net) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  save_model(out, net);
  if (!out) throw FormatError("write failed for " + path.string());
}

Network load_model(std::istream& in) {
  ModelReader r(in);
  r.expect("nlcnn-model");
  const std::size_t version = r.count();
  if (version != static_cast<std::size_t>(kModelFormatVersion))
    throw FormatError("unsupported model format version " + std::to_string(version));
  Network net;
  r.expect("input");
  net.input_rows = r.count();
  net.input_cols = r.count();
  r.expect("classes");
  const std::size_t classes = r.count();
  r.expect("layers");
  const std::size_t layer_count = r.count();
  for (std::size_t l = 0; l < layer_count; ++l) {
    NetworkLayer layer;
    LayerParams& p = layer.params;
    r.expect("layer");
    const VariantKind kind = parse_variant(r.word());
    p.kernel.height = r.count();
    p.kernel.width = r.count();
    p.stride.time = r.count();
    p.stride.channel = r.count();
    const std::size_t channels = r.count();
    p.activation = parse_activation(r.word());
    r.expect("constraint");
    layer.policy.v_min = r.number();
    layer.policy.v_max = r.number();
    layer.policy.mode = parse_constraint_mode(r.word());
    layer.policy.kind = parse_reparam_kind(r.word());
    const bool reparam = layer.policy.mode == ConstraintMode::Reparam && kind != VariantKind::Standard;
    if (reparam) layer.latent.emplace();
    const auto names = exponent_tensor_names(kind);
    for (std::size_t m = 0; m < channels; ++m) {
      r.expect("channel");
      if (r.count() != m) throw FormatError("model file: channels out of order");
      ChannelParams ch;
      ch.bias = r.number();
      ch.w1 = r.tensor("W1", {p.kernel.height, p.kernel.width});
      ch.ewm = zero_payload(kind, p.kernel);
      auto eff = exponent_tensors(ch.ewm);
      for (std::size_t t = 0; t < eff.size(); ++t) *eff[t] = r.tensor(names[t], eff[t]->shape());
      if (reparam) {
        EwmVariant lat = zero_payload(kind, p.kernel);
        auto lts = exponent_tensors(lat);
        for (std::size_t t = 0; t < lts.size(); ++t)
          *lts[t] = r.tensor("latent_" + names[t], lts[t]->shape());
        layer.latent->push_back(std::move(lat));
      }
      p.channels.push_back(std::move(ch));
    }
    net.layers.push_back(std::move(layer));
  }
  r.expect("head");
  const std::size_t features = net.feature_count();
  net.head_w = r.tensor("head_w", {classes, features});
  net.head_b = r.tensor("head_b", {classes});
  r.expect("end");
  net.validate();
  return net;
}

Network load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return load_model(in);
}

}  // namespace nlcnn
