#include "nlcnn/nlconv.hpp"

#include <cmath>

#include "nlcnn/error.hpp"

namespace nlcnn {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_shape(const Tensor& t, const Shape& expected, const char* what) {
  if (t.shape() != expected)
    throw ShapeError(std::string(what) + ": expected " + shape_string(expected) + ", got " +
                     shape_string(t.shape()));
}

void require_same_size(const Tensor& x, const Tensor& w, const char* what) {
  if (x.size() != w.size())
    throw ShapeError(std::string(what) + ": receptive field has " + std::to_string(x.size()) +
                     " elements but weights have " + std::to_string(w.size()));
}

}  // namespace

VariantKind kind_of(const EwmVariant& ewm) { return static_cast<VariantKind>(ewm.index()); }

std::string_view variant_name(VariantKind kind) {
  switch (kind) {
    case VariantKind::Standard: return "standard";
    case VariantKind::Elementwise: return "elementwise";
    case VariantKind::RowShared: return "row_shared";
    case VariantKind::ColShared: return "col_shared";
    case VariantKind::Bilinear: return "bilinear";
    case VariantKind::FullMatrix: return "full_matrix";
  }
  return "unknown";
}

VariantKind parse_variant(std::string_view name) {
  for (VariantKind k : all_variants())
    if (variant_name(k) == name) return k;
  throw FormatError("unknown EWM variant '" + std::string(name) + "'");
}

const std::vector<VariantKind>& all_variants() {
  static const std::vector<VariantKind> kinds = {
      VariantKind::Standard,  VariantKind::Elementwise, VariantKind::RowShared,
      VariantKind::ColShared, VariantKind::Bilinear,    VariantKind::FullMatrix};
  return kinds;
}

bool is_matrix_variant(VariantKind kind) {
  return kind == VariantKind::Bilinear || kind == VariantKind::FullMatrix;
}

std::size_t exponent_count(VariantKind kind, KernelShape kernel) {
  switch (kind) {
    case VariantKind::Standard: return 0;
    case VariantKind::Elementwise: return kernel.size();
    case VariantKind::RowShared: return kernel.height;
    case VariantKind::ColShared: return kernel.width;
    case VariantKind::Bilinear: return kernel.height * kernel.height + kernel.width * kernel.width;
    case VariantKind::FullMatrix: return kernel.size() * kernel.size();
  }
  return 0;
}

std::vector<Tensor*> exponent_tensors(EwmVariant& ewm) {
  return std::visit(Overloaded{
                        [](StandardEwm&) { return std::vector<Tensor*>{}; },
                        [](ElementwiseEwm& e) { return std::vector<Tensor*>{&e.w2}; },
                        [](RowSharedEwm& e) { return std::vector<Tensor*>{&e.w_row}; },
                        [](ColSharedEwm& e) { return std::vector<Tensor*>{&e.w_col}; },
                        [](BilinearEwm& e) { return std::vector<Tensor*>{&e.w3, &e.w4}; },
                        [](FullMatrixEwm& e) { return std::vector<Tensor*>{&e.w5}; },
                    },
                    ewm);
}

std::vector<const Tensor*> exponent_tensors(const EwmVariant& ewm) {
  auto mutable_ptrs = exponent_tensors(const_cast<EwmVariant&>(ewm));
  return {mutable_ptrs.begin(), mutable_ptrs.end()};
}

std::vector<std::string> exponent_tensor_names(VariantKind kind) {
  switch (kind) {
    case VariantKind::Standard: return {};
    case VariantKind::Elementwise: return {"W2"};
    case VariantKind::RowShared: return {"w2_row"};
    case VariantKind::ColShared: return {"w2_col"};
    case VariantKind::Bilinear: return {"W3", "W4"};
    case VariantKind::FullMatrix: return {"W5"};
  }
  return {};
}

EwmVariant zero_payload(VariantKind kind, KernelShape kernel) {
  const std::size_t kh = kernel.height, kw = kernel.width, n = kernel.size();
  switch (kind) {
    case VariantKind::Standard: return StandardEwm{};
    case VariantKind::Elementwise: return ElementwiseEwm{Tensor({kh, kw})};
    case VariantKind::RowShared: return RowSharedEwm{Tensor({kh})};
    case VariantKind::ColShared: return ColSharedEwm{Tensor({kw})};
    case VariantKind::Bilinear: return BilinearEwm{Tensor({kh, kh}), Tensor({kw, kw})};
    case VariantKind::FullMatrix: return FullMatrixEwm{Tensor({n, n})};
  }
  throw Error("unreachable variant kind");
}

void check_payload_shape(const EwmVariant& ewm, KernelShape kernel) {
  const EwmVariant reference = zero_payload(kind_of(ewm), kernel);
  const auto have = exponent_tensors(ewm);
  const auto want = exponent_tensors(reference);
  const auto names = exponent_tensor_names(kind_of(ewm));
  for (std::size_t i = 0; i < have.size(); ++i)
    require_shape(*have[i], want[i]->shape(), names[i].c_str());
}

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Identity: return "identity";
  }
  return "unknown";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  if (name == "identity") return Activation::Identity;
  throw FormatError("unknown activation '" + std::string(name) + "'");
}

double activate(Activation a, double pre) {
  switch (a) {
    case Activation::Relu: return pre > 0.0 ? pre : 0.0;
    case Activation::Tanh: return std::tanh(pre);
    case Activation::Identity: return pre;
  }
  return pre;
}

double activation_derivative(Activation a, double pre) {
  switch (a) {
    case Activation::Relu: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: {
      const double t = std::tanh(pre);
      return 1.0 - t * t;
    }
    case Activation::Identity: return 1.0;
  }
  return 1.0;
}

VariantKind LayerParams::variant() const {
  if (channels.empty()) throw ShapeError("layer has no output channels");
  return kind_of(channels.front().ewm);
}

void LayerParams::validate() const {
  if (channels.empty()) throw ShapeError("layer needs at least one output channel");
  if (kernel.height == 0 || kernel.width == 0) throw ShapeError("kernel dimensions must be positive");
  if (stride.time == 0 || stride.channel == 0) throw ShapeError("strides must be at least 1");
  const VariantKind kind = variant();
  for (const ChannelParams& ch : channels) {
    require_shape(ch.w1, {kernel.height, kernel.width}, "W1");
    if (kind_of(ch.ewm) != kind) throw ShapeError("all channels of a layer must use the same EWM variant");
    check_payload_shape(ch.ewm, kernel);
  }
}

Tensor FeatureMap::as_matrix() const {
  return values.reshaped({grid_t(), grid_c() * channels()});
}

double unit_standard(const Tensor& x, const Tensor& w1, double b) {
  require_same_size(x, w1, "unit_standard");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += w1[i] * x[i];
  return acc + b;
}

double unit_elementwise(const Tensor& x, const Tensor& w1, double b, const Tensor& w2, double eps) {
  require_same_size(x, w1, "unit_elementwise");
  require_same_size(x, w2, "unit_elementwise");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += w1[i] * signed_pow(x[i], w2[i], eps);
  return acc + b;
}

double unit_elementwise_explog(const Tensor& x, const Tensor& w1, double b, const Tensor& w2,
                               double eps) {
  require_same_size(x, w1, "unit_elementwise_explog");
  require_same_size(x, w2, "unit_elementwise_explog");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    acc += w1[i] * sign_of(x[i]) * std::exp(w2[i] * safe_log_abs(x[i], eps));
  return acc + b;
}

Tensor expand_shared(const EwmVariant& shared, KernelShape kernel) {
  Tensor out({kernel.height, kernel.width});
  if (const auto* row = std::get_if<RowSharedEwm>(&shared)) {
    require_shape(row->w_row, {kernel.height}, "w2_row");
    for (std::size_t i = 0; i < kernel.height; ++i)
      for (std::size_t j = 0; j < kernel.width; ++j) out(i, j) = row->w_row[i];
  } else if (const auto* col = std::get_if<ColSharedEwm>(&shared)) {
    require_shape(col->w_col, {kernel.width}, "w2_col");
    for (std::size_t i = 0; i < kernel.height; ++i)
      for (std::size_t j = 0; j < kernel.width; ++j) out(i, j) = col->w_col[j];
  } else {
    throw ShapeError("expand_shared needs a row_shared or col_shared payload, got " +
                     std::string(variant_name(kind_of(shared))));
  }
  return out;
}

double unit_row_shared(const Tensor& x, const Tensor& w1, double b, const Tensor& w_row,
                       double eps) {
  require_shape(w1, x.shape(), "W1");
  require_shape(w_row, {x.rows()}, "w2_row");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) acc += w1(i, j) * signed_pow(x(i, j), w_row[i], eps);
  return acc + b;
}

double unit_col_shared(const Tensor& x, const Tensor& w1, double b, const Tensor& w_col,
                       double eps) {
  require_shape(w1, x.shape(), "W1");
  require_shape(w_col, {x.cols()}, "w2_col");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) acc += w1(i, j) * signed_pow(x(i, j), w_col[j], eps);
  return acc + b;
}

double unit_bilinear(const Tensor& x, const Tensor& w1, double b, const Tensor& w3,
                     const Tensor& w4, double eps) {
  const std::size_t kh = x.rows(), kw = x.cols();
  require_shape(w1, x.shape(), "W1");
  require_shape(w3, {kh, kh}, "W3");
  require_shape(w4, {kw, kw}, "W4");
  Tensor log_mag({kh, kw});
  for (std::size_t i = 0; i < x.size(); ++i) log_mag[i] = safe_log_abs(x[i], eps);
  const Tensor e = matmul(matmul(w3, log_mag), w4);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += w1[i] * sign_of(x[i]) * std::exp(e[i]);
  return acc + b;
}

double unit_full(const Tensor& xv, const Tensor& w1, double b, const Tensor& w5, double eps) {
  const std::size_t n = xv.size();
  require_shape(w5, {n, n}, "W5");
  const Tensor w1v = w1.rank() == 2 ? vec(w1) : w1;
  require_same_size(xv, w1v, "unit_full");
  Tensor log_mag({n});
  for (std::size_t i = 0; i < n; ++i) log_mag[i] = safe_log_abs(xv[i], eps);
  const Tensor e = matvec(w5, log_mag);
  double acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) acc += w1v[j] * sign_of(xv[j]) * std::exp(e[j]);
  return acc + b;
}

double unit_forward(const ChannelParams& ch, const Tensor& x, double eps) {
  return std::visit(
      Overloaded{
          [&](const StandardEwm&) { return unit_standard(x, ch.w1, ch.bias); },
          [&](const ElementwiseEwm& e) { return unit_elementwise(x, ch.w1, ch.bias, e.w2, eps); },
          [&](const RowSharedEwm& e) { return unit_row_shared(x, ch.w1, ch.bias, e.w_row, eps); },
          [&](const ColSharedEwm& e) { return unit_col_shared(x, ch.w1, ch.bias, e.w_col, eps); },
          [&](const BilinearEwm& e) { return unit_bilinear(x, ch.w1, ch.bias, e.w3, e.w4, eps); },
          [&](const FullMatrixEwm& e) { return unit_full(vec(x), ch.w1, ch.bias, e.w5, eps); },
      },
      ch.ewm);
}

LayerTrace layer_forward_trace(const Tensor& input, const LayerParams& params, double eps) {
  params.validate();
  LayerTrace trace;
  trace.patches = extract_patches(input, params.kernel, params.stride);
  const std::size_t gt = trace.patches.grid_t, gc = trace.patches.grid_c;
  const std::size_t m_count = params.out_channels();
  trace.pre = Tensor({gt, gc, m_count});
  Tensor out({gt, gc, m_count});
  for (std::size_t t = 0; t < gt; ++t)
    for (std::size_t c = 0; c < gc; ++c) {
      const Tensor& patch = trace.patches.at(t, c);
      for (std::size_t m = 0; m < m_count; ++m) {
        const double pre = unit_forward(params.channels[m], patch, eps);
        trace.pre(t, c, m) = pre;
        out(t, c, m) = activate(params.activation, pre);
      }
    }
  out.require_finite("layer output");
  trace.out.values = std::move(out);
  return trace;
}

FeatureMap layer_forward(const Tensor& input, const LayerParams& params, double eps) {
  return std::move(layer_forward_trace(input, params, eps).out);
}

}  // namespace nlcnn
