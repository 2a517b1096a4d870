#include "nlcnn/gradients.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <sstream>

#include "nlcnn/error.hpp"

namespace nlcnn {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// d/dx of log|x| is 1/x; zero where the magnitude is clamped.
double dlog_dx(double x, double eps) { return std::abs(x) >= eps ? 1.0 / x : 0.0; }

struct ElementwiseParts {
  Tensor dw1;
  Tensor dw2;
  Tensor dx;
};

ElementwiseParts elementwise_backward(const Tensor& x, const Tensor& w1, const Tensor& w2,
                                      double upstream, double eps) {
  ElementwiseParts g{Tensor(x.shape()), Tensor(x.shape()), Tensor(x.shape())};
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double mag = std::max(std::abs(x[i]), eps);
    const double p = signed_pow(x[i], w2[i], eps);
    g.dw1[i] = upstream * p;
    g.dw2[i] = upstream * w1[i] * p * std::log(mag);
    g.dx[i] = std::abs(x[i]) >= eps ? upstream * w1[i] * w2[i] * std::pow(mag, w2[i] - 1.0) : 0.0;
  }
  return g;
}

}  // namespace

ChannelGrad ChannelGrad::zeros_like(const ChannelParams& ch, KernelShape kernel) {
  return ChannelGrad{Tensor({kernel.height, kernel.width}), 0.0, zero_payload(kind_of(ch.ewm), kernel)};
}

void ChannelGrad::add(const ChannelGrad& other) {
  for (std::size_t i = 0; i < dw1.size(); ++i) dw1[i] += other.dw1[i];
  dbias += other.dbias;
  auto mine = exponent_tensors(dewm);
  auto theirs = exponent_tensors(other.dewm);
  if (mine.size() != theirs.size()) throw ShapeError("ChannelGrad::add: payload kinds differ");
  for (std::size_t t = 0; t < mine.size(); ++t)
    for (std::size_t i = 0; i < mine[t]->size(); ++i) (*mine[t])[i] += (*theirs[t])[i];
}

UnitGrad unit_backward(const ChannelParams& ch, const Tensor& x, double upstream, double eps) {
  if (ch.w1.shape() != x.shape())
    throw ShapeError("unit_backward: W1 " + shape_string(ch.w1.shape()) + " vs patch " +
                     shape_string(x.shape()));
  const std::size_t kh = x.rows(), kw = x.cols();
  const KernelShape kernel{kh, kw};
  check_payload_shape(ch.ewm, kernel);

  UnitGrad g;
  g.params.dbias = upstream;
  std::visit(
      Overloaded{
          [&](const StandardEwm&) {
            g.params.dw1 = Tensor(x.shape());
            g.dx = Tensor(x.shape());
            for (std::size_t i = 0; i < x.size(); ++i) {
              g.params.dw1[i] = upstream * x[i];
              g.dx[i] = upstream * ch.w1[i];
            }
            g.params.dewm = StandardEwm{};
          },
          [&](const ElementwiseEwm& e) {
            auto parts = elementwise_backward(x, ch.w1, e.w2, upstream, eps);
            g.params.dw1 = std::move(parts.dw1);
            g.dx = std::move(parts.dx);
            g.params.dewm = ElementwiseEwm{std::move(parts.dw2)};
          },
          [&](const RowSharedEwm& e) {
            auto parts = elementwise_backward(x, ch.w1, expand_shared(e, kernel), upstream, eps);
            Tensor dw({kh});
            for (std::size_t i = 0; i < kh; ++i)
              for (std::size_t j = 0; j < kw; ++j) dw[i] += parts.dw2(i, j);
            g.params.dw1 = std::move(parts.dw1);
            g.dx = std::move(parts.dx);
            g.params.dewm = RowSharedEwm{std::move(dw)};
          },
          [&](const ColSharedEwm& e) {
            auto parts = elementwise_backward(x, ch.w1, expand_shared(e, kernel), upstream, eps);
            Tensor dw({kw});
            for (std::size_t i = 0; i < kh; ++i)
              for (std::size_t j = 0; j < kw; ++j) dw[j] += parts.dw2(i, j);
            g.params.dw1 = std::move(parts.dw1);
            g.dx = std::move(parts.dx);
            g.params.dewm = ColSharedEwm{std::move(dw)};
          },
          [&](const BilinearEwm& e) {
            // y = sum W1 .* S .* exp(E) + b with E = W3 L W4, L = log|X|.
            Tensor log_mag(x.shape());
            for (std::size_t i = 0; i < x.size(); ++i) log_mag[i] = safe_log_abs(x[i], eps);
            const Tensor left = matmul(e.w3, log_mag);   // W3 L
            const Tensor right = matmul(log_mag, e.w4);  // L W4
            const Tensor exps = matmul(left, e.w4);
            Tensor z(x.shape()), dexp(x.shape());
            for (std::size_t i = 0; i < x.size(); ++i) {
              z[i] = sign_of(x[i]) * std::exp(exps[i]);
              dexp[i] = upstream * ch.w1[i] * z[i];
            }
            g.params.dw1 = Tensor(x.shape());
            for (std::size_t i = 0; i < x.size(); ++i) g.params.dw1[i] = upstream * z[i];
            Tensor dw3 = matmul(dexp, transpose(right));
            Tensor dw4 = matmul(transpose(left), dexp);
            const Tensor dlog = matmul(matmul(transpose(e.w3), dexp), transpose(e.w4));
            g.dx = Tensor(x.shape());
            for (std::size_t i = 0; i < x.size(); ++i) g.dx[i] = dlog[i] * dlog_dx(x[i], eps);
            g.params.dewm = BilinearEwm{std::move(dw3), std::move(dw4)};
          },
          [&](const FullMatrixEwm& e) {
            const std::size_t n = x.size();
            const Tensor xv = vec(x);
            const Tensor w1v = vec(ch.w1);
            Tensor log_mag({n});
            for (std::size_t i = 0; i < n; ++i) log_mag[i] = safe_log_abs(xv[i], eps);
            const Tensor exps = matvec(e.w5, log_mag);
            Tensor zv({n}), dexp({n});
            for (std::size_t j = 0; j < n; ++j) {
              zv[j] = sign_of(xv[j]) * std::exp(exps[j]);
              dexp[j] = upstream * w1v[j] * zv[j];
            }
            Tensor dw5({n, n});
            for (std::size_t j = 0; j < n; ++j)
              for (std::size_t i = 0; i < n; ++i) dw5(j, i) = dexp[j] * log_mag[i];
            const Tensor dlog = matvec(transpose(e.w5), dexp);
            Tensor dxv({n}), dw1v({n});
            for (std::size_t i = 0; i < n; ++i) {
              dxv[i] = dlog[i] * dlog_dx(xv[i], eps);
              dw1v[i] = upstream * zv[i];
            }
            g.params.dw1 = unvec(dw1v, kh, kw);
            g.dx = unvec(dxv, kh, kw);
            g.params.dewm = FullMatrixEwm{std::move(dw5)};
          },
      },
      ch.ewm);
  return g;
}

LayerGrad layer_backward(const Tensor& input, const LayerParams& params, const LayerTrace& trace,
                         const Tensor& dout, double eps) {
  if (dout.shape() != trace.pre.shape())
    throw ShapeError("layer_backward: upstream gradient " + shape_string(dout.shape()) +
                     " does not match output " + shape_string(trace.pre.shape()));
  LayerGrad grad;
  grad.dinput = Tensor(input.shape());
  for (const ChannelParams& ch : params.channels)
    grad.channels.push_back(ChannelGrad::zeros_like(ch, params.kernel));

  const std::size_t gt = trace.patches.grid_t, gc = trace.patches.grid_c;
  for (std::size_t t = 0; t < gt; ++t)
    for (std::size_t c = 0; c < gc; ++c) {
      const Tensor& patch = trace.patches.at(t, c);
      const std::size_t t0 = t * params.stride.time, c0 = c * params.stride.channel;
      for (std::size_t m = 0; m < params.out_channels(); ++m) {
        const double upstream =
            dout(t, c, m) * activation_derivative(params.activation, trace.pre(t, c, m));
        if (upstream == 0.0) continue;
        const UnitGrad ug = unit_backward(params.channels[m], patch, upstream, eps);
        grad.channels[m].add(ug.params);
        for (std::size_t i = 0; i < params.kernel.height; ++i)
          for (std::size_t j = 0; j < params.kernel.width; ++j)
            grad.dinput(t0 + i, c0 + j) += ug.dx(i, j);
      }
    }
  return grad;
}

Tensor finite_diff(const std::function<double(const Tensor&)>& f, const Tensor& theta, double h) {
  if (!(h > 0.0)) throw Error("finite_diff step must be positive");
  Tensor grad(theta.shape());
  Tensor probe = theta;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    probe[i] = theta[i] + h;
    const double up = f(probe);
    probe[i] = theta[i] - h;
    const double down = f(probe);
    probe[i] = theta[i];
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("finite_diff: non-finite function value at coordinate " + std::to_string(i));
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

Tensor finite_diff_extended(const std::function<long double(const Tensor&)>& f, const Tensor& theta,
                            double h) {
  if (!(h > 0.0)) throw Error("finite_diff step must be positive");
  Tensor grad(theta.shape());
  Tensor probe = theta;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    probe[i] = theta[i] + h;
    const long double up = f(probe);
    probe[i] = theta[i] - h;
    const long double down = f(probe);
    probe[i] = theta[i];
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("finite_diff: non-finite function value at coordinate " + std::to_string(i));
    grad[i] = static_cast<double>((up - down) / (2.0L * h));
  }
  return grad;
}

namespace {

using Ld = long double;

Ld log_abs_ld(double x, double eps) { return std::log(std::max(std::abs(static_cast<Ld>(x)), static_cast<Ld>(eps))); }
Ld sign_ld(double x) { return x < 0.0 ? -1.0L : 1.0L; }

Ld activate_ld(Activation a, Ld pre) {
  switch (a) {
    case Activation::Relu: return pre > 0.0L ? pre : 0.0L;
    case Activation::Tanh: return std::tanh(pre);
    case Activation::Identity: return pre;
  }
  return pre;
}

// Pre-activation of one unit; x is the k_h x k_w patch.
Ld unit_extended(const ChannelParams& ch, const Tensor& x, KernelShape k, double eps) {
  const std::size_t kh = k.height, kw = k.width;
  Ld y = ch.bias;
  const auto powered = [&](const Tensor& w2) {
    for (std::size_t i = 0; i < x.size(); ++i)
      y += ch.w1[i] * sign_ld(x[i]) * std::exp(w2[i] * log_abs_ld(x[i], eps));
  };
  std::visit(Overloaded{
                 [&](const StandardEwm&) {
                   for (std::size_t i = 0; i < x.size(); ++i) y += static_cast<Ld>(ch.w1[i]) * x[i];
                 },
                 [&](const ElementwiseEwm& e) { powered(e.w2); },
                 [&](const RowSharedEwm&) { powered(expand_shared(ch.ewm, k)); },
                 [&](const ColSharedEwm&) { powered(expand_shared(ch.ewm, k)); },
                 [&](const BilinearEwm& e) {
                   std::vector<Ld> lw(kh * kw, 0.0L);  // L * W4
                   for (std::size_t r = 0; r < kh; ++r)
                     for (std::size_t c = 0; c < kw; ++c)
                       for (std::size_t q = 0; q < kw; ++q)
                         lw[r * kw + c] += log_abs_ld(x(r, q), eps) * e.w4(q, c);
                   for (std::size_t r = 0; r < kh; ++r)
                     for (std::size_t c = 0; c < kw; ++c) {
                       Ld m = 0.0L;
                       for (std::size_t q = 0; q < kh; ++q) m += e.w3(r, q) * lw[q * kw + c];
                       y += ch.w1(r, c) * sign_ld(x(r, c)) * std::exp(m);
                     }
                 },
                 [&](const FullMatrixEwm& e) {
                   // Column-major flattening: entry j is x(j % kh, j / kh).
                   const std::size_t n = kh * kw;
                   for (std::size_t j = 0; j < n; ++j) {
                     Ld m = 0.0L;
                     for (std::size_t i = 0; i < n; ++i) m += e.w5(j, i) * log_abs_ld(x(i % kh, i / kh), eps);
                     y += ch.w1(j % kh, j / kh) * sign_ld(x(j % kh, j / kh)) * std::exp(m);
                   }
                 },
             },
             ch.ewm);
  return y;
}

}  // namespace

std::vector<long double> layer_forward_extended(const Tensor& input, const LayerParams& params,
                                                double eps) {
  params.validate();
  const PatchGrid grid = extract_patches(input, params.kernel, params.stride);
  const std::size_t m_count = params.out_channels();
  std::vector<long double> out(grid.grid_t * grid.grid_c * m_count);
  for (std::size_t t = 0; t < grid.grid_t; ++t)
    for (std::size_t c = 0; c < grid.grid_c; ++c)
      for (std::size_t m = 0; m < m_count; ++m)
        out[(t * grid.grid_c + c) * m_count + m] = activate_ld(
            params.activation, unit_extended(params.channels[m], grid.at(t, c), params.kernel, eps));
  return out;
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

ScalarReduction ScalarReduction::weighted_sum(Tensor weights) {
  auto w = std::make_shared<Tensor>(std::move(weights));
  return ScalarReduction{
      [w](const Tensor& out) {
        if (out.size() != w->size()) throw ShapeError("weighted_sum: output size mismatch");
        double acc = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) acc += (*w)[i] * out[i];
        return acc;
      },
      [w](const Tensor& out) { return w->reshaped(out.shape()); },
      [w](std::span<const long double> out) {
        if (out.size() != w->size()) throw ShapeError("weighted_sum: output size mismatch");
        long double acc = 0.0L;
        for (std::size_t i = 0; i < out.size(); ++i) acc += (*w)[i] * out[i];
        return acc;
      }};
}

ScalarReduction ScalarReduction::half_squared_norm() {
  return ScalarReduction{[](const Tensor& out) {
                           double acc = 0.0;
                           for (double v : out.values()) acc += v * v;
                           return 0.5 * acc;
                         },
                         [](const Tensor& out) { return out; },
                         [](std::span<const long double> out) {
                           long double acc = 0.0L;
                           for (long double v : out) acc += v * v;
                           return 0.5L * acc;
                         }};
}

bool GradCheckReport::pass() const {
  return std::all_of(groups.begin(), groups.end(), [](const GroupCheck& g) { return g.pass; });
}

const GroupCheck* GradCheckReport::find(const std::string& group) const {
  for (const GroupCheck& g : groups)
    if (g.group == group) return &g;
  return nullptr;
}

std::string GradCheckReport::to_table() const {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-8s %6s %12s %-10s %16s %16s  %s\n", "group", "coords",
                "max_rel_err", "argmax", "analytic", "numeric", "status");
  os << line;
  for (const GroupCheck& g : groups) {
    std::snprintf(line, sizeof line, "%-8s %6zu %12.3e %-10s %16.9e %16.9e  %s\n", g.group.c_str(),
                  g.coordinates, g.max_rel_error, g.argmax.c_str(), g.analytic, g.numeric,
                  g.pass ? "PASS" : "FAIL");
    os << line;
  }
  std::snprintf(line, sizeof line, "tolerance %.3e: %s\n", tolerance, pass() ? "PASS" : "FAIL");
  os << line;
  return os.str();
}

namespace {

void record(GroupCheck& g, double analytic, double numeric, const std::string& where, double tol) {
  ++g.coordinates;
  const double err = relative_error(analytic, numeric);
  if (g.coordinates == 1 || err > g.max_rel_error) {
    g.max_rel_error = err;
    g.argmax = where;
    g.analytic = analytic;
    g.numeric = numeric;
  }
  g.pass = g.max_rel_error <= tol;
}

}  // namespace

GradCheckReport grad_check(const LayerParams& layer, const Tensor& input,
                           const ScalarReduction& loss, double tol, double h, double eps) {
  GradCheckReport report;
  report.tolerance = tol;

  const LayerTrace trace = layer_forward_trace(input, layer, eps);
  const Tensor dout = loss.gradient(trace.out.values);
  const LayerGrad analytic = layer_backward(input, layer, trace, dout, eps);

  auto loss_of = [&](const LayerParams& p, const Tensor& x) -> long double {
    if (loss.extended_value) return loss.extended_value(layer_forward_extended(x, p, eps));
    return loss.value(layer_forward(x, p, eps).values);
  };

  auto named = [](std::string name) {
    GroupCheck g;
    g.group = std::move(name);
    return g;
  };
  GroupCheck w1 = named("W1"), bias = named("b");
  std::vector<GroupCheck> exps;
  for (const std::string& name : exponent_tensor_names(layer.variant())) exps.push_back(named(name));

  for (std::size_t m = 0; m < layer.out_channels(); ++m) {
    const std::string ch = "ch" + std::to_string(m);

    const Tensor dw1 = finite_diff_extended(
        [&](const Tensor& w) {
          LayerParams p = layer;
          p.channels[m].w1 = w;
          return loss_of(p, input);
        },
        layer.channels[m].w1, h);
    for (std::size_t i = 0; i < dw1.size(); ++i)
      record(w1, analytic.channels[m].dw1[i], dw1[i], ch + "[" + std::to_string(i) + "]", tol);

    const Tensor db = finite_diff_extended(
        [&](const Tensor& b) {
          LayerParams p = layer;
          p.channels[m].bias = b[0];
          return loss_of(p, input);
        },
        Tensor::vector({layer.channels[m].bias}), h);
    record(bias, analytic.channels[m].dbias, db[0], ch, tol);

    const auto params = exponent_tensors(layer.channels[m].ewm);
    const auto grads = exponent_tensors(analytic.channels[m].dewm);
    for (std::size_t t = 0; t < params.size(); ++t) {
      const Tensor numeric = finite_diff_extended(
          [&](const Tensor& w) {
            LayerParams p = layer;
            *exponent_tensors(p.channels[m].ewm)[t] = w;
            return loss_of(p, input);
          },
          *params[t], h);
      for (std::size_t i = 0; i < numeric.size(); ++i)
        record(exps[t], (*grads[t])[i], numeric[i], ch + "[" + std::to_string(i) + "]", tol);
    }
  }

  GroupCheck in = named("input");
  const Tensor dx = finite_diff_extended([&](const Tensor& x) { return loss_of(layer, x); }, input, h);
  for (std::size_t i = 0; i < dx.size(); ++i)
    record(in, analytic.dinput[i], dx[i], "[" + std::to_string(i) + "]", tol);

  report.groups.push_back(std::move(w1));
  report.groups.push_back(std::move(bias));
  for (GroupCheck& g : exps) report.groups.push_back(std::move(g));
  report.groups.push_back(std::move(in));
  return report;
}

Tensor random_signed_input(const Shape& shape, double lo, double hi, SeededRng& rng) {
  Tensor x(shape);
  for (double& v : x.values()) {
    const double mag = rng.uniform(lo, hi);
    v = rng.bernoulli(0.5) ? mag : -mag;
  }
  return x;
}

LayerParams random_check_layer(VariantKind kind, KernelShape kernel, std::size_t channels,
                               Activation activation, SeededRng& rng) {
  LayerParams p;
  p.kernel = kernel;
  p.activation = activation;
  for (std::size_t m = 0; m < channels; ++m) {
    ChannelParams ch{Tensor({kernel.height, kernel.width}), rng.uniform(-0.5, 0.5),
                     zero_payload(kind, kernel)};
    for (double& v : ch.w1.values()) v = rng.uniform(-1.0, 1.0);
    for (Tensor* t : exponent_tensors(ch.ewm))
      for (double& v : t->values()) v = rng.uniform(-0.5, 1.5);
    p.channels.push_back(std::move(ch));
  }
  return p;
}

std::vector<GradSuiteCase> grad_check_suite(const std::vector<VariantKind>& kinds,
                                            const std::vector<KernelShape>& kernels,
                                            std::size_t seeds, std::uint64_t base_seed, double tol,
                                            double h) {
  std::vector<GradSuiteCase> cases;
  for (VariantKind kind : kinds)
    for (KernelShape kernel : kernels)
      for (std::size_t s = 0; s < seeds; ++s) {
        const std::uint64_t seed = base_seed + s;
        SeededRng rng = SeededRng(seed).derive(static_cast<std::uint64_t>(kind) * 1000 +
                                               kernel.height * 10 + kernel.width);
        const LayerParams layer = random_check_layer(kind, kernel, 2, Activation::Identity, rng);
        const Tensor input =
            random_signed_input({kernel.height + 2, kernel.width + 1}, 0.1, 3.0, rng);
        const Shape out_shape{3, 2, 2};
        Tensor weights(out_shape);
        for (double& v : weights.values()) v = rng.uniform(-1.0, 1.0);
        cases.push_back({kind, kernel, seed,
                         grad_check(layer, input, ScalarReduction::weighted_sum(weights), tol, h)});
      }
  return cases;
}

}  // namespace nlcnn
