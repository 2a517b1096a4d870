#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nlcnn/nlconv.hpp"
#include "nlcnn/rng.hpp"

namespace nlcnn {

/// Gradient of a scalar with respect to one channel's parameters.
/// `dewm` has the same alternative and shapes as the channel's payload.
struct ChannelGrad {
  Tensor dw1;
  double dbias = 0.0;
  EwmVariant dewm;

  static ChannelGrad zeros_like(const ChannelParams& ch, KernelShape kernel);
  void add(const ChannelGrad& other);
};

struct UnitGrad {
  ChannelGrad params;
  Tensor dx;  ///< k_h x k_w
};

/// Backward pass of one unit scaled by `upstream` (dL/dy for this unit's
/// pre-activation output).
///
/// Inside the clamp region |x| < eps the derivative with respect to x is 0;
/// exponent gradients use log(max(|x|, eps)) everywhere.
UnitGrad unit_backward(const ChannelParams& ch, const Tensor& x, double upstream,
                       double eps = kDefaultEps);

struct LayerGrad {
  std::vector<ChannelGrad> channels;
  Tensor dinput;  ///< same shape as the layer input
};

/// Backward pass of a whole layer; `dout` is dL/d(output) with shape grid_t x grid_c x M.
LayerGrad layer_backward(const Tensor& input, const LayerParams& params, const LayerTrace& trace,
                         const Tensor& dout, double eps = kDefaultEps);

/// Central differences (f(θ + h e_i) - f(θ - h e_i)) / 2h for every coordinate.
/// Throws NumericError when f returns a non-finite value.
Tensor finite_diff(const std::function<double(const Tensor&)>& f, const Tensor& theta,
                   double h = 1e-5);

/// Same differences for a function evaluated in extended precision; the
/// quotient is formed before rounding to double.
Tensor finite_diff_extended(const std::function<long double(const Tensor&)>& f, const Tensor& theta,
                            double h = 1e-5);

/// Layer output (grid_t x grid_c x M, row-major) recomputed in long double
/// straight from the unit formulas. Shares no arithmetic with layer_forward.
std::vector<long double> layer_forward_extended(const Tensor& input, const LayerParams& params,
                                                double eps = kDefaultEps);

/// |a - n| / max(|a|, |n|, 1e-8).
double relative_error(double analytic, double numeric);

/// Scalar loss on a layer output together with its gradient.
struct ScalarReduction {
  std::function<double(const Tensor&)> value;
  std::function<Tensor(const Tensor&)> gradient;
  /// Optional value on an extended-precision output; grad_check uses it when set.
  std::function<long double(std::span<const long double>)> extended_value;

  /// L = sum_k weights_k * out_k.
  static ScalarReduction weighted_sum(Tensor weights);
  /// L = 0.5 * sum_k out_k^2.
  static ScalarReduction half_squared_norm();
};

struct GroupCheck {
  std::string group;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
  std::string argmax;  ///< e.g. "ch0[3]" or "[5]" for the input
  double analytic = 0.0;
  double numeric = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  double tolerance = 0.0;
  std::vector<GroupCheck> groups;

  bool pass() const;
  const GroupCheck* find(const std::string& group) const;
  /// Fixed-width text table, one line per parameter group.
  std::string to_table() const;
};

/// Compares layer_backward against central differences for W1, b, every
/// exponent tensor, and the input. The numeric side runs through
/// layer_forward_extended when the loss provides extended_value, so that the
/// oracle's own rounding stays well below the tolerance. Failures are
/// reported, never thrown.
GradCheckReport grad_check(const LayerParams& layer, const Tensor& input,
                           const ScalarReduction& loss, double tol, double h = 1e-5,
                           double eps = kDefaultEps);

/// Input whose entries have a random sign and magnitude uniform in [lo, hi].
Tensor random_signed_input(const Shape& shape, double lo, double hi, SeededRng& rng);

/// Layer with W1 in [-1, 1], biases in [-0.5, 0.5] and exponent entries in
/// [-0.5, 1.5], the ranges used by the gradient-check suite.
LayerParams random_check_layer(VariantKind kind, KernelShape kernel, std::size_t channels,
                               Activation activation, SeededRng& rng);

struct GradSuiteCase {
  VariantKind kind = VariantKind::Standard;
  KernelShape kernel;
  std::uint64_t seed = 0;
  GradCheckReport report;
};

/// One grad_check per (variant, kernel, seed): a 2-channel identity-activation layer on a
/// (k_h + 2) x (k_w + 1) input with |x| in [0.1, 3], loss a random weighted
/// sum of the outputs.
std::vector<GradSuiteCase> grad_check_suite(const std::vector<VariantKind>& kinds,
                                            const std::vector<KernelShape>& kernels,
                                            std::size_t seeds, std::uint64_t base_seed, double tol,
                                            double h = 1e-5);

}  // namespace nlcnn
