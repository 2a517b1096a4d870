#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "nlcnn/numerics.hpp"
#include "nlcnn/tensor.hpp"

namespace nlcnn {

/// Exponent structure attached to one output channel.
enum class VariantKind { Standard, Elementwise, RowShared, ColShared, Bilinear, FullMatrix };

/// Plain linear filter, no exponents.
struct StandardEwm {};
/// One exponent per receptive-field element, shape k_h x k_w.
struct ElementwiseEwm {
  Tensor w2;
};
/// One exponent per time step (row), shape k_h.
struct RowSharedEwm {
  Tensor w_row;
};
/// One exponent per sensor channel (column), shape k_w.
struct ColSharedEwm {
  Tensor w_col;
};
/// Log-domain mixing exp(W3 log|X| W4), W3 is k_h x k_h and W4 is k_w x k_w.
struct BilinearEwm {
  Tensor w3;
  Tensor w4;
};
/// Log-domain mixing exp(W5 log|vec X|), W5 is n x n with n = k_h * k_w.
struct FullMatrixEwm {
  Tensor w5;
};

using EwmVariant =
    std::variant<StandardEwm, ElementwiseEwm, RowSharedEwm, ColSharedEwm, BilinearEwm, FullMatrixEwm>;

VariantKind kind_of(const EwmVariant& ewm);
std::string_view variant_name(VariantKind kind);
/// Accepts the lower-case names used by the CLI ("standard", "elementwise",
/// "row_shared", "col_shared", "bilinear", "full_matrix").
VariantKind parse_variant(std::string_view name);
const std::vector<VariantKind>& all_variants();
/// Variants whose neutral exponent payload contains zeros (identity matrices).
bool is_matrix_variant(VariantKind kind);

/// Trainable exponent count for one channel.
std::size_t exponent_count(VariantKind kind, KernelShape kernel);

/// The exponent tensors of a payload in a fixed order (empty for Standard).
std::vector<Tensor*> exponent_tensors(EwmVariant& ewm);
std::vector<const Tensor*> exponent_tensors(const EwmVariant& ewm);
/// Names matching exponent_tensors, e.g. {"W3", "W4"}.
std::vector<std::string> exponent_tensor_names(VariantKind kind);
/// Zero-filled payload of the given kind, shaped for `kernel`.
EwmVariant zero_payload(VariantKind kind, KernelShape kernel);

/// Throws ShapeError unless every payload tensor matches `kernel`.
void check_payload_shape(const EwmVariant& ewm, KernelShape kernel);

enum class Activation { Relu, Tanh, Identity };
std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);
double activate(Activation a, double pre);
/// Derivative of the activation at `pre`; relu'(0) is taken as 0.
double activation_derivative(Activation a, double pre);

struct ChannelParams {
  Tensor w1;  ///< k_h x k_w linear weights
  double bias = 0.0;
  EwmVariant ewm;
};

/// One convolutional layer: M output channels sharing kernel geometry.
struct LayerParams {
  KernelShape kernel;
  Stride stride;
  Activation activation = Activation::Identity;
  std::vector<ChannelParams> channels;

  std::size_t out_channels() const { return channels.size(); }
  VariantKind variant() const;
  /// Checks channel count, W1 shapes, payload shapes, and that every channel
  /// uses the same variant.
  void validate() const;
};

/// Layer output laid out as grid_t x grid_c x M.
struct FeatureMap {
  Tensor values;

  std::size_t grid_t() const { return values.dim(0); }
  std::size_t grid_c() const { return values.dim(1); }
  std::size_t channels() const { return values.dim(2); }
  /// grid_t x (grid_c * M) matrix, column index c * M + m. This is the input
  /// layout seen by a following layer.
  Tensor as_matrix() const;
};

// Single-unit evaluators. `x` is one receptive field (k_h x k_w) unless noted.

double unit_standard(const Tensor& x, const Tensor& w1, double b);
double unit_elementwise(const Tensor& x, const Tensor& w1, double b, const Tensor& w2,
                        double eps = kDefaultEps);
/// Same value as unit_elementwise, evaluated as sign * exp(w2 * log|x|).
double unit_elementwise_explog(const Tensor& x, const Tensor& w1, double b, const Tensor& w2,
                               double eps = kDefaultEps);
/// Expands a shared exponent vector to the full k_h x k_w exponent matrix.
Tensor expand_shared(const EwmVariant& shared, KernelShape kernel);
double unit_row_shared(const Tensor& x, const Tensor& w1, double b, const Tensor& w_row,
                       double eps = kDefaultEps);
double unit_col_shared(const Tensor& x, const Tensor& w1, double b, const Tensor& w_col,
                       double eps = kDefaultEps);
double unit_bilinear(const Tensor& x, const Tensor& w1, double b, const Tensor& w3,
                     const Tensor& w4, double eps = kDefaultEps);
/// `xv` is vec(X) (column-major); `w1` may be given as a matrix or as vec(W1).
double unit_full(const Tensor& xv, const Tensor& w1, double b, const Tensor& w5,
                 double eps = kDefaultEps);

/// Evaluates one channel on one receptive field, dispatching on the payload.
double unit_forward(const ChannelParams& channel, const Tensor& x, double eps = kDefaultEps);

/// Everything the backward pass needs from a forward evaluation.
struct LayerTrace {
  PatchGrid patches;
  Tensor pre;  ///< pre-activation, grid_t x grid_c x M
  FeatureMap out;
};

FeatureMap layer_forward(const Tensor& input, const LayerParams& params, double eps = kDefaultEps);
LayerTrace layer_forward_trace(const Tensor& input, const LayerParams& params,
                               double eps = kDefaultEps);

}  // namespace nlcnn
