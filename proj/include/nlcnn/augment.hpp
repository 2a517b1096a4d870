#pragma once

#include <cstddef>
#include <string_view>
#include <variant>
#include <vector>

#include "nlcnn/numerics.hpp"
#include "nlcnn/rng.hpp"
#include "nlcnn/tensor.hpp"

namespace nlcnn {

// Time-series perturbations on a T x C window (rows are time steps, columns
// sensor channels). Every operation preserves the window's label.

/// Reverses the time axis.
Tensor flip_lr(const Tensor& x);
/// Reverses rows inside consecutive blocks of `block_len` rows; the last block
/// may be shorter. Block order is kept.
Tensor flip_blockwise(const Tensor& x, std::size_t block_len);
/// Reverses both axes (180 degree rotation).
Tensor flip_bidirectional(const Tensor& x);

enum class ExponentGranularity { PerPoint, PerRow, PerChannel };
std::string_view granularity_name(ExponentGranularity g);
ExponentGranularity parse_granularity(std::string_view name);

struct LeftRightFlip {};
struct BlockwiseFlip {
  std::size_t block_len = 4;
};
struct BiDirectionalFlip {};
struct ExponentAugment {
  ExponentGranularity granularity = ExponentGranularity::PerRow;
  double lo = -2.0;
  double hi = 4.0;
};

using AugmentOp = std::variant<LeftRightFlip, BlockwiseFlip, BiDirectionalFlip, ExponentAugment>;

struct AugmentSpec {
  AugmentOp op;
  double probability = 0.5;

  void validate() const;
};

std::string_view augment_op_name(const AugmentOp& op);

/// Draws exponents uniformly from [lo, hi]: T x C values for PerPoint, T for
/// PerRow, C for PerChannel.
Tensor draw_exponents(const Shape& window_shape, const ExponentAugment& spec, SeededRng& rng);
/// Applies signed_pow with exponents laid out as returned by draw_exponents.
Tensor apply_exponents(const Tensor& x, ExponentGranularity granularity, const Tensor& exponents,
                       double eps = kDefaultEps);
/// draw_exponents followed by apply_exponents.
Tensor exp_augment(const Tensor& x, const ExponentAugment& spec, SeededRng& rng);

/// Applies one spec unconditionally.
Tensor apply_op(const Tensor& x, const AugmentOp& op, SeededRng& rng);

/// Applies each spec in order, each independently with its own probability.
Tensor apply_pipeline(const Tensor& x, const std::vector<AugmentSpec>& specs, SeededRng& rng);

}  // namespace nlcnn
