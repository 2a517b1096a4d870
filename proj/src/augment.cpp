#include "nlcnn/augment.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nlcnn/error.hpp"

namespace nlcnn {

Tensor flip_lr(const Tensor& x) {
  const std::size_t t_len = x.rows(), c_len = x.cols();
  Tensor out(x.shape());
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t c = 0; c < c_len; ++c) out(t, c) = x(t_len - 1 - t, c);
  return out;
}

Tensor flip_blockwise(const Tensor& x, std::size_t block_len) {
  if (block_len == 0) throw Error("flip_blockwise: block_len must be at least 1");
  const std::size_t t_len = x.rows(), c_len = x.cols();
  Tensor out(x.shape());
  for (std::size_t start = 0; start < t_len; start += block_len) {
    const std::size_t end = std::min(start + block_len, t_len);
    for (std::size_t t = start; t < end; ++t)
      for (std::size_t c = 0; c < c_len; ++c) out(t, c) = x(start + end - 1 - t, c);
  }
  return out;
}

Tensor flip_bidirectional(const Tensor& x) {
  const std::size_t t_len = x.rows(), c_len = x.cols();
  Tensor out(x.shape());
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t c = 0; c < c_len; ++c) out(t, c) = x(t_len - 1 - t, c_len - 1 - c);
  return out;
}

std::string_view granularity_name(ExponentGranularity g) {
  switch (g) {
    case ExponentGranularity::PerPoint: return "per_point";
    case ExponentGranularity::PerRow: return "per_row";
    case ExponentGranularity::PerChannel: return "per_channel";
  }
  return "unknown";
}

ExponentGranularity parse_granularity(std::string_view name) {
  for (auto g : {ExponentGranularity::PerPoint, ExponentGranularity::PerRow,
                 ExponentGranularity::PerChannel})
    if (granularity_name(g) == name) return g;
  throw FormatError("unknown exponent granularity '" + std::string(name) + "'");
}

void AugmentSpec::validate() const {
  if (!(probability >= 0.0 && probability <= 1.0))
    throw Error("augment probability must lie in [0, 1]");
  if (const auto* b = std::get_if<BlockwiseFlip>(&op); b && b->block_len == 0)
    throw Error("blockwise flip needs block_len >= 1");
  if (const auto* e = std::get_if<ExponentAugment>(&op); e && !(e->lo <= e->hi))
    throw Error("exponent augmentation needs lo <= hi");
}

std::string_view augment_op_name(const AugmentOp& op) {
  switch (op.index()) {
    case 0: return "flip_lr";
    case 1: return "flip_blockwise";
    case 2: return "flip_bidirectional";
    default: return "exp_augment";
  }
}

Tensor draw_exponents(const Shape& window_shape, const ExponentAugment& spec, SeededRng& rng) {
  if (window_shape.size() != 2) throw ShapeError("augmentation expects a T x C window");
  if (!(spec.lo <= spec.hi)) throw Error("exponent augmentation needs lo <= hi");
  std::size_t count = 0;
  switch (spec.granularity) {
    case ExponentGranularity::PerPoint: count = window_shape[0] * window_shape[1]; break;
    case ExponentGranularity::PerRow: count = window_shape[0]; break;
    case ExponentGranularity::PerChannel: count = window_shape[1]; break;
  }
  Tensor exps({count});
  for (double& v : exps.values()) v = rng.uniform(spec.lo, spec.hi);
  return exps;
}

Tensor apply_exponents(const Tensor& x, ExponentGranularity granularity, const Tensor& exponents,
                       double eps) {
  const std::size_t t_len = x.rows(), c_len = x.cols();
  const std::size_t expected = granularity == ExponentGranularity::PerPoint ? t_len * c_len
                               : granularity == ExponentGranularity::PerRow ? t_len
                                                                            : c_len;
  if (exponents.size() != expected)
    throw ShapeError("apply_exponents: expected " + std::to_string(expected) + " exponents, got " +
                     std::to_string(exponents.size()));
  Tensor out(x.shape());
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t c = 0; c < c_len; ++c) {
      const double w = granularity == ExponentGranularity::PerPoint ? exponents[t * c_len + c]
                       : granularity == ExponentGranularity::PerRow ? exponents[t]
                                                                    : exponents[c];
      out(t, c) = signed_pow(x(t, c), w, eps);
    }
  out.require_finite("exponent augmentation");
  return out;
}

Tensor exp_augment(const Tensor& x, const ExponentAugment& spec, SeededRng& rng) {
  return apply_exponents(x, spec.granularity, draw_exponents(x.shape(), spec, rng));
}

Tensor apply_op(const Tensor& x, const AugmentOp& op, SeededRng& rng) {
  switch (op.index()) {
    case 0: return flip_lr(x);
    case 1: return flip_blockwise(x, std::get<BlockwiseFlip>(op).block_len);
    case 2: return flip_bidirectional(x);
    default: return exp_augment(x, std::get<ExponentAugment>(op), rng);
  }
}

Tensor apply_pipeline(const Tensor& x, const std::vector<AugmentSpec>& specs, SeededRng& rng) {
  Tensor out = x;
  for (const AugmentSpec& spec : specs) {
    spec.validate();
    // The coin is drawn even when p is 0 or 1 so the stream layout does not depend on p.
    if (rng.bernoulli(spec.probability)) out = apply_op(out, spec.op, rng);
  }
  return out;
}

}  // namespace nlcnn
