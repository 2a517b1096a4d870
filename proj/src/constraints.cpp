#include "nlcnn/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nlcnn/error.hpp"

namespace nlcnn {

std::string_view constraint_mode_name(ConstraintMode mode) {
  switch (mode) {
    case ConstraintMode::ClipParams: return "clip_params";
    case ConstraintMode::ProjectAfterStep: return "project_after_step";
    case ConstraintMode::Reparam: return "reparam";
  }
  return "unknown";
}

ConstraintMode parse_constraint_mode(std::string_view name) {
  for (auto m : {ConstraintMode::ClipParams, ConstraintMode::ProjectAfterStep, ConstraintMode::Reparam})
    if (constraint_mode_name(m) == name) return m;
  throw FormatError("unknown constraint mode '" + std::string(name) + "'");
}

std::string_view reparam_kind_name(ReparamKind kind) {
  switch (kind) {
    case ReparamKind::ScaledSigmoid: return "scaled_sigmoid";
    case ReparamKind::ScaledTanh: return "scaled_tanh";
    case ReparamKind::HardSigmoidClip: return "hard_sigmoid_clip";
  }
  return "unknown";
}

ReparamKind parse_reparam_kind(std::string_view name) {
  for (auto k : {ReparamKind::ScaledSigmoid, ReparamKind::ScaledTanh, ReparamKind::HardSigmoidClip})
    if (reparam_kind_name(k) == name) return k;
  throw FormatError("unknown reparameterization kind '" + std::string(name) + "'");
}

void ConstraintPolicy::validate(VariantKind variant) const {
  if (!std::isfinite(v_min) || !std::isfinite(v_max))
    throw Error("constraint bounds must be finite");
  if (!(v_min < 1.0 && 1.0 < v_max))
    throw Error("constraint bounds must satisfy v_min < 1 < v_max, got [" + std::to_string(v_min) +
                ", " + std::to_string(v_max) + "]");
  if (is_matrix_variant(variant) && !(v_min < 0.0))
    throw Error(std::string(variant_name(variant)) +
                " layers are initialized with identity matrices and need v_min < 0");
}

double ConstraintPolicy::clamp(double v) const { return std::min(std::max(v, v_min), v_max); }

EwmVariant clip_params(const EwmVariant& payload, const ConstraintPolicy& policy) {
  EwmVariant out = payload;
  for (Tensor* t : exponent_tensors(out))
    for (double& v : t->values()) v = policy.clamp(v);
  return out;
}

void project_gradient(const EwmVariant& payload, EwmVariant& grad, const ConstraintPolicy& policy) {
  const auto values = exponent_tensors(payload);
  const auto grads = exponent_tensors(grad);
  for (std::size_t t = 0; t < values.size(); ++t)
    for (std::size_t i = 0; i < values[t]->size(); ++i) {
      const double v = (*values[t])[i];
      double& g = (*grads[t])[i];
      if ((v <= policy.v_min && g > 0.0) || (v >= policy.v_max && g < 0.0)) g = 0.0;
    }
}

namespace {

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

constexpr double kHardEdge = 3.0;

}  // namespace

double reparam_map(double w_hat, const ConstraintPolicy& p) {
  const double range = p.v_max - p.v_min;
  const double mid = 0.5 * (p.v_min + p.v_max);
  switch (p.kind) {
    case ReparamKind::ScaledSigmoid: return p.v_min + range * logistic(w_hat);
    case ReparamKind::ScaledTanh: return mid + 0.5 * range * std::tanh(w_hat);
    case ReparamKind::HardSigmoidClip: {
      const double slope = range / (2.0 * kHardEdge);
      if (w_hat > kHardEdge) return p.v_max + kHardSigmoidLeak * (w_hat - kHardEdge);
      if (w_hat < -kHardEdge) return p.v_min + kHardSigmoidLeak * (w_hat + kHardEdge);
      return mid + slope * w_hat;
    }
  }
  throw Error("unknown reparameterization kind");
}

double reparam_forward(double w_hat, const ConstraintPolicy& policy) {
  return policy.clamp(reparam_map(w_hat, policy));
}

double reparam_grad(double w_hat, const ConstraintPolicy& p) {
  const double range = p.v_max - p.v_min;
  switch (p.kind) {
    case ReparamKind::ScaledSigmoid: {
      // s (1 - s) written without cancellation so the tails stay positive.
      const double e = std::exp(-std::abs(w_hat));
      return range * e / ((1.0 + e) * (1.0 + e));
    }
    case ReparamKind::ScaledTanh: {
      const double e = std::exp(-2.0 * std::abs(w_hat));
      return 0.5 * range * 4.0 * e / ((1.0 + e) * (1.0 + e));
    }
    case ReparamKind::HardSigmoidClip:
      return std::abs(w_hat) > kHardEdge ? kHardSigmoidLeak : range / (2.0 * kHardEdge);
  }
  throw Error("unknown reparameterization kind");
}

double reparam_invert(double target, const ConstraintPolicy& p) {
  if (!(target > p.v_min && target < p.v_max))
    throw Error("reparam_invert: target " + std::to_string(target) + " outside open interval (" +
                std::to_string(p.v_min) + ", " + std::to_string(p.v_max) + ")");
  const double range = p.v_max - p.v_min;
  const double mid = 0.5 * (p.v_min + p.v_max);
  switch (p.kind) {
    case ReparamKind::ScaledSigmoid: {
      const double u = (target - p.v_min) / range;
      return std::log(u) - std::log1p(-u);
    }
    case ReparamKind::ScaledTanh: return std::atanh((target - mid) / (0.5 * range));
    case ReparamKind::HardSigmoidClip: return (target - mid) / (range / (2.0 * kHardEdge));
  }
  throw Error("unknown reparameterization kind");
}

EwmVariant reparam_payload(const EwmVariant& latent, const ConstraintPolicy& policy) {
  EwmVariant out = latent;
  for (Tensor* t : exponent_tensors(out))
    for (double& v : t->values()) v = reparam_forward(v, policy);
  return out;
}

ExponentInit init_exponents(VariantKind kind, KernelShape kernel, const ConstraintPolicy& policy) {
  if (kernel.height == 0 || kernel.width == 0) throw ShapeError("kernel dimensions must be positive");
  EwmVariant payload = zero_payload(kind, kernel);
  switch (kind) {
    case VariantKind::Standard: break;
    case VariantKind::Elementwise:
    case VariantKind::RowShared:
    case VariantKind::ColShared:
      for (Tensor* t : exponent_tensors(payload)) *t = Tensor::ones(t->shape());
      break;
    case VariantKind::Bilinear:
    case VariantKind::FullMatrix:
      for (Tensor* t : exponent_tensors(payload)) *t = Tensor::identity(t->dim(0));
      break;
  }

  ExponentInit init{payload, std::nullopt};
  if (policy.mode == ConstraintMode::Reparam && kind != VariantKind::Standard) {
    if (is_matrix_variant(kind) && policy.v_min >= 0.0)
      throw Error("reparameterized " + std::string(variant_name(kind)) +
                  " layers need v_min < 0 to represent identity initialization");
    EwmVariant latent = payload;
    for (Tensor* t : exponent_tensors(latent))
      for (double& v : t->values()) v = reparam_invert(v, policy);
    // Effective values come from the round trip so latent and effective agree exactly.
    init.effective = reparam_payload(latent, policy);
    init.latent = std::move(latent);
  }
  return init;
}

}  // namespace nlcnn
