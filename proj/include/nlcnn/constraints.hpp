#pragma once

#include <optional>
#include <string_view>

#include "nlcnn/nlconv.hpp"

namespace nlcnn {

/// How exponent bounds are enforced during training.
enum class ConstraintMode {
  ClipParams,        ///< clamp exponents into [v_min, v_max] after every step
  ProjectAfterStep,  ///< drop outward gradient components at an active bound, then clamp
  Reparam,           ///< train an unconstrained value mapped through a bounded activation
};

enum class ReparamKind { ScaledSigmoid, ScaledTanh, HardSigmoidClip };

std::string_view constraint_mode_name(ConstraintMode mode);
ConstraintMode parse_constraint_mode(std::string_view name);
std::string_view reparam_kind_name(ReparamKind kind);
ReparamKind parse_reparam_kind(std::string_view name);

/// Slope of HardSigmoidClip outside its linear region.
inline constexpr double kHardSigmoidLeak = 1e-3;

struct ConstraintPolicy {
  double v_min = -2.0;
  double v_max = 4.0;
  ConstraintMode mode = ConstraintMode::ClipParams;
  ReparamKind kind = ReparamKind::ScaledSigmoid;

  /// Requires v_min < 1 < v_max, and v_min < 0 when the layer uses a
  /// matrix variant (identity initialization needs the exponent 0).
  void validate(VariantKind variant) const;
  double clamp(double v) const;
};

/// Copy of `payload` with every exponent clamped to the policy bounds.
EwmVariant clip_params(const EwmVariant& payload, const ConstraintPolicy& policy);

/// Zeroes gradient entries that would push an exponent already sitting on a
/// bound further outside (gradient-descent direction is -grad).
void project_gradient(const EwmVariant& payload, EwmVariant& grad, const ConstraintPolicy& policy);

/// The raw bounded activation. For the smooth kinds the image is the open
/// interval (v_min, v_max); HardSigmoidClip is linear with slope
/// (v_max - v_min) / 6 on [-3, 3] and leaks with slope 1e-3 beyond.
double reparam_map(double w_hat, const ConstraintPolicy& policy);
/// reparam_map clamped to [v_min, v_max]; this is the effective exponent.
double reparam_forward(double w_hat, const ConstraintPolicy& policy);
/// Exact derivative of reparam_map; strictly positive for every finite input.
double reparam_grad(double w_hat, const ConstraintPolicy& policy);
/// Inverse of reparam_map on the open interval (v_min, v_max).
double reparam_invert(double target, const ConstraintPolicy& policy);

/// Maps every entry of an unconstrained payload through reparam_forward.
EwmVariant reparam_payload(const EwmVariant& latent, const ConstraintPolicy& policy);

struct ExponentInit {
  EwmVariant effective;
  std::optional<EwmVariant> latent;  ///< set only in Reparam mode
};

/// Neutral initialization: all-ones for Elementwise/RowShared/ColShared and
/// identity matrices for Bilinear/FullMatrix. A layer initialized this way
/// computes exactly the standard convolution.
ExponentInit init_exponents(VariantKind kind, KernelShape kernel, const ConstraintPolicy& policy);

}  // namespace nlcnn
