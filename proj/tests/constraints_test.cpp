#include <gtest/gtest.h>

#include <cmath>

#include "nlcnn/constraints.hpp"
#include "nlcnn/error.hpp"
#include "nlcnn/gradients.hpp"

using namespace nlcnn;

namespace {

ConstraintPolicy reparam(ReparamKind kind) {
  ConstraintPolicy p;
  p.mode = ConstraintMode::Reparam;
  p.kind = kind;
  return p;
}

const ReparamKind kKinds[] = {ReparamKind::ScaledSigmoid, ReparamKind::ScaledTanh, ReparamKind::HardSigmoidClip};

}  // namespace

TEST(ClipParams, Examples) {
  const ConstraintPolicy p;
  const EwmVariant clipped = clip_params(ElementwiseEwm{Tensor::vector({5.3, -2.0, 0.5, -7.0})}, p);
  EXPECT_EQ(std::get<ElementwiseEwm>(clipped).w2, Tensor::vector({4.0, -2.0, 0.5, -2.0}));
  const EwmVariant inside = BilinearEwm{Tensor::identity(2), Tensor::matrix({{1, -1}, {3.9, 0}})};
  const EwmVariant same = clip_params(inside, p);
  EXPECT_EQ(std::get<BilinearEwm>(same).w4, std::get<BilinearEwm>(inside).w4);
  EXPECT_EQ(std::get<ElementwiseEwm>(clip_params(clipped, p)).w2, std::get<ElementwiseEwm>(clipped).w2);
}

TEST(ProjectGradient, DropsOutwardComponentsOnly) {
  const ConstraintPolicy p;
  const EwmVariant values = ElementwiseEwm{Tensor::vector({4.0, 4.0, -2.0, -2.0, 1.0})};
  EwmVariant grad = ElementwiseEwm{Tensor::vector({-1.0, 1.0, 1.0, -1.0, 5.0})};
  project_gradient(values, grad, p);
  EXPECT_EQ(std::get<ElementwiseEwm>(grad).w2, Tensor::vector({0.0, 1.0, 0.0, -1.0, 5.0}));
}

TEST(Reparam, SigmoidExamples) {
  const ConstraintPolicy p = reparam(ReparamKind::ScaledSigmoid);
  EXPECT_DOUBLE_EQ(reparam_forward(0.0, p), 1.0);
  EXPECT_NEAR(reparam_forward(60.0, p), 4.0, 1e-12);
  EXPECT_NEAR(reparam_forward(-60.0, p), -2.0, 1e-12);
  EXPECT_DOUBLE_EQ(reparam_invert(1.0, p), 0.0);
  EXPECT_THROW(reparam_invert(4.0, p), Error);
  EXPECT_THROW(reparam_invert(-2.5, p), Error);
}

TEST(Reparam, GradientMatchesFiniteDifferences) {
  for (ReparamKind kind : kKinds) {
    const ConstraintPolicy p = reparam(kind);
    for (double w = -8.05; w <= 8.0; w += 0.1) {
      const Tensor num = finite_diff([&](const Tensor& t) { return reparam_map(t[0], p); }, Tensor::vector({w}));
      EXPECT_NEAR(reparam_grad(w, p), num[0], 1e-8) << reparam_kind_name(kind) << " at " << w;
    }
  }
}

TEST(Reparam, InverseRoundTrips) {
  for (ReparamKind kind : kKinds) {
    const ConstraintPolicy p = reparam(kind);
    for (double t : {-1.0, 0.0, 1.0, 3.0, -1.999, 3.999})
      EXPECT_NEAR(reparam_forward(reparam_invert(t, p), p), t, 1e-10) << reparam_kind_name(kind);
    for (double w = -2.5; w <= 2.5; w += 0.25)
      EXPECT_NEAR(reparam_invert(reparam_forward(w, p), p), w, 1e-10) << reparam_kind_name(kind);
  }
}

TEST(Reparam, BoundedMonotoneAndRecoverable) {
  for (ReparamKind kind : kKinds) {
    const ConstraintPolicy p = reparam(kind);
    double prev = -INFINITY;
    for (int i = 0; i <= 10000; ++i) {
      const double w = -100.0 + 0.02 * i;
      const double v = reparam_forward(w, p);
      EXPECT_GE(v, p.v_min);
      EXPECT_LE(v, p.v_max);
      EXPECT_GE(v, prev);
      EXPECT_GT(reparam_grad(w, p), 0.0) << reparam_kind_name(kind) << " at " << w;
      if (std::abs(w) <= 10.0) EXPECT_GT(reparam_map(w, p), reparam_map(w - 0.02, p));
      prev = v;
    }
  }
}

TEST(Reparam, HardSigmoidLeakStaysNearBounds) {
  const ConstraintPolicy p = reparam(ReparamKind::HardSigmoidClip);
  for (double w : {5.0, 50.0, -7.0, -100.0}) {
    const double raw = reparam_map(w, p);
    const double excess = std::max(raw - p.v_max, p.v_min - raw);
    EXPECT_GT(excess, 0.0);
    EXPECT_LE(excess, 1e-3 * std::abs(w));
    EXPECT_EQ(reparam_grad(w, p), kHardSigmoidLeak);
  }
  EXPECT_DOUBLE_EQ(reparam_map(3.0, p), 4.0);
  EXPECT_DOUBLE_EQ(reparam_map(-3.0, p), -2.0);
}

TEST(Policy, Validation) {
  ConstraintPolicy p;
  EXPECT_NO_THROW(p.validate(VariantKind::FullMatrix));
  p.v_min = 0.5;
  EXPECT_NO_THROW(p.validate(VariantKind::Elementwise));
  EXPECT_THROW(p.validate(VariantKind::Bilinear), Error);
  p.v_max = 0.9;
  EXPECT_THROW(p.validate(VariantKind::Elementwise), Error);
}

TEST(InitExponents, NeutralPayloads) {
  const ConstraintPolicy p;
  EXPECT_EQ(std::get<ElementwiseEwm>(init_exponents(VariantKind::Elementwise, {2, 2}, p).effective).w2,
            Tensor::matrix({{1, 1}, {1, 1}}));
  EXPECT_EQ(std::get<FullMatrixEwm>(init_exponents(VariantKind::FullMatrix, {2, 2}, p).effective).w5,
            Tensor::identity(4));
  const auto bil = init_exponents(VariantKind::Bilinear, {3, 2}, p);
  EXPECT_EQ(std::get<BilinearEwm>(bil.effective).w3, Tensor::identity(3));
  EXPECT_EQ(std::get<BilinearEwm>(bil.effective).w4, Tensor::identity(2));
  EXPECT_FALSE(bil.latent.has_value());
  EXPECT_EQ(std::get<RowSharedEwm>(init_exponents(VariantKind::RowShared, {3, 2}, p).effective).w_row,
            Tensor::ones({3}));
}

TEST(InitExponents, ReparamStoresInvertedTargets) {
  for (ReparamKind kind : kKinds) {
    const ConstraintPolicy p = reparam(kind);
    const auto init = init_exponents(VariantKind::FullMatrix, {2, 1}, p);
    ASSERT_TRUE(init.latent.has_value());
    const Tensor& eff = std::get<FullMatrixEwm>(init.effective).w5;
    EXPECT_NEAR(eff(0, 0), 1.0, 1e-12);
    EXPECT_NEAR(eff(0, 1), 0.0, 1e-12);
    EXPECT_DOUBLE_EQ(std::get<FullMatrixEwm>(*init.latent).w5(0, 0), reparam_invert(1.0, p));
  }
  ConstraintPolicy bad = reparam(ReparamKind::ScaledSigmoid);
  bad.v_min = 0.5;
  EXPECT_THROW(init_exponents(VariantKind::Bilinear, {2, 2}, bad), Error);
  EXPECT_NO_THROW(init_exponents(VariantKind::Elementwise, {2, 2}, bad));
}
