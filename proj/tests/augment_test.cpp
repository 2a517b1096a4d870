#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "nlcnn/augment.hpp"
#include "nlcnn/error.hpp"

using namespace nlcnn;

namespace {

Tensor ramp(std::size_t rows, std::size_t cols) {
  Tensor t({rows, cols});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i) - 3.5;
  return t;
}

std::vector<double> sorted_values(const Tensor& t) {
  std::vector<double> v(t.values().begin(), t.values().end());
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST(Flips, Examples) {
  const Tensor x = Tensor::matrix({{1, 2}, {3, 4}, {5, 6}});
  EXPECT_EQ(flip_lr(x), Tensor::matrix({{5, 6}, {3, 4}, {1, 2}}));
  EXPECT_EQ(flip_bidirectional(x), Tensor::matrix({{6, 5}, {4, 3}, {2, 1}}));
  const Tensor col = Tensor::matrix({{1}, {2}, {3}, {4}, {5}});
  EXPECT_EQ(flip_blockwise(col, 2), Tensor::matrix({{2}, {1}, {4}, {3}, {5}}));
  EXPECT_EQ(flip_blockwise(col, 5), flip_lr(col));
  EXPECT_EQ(flip_blockwise(col, 1), col);
  EXPECT_THROW(flip_blockwise(col, 0), Error);
}

TEST(Flips, InvolutionsAndMultiset) {
  for (std::size_t rows : {1u, 4u, 7u}) {
    const Tensor x = ramp(rows, 3);
    EXPECT_EQ(flip_lr(flip_lr(x)), x);
    EXPECT_EQ(flip_bidirectional(flip_bidirectional(x)), x);
    for (std::size_t b : {1u, 2u, 3u, 8u}) EXPECT_EQ(flip_blockwise(flip_blockwise(x, b), b), x);
    EXPECT_EQ(sorted_values(flip_lr(x)), sorted_values(x));
    EXPECT_EQ(sorted_values(flip_blockwise(x, 3)), sorted_values(x));
    EXPECT_EQ(sorted_values(flip_bidirectional(x)), sorted_values(x));
  }
}

TEST(ExpAugment, PerRowExample) {
  const Tensor x = Tensor::matrix({{2, 3}, {4, 5}});
  EXPECT_EQ(apply_exponents(x, ExponentGranularity::PerRow, Tensor::vector({2, 1})),
            Tensor::matrix({{4, 9}, {4, 5}}));
  EXPECT_EQ(apply_exponents(x, ExponentGranularity::PerChannel, Tensor::vector({1, 2})),
            Tensor::matrix({{2, 9}, {4, 25}}));
  EXPECT_THROW(apply_exponents(x, ExponentGranularity::PerRow, Tensor::vector({1, 2, 3})), Error);
}

TEST(ExpAugment, DrawShapesAndRange) {
  SeededRng rng(3);
  const Shape w{5, 3};
  EXPECT_EQ(draw_exponents(w, {ExponentGranularity::PerPoint}, rng).size(), 15u);
  EXPECT_EQ(draw_exponents(w, {ExponentGranularity::PerRow}, rng).size(), 5u);
  EXPECT_EQ(draw_exponents(w, {ExponentGranularity::PerChannel}, rng).size(), 3u);
  double lo = INFINITY, hi = -INFINITY;
  for (int i = 0; i < 100000; ++i) {
    const double e = draw_exponents({1, 1}, {ExponentGranularity::PerPoint}, rng)[0];
    lo = std::min(lo, e);
    hi = std::max(hi, e);
  }
  EXPECT_GE(lo, -2.0);
  EXPECT_LE(hi, 4.0);
  EXPECT_LT(lo, -1.99);
  EXPECT_GT(hi, 3.99);
}

TEST(ExpAugment, PreservesSignAndShape) {
  SeededRng rng(4);
  const Tensor x = ramp(6, 4);
  for (auto g : {ExponentGranularity::PerPoint, ExponentGranularity::PerRow, ExponentGranularity::PerChannel}) {
    for (int trial = 0; trial < 50; ++trial) {
      const Tensor y = exp_augment(x, {g}, rng);
      ASSERT_EQ(y.shape(), x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(std::signbit(y[i]), std::signbit(x[i]));
      EXPECT_TRUE(y.all_finite());
    }
  }
}

TEST(Pipeline, ProbabilityZeroAndOne) {
  SeededRng rng(5);
  const Tensor x = ramp(8, 2);
  const std::vector<AugmentSpec> never{{LeftRightFlip{}, 0.0}, {ExponentAugment{}, 0.0}};
  for (int i = 0; i < 20; ++i) EXPECT_EQ(apply_pipeline(x, never, rng), x);
  const std::vector<AugmentSpec> always{{LeftRightFlip{}, 1.0}, {BiDirectionalFlip{}, 1.0}};
  for (int i = 0; i < 20; ++i) EXPECT_EQ(apply_pipeline(x, always, rng), Tensor(flip_lr(flip_bidirectional(x))));
}

TEST(Pipeline, DeterministicUnderSeed) {
  const Tensor x = ramp(8, 2);
  const std::vector<AugmentSpec> specs{{BlockwiseFlip{3}, 0.5}, {ExponentAugment{}, 0.5}};
  SeededRng a(77), b(77);
  for (int i = 0; i < 30; ++i) EXPECT_EQ(apply_pipeline(x, specs, a), apply_pipeline(x, specs, b));
}

TEST(Pipeline, SpecValidation) {
  EXPECT_THROW((AugmentSpec{LeftRightFlip{}, 1.5}.validate()), Error);
  EXPECT_THROW((AugmentSpec{ExponentAugment{ExponentGranularity::PerRow, 3.0, 1.0}, 0.5}.validate()), Error);
  EXPECT_THROW((AugmentSpec{BlockwiseFlip{0}, 0.5}.validate()), Error);
  EXPECT_EQ(augment_op_name(BlockwiseFlip{}), "flip_blockwise");
  EXPECT_EQ(parse_granularity("per_channel"), ExponentGranularity::PerChannel);
  EXPECT_THROW(parse_granularity("per_bogus"), Error);
}
