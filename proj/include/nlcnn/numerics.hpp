#pragma once

#include <cstddef>
#include <vector>

#include "nlcnn/tensor.hpp"

namespace nlcnn {

/// Magnitude floor applied before powers and logarithms.
inline constexpr double kDefaultEps = 1e-6;

/// sign(x) * max(|x|, eps)^w, with sign(0) = +1.
///
/// Total over all real x. For x >= eps this is plain x^w; the function is
/// odd-symmetric, so negative inputs keep their sign.
double signed_pow(double x, double w, double eps = kDefaultEps);

/// log(max(|x|, eps)).
double safe_log_abs(double x, double eps = kDefaultEps);

/// +1 for x >= 0, -1 otherwise.
inline double sign_of(double x) { return x >= 0.0 ? 1.0 : -1.0; }

/// Kronecker product of two matrices: block (i, j) of the result is a(i, j) * b.
Tensor kron(const Tensor& a, const Tensor& b);

/// Column-major flattening of a matrix, so that vec(A X B) = kron(B^T, A) vec(X).
Tensor vec(const Tensor& x);
/// Inverse of vec for an m x n matrix.
Tensor unvec(const Tensor& v, std::size_t rows, std::size_t cols);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// Matrix-vector product; `x` may be any tensor with a.cols() elements.
Tensor matvec(const Tensor& a, const Tensor& x);

struct KernelShape {
  std::size_t height = 1;  ///< time steps (rows)
  std::size_t width = 1;   ///< sensor channels (columns)
  std::size_t size() const { return height * width; }
  friend bool operator==(const KernelShape&, const KernelShape&) = default;
};

struct Stride {
  std::size_t time = 1;
  std::size_t channel = 1;
};

/// Receptive fields of a valid (unpadded) convolution, in row-major grid order.
struct PatchGrid {
  std::size_t grid_t = 0;
  std::size_t grid_c = 0;
  std::vector<Tensor> patches;  ///< grid_t * grid_c copies of k_h x k_w sub-blocks

  const Tensor& at(std::size_t t, std::size_t c) const { return patches[t * grid_c + c]; }
};

/// Number of valid positions along one axis.
std::size_t output_extent(std::size_t input, std::size_t kernel, std::size_t stride);

PatchGrid extract_patches(const Tensor& input, KernelShape kernel, Stride stride);

}  // namespace nlcnn
