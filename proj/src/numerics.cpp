#include "nlcnn/numerics.hpp"

#include <algorithm>
#include <cmath>

#include "nlcnn/error.hpp"

namespace nlcnn {

double signed_pow(double x, double w, double eps) {
  return sign_of(x) * std::pow(std::max(std::abs(x), eps), w);
}

double safe_log_abs(double x, double eps) { return std::log(std::max(std::abs(x), eps)); }

namespace {

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2)
    throw ShapeError(std::string(what) + " expects a 2-D tensor, got " + shape_string(t.shape()));
}

}  // namespace

Tensor kron(const Tensor& a, const Tensor& b) {
  require_matrix(a, "kron");
  require_matrix(b, "kron");
  const std::size_t m = a.rows(), n = a.cols(), p = b.rows(), q = b.cols();
  Tensor out({m * p, n * q});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < p; ++k)
        for (std::size_t l = 0; l < q; ++l) out(i * p + k, j * q + l) = a(i, j) * b(k, l);
  return out;
}

Tensor vec(const Tensor& x) {
  require_matrix(x, "vec");
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out({m * n});
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < m; ++i) out[j * m + i] = x(i, j);
  return out;
}

Tensor unvec(const Tensor& v, std::size_t rows, std::size_t cols) {
  if (v.size() != rows * cols)
    throw ShapeError("unvec: " + std::to_string(v.size()) + " values cannot fill " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  Tensor out({rows, cols});
  for (std::size_t j = 0; j < cols; ++j)
    for (std::size_t i = 0; i < rows; ++i) out(i, j) = v[j * rows + i];
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows())
    throw ShapeError("matmul: " + shape_string(a.shape()) + " * " + shape_string(b.shape()));
  Tensor out({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  Tensor out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Tensor matvec(const Tensor& a, const Tensor& x) {
  require_matrix(a, "matvec");
  if (a.cols() != x.size())
    throw ShapeError("matvec: " + shape_string(a.shape()) + " * " + std::to_string(x.size()) +
                     "-vector");
  Tensor out({a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) acc += a(i, j) * x[j];
    out[i] = acc;
  }
  return out;
}

std::size_t output_extent(std::size_t input, std::size_t kernel, std::size_t stride) {
  if (stride == 0) throw ShapeError("stride must be at least 1");
  if (kernel == 0 || kernel > input)
    throw ShapeError("kernel extent " + std::to_string(kernel) + " does not fit input extent " +
                     std::to_string(input));
  return (input - kernel) / stride + 1;
}

PatchGrid extract_patches(const Tensor& input, KernelShape kernel, Stride stride) {
  require_matrix(input, "extract_patches");
  PatchGrid grid;
  grid.grid_t = output_extent(input.rows(), kernel.height, stride.time);
  grid.grid_c = output_extent(input.cols(), kernel.width, stride.channel);
  grid.patches.reserve(grid.grid_t * grid.grid_c);
  for (std::size_t gt = 0; gt < grid.grid_t; ++gt) {
    for (std::size_t gc = 0; gc < grid.grid_c; ++gc) {
      Tensor patch({kernel.height, kernel.width});
      const std::size_t t0 = gt * stride.time, c0 = gc * stride.channel;
      for (std::size_t i = 0; i < kernel.height; ++i)
        for (std::size_t j = 0; j < kernel.width; ++j) patch(i, j) = input(t0 + i, c0 + j);
      grid.patches.push_back(std::move(patch));
    }
  }
  return grid;
}

}  // namespace nlcnn
