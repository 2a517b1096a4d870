#include "nlcnn/rng.hpp"

#include <cmath>
#include <numbers>

#include "nlcnn/error.hpp"

namespace nlcnn {

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double SeededRng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform(double lo, double hi) {
  if (lo == hi) return lo;
  const double v = lo + (hi - lo) * uniform();
  return v > hi ? hi : v;
}

double SeededRng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t SeededRng::below(std::uint64_t n) {
  if (n == 0) throw Error("SeededRng::below needs a positive bound");
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % n;
}

SeededRng SeededRng::derive(std::uint64_t stream_id) const {
  return SeededRng(mix_seed(seed_ ^ mix_seed(stream_id + 1)));
}

}  // namespace nlcnn
