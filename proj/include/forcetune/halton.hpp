#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace forcetune {

inline double radical_inverse(std::uint32_t base, std::uint64_t index) {
  double inv = 1.0 / base;
  double factor = inv;
  double result = 0.0;
  while (index != 0) {
    result += factor * static_cast<double>(index % base);
    index /= base;
    factor *= inv;
  }
  return result;
}

// Halton points in [0,1)^d with a seeded Cranley-Patterson rotation.
// Skips index 0 so the first point is not the origin.
class HaltonSequence {
 public:
  HaltonSequence(int dim, std::uint64_t seed) : shift_(dim), index_(1) {
    static constexpr std::uint32_t kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29};
    if (dim < 1 || dim > 10) throw std::invalid_argument("HaltonSequence: dim must be in [1,10]");
    bases_.assign(kPrimes, kPrimes + dim);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& s : shift_) s = u(rng);
  }

  std::vector<double> next() {
    std::vector<double> point(bases_.size());
    for (std::size_t j = 0; j < bases_.size(); ++j) {
      double v = radical_inverse(bases_[j], index_) + shift_[j];
      point[j] = v - std::floor(v);
    }
    ++index_;
    return point;
  }

 private:
  std::vector<std::uint32_t> bases_;
  std::vector<double> shift_;
  std::uint64_t index_;
};

}  // namespace forcetune
