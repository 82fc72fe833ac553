#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfnoma {

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

inline double linear_to_db(double lin) {
  if (lin <= 0.0) throw std::domain_error("linear_to_db: nonpositive input");
  return 10.0 * std::log10(lin);
}

// Sums in a fixed tree order so the result is independent of how the work
// producing the values was scheduled.
inline double pairwise_sum(std::span<const double> v) {
  const std::size_t n = v.size();
  if (n == 0) return 0.0;
  if (n <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(v.subspan(0, half)) + pairwise_sum(v.subspan(half));
}

inline double pairwise_mean(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("pairwise_mean: empty");
  return pairwise_sum(v) / static_cast<double>(v.size());
}

// Sample standard deviation (n-1 denominator); 0 for fewer than two samples.
inline double sample_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = pairwise_mean(v);
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - m) * (v[i] - m);
  return std::sqrt(pairwise_sum(sq) / static_cast<double>(v.size() - 1));
}

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace cfnoma
