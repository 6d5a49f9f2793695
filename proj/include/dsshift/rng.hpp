#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

namespace dsshift {

// Counter-based splittable RNG. Every draw is a pure function of
// (seed, stream, counter), so per-node noise streams stay identical across
// domain settings that share equations.
namespace rng {

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
  std::uint64_t h = splitmix64(seed ^ (0x9E3779B97F4A7C15ULL * (stream + 1)));
  h = splitmix64(h ^ (0xC2B2AE3D27D4EB4FULL * (counter + 1)));
  return splitmix64(h);
}

// Uniform in [0, 1).
inline double uniform01(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
  return static_cast<double>(mix(seed, stream, counter) >> 11) * 0x1.0p-53;
}

// Inverse standard normal CDF (Acklam's rational approximation plus one
// Halley refinement; accurate to ~1e-15 over (0,1)).
inline double normal_quantile(double p) {
  if (p <= 0.0 || p >= 1.0) throw std::invalid_argument("normal_quantile: p must be in (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1 - plow;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= phigh) {
    double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  // Halley refinement against erfc.
  double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  double u = e * std::sqrt(2 * M_PI) * std::exp(x * x / 2);
  x = x - u / (1 + x * u / 2);
  return x;
}

// Simple resampling helper: index in [0, n).
inline std::size_t index(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter,
                         std::size_t n) {
  return static_cast<std::size_t>(uniform01(seed, stream, counter) * static_cast<double>(n));
}

}  // namespace rng
}  // namespace dsshift
