#pragma once

#include <cmath>
#include <cstdint>

namespace cfgnn {

// Ceil/floor that snap values sitting within an absolute 1e-9 of an integer
// onto that integer first. Quantile levels are products like (1-alpha)*(n+1)
// whose exact value is often an integer that floating point just misses;
// without snapping, ceil((1-0.1)*10) could come out as 10 instead of 9.
inline std::int64_t snapped_ceil(double x) {
  const double r = std::nearbyint(x);
  if (std::abs(x - r) <= 1e-9) return static_cast<std::int64_t>(r);
  return static_cast<std::int64_t>(std::ceil(x));
}

inline std::int64_t snapped_floor(double x) {
  const double r = std::nearbyint(x);
  if (std::abs(x - r) <= 1e-9) return static_cast<std::int64_t>(r);
  return static_cast<std::int64_t>(std::floor(x));
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace cfgnn
