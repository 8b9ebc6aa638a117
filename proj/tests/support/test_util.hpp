#pragma once

#include <cmath>

#include "fsw/core/array.hpp"
#include "fsw/core/rng.hpp"
#include "fsw/core/tensor.hpp"

namespace fsw::test {

inline Array random_array(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Array a(std::move(shape));
  for (int64_t i = 0; i < a.numel(); ++i) a[i] = scale * rng.normal();
  return a;
}

inline Array uniform_array(std::vector<int> shape, Rng& rng, double lo, double hi) {
  Array a(std::move(shape));
  for (int64_t i = 0; i < a.numel(); ++i) a[i] = rng.uniform(lo, hi);
  return a;
}

inline double max_abs_diff(const Array& a, const Array& b) {
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

inline bool bitwise_equal(const Array& a, const Array& b) {
  if (!a.same_shape(b)) return false;
  for (int64_t i = 0; i < a.numel(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

inline double mean_of(const Array& a) {
  double s = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) s += a[i];
  return s / static_cast<double>(a.numel());
}

}  // namespace fsw::test
