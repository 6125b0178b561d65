#pragma once

#include "ecomp/net.hpp"

#include <functional>

namespace testutil {

using ecomp::Mat;
using ecomp::Vec;

inline Vec random_vec(ecomp::Rng& rng, int n, double scale = 1.0) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

// Central finite differences of a scalar function over selected coordinates
// of a flat vector.
inline double fd_coord(const std::function<double(const Vec&)>& f, Vec x, int i, double h) {
  const double xi = x[i];
  x[i] = xi + h;
  const double fp = f(x);
  x[i] = xi - h;
  const double fm = f(x);
  return (fp - fm) / (2.0 * h);
}

// Relative error normalized by the larger magnitude (with a small floor).
inline double rel_err(double a, double b, double floor_ = 1e-9) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor_});
}

}  // namespace testutil
