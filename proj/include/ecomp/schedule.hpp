#pragma once

#include "ecomp/common.hpp"

namespace ecomp {

// Fixed noise amplitudes sigma_1..sigma_T driving corruption during training,
// the per-step noise injection while sampling, and the denoising step size.
struct NoiseSchedule {
  int T = 0;
  Vec sigma;  // sigma[t-1] for t in 1..T; non-decreasing, sigma_T = 1

  // sigma_0 := 0 so corrupt(y, 0, eps) degenerates to the identity.
  double at(int t) const {
    if (t < 0 || t > T) throw ConfigError("timestep out of range");
    return t == 0 ? 0.0 : sigma[t - 1];
  }
};

inline NoiseSchedule linear_schedule(int T) {
  if (T < 1) throw ConfigError("schedule needs at least one step");
  NoiseSchedule s;
  s.T = T;
  s.sigma.resize(T);
  for (int t = 1; t <= T; ++t) s.sigma[t - 1] = static_cast<double>(t) / T;
  return s;
}

// y* = sqrt(1 - sigma_t) * y + sigma_t * eps
inline Vec corrupt(const Vec& y, double sigma_t, const Vec& eps) {
  if (eps.size() != y.size()) throw ConfigError("corrupt: eps/y size mismatch");
  if (sigma_t < 0.0 || sigma_t > 1.0) throw ConfigError("corrupt: sigma out of [0,1]");
  // two rounded products, no fused cross-term: corrupt(y, t, 0) must equal
  // sqrt(1 - sigma_t) * y bit-for-bit
  Vec out = std::sqrt(1.0 - sigma_t) * y;
  out += sigma_t * eps;
  return out;
}

inline Vec corrupt(const Vec& y, const NoiseSchedule& s, int t, const Vec& eps) {
  return corrupt(y, s.at(t), eps);
}

}  // namespace ecomp
