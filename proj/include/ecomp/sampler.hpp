#pragma once

#include "ecomp/compose.hpp"
#include "ecomp/schedule.hpp"

#include <functional>
#include <optional>

namespace ecomp {

enum class Method { PEM, ReverseDiffusion, ULA, MALA, UHMC, HMC };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::PEM: return "PEM";
    case Method::ReverseDiffusion: return "ReverseDiffusion";
    case Method::ULA: return "ULA";
    case Method::MALA: return "MALA";
    case Method::UHMC: return "UHMC";
    case Method::HMC: return "HMC";
  }
  return "?";
}

inline std::optional<Method> parse_method(const std::string& s) {
  for (Method m : {Method::PEM, Method::ReverseDiffusion, Method::ULA, Method::MALA,
                   Method::UHMC, Method::HMC})
    if (s == method_name(m)) return m;
  return std::nullopt;
}

struct SamplerConfig {
  Method method = Method::PEM;
  int particles = 8;
  double lambda = 1e-2;     // ULA/MALA step size
  double hmc_step = 1e-2;   // leapfrog step size
  int leapfrog = 5;         // L
  double tau = 1.0;         // PEM softmax temperature
  int inner_steps = 1;      // K chain steps per annealing level (baselines)
  bool resample = true;     // PEM selection on/off
  bool systematic = false;  // resampling scheme
  uint64_t seed = 0;

  void validate() const {
    if (particles < 1) throw ConfigError("sampler needs at least one particle");
    if (inner_steps < 1 || leapfrog < 1) throw ConfigError("bad sampler steps");
    if (tau <= 0 || lambda < 0 || hmc_step <= 0) throw ConfigError("bad sampler scalars");
  }
};

struct ParticleSet {
  Mat particles;  // P x dim
  Vec energies;
  Vec weights;
  int t = 0;

  void check_weights() const {
    if ((weights.array() < 0).any() || std::abs(weights.sum() - 1.0) > 1e-9)
      throw NumericFault("particle weights must be normalized");
  }
};

struct SampleResult {
  Vec best;
  double best_energy = 0.0;
  Mat finals;           // all final particles
  Vec final_energies;   // at t = 1
  long grad_evals = 0;  // energy-gradient evaluations
  long energy_evals = 0;
  double acceptance = -1.0;  // MALA/HMC only
};

// softmax(-E / tau), log-sum-exp stabilized; strictly positive, sums to 1.
inline Vec softmax_neg_energy(const Vec& energies, double tau) {
  Vec z = -energies / tau;
  const double m = z.maxCoeff();
  Vec w = (z.array() - m).exp();
  return w / w.sum();
}

// P indices drawn multinomially with replacement.
inline std::vector<int> resample_multinomial(const Vec& weights, int count, Rng& rng) {
  const int n = static_cast<int>(weights.size());
  Vec cum(n);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    if (weights[i] < 0) throw ConfigError("negative resampling weight");
    acc += weights[i];
    cum[i] = acc;
  }
  if (std::abs(acc - 1.0) > 1e-6) throw ConfigError("resampling weights must sum to 1");
  std::vector<int> out(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double u = rng.uniform() * acc;
    int lo = 0, hi = n - 1;
    while (lo < hi) {
      const int mid = (lo + hi) / 2;
      if (cum[mid] < u) lo = mid + 1; else hi = mid;
    }
    out[static_cast<size_t>(i)] = lo;
  }
  return out;
}

// Stratified low-variance alternative.
inline std::vector<int> resample_systematic(const Vec& weights, int count, Rng& rng) {
  const int n = static_cast<int>(weights.size());
  std::vector<int> out(static_cast<size_t>(count));
  const double step = 1.0 / count;
  double u = rng.uniform() * step;
  double acc = weights[0];
  int j = 0;
  for (int i = 0; i < count; ++i) {
    while (acc < u && j + 1 < n) acc += weights[++j];
    out[static_cast<size_t>(i)] = j;
    u += step;
  }
  return out;
}

namespace detail {

inline void apply_mask(const EnergyLandscape& land, Mat& m) {
  if (land.active.empty()) return;
  for (int c = 0; c < land.dim; ++c)
    if (!land.active[static_cast<size_t>(c)]) m.col(c).setZero();
}

inline void apply_mask_row(const EnergyLandscape& land, Vec& v) {
  if (land.active.empty()) return;
  for (int c = 0; c < land.dim; ++c)
    if (!land.active[static_cast<size_t>(c)]) v[c] = 0.0;
}

// One RNG stream per particle slot plus one for selection, so particle-level
// parallelism cannot reorder draws.
struct Streams {
  std::vector<Rng> particle;
  Rng select;
  explicit Streams(uint64_t seed, int P) : select(derive_seed(seed, 0)) {
    particle.reserve(static_cast<size_t>(P));
    for (int i = 0; i < P; ++i) particle.emplace_back(derive_seed(seed, static_cast<uint64_t>(i) + 1));
  }
};

inline Mat init_particles(const EnergyLandscape& land, Streams& st, int P) {
  Mat y(P, land.dim);
  for (int p = 0; p < P; ++p) {
    Vec row(land.dim);
    st.particle[static_cast<size_t>(p)].fill_normal(row);
    apply_mask_row(land, row);
    y.row(p) = row.transpose();
  }
  return y;
}

inline void finalize(const EnergyLandscape& land, const Mat& y, SampleResult& r) {
  Vec e;
  land.eval(y, 1, e, nullptr);
  r.energy_evals += y.rows();
  Eigen::Index best = 0;
  e.minCoeff(&best);
  r.finals = y;
  r.final_energies = e;
  r.best = y.row(best).transpose();
  r.best_energy = e[best];
}

}  // namespace detail

// Parallel Energy Minimization. Per timestep t = T..1: importance weights
// softmax(-E/tau) over particles, multinomial selection, noise injection
// y + sigma_t * xi, then the denoising move y <- y + sigma_t * grad E(y, t).
// Returns the minimum-energy particle of the final set.
inline SampleResult pem_sample(
    const EnergyLandscape& land, const NoiseSchedule& sched, const SamplerConfig& cfg,
    const std::function<void(int, const Vec&)>& trace = nullptr) {
  cfg.validate();
  const int P = cfg.particles;
  detail::Streams st(cfg.seed, P);
  Mat y = detail::init_particles(land, st, P);
  SampleResult res;
  Vec e;
  Mat g;
  for (int t = sched.T; t >= 1; --t) {
    const double sigma = sched.at(t);
    if (cfg.resample) {
      land.eval(y, t, e, nullptr);
      res.energy_evals += P;
      if (trace) trace(t, e);
      Vec w = softmax_neg_energy(e, cfg.tau);
      auto idx = cfg.systematic ? resample_systematic(w, P, st.select)
                                : resample_multinomial(w, P, st.select);
      Mat picked(P, land.dim);
      for (int p = 0; p < P; ++p) picked.row(p) = y.row(idx[static_cast<size_t>(p)]);
      y = std::move(picked);
    }
    for (int p = 0; p < P; ++p) {
      Vec xi(land.dim);
      st.particle[static_cast<size_t>(p)].fill_normal(xi);
      detail::apply_mask_row(land, xi);
      y.row(p) += sigma * xi.transpose();
    }
    land.eval(y, t, e, &g);
    res.grad_evals += P;
    detail::apply_mask(land, g);
    y += sigma * g;
  }
  detail::finalize(land, y, res);
  return res;
}

namespace detail {

struct ChainCounters {
  long grad_evals = 0;
  long proposals = 0;
  long accepts = 0;
};

// y <- y - lambda grad E + sqrt(2 lambda) xi, K steps at fixed t.
inline void ula_steps(const EnergyLandscape& land, int t, double lambda, int K, Vec& y,
                      Rng& rng, ChainCounters& c) {
  const double noise = std::sqrt(2.0 * lambda);
  Vec e;
  Mat g;
  Mat row(1, land.dim);
  for (int k = 0; k < K; ++k) {
    row.row(0) = y.transpose();
    land.eval(row, t, e, &g);
    ++c.grad_evals;
    Vec step = -lambda * g.row(0).transpose();
    Vec xi(land.dim);
    rng.fill_normal(xi);
    step += noise * xi;
    apply_mask_row(land, step);
    y += step;
  }
}

// ULA proposal with a Metropolis correction targeting exp(-E(., t)).
inline void mala_steps(const EnergyLandscape& land, int t, double lambda, int K, Vec& y,
                       Rng& rng, ChainCounters& c) {
  const double noise = std::sqrt(2.0 * lambda);
  Vec e;
  Mat g;
  Mat row(1, land.dim);
  row.row(0) = y.transpose();
  land.eval(row, t, e, &g);
  ++c.grad_evals;
  double ey = e[0];
  Vec gy = g.row(0).transpose();
  for (int k = 0; k < K; ++k) {
    Vec xi(land.dim);
    rng.fill_normal(xi);
    Vec delta = -lambda * gy + noise * xi;
    apply_mask_row(land, delta);
    Vec yp = y + delta;
    row.row(0) = yp.transpose();
    land.eval(row, t, e, &g);
    ++c.grad_evals;
    const double ep = e[0];
    Vec gp = g.row(0).transpose();
    apply_mask_row(land, gp);
    Vec gym = gy;
    apply_mask_row(land, gym);
    const double fwd = (yp - y + lambda * gym).squaredNorm();
    const double rev = (y - yp + lambda * gp).squaredNorm();
    const double log_alpha = (ey - ep) + (fwd - rev) / (4.0 * lambda);
    ++c.proposals;
    if (std::log(std::max(rng.uniform(), 1e-300)) < log_alpha) {
      ++c.accepts;
      y = yp;
      ey = ep;
      gy = g.row(0).transpose();
    }
  }
}

// L leapfrog steps with unit mass; `adjust` adds the Metropolis correction on
// the Hamiltonian.
inline void hmc_steps(const EnergyLandscape& land, int t, double step, int L, int K,
                      bool adjust, Vec& y, Rng& rng, ChainCounters& c) {
  Vec e;
  Mat g;
  Mat row(1, land.dim);
  for (int k = 0; k < K; ++k) {
    Vec p(land.dim);
    rng.fill_normal(p);
    apply_mask_row(land, p);
    row.row(0) = y.transpose();
    land.eval(row, t, e, &g);
    ++c.grad_evals;
    const double e0 = e[0];
    const double h0 = e0 + 0.5 * p.squaredNorm();
    Vec q = y;
    Vec grad = g.row(0).transpose();
    apply_mask_row(land, grad);
    p -= 0.5 * step * grad;
    for (int l = 0; l < L; ++l) {
      q += step * p;
      row.row(0) = q.transpose();
      land.eval(row, t, e, &g);
      ++c.grad_evals;
      grad = g.row(0).transpose();
      apply_mask_row(land, grad);
      p -= (l + 1 < L ? step : 0.5 * step) * grad;
    }
    const double h1 = e[0] + 0.5 * p.squaredNorm();
    ++c.proposals;
    if (!adjust || std::log(std::max(rng.uniform(), 1e-300)) < (h0 - h1)) {
      ++c.accepts;
      y = q;
    }
  }
}

}  // namespace detail

// Baseline samplers from the ablations. All anneal t through the schedule
// from T to 1 with K inner chain steps per level. ReverseDiffusion is the
// PEM loop without selection, run as a single chain.
inline SampleResult baseline_sample(const EnergyLandscape& land, const NoiseSchedule& sched,
                                    const SamplerConfig& cfg) {
  cfg.validate();
  if (cfg.method == Method::PEM) throw ConfigError("baseline_sample: use pem_sample");
  SampleResult res;

  if (cfg.method == Method::ReverseDiffusion) {
    SamplerConfig rd = cfg;
    rd.method = Method::PEM;
    rd.particles = 1;
    rd.resample = false;
    return pem_sample(land, sched, rd);
  }

  detail::Streams st(cfg.seed, 1);
  Rng& rng = st.particle[0];
  Vec y(land.dim);
  rng.fill_normal(y);
  detail::apply_mask_row(land, y);
  detail::ChainCounters c;
  for (int t = sched.T; t >= 1; --t) {
    switch (cfg.method) {
      case Method::ULA:
        detail::ula_steps(land, t, cfg.lambda, cfg.inner_steps, y, rng, c);
        break;
      case Method::MALA:
        detail::mala_steps(land, t, cfg.lambda, cfg.inner_steps, y, rng, c);
        break;
      case Method::UHMC:
        detail::hmc_steps(land, t, cfg.hmc_step, cfg.leapfrog, cfg.inner_steps, false, y,
                          rng, c);
        break;
      case Method::HMC:
        detail::hmc_steps(land, t, cfg.hmc_step, cfg.leapfrog, cfg.inner_steps, true, y,
                          rng, c);
        break;
      default:
        break;
    }
  }
  res.grad_evals = c.grad_evals;
  if (c.proposals > 0)
    res.acceptance = static_cast<double>(c.accepts) / static_cast<double>(c.proposals);
  detail::finalize(land, Mat(y.transpose()), res);
  return res;
}

inline SampleResult draw_sample(const EnergyLandscape& land, const NoiseSchedule& sched,
                                const SamplerConfig& cfg,
                                const std::function<void(int, const Vec&)>& trace = nullptr) {
  return cfg.method == Method::PEM ? pem_sample(land, sched, cfg, trace)
                                   : baseline_sample(land, sched, cfg);
}

}  // namespace ecomp
