#pragma once

#include "ecomp/common.hpp"
#include "ecomp/schedule.hpp"
#include "ecomp/tape.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace ecomp {

// Score network s_theta: residual MLP blocks, each block being layer-norm
// followed by three linear layers with ReLU, an additive skip around the
// block, and linear input/output projections to match the working width.
// Time conditioning is one scalar t/T appended to the input.
struct MlpConfig {
  int input_dim = 0;   // y-slice dimension (= output_dim)
  int cond_dim = 0;    // condition vector appended to the input
  int output_dim = 0;
  std::vector<int> hidden = {128, 256, 128};
  int n_blocks = 3;
  bool layer_norm = true;
  bool time_scalar = true;  // append t/T to the input
  uint64_t seed = 1;

  int width() const { return hidden.back(); }
  int in_total() const { return input_dim + cond_dim + (time_scalar ? 1 : 0); }

  void validate() const {
    if (input_dim < 1 || output_dim < 1) throw ConfigError("mlp dims must be >= 1");
    if (cond_dim < 0 || n_blocks < 1) throw ConfigError("bad mlp config");
    if (hidden.empty()) throw ConfigError("mlp needs hidden dims");
    for (int h : hidden)
      if (h < 1) throw ConfigError("hidden dims must be >= 1");
  }
};

// One linear layer's slot in the flat parameter vector.
struct LinearSlot {
  int w_off = 0, rows = 0, cols = 0;  // weight is rows x cols, row-major
  int b_off = 0;                      // bias length == rows
  int end() const { return b_off + rows; }
};

struct ParamLayout {
  LinearSlot in_proj;
  std::vector<LinearSlot> block_linears;  // n_blocks * hidden.size() entries
  LinearSlot out_proj;
  int count = 0;
};

inline ParamLayout make_layout(const MlpConfig& cfg) {
  cfg.validate();
  ParamLayout lay;
  int off = 0;
  auto place = [&off](int rows, int cols) {
    LinearSlot s;
    s.rows = rows;
    s.cols = cols;
    s.w_off = off;
    s.b_off = off + rows * cols;
    off = s.end();
    return s;
  };
  lay.in_proj = place(cfg.width(), cfg.in_total());
  for (int b = 0; b < cfg.n_blocks; ++b) {
    int prev = cfg.width();
    for (int h : cfg.hidden) {
      lay.block_linears.push_back(place(h, prev));
      prev = h;
    }
  }
  lay.out_proj = place(cfg.output_dim, cfg.width());
  lay.count = off;
  return lay;
}

inline int param_count(const MlpConfig& cfg) { return make_layout(cfg).count; }

// Flat parameter vector plus the architecture manifest it instantiates.
struct ParamSet {
  MlpConfig config;
  Vec flat;

  void check() const {
    if (flat.size() != param_count(config)) throw ConfigError("parameter count mismatch");
    require_finite(flat, "ParamSet");
  }
};

// Fan-in scaled Gaussian weights (variance 1/fan_in), zero biases. The same
// seed always yields the same parameters.
inline ParamSet init_params(const MlpConfig& cfg) {
  ParamLayout lay = make_layout(cfg);
  ParamSet p;
  p.config = cfg;
  p.flat = Vec::Zero(lay.count);
  Rng rng(cfg.seed);
  auto fill = [&](const LinearSlot& s) {
    const double sd = 1.0 / std::sqrt(static_cast<double>(s.cols));
    for (int i = 0; i < s.rows * s.cols; ++i) p.flat[s.w_off + i] = sd * rng.normal();
    // biases stay zero
  };
  fill(lay.in_proj);
  for (const auto& s : lay.block_linears) fill(s);
  fill(lay.out_proj);
  return p;
}

namespace detail {

inline ad::NodeP bind_linear(ad::Tape& t, const ParamSet& p, const LinearSlot& s,
                             ad::NodeP& bias_out) {
  Mat w(s.rows, s.cols);
  std::copy_n(p.flat.data() + s.w_off, s.rows * s.cols, w.data());
  Mat b(1, s.rows);
  std::copy_n(p.flat.data() + s.b_off, s.rows, b.data());
  ad::NodeP wn = t.leaf(std::move(w), true, s.w_off);
  bias_out = t.leaf(std::move(b), true, s.b_off);
  return wn;
}

inline ad::NodeP apply_linear(ad::Tape& t, const ad::NodeP& x, const ad::NodeP& w,
                              const ad::NodeP& b) {
  auto y = t.matmul_nt(x, w);
  return t.add(y, t.bcast_rows(b, static_cast<int>(x->rows())));
}

// Row-wise layer norm without learned affine terms; the following linear
// layer supplies scale and shift.
inline ad::NodeP layer_norm(ad::Tape& t, const ad::NodeP& x) {
  const int d = static_cast<int>(x->cols());
  const double inv_d = 1.0 / d;
  auto mu = t.scale(t.row_sum(x), inv_d);
  auto xc = t.sub(x, t.bcast_cols(mu, d));
  auto var = t.scale(t.row_sum(t.mul(xc, xc)), inv_d);
  auto r = t.rsqrt(t.add_const(var, 1e-5));
  return t.mul_colwise(xc, r);
}

}  // namespace detail

// Forward pass over a batch. `x` is B x in_total (y-slice, condition, time
// scalar already concatenated). Returns the score node, B x output_dim.
inline ad::NodeP score_forward(ad::Tape& t, const ParamSet& p, const ad::NodeP& x) {
  const MlpConfig& cfg = p.config;
  if (x->cols() != cfg.in_total()) throw ConfigError("score_forward: input width mismatch");
  ParamLayout lay = make_layout(cfg);
  ad::NodeP b;
  ad::NodeP w = detail::bind_linear(t, p, lay.in_proj, b);
  ad::NodeP h = detail::apply_linear(t, x, w, b);
  size_t li = 0;
  for (int blk = 0; blk < cfg.n_blocks; ++blk) {
    ad::NodeP z = cfg.layer_norm ? detail::layer_norm(t, h) : h;
    for (size_t j = 0; j < cfg.hidden.size(); ++j) {
      ad::NodeP bb;
      ad::NodeP ww = detail::bind_linear(t, p, lay.block_linears[li++], bb);
      z = t.relu(detail::apply_linear(t, z, ww, bb));
    }
    h = t.add(h, z);
  }
  ad::NodeP bo;
  ad::NodeP wo = detail::bind_linear(t, p, lay.out_proj, bo);
  return detail::apply_linear(t, h, wo, bo);
}

// Builds the network input rows [y | cond | t/T] for a batch that shares one
// condition vector and one timestep.
inline Mat assemble_input(const MlpConfig& cfg, const Mat& y, const Vec& cond,
                          double time01) {
  if (y.cols() != cfg.input_dim) throw ConfigError("input y width mismatch");
  if (cond.size() != cfg.cond_dim) throw ConfigError("condition width mismatch");
  Mat x(y.rows(), cfg.in_total());
  x.leftCols(cfg.input_dim) = y;
  for (Eigen::Index r = 0; r < y.rows(); ++r)
    for (int c = 0; c < cfg.cond_dim; ++c) x(r, cfg.input_dim + c) = cond[c];
  if (cfg.time_scalar) x.col(cfg.in_total() - 1).setConstant(time01);
  return x;
}

struct EnergyEval {
  double energy = 0.0;
  Vec grad_y;  // same length as the y-slice
  Vec score;
};

// Score network bound to a noise schedule (the schedule supplies T for the
// time scalar).
struct EnergyNet {
  ParamSet params;
  NoiseSchedule sched;

  double time01(int t) const {
    if (t < 1 || t > sched.T) throw ConfigError("timestep out of range");
    return static_cast<double>(t) / sched.T;
  }

  Vec score(const Vec& y, const Vec& cond, int t) const {
    ad::Tape tape;
    Mat x = assemble_input(params.config, Mat(y.transpose()), cond, time01(t));
    auto s = score_forward(tape, params, tape.constant(std::move(x)));
    return s->val.row(0).transpose();
  }

  // energy = |s|^2, grad_y = 2 J^T s restricted to the y columns.
  EnergyEval energy_and_grad(const Vec& y, const Vec& cond, int t) const {
    ad::Tape tape;
    Mat x = assemble_input(params.config, Mat(y.transpose()), cond, time01(t));
    auto xn = tape.leaf(std::move(x), true);
    auto s = score_forward(tape, params, xn);
    EnergyEval e;
    e.score = s->val.row(0).transpose();
    e.energy = e.score.squaredNorm();
    Mat dx = ad::vjp(tape, s, xn, Mat(2.0 * s->val));
    e.grad_y = dx.row(0).head(params.config.input_dim).transpose();
    require_finite(e.grad_y, "energy_and_grad");
    require_finite(e.energy, "energy_and_grad");
    return e;
  }

  double energy(const Vec& y, const Vec& cond, int t) const {
    return score(y, cond, t).squaredNorm();
  }
};

}  // namespace ecomp
