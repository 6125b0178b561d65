#pragma once

#include "ecomp/compose.hpp"
#include "ecomp/net.hpp"
#include "ecomp/schedule.hpp"

namespace ecomp {

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.9, beta2 = 0.999;
  double weight_decay = 0.01;
  double adam_eps = 1e-8;
  int epochs = 20000;
  int batch_size = 2048;
  double w_cl = 0.5;              // contrastive weight
  bool use_diffusion = true;      // off = contrastive-only ablation
  int negatives_per_positive = 0; // 0 = task default
  double clip_norm = 10.0;        // global-norm clip, 0 disables
  uint64_t seed = 7;
  int snapshot_every = 50;        // last-good fallback for numeric faults

  void validate() const {
    if (lr < 0 || batch_size < 1 || epochs < 0) throw ConfigError("bad train config");
    if (w_cl < 0) throw ConfigError("contrastive weight must be >= 0");
    if (!use_diffusion && w_cl == 0) throw ConfigError("no loss enabled");
  }
};

// One positive with its grouped negatives; `cond` is shared by the group.
struct Sample {
  Vec y;
  Vec cond;
  std::vector<Vec> negatives;
};

// Task-side data source. `draw` must be deterministic given the rng state.
class Dataset {
 public:
  virtual ~Dataset() = default;
  virtual int y_dim() const = 0;
  virtual int cond_dim() const = 0;
  virtual int default_negatives() const { return 1; }
  virtual Sample draw(Rng& rng, int n_negatives) const = 0;
};

struct TrainBatch {
  std::vector<Sample> items;
  std::vector<int> t;    // per positive, uniform in 1..T
  std::vector<Vec> eps;  // per positive, reused for its negatives

  void validate(int y_dim, bool need_negatives) const {
    for (size_t i = 0; i < items.size(); ++i) {
      if (items[i].y.size() != y_dim) throw ConfigError("batch y width mismatch");
      if (need_negatives && items[i].negatives.empty())
        throw ConfigError("contrastive loss needs non-empty negative groups");
    }
    if (t.size() != items.size() || eps.size() != items.size())
      throw ConfigError("batch t/eps size mismatch");
  }
};

inline TrainBatch make_batch(const Dataset& data, Rng& rng, int n, const NoiseSchedule& sched,
                             int n_negatives) {
  TrainBatch b;
  b.items.reserve(static_cast<size_t>(n));
  b.t.reserve(static_cast<size_t>(n));
  b.eps.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    b.items.push_back(data.draw(rng, n_negatives));
    b.t.push_back(1 + static_cast<int>(rng.below(static_cast<uint64_t>(sched.T))));
    Vec e(data.y_dim());
    rng.fill_normal(e);
    b.eps.push_back(std::move(e));
  }
  return b;
}

namespace detail {

inline Mat cond_time_block(const MlpConfig& cfg, const std::vector<const Vec*>& conds,
                           const std::vector<double>& t01) {
  const int rows = static_cast<int>(conds.size());
  Mat ct(rows, cfg.cond_dim + (cfg.time_scalar ? 1 : 0));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cfg.cond_dim; ++c) ct(r, c) = (*conds[static_cast<size_t>(r)])[c];
    if (cfg.time_scalar) ct(r, cfg.cond_dim) = t01[static_cast<size_t>(r)];
  }
  return ct;
}

}  // namespace detail

// Mean over [lo, hi) of |eps + sigma_t * grad_y E(y*, t)|^2, normalized by
// `denom`. Accumulates the parameter gradient when `grad` is non-null.
inline double diffusion_loss_part(const ParamSet& params, const TrainBatch& batch,
                                  const NoiseSchedule& sched, size_t lo, size_t hi,
                                  double denom, Vec* grad) {
  const MlpConfig& cfg = params.config;
  const int rows = static_cast<int>(hi - lo);
  if (rows == 0) return 0.0;
  const int k = cfg.input_dim;

  Mat ystar(rows, k);
  Vec sigma_col(rows);
  std::vector<const Vec*> conds(static_cast<size_t>(rows));
  std::vector<double> t01(static_cast<size_t>(rows));
  Mat eps(rows, k);
  for (int r = 0; r < rows; ++r) {
    const size_t i = lo + static_cast<size_t>(r);
    const double s = sched.at(batch.t[i]);
    ystar.row(r) = corrupt(batch.items[i].y, s, batch.eps[i]).transpose();
    sigma_col[r] = s;
    conds[static_cast<size_t>(r)] = &batch.items[i].cond;
    t01[static_cast<size_t>(r)] = static_cast<double>(batch.t[i]) / sched.T;
    eps.row(r) = batch.eps[i].transpose();
  }

  ad::Tape tape;
  auto yn = tape.leaf(std::move(ystar), true);
  Mat ct = detail::cond_time_block(cfg, conds, t01);
  auto xn = ct.cols() > 0 ? tape.concat_cols(yn, tape.constant(std::move(ct))) : yn;
  auto s = score_forward(tape, params, xn);
  // inner gradient, kept differentiable: grad_y E = 2 J^T s per row
  auto g = ad::backward(tape, s, tape.scale(s, 2.0), true).at(yn);
  if (!g) throw NumericFault("diffusion loss: missing inner gradient");
  Mat sc(rows, 1);
  sc.col(0) = sigma_col;
  auto r = tape.add(tape.constant(std::move(eps)), tape.mul_colwise(g, tape.constant(std::move(sc))));
  auto loss = tape.scale(tape.sum_all(tape.mul(r, r)), 1.0 / denom);
  const double value = loss->val(0, 0);
  require_finite(value, "diffusion loss");
  if (grad) {
    Mat one(1, 1);
    one(0, 0) = 1.0;
    ad::backward(tape, loss, std::move(one), false).add_param_grads(tape, *grad);
  }
  return value;
}

inline double diffusion_loss(const ParamSet& params, const TrainBatch& batch,
                             const NoiseSchedule& sched) {
  batch.validate(params.config.input_dim, false);
  return diffusion_loss_part(params, batch, sched, 0, batch.items.size(),
                             static_cast<double>(batch.items.size()), nullptr);
}

// -log( e^{-E+} / (e^{-E+} + sum e^{-E-}) ) for one group, positive energy
// first, log-sum-exp stabilized. `dE` (optional) receives dL/dE.
inline double contrastive_group_loss(const double* energies, int n, double* dE = nullptr) {
  if (n < 2) throw ConfigError("contrastive group needs a negative");
  double zmax = -energies[0];
  for (int j = 1; j < n; ++j) zmax = std::max(zmax, -energies[j]);
  double sum = 0.0;
  for (int j = 0; j < n; ++j) sum += std::exp(-energies[j] - zmax);
  const double lse = zmax + std::log(sum);
  if (dE) {
    for (int j = 0; j < n; ++j) {
      const double p = std::exp(-energies[j] - zmax) / sum;
      dE[j] = (j == 0 ? 1.0 : 0.0) - p;
    }
  }
  return lse + energies[0];
}

// Batched over groups: positives and negatives corrupted with the group's
// shared eps and t.
inline double contrastive_loss_part(const ParamSet& params, const TrainBatch& batch,
                                    const NoiseSchedule& sched, size_t lo, size_t hi,
                                    double denom, Vec* grad) {
  const MlpConfig& cfg = params.config;
  if (hi == lo) return 0.0;
  const int k = cfg.input_dim;
  int rows = 0;
  for (size_t i = lo; i < hi; ++i) rows += 1 + static_cast<int>(batch.items[i].negatives.size());

  Mat ystar(rows, k);
  std::vector<const Vec*> conds(static_cast<size_t>(rows));
  std::vector<double> t01(static_cast<size_t>(rows));
  std::vector<int> group_start;
  group_start.reserve(hi - lo + 1);
  int r = 0;
  for (size_t i = lo; i < hi; ++i) {
    group_start.push_back(r);
    const Sample& it = batch.items[i];
    const double s = sched.at(batch.t[i]);
    const double tt = static_cast<double>(batch.t[i]) / sched.T;
    ystar.row(r) = corrupt(it.y, s, batch.eps[i]).transpose();
    conds[static_cast<size_t>(r)] = &it.cond;
    t01[static_cast<size_t>(r)] = tt;
    ++r;
    for (const Vec& yneg : it.negatives) {
      ystar.row(r) = corrupt(yneg, s, batch.eps[i]).transpose();
      conds[static_cast<size_t>(r)] = &it.cond;
      t01[static_cast<size_t>(r)] = tt;
      ++r;
    }
  }
  group_start.push_back(r);

  ad::Tape tape;
  Mat x(rows, cfg.in_total());
  x.leftCols(k) = ystar;
  x.rightCols(cfg.in_total() - k) = detail::cond_time_block(cfg, conds, t01);
  auto xn = tape.constant(std::move(x));
  auto s = score_forward(tape, params, xn);
  auto e_col = tape.row_sum(tape.mul(s, s));

  // loss value and dL/dE per row; softmax over z = -E within each group
  double value = 0.0;
  Mat cot = Mat::Zero(rows, 1);
  std::vector<double> energies, de;
  for (size_t gi = 0; gi + 1 < group_start.size(); ++gi) {
    const int g0 = group_start[gi], g1 = group_start[gi + 1];
    energies.assign(static_cast<size_t>(g1 - g0), 0.0);
    de.assign(static_cast<size_t>(g1 - g0), 0.0);
    for (int j = g0; j < g1; ++j) energies[static_cast<size_t>(j - g0)] = e_col->val(j, 0);
    value += contrastive_group_loss(energies.data(), g1 - g0, de.data()) / denom;
    for (int j = g0; j < g1; ++j) cot(j, 0) = de[static_cast<size_t>(j - g0)] / denom;
  }
  require_finite(value, "contrastive loss");
  if (grad) ad::backward(tape, e_col, std::move(cot), false).add_param_grads(tape, *grad);
  return value;
}

inline double contrastive_loss(const ParamSet& params, const TrainBatch& batch,
                               const NoiseSchedule& sched) {
  batch.validate(params.config.input_dim, true);
  return contrastive_loss_part(params, batch, sched, 0, batch.items.size(),
                               static_cast<double>(batch.items.size()), nullptr);
}

// Decoupled weight decay Adam.
class AdamW {
 public:
  AdamW(int n, const TrainConfig& cfg) : cfg_(cfg), m_(Vec::Zero(n)), v_(Vec::Zero(n)) {}

  void step(Vec& theta, const Vec& grad) {
    ++t_;
    m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
    v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    theta -= cfg_.lr * ((m_ / bc1).array() / ((v_ / bc2).array().sqrt() + cfg_.adam_eps) +
                        cfg_.weight_decay * theta.array())
                           .matrix();
  }

 private:
  TrainConfig cfg_;
  Vec m_, v_;
  int t_ = 0;
};

struct CurveRow {
  int epoch;
  double mse, cl, total;
};

struct TrainReport {
  std::vector<CurveRow> curve;
  bool aborted = false;  // numeric fault; params are the last-good snapshot
};

inline void clip_global_norm(Vec& g, double max_norm) {
  if (max_norm <= 0) return;
  const double n = g.norm();
  if (n > max_norm) g *= max_norm / n;
}

// Shared minibatch loop: `accumulate(batch-like index range, grad)` returns the
// loss value for the epoch. Used by both clause-level training and composed
// fine-tuning.
template <class EpochFn>
inline void optimize_loop(ParamSet& params, const TrainConfig& cfg, TrainReport* report,
                          EpochFn&& epoch_fn) {
  AdamW opt(static_cast<int>(params.flat.size()), cfg);
  Vec snapshot = params.flat;
  Vec grad(params.flat.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    grad.setZero();
    CurveRow row{epoch, 0.0, 0.0, 0.0};
    bool ok = true;
    try {
      epoch_fn(epoch, grad, row);
    } catch (const NumericFault&) {
      ok = false;
    }
    if (!ok || !std::isfinite(row.total) || !grad.allFinite()) {
      params.flat = snapshot;  // last-good checkpoint
      if (report) report->aborted = true;
      return;
    }
    clip_global_norm(grad, cfg.clip_norm);
    opt.step(params.flat, grad);
    if (report) report->curve.push_back(row);
    if (cfg.snapshot_every > 0 && epoch % cfg.snapshot_every == 0) snapshot = params.flat;
  }
}

// Minibatch training of L = L_MSE + w_cl * L_CL with AdamW. Shards of the
// batch run in parallel; shard gradients are reduced in shard order, so a
// fixed seed and thread count reproduce bit-identical parameters.
inline ParamSet train(const TrainConfig& cfg, const Dataset& data, const MlpConfig& arch,
                      const NoiseSchedule& sched, TrainReport* report = nullptr) {
  cfg.validate();
  MlpConfig a = arch;
  a.input_dim = data.y_dim();
  a.cond_dim = data.cond_dim();
  a.output_dim = data.y_dim();
  ParamSet params = init_params(a);
  Rng rng(cfg.seed);
  const int negs = cfg.negatives_per_positive > 0 ? cfg.negatives_per_positive
                                                  : data.default_negatives();
  const int nthreads = thread_count();

  optimize_loop(params, cfg, report, [&](int, Vec& grad, CurveRow& row) {
    TrainBatch batch =
        make_batch(data, rng, cfg.batch_size, sched, cfg.w_cl > 0 ? negs : 0);
    const double denom = static_cast<double>(batch.items.size());
    const int shards = std::min(nthreads, static_cast<int>(batch.items.size()));
    std::vector<Vec> part_grad(static_cast<size_t>(shards), Vec::Zero(params.flat.size()));
    std::vector<double> part_mse(static_cast<size_t>(shards), 0.0);
    std::vector<double> part_cl(static_cast<size_t>(shards), 0.0);
    parallel_shards(static_cast<int>(batch.items.size()), shards,
                    [&](int sh, int lo, int hi) {
                      auto& g = part_grad[static_cast<size_t>(sh)];
                      if (cfg.use_diffusion)
                        part_mse[static_cast<size_t>(sh)] = diffusion_loss_part(
                            params, batch, sched, static_cast<size_t>(lo),
                            static_cast<size_t>(hi), denom, &g);
                      if (cfg.w_cl > 0) {
                        Vec gcl = Vec::Zero(params.flat.size());
                        part_cl[static_cast<size_t>(sh)] = contrastive_loss_part(
                            params, batch, sched, static_cast<size_t>(lo),
                            static_cast<size_t>(hi), denom, &gcl);
                        g += cfg.w_cl * gcl;
                      }
                    });
    for (int sh = 0; sh < shards; ++sh) {
      grad += part_grad[static_cast<size_t>(sh)];
      row.mse += part_mse[static_cast<size_t>(sh)];
      row.cl += part_cl[static_cast<size_t>(sh)];
    }
    row.total = row.mse + cfg.w_cl * row.cl;
  });
  return params;
}

// A full problem instance with its ground-truth solution, used to refine the
// composed landscape.
struct ComposedInstance {
  ViewMap vm;
  Vec y_gt;
};

// Loss of the composed refinement objective for one instance at (t, eps):
// |eps + sigma_t * grad_y sum_k E^k(y*, t)|^2 with y* = corrupt(y_gt, t, eps).
inline double composed_diffusion_loss(const ParamSet& params, const ComposedInstance& inst,
                                      const NoiseSchedule& sched, int t, const Vec& eps,
                                      double denom, Vec* grad) {
  const MlpConfig& cfg = params.config;
  const ViewMap& vm = inst.vm;
  const int V = static_cast<int>(vm.views.size());
  const int k = vm.slice_dim();
  if (inst.y_gt.size() != vm.global_dim) throw ConfigError("instance missing ground truth");
  const double sigma = sched.at(t);
  Vec ystar = corrupt(inst.y_gt, sigma, eps);

  auto idx = std::make_shared<std::vector<int>>();
  idx->reserve(static_cast<size_t>(V) * k);
  std::vector<const Vec*> conds(static_cast<size_t>(V));
  std::vector<double> t01(static_cast<size_t>(V), static_cast<double>(t) / sched.T);
  Vec weights(V);
  for (int v = 0; v < V; ++v) {
    const View& view = vm.views[static_cast<size_t>(v)];
    idx->insert(idx->end(), view.gather.begin(), view.gather.end());
    conds[static_cast<size_t>(v)] = &view.cond;
    weights[v] = view.weight;
  }

  ad::Tape tape;
  auto yn = tape.leaf(Mat(ystar.transpose()), true);
  auto slices = tape.gather(yn, idx, V, k);
  Mat ct = detail::cond_time_block(cfg, conds, t01);
  auto xn = ct.cols() > 0 ? tape.concat_cols(slices, tape.constant(std::move(ct))) : slices;
  auto s = score_forward(tape, params, xn);
  ad::NodeP seed = tape.scale(s, 2.0);
  if ((weights.array() != 1.0).any()) {
    Mat wc(V, 1);
    wc.col(0) = weights;
    seed = tape.mul_colwise(seed, tape.constant(std::move(wc)));
  }
  auto g = ad::backward(tape, s, seed, true).at(yn);
  if (!g) throw NumericFault("composed loss: missing inner gradient");
  auto r = tape.add(tape.constant(Mat(eps.transpose())), tape.scale(g, sigma));
  auto loss = tape.scale(tape.sum_all(tape.mul(r, r)), 1.0 / denom);
  const double value = loss->val(0, 0);
  require_finite(value, "composed diffusion loss");
  if (grad) {
    Mat one(1, 1);
    one(0, 0) = 1.0;
    ad::backward(tape, loss, std::move(one), false).add_param_grads(tape, *grad);
  }
  return value;
}

// Eq.-7 style refinement: continue diffusion training where the supervised
// gradient is the scatter-summed gradient of the composed energy over each
// instance's views.
inline ParamSet finetune_composed(const ParamSet& start,
                                  const std::vector<ComposedInstance>& instances,
                                  const NoiseSchedule& sched, const TrainConfig& cfg,
                                  TrainReport* report = nullptr) {
  cfg.validate();
  if (instances.empty()) throw ConfigError("finetune needs instances");
  for (const auto& inst : instances)
    if (inst.y_gt.size() != inst.vm.global_dim)
      throw ConfigError("finetune instance missing ground truth");
  ParamSet params = start;
  params.check();
  Rng rng(cfg.seed);
  const int nthreads = thread_count();

  optimize_loop(params, cfg, report, [&](int, Vec& grad, CurveRow& row) {
    const int B = std::min<int>(cfg.batch_size, static_cast<int>(instances.size()));
    std::vector<const ComposedInstance*> mb(static_cast<size_t>(B));
    std::vector<int> ts(static_cast<size_t>(B));
    std::vector<Vec> epss(static_cast<size_t>(B));
    for (int i = 0; i < B; ++i) {
      mb[static_cast<size_t>(i)] =
          &instances[rng.below(static_cast<uint64_t>(instances.size()))];
      ts[static_cast<size_t>(i)] = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(sched.T)));
      Vec e(mb[static_cast<size_t>(i)]->vm.global_dim);
      rng.fill_normal(e);
      epss[static_cast<size_t>(i)] = std::move(e);
    }
    const int shards = std::min(nthreads, B);
    std::vector<Vec> part_grad(static_cast<size_t>(shards), Vec::Zero(params.flat.size()));
    std::vector<double> part_loss(static_cast<size_t>(shards), 0.0);
    parallel_shards(B, shards, [&](int sh, int lo, int hi) {
      for (int i = lo; i < hi; ++i)
        part_loss[static_cast<size_t>(sh)] += composed_diffusion_loss(
            params, *mb[static_cast<size_t>(i)], sched, ts[static_cast<size_t>(i)],
            epss[static_cast<size_t>(i)], static_cast<double>(B),
            &part_grad[static_cast<size_t>(sh)]);
    });
    for (int sh = 0; sh < shards; ++sh) {
      grad += part_grad[static_cast<size_t>(sh)];
      row.mse += part_loss[static_cast<size_t>(sh)];
    }
    row.total = row.mse;
  });
  return params;
}

}  // namespace ecomp
