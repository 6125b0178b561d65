#pragma once

#include "ecomp/net.hpp"

#include <json.hpp>

#include <memory>
#include <numeric>

namespace ecomp {

// One subproblem's window onto the global solution vector: the coordinates it
// reads plus the condition its energy model consumes.
struct View {
  std::vector<int> gather;
  Vec cond;
  double weight = 1.0;
};

struct ViewMap {
  std::vector<View> views;
  int global_dim = 0;

  int slice_dim() const { return views.empty() ? 0 : static_cast<int>(views[0].gather.size()); }
  int cond_dim() const { return views.empty() ? 0 : static_cast<int>(views[0].cond.size()); }

  void validate() const {
    if (views.empty()) throw ConfigError("ViewMap needs at least one view");
    if (global_dim < 1) throw ConfigError("ViewMap global_dim must be >= 1");
    const size_t k = views[0].gather.size();
    const Eigen::Index c = views[0].cond.size();
    std::vector<uint8_t> seen(static_cast<size_t>(global_dim), 0);
    for (const auto& v : views) {
      if (v.gather.size() != k) throw ConfigError("views must share one slice width");
      if (v.cond.size() != c) throw ConfigError("views must share one condition width");
      for (int i : v.gather) {
        if (i < 0 || i >= global_dim) throw ConfigError("gather index out of bounds");
        seen[static_cast<size_t>(i)] = 1;
      }
    }
    for (size_t i = 0; i < seen.size(); ++i)
      if (!seen[i])
        throw ConfigError("global coordinate " + std::to_string(i) + " appears in no view");
  }
};

// Union of view lists over the same global vector. Maps with no views pass
// through as neutral elements.
inline ViewMap concat_views(const std::vector<ViewMap>& maps) {
  if (maps.empty()) throw ConfigError("concat_views: empty list");
  ViewMap out;
  out.global_dim = 0;
  for (const auto& m : maps) {
    if (m.views.empty()) continue;
    if (out.global_dim == 0) out.global_dim = m.global_dim;
    if (m.global_dim != out.global_dim) throw ConfigError("concat_views: global_dim mismatch");
    out.views.insert(out.views.end(), m.views.begin(), m.views.end());
  }
  if (out.global_dim == 0 && !maps.empty()) out.global_dim = maps[0].global_dim;
  return out;
}

inline void to_json(nlohmann::json& j, const View& v) {
  j = nlohmann::json{{"gather", v.gather},
                     {"cond", std::vector<double>(v.cond.data(), v.cond.data() + v.cond.size())},
                     {"weight", v.weight}};
}

inline void from_json(const nlohmann::json& j, View& v) {
  v.gather = j.at("gather").get<std::vector<int>>();
  auto c = j.at("cond").get<std::vector<double>>();
  v.cond = Eigen::Map<const Vec>(c.data(), static_cast<Eigen::Index>(c.size()));
  v.weight = j.value("weight", 1.0);
}

inline void to_json(nlohmann::json& j, const ViewMap& m) {
  j = nlohmann::json{{"global_dim", m.global_dim}, {"views", m.views}};
}

inline void from_json(const nlohmann::json& j, ViewMap& m) {
  m.global_dim = j.at("global_dim").get<int>();
  m.views = j.at("views").get<std::vector<View>>();
}

// Callback bundle the samplers run against: composed energy and gradient for
// a batch of candidate vectors, plus an optional coordinate mask for pinned
// coordinates (padding sentinels, colors beyond the chromatic budget).
struct EnergyLandscape {
  int dim = 0;
  std::vector<uint8_t> active;  // empty = all coordinates free
  std::function<void(const Mat& Y, int t, Vec& E, Mat* G)> eval;

  bool is_active(int i) const { return active.empty() || active[static_cast<size_t>(i)]; }
};

// Composed energy of Eq.-style view sums. All views of a map share the same
// slice and condition widths, so a chunk of (view, particle) pairs evaluates
// as one batched forward/backward pass.
class ComposedModel {
 public:
  ComposedModel(const EnergyNet& net, ViewMap vm, int max_chunk_rows = 4096)
      : net_(&net), vm_(std::move(vm)), max_rows_(max_chunk_rows) {
    vm_.validate();
    const int k = vm_.slice_dim();
    const MlpConfig& cfg = net.params.config;
    if (k != cfg.input_dim || vm_.cond_dim() != cfg.cond_dim)
      throw ConfigError("ViewMap does not match network dimensions");
    const int V = static_cast<int>(vm_.views.size());
    idx_.resize(static_cast<size_t>(V) * k);
    cond_.resize(V, std::max(vm_.cond_dim(), 0));
    weights_.resize(V);
    for (int v = 0; v < V; ++v) {
      const View& view = vm_.views[static_cast<size_t>(v)];
      for (int j = 0; j < k; ++j) idx_[static_cast<size_t>(v) * k + j] = view.gather[j];
      for (int c = 0; c < vm_.cond_dim(); ++c) cond_(v, c) = view.cond[c];
      weights_[v] = view.weight;
    }
  }

  const ViewMap& view_map() const { return vm_; }
  const EnergyNet& net() const { return *net_; }

  // E[p] = sum_v w_v |s(slice_v(Y_p), cond_v, t)|^2; G optional, P x D.
  void eval(const Mat& Y, int t, Vec& E, Mat* G) const {
    const int P = static_cast<int>(Y.rows());
    const int D = vm_.global_dim;
    if (static_cast<int>(Y.cols()) != D) throw ConfigError("composed eval: dim mismatch");
    const int V = static_cast<int>(vm_.views.size());
    const int k = vm_.slice_dim();
    const int cdim = vm_.cond_dim();
    const int in_total = net_->params.config.in_total();
    const double t01 = net_->time01(t);

    E = Vec::Zero(P);
    if (G) *G = Mat::Zero(P, D);

    const int pc = std::min(P, std::max(1, max_rows_));
    const int vc = std::max(1, max_rows_ / pc);
    for (int p0 = 0; p0 < P; p0 += pc) {
      const int np = std::min(pc, P - p0);
      for (int v0 = 0; v0 < V; v0 += vc) {
        const int nv = std::min(vc, V - v0);
        const int rows = nv * np;
        Mat x(rows, in_total);
        for (int v = 0; v < nv; ++v) {
          const int* gi = idx_.data() + static_cast<size_t>(v0 + v) * k;
          for (int p = 0; p < np; ++p) {
            const int r = v * np + p;
            for (int j = 0; j < k; ++j) x(r, j) = Y(p0 + p, gi[j]);
            for (int c = 0; c < cdim; ++c) x(r, k + c) = cond_(v0 + v, c);
          }
        }
        if (net_->params.config.time_scalar) x.col(in_total - 1).setConstant(t01);

        ad::Tape tape;
        auto xn = tape.leaf(std::move(x), G != nullptr);
        auto s = score_forward(tape, net_->params, xn);
        for (int v = 0; v < nv; ++v) {
          const double w = weights_[v0 + v];
          for (int p = 0; p < np; ++p)
            E[p0 + p] += w * s->val.row(v * np + p).squaredNorm();
        }
        if (G) {
          Mat seed = 2.0 * s->val;
          for (int v = 0; v < nv; ++v)
            seed.middleRows(static_cast<Eigen::Index>(v) * np, np) *= weights_[v0 + v];
          Mat dx = ad::vjp(tape, s, xn, seed);
          for (int v = 0; v < nv; ++v) {
            const int* gi = idx_.data() + static_cast<size_t>(v0 + v) * k;
            for (int p = 0; p < np; ++p) {
              const int r = v * np + p;
              for (int j = 0; j < k; ++j) (*G)(p0 + p, gi[j]) += dx(r, j);
            }
          }
        }
      }
    }
    require_finite(E, "composed energy");
    if (G) require_finite(*G, "composed gradient");
  }

  EnergyLandscape landscape(std::vector<uint8_t> mask = {}) const {
    EnergyLandscape l;
    l.dim = vm_.global_dim;
    l.active = std::move(mask);
    if (!l.active.empty() && static_cast<int>(l.active.size()) != vm_.global_dim)
      throw ConfigError("mask length must equal global_dim");
    const ComposedModel* self = this;
    l.eval = [self](const Mat& Y, int t, Vec& E, Mat* G) { self->eval(Y, t, E, G); };
    return l;
  }

  // Shared index table (n_views x k, flattened), condition rows and weights;
  // reused by the composed training objective.
  std::shared_ptr<const std::vector<int>> index_table() const {
    return std::make_shared<const std::vector<int>>(idx_);
  }
  const Mat& cond_rows() const { return cond_; }
  const Vec& view_weights() const { return weights_; }

 private:
  const EnergyNet* net_;
  ViewMap vm_;
  std::vector<int> idx_;
  Mat cond_;
  Vec weights_;
  int max_rows_;
};

inline double composed_energy(const EnergyNet& net, const ViewMap& vm, const Vec& y, int t) {
  ComposedModel m(net, vm);
  Vec e;
  m.eval(Mat(y.transpose()), t, e, nullptr);
  return e[0];
}

inline Vec composed_grad(const EnergyNet& net, const ViewMap& vm, const Vec& y, int t) {
  ComposedModel m(net, vm);
  Vec e;
  Mat g;
  m.eval(Mat(y.transpose()), t, e, &g);
  return g.row(0).transpose();
}

}  // namespace ecomp
