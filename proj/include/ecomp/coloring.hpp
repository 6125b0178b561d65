#pragma once

#include "ecomp/compose.hpp"
#include "ecomp/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <optional>
#include <set>

namespace ecomp::coloring {

struct Graph {
  int n_nodes = 0;
  std::vector<std::pair<int, int>> edges;  // undirected, u < v, deduplicated
  std::optional<int> chi;                  // known chromatic number, if any

  void validate() const {
    if (n_nodes < 1) throw ConfigError("graph needs nodes");
    std::set<std::pair<int, int>> seen;
    for (auto [u, v] : edges) {
      if (u < 0 || v < 0 || u >= n_nodes || v >= n_nodes)
        throw ConfigError("edge endpoint out of range");
      if (u == v) throw ConfigError("self-loop");
      if (u > v) std::swap(u, v);
      if (!seen.insert({u, v}).second) throw ConfigError("duplicate edge");
    }
  }

  double density() const {
    if (n_nodes < 2) return 0.0;
    return 2.0 * static_cast<double>(edges.size()) /
           (static_cast<double>(n_nodes) * (n_nodes - 1));
  }

  std::vector<std::vector<int>> adjacency() const {
    std::vector<std::vector<int>> adj(static_cast<size_t>(n_nodes));
    for (auto [u, v] : edges) {
      adj[static_cast<size_t>(u)].push_back(v);
      adj[static_cast<size_t>(v)].push_back(u);
    }
    return adj;
  }
};

inline Graph make_graph(int n, std::vector<std::pair<int, int>> edges) {
  for (auto& e : edges)
    if (e.first > e.second) std::swap(e.first, e.second);
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  Graph g;
  g.n_nodes = n;
  g.edges = std::move(edges);
  g.validate();
  return g;
}

struct Coloring {
  std::vector<int> color;  // per node, < palette
  int palette = 0;
};

inline int conflict_count(const Graph& g, const Coloring& c) {
  if (static_cast<int>(c.color.size()) != g.n_nodes)
    throw ConfigError("coloring does not cover all nodes");
  int conflicts = 0;
  for (auto [u, v] : g.edges)
    if (c.color[static_cast<size_t>(u)] == c.color[static_cast<size_t>(v)]) ++conflicts;
  return conflicts;
}

inline bool is_proper(const Graph& g, const Coloring& c) { return conflict_count(g, c) == 0; }

// Global vector: one K-wide one-hot block per node. One view per edge
// gathering both endpoint blocks; no condition vector.
inline ViewMap edge_views(const Graph& g, int K) {
  g.validate();
  if (K < 2) throw ConfigError("palette must have >= 2 colors");
  if (g.edges.empty()) throw ConfigError("edge_views: graph has no edges");
  ViewMap vm;
  vm.global_dim = g.n_nodes * K;
  vm.views.reserve(g.edges.size());
  for (auto [u, v] : g.edges) {
    View view;
    view.gather.reserve(static_cast<size_t>(2 * K));
    for (int c = 0; c < K; ++c) view.gather.push_back(u * K + c);
    for (int c = 0; c < K; ++c) view.gather.push_back(v * K + c);
    view.cond = Vec();
    vm.views.push_back(std::move(view));
  }
  return vm;
}

// Mask pinning colors beyond the chromatic budget at zero: only the first
// `chi` coordinates of each node block receive noise and gradient.
inline std::vector<uint8_t> budget_mask(int n_nodes, int K, int chi) {
  if (chi < 1 || chi > K) throw ConfigError("budget must be within the palette");
  std::vector<uint8_t> mask(static_cast<size_t>(n_nodes) * K, 0);
  for (int v = 0; v < n_nodes; ++v)
    for (int c = 0; c < chi; ++c) mask[static_cast<size_t>(v) * K + c] = 1;
  return mask;
}

// Edge-pair training data over a fixed palette: positives are one-hot pairs
// of distinct colors; negatives are the same-color pair and the positive with
// one coordinate nudged by uniform noise.
class EdgeDataset final : public Dataset {
 public:
  explicit EdgeDataset(int K) : k_(K) {
    if (K < 2) throw ConfigError("palette must have >= 2 colors");
  }

  int y_dim() const override { return 2 * k_; }
  int cond_dim() const override { return 0; }
  int default_negatives() const override { return 2; }

  Sample draw(Rng& rng, int n_negatives) const override {
    const int c1 = static_cast<int>(rng.below(static_cast<uint64_t>(k_)));
    int c2 = static_cast<int>(rng.below(static_cast<uint64_t>(k_)));
    while (c2 == c1) c2 = static_cast<int>(rng.below(static_cast<uint64_t>(k_)));
    Sample s;
    s.cond = Vec();
    s.y = Vec::Zero(2 * k_);
    s.y[c1] = 1.0;
    s.y[k_ + c2] = 1.0;
    for (int j = 0; j < n_negatives; ++j) {
      if (j % 2 == 0) {
        Vec v = Vec::Zero(2 * k_);  // same color on both endpoints
        v[c1] = 1.0;
        v[k_ + c1] = 1.0;
        s.negatives.push_back(std::move(v));
      } else {
        Vec v = s.y;  // break the one-hot structure at a random position
        const int pos = static_cast<int>(rng.below(static_cast<uint64_t>(2 * k_)));
        v[pos] += rng.uniform(-1.0, 1.0);
        s.negatives.push_back(std::move(v));
      }
    }
    return s;
  }

 private:
  int k_;
};

// Per node, argmax over the first `chi` entries of its block.
inline Coloring decode_colors(const Vec& y, int chi, int K) {
  if (chi < 1 || chi > K) throw ConfigError("decode budget out of range");
  if (y.size() % K != 0) throw ConfigError("decode: vector is not node blocks");
  const int n = static_cast<int>(y.size()) / K;
  Coloring c;
  c.palette = chi;
  c.color.resize(static_cast<size_t>(n));
  for (int v = 0; v < n; ++v) {
    int best = 0;
    double best_val = y[v * K];
    for (int j = 1; j < chi; ++j)
      if (y[v * K + j] > best_val) {
        best_val = y[v * K + j];
        best = j;
      }
    c.color[static_cast<size_t>(v)] = best;
  }
  return c;
}

namespace detail {

// DSATUR-ordered branch and bound deciding k-colorability.
class KColorSearch {
 public:
  KColorSearch(const Graph& g, int k, std::chrono::steady_clock::time_point deadline)
      : g_(g), adj_(g.adjacency()), k_(k), deadline_(deadline),
        color_(static_cast<size_t>(g.n_nodes), -1),
        sat_(static_cast<size_t>(g.n_nodes)) {
    for (auto& s : sat_) s.assign(static_cast<size_t>(k_), 0);
  }

  // nullopt on timeout
  std::optional<bool> run(Coloring* out) {
    timed_out_ = false;
    const bool ok = rec(0, 0);
    if (timed_out_) return std::nullopt;
    if (ok && out) {
      out->palette = k_;
      out->color = color_;
    }
    return ok;
  }

 private:
  const Graph& g_;
  std::vector<std::vector<int>> adj_;
  int k_;
  std::chrono::steady_clock::time_point deadline_;
  std::vector<int> color_;
  std::vector<std::vector<int>> sat_;  // per node, count of neighbors using color
  bool timed_out_ = false;
  int steps_ = 0;

  int saturation(int v) const {
    int s = 0;
    for (int c = 0; c < k_; ++c) s += sat_[static_cast<size_t>(v)][static_cast<size_t>(c)] > 0;
    return s;
  }

  bool rec(int colored, int max_used) {
    if (++steps_ % 4096 == 0 && std::chrono::steady_clock::now() > deadline_) {
      timed_out_ = true;
      return false;
    }
    if (colored == g_.n_nodes) return true;
    // pick the uncolored node with maximum saturation, degree as tie-break
    int pick = -1, best_sat = -1, best_deg = -1;
    for (int v = 0; v < g_.n_nodes; ++v) {
      if (color_[static_cast<size_t>(v)] >= 0) continue;
      const int s = saturation(v);
      const int d = static_cast<int>(adj_[static_cast<size_t>(v)].size());
      if (s > best_sat || (s == best_sat && d > best_deg)) {
        pick = v;
        best_sat = s;
        best_deg = d;
      }
    }
    // trying more than one fresh color only relabels the palette
    const int limit = std::min(k_, max_used + 1);
    for (int c = 0; c < limit; ++c) {
      if (sat_[static_cast<size_t>(pick)][static_cast<size_t>(c)] > 0) continue;
      color_[static_cast<size_t>(pick)] = c;
      for (int nb : adj_[static_cast<size_t>(pick)]) ++sat_[static_cast<size_t>(nb)][static_cast<size_t>(c)];
      if (rec(colored + 1, std::max(max_used, c + 1))) return true;
      for (int nb : adj_[static_cast<size_t>(pick)]) --sat_[static_cast<size_t>(nb)][static_cast<size_t>(c)];
      color_[static_cast<size_t>(pick)] = -1;
      if (timed_out_) return false;
    }
    return false;
  }
};

inline int greedy_clique_bound(const Graph& g) {
  auto adj = g.adjacency();
  std::vector<int> order(static_cast<size_t>(g.n_nodes));
  for (int i = 0; i < g.n_nodes; ++i) order[static_cast<size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return adj[static_cast<size_t>(a)].size() > adj[static_cast<size_t>(b)].size();
  });
  std::vector<std::vector<uint8_t>> am(static_cast<size_t>(g.n_nodes),
                                       std::vector<uint8_t>(static_cast<size_t>(g.n_nodes), 0));
  for (auto [u, v] : g.edges) {
    am[static_cast<size_t>(u)][static_cast<size_t>(v)] = 1;
    am[static_cast<size_t>(v)][static_cast<size_t>(u)] = 1;
  }
  std::vector<int> clique;
  for (int v : order) {
    bool ok = true;
    for (int c : clique)
      if (!am[static_cast<size_t>(v)][static_cast<size_t>(c)]) {
        ok = false;
        break;
      }
    if (ok) clique.push_back(v);
  }
  return static_cast<int>(clique.size());
}

}  // namespace detail

inline std::optional<bool> k_colorable(const Graph& g, int k, double timeout_sec = 30.0,
                                       Coloring* witness = nullptr) {
  g.validate();
  if (k >= g.n_nodes) {
    if (witness) {
      witness->palette = k;
      witness->color.resize(static_cast<size_t>(g.n_nodes));
      for (int v = 0; v < g.n_nodes; ++v) witness->color[static_cast<size_t>(v)] = v % std::max(1, k);
    }
    return true;
  }
  if (k < 1) return g.edges.empty() && g.n_nodes == 0;
  auto deadline = std::chrono::steady_clock::now() +
                  std::chrono::microseconds(static_cast<long>(timeout_sec * 1e6));
  detail::KColorSearch search(g, k, deadline);
  return search.run(witness);
}

// Exact chromatic number via branch and bound with a greedy clique lower
// bound; returns nullopt on timeout.
inline std::optional<int> chromatic_number(const Graph& g, double timeout_sec = 30.0) {
  g.validate();
  if (g.n_nodes > 150) throw ConfigError("exact chromatic number supports <= 150 nodes");
  if (g.edges.empty()) return 1;
  const auto start = std::chrono::steady_clock::now();
  int k = std::max(2, detail::greedy_clique_bound(g));
  for (; k <= g.n_nodes; ++k) {
    const double spent =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    auto res = k_colorable(g, k, timeout_sec - spent);
    if (!res.has_value()) return std::nullopt;  // timeout: caller must supply chi
    if (*res) return k;
  }
  return g.n_nodes;
}

}  // namespace ecomp::coloring
