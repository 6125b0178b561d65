#pragma once

#include "ecomp/compose.hpp"
#include "ecomp/trainer.hpp"

#include <algorithm>
#include <cmath>

namespace ecomp::queens {

// N x N board, row-major cells. Continuous entries form a heatmap; a binary
// board marks queen placements with 1.
struct Board {
  int n = 0;
  Vec cells;

  double at(int r, int c) const { return cells[r * n + c]; }
  double& at(int r, int c) { return cells[r * n + c]; }

  static Board zero(int n) {
    Board b;
    b.n = n;
    b.cells = Vec::Zero(n * n);
    return b;
  }

  std::vector<std::pair<int, int>> queen_cells() const {
    std::vector<std::pair<int, int>> out;
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c)
        if (at(r, c) > 0.5) out.emplace_back(r, c);
    return out;
  }
};

inline bool attacks(std::pair<int, int> a, std::pair<int, int> b) {
  return a.first == b.first || a.second == b.second ||
         a.first - a.second == b.first - b.second || a.first + a.second == b.first + b.second;
}

inline bool is_valid_solution(const Board& b) {
  auto q = b.queen_cells();
  if (static_cast<int>(q.size()) != b.n) return false;
  for (size_t i = 0; i < q.size(); ++i)
    for (size_t j = i + 1; j < q.size(); ++j)
      if (attacks(q[i], q[j])) return false;
  return true;
}

// Exhaustive backtracking enumeration, test oracle for small boards.
inline std::vector<Board> enumerate_solutions(int n) {
  if (n < 1 || n > 10) throw ConfigError("enumerate_solutions supports 1 <= N <= 10");
  std::vector<Board> out;
  std::vector<int> col(static_cast<size_t>(n), -1);
  uint32_t cols = 0, d1 = 0, d2 = 0;
  std::function<void(int)> rec = [&](int r) {
    if (r == n) {
      Board b = Board::zero(n);
      for (int i = 0; i < n; ++i) b.at(i, col[static_cast<size_t>(i)]) = 1.0;
      out.push_back(std::move(b));
      return;
    }
    for (int c = 0; c < n; ++c) {
      const uint32_t cb = 1u << c, d1b = 1u << (r + c), d2b = 1u << (r - c + n - 1);
      if ((cols & cb) || (d1 & d1b) || (d2 & d2b)) continue;
      cols |= cb; d1 |= d1b; d2 |= d2b;
      col[static_cast<size_t>(r)] = c;
      rec(r + 1);
      cols &= ~cb; d1 &= ~d1b; d2 &= ~d2b;
    }
  };
  rec(0);
  return out;
}

struct DiagPolicy {
  int min_len = 2;      // diagonals shorter than this are dropped
  double weight = 1.0;  // weight of diagonal views
};

// Global vector: N^2 board cells, row-major, plus one constant-zero sentinel
// coordinate when any diagonal needs padding to length N. Views: N rows,
// N columns, and all diagonals (both directions) of length >= min_len, padded
// with the sentinel to the shared width N.
inline ViewMap build_views(int n, const DiagPolicy& policy = {}) {
  if (n < 4) throw ConfigError("build_views needs N >= 4");
  if (policy.min_len < 1 || policy.min_len > n) throw ConfigError("bad diagonal policy");
  std::vector<std::vector<int>> diags;
  for (int k = -(n - 1); k <= n - 1; ++k) {  // r - c = k
    std::vector<int> d;
    for (int r = 0; r < n; ++r) {
      const int c = r - k;
      if (c >= 0 && c < n) d.push_back(r * n + c);
    }
    if (static_cast<int>(d.size()) >= policy.min_len) diags.push_back(std::move(d));
  }
  for (int s = 0; s <= 2 * (n - 1); ++s) {  // r + c = s
    std::vector<int> d;
    for (int r = 0; r < n; ++r) {
      const int c = s - r;
      if (c >= 0 && c < n) d.push_back(r * n + c);
    }
    if (static_cast<int>(d.size()) >= policy.min_len) diags.push_back(std::move(d));
  }
  bool needs_pad = false;
  for (const auto& d : diags) needs_pad |= static_cast<int>(d.size()) < n;

  ViewMap vm;
  vm.global_dim = n * n + (needs_pad ? 1 : 0);
  const int sentinel = n * n;
  auto add_view = [&vm](std::vector<int> gather, double w) {
    View v;
    v.gather = std::move(gather);
    v.cond = Vec();
    v.weight = w;
    vm.views.push_back(std::move(v));
  };
  for (int r = 0; r < n; ++r) {
    std::vector<int> g(static_cast<size_t>(n));
    for (int c = 0; c < n; ++c) g[static_cast<size_t>(c)] = r * n + c;
    add_view(std::move(g), 1.0);
  }
  for (int c = 0; c < n; ++c) {
    std::vector<int> g(static_cast<size_t>(n));
    for (int r = 0; r < n; ++r) g[static_cast<size_t>(r)] = r * n + c;
    add_view(std::move(g), 1.0);
  }
  for (auto& d : diags) {
    while (static_cast<int>(d.size()) < n) d.push_back(sentinel);
    add_view(std::move(d), policy.weight);
  }
  return vm;
}

// Coordinate mask pinning the padding sentinel at zero during sampling.
inline std::vector<uint8_t> sentinel_mask(int n, const ViewMap& vm) {
  std::vector<uint8_t> mask(static_cast<size_t>(vm.global_dim), 1);
  if (vm.global_dim == n * n + 1) mask.back() = 0;
  return mask;
}

// Training data: the N rows of one ground-truth solution as one-hot positives;
// negatives are the empty row and rows holding two queens.
class RowDataset final : public Dataset {
 public:
  RowDataset(int n, const Board& solution) : n_(n) {
    if (solution.n != n || !is_valid_solution(solution))
      throw ConfigError("RowDataset needs a valid solution board");
    for (int r = 0; r < n; ++r) {
      Vec row = Vec::Zero(n);
      for (int c = 0; c < n; ++c) row[c] = solution.at(r, c) > 0.5 ? 1.0 : 0.0;
      positives_.push_back(std::move(row));
    }
  }

  const std::vector<Vec>& positives() const { return positives_; }

  int y_dim() const override { return n_; }
  int cond_dim() const override { return 0; }
  int default_negatives() const override { return 3; }

  // Negative kinds cycle through: empty row, the positive with one extra
  // queen, and a two-queen row at random positions.
  Sample draw(Rng& rng, int n_negatives) const override {
    Sample s;
    const size_t pick = rng.below(positives_.size());
    s.y = positives_[pick];
    s.cond = Vec();
    for (int j = 0; j < n_negatives; ++j) {
      switch (j % 3) {
        case 0:
          s.negatives.push_back(Vec::Zero(n_));
          break;
        case 1: {
          Vec v = s.y;
          int extra = static_cast<int>(rng.below(static_cast<uint64_t>(n_)));
          while (v[extra] > 0.5) extra = static_cast<int>(rng.below(static_cast<uint64_t>(n_)));
          v[extra] = 1.0;
          s.negatives.push_back(std::move(v));
          break;
        }
        default: {
          Vec v = Vec::Zero(n_);
          const int a = static_cast<int>(rng.below(static_cast<uint64_t>(n_)));
          int b = static_cast<int>(rng.below(static_cast<uint64_t>(n_)));
          while (b == a) b = static_cast<int>(rng.below(static_cast<uint64_t>(n_)));
          v[a] = 1.0;
          v[b] = 1.0;
          s.negatives.push_back(std::move(v));
          break;
        }
      }
    }
    return s;
  }

 private:
  int n_;
  std::vector<Vec> positives_;
};

// Greedy heatmap decoding: cells in descending score (row-major tie-break),
// queens placed while skipping conflicts. `stop_on_conflict` switches to the
// stricter reading that halts at the first conflicting candidate.
inline Board decode_greedy(const Board& heatmap, bool stop_on_conflict = false) {
  require_finite(heatmap.cells, "decode_greedy heatmap");
  const int n = heatmap.n;
  std::vector<int> order(static_cast<size_t>(n * n));
  for (int i = 0; i < n * n; ++i) order[static_cast<size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return heatmap.cells[a] > heatmap.cells[b]; });
  Board out = Board::zero(n);
  std::vector<std::pair<int, int>> placed;
  for (int cell : order) {
    if (static_cast<int>(placed.size()) == n) break;
    const std::pair<int, int> pos{cell / n, cell % n};
    bool conflict = false;
    for (const auto& q : placed)
      if (attacks(q, pos)) {
        conflict = true;
        break;
      }
    if (conflict) {
      if (stop_on_conflict) break;
      continue;
    }
    placed.push_back(pos);
    out.at(pos.first, pos.second) = 1.0;
  }
  return out;
}

// Extracts the board heatmap from a sampled global vector (sentinel dropped).
inline Board heatmap_from_global(int n, const Vec& y) {
  Board b;
  b.n = n;
  b.cells = y.head(n * n);
  return b;
}

struct Metrics {
  int correct = 0;
  double mean_size = 0.0;
  double std_size = 0.0;
};

inline Metrics evaluate(const std::vector<Board>& boards) {
  Metrics m;
  if (boards.empty()) return m;
  double sum = 0.0, sum2 = 0.0;
  for (const auto& b : boards) {
    const double size = static_cast<double>(b.queen_cells().size());
    sum += size;
    sum2 += size * size;
    if (is_valid_solution(b)) ++m.correct;
  }
  const double n = static_cast<double>(boards.size());
  m.mean_size = sum / n;
  m.std_size = std::sqrt(std::max(0.0, sum2 / n - m.mean_size * m.mean_size));
  return m;
}

}  // namespace ecomp::queens
