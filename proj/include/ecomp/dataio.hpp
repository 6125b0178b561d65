#pragma once

#include "ecomp/coloring.hpp"
#include "ecomp/sat.hpp"

#include <optional>
#include <sstream>
#include <string>

namespace ecomp::io {

// DIMACS CNF: 'c' comments, 'p cnf <vars> <clauses>' header, clauses as
// 0-terminated signed 1-based literals. Strict mode rejects clauses that do
// not have exactly three distinct literals.
inline sat::Cnf parse_cnf(const std::string& text, bool strict = true) {
  std::istringstream in(text);
  std::string line;
  sat::Cnf cnf;
  bool have_header = false;
  int declared_clauses = 0;
  std::vector<int> pending;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == 'c' || line[0] == '%') continue;
    if (line[0] == 'p') {
      std::istringstream h(line);
      std::string p, fmt;
      if (!(h >> p >> fmt >> cnf.n_vars >> declared_clauses) || fmt != "cnf")
        throw IoError("malformed DIMACS header: " + line);
      if (cnf.n_vars < 1 || declared_clauses < 0) throw IoError("bad header counts");
      have_header = true;
      continue;
    }
    if (!have_header) throw IoError("clause before 'p cnf' header");
    std::istringstream body(line);
    int lit = 0;
    while (body >> lit) {
      if (lit == 0) {
        if (pending.size() != 3) {
          if (strict) throw IoError("clause must have exactly 3 literals");
          pending.clear();
          continue;
        }
        sat::Clause c;
        for (int i = 0; i < 3; ++i) {
          const int v = std::abs(pending[static_cast<size_t>(i)]);
          if (v < 1 || v > cnf.n_vars) throw IoError("variable index out of range");
          c.lits[static_cast<size_t>(i)] = {v - 1, pending[static_cast<size_t>(i)] > 0 ? 1 : -1};
        }
        cnf.clauses.push_back(c);
        pending.clear();
      } else {
        pending.push_back(lit);
      }
    }
  }
  if (!pending.empty()) throw IoError("unterminated clause at end of file");
  if (!have_header) throw IoError("missing 'p cnf' header");
  if (declared_clauses != static_cast<int>(cnf.clauses.size()))
    throw IoError("clause count does not match header");
  cnf.validate();
  return cnf;
}

inline std::string serialize_cnf(const sat::Cnf& cnf) {
  std::ostringstream out;
  out << "p cnf " << cnf.n_vars << " " << cnf.clauses.size() << "\n";
  for (const auto& c : cnf.clauses) {
    for (const auto& l : c.lits) out << (l.sign > 0 ? l.var + 1 : -(l.var + 1)) << " ";
    out << "0\n";
  }
  return out.str();
}

// DIMACS graph format: 'p edge <nodes> <edges>' header and 'e u v' lines with
// 1-based endpoints. Duplicate edges collapse to one.
inline coloring::Graph parse_col(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int n = 0;
  bool have_header = false;
  std::vector<std::pair<int, int>> edges;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == 'c') continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "p") {
      std::string fmt;
      int m = 0;
      if (!(ls >> fmt >> n >> m) || (fmt != "edge" && fmt != "edges"))
        throw IoError("malformed .col header: " + line);
      have_header = true;
    } else if (tag == "e") {
      if (!have_header) throw IoError("edge before 'p edge' header");
      int u = 0, v = 0;
      if (!(ls >> u >> v)) throw IoError("malformed edge line: " + line);
      if (u < 1 || v < 1 || u > n || v > n) throw IoError("edge endpoint out of range");
      if (u != v) edges.emplace_back(u - 1, v - 1);
    } else if (tag == "n") {
      continue;  // node descriptors carry no structure we use
    } else {
      throw IoError("unrecognized .col line: " + line);
    }
  }
  if (!have_header) throw IoError("missing 'p edge' header");
  return coloring::make_graph(n, std::move(edges));
}

inline std::string serialize_col(const coloring::Graph& g) {
  std::ostringstream out;
  out << "p edge " << g.n_nodes << " " << g.edges.size() << "\n";
  for (auto [u, v] : g.edges) out << "e " << u + 1 << " " << v + 1 << "\n";
  return out.str();
}

struct PlantedCnf {
  sat::Cnf cnf;
  sat::Assignment plant;  // satisfies every clause by construction
};

// Random 3-SAT at the phase-transition ratio with a planted solution: clauses
// the hidden assignment would violate are resampled. `m_override` pins the
// clause count (e.g. to mirror benchmark shapes); 0 keeps round(4.258 n).
inline PlantedCnf gen_sat(int n_vars, uint64_t seed, int m_override = 0) {
  if (n_vars < 3) throw ConfigError("gen_sat needs at least 3 variables");
  const int m = m_override > 0 ? m_override
                               : static_cast<int>(std::llround(4.258 * n_vars));
  Rng rng(seed);
  PlantedCnf out;
  out.cnf.n_vars = n_vars;
  out.plant.values = Vec(n_vars);
  for (int i = 0; i < n_vars; ++i) out.plant.values[i] = rng.below(2) ? 1.0 : 0.0;
  out.cnf.clauses.reserve(static_cast<size_t>(m));
  while (static_cast<int>(out.cnf.clauses.size()) < m) {
    sat::Clause c;
    int a = static_cast<int>(rng.below(static_cast<uint64_t>(n_vars)));
    int b = a, d = a;
    while (b == a) b = static_cast<int>(rng.below(static_cast<uint64_t>(n_vars)));
    while (d == a || d == b) d = static_cast<int>(rng.below(static_cast<uint64_t>(n_vars)));
    c.lits = {sat::Literal{a, rng.below(2) ? 1 : -1}, sat::Literal{b, rng.below(2) ? 1 : -1},
              sat::Literal{d, rng.below(2) ? 1 : -1}};
    if (sat::clause_satisfied(c, out.plant)) out.cnf.clauses.push_back(c);
  }
  return out;
}

enum class GraphFamily { ErdosRenyi, HolmeKim, RegularExpander, Paley, Complete };

inline const char* family_name(GraphFamily f) {
  switch (f) {
    case GraphFamily::ErdosRenyi: return "erdos_renyi";
    case GraphFamily::HolmeKim: return "holme_kim";
    case GraphFamily::RegularExpander: return "regular_expander";
    case GraphFamily::Paley: return "paley";
    case GraphFamily::Complete: return "complete";
  }
  return "?";
}

inline std::optional<GraphFamily> parse_family(const std::string& s) {
  for (GraphFamily f : {GraphFamily::ErdosRenyi, GraphFamily::HolmeKim,
                        GraphFamily::RegularExpander, GraphFamily::Paley,
                        GraphFamily::Complete})
    if (s == family_name(f)) return f;
  return std::nullopt;
}

struct GenSpec {
  GraphFamily family = GraphFamily::ErdosRenyi;
  int n = 20;            // nodes (Paley: the prime q)
  double p = 0.2;        // ER edge probability / Holme-Kim triangle probability
  int m = 2;             // Holme-Kim attachments per node
  int degree = 3;        // regular expander degree
  uint64_t seed = 0;
  bool training_filter = false;  // keep only chi in [3,8] and density in [0.01, 0.5]
};

inline coloring::Graph gen_complete(int n) {
  std::vector<std::pair<int, int>> e;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v) e.emplace_back(u, v);
  auto g = coloring::make_graph(n, std::move(e));
  g.chi = n;
  return g;
}

inline coloring::Graph gen_erdos_renyi(int n, double p, Rng& rng) {
  std::vector<std::pair<int, int>> e;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (rng.uniform() < p) e.emplace_back(u, v);
  return coloring::make_graph(n, std::move(e));
}

// Powerlaw-cluster growth: each new node attaches preferentially m times; with
// probability p an attachment is replaced by closing a triangle with a random
// neighbor of the previously chosen target.
inline coloring::Graph gen_holme_kim(int n, int m, double p, Rng& rng) {
  if (m < 1 || n <= m) throw ConfigError("holme_kim needs 1 <= m < n");
  std::vector<std::pair<int, int>> edges;
  std::vector<int> repeated;  // nodes repeated once per degree
  for (int v = m; v < n; ++v) {
    std::set<int> targets;
    int prev_target = -1;
    while (static_cast<int>(targets.size()) < m) {
      int pick;
      if (prev_target >= 0 && p > 0 && rng.uniform() < p) {
        // triangle step: a neighbor of the previous target
        std::vector<int> nbrs;
        for (auto [a, b] : edges) {
          if (a == prev_target) nbrs.push_back(b);
          if (b == prev_target) nbrs.push_back(a);
        }
        pick = nbrs.empty() ? prev_target : nbrs[rng.below(nbrs.size())];
      } else {
        pick = repeated.empty() ? static_cast<int>(rng.below(static_cast<uint64_t>(v)))
                                : repeated[rng.below(repeated.size())];
      }
      if (pick == v || targets.count(pick)) {
        prev_target = -1;  // retry uniformly
        continue;
      }
      targets.insert(pick);
      prev_target = pick;
    }
    for (int t : targets) {
      edges.emplace_back(v, t);
      repeated.push_back(v);
      repeated.push_back(t);
    }
  }
  return coloring::make_graph(n, std::move(edges));
}

// Random d-regular graph via the pairing model, resampled until simple.
inline coloring::Graph gen_regular(int n, int d, Rng& rng) {
  if (d < 1 || d >= n) throw ConfigError("regular degree out of range");
  if ((static_cast<long>(n) * d) % 2 != 0) throw ConfigError("n*d must be even");
  for (int attempt = 0; attempt < 2000; ++attempt) {
    std::vector<int> stubs;
    stubs.reserve(static_cast<size_t>(n) * d);
    for (int v = 0; v < n; ++v)
      for (int j = 0; j < d; ++j) stubs.push_back(v);
    for (size_t i = stubs.size(); i > 1; --i) std::swap(stubs[i - 1], stubs[rng.below(i)]);
    std::set<std::pair<int, int>> used;
    bool ok = true;
    for (size_t i = 0; i + 1 < stubs.size() && ok; i += 2) {
      int u = stubs[i], v = stubs[i + 1];
      if (u == v) ok = false;
      if (u > v) std::swap(u, v);
      if (ok && !used.insert({u, v}).second) ok = false;
    }
    if (!ok) continue;
    return coloring::make_graph(n, {used.begin(), used.end()});
  }
  throw ConfigError("failed to sample a simple regular graph");
}

inline bool is_prime(int q) {
  if (q < 2) return false;
  for (int d = 2; static_cast<long>(d) * d <= q; ++d)
    if (q % d == 0) return false;
  return true;
}

// Nodes 0..q-1, edge iff the difference is a nonzero quadratic residue mod q.
inline coloring::Graph gen_paley(int q) {
  if (!is_prime(q) || q % 4 != 1) throw ConfigError("Paley graphs need a prime q = 1 mod 4");
  std::vector<uint8_t> residue(static_cast<size_t>(q), 0);
  for (int x = 1; x < q; ++x) residue[static_cast<size_t>((static_cast<long>(x) * x) % q)] = 1;
  std::vector<std::pair<int, int>> e;
  for (int u = 0; u < q; ++u)
    for (int v = u + 1; v < q; ++v)
      if (residue[static_cast<size_t>((v - u) % q)]) e.emplace_back(u, v);
  return coloring::make_graph(q, std::move(e));
}

inline coloring::Graph gen_graph(const GenSpec& spec) {
  Rng rng(spec.seed);
  const int max_tries = spec.training_filter ? 500 : 1;
  for (int attempt = 0; attempt < max_tries; ++attempt) {
    Rng local(derive_seed(spec.seed, static_cast<uint64_t>(attempt)));
    coloring::Graph g;
    switch (spec.family) {
      case GraphFamily::ErdosRenyi: g = gen_erdos_renyi(spec.n, spec.p, local); break;
      case GraphFamily::HolmeKim: g = gen_holme_kim(spec.n, spec.m, spec.p, local); break;
      case GraphFamily::RegularExpander: g = gen_regular(spec.n, spec.degree, local); break;
      case GraphFamily::Paley: g = gen_paley(spec.n); break;
      case GraphFamily::Complete: g = gen_complete(spec.n); break;
    }
    if (!spec.training_filter) return g;
    const double d = g.density();
    if (d < 0.01 || d > 0.5) continue;
    auto chi = coloring::chromatic_number(g, 10.0);
    if (!chi.has_value() || *chi < 3 || *chi > 8) continue;
    g.chi = chi;
    return g;
  }
  throw ConfigError("no generated graph satisfied the training filter");
}

// --- named benchmark constructions -----------------------------------------

inline coloring::Graph gen_cycle(int n) {
  std::vector<std::pair<int, int>> e;
  for (int v = 0; v < n; ++v) e.emplace_back(v, (v + 1) % n);
  return coloring::make_graph(n, std::move(e));
}

// Mycielski construction: from G with nodes 0..n-1, add shadows n..2n-1 and an
// apex 2n; shadow u' neighbors N(u) and the apex.
inline coloring::Graph mycielskian(const coloring::Graph& g) {
  const int n = g.n_nodes;
  std::vector<std::pair<int, int>> e = g.edges;
  for (auto [u, v] : g.edges) {
    e.emplace_back(u + n, v);
    e.emplace_back(u, v + n);
  }
  for (int u = 0; u < n; ++u) e.emplace_back(u + n, 2 * n);
  return coloring::make_graph(2 * n + 1, std::move(e));
}

// Queen graph: cells of an n x m board, adjacent when a queen move connects
// them.
inline coloring::Graph gen_queen_graph(int n, int m) {
  std::vector<std::pair<int, int>> e;
  auto id = [m](int r, int c) { return r * m + c; };
  for (int r1 = 0; r1 < n; ++r1)
    for (int c1 = 0; c1 < m; ++c1)
      for (int r2 = r1; r2 < n; ++r2)
        for (int c2 = 0; c2 < m; ++c2) {
          if (r2 == r1 && c2 <= c1) continue;
          if (r1 == r2 || c1 == c2 || r1 - c1 == r2 - c2 || r1 + c1 == r2 + c2)
            e.emplace_back(id(r1, c1), id(r2, c2));
        }
  return coloring::make_graph(n * m, std::move(e));
}

// The three COLOR-benchmark graphs the test suite exercises, built from their
// defining constructions.
inline coloring::Graph benchmark_graph(const std::string& name) {
  if (name == "myciel3") {
    auto g = mycielskian(gen_cycle(5));
    g.chi = 4;
    return g;
  }
  if (name == "myciel4") {
    auto g = mycielskian(mycielskian(gen_cycle(5)));
    g.chi = 5;
    return g;
  }
  if (name == "queen5_5") {
    auto g = gen_queen_graph(5, 5);
    g.chi = 5;
    return g;
  }
  throw ConfigError("unknown benchmark graph: " + name);
}

}  // namespace ecomp::io
