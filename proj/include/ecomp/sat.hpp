#pragma once

#include "ecomp/compose.hpp"
#include "ecomp/trainer.hpp"

#include <array>

namespace ecomp::sat {

struct Literal {
  int var = 0;   // 0-based variable index
  int sign = 1;  // +1 plain, -1 negated
};

struct Clause {
  std::array<Literal, 3> lits;

  Vec sign_vec() const {
    Vec s(3);
    for (int i = 0; i < 3; ++i) s[i] = lits[static_cast<size_t>(i)].sign;
    return s;
  }
};

struct Cnf {
  int n_vars = 0;
  std::vector<Clause> clauses;

  void validate() const {
    if (n_vars < 1) throw ConfigError("CNF needs at least one variable");
    for (const auto& c : clauses) {
      for (const auto& l : c.lits) {
        if (l.var < 0 || l.var >= n_vars) throw ConfigError("literal variable out of range");
        if (l.sign != 1 && l.sign != -1) throw ConfigError("literal sign must be +-1");
      }
      if (c.lits[0].var == c.lits[1].var || c.lits[0].var == c.lits[2].var ||
          c.lits[1].var == c.lits[2].var)
        throw ConfigError("clause references a variable twice");
    }
  }
};

struct Assignment {
  Vec values;  // relaxed in [0,1] or binary

  bool truth(int var) const { return values[var] >= 0.5; }
};

inline bool clause_satisfied(const Clause& c, const Assignment& a) {
  for (const auto& l : c.lits) {
    const bool v = a.truth(l.var);
    if ((l.sign > 0 && v) || (l.sign < 0 && !v)) return true;
  }
  return false;
}

inline double satisfied_fraction(const Cnf& cnf, const Assignment& a) {
  if (cnf.clauses.empty()) return 1.0;
  int sat = 0;
  for (const auto& c : cnf.clauses) sat += clause_satisfied(c, a) ? 1 : 0;
  return static_cast<double>(sat) / static_cast<double>(cnf.clauses.size());
}

// Global vector: one coordinate per variable. One view per clause gathering
// its three variables, conditioned on the clause's sign vector.
inline ViewMap clause_views(const Cnf& cnf) {
  cnf.validate();
  if (cnf.clauses.empty()) throw ConfigError("clause_views: CNF has no clauses");
  ViewMap vm;
  vm.global_dim = cnf.n_vars;
  vm.views.reserve(cnf.clauses.size());
  for (const auto& c : cnf.clauses) {
    View v;
    v.gather = {c.lits[0].var, c.lits[1].var, c.lits[2].var};
    v.cond = c.sign_vec();
    vm.views.push_back(std::move(v));
  }
  return vm;
}

struct ClauseAssignments {
  std::vector<Vec> satisfying;  // always seven
  Vec violating;                // the all-false-literals corner
};

// Enumerates {0,1}^3 under a sign vector. The unique violating assignment
// sets every literal false: 0 for plain literals, 1 for negated ones.
inline ClauseAssignments clause_assignments(const Vec& sign) {
  if (sign.size() != 3) throw ConfigError("clause sign must have 3 entries");
  ClauseAssignments out;
  out.violating = Vec(3);
  for (int i = 0; i < 3; ++i) {
    if (sign[i] != 1.0 && sign[i] != -1.0) throw ConfigError("sign entries must be +-1");
    out.violating[i] = sign[i] > 0 ? 0.0 : 1.0;
  }
  for (int bits = 0; bits < 8; ++bits) {
    Vec a(3);
    for (int i = 0; i < 3; ++i) a[i] = (bits >> i) & 1 ? 1.0 : 0.0;
    if ((a - out.violating).cwiseAbs().maxCoeff() > 0.0) out.satisfying.push_back(std::move(a));
  }
  return out;
}

// Clause-level training data: positives drawn uniformly from a clause's seven
// satisfying assignments, the violating assignment as the negative, the sign
// vector as the condition.
class ClauseDataset final : public Dataset {
 public:
  explicit ClauseDataset(const std::vector<Cnf>& cnfs) {
    for (const auto& cnf : cnfs) {
      cnf.validate();
      for (const auto& c : cnf.clauses) signs_.push_back(c.sign_vec());
    }
    if (signs_.empty()) throw ConfigError("clause dataset is empty");
  }

  size_t size() const { return signs_.size(); }

  int y_dim() const override { return 3; }
  int cond_dim() const override { return 3; }
  int default_negatives() const override { return 1; }

  Sample draw(Rng& rng, int n_negatives) const override {
    const Vec& sign = signs_[rng.below(signs_.size())];
    ClauseAssignments ca = clause_assignments(sign);
    Sample s;
    s.cond = sign;
    s.y = ca.satisfying[rng.below(ca.satisfying.size())];
    for (int j = 0; j < n_negatives; ++j) s.negatives.push_back(ca.violating);
    return s;
  }

 private:
  std::vector<Vec> signs_;
};

// Rounding rule: >= 0.5 decodes to true.
inline Assignment decode_assignment(const Vec& y) {
  require_finite(y, "decode_assignment");
  Assignment a;
  a.values = (y.array() >= 0.5).cast<double>();
  return a;
}

}  // namespace ecomp::sat
