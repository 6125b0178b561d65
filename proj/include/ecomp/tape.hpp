#pragma once

#include "ecomp/common.hpp"

#include <array>
#include <cassert>
#include <memory>
#include <unordered_map>
#include <utility>

namespace ecomp::ad {

// Reverse-mode tape over dense row-major matrices.
//
// Every backward rule is itself expressed through tape ops, so running a
// backward pass with `build_graph = true` appends differentiable nodes and a
// second pass over the extended tape yields exact second-order gradients.
// That is how parameter gradients of losses that contain an input gradient
// (the energy gradient) are computed.
//
// The op set is the closure of what the score-network architecture and the
// losses need under differentiation; there is no control-flow tracing.

enum class Op : uint8_t {
  Leaf,
  MatMulNT,    // A * B^T
  MatMulNN,    // A * B
  MatMulTN,    // A^T * B
  Add,         // elementwise, equal shapes
  AddConst,    // x + c
  Scale,       // c * x
  Mul,         // elementwise product
  MulColwise,  // (B x d) scaled per row by (B x 1)
  Relu,
  ReluGrad,    // in0 masked by (in1 > 0); derivative w.r.t. in1 is 0 a.e.
  RowSum,      // B x d -> B x 1
  ColSum,      // B x d -> 1 x d
  SumAll,      // B x d -> 1 x 1
  BcastCols,   // B x 1 -> B x d
  BcastRows,   // 1 x d -> B x d
  BcastAll,    // 1 x 1 -> B x d
  Exp,
  Log,
  Recip,
  Rsqrt,
  Gather,      // 1 x D vector indexed by an (n x k) index table -> n x k
  Scatter,     // n x k summed back into 1 x D through the index table
  SliceCols,   // columns [lo, lo+len)
  PadCols,     // inverse of SliceCols: place into a zero matrix of `total` cols
  ConcatCols,  // [A | B]
};

struct Node;
using NodeP = std::shared_ptr<Node>;

struct Node {
  Op op = Op::Leaf;
  Mat val;
  std::array<NodeP, 2> in{};
  double c = 0.0;                               // Scale / AddConst constant
  std::shared_ptr<const std::vector<int>> idx;  // Gather/Scatter table, row-major
  int aux0 = 0, aux1 = 0;                       // op-specific shape info
  bool needs_grad = false;
  int param_off = -1;  // >= 0: leaf maps into the flat parameter vector
  int id = -1;         // creation index when recorded, -1 otherwise

  Eigen::Index rows() const { return val.rows(); }
  Eigen::Index cols() const { return val.cols(); }
};

class Tape {
 public:
  std::vector<NodeP> nodes;  // creation order == topological order
  bool recording = true;

  NodeP leaf(Mat v, bool needs_grad = false, int param_off = -1) {
    auto n = std::make_shared<Node>();
    n->op = Op::Leaf;
    n->val = std::move(v);
    n->needs_grad = needs_grad;
    n->param_off = param_off;
    track(n);
    if (param_off >= 0) param_leaves_.push_back(n);
    return n;
  }

  NodeP constant(Mat v) { return leaf(std::move(v), false); }

  NodeP scalar(double x) {
    Mat m(1, 1);
    m(0, 0) = x;
    return constant(std::move(m));
  }

  NodeP matmul_nt(const NodeP& a, const NodeP& b) {
    assert(a->cols() == b->cols());
    return emit(Op::MatMulNT, a->val * b->val.transpose(), a, b);
  }
  NodeP matmul_nn(const NodeP& a, const NodeP& b) {
    assert(a->cols() == b->rows());
    return emit(Op::MatMulNN, a->val * b->val, a, b);
  }
  NodeP matmul_tn(const NodeP& a, const NodeP& b) {
    assert(a->rows() == b->rows());
    return emit(Op::MatMulTN, a->val.transpose() * b->val, a, b);
  }
  NodeP add(const NodeP& a, const NodeP& b) {
    assert(a->rows() == b->rows() && a->cols() == b->cols());
    return emit(Op::Add, a->val + b->val, a, b);
  }
  NodeP add_const(const NodeP& a, double c) {
    auto n = emit(Op::AddConst, Mat((a->val.array() + c).matrix()), a, nullptr);
    n->c = c;
    return n;
  }
  NodeP scale(const NodeP& a, double c) {
    auto n = emit(Op::Scale, Mat(c * a->val), a, nullptr);
    n->c = c;
    return n;
  }
  NodeP sub(const NodeP& a, const NodeP& b) { return add(a, scale(b, -1.0)); }
  NodeP mul(const NodeP& a, const NodeP& b) {
    assert(a->rows() == b->rows() && a->cols() == b->cols());
    return emit(Op::Mul, a->val.cwiseProduct(b->val), a, b);
  }
  NodeP mul_colwise(const NodeP& a, const NodeP& s) {
    assert(s->cols() == 1 && s->rows() == a->rows());
    return emit(Op::MulColwise,
                Mat((a->val.array().colwise() * s->val.col(0).array()).matrix()), a, s);
  }
  NodeP relu(const NodeP& a) { return emit(Op::Relu, a->val.cwiseMax(0.0), a, nullptr); }
  NodeP relu_grad(const NodeP& g, const NodeP& x) {
    assert(g->rows() == x->rows() && g->cols() == x->cols());
    Mat mask = (x->val.array() > 0.0).cast<double>().matrix();
    return emit(Op::ReluGrad, g->val.cwiseProduct(mask), g, x);
  }
  NodeP row_sum(const NodeP& a) {
    return emit(Op::RowSum, Mat(a->val.rowwise().sum()), a, nullptr);
  }
  NodeP col_sum(const NodeP& a) {
    return emit(Op::ColSum, Mat(a->val.colwise().sum()), a, nullptr);
  }
  NodeP sum_all(const NodeP& a) {
    Mat m(1, 1);
    m(0, 0) = a->val.sum();
    return emit(Op::SumAll, std::move(m), a, nullptr);
  }
  NodeP bcast_cols(const NodeP& a, int d) {
    assert(a->cols() == 1);
    auto n = emit(Op::BcastCols, Mat(a->val.col(0).replicate(1, d)), a, nullptr);
    n->aux0 = d;
    return n;
  }
  NodeP bcast_rows(const NodeP& a, int b) {
    assert(a->rows() == 1);
    auto n = emit(Op::BcastRows, Mat(a->val.replicate(b, 1)), a, nullptr);
    n->aux0 = b;
    return n;
  }
  NodeP bcast_all(const NodeP& a, int r, int c) {
    assert(a->rows() == 1 && a->cols() == 1);
    auto n = emit(Op::BcastAll, Mat(Mat::Constant(r, c, a->val(0, 0))), a, nullptr);
    n->aux0 = r;
    n->aux1 = c;
    return n;
  }
  NodeP exp(const NodeP& a) {
    return emit(Op::Exp, Mat(a->val.array().exp().matrix()), a, nullptr);
  }
  NodeP log(const NodeP& a) {
    return emit(Op::Log, Mat(a->val.array().log().matrix()), a, nullptr);
  }
  NodeP recip(const NodeP& a) { return emit(Op::Recip, a->val.cwiseInverse(), a, nullptr); }
  NodeP rsqrt(const NodeP& a) {
    return emit(Op::Rsqrt, Mat(a->val.array().rsqrt().matrix()), a, nullptr);
  }

  // out(r, j) = vec(0, idx[r*k + j]); `vec` is 1 x D.
  NodeP gather(const NodeP& vec, std::shared_ptr<const std::vector<int>> idx, int n, int k) {
    assert(vec->rows() == 1 && static_cast<int>(idx->size()) == n * k);
    Mat out(n, k);
    const auto& t = *idx;
    for (int r = 0; r < n; ++r)
      for (int j = 0; j < k; ++j) out(r, j) = vec->val(0, t[static_cast<size_t>(r) * k + j]);
    auto node = emit(Op::Gather, std::move(out), vec, nullptr);
    node->idx = std::move(idx);
    return node;
  }

  // out(0, idx[r*k + j]) += a(r, j); repeated indices accumulate.
  NodeP scatter(const NodeP& a, std::shared_ptr<const std::vector<int>> idx, int dim) {
    assert(static_cast<int>(idx->size()) == a->rows() * a->cols());
    Mat out = Mat::Zero(1, dim);
    const auto& t = *idx;
    const int k = static_cast<int>(a->cols());
    for (Eigen::Index r = 0; r < a->rows(); ++r)
      for (int j = 0; j < k; ++j) out(0, t[static_cast<size_t>(r) * k + j]) += a->val(r, j);
    auto node = emit(Op::Scatter, std::move(out), a, nullptr);
    node->idx = std::move(idx);
    node->aux0 = dim;
    return node;
  }

  NodeP slice_cols(const NodeP& a, int lo, int len) {
    assert(lo >= 0 && lo + len <= a->cols());
    auto n = emit(Op::SliceCols, Mat(a->val.middleCols(lo, len)), a, nullptr);
    n->aux0 = lo;
    n->aux1 = len;
    return n;
  }

  NodeP pad_cols(const NodeP& a, int lo, int total) {
    assert(lo >= 0 && lo + a->cols() <= total);
    Mat out = Mat::Zero(a->rows(), total);
    out.middleCols(lo, a->cols()) = a->val;
    auto n = emit(Op::PadCols, std::move(out), a, nullptr);
    n->aux0 = lo;
    n->aux1 = total;
    return n;
  }

  NodeP concat_cols(const NodeP& a, const NodeP& b) {
    assert(a->rows() == b->rows());
    Mat out(a->rows(), a->cols() + b->cols());
    out.leftCols(a->cols()) = a->val;
    out.rightCols(b->cols()) = b->val;
    auto node = emit(Op::ConcatCols, std::move(out), a, b);
    node->aux0 = static_cast<int>(a->cols());
    return node;
  }

  const std::vector<NodeP>& param_leaves() const { return param_leaves_; }

 private:
  std::vector<NodeP> param_leaves_;

  void track(const NodeP& n) {
    if (recording) {
      n->id = static_cast<int>(nodes.size());
      nodes.push_back(n);
    }
  }

  NodeP emit(Op op, Mat val, const NodeP& a, const NodeP& b) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->val = std::move(val);
    n->in[0] = a;
    n->in[1] = b;
    n->needs_grad = (a && a->needs_grad) || (b && b->needs_grad);
    track(n);
    return n;
  }
};

namespace detail {

// Emits the input cotangents of `n` given its output cotangent. Rules are
// built from tape ops so they stay differentiable while the tape records.
inline void pull_back(Tape& t, const NodeP& n, const NodeP& cot, NodeP& da, NodeP& db) {
  const NodeP& a = n->in[0];
  const NodeP& b = n->in[1];
  switch (n->op) {
    case Op::Leaf:
      break;
    case Op::MatMulNT:  // n = a b^T
      if (a->needs_grad) da = t.matmul_nn(cot, b);
      if (b->needs_grad) db = t.matmul_tn(cot, a);
      break;
    case Op::MatMulNN:  // n = a b
      if (a->needs_grad) da = t.matmul_nt(cot, b);
      if (b->needs_grad) db = t.matmul_tn(a, cot);
      break;
    case Op::MatMulTN:  // n = a^T b
      if (a->needs_grad) da = t.matmul_nt(b, cot);
      if (b->needs_grad) db = t.matmul_nn(a, cot);
      break;
    case Op::Add:
      if (a->needs_grad) da = cot;
      if (b->needs_grad) db = cot;
      break;
    case Op::AddConst:
      da = cot;
      break;
    case Op::Scale:
      da = t.scale(cot, n->c);
      break;
    case Op::Mul:
      if (a->needs_grad) da = t.mul(cot, b);
      if (b->needs_grad) db = t.mul(cot, a);
      break;
    case Op::MulColwise:  // n = a scaled per row by s
      if (a->needs_grad) da = t.mul_colwise(cot, b);
      if (b->needs_grad) db = t.row_sum(t.mul(cot, a));
      break;
    case Op::Relu:
      da = t.relu_grad(cot, a);
      break;
    case Op::ReluGrad:  // mask depends on in[1] only on a null set
      if (a->needs_grad) da = t.relu_grad(cot, b);
      break;
    case Op::RowSum:
      da = t.bcast_cols(cot, static_cast<int>(a->cols()));
      break;
    case Op::ColSum:
      da = t.bcast_rows(cot, static_cast<int>(a->rows()));
      break;
    case Op::SumAll:
      da = t.bcast_all(cot, static_cast<int>(a->rows()), static_cast<int>(a->cols()));
      break;
    case Op::BcastCols:
      da = t.row_sum(cot);
      break;
    case Op::BcastRows:
      da = t.col_sum(cot);
      break;
    case Op::BcastAll:
      da = t.sum_all(cot);
      break;
    case Op::Exp:
      da = t.mul(cot, n);  // reuses the forward value
      break;
    case Op::Log:
      da = t.mul(cot, t.recip(a));
      break;
    case Op::Recip:
      da = t.scale(t.mul(cot, t.mul(n, n)), -1.0);
      break;
    case Op::Rsqrt:
      da = t.scale(t.mul(cot, t.mul(t.mul(n, n), n)), -0.5);
      break;
    case Op::Gather:
      da = t.scatter(cot, n->idx, static_cast<int>(a->cols()));
      break;
    case Op::Scatter:
      da = t.gather(cot, n->idx, static_cast<int>(a->rows()), static_cast<int>(a->cols()));
      break;
    case Op::SliceCols:
      da = t.pad_cols(cot, n->aux0, static_cast<int>(a->cols()));
      break;
    case Op::PadCols:
      da = t.slice_cols(cot, n->aux0, static_cast<int>(a->cols()));
      break;
    case Op::ConcatCols: {
      const int split = n->aux0;
      if (a->needs_grad) da = t.slice_cols(cot, 0, split);
      if (b->needs_grad)
        db = t.slice_cols(cot, split, static_cast<int>(cot->cols()) - split);
      break;
    }
  }
}

}  // namespace detail

// Cotangents keyed by recorded node id.
class Gradients {
 public:
  explicit Gradients(size_t n) : cot_(n) {}

  NodeP at(const NodeP& n) const {
    if (!n || n->id < 0 || static_cast<size_t>(n->id) >= cot_.size()) return nullptr;
    return cot_[static_cast<size_t>(n->id)];
  }

  Mat value_or_zero(const NodeP& n) const {
    auto g = at(n);
    return g ? g->val : Mat(Mat::Zero(n->rows(), n->cols()));
  }

  // Accumulates cotangents of parameter leaves into a flat gradient vector.
  void add_param_grads(const Tape& t, Vec& flat) const {
    for (const auto& p : t.param_leaves()) {
      auto g = at(p);
      if (!g) continue;
      assert(p->param_off + p->val.size() <= flat.size());
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, 1>>(
          flat.data() + p->param_off, g->val.size()) +=
          Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, 1>>(g->val.data(),
                                                                     g->val.size());
    }
  }

  void set(const NodeP& n, NodeP g) { cot_[static_cast<size_t>(n->id)] = std::move(g); }

 private:
  std::vector<NodeP> cot_;
};

// Reverse pass from `root` seeded with `seed`. With `build_graph` the emitted
// cotangents are recorded and remain differentiable; without it they are
// plain values. Accumulation order is fixed by creation order, so results are
// bit-reproducible.
inline Gradients backward(Tape& t, const NodeP& root, const NodeP& seed,
                          bool build_graph) {
  assert(root->id >= 0 && "root must be recorded on this tape");
  assert(seed->rows() == root->rows() && seed->cols() == root->cols());
  const bool prev = t.recording;
  t.recording = build_graph;
  Gradients g(t.nodes.size());
  g.set(root, seed);
  for (int i = root->id; i >= 0; --i) {
    NodeP n = t.nodes[static_cast<size_t>(i)];
    NodeP cot = g.at(n);
    if (!cot || !n->needs_grad || n->op == Op::Leaf) continue;
    NodeP da, db;
    detail::pull_back(t, n, cot, da, db);
    for (int s = 0; s < 2; ++s) {
      const NodeP& contrib = s == 0 ? da : db;
      const NodeP& input = n->in[static_cast<size_t>(s)];
      if (!contrib || !input || !input->needs_grad) continue;
      NodeP existing = g.at(input);
      g.set(input, existing ? t.add(existing, contrib) : contrib);
    }
  }
  t.recording = prev;
  return g;
}

inline Gradients backward(Tape& t, const NodeP& root, Mat seed_val, bool build_graph) {
  const bool prev = t.recording;
  t.recording = build_graph;
  NodeP seed = t.constant(std::move(seed_val));
  t.recording = prev;
  return backward(t, root, seed, build_graph);
}

// Vector-Jacobian product of the function recorded between `wrt` and `root`,
// evaluated at the recorded input.
inline Mat vjp(Tape& t, const NodeP& root, const NodeP& wrt, const Mat& cotangent) {
  auto g = backward(t, root, cotangent, false);
  return g.value_or_zero(wrt);
}

struct GradCheckReport {
  double max_rel_err = 0.0;
  Eigen::Index worst_index = -1;
  bool pass = false;
};

// Central finite differences against an analytic gradient. Errors are
// normalized by the larger of the two gradient's sup-norms so zero
// coordinates do not blow up the ratio.
template <class F, class G>
GradCheckReport grad_check(F&& f, G&& grad_f, const Vec& x, double h, double tol) {
  Vec analytic = grad_f(x);
  Vec fd(x.size());
  Vec xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    xp[i] = xi + h;
    const double fp = f(xp);
    xp[i] = xi - h;
    const double fm = f(xp);
    xp[i] = xi;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericFault("grad_check: f non-finite at perturbed point");
    fd[i] = (fp - fm) / (2.0 * h);
  }
  const double scale =
      std::max({analytic.cwiseAbs().maxCoeff(), fd.cwiseAbs().maxCoeff(), 1e-12});
  GradCheckReport r;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double e = std::abs(analytic[i] - fd[i]) / scale;
    if (e > r.max_rel_err) {
      r.max_rel_err = e;
      r.worst_index = i;
    }
  }
  r.pass = r.max_rel_err <= tol;
  return r;
}

}  // namespace ecomp::ad
