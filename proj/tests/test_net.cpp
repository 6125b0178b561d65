#include "ecomp/net.hpp"

#include "helpers.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace ecomp;
using testutil::random_vec;

namespace {

MlpConfig queens8_cfg() {
  MlpConfig c;
  c.input_dim = 8;
  c.cond_dim = 0;
  c.output_dim = 8;
  c.seed = 5;
  return c;  // paper-size residual MLP: {128, 256, 128} x 3 blocks
}

MlpConfig coloring_cfg() {
  MlpConfig c;
  c.input_dim = 28;
  c.cond_dim = 0;
  c.output_dim = 28;
  c.n_blocks = 4;
  c.seed = 6;
  return c;
}

// Independent hand count: in-projection + n_blocks * (three linears) +
// out-projection, weights plus biases.
int hand_count(int in_total, int out, const std::vector<int>& hidden, int blocks) {
  const int w = hidden.back();
  int total = w * in_total + w;
  for (int b = 0; b < blocks; ++b) {
    int prev = w;
    for (int h : hidden) {
      total += h * prev + h;
      prev = h;
    }
  }
  total += out * w + out;
  return total;
}

}  // namespace

TEST_CASE("init is deterministic under the seed") {
  auto a = init_params(queens8_cfg());
  auto b = init_params(queens8_cfg());
  REQUIRE(a.flat.size() == b.flat.size());
  REQUIRE((a.flat - b.flat).cwiseAbs().maxCoeff() == 0.0);
  MlpConfig other = queens8_cfg();
  other.seed = 77;
  REQUIRE((a.flat - init_params(other).flat).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("parameter counts match the hand count") {
  // 8-queens row model: input 8 + 1 time scalar
  auto qc = queens8_cfg();
  REQUIRE(param_count(qc) == hand_count(9, 8, {128, 256, 128}, 3));
  // coloring edge model: input 28 + 1 time scalar, 4 blocks
  auto cc = coloring_cfg();
  REQUIRE(param_count(cc) == hand_count(29, 28, {128, 256, 128}, 4));
  // sat clause model: 3 + 3 cond + 1 time
  MlpConfig sc;
  sc.input_dim = 3;
  sc.cond_dim = 3;
  sc.output_dim = 3;
  REQUIRE(param_count(sc) == hand_count(7, 3, {128, 256, 128}, 3));
  REQUIRE(init_params(qc).flat.size() == param_count(qc));
}

TEST_CASE("zero final projection makes the score identically zero") {
  MlpConfig cfg = queens8_cfg();
  cfg.hidden = {16, 32, 16};
  ParamSet p = init_params(cfg);
  auto lay = make_layout(cfg);
  p.flat.segment(lay.out_proj.w_off, lay.out_proj.end() - lay.out_proj.w_off).setZero();
  EnergyNet net{p, linear_schedule(100)};
  Rng rng(31);
  for (int k = 0; k < 5; ++k) {
    Vec s = net.score(random_vec(rng, 8), Vec(), 1 + k * 19);
    REQUIRE(s.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("score is pure and bit-deterministic") {
  MlpConfig cfg = queens8_cfg();
  cfg.hidden = {16, 32, 16};
  EnergyNet net{init_params(cfg), linear_schedule(100)};
  Rng rng(32);
  Vec y = random_vec(rng, 8);
  Vec s1 = net.score(y, Vec(), 50);
  Vec s2 = net.score(y, Vec(), 50);
  REQUIRE((s1 - s2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("energy equals the squared score norm and is non-negative") {
  MlpConfig cfg = queens8_cfg();
  cfg.hidden = {16, 32, 16};
  EnergyNet net{init_params(cfg), linear_schedule(100)};
  Rng rng(33);
  for (int k = 0; k < 20; ++k) {
    Vec y = random_vec(rng, 8);
    const int t = 1 + static_cast<int>(rng.below(100));
    auto e = net.energy_and_grad(y, Vec(), t);
    REQUIRE(e.energy >= 0.0);
    REQUIRE(testutil::rel_err(e.energy, e.score.squaredNorm(), 1e-12) < 1e-12);
  }
}

TEST_CASE("constant score has zero input gradient") {
  MlpConfig cfg = queens8_cfg();
  cfg.hidden = {16, 32, 16};
  ParamSet p = init_params(cfg);
  auto lay = make_layout(cfg);
  // zero the input projection weight; biases keep the network constant in y
  p.flat.segment(lay.in_proj.w_off, lay.in_proj.rows * lay.in_proj.cols).setZero();
  EnergyNet net{p, linear_schedule(100)};
  Rng rng(34);
  auto e = net.energy_and_grad(random_vec(rng, 8), Vec(), 60);
  REQUIRE(e.grad_y.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("energy gradient matches finite differences across architectures") {
  struct Arch {
    int in, cond;
    int blocks;
  };
  for (const Arch a : {Arch{8, 0, 2}, Arch{3, 3, 2}, Arch{10, 0, 3}}) {
    MlpConfig cfg;
    cfg.input_dim = a.in;
    cfg.cond_dim = a.cond;
    cfg.output_dim = a.in;
    cfg.hidden = {12, 24, 12};
    cfg.n_blocks = a.blocks;
    cfg.seed = 40 + a.in;
    EnergyNet net{init_params(cfg), linear_schedule(100)};
    Rng rng(41 + a.in);
    for (int probe = 0; probe < 10; ++probe) {
      Vec y = random_vec(rng, a.in);
      Vec cond(a.cond);
      for (int i = 0; i < a.cond; ++i) cond[i] = rng.below(2) ? 1.0 : -1.0;
      const int t = 1 + static_cast<int>(rng.below(100));
      auto report = ad::grad_check(
          [&](const Vec& v) { return net.energy(v, cond, t); },
          [&](const Vec& v) { return net.energy_and_grad(v, cond, t).grad_y; }, y, 1e-4,
          1e-4);
      INFO("arch in=" << a.in << " probe=" << probe << " err=" << report.max_rel_err);
      REQUIRE(report.pass);
    }
  }
}

TEST_CASE("local perturbations are bounded by a power-iteration Lipschitz probe") {
  MlpConfig cfg = queens8_cfg();
  cfg.hidden = {16, 32, 16};
  EnergyNet net{init_params(cfg), linear_schedule(100)};
  Rng rng(55);
  Vec y = random_vec(rng, 8);
  const int t = 7;

  // power iteration on J^T J: forward products by finite differences,
  // transposed products by the tape
  ad::Tape tape;
  Mat x = assemble_input(cfg, Mat(y.transpose()), Vec(), net.time01(t));
  auto xn = tape.leaf(std::move(x), true);
  auto s = score_forward(tape, net.params, xn);
  auto jvp_fd = [&](const Vec& v) {
    const double h = 1e-6;
    Vec sp = net.score(y + h * v, Vec(), t);
    Vec sm = net.score(y - h * v, Vec(), t);
    return Vec((sp - sm) / (2.0 * h));
  };
  Vec v = random_vec(rng, 8).normalized();
  double lip = 0.0;
  for (int it = 0; it < 25; ++it) {
    Vec jv = jvp_fd(v);
    Mat cot = Mat(jv.transpose());
    Vec jtjv = ad::vjp(tape, s, xn, cot).row(0).head(8).transpose();
    lip = std::sqrt(jtjv.norm());
    v = jtjv.normalized();
  }

  Vec delta = random_vec(rng, 8);
  delta *= 1e-6 / delta.norm();
  const double change = (net.score(y + delta, Vec(), t) - net.score(y, Vec(), t)).norm();
  REQUIRE(change <= 1.5 * lip * 1e-6);
}

TEST_CASE("dimension mismatches are rejected") {
  MlpConfig cfg = queens8_cfg();
  cfg.hidden = {8, 16, 8};
  EnergyNet net{init_params(cfg), linear_schedule(100)};
  REQUIRE_THROWS_AS(net.score(Vec::Zero(5), Vec(), 1), ConfigError);
  REQUIRE_THROWS_AS(net.score(Vec::Zero(8), Vec(), 0), ConfigError);
  REQUIRE_THROWS_AS(net.score(Vec::Zero(8), Vec(), 101), ConfigError);
  MlpConfig bad;
  REQUIRE_THROWS_AS(bad.validate(), ConfigError);
}
