#include "ecomp/queens.hpp"

#include "helpers.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <set>

using namespace ecomp;
using namespace ecomp::queens;

TEST_CASE("solution enumeration oracle") {
  REQUIRE(enumerate_solutions(1).size() == 1);
  REQUIRE(enumerate_solutions(4).size() == 2);
  REQUIRE(enumerate_solutions(6).size() == 4);
  REQUIRE(enumerate_solutions(8).size() == 92);
  for (const auto& b : enumerate_solutions(8)) REQUIRE(is_valid_solution(b));
  REQUIRE_THROWS_AS(enumerate_solutions(11), ConfigError);
}

TEST_CASE("view construction counts") {
  SECTION("N=8, diagonals of length >= 2") {
    auto vm = build_views(8, {2, 1.0});
    REQUIRE(vm.views.size() == 8 + 8 + 26);
    REQUIRE(vm.global_dim == 64 + 1);  // padding sentinel
    for (const auto& v : vm.views) REQUIRE(v.gather.size() == 8);
    vm.validate();
  }
  SECTION("N=8, only full-length diagonals") {
    auto vm = build_views(8, {8, 1.0});
    REQUIRE(vm.views.size() == 8 + 8 + 2);
    REQUIRE(vm.global_dim == 64);  // no padding needed
    vm.validate();
  }
  SECTION("N=4") {
    auto vm = build_views(4, {2, 1.0});
    // diagonals of lengths 2,3,4,3,2 per direction
    REQUIRE(vm.views.size() == 4 + 4 + 10);
    vm.validate();
  }
  SECTION("diagonal weight is applied") {
    auto vm = build_views(4, {2, 0.25});
    for (size_t i = 8; i < vm.views.size(); ++i) REQUIRE(vm.views[i].weight == 0.25);
    for (size_t i = 0; i < 8; ++i) REQUIRE(vm.views[i].weight == 1.0);
  }
  REQUIRE_THROWS_AS(build_views(3, {2, 1.0}), ConfigError);
  REQUIRE_THROWS_AS(build_views(8, {0, 1.0}), ConfigError);
}

TEST_CASE("sentinel mask pins only the padding coordinate") {
  auto vm = build_views(8, {2, 1.0});
  auto mask = sentinel_mask(8, vm);
  REQUIRE(mask.size() == 65);
  REQUIRE(mask[64] == 0);
  for (int i = 0; i < 64; ++i) REQUIRE(mask[static_cast<size_t>(i)] == 1);
}

TEST_CASE("rows-only composition is additive over one-hot rows") {
  MlpConfig cfg;
  cfg.input_dim = 4;
  cfg.output_dim = 4;
  cfg.hidden = {8, 16, 8};
  cfg.n_blocks = 2;
  cfg.seed = 3;
  EnergyNet net{init_params(cfg), linear_schedule(100)};

  ViewMap rows;
  rows.global_dim = 16;
  for (int r = 0; r < 4; ++r) {
    View v;
    for (int c = 0; c < 4; ++c) v.gather.push_back(r * 4 + c);
    v.cond = Vec();
    rows.views.push_back(v);
  }
  Vec y = Vec::Zero(16);
  for (int r = 0; r < 4; ++r) y[r * 4 + 1] = 1.0;  // same one-hot in every row
  Vec onehot = Vec::Zero(4);
  onehot[1] = 1.0;
  const double single = net.energy(onehot, Vec(), 7);
  REQUIRE(composed_energy(net, rows, y, 7) == Catch::Approx(4.0 * single).epsilon(1e-12));
}

TEST_CASE("row dataset shapes") {
  auto sol = enumerate_solutions(8)[0];
  RowDataset data(8, sol);
  REQUIRE(data.positives().size() == 8);
  for (const auto& row : data.positives()) {
    REQUIRE(row.sum() == 1.0);
    REQUIRE(row.maxCoeff() == 1.0);
  }
  Rng rng(15);
  for (int k = 0; k < 50; ++k) {
    Sample s = data.draw(rng, 3);
    REQUIRE(s.y.sum() == 1.0);
    REQUIRE(s.negatives.size() == 3);
    REQUIRE(s.negatives[0].sum() == 0.0);          // empty row
    REQUIRE(s.negatives[1].sum() == 2.0);          // positive plus one queen
    REQUIRE(s.negatives[1].cwiseProduct(s.y).sum() == 1.0);
    REQUIRE(s.negatives[2].sum() == 2.0);          // random two-queen row
  }
  Board bad = Board::zero(8);
  REQUIRE_THROWS_AS(RowDataset(8, bad), ConfigError);
}

TEST_CASE("greedy decoding") {
  SECTION("a valid indicator decodes to itself") {
    for (const auto& sol : enumerate_solutions(6)) {
      Board decoded = decode_greedy(sol);
      REQUIRE((decoded.cells - sol.cells).cwiseAbs().maxCoeff() == 0.0);
    }
  }
  SECTION("uniform heatmap decodes deterministically in row-major order") {
    Board uniform = Board::zero(5);
    uniform.cells.setConstant(0.5);
    Board a = decode_greedy(uniform);
    Board b = decode_greedy(uniform);
    REQUIRE((a.cells - b.cells).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(a.queen_cells().size() >= 1);
    REQUIRE(a.at(0, 0) == 1.0);  // row-major tie-break places the first cell
  }
  SECTION("decoded boards never contain an attacking pair") {
    Rng rng(16);
    for (int k = 0; k < 50; ++k) {
      Board h = Board::zero(8);
      for (int i = 0; i < 64; ++i) h.cells[i] = rng.normal();
      auto q = decode_greedy(h).queen_cells();
      for (size_t i = 0; i < q.size(); ++i)
        for (size_t j = i + 1; j < q.size(); ++j) REQUIRE_FALSE(attacks(q[i], q[j]));
    }
  }
  SECTION("stop-on-conflict halts at the first conflicting candidate") {
    Board h = Board::zero(4);
    h.at(0, 0) = 1.0;
    h.at(0, 1) = 0.9;  // conflicts with (0,0) and outranks every other cell
    h.at(2, 3) = 0.8;
    Board skip = decode_greedy(h, false);
    REQUIRE(skip.queen_cells().size() >= 2);
    Board stop = decode_greedy(h, true);
    REQUIRE(stop.queen_cells().size() == 1);
  }
  SECTION("non-finite heatmaps are rejected") {
    Board h = Board::zero(4);
    h.cells[3] = std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_AS(decode_greedy(h), NumericFault);
  }
}

TEST_CASE("evaluation metrics") {
  auto sols = enumerate_solutions(8);
  SECTION("copies of a valid board") {
    std::vector<Board> boards(100, sols[0]);
    auto m = evaluate(boards);
    REQUIRE(m.correct == 100);
    REQUIRE(m.mean_size == 8.0);
    REQUIRE(m.std_size == 0.0);
  }
  SECTION("oracle self-consistency") {
    auto m = evaluate(sols);
    REQUIRE(m.correct == static_cast<int>(sols.size()));
  }
  SECTION("every correct board is an enumerated solution") {
    std::set<std::string> keys;
    for (const auto& b : sols) {
      std::string k;
      for (int i = 0; i < 64; ++i) k += b.cells[i] > 0.5 ? '1' : '0';
      keys.insert(k);
    }
    Rng rng(17);
    for (int trial = 0; trial < 30; ++trial) {
      Board h = Board::zero(8);
      for (int i = 0; i < 64; ++i) h.cells[i] = rng.normal();
      Board d = decode_greedy(h);
      if (is_valid_solution(d)) {
        std::string k;
        for (int i = 0; i < 64; ++i) k += d.cells[i] > 0.5 ? '1' : '0';
        REQUIRE(keys.count(k) == 1);
      }
    }
  }
}

TEST_CASE("heatmap extraction drops the sentinel") {
  Vec y = Vec::Zero(17);
  y[16] = 99.0;
  y[5] = 1.0;
  Board b = heatmap_from_global(4, y);
  REQUIRE(b.cells.size() == 16);
  REQUIRE(b.cells[5] == 1.0);
}
