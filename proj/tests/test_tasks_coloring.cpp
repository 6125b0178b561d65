#include "ecomp/coloring.hpp"

#include "ecomp/dataio.hpp"

#include "helpers.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace ecomp;
using namespace ecomp::coloring;

TEST_CASE("edge views gather both endpoint blocks") {
  Graph g = make_graph(2, {{0, 1}});
  auto vm = edge_views(g, 14);
  REQUIRE(vm.views.size() == 1);
  REQUIRE(vm.views[0].gather.size() == 28);
  REQUIRE(vm.global_dim == 28);
  REQUIRE(vm.views[0].gather[0] == 0);
  REQUIRE(vm.views[0].gather[14] == 14);
  vm.validate();

  Graph star = make_graph(4, {{0, 1}, {0, 2}, {0, 3}});
  auto vms = edge_views(star, 3);
  int appearances = 0;
  for (const auto& v : vms.views)
    if (std::find(v.gather.begin(), v.gather.end(), 0) != v.gather.end()) ++appearances;
  REQUIRE(appearances == 3);  // degree-3 node shows up in three views
}

TEST_CASE("budget mask frees only the first chi colors per node") {
  auto mask = budget_mask(3, 5, 2);
  REQUIRE(mask.size() == 15);
  for (int v = 0; v < 3; ++v)
    for (int c = 0; c < 5; ++c)
      REQUIRE(mask[static_cast<size_t>(v * 5 + c)] == (c < 2 ? 1 : 0));
  REQUIRE_THROWS_AS(budget_mask(3, 5, 6), ConfigError);
}

TEST_CASE("edge dataset produces valid positives and the two negative kinds") {
  EdgeDataset data(14);
  REQUIRE(data.y_dim() == 28);
  Rng rng(23);
  for (int k = 0; k < 100; ++k) {
    Sample s = data.draw(rng, 2);
    Eigen::Index c1, c2;
    s.y.head(14).maxCoeff(&c1);
    s.y.tail(14).maxCoeff(&c2);
    REQUIRE(s.y.sum() == 2.0);
    REQUIRE(c1 != c2);
    // same-color negative: both argmaxes coincide
    Eigen::Index n1, n2;
    s.negatives[0].head(14).maxCoeff(&n1);
    s.negatives[0].tail(14).maxCoeff(&n2);
    REQUIRE(n1 == n2);
    // perturbed negative differs from the positive in exactly one coordinate
    Vec diff = s.negatives[1] - s.y;
    int changed = 0;
    for (int i = 0; i < 28; ++i) changed += diff[i] != 0.0;
    REQUIRE(changed <= 1);
  }
  SECTION("two colors admit exactly two ordered distinct pairs") {
    EdgeDataset d2(2);
    std::set<std::pair<int, int>> seen;
    Rng r2(24);
    for (int k = 0; k < 50; ++k) {
      Sample s = d2.draw(r2, 0);
      Eigen::Index a, b;
      s.y.head(2).maxCoeff(&a);
      s.y.tail(2).maxCoeff(&b);
      seen.insert({static_cast<int>(a), static_cast<int>(b)});
    }
    REQUIRE(seen == std::set<std::pair<int, int>>{{0, 1}, {1, 0}});
  }
}

TEST_CASE("color decoding respects the budget") {
  SECTION("exact one-hot within budget decodes to itself") {
    Vec y = Vec::Zero(6);  // 2 nodes, K=3
    y[1] = 1.0;
    y[3] = 1.0;
    auto c = decode_colors(y, 2, 3);
    REQUIRE(c.color == std::vector<int>{1, 0});
  }
  SECTION("chi = K is a plain argmax") {
    Rng rng(25);
    Vec y = testutil::random_vec(rng, 12);
    auto c = decode_colors(y, 4, 4);
    for (int v = 0; v < 3; ++v) {
      Eigen::Index best;
      y.segment(v * 4, 4).maxCoeff(&best);
      REQUIRE(c.color[static_cast<size_t>(v)] == static_cast<int>(best));
    }
  }
  SECTION("colors beyond the budget are never emitted") {
    Rng rng(26);
    for (int k = 0; k < 50; ++k) {
      Vec y = testutil::random_vec(rng, 28);
      auto c = decode_colors(y, 3, 14);
      for (int col : c.color) REQUIRE(col < 3);
    }
  }
  REQUIRE_THROWS_AS(decode_colors(Vec::Zero(28), 15, 14), ConfigError);
}

TEST_CASE("conflict counting") {
  Graph k5 = io::gen_complete(5);
  SECTION("proper coloring has zero conflicts") {
    Coloring c{{0, 1, 2, 3, 4}, 5};
    REQUIRE(conflict_count(k5, c) == 0);
    REQUIRE(is_proper(k5, c));
  }
  SECTION("monochrome K5 conflicts on every edge") {
    Coloring c{{0, 0, 0, 0, 0}, 1};
    REQUIRE(conflict_count(k5, c) == 10);
  }
  SECTION("matches a brute-force edge scan on random cases") {
    Rng rng(27);
    for (int k = 0; k < 200; ++k) {
      io::GenSpec spec;
      spec.family = io::GraphFamily::ErdosRenyi;
      spec.n = 12;
      spec.p = 0.3;
      spec.seed = derive_seed(500, static_cast<uint64_t>(k));
      Graph g = io::gen_graph(spec);
      Coloring c;
      c.palette = 2;
      for (int v = 0; v < g.n_nodes; ++v) c.color.push_back(static_cast<int>(rng.below(2)));
      int want = 0;
      for (auto [u, v] : g.edges) want += c.color[static_cast<size_t>(u)] == c.color[static_cast<size_t>(v)];
      REQUIRE(conflict_count(g, c) == want);
      REQUIRE((conflict_count(g, c) == 0) == is_proper(g, c));
    }
  }
  SECTION("coverage is enforced") {
    Coloring c{{0, 1}, 2};
    REQUIRE_THROWS_AS(conflict_count(k5, c), ConfigError);
  }
}

TEST_CASE("chromatic number oracle") {
  SECTION("complete graphs need n colors") {
    for (int n = 2; n <= 8; ++n) REQUIRE(chromatic_number(io::gen_complete(n)) == n);
  }
  SECTION("cycles") {
    REQUIRE(chromatic_number(io::gen_cycle(6)) == 2);
    REQUIRE(chromatic_number(io::gen_cycle(7)) == 3);
  }
  SECTION("benchmark graphs") {
    REQUIRE(chromatic_number(io::benchmark_graph("myciel3")) == 4);
    REQUIRE(chromatic_number(io::benchmark_graph("queen5_5")) == 5);
  }
  SECTION("chi-coloring exists, chi-1 does not, witness is proper") {
    for (uint64_t seed = 0; seed < 8; ++seed) {
      io::GenSpec spec;
      spec.family = io::GraphFamily::ErdosRenyi;
      spec.n = 18;
      spec.p = 0.25;
      spec.seed = seed;
      Graph g = io::gen_graph(spec);
      auto chi = chromatic_number(g);
      REQUIRE(chi.has_value());
      Coloring witness;
      auto ok = k_colorable(g, *chi, 30.0, &witness);
      REQUIRE(ok.has_value());
      REQUIRE(*ok);
      REQUIRE(conflict_count(g, witness) == 0);
      if (*chi > 1) {
        auto below = k_colorable(g, *chi - 1);
        REQUIRE(below.has_value());
        REQUIRE_FALSE(*below);
      }
    }
  }
  SECTION("timeout reports unknown") {
    // queen8_8-sized instance with a millisecond budget cannot finish
    Graph g = io::gen_queen_graph(8, 8);
    auto chi = chromatic_number(g, 1e-4);
    REQUIRE_FALSE(chi.has_value());
  }
}
