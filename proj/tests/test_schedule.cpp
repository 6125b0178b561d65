#include "ecomp/schedule.hpp"

#include "helpers.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace ecomp;

TEST_CASE("linear schedule endpoints and values") {
  auto s = linear_schedule(100);
  REQUIRE(s.at(100) == 1.0);
  REQUIRE(s.at(1) == Catch::Approx(0.01));

  auto s1 = linear_schedule(1);
  REQUIRE(s1.sigma.size() == 1);
  REQUIRE(s1.at(1) == 1.0);

  auto s4 = linear_schedule(4);
  REQUIRE(s4.at(1) == Catch::Approx(0.25));
  REQUIRE(s4.at(2) == Catch::Approx(0.5));
  REQUIRE(s4.at(3) == Catch::Approx(0.75));
  REQUIRE(s4.at(4) == 1.0);

  REQUIRE_THROWS_AS(linear_schedule(0), ConfigError);
}

TEST_CASE("schedule invariants") {
  auto s = linear_schedule(37);
  for (int t = 1; t <= s.T; ++t) {
    REQUIRE(s.at(t) > 0.0);
    REQUIRE(s.at(t) <= 1.0);
    if (t > 1) REQUIRE(s.at(t) >= s.at(t - 1));
  }
}

TEST_CASE("corrupt follows the stated formula") {
  Vec y(2), eps(2);
  y << 1, 0;
  eps << 0, 1;

  SECTION("zero-noise extension is the identity") {
    Vec out = corrupt(y, 0.0, eps);
    REQUIRE((out - y).cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("sigma = 1 destroys the signal") {
    Vec out = corrupt(y, 1.0, eps);
    REQUIRE((out - eps).cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("sigma = 0.5 direct evaluation") {
    Vec out = corrupt(y, 0.5, eps);
    REQUIRE(out[0] == Catch::Approx(std::sqrt(0.5)));
    REQUIRE(out[1] == Catch::Approx(0.5));
  }
}

TEST_CASE("corrupt is affine in y and eps with the stated coefficients") {
  Rng rng(21);
  const double sigma = 0.37;
  Vec y1 = testutil::random_vec(rng, 7), y2 = testutil::random_vec(rng, 7);
  Vec e1 = testutil::random_vec(rng, 7), e2 = testutil::random_vec(rng, 7);
  const double a = 0.6, b = 1.9;
  // superposition in y at fixed eps contribution
  Vec lhs = corrupt(a * y1 + b * y2, sigma, Vec(a * e1 + b * e2));
  Vec rhs = a * corrupt(y1, sigma, e1) + b * corrupt(y2, sigma, e2);
  REQUIRE((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
  // zero eps leaves exactly sqrt(1 - sigma) * y
  Vec z = corrupt(y1, sigma, Vec(Vec::Zero(7)));
  Vec expect = std::sqrt(1.0 - sigma) * y1;
  REQUIRE((z - expect).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("corrupt rejects bad input") {
  Vec y(2), eps(3);
  REQUIRE_THROWS_AS(corrupt(y, 0.5, eps), ConfigError);
  Vec e2(2);
  REQUIRE_THROWS_AS(corrupt(y, 1.5, e2), ConfigError);
}
