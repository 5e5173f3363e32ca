#include "doctest.h"

#include <cmath>
#include <numeric>
#include <random>

#include "dabm/choice.hpp"
#include "dabm/noise.hpp"

using namespace dabm;
using dabm::ad::Tape;
using dabm::ad::Var;

namespace {

// Intended station 0 at the origin with discount 0; station 1 one step away
// with discount 0.2 and station 2 two steps away with discount 1.0.
StationNetwork three_station_line() {
  return StationNetwork({Coord{0, 0}, Coord{1, 0}, Coord{2, 0}}, {100, 100, 100}, {100, 100, 100});
}

}  // namespace

TEST_CASE("choice set membership") {
  const StationNetwork net = three_station_line();
  const std::vector<double> equal{0.4, 0.4, 0.4};
  CHECK(build_choice_set(equal, 1, net).members == std::vector<int>{1});

  const std::vector<double> fig{0.0, 0.2, 1.0};
  const ChoiceSet set = build_choice_set(fig, 0, net);
  REQUIRE(set.members == std::vector<int>{0, 1, 2});
  CHECK(set.delta_p == std::vector<double>{0.0, 0.2, 1.0});
  CHECK(set.distance == std::vector<double>{0.0, 1.0, 2.0});

  const std::vector<double> bump{0.5, 0.5 + 1e-9, 0.5 + 1e-9};
  CHECK(build_choice_set(bump, 0, net).size() == 3);
  // Ties are excluded.
  const std::vector<double> tie{0.5, 0.5, 0.7};
  CHECK(build_choice_set(tie, 0, net).members == std::vector<int>{0, 2});
}

TEST_CASE("utilities of the three-station example") {
  const StationNetwork net = three_station_line();
  const std::vector<double> fig{0.0, 0.2, 1.0};
  const ChoiceSet set = build_choice_set(fig, 0, net);
  const std::vector<double> u = utilities(set, ChoiceParams{});
  CHECK(u[0] == 0.0);
  CHECK(u[1] == doctest::Approx(-1.8).epsilon(1e-15));
  CHECK(u[2] == doctest::Approx(-2.0).epsilon(1e-15));

  // softmax(0, -1.8, -2.0) by direct evaluation.
  const std::vector<double> p = choice_probs(u);
  CHECK(p[0] == doctest::Approx(0.7688557).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(0.12709099).epsilon(1e-6));
  CHECK(p[2] == doctest::Approx(0.1040533).epsilon(1e-6));

  Tape tape;
  std::vector<Var> d{tape.input(0.0), tape.input(0.2), tape.input(1.0)};
  const std::vector<Var> uv = utilities(set, d, ChoiceParams{});
  for (int k = 0; k < 3; ++k) CHECK(uv[k].value() == doctest::Approx(u[k]));
  const std::vector<Var> pv = choice_probs(uv);
  // d p_1 / d p_{discount 1} = w * p_1 (1 - p_1)
  const auto g = tape.backward(pv[1]);
  CHECK(g[d[1]] == doctest::Approx(p[1] * (1 - p[1])).epsilon(1e-12));
  // Raising every discount together leaves the probabilities unchanged.
  CHECK(g[d[0]] + g[d[1]] + g[d[2]] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("choice probabilities") {
  CHECK(choice_probs(std::vector<double>{-3.0}) == std::vector<double>{1.0});
  const std::vector<double> eq = choice_probs(std::vector<double>{0.3, 0.3, 0.3, 0.3});
  for (double p : eq) CHECK(p == doctest::Approx(0.25));

  std::mt19937_64 rng(2);
  std::normal_distribution<double> N(0.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> u(1 + trial % 6);
    for (double& x : u) x = N(rng);
    const std::vector<double> p = choice_probs(u);
    std::vector<double> shifted = u;
    const double c = N(rng) * 10;
    for (double& x : shifted) x += c;
    const std::vector<double> q = choice_probs(shifted);
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t k = 0; k < p.size(); ++k) {
      CHECK(p[k] > 0.0);
      CHECK(p[k] <= 1.0);
      CHECK(std::abs(p[k] - q[k]) < 1e-9);
    }
  }
}

TEST_CASE("destination draws") {
  const std::vector<double> p{0.7688557, 0.12709099, 0.1040533};
  std::mt19937_64 rng(8);
  const int draws = 100000;
  std::vector<int> hits(3, 0);
  for (int k = 0; k < draws; ++k) hits[choose_destination(p, to_unit_open(rng()))]++;
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  for (int k = 0; k < 3; ++k) {
    const double q = p[k] / total;
    const double sigma = std::sqrt(q * (1 - q) / draws);
    CHECK(std::abs(hits[k] / double(draws) - q) < 3 * sigma);
  }

  CHECK(choose_destination(std::vector<double>{1.0}, 0.999) == 0);

  Tape tape;
  std::vector<Var> pv{tape.input(p[0]), tape.input(p[1]), tape.input(p[2])};
  const std::vector<double> g{0.1, -0.4, 1.2};
  const auto y1 = choose_destination(pv, 0.5, g);
  const auto y2 = choose_destination(pv, 0.5, g);
  for (int k = 0; k < 3; ++k) CHECK(y1[k].value() == y2[k].value());
}
