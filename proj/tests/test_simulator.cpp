#include "doctest.h"

#include <cmath>
#include <numeric>
#include <random>

#include "dabm/scenarios.hpp"
#include "dabm/simulator.hpp"

using namespace dabm;

namespace {

std::vector<double> random_policy(std::size_t n, std::uint64_t seed, double lo = 0.0, double hi = 3.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(lo, hi);
  std::vector<double> p(n);
  for (double& v : p) v = U(rng);
  return p;
}

void check_conservation(const SimOutcome& o, double total) {
  REQUIRE(o.has_trajectory());
  for (int t = 0; t <= o.horizon; ++t) {
    double s = o.in_transit[t];
    for (int j = 0; j < o.num_stations; ++j) s += o.inventory_at(t, j);
    CHECK(std::abs(s - total) < 1e-6);
  }
  const double fin = std::accumulate(o.final_inventory.begin(), o.final_inventory.end(), 0.0);
  CHECK(std::abs(fin + o.in_transit_at_end - total) < 1e-6);
}

}  // namespace

TEST_CASE("inventory loss") {
  const std::vector<double> a{90, 90};
  CHECK(inventory_loss(a, a) == 0.0);
  CHECK(inventory_loss(std::vector<double>{100, 80}, a) == 100.0);
}

TEST_CASE("no demand keeps every inventory fixed") {
  const StationNetwork net = StationNetwork::grid(2, 2, 100, 100);
  const DemandField empty(10, 4, 0);
  for (SimMode mode : {SimMode::Estimation, SimMode::Evaluation}) {
    SimConfig cfg;
    cfg.horizon = 10;
    cfg.mode = mode;
    cfg.record_trajectory = true;
    Simulator sim(net, empty, PricingPolicy(10, 4, 5), ChoiceParams{}, cfg);
    const SimOutcome o = sim.run(random_policy(8, 1), 3);
    for (int t = 0; t <= 10; ++t) {
      for (int j = 0; j < 4; ++j) CHECK(o.inventory_at(t, j) == 100.0);
    }
    CHECK(o.loss == 0.0);
  }
}

TEST_CASE("two-station expected drift without discounts") {
  // With rates 1.0 out of station 0 and 0.5 back, and unit-rate durations,
  // E[I_0(T)] = 100 - 100 + 0.5 (100 - q/(1-q)) and E[I_1(T)] = 50 + 100 - q/(1-q), q = e^-1.
  const ScenarioSpec s1 = load_scenario("s1");
  const Simulator sim = make_simulator(s1, s1.seeds.demand_test, SimMode::Evaluation);
  const std::vector<double> zero(2, 0.0);
  const double late = std::exp(-1.0) / (1.0 - std::exp(-1.0));
  double m0 = 0.0, m1 = 0.0;
  const int runs = 30;
  for (int r = 0; r < runs; ++r) {
    const SimOutcome o = sim.run(zero, Simulator::replica_seed(5, r));
    m0 += o.final_inventory[0] / runs;
    m1 += o.final_inventory[1] / runs;
  }
  // Standard error of each mean is about 12.3 / sqrt(30) = 2.2.
  CHECK(std::abs(m0 - 0.5 * (100 - late)) < 7.0);
  CHECK(std::abs(m1 - (150 - late)) < 7.0);
}

TEST_CASE("evaluation runs are reproducible") {
  const ScenarioSpec s2 = load_scenario("s2");
  const Simulator sim = make_simulator(s2, 2, SimMode::Evaluation);
  const std::vector<double> p = random_policy(s2.num_params(), 9);
  const SimOutcome a = sim.run(p, 42);
  const SimOutcome b = sim.run(p, 42);
  CHECK(a.final_inventory == b.final_inventory);
  CHECK(a.trips == b.trips);
  CHECK(a.loss == b.loss);
  const SimOutcome c = sim.run(p, 43);
  CHECK(a.final_inventory != c.final_inventory);
}

TEST_CASE("bike conservation in both modes and both routings") {
  ScenarioSpec s2 = load_scenario("s2");
  for (Routing routing : {Routing::PerAgent, Routing::CellLevel}) {
    s2.routing = routing;
    for (SimMode mode : {SimMode::Estimation, SimMode::Evaluation}) {
      Simulator sim = make_simulator(s2, 1, mode);
      sim.set_record_trajectory(true);
      for (std::uint64_t seed = 0; seed < 3; ++seed) {
        check_conservation(sim.run(random_policy(s2.num_params(), seed), seed), 25 * 100.0);
      }
    }
  }
}

TEST_CASE("exact runs move whole bikes") {
  const ScenarioSpec s2 = load_scenario("s2");
  const DemandField demand = build_demand(s2, 1);
  Simulator sim = make_simulator(s2, 1, SimMode::Evaluation);
  sim.set_record_trajectory(true);
  double departed = 0.0;
  for (double x : sim.run(random_policy(s2.num_params(), 4), 8).trips) {
    CHECK(x >= 0.0);
    CHECK(x == std::floor(x));
    departed += x;
  }
  // Departures are Poisson with the field's total mean (sd ~ sqrt(mean)).
  const double expected = std::accumulate(demand.dep().begin(), demand.dep().end(), 0.0);
  CHECK(std::abs(departed - expected) < 5.0 * std::sqrt(expected));
}

TEST_CASE("batched loss") {
  ScenarioSpec s1 = load_scenario("s1");
  s1.batch = 1;
  const Simulator one = make_simulator(s1, 1, SimMode::Estimation);
  const std::vector<double> p{0.3, 1.9};
  CHECK(one.batched_loss(p, 7) == one.run(p, Simulator::replica_seed(7, 0)).loss);

  s1.batch = 5;
  const Simulator five = make_simulator(s1, 1, SimMode::Estimation);
  CHECK(five.batched_loss(p, 7) == five.batched_loss(p, 7));
  double mean = 0.0;
  for (int r = 0; r < 5; ++r) mean += five.run(p, Simulator::replica_seed(7, r)).loss / 5.0;
  CHECK(five.batched_loss(p, 7) == doctest::Approx(mean).epsilon(1e-12));

  std::vector<double> grad;
  const double with_grad = five.batched_loss_and_gradient(p, 7, grad);
  CHECK(with_grad == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("simulation counter counts single runs") {
  const ScenarioSpec s1 = load_scenario("s1");
  Simulator sim = make_simulator(s1, 1, SimMode::Estimation);
  const std::vector<double> p{0.3, 1.9};
  std::vector<double> grad;
  sim.reset_sim_count();
  sim.batched_loss(p, 1);
  CHECK(sim.sim_count() == 5);
  sim.batched_loss_and_gradient(p, 2, grad);
  CHECK(sim.sim_count() == 10);
  sim.run(p, 3);
  CHECK(sim.sim_count() == 11);
}

TEST_CASE("one backward pass yields every gradient") {
  const ScenarioSpec s2 = load_scenario("s2");
  const Simulator sim = make_simulator(s2, 1, SimMode::Estimation);
  const std::vector<double> p = random_policy(s2.num_params(), 3);
  std::vector<double> grad;
  sim.batched_loss_and_gradient(p, 11, grad);
  REQUIRE(grad.size() == s2.num_params());
  int nonzero = 0;
  for (double g : grad) {
    CHECK(std::isfinite(g));
    if (g != 0.0) ++nonzero;
  }
  CHECK(nonzero == static_cast<int>(s2.num_params()));

  // Shifting every discount of a block by the same amount changes no
  // utility, so the gradient sums to zero within each block.
  for (int b = 0; b < s2.num_blocks(); ++b) {
    double sum = 0.0, mag = 0.0;
    for (int j = 0; j < 25; ++j) {
      sum += grad[b * 25 + j];
      mag += std::abs(grad[b * 25 + j]);
    }
    CHECK(std::abs(sum) < 1e-9 * mag);
  }
}

TEST_CASE("equal discounts give no gradient") {
  const ScenarioSpec s2 = load_scenario("s2");
  const Simulator sim = make_simulator(s2, 1, SimMode::Estimation);
  std::vector<double> grad;
  sim.batched_loss_and_gradient(std::vector<double>(s2.num_params(), 0.7), 5, grad);
  for (double g : grad) CHECK(g == 0.0);
}

TEST_CASE("gradient matches central differences under frozen noise") {
  ScenarioSpec s2 = load_scenario("s2");
  for (double tau : {1.0, 5.0, 0.5}) {
    s2.tau = tau;
    const Simulator sim = make_simulator(s2, 1, SimMode::Estimation);
    std::vector<double> p = random_policy(s2.num_params(), 21);
    std::vector<double> grad;
    sim.batched_loss_and_gradient(p, 3, grad);
    for (std::size_t k : {std::size_t{0}, std::size_t{31}, std::size_t{77}}) {
      const double h = 1e-5;
      std::vector<double> q = p;
      q[k] = p[k] + h;
      const double up = sim.batched_loss(q, 3);
      q[k] = p[k] - h;
      const double down = sim.batched_loss(q, 3);
      const double fd = (up - down) / (2 * h);
      CHECK(std::abs(grad[k] - fd) <= 1e-3 * std::max(std::abs(fd), 1e-3));
    }
  }
}

TEST_CASE("invalid inputs are rejected") {
  const ScenarioSpec s2 = load_scenario("s2");
  const Simulator sim = make_simulator(s2, 1, SimMode::Evaluation);
  CHECK_THROWS_AS(sim.run(std::vector<double>(3, 0.0), 1), DimensionError);
  std::vector<double> grad;
  CHECK_THROWS_AS(sim.batched_loss_and_gradient(std::vector<double>(100, 0.0), 1, grad), ConfigError);
  SimConfig bad = sim_config(s2, SimMode::Estimation);
  bad.tau = 0.0;
  CHECK_THROWS_AS(Simulator(build_network(s2), build_demand(s2, 1), policy_shape(s2), s2.choice, bad), ConfigError);
}
