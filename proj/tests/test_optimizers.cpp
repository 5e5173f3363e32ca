#include "doctest.h"

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "dabm/optimizers.hpp"
#include "dabm/scenarios.hpp"

using namespace dabm;

namespace {

// (p - c)^2 summed, with a noise-free gradient.
FunctionObjective quadratic(std::vector<double> centre, int batch = 5) {
  const std::size_t n = centre.size();
  return FunctionObjective(
      n, batch,
      [centre](std::span<const double> p, std::uint64_t) {
        double s = 0.0;
        for (std::size_t k = 0; k < p.size(); ++k) s += (p[k] - centre[k]) * (p[k] - centre[k]);
        return s;
      },
      [centre](std::span<const double> p, std::uint64_t, std::vector<double>& g) {
        g.resize(p.size());
        for (std::size_t k = 0; k < p.size(); ++k) g[k] = 2.0 * (p[k] - centre[k]);
      });
}

}  // namespace

TEST_CASE("method names") {
  CHECK(parse_method("ad-sgd") == Method::AdSgd);
  CHECK(parse_method("ad") == Method::AdSgd);
  CHECK(parse_method("fd") == Method::FdGd);
  CHECK(parse_method("fd-gd") == Method::FdGd);
  CHECK(parse_method("de") == Method::DiffEvolution);
  CHECK(std::string(method_name(Method::DiffEvolution)) == "de");
  CHECK_THROWS(parse_method("adam"));
}

TEST_CASE("sgd converges on a quadratic") {
  FunctionObjective obj = quadratic({1.0, -2.0, 0.5});
  OptimizerConfig cfg;
  cfg.lr = 0.1;
  cfg.sim_budget = 1000;
  const std::vector<double> init{0.0, 0.0, 0.0};
  const OptTrace tr = ad_sgd(obj, init, cfg);
  CHECK(tr.updates == 200);
  CHECK(tr.final_params[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(tr.final_params[1] == doctest::Approx(-2.0).epsilon(1e-9));
  CHECK(tr.best_loss() < 1e-12);
  CHECK(obj.sim_count() == 1000);
  CHECK(tr.records.back().sim_count == 1000);
}

TEST_CASE("sgd stops on divergence") {
  FunctionObjective obj = quadratic({0.0});
  OptimizerConfig cfg;
  cfg.lr = 1.5;  // |1 - 2 lr| > 1
  const std::vector<double> init{1.0};
  const OptTrace tr = ad_sgd(obj, init, cfg);
  CHECK(tr.aborted);
  CHECK(!tr.note.empty());
  CHECK(tr.updates < 20);
}

TEST_CASE("forward differences are exact for linear losses") {
  const std::vector<double> a{1.5, -2.0, 0.25, 4.0};
  FunctionObjective obj(4, 5, [a](std::span<const double> p, std::uint64_t) {
    return std::inner_product(a.begin(), a.end(), p.begin(), 0.0);
  });
  const std::vector<double> p{0.3, 0.1, -0.7, 2.0};
  double base = 0.0;
  const std::vector<double> g = fd_gradient(obj, p, 0.1, 3, true, &base);
  for (int k = 0; k < 4; ++k) CHECK(g[k] == doctest::Approx(a[k]).epsilon(1e-9));
  CHECK(obj.sim_count() == 5 * 5);
}

TEST_CASE("fd-gd budget accounting") {
  FunctionObjective obj = quadratic(std::vector<double>(100, 1.0));
  OptimizerConfig cfg;
  cfg.method = Method::FdGd;
  cfg.lr = 0.01;
  cfg.sim_budget = 2500;
  const OptTrace tr = fd_gd(obj, std::vector<double>(100, 0.0), cfg);
  CHECK(tr.updates == 4);
  REQUIRE(tr.records.size() >= 2);
  CHECK(tr.records[1].sim_count - tr.records[0].sim_count == 505);
  CHECK(obj.sim_count() == 4 * 505);

  FunctionObjective small = quadratic(std::vector<double>(100, 1.0));
  cfg.sim_budget = 400;
  const OptTrace none = fd_gd(small, std::vector<double>(100, 0.0), cfg);
  CHECK(none.updates == 0);
  CHECK(none.note == "no update completed");
  CHECK(small.sim_count() == 0);
}

TEST_CASE("differential evolution") {
  FunctionObjective obj = quadratic({0.5, 2.5, 1.0});
  OptimizerConfig cfg;
  cfg.method = Method::DiffEvolution;
  cfg.de_pop = 20;
  cfg.sim_budget = 20 * 5 * 40;
  cfg.seed = 4;
  const std::vector<double> init{0.05, 0.05, 0.05};
  const OptTrace tr = diff_evolution(obj, init, cfg);
  CHECK(tr.updates == 39);  // generation 0 is the initial population
  for (std::size_t k = 1; k < tr.records.size(); ++k) {
    CHECK(tr.records[k].loss <= tr.records[k - 1].loss);
    CHECK(tr.records[k].sim_count - tr.records[k - 1].sim_count == 100);
  }
  CHECK(tr.best_loss() < 1e-2);
  for (double v : tr.final_params) {
    CHECK(v >= 0.0);
    CHECK(v <= 3.0);
  }
  CHECK(obj.sim_count() == 4000);

  FunctionObjective big = quadratic(std::vector<double>(100, 1.0));
  cfg.de_pop = 100;
  cfg.sim_budget = 1000;
  const OptTrace two = diff_evolution(big, std::vector<double>(100, 0.0), cfg);
  REQUIRE(two.records.size() == 2);
  CHECK(two.records[1].sim_count - two.records[0].sim_count == 500);
}

TEST_CASE("optimizers see the same objective interface") {
  const ScenarioSpec s1 = load_scenario("s1");
  const Simulator sim = make_simulator(s1, 1, SimMode::Estimation);
  for (Method m : {Method::AdSgd, Method::FdGd, Method::DiffEvolution}) {
    SimulationObjective obj(sim);
    OptimizerConfig cfg = optimizer_config(s1, m);
    cfg.de_pop = 6;
    cfg.sim_budget = 90;
    const std::vector<double> init{0.05, 0.05};
    const OptTrace tr = optimize(obj, init, cfg);
    CHECK(tr.method == m);
    CHECK(tr.updates > 0);
    CHECK(obj.sim_count() <= 90);
    CHECK(obj.sim_count() == tr.records.back().sim_count);
  }
}

TEST_CASE("ad-sgd costs one batch per update whatever the parameter count") {
  for (const char* id : {"s1", "s2"}) {
    const ScenarioSpec spec = load_scenario(id);
    const Simulator sim = make_simulator(spec, 1, SimMode::Estimation);
    SimulationObjective obj(sim);
    OptimizerConfig cfg = optimizer_config(spec, Method::AdSgd);
    cfg.max_updates = 3;
    const OptTrace tr = ad_sgd(obj, std::vector<double>(spec.num_params(), 0.05), cfg);
    CHECK(tr.updates == 3);
    CHECK(obj.sim_count() == 15);
    CHECK(sim.sim_count() == 15);
  }
}

TEST_CASE("finite differences agree with the AD gradient under frozen noise") {
  ScenarioSpec spec = load_scenario("s2");
  spec.grid_rows = spec.grid_cols = 3;
  spec.demand.high_demand = {true, true, false, true, true, false, false, false, false};
  spec.desired_final.assign(9, 90.0);
  const Simulator sim = make_simulator(spec, 1, SimMode::Estimation);
  SimulationObjective obj(sim);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> U(0.0, 3.0);
  std::vector<double> p(spec.num_params());
  for (double& v : p) v = U(rng);
  std::vector<double> ad;
  obj.value_and_gradient(p, 77, ad);
  const std::vector<double> fd = fd_gradient(obj, p, 1e-5, 77, true);
  double dot = 0.0, na = 0.0, nf = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    dot += ad[k] * fd[k];
    na += ad[k] * ad[k];
    nf += fd[k] * fd[k];
  }
  CHECK(dot / std::sqrt(na * nf) > 0.99);
}

TEST_CASE("trace csv") {
  OptTrace tr;
  tr.method = Method::FdGd;
  tr.records.push_back({0, 0, 12.5, {}});
  tr.records.push_back({1, 505, 10.25, {}});
  std::ostringstream out;
  write_trace_csv(tr, "1", out);
  CHECK(out.str() == "method,init_pattern,update,sim_count,loss\nfd,1,0,0,12.5\nfd,1,1,505,10.25\n");
}
