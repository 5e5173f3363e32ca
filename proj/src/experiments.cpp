#include "dabm/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "json.hpp"

#include "dabm/noise.hpp"

namespace dabm {

using nlohmann::json;

namespace {

std::ofstream open_out(const std::string& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  const std::string path = (std::filesystem::path(dir) / name).string();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

template <class T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <class T>
std::optional<T> optional_from(const json& doc, const std::string& key) {
  if (!doc.contains(key) || doc.at(key).is_null()) return std::nullopt;
  return doc.at(key).get<T>();
}

void accumulate(std::vector<double>& total, const std::vector<double>& v) {
  if (total.empty()) total.assign(v.size(), 0.0);
  for (std::size_t k = 0; k < v.size(); ++k) total[k] += v[k];
}

}  // namespace

ScenarioSpec resolve_scenario(const RunOptions& o) {
  ScenarioSpec spec = load_scenario(o.scenario);
  if (o.seed_demand_est) spec.seeds.demand_est = *o.seed_demand_est;
  if (o.seed_demand_test) spec.seeds.demand_test = *o.seed_demand_test;
  if (o.seed_sim) spec.seeds.sim = *o.seed_sim;
  if (o.seed_policy) spec.seeds.policy = *o.seed_policy;
  if (o.tau) spec.tau = *o.tau;
  if (o.batch) spec.batch = *o.batch;
  if (o.budget) spec.optimizer.budget = *o.budget;
  if (o.lr) {
    if (parse_method(o.method) == Method::FdGd) {
      spec.optimizer.lr_fd = *o.lr;
    } else {
      spec.optimizer.lr_ad = *o.lr;
    }
  }
  validate(spec);
  return spec;
}

PricingPolicy resolve_policy(const RunOptions& o, const ScenarioSpec& spec) {
  const PricingPolicy shape = policy_shape(spec);
  if (!o.policy_values.empty()) {
    return PricingPolicy(spec.horizon, spec.num_stations(), spec.block_len, o.policy_values);
  }
  if (!o.policy_path.empty()) return read_policy_csv(shape, o.policy_path);
  return shape;
}

EstimateResult run_estimate(const ScenarioSpec& spec, Method method, const InitPattern& pattern,
                            std::optional<int> max_updates) {
  const Simulator sim = make_simulator(spec, spec.seeds.demand_est, SimMode::Estimation);
  SimulationObjective objective(sim);
  const PricingPolicy init = initial_policy(spec, pattern, spec.seeds.policy);
  OptimizerConfig config = optimizer_config(spec, method);
  if (max_updates) config.max_updates = *max_updates;
  config.keep_snapshots = false;

  EstimateResult result;
  result.init_pattern = pattern.name;
  result.trace = optimize(objective, init.values(), config);
  result.policy = PricingPolicy(spec.horizon, spec.num_stations(), spec.block_len, result.trace.final_params);
  result.trace.final_cost = policy_cost(result.policy, spec.horizon);
  for (double v : result.policy.values()) {
    if (v < 0.0) ++result.negative_discounts;
  }
  return result;
}

EvaluateResult run_evaluate(const ScenarioSpec& spec, const PricingPolicy& policy, int runs,
                            std::uint64_t demand_seed, std::uint64_t sim_seed) {
  if (runs < 1) throw std::invalid_argument("evaluation needs at least one run");
  const Simulator sim = make_simulator(spec, demand_seed, SimMode::Evaluation);
  EvaluateResult r;
  r.runs = runs;
  SimOutcome& mean = r.mean;
  for (int k = 0; k < runs; ++k) {
    const SimOutcome o = sim.run(policy.values(), Simulator::replica_seed(sim_seed, k));
    if (k == 0) {
      mean.horizon = o.horizon;
      mean.num_stations = o.num_stations;
      mean.mode = o.mode;
    }
    accumulate(mean.final_inventory, o.final_inventory);
    accumulate(mean.inventory, o.inventory);
    accumulate(mean.in_transit, o.in_transit);
    accumulate(mean.trips, o.trips);
    mean.in_transit_at_end += o.in_transit_at_end;
    mean.loss += o.loss;
    mean.negative_inventory += o.negative_inventory;
    r.run_losses.push_back(o.loss);
  }
  const double n = runs;
  for (auto* v : {&mean.final_inventory, &mean.inventory, &mean.in_transit, &mean.trips}) {
    for (double& x : *v) x /= n;
  }
  mean.in_transit_at_end /= n;
  r.mean_run_loss = mean.loss / n;
  r.loss = inventory_loss(mean.final_inventory, spec.desired_final);
  mean.loss = r.loss;
  r.cost = policy_cost(policy, spec.horizon);
  mean.cost = r.cost;
  r.negative_inventory = mean.negative_inventory;
  return r;
}

GradcheckReport run_gradcheck(const ScenarioSpec& spec, std::size_t n_params, double h, std::uint64_t seed,
                              double rel_tol, double abs_tol) {
  if (!(h > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  const Simulator sim = make_simulator(spec, spec.seeds.demand_est, SimMode::Estimation);
  const int J = spec.num_stations();
  const std::size_t P = spec.num_params();

  std::mt19937_64 rng(NoiseStream(seed).derive(tag(NoiseTag::Policy)).key({0x9c}));
  std::uniform_real_distribution<double> draw(0.0, 3.0);
  std::vector<double> p(P);
  for (double& v : p) v = draw(rng);

  std::vector<std::size_t> picked(P);
  for (std::size_t k = 0; k < P; ++k) picked[k] = k;
  if (n_params > 0 && n_params < P) {
    std::shuffle(picked.begin(), picked.end(), rng);
    picked.resize(n_params);
    std::sort(picked.begin(), picked.end());
  }

  // Keep every probed parameter at least 2h away from the other discounts of
  // its block so the +-h probes never change a choice set.
  auto crowded = [&](std::size_t k) {
    const std::size_t block_start = (k / J) * J;
    for (int s = 0; s < J; ++s) {
      const std::size_t other = block_start + s;
      if (other != k && std::abs(p[other] - p[k]) <= 2.0 * h) return true;
    }
    return false;
  };
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t k : picked) {
      while (crowded(k)) {
        p[k] = draw(rng);
        changed = true;
      }
    }
  }

  const std::uint64_t frozen = NoiseStream(seed).derive(tag(NoiseTag::Replica)).key({0x9c});
  std::vector<double> grad;
  GradcheckReport report;
  report.loss = sim.batched_loss_and_gradient(p, frozen, grad);
  for (std::size_t k : picked) {
    std::vector<double> q = p;
    q[k] = p[k] + h;
    const double up = sim.batched_loss(q, frozen);
    q[k] = p[k] - h;
    const double down = sim.batched_loss(q, frozen);
    GradcheckEntry e;
    e.param = k;
    e.block = static_cast<int>(k / J);
    e.station = static_cast<int>(k % J);
    e.ad = grad[k];
    e.fd = (up - down) / (2.0 * h);
    e.abs_err = std::abs(e.ad - e.fd);
    const double scale = std::max(std::abs(e.ad), std::abs(e.fd));
    e.rel_err = scale > 0.0 ? e.abs_err / scale : 0.0;
    e.pass = e.rel_err < rel_tol || (scale < 1e-3 && e.abs_err < abs_tol);
    report.all_pass = report.all_pass && e.pass;
    if (!e.pass || scale >= 1e-3) report.worst_rel = std::max(report.worst_rel, e.rel_err);
    report.entries.push_back(e);
  }
  return report;
}

CompareResult run_compare(const ScenarioSpec& spec, const std::vector<Method>& methods,
                          const std::vector<InitPattern>& patterns, int eval_runs) {
  CompareResult result;
  for (const InitPattern& pattern : patterns) {
    for (Method method : methods) {
      EstimateResult est = run_estimate(spec, method, pattern);
      const EvaluateResult eval =
          run_evaluate(spec, est.policy, eval_runs, spec.seeds.demand_test, spec.seeds.sim);
      CompareRow row;
      row.method = method_name(method);
      row.init_pattern = pattern.name;
      row.updates = est.trace.updates;
      row.sim_count = est.trace.records.empty() ? 0 : est.trace.records.back().sim_count;
      row.best_train_loss = est.trace.records.empty() ? std::nan("") : est.trace.best_loss();
      row.eval_loss = eval.loss;
      row.cost = est.trace.final_cost;
      row.note = est.trace.note;
      result.rows.push_back(row);
      result.estimates.push_back(std::move(est));
    }
  }
  return result;
}

void write_manifest(const RunOptions& o, const ScenarioSpec& spec, const std::string& dir) {
  json options = {
      {"subcommand", o.subcommand},
      {"scenario", o.scenario},
      {"method", o.method},
      {"init_pattern", o.init_pattern},
      {"budget", optional_json(o.budget)},
      {"max_updates", optional_json(o.max_updates)},
      {"runs", o.runs},
      {"seed_demand_est", optional_json(o.seed_demand_est)},
      {"seed_demand_test", optional_json(o.seed_demand_test)},
      {"seed_sim", optional_json(o.seed_sim)},
      {"seed_policy", optional_json(o.seed_policy)},
      {"tau", optional_json(o.tau)},
      {"batch", optional_json(o.batch)},
      {"lr", optional_json(o.lr)},
      {"policy_path", o.policy_path},
      {"n_params", o.n_params},
      {"fd_h", o.fd_h},
      {"methods", o.methods},
      {"init_patterns", o.init_patterns},
  };
  if (o.subcommand == "evaluate") {
    const PricingPolicy policy = resolve_policy(o, spec);
    options["policy_values"] = std::vector<double>(policy.values().begin(), policy.values().end());
  }
  json doc = {{"tool", "dabm"}, {"options", options}, {"scenario", json::parse(dump_scenario(spec))}};
  open_out(dir, "manifest.json") << doc.dump(2) << '\n';
}

std::pair<RunOptions, ScenarioSpec> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path + " is not valid JSON: " + e.what());
  }
  if (!doc.contains("options") || !doc.contains("scenario")) {
    throw std::runtime_error(path + " is not a run manifest (options/scenario missing)");
  }
  const json& j = doc.at("options");
  RunOptions o;
  o.subcommand = j.at("subcommand").get<std::string>();
  o.scenario = j.at("scenario").get<std::string>();
  o.method = j.at("method").get<std::string>();
  o.init_pattern = j.at("init_pattern").get<std::string>();
  o.budget = optional_from<std::uint64_t>(j, "budget");
  o.max_updates = optional_from<int>(j, "max_updates");
  o.runs = j.at("runs").get<int>();
  o.seed_demand_est = optional_from<std::uint64_t>(j, "seed_demand_est");
  o.seed_demand_test = optional_from<std::uint64_t>(j, "seed_demand_test");
  o.seed_sim = optional_from<std::uint64_t>(j, "seed_sim");
  o.seed_policy = optional_from<std::uint64_t>(j, "seed_policy");
  o.tau = optional_from<double>(j, "tau");
  o.batch = optional_from<int>(j, "batch");
  o.lr = optional_from<double>(j, "lr");
  o.policy_path = j.value("policy_path", std::string());
  if (j.contains("policy_values")) o.policy_values = j.at("policy_values").get<std::vector<double>>();
  o.n_params = j.at("n_params").get<int>();
  o.fd_h = j.at("fd_h").get<double>();
  o.methods = j.at("methods").get<std::vector<std::string>>();
  o.init_patterns = j.at("init_patterns").get<std::vector<std::string>>();
  ScenarioSpec spec = parse_scenario(doc.at("scenario").dump(), path);
  return {o, spec};
}

void write_estimate_outputs(const RunOptions& o, const ScenarioSpec& spec, const EstimateResult& r) {
  {
    std::ofstream out = open_out(o.out_dir, "loss_history.csv");
    write_trace_csv(r.trace, r.init_pattern, out);
  }
  {
    std::ofstream out = open_out(o.out_dir, "policy.csv");
    write_policy_csv(r.policy, out);
  }
  write_manifest(o, spec, o.out_dir);
}

void write_evaluate_outputs(const RunOptions& o, const ScenarioSpec& spec, const EvaluateResult& r) {
  {
    std::ofstream out = open_out(o.out_dir, "trips.csv");
    write_trips_csv(std::span<const SimOutcome>(&r.mean, 1), out);
  }
  {
    std::ofstream out = open_out(o.out_dir, "final_inventory.csv");
    write_final_inventory_csv(std::span<const SimOutcome>(&r.mean, 1), build_network(spec), out);
  }
  {
    json summary = {{"runs", r.runs},
                    {"loss", r.loss},
                    {"mean_run_loss", r.mean_run_loss},
                    {"cost", r.cost},
                    {"in_transit_at_end", r.mean.in_transit_at_end},
                    {"negative_inventory", r.negative_inventory}};
    open_out(o.out_dir, "evaluation.json") << summary.dump(2) << '\n';
  }
  write_manifest(o, spec, o.out_dir);
}

void write_gradcheck_outputs(const RunOptions& o, const ScenarioSpec& spec, const GradcheckReport& r) {
  {
    std::ofstream out = open_out(o.out_dir, "gradcheck.csv");
    out << "param,block,station,ad,fd,abs_err,rel_err,pass\n" << std::setprecision(12);
    for (const GradcheckEntry& e : r.entries) {
      out << e.param << ',' << e.block << ',' << e.station << ',' << e.ad << ',' << e.fd << ',' << e.abs_err
          << ',' << e.rel_err << ',' << (e.pass ? "true" : "false") << '\n';
    }
  }
  write_manifest(o, spec, o.out_dir);
}

void write_compare_outputs(const RunOptions& o, const ScenarioSpec& spec, const CompareResult& r) {
  {
    std::ofstream out = open_out(o.out_dir, "loss_history.csv");
    bool header = true;
    for (const EstimateResult& est : r.estimates) {
      write_trace_csv(est.trace, est.init_pattern, out, header);
      header = false;
    }
  }
  {
    std::ofstream out = open_out(o.out_dir, "summary.csv");
    out << "method,init_pattern,updates,sim_count,best_train_loss,eval_loss,cost,note\n" << std::setprecision(10);
    for (const CompareRow& row : r.rows) {
      out << row.method << ',' << row.init_pattern << ',' << row.updates << ',' << row.sim_count << ','
          << row.best_train_loss << ',' << row.eval_loss << ',' << row.cost << ',' << row.note << '\n';
    }
  }
  for (const EstimateResult& est : r.estimates) {
    std::string name = std::string("policy_") + method_name(est.trace.method) + "_" + est.init_pattern + ".csv";
    std::replace(name.begin(), name.end(), ':', '_');
    std::replace(name.begin(), name.end(), ',', '_');
    std::ofstream out = open_out(o.out_dir, name);
    write_policy_csv(est.policy, out);
  }
  write_manifest(o, spec, o.out_dir);
}

}  // namespace dabm
