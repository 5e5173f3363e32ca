// Command-line driver: estimate, evaluate, gradcheck, compare, replay and
// materialize-target. Every run writes its CSVs plus manifest.json.

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>

#include "CLI11.hpp"

#include "dabm/experiments.hpp"

namespace {

using namespace dabm;

int do_estimate(const RunOptions& o) {
  const ScenarioSpec spec = resolve_scenario(o);
  const EstimateResult r = run_estimate(spec, parse_method(o.method), parse_init_pattern(o.init_pattern),
                                        o.max_updates);
  write_estimate_outputs(o, spec, r);
  const std::uint64_t sims = r.trace.records.empty() ? 0 : r.trace.records.back().sim_count;
  std::cout << "estimate " << spec.id << ' ' << o.method << ": " << r.trace.updates << " updates, " << sims
            << " simulations";
  if (!r.trace.records.empty()) std::cout << ", best loss " << r.trace.best_loss();
  std::cout << ", cost " << r.trace.final_cost << '\n';
  if (r.negative_discounts > 0) {
    std::cout << "warning: " << r.negative_discounts << " estimated discounts are negative\n";
  }
  if (!r.trace.note.empty()) std::cout << "note: " << r.trace.note << '\n';
  if (r.trace.aborted) {
    std::cerr << "error: optimizer aborted: " << r.trace.note << '\n';
    return 3;
  }
  return 0;
}

int do_evaluate(const RunOptions& o) {
  const ScenarioSpec spec = resolve_scenario(o);
  const PricingPolicy policy = resolve_policy(o, spec);
  const EvaluateResult r = run_evaluate(spec, policy, o.runs, spec.seeds.demand_test, spec.seeds.sim);
  write_evaluate_outputs(o, spec, r);
  std::cout << std::setprecision(10) << "evaluate " << spec.id << ": " << r.runs << " runs, loss " << r.loss
            << ", mean run loss " << r.mean_run_loss << ", cost " << r.cost << '\n';
  if (r.negative_inventory > 0) {
    std::cout << "note: inventory went negative " << r.negative_inventory << " times (summed over runs)\n";
  }
  return 0;
}

int do_gradcheck(const RunOptions& o) {
  const ScenarioSpec spec = resolve_scenario(o);
  const GradcheckReport r = run_gradcheck(spec, static_cast<std::size_t>(o.n_params), o.fd_h, spec.seeds.sim);
  write_gradcheck_outputs(o, spec, r);
  std::cout << "gradcheck " << spec.id << ": " << r.entries.size() << " parameters, worst relative error "
            << r.worst_rel << '\n';
  if (!r.all_pass) {
    std::cerr << "error: gradient check failed for:\n";
    for (const GradcheckEntry& e : r.entries) {
      if (!e.pass) {
        std::cerr << "  param " << e.param << " (block " << e.block << ", station " << e.station << "): ad "
                  << e.ad << ", fd " << e.fd << ", rel " << e.rel_err << '\n';
      }
    }
    return 4;
  }
  return 0;
}

int do_compare(const RunOptions& o) {
  const ScenarioSpec spec = resolve_scenario(o);
  std::vector<Method> methods;
  for (const std::string& m : o.methods) methods.push_back(parse_method(m));
  std::vector<InitPattern> patterns;
  for (const std::string& p : o.init_patterns) patterns.push_back(parse_init_pattern(p));
  const CompareResult r = run_compare(spec, methods, patterns, o.runs);
  write_compare_outputs(o, spec, r);
  std::cout << std::left << std::setw(8) << "method" << std::setw(10) << "pattern" << std::setw(9) << "updates"
            << std::setw(10) << "sims" << std::setw(14) << "train_loss" << std::setw(14) << "eval_loss"
            << std::setw(12) << "cost" << "note\n";
  for (const CompareRow& row : r.rows) {
    std::cout << std::setw(8) << row.method << std::setw(10) << row.init_pattern << std::setw(9) << row.updates
              << std::setw(10) << row.sim_count << std::setw(14) << row.best_train_loss << std::setw(14)
              << row.eval_loss << std::setw(12) << row.cost << row.note << '\n';
  }
  return 0;
}

int dispatch(const RunOptions& o);

int do_replay(const std::string& manifest, const std::string& out_dir) {
  auto [o, spec] = read_manifest(manifest);
  // Materialize the recorded scenario so the rerun never depends on the
  // current contents of the scenario directory.
  std::filesystem::create_directories(out_dir);
  const std::string scenario_path = (std::filesystem::path(out_dir) / "scenario.json").string();
  save_scenario(spec, scenario_path);
  o.scenario = scenario_path;
  o.out_dir = out_dir;
  return dispatch(o);
}

int do_materialize(const RunOptions& o, const std::string& save_path) {
  ScenarioSpec spec = load_scenario(o.scenario);
  materialize_target(spec);
  const std::string path = save_path.empty() ? o.scenario : save_path;
  save_scenario(spec, path);
  std::cout << "desired final inventory:";
  for (double v : spec.desired_final) std::cout << ' ' << std::setprecision(10) << v;
  std::cout << "\nwritten to " << path << '\n';
  return 0;
}

int dispatch(const RunOptions& o) {
  if (o.subcommand == "estimate") return do_estimate(o);
  if (o.subcommand == "evaluate") return do_evaluate(o);
  if (o.subcommand == "gradcheck") return do_gradcheck(o);
  if (o.subcommand == "compare") return do_compare(o);
  throw std::runtime_error("unknown subcommand '" + o.subcommand + "'");
}

void add_common(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--scenario", o.scenario, "builtin id (s1, s2, s3) or scenario file")->capture_default_str();
  cmd->add_option("--tau", o.tau, "Gumbel-Softmax temperature");
  cmd->add_option("--batch", o.batch, "simulation runs per loss evaluation");
  cmd->add_option("--seed-demand-est", o.seed_demand_est, "demand field used for estimation");
  cmd->add_option("--seed-demand-test", o.seed_demand_test, "demand field used for evaluation");
  cmd->add_option("--seed-sim", o.seed_sim, "simulation noise seed");
  cmd->add_option("--seed-policy", o.seed_policy, "initial policy seed");
  cmd->add_option("--out", o.out_dir, "output directory")->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable bike-sharing simulator: discount estimation and evaluation"};
  app.require_subcommand(1);

  RunOptions est, eva, grad, cmp, mat;
  est.subcommand = "estimate";
  eva.subcommand = "evaluate";
  grad.subcommand = "gradcheck";
  cmp.subcommand = "compare";

  auto* c_est = app.add_subcommand("estimate", "fit a discount policy in relaxed mode");
  add_common(c_est, est);
  c_est->add_option("--method", est.method, "ad-sgd, fd or de")->capture_default_str();
  c_est->add_option("--init-pattern", est.init_pattern, "1, 2 or custom:a,b")->capture_default_str();
  c_est->add_option("--budget", est.budget, "simulation budget");
  c_est->add_option("--max-updates", est.max_updates, "stop after this many updates");
  c_est->add_option("--lr", est.lr, "learning rate");

  auto* c_eva = app.add_subcommand("evaluate", "exact-sampling runs of a policy on the test demand");
  add_common(c_eva, eva);
  c_eva->add_option("--policy", eva.policy_path, "policy CSV (block,station,value); omitted = zero policy");
  c_eva->add_option("--runs", eva.runs, "number of runs")->capture_default_str()->check(CLI::PositiveNumber);

  auto* c_grad = app.add_subcommand("gradcheck", "AD gradient against central differences, frozen noise");
  add_common(c_grad, grad);
  c_grad->add_option("--n-params", grad.n_params, "parameters sampled, 0 = all")->capture_default_str();
  c_grad->add_option("--fd-step", grad.fd_h, "finite-difference step")->capture_default_str();

  auto* c_cmp = app.add_subcommand("compare", "equal-budget comparison of several optimizers");
  add_common(c_cmp, cmp);
  c_cmp->add_option("--methods", cmp.methods, "methods to compare")->capture_default_str();
  c_cmp->add_option("--init-patterns", cmp.init_patterns, "initial patterns")->capture_default_str();
  c_cmp->add_option("--budget", cmp.budget, "simulation budget per run");
  c_cmp->add_option("--runs", cmp.runs, "evaluation runs per policy")->capture_default_str();

  std::string manifest, replay_out;
  auto* c_replay = app.add_subcommand("replay", "rerun a manifest.json");
  c_replay->add_option("manifest", manifest, "manifest file")->required()->check(CLI::ExistingFile);
  c_replay->add_option("--out", replay_out, "output directory")->required();

  std::string save_path;
  auto* c_mat = app.add_subcommand("materialize-target", "cache a scenario's target inventory from its ground-truth policy");
  c_mat->add_option("--scenario", mat.scenario, "scenario file")->required();
  c_mat->add_option("--save", save_path, "where to write the updated scenario (default: in place)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_est->parsed()) return do_estimate(est);
    if (c_eva->parsed()) return do_evaluate(eva);
    if (c_grad->parsed()) return do_gradcheck(grad);
    if (c_cmp->parsed()) return do_compare(cmp);
    if (c_replay->parsed()) return do_replay(manifest, replay_out);
    if (c_mat->parsed()) return do_materialize(mat, save_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
