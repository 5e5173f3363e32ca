#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dabm/optimizers.hpp"
#include "dabm/scenarios.hpp"
#include "dabm/simulator.hpp"

namespace dabm {

/// Everything a run needs beyond the scenario document. Unset optionals
/// fall back to the scenario's values.
struct RunOptions {
  std::string subcommand;
  std::string scenario = "s2";
  std::string method = "ad-sgd";
  std::string init_pattern = "1";
  std::optional<std::uint64_t> budget;
  std::optional<int> max_updates;
  int runs = 30;
  std::optional<std::uint64_t> seed_demand_est;
  std::optional<std::uint64_t> seed_demand_test;
  std::optional<std::uint64_t> seed_sim;
  std::optional<std::uint64_t> seed_policy;
  std::optional<double> tau;
  std::optional<int> batch;
  std::optional<double> lr;
  std::string policy_path;  // evaluate: policy CSV; empty means the zero policy
  std::vector<double> policy_values;  // evaluate: explicit values, used instead of policy_path
  int n_params = 20;        // gradcheck: parameters sampled (0 = all)
  double fd_h = 1e-4;
  std::vector<std::string> methods{"ad-sgd", "de", "fd"};
  std::vector<std::string> init_patterns{"1", "2"};
  std::string out_dir;
};

/// Loads the scenario and applies the option overrides.
ScenarioSpec resolve_scenario(const RunOptions& options);
/// The policy an evaluate run uses: explicit values, the CSV, or zeros.
PricingPolicy resolve_policy(const RunOptions& options, const ScenarioSpec& spec);

struct EstimateResult {
  OptTrace trace;
  PricingPolicy policy;
  std::string init_pattern;
  int negative_discounts = 0;
};

EstimateResult run_estimate(const ScenarioSpec& spec, Method method, const InitPattern& pattern,
                            std::optional<int> max_updates = std::nullopt);

struct EvaluateResult {
  int runs = 0;
  SimOutcome mean;                   // every recorded field averaged over the runs
  std::vector<double> run_losses;
  double loss = 0.0;           // loss of the run-averaged final inventory
  double mean_run_loss = 0.0;  // average of the per-run losses
  double cost = 0.0;
  int negative_inventory = 0;
};

/// `runs` exact-sampling runs on the given demand seed.
EvaluateResult run_evaluate(const ScenarioSpec& spec, const PricingPolicy& policy, int runs,
                            std::uint64_t demand_seed, std::uint64_t sim_seed);

struct GradcheckEntry {
  std::size_t param = 0;
  int block = 0;
  int station = 0;
  double ad = 0.0;
  double fd = 0.0;
  double abs_err = 0.0;
  double rel_err = 0.0;
  bool pass = false;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double loss = 0.0;
  bool all_pass = true;
  double worst_rel = 0.0;
};

/// Relaxed-mode AD gradient against central finite differences with every
/// draw frozen. The random policy is nudged so that no sampled parameter
/// sits within `h` of another discount in its block, keeping choice sets
/// fixed across the probes.
GradcheckReport run_gradcheck(const ScenarioSpec& spec, std::size_t n_params, double h, std::uint64_t seed,
                              double rel_tol = 1e-3, double abs_tol = 1e-7);

struct CompareRow {
  std::string method;
  std::string init_pattern;
  int updates = 0;
  std::uint64_t sim_count = 0;
  double best_train_loss = 0.0;
  double eval_loss = 0.0;
  double cost = 0.0;
  std::string note;
};

struct CompareResult {
  std::vector<EstimateResult> estimates;
  std::vector<CompareRow> rows;
};

CompareResult run_compare(const ScenarioSpec& spec, const std::vector<Method>& methods,
                          const std::vector<InitPattern>& patterns, int eval_runs);

// Output writers. Each subcommand writes its CSVs plus manifest.json into
// `options.out_dir`; replaying a manifest reproduces the same numbers.
void write_manifest(const RunOptions& options, const ScenarioSpec& spec, const std::string& dir);
void write_estimate_outputs(const RunOptions& options, const ScenarioSpec& spec, const EstimateResult& result);
void write_evaluate_outputs(const RunOptions& options, const ScenarioSpec& spec, const EvaluateResult& result);
void write_gradcheck_outputs(const RunOptions& options, const ScenarioSpec& spec, const GradcheckReport& report);
void write_compare_outputs(const RunOptions& options, const ScenarioSpec& spec, const CompareResult& result);

/// Reads a manifest back into options plus the exact scenario it used.
std::pair<RunOptions, ScenarioSpec> read_manifest(const std::string& path);

}  // namespace dabm
