#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dabm/choice.hpp"
#include "dabm/demand.hpp"
#include "dabm/network.hpp"
#include "dabm/optimizers.hpp"
#include "dabm/simulator.hpp"

namespace dabm {

inline constexpr int kScenarioSchemaVersion = 1;

/// Invalid scenario document; `field()` is the dotted path of the offending entry.
class SchemaError : public std::runtime_error {
 public:
  SchemaError(const std::string& field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct OptimizerDefaults {
  double lr_ad = 1e-3;
  double lr_fd = 1e-5;
  double fd_step = 0.1;
  int de_pop = 100;
  double de_mutation = 0.5;
  double de_recombination = 0.7;
  double de_lower = 0.0;
  double de_upper = 3.0;
  std::uint64_t budget = 2500;

  bool operator==(const OptimizerDefaults&) const = default;
};

struct ScenarioSeeds {
  std::uint64_t demand_est = 1;
  std::uint64_t demand_test = 2;
  std::uint64_t sim = 3;
  std::uint64_t policy = 4;

  bool operator==(const ScenarioSeeds&) const = default;
};

/// How a target inventory was produced from a known policy.
struct TargetSource {
  std::vector<double> policy;  // ground-truth policy values
  std::uint64_t seed = 0;
  SimMode mode = SimMode::Estimation;

  bool operator==(const TargetSource&) const = default;
};

struct ScenarioSpec {
  int schema_version = kScenarioSchemaVersion;
  std::string id;
  std::string description;

  // Either a grid (rows x cols, unit spacing) or explicit coordinates.
  int grid_rows = 0;
  int grid_cols = 0;
  std::vector<Coord> coords;

  double initial_inventory = 100.0;
  std::vector<double> desired_final;  // one per station
  int horizon = 20;
  int block_len = 5;

  DemandSpec demand;
  ChoiceParams choice;

  double tau = 1.0;
  int batch = 5;
  Routing routing = Routing::PerAgent;
  double timestep = 1.0;
  TruncationConfig departures{1e-6, 64};
  TruncationConfig durations{1e-6, 128};

  OptimizerDefaults optimizer;
  ScenarioSeeds seeds;
  std::optional<TargetSource> target;

  int num_stations() const;
  int num_blocks() const { return (horizon + block_len - 1) / block_len; }
  std::size_t num_params() const { return static_cast<std::size_t>(num_blocks()) * num_stations(); }

  bool operator==(const ScenarioSpec&) const = default;
};

/// Directory searched for builtin ids: $DABM_SCENARIO_DIR, else the source tree's scenarios/.
std::string scenario_dir();
/// Load a builtin id (s1, s2, s3) or a path to a scenario document.
ScenarioSpec load_scenario(const std::string& id_or_path);
ScenarioSpec parse_scenario(const std::string& text, const std::string& source = "<string>");
std::string dump_scenario(const ScenarioSpec& spec);
void save_scenario(const ScenarioSpec& spec, const std::string& path);
/// Checks every invariant; throws SchemaError naming the field.
void validate(const ScenarioSpec& spec);

StationNetwork build_network(const ScenarioSpec& spec);
DemandField build_demand(const ScenarioSpec& spec, std::uint64_t seed);
PricingPolicy policy_shape(const ScenarioSpec& spec);
SimConfig sim_config(const ScenarioSpec& spec, SimMode mode);
Simulator make_simulator(const ScenarioSpec& spec, std::uint64_t demand_seed, SimMode mode);
OptimizerConfig optimizer_config(const ScenarioSpec& spec, Method method);

/// Uniform initial discounts: pattern "1" is U(0, 0.1), "2" is U(1, 1.1),
/// "custom:a,b" is U(a, b).
struct InitPattern {
  std::string name;
  double lo = 0.0;
  double hi = 0.0;
};
InitPattern parse_init_pattern(const std::string& text);
InitPattern custom_pattern(double lo, double hi);
PricingPolicy initial_policy(const ScenarioSpec& spec, const InitPattern& pattern, std::uint64_t seed);

/// Replace the desired inventory with the final inventory of one run of
/// the target's ground-truth policy.
void materialize_target(ScenarioSpec& spec);

}  // namespace dabm
