#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include "dabm/autodiff.hpp"
#include "dabm/choice.hpp"
#include "dabm/demand.hpp"
#include "dabm/network.hpp"
#include "dabm/sampling.hpp"

namespace dabm {

enum class SimMode {
  Estimation,  // relaxed, differentiable
  Evaluation,  // exact stochastic draws
};

enum class Routing {
  PerAgent,   // each possible agent of a cell draws its own destination and duration
  CellLevel,  // one destination and duration draw per cell, scaled by the soft count
};

struct SimConfig {
  int horizon = 20;
  SimMode mode = SimMode::Estimation;
  double tau = 1.0;
  int batch = 5;
  Routing routing = Routing::PerAgent;
  double timestep = 1.0;
  TruncationConfig departures{1e-6, 64};
  TruncationConfig durations{1e-6, 128};
  /// Keep per-step inventories, in-transit mass and trip flows. Evaluation
  /// runs always record them; relaxed runs only when asked (it costs an
  /// outer product per sampled agent).
  bool record_trajectory = false;
};

struct SimOutcome {
  int horizon = 0;
  int num_stations = 0;
  SimMode mode = SimMode::Estimation;

  std::vector<double> final_inventory;  // J
  std::vector<double> inventory;        // (T+1) x J, empty unless recorded
  std::vector<double> in_transit;       // T+1, empty unless recorded
  std::vector<double> trips;            // T x J x J departures by origin and realized destination
  double in_transit_at_end = 0.0;
  double loss = 0.0;
  double cost = 0.0;
  /// (timestep, station) entries below zero; only the final step is checked
  /// when no trajectory was recorded.
  int negative_inventory = 0;

  bool has_trajectory() const { return !inventory.empty(); }
  double inventory_at(int t, int j) const {
    return inventory[static_cast<std::size_t>(t) * num_stations + j];
  }
  double trips_at(int t, int i, int s) const {
    return trips[(static_cast<std::size_t>(t) * num_stations + i) * num_stations + s];
  }
};

/// (1/J) Σ_j (desired_j - final_j)^2.
double inventory_loss(std::span<const double> final_inventory, std::span<const double> desired);

/// Mutable state threaded through `Simulator::step`.
struct SimState {
  int t = 0;
  std::uint64_t seed = 0;
  ad::Tape* tape = nullptr;
  std::vector<double> params;
  std::vector<ad::Var> param_vars;

  std::vector<double> inventory;  // current per-station inventory (recorded runs)
  std::vector<double> arrivals;   // (T+1) x J scheduled arrival mass
  std::vector<double> returning;  // T+1 scheduled arrival mass by time, summed over stations
  double in_transit = 0.0;
  double departed_total = 0.0;

  // Final inventory as constant part plus differentiable contributions.
  std::vector<double> final_constant;
  std::vector<std::vector<ad::Var>> final_terms;

  SimOutcome outcome;
};

/**
 * Bike-sharing simulation over a fixed network, demand field and policy
 * shape. Each timestep draws departures per origin-destination cell, lets
 * each agent re-choose its destination among stations with strictly higher
 * discounts, draws a trip duration and schedules the arrival.
 *
 * All randomness is keyed by (seed, timestep, cell, agent slot, category),
 * so two runs with the same seed share every draw whose coordinates agree.
 */
class Simulator {
 public:
  Simulator(StationNetwork network, DemandField demand, PricingPolicy shape,
            ChoiceParams choice, SimConfig config);

  const StationNetwork& network() const { return network_; }
  const DemandField& demand() const { return demand_; }
  const PricingPolicy& policy_shape() const { return shape_; }
  const ChoiceParams& choice_params() const { return choice_; }
  const SimConfig& config() const { return config_; }
  void set_mode(SimMode mode) { config_.mode = mode; }
  void set_tau(double tau);
  void set_batch(int batch);
  void set_record_trajectory(bool on) { config_.record_trajectory = on; }
  std::size_t num_params() const { return shape_.num_params(); }

  SimState init_state(std::span<const double> params, std::uint64_t seed, ad::Tape* tape = nullptr,
                      std::span<const ad::Var> param_vars = {}) const;
  /// Advance `state` by one timestep.
  void step(SimState& state) const;
  /// Finalize loss and cost; returns the loss as a Var (constant without a tape).
  ad::Var finish(SimState& state) const;

  /// One run in the configured mode, values only.
  SimOutcome run(std::span<const double> params, std::uint64_t seed) const;
  /// One relaxed run recorded on `tape`; returns the loss Var.
  ad::Var run_on_tape(ad::Tape& tape, std::span<const ad::Var> params, std::uint64_t seed,
                      SimOutcome* outcome = nullptr) const;

  /// Mean loss over `config().batch` replicas derived from `seed`.
  double batched_loss(std::span<const double> params, std::uint64_t seed) const;
  ad::Var batched_loss(ad::Tape& tape, std::span<const ad::Var> params, std::uint64_t seed) const;
  /// Mean loss and its gradient over the replicas (relaxed mode).
  double batched_loss_and_gradient(std::span<const double> params, std::uint64_t seed,
                                   std::vector<double>& gradient) const;

  static std::uint64_t replica_seed(std::uint64_t seed, int replica);

  /// Number of single simulation runs performed so far.
  std::uint64_t sim_count() const { return sim_count_; }
  void reset_sim_count() { sim_count_ = 0; }

 private:
  struct CellDist {
    std::vector<double> pmf;
    int support_min = 0;
  };

  const CellDist& duration_dist(double rate) const;
  void relaxed_step(SimState& state) const;
  void hard_step(SimState& state) const;

  StationNetwork network_;
  DemandField demand_;
  PricingPolicy shape_;
  ChoiceParams choice_;
  SimConfig config_;
  mutable std::map<double, CellDist> duration_cache_;
  mutable std::uint64_t sim_count_ = 0;
};

/// `t,origin,destination,mean_trips` rows averaged over outcomes.
void write_trips_csv(std::span<const SimOutcome> outcomes, std::ostream& out);
/// `station,x,y,mean_final_inventory,desired,error` rows averaged over outcomes.
void write_final_inventory_csv(std::span<const SimOutcome> outcomes, const StationNetwork& network,
                               std::ostream& out);

}  // namespace dabm
