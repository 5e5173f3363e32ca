#include "dabm/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>

#include "dabm/noise.hpp"

namespace dabm {

namespace {

std::uint64_t u64(int v) { return static_cast<std::uint64_t>(v); }

bool records(const SimConfig& config, SimMode mode) {
  return mode == SimMode::Evaluation || config.record_trajectory;
}

struct Streams {
  NoiseStream departures;
  NoiseStream durations;
  NoiseStream choices;

  explicit Streams(std::uint64_t seed)
      : departures(NoiseStream(seed).derive(tag(NoiseTag::Departures))),
        durations(NoiseStream(seed).derive(tag(NoiseTag::Durations))),
        choices(NoiseStream(seed).derive(tag(NoiseTag::Choices))) {}
};

// One relaxed agent (or cell) routed through a choice group.
struct GroupEntry {
  std::uint64_t key;
  double weight;  // mass that reaches its destination by the final step
};

}  // namespace

double inventory_loss(std::span<const double> final_inventory, std::span<const double> desired) {
  if (final_inventory.size() != desired.size() || desired.empty()) {
    throw DimensionError("inventory_loss: size mismatch");
  }
  double total = 0.0;
  for (std::size_t j = 0; j < desired.size(); ++j) {
    const double e = desired[j] - final_inventory[j];
    total += e * e;
  }
  return total / static_cast<double>(desired.size());
}

Simulator::Simulator(StationNetwork network, DemandField demand, PricingPolicy shape,
                     ChoiceParams choice, SimConfig config)
    : network_(std::move(network)),
      demand_(std::move(demand)),
      shape_(std::move(shape)),
      choice_(choice),
      config_(config) {
  if (config_.horizon < 1) throw ConfigError("horizon must be at least 1");
  if (config_.batch < 1) throw ConfigError("batch must be at least 1");
  if (!(config_.tau > 0.0)) throw ConfigError("tau must be positive");
  if (demand_.num_stations() != network_.size() || shape_.num_stations() != network_.size()) {
    throw DimensionError("network, demand and policy disagree on the station count");
  }
  if (demand_.horizon() < config_.horizon || shape_.horizon() < config_.horizon) {
    throw DimensionError("demand field or policy shorter than the simulation horizon");
  }
  // Duration pmfs depend only on the rate; most cells share a handful of rates.
  const int J = network_.size();
  for (int t = 0; t < config_.horizon; ++t) {
    for (int i = 0; i < J; ++i) {
      for (int j = 0; j < J; ++j) {
        if (demand_.lambda_dep(t, i, j) > 0.0) duration_dist(demand_.lambda_dur(t, i, j));
      }
    }
  }
}

void Simulator::set_tau(double tau) {
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  config_.tau = tau;
}

void Simulator::set_batch(int batch) {
  if (batch < 1) throw ConfigError("batch must be at least 1");
  config_.batch = batch;
}

const Simulator::CellDist& Simulator::duration_dist(double rate) const {
  auto it = duration_cache_.find(rate);
  if (it != duration_cache_.end()) return it->second;
  CellDist dist;
  truncated_pmf(CountBase::exponential(rate, config_.timestep), config_.durations, dist.pmf);
  dist.support_min = 1;
  return duration_cache_.emplace(rate, std::move(dist)).first->second;
}

std::uint64_t Simulator::replica_seed(std::uint64_t seed, int replica) {
  return NoiseStream(seed).derive(tag(NoiseTag::Replica)).key({u64(replica)});
}

SimState Simulator::init_state(std::span<const double> params, std::uint64_t seed, ad::Tape* tape,
                               std::span<const ad::Var> param_vars) const {
  if (params.size() != shape_.num_params()) {
    throw DimensionError("policy has " + std::to_string(params.size()) + " values, scenario needs " +
                         std::to_string(shape_.num_params()));
  }
  if (!param_vars.empty() && param_vars.size() != params.size()) {
    throw DimensionError("one Var per policy parameter required");
  }
  if (tape != nullptr && config_.mode != SimMode::Estimation) {
    throw ConfigError("differentiable runs require estimation mode");
  }
  const int J = network_.size();
  const int T = config_.horizon;
  SimState s;
  s.seed = seed;
  s.tape = tape;
  s.params.assign(params.begin(), params.end());
  if (!param_vars.empty()) {
    s.param_vars.assign(param_vars.begin(), param_vars.end());
  } else {
    s.param_vars.assign(params.begin(), params.end());
  }
  s.final_constant = network_.initial_inventory();
  s.final_terms.assign(static_cast<std::size_t>(J), {});

  SimOutcome& o = s.outcome;
  o.horizon = T;
  o.num_stations = J;
  o.mode = config_.mode;
  if (records(config_, config_.mode)) {
    s.inventory = network_.initial_inventory();
    s.arrivals.assign(static_cast<std::size_t>(T + 1) * J, 0.0);
    s.returning.assign(static_cast<std::size_t>(T + 1), 0.0);
    o.inventory.assign(static_cast<std::size_t>(T + 1) * J, 0.0);
    std::copy(s.inventory.begin(), s.inventory.end(), o.inventory.begin());
    o.in_transit.assign(static_cast<std::size_t>(T + 1), 0.0);
    o.trips.assign(static_cast<std::size_t>(T) * J * J, 0.0);
  }
  ++sim_count_;
  return s;
}

void Simulator::step(SimState& state) const {
  if (state.t >= config_.horizon) throw std::out_of_range("simulation already finished");
  if (config_.mode == SimMode::Evaluation) {
    hard_step(state);
  } else {
    relaxed_step(state);
  }
  if (!state.outcome.has_trajectory()) {
    ++state.t;
    return;
  }
  // Apply arrivals due at the start of the next step.
  const int J = network_.size();
  const std::size_t row = static_cast<std::size_t>(state.t + 1) * J;
  for (int j = 0; j < J; ++j) {
    state.inventory[j] += state.arrivals[row + j];
    state.outcome.inventory[row + j] = state.inventory[j];
    if (state.inventory[j] < 0.0) ++state.outcome.negative_inventory;
  }
  state.in_transit -= state.returning[static_cast<std::size_t>(state.t + 1)];
  state.outcome.in_transit[static_cast<std::size_t>(state.t + 1)] = state.in_transit;
  ++state.t;
}

void Simulator::relaxed_step(SimState& state) const {
  const int t = state.t;
  const int T = config_.horizon;
  const int J = network_.size();
  const int remaining = T - t;
  const double tau = config_.tau;
  const bool recording = state.outcome.has_trajectory();
  const Streams streams(state.seed);

  std::vector<double> discounts(static_cast<std::size_t>(J));
  std::vector<ad::Var> discount_vars(static_cast<std::size_t>(J));
  for (int s = 0; s < J; ++s) {
    const std::size_t k = shape_.param_index(t, s);
    discounts[s] = state.params[k];
    discount_vars[s] = state.param_vars[k];
  }

  std::vector<double> dep_pmf;
  std::vector<std::uint32_t> dep_ids;
  std::vector<double> y_dep;
  std::vector<double> occupancy;
  std::vector<double> y_dur;
  std::vector<std::uint32_t> dur_ids;
  std::vector<double> y_dest;

  for (int j = 0; j < J; ++j) {
    const ChoiceSet set = build_choice_set(discounts, j, network_);
    const std::size_t m = set.size();
    const std::vector<double> probs = choice_probs(utilities(set, choice_));
    std::vector<std::uint32_t> member_ids(set.members.begin(), set.members.end());
    std::vector<double> group_out(m, 0.0);
    std::vector<GroupEntry> entries;
    y_dest.assign(m, 0.0);

    for (int i = 0; i < J; ++i) {
      const double lam = demand_.lambda_dep(t, i, j);
      if (lam <= 0.0) continue;

      truncated_pmf(CountBase::poisson(lam), config_.departures, dep_pmf);
      const std::size_t n_cat = dep_pmf.size();
      dep_ids.resize(n_cat);
      std::iota(dep_ids.begin(), dep_ids.end(), 0u);
      y_dep.resize(n_cat);
      gumbel_softmax_keyed(dep_pmf, dep_ids, streams.departures.key({u64(t), u64(i), u64(j)}), tau, y_dep);
      double count = 0.0;
      for (std::size_t c = 1; c < n_cat; ++c) count += static_cast<double>(c) * y_dep[c];

      state.final_constant[i] -= count;
      state.departed_total += count;
      if (recording) {
        state.inventory[i] -= count;
        state.in_transit += count;
      }

      // Slot k holds the soft probability that at least k agents departed.
      occupancy.clear();
      if (config_.routing == Routing::PerAgent) {
        double tail = 0.0;
        occupancy.assign(n_cat - 1, 0.0);
        for (std::size_t c = n_cat - 1; c >= 1; --c) {
          tail += y_dep[c];
          occupancy[c - 1] = tail;
        }
      } else {
        occupancy.push_back(count);
      }

      const CellDist& dur = duration_dist(demand_.lambda_dur(t, i, j));
      const std::size_t n_dur = dur.pmf.size();
      dur_ids.resize(n_dur);
      std::iota(dur_ids.begin(), dur_ids.end(), 0u);
      y_dur.resize(n_dur);

      for (std::size_t k = 0; k < occupancy.size(); ++k) {
        const double occ = occupancy[k];
        if (occ <= 0.0) continue;
        const std::uint64_t slot = k + 1;
        gumbel_softmax_keyed(dur.pmf, dur_ids,
                             streams.durations.key({u64(t), u64(i), u64(j), slot}), tau, y_dur);
        double arrive = 0.0;
        for (std::size_t c = 0; c < n_dur; ++c) {
          if (dur.support_min + static_cast<int>(c) <= remaining) arrive += y_dur[c];
        }
        const double weight = occ * arrive;

        if (m == 1) {
          y_dest[0] = 1.0;
          state.final_constant[j] += weight;
        } else {
          const std::uint64_t key = streams.choices.key({u64(t), u64(i), u64(j), slot});
          gumbel_softmax_keyed(probs, member_ids, key, tau, y_dest);
          for (std::size_t r = 0; r < m; ++r) group_out[r] += weight * y_dest[r];
          entries.push_back({key, weight});
        }

        if (recording) {
          double* trips = &state.outcome.trips[(static_cast<std::size_t>(t) * J + i) * J];
          for (std::size_t r = 0; r < m; ++r) trips[set.members[r]] += occ * y_dest[r];
          for (std::size_t c = 0; c < n_dur; ++c) {
            const int d = dur.support_min + static_cast<int>(c);
            if (d > remaining) break;
            const double mass = occ * y_dur[c];
            if (mass == 0.0) continue;
            double* row = &state.arrivals[static_cast<std::size_t>(t + d) * J];
            for (std::size_t r = 0; r < m; ++r) row[set.members[r]] += mass * y_dest[r];
            // In-transit mass is tracked from the duration draw alone, so the
            // conservation check also covers the destination split.
            state.returning[static_cast<std::size_t>(t + d)] += mass;
          }
        }
      }
    }

    if (m == 1) continue;
    if (state.tape == nullptr) {
      for (std::size_t r = 0; r < m; ++r) state.final_constant[set.members[r]] += group_out[r];
      continue;
    }
    // Differentiable part: log-probabilities of the members feed one fused
    // node whose outputs are the arrived mass per member.
    const std::vector<ad::Var> u = utilities(set, discount_vars, choice_);
    const ad::Var lse = ad::logsumexp(u);
    std::vector<ad::Var> z;
    z.reserve(m);
    for (const ad::Var& ur : u) z.push_back(ur - lse);
    auto backward = [probs, member_ids, entries = std::move(entries), tau](
                        std::span<const double> adj, std::span<double> parent_adj) {
      std::vector<double> y(probs.size());
      for (const GroupEntry& e : entries) {
        gumbel_softmax_keyed(probs, member_ids, e.key, tau, y);
        double dot = 0.0;
        for (std::size_t r = 0; r < y.size(); ++r) dot += adj[r] * y[r];
        const double scale = e.weight / tau;
        for (std::size_t r = 0; r < y.size(); ++r) parent_adj[r] += scale * y[r] * (adj[r] - dot);
      }
    };
    const std::vector<ad::Var> outs = state.tape->record_custom(z, group_out, std::move(backward));
    for (std::size_t r = 0; r < m; ++r) state.final_terms[set.members[r]].push_back(outs[r]);
  }
}

void Simulator::hard_step(SimState& state) const {
  const int t = state.t;
  const int T = config_.horizon;
  const int J = network_.size();
  const int remaining = T - t;
  const Streams streams(state.seed);

  std::vector<double> discounts(static_cast<std::size_t>(J));
  for (int s = 0; s < J; ++s) discounts[s] = state.params[shape_.param_index(t, s)];

  for (int j = 0; j < J; ++j) {
    const ChoiceSet set = build_choice_set(discounts, j, network_);
    const std::vector<double> probs = choice_probs(utilities(set, choice_));
    for (int i = 0; i < J; ++i) {
      const double lam = demand_.lambda_dep(t, i, j);
      if (lam <= 0.0) continue;
      const int count = hard_sample(CountBase::poisson(lam),
                                    NoiseStream::uniform_at(streams.departures.key({u64(t), u64(i), u64(j)}), 0));
      if (count == 0) continue;
      state.final_constant[i] -= count;
      state.departed_total += count;
      state.inventory[i] -= count;
      state.in_transit += count;
      const CountBase dur_base = CountBase::exponential(demand_.lambda_dur(t, i, j), config_.timestep);
      double* trips = &state.outcome.trips[(static_cast<std::size_t>(t) * J + i) * J];
      for (int k = 0; k < count; ++k) {
        const std::uint64_t slot = static_cast<std::uint64_t>(k) + 1;
        const double u_choice =
            NoiseStream::uniform_at(streams.choices.key({u64(t), u64(i), u64(j), slot}), 0);
        const int dest = set.members[static_cast<std::size_t>(choose_destination(probs, u_choice))];
        const double u_dur =
            NoiseStream::uniform_at(streams.durations.key({u64(t), u64(i), u64(j), slot}), 0);
        const int d = hard_sample(dur_base, u_dur);
        trips[dest] += 1.0;
        if (d <= remaining) {
          state.arrivals[static_cast<std::size_t>(t + d) * J + dest] += 1.0;
          state.final_constant[dest] += 1.0;
          state.returning[static_cast<std::size_t>(t + d)] += 1.0;
        }
      }
    }
  }
}

ad::Var Simulator::finish(SimState& state) const {
  if (state.t != config_.horizon) throw std::logic_error("finish called before the final step");
  const int J = network_.size();
  SimOutcome& o = state.outcome;
  const std::vector<double>& desired = network_.desired_final();

  std::vector<ad::Var> squares;
  squares.reserve(static_cast<std::size_t>(J));
  o.final_inventory.assign(static_cast<std::size_t>(J), 0.0);
  for (int j = 0; j < J; ++j) {
    const std::vector<ad::Var>& terms = state.final_terms[j];
    const std::vector<double> ones(terms.size(), 1.0);
    const ad::Var level = ad::affine(terms, ones, state.final_constant[j]);
    o.final_inventory[j] = level.value();
    const ad::Var err = level - ad::Var(desired[j]);
    squares.push_back(err * err);
  }
  const std::vector<double> mean_weights(static_cast<std::size_t>(J), 1.0 / J);
  const ad::Var loss = ad::affine(squares, mean_weights);
  o.loss = loss.value();

  double cost = 0.0;
  for (int t = 0; t < config_.horizon; ++t) {
    for (int j = 0; j < J; ++j) cost += state.params[shape_.param_index(t, j)];
  }
  o.cost = cost;

  if (o.has_trajectory()) {
    o.in_transit_at_end = state.in_transit;
  } else {
    o.in_transit_at_end =
        network_.total_bikes() - std::accumulate(o.final_inventory.begin(), o.final_inventory.end(), 0.0);
    for (double v : o.final_inventory) {
      if (v < 0.0) ++o.negative_inventory;
    }
  }
  return loss;
}

SimOutcome Simulator::run(std::span<const double> params, std::uint64_t seed) const {
  SimState state = init_state(params, seed);
  while (state.t < config_.horizon) step(state);
  finish(state);
  return std::move(state.outcome);
}

ad::Var Simulator::run_on_tape(ad::Tape& tape, std::span<const ad::Var> params, std::uint64_t seed,
                               SimOutcome* outcome) const {
  const std::vector<double> values = ad::values_of(params);
  SimState state = init_state(values, seed, &tape, params);
  while (state.t < config_.horizon) step(state);
  const ad::Var loss = finish(state);
  if (outcome != nullptr) *outcome = std::move(state.outcome);
  return loss;
}

double Simulator::batched_loss(std::span<const double> params, std::uint64_t seed) const {
  double total = 0.0;
  for (int r = 0; r < config_.batch; ++r) total += run(params, replica_seed(seed, r)).loss;
  return total / config_.batch;
}

ad::Var Simulator::batched_loss(ad::Tape& tape, std::span<const ad::Var> params,
                                std::uint64_t seed) const {
  std::vector<ad::Var> losses;
  losses.reserve(static_cast<std::size_t>(config_.batch));
  for (int r = 0; r < config_.batch; ++r) losses.push_back(run_on_tape(tape, params, replica_seed(seed, r)));
  const std::vector<double> weights(losses.size(), 1.0 / config_.batch);
  return ad::affine(losses, weights);
}

double Simulator::batched_loss_and_gradient(std::span<const double> params, std::uint64_t seed,
                                            std::vector<double>& gradient) const {
  // One private tape per replica keeps peak memory at a single run.
  gradient.assign(params.size(), 0.0);
  double total = 0.0;
  ad::Tape tape;
  std::vector<ad::Var> inputs;
  inputs.reserve(params.size());
  for (int r = 0; r < config_.batch; ++r) {
    tape.clear();
    inputs.clear();
    for (double p : params) inputs.push_back(tape.input(p));
    const ad::Var loss = run_on_tape(tape, inputs, replica_seed(seed, r));
    total += loss.value();
    const ad::Gradients g = tape.backward(loss);
    for (std::size_t k = 0; k < params.size(); ++k) gradient[k] += g[inputs[k]];
  }
  for (double& gk : gradient) gk /= config_.batch;
  return total / config_.batch;
}

void write_trips_csv(std::span<const SimOutcome> outcomes, std::ostream& out) {
  out << "t,origin,destination,mean_trips\n" << std::setprecision(10);
  if (outcomes.empty() || !outcomes.front().has_trajectory()) return;
  const SimOutcome& first = outcomes.front();
  const int J = first.num_stations;
  const double n = static_cast<double>(outcomes.size());
  for (int t = 0; t < first.horizon; ++t) {
    for (int i = 0; i < J; ++i) {
      for (int s = 0; s < J; ++s) {
        double total = 0.0;
        for (const SimOutcome& o : outcomes) total += o.trips_at(t, i, s);
        if (total == 0.0) continue;
        out << t << ',' << i << ',' << s << ',' << total / n << '\n';
      }
    }
  }
}

void write_final_inventory_csv(std::span<const SimOutcome> outcomes, const StationNetwork& network,
                               std::ostream& out) {
  out << "station,x,y,mean_final_inventory,desired,error\n" << std::setprecision(10);
  if (outcomes.empty()) return;
  const double n = static_cast<double>(outcomes.size());
  for (int j = 0; j < network.size(); ++j) {
    double total = 0.0;
    for (const SimOutcome& o : outcomes) total += o.final_inventory.at(j);
    const double mean = total / n;
    const double desired = network.desired_final()[j];
    out << j << ',' << network.coord(j)[0] << ',' << network.coord(j)[1] << ',' << mean << ','
        << desired << ',' << mean - desired << '\n';
  }
}

}  // namespace dabm
