#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dabm/network.hpp"

namespace dabm {

enum class DemandFormula {
  /// Fixed rates on the two directed pairs 0->1 and 1->0 only.
  TwoStation,
  /// Per origin: scale * (peak * exp(-decay * t) [high-demand only] + base + U(0, noise_width)).
  DecayingPeak,
};

struct DemandSpec {
  DemandFormula formula = DemandFormula::DecayingPeak;

  // TwoStation
  double rate_01 = 1.0;
  double rate_10 = 0.5;
  double duration_rate = 1.0;  // exponential rate used for every cell

  // DecayingPeak
  double scale = 1.0;
  double peak = 1.0;
  double decay = 0.2;
  double base = 0.1;
  double noise_width = 0.2;
  double duration_numerator = 5.0;  // duration rate = numerator / max(distance, 1)
  std::vector<bool> high_demand;    // one flag per origin station

  bool operator==(const DemandSpec&) const = default;
};

/**
 * Expected departures λ_dep[t,i,j] and trip-duration rates λ_dur[t,i,j] for
 * every timestep and origin-destination pair. Durations are exponential with
 * rate λ_dur per timestep, so long trips have small rates.
 */
class DemandField {
 public:
  DemandField() = default;
  DemandField(int horizon, int num_stations, std::uint64_t seed);

  int horizon() const { return horizon_; }
  int num_stations() const { return stations_; }
  std::uint64_t seed() const { return seed_; }

  double lambda_dep(int t, int i, int j) const { return dep_[index(t, i, j)]; }
  double lambda_dur(int t, int i, int j) const { return dur_[index(t, i, j)]; }
  void set(int t, int i, int j, double dep, double dur);

  /// Σ_j λ_dep[t, i, j].
  double departures_from(int t, int i) const;

  const std::vector<double>& dep() const { return dep_; }
  const std::vector<double>& dur() const { return dur_; }

 private:
  std::size_t index(int t, int i, int j) const {
    return (static_cast<std::size_t>(t) * stations_ + i) * stations_ + j;
  }

  int horizon_ = 0;
  int stations_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<double> dep_;
  std::vector<double> dur_;
};

/// Builds the field; the U(0, noise_width) draws are keyed by (t, i, j) under `seed`.
DemandField build_demand(const DemandSpec& spec, const StationNetwork& network, int horizon,
                         std::uint64_t seed);

/// Rows `t,i,j,lambda_dep,lambda_dur` for every cell with nonzero departures.
void write_demand_csv(const DemandField& field, std::ostream& out);

}  // namespace dabm
