#include "dabm/demand.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include "dabm/noise.hpp"

namespace dabm {

DemandField::DemandField(int horizon, int num_stations, std::uint64_t seed)
    : horizon_(horizon), stations_(num_stations), seed_(seed) {
  if (horizon < 1 || num_stations < 1) throw DimensionError("demand field dimensions must be positive");
  const std::size_t n = static_cast<std::size_t>(horizon) * num_stations * num_stations;
  dep_.assign(n, 0.0);
  dur_.assign(n, 1.0);
}

void DemandField::set(int t, int i, int j, double dep, double dur) {
  if (!(dep >= 0.0) || !std::isfinite(dep)) throw std::invalid_argument("departure rate must be finite and >= 0");
  if (!(dur > 0.0) || !std::isfinite(dur)) throw std::invalid_argument("duration rate must be finite and > 0");
  const std::size_t k = index(t, i, j);
  dep_.at(k) = dep;
  dur_.at(k) = dur;
}

double DemandField::departures_from(int t, int i) const {
  double total = 0.0;
  for (int j = 0; j < stations_; ++j) total += lambda_dep(t, i, j);
  return total;
}

DemandField build_demand(const DemandSpec& spec, const StationNetwork& network, int horizon,
                         std::uint64_t seed) {
  const int J = network.size();
  DemandField field(horizon, J, seed);
  switch (spec.formula) {
    case DemandFormula::TwoStation: {
      if (J != 2) throw DimensionError("the two-station demand formula needs exactly 2 stations");
      for (int t = 0; t < horizon; ++t) {
        for (int i = 0; i < 2; ++i) {
          for (int j = 0; j < 2; ++j) {
            const double dep = (i == 0 && j == 1) ? spec.rate_01 : (i == 1 && j == 0) ? spec.rate_10 : 0.0;
            field.set(t, i, j, dep, spec.duration_rate);
          }
        }
      }
      break;
    }
    case DemandFormula::DecayingPeak: {
      if (spec.high_demand.size() != static_cast<std::size_t>(J)) {
        throw DimensionError("high_demand mask has " + std::to_string(spec.high_demand.size()) +
                             " entries for " + std::to_string(J) + " stations");
      }
      const NoiseStream noise = NoiseStream(seed).derive(tag(NoiseTag::DemandField));
      for (int t = 0; t < horizon; ++t) {
        const double peak = spec.peak * std::exp(-spec.decay * t);
        for (int i = 0; i < J; ++i) {
          const double origin_level = (spec.high_demand[i] ? peak : 0.0) + spec.base;
          for (int j = 0; j < J; ++j) {
            const std::uint64_t key = noise.key({static_cast<std::uint64_t>(t),
                                                 static_cast<std::uint64_t>(i),
                                                 static_cast<std::uint64_t>(j)});
            const double u = spec.noise_width * NoiseStream::uniform_at(key, 0);
            const double dep = spec.scale * (origin_level + u);
            const double dur = spec.duration_numerator / std::max(network.distance(i, j), 1.0);
            field.set(t, i, j, dep, dur);
          }
        }
      }
      break;
    }
  }
  return field;
}

void write_demand_csv(const DemandField& field, std::ostream& out) {
  out << "t,i,j,lambda_dep,lambda_dur\n" << std::setprecision(17);
  for (int t = 0; t < field.horizon(); ++t) {
    for (int i = 0; i < field.num_stations(); ++i) {
      for (int j = 0; j < field.num_stations(); ++j) {
        if (field.lambda_dep(t, i, j) == 0.0) continue;
        out << t << ',' << i << ',' << j << ',' << field.lambda_dep(t, i, j) << ','
            << field.lambda_dur(t, i, j) << '\n';
      }
    }
  }
}

}  // namespace dabm
