#include "dabm/network.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

namespace dabm {

double manhattan(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("manhattan: coordinate dimensions differ");
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d += std::abs(a[k] - b[k]);
  return d;
}

StationNetwork::StationNetwork(std::vector<Coord> coords, std::vector<double> initial_inventory,
                               std::vector<double> desired_final)
    : coords_(std::move(coords)), initial_(std::move(initial_inventory)) {
  const std::size_t n = coords_.size();
  if (n == 0) throw DimensionError("a station network needs at least one station");
  if (initial_.size() != n) throw DimensionError("initial_inventory has the wrong length");
  distance_.resize(n * n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) distance_[a * n + b] = manhattan(coords_[a], coords_[b]);
  }
  set_desired_final(std::move(desired_final));
}

StationNetwork StationNetwork::grid(int rows, int cols, double initial_inventory,
                                    double desired_final) {
  if (rows < 1 || cols < 1) throw DimensionError("grid dimensions must be positive");
  std::vector<Coord> coords;
  coords.reserve(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) coords.push_back({static_cast<double>(c), static_cast<double>(r)});
  }
  const std::size_t n = coords.size();
  return StationNetwork(std::move(coords), std::vector<double>(n, initial_inventory),
                        std::vector<double>(n, desired_final));
}

void StationNetwork::set_desired_final(std::vector<double> desired) {
  if (desired.size() != coords_.size()) throw DimensionError("desired_final has the wrong length");
  desired_ = std::move(desired);
}

double StationNetwork::total_bikes() const {
  return std::accumulate(initial_.begin(), initial_.end(), 0.0);
}

PricingPolicy::PricingPolicy(int horizon, int num_stations, int block_len)
    : PricingPolicy(horizon, num_stations, block_len, {}) {}

PricingPolicy::PricingPolicy(int horizon, int num_stations, int block_len,
                             std::vector<double> values)
    : horizon_(horizon), stations_(num_stations), block_len_(block_len) {
  if (horizon < 1 || num_stations < 1 || block_len < 1) {
    throw DimensionError("policy horizon, station count and block length must be positive");
  }
  blocks_ = (horizon + block_len - 1) / block_len;
  const std::size_t n = static_cast<std::size_t>(blocks_) * stations_;
  if (values.empty()) values.assign(n, 0.0);
  if (values.size() != n) {
    throw DimensionError("policy expects " + std::to_string(n) + " values, got " +
                         std::to_string(values.size()));
  }
  values_ = std::move(values);
}

int PricingPolicy::block_of(int t) const {
  if (t < 0 || t >= horizon_) {
    throw std::out_of_range("timestep " + std::to_string(t) + " outside [0, " +
                            std::to_string(horizon_) + ")");
  }
  return t / block_len_;
}

std::size_t PricingPolicy::param_index(int t, int j) const {
  const int b = block_of(t);
  if (j < 0 || j >= stations_) throw std::out_of_range("station " + std::to_string(j) + " out of range");
  return static_cast<std::size_t>(b) * stations_ + j;
}

double PricingPolicy::value(int block, int j) const {
  if (block < 0 || block >= blocks_ || j < 0 || j >= stations_) {
    throw std::out_of_range("policy block/station out of range");
  }
  return values_[static_cast<std::size_t>(block) * stations_ + j];
}

void PricingPolicy::set_values(std::span<const double> values) {
  if (values.size() != values_.size()) throw DimensionError("policy value count mismatch");
  std::copy(values.begin(), values.end(), values_.begin());
}

ad::Var discount_at(const PricingPolicy& policy, std::span<const ad::Var> params, int t, int j) {
  if (params.size() != policy.num_params()) throw DimensionError("parameter count mismatch");
  return params[policy.param_index(t, j)];
}

double policy_cost(const PricingPolicy& policy, int horizon) {
  double cost = 0.0;
  for (int t = 0; t < horizon; ++t) {
    for (int j = 0; j < policy.num_stations(); ++j) cost += policy.at(t, j);
  }
  return cost;
}

void write_policy_csv(const PricingPolicy& policy, std::ostream& out) {
  out << "block,station,value\n";
  out << std::setprecision(17);
  for (int b = 0; b < policy.num_blocks(); ++b) {
    for (int j = 0; j < policy.num_stations(); ++j) {
      out << b << ',' << j << ',' << policy.value(b, j) << '\n';
    }
  }
}

void write_policy_csv(const PricingPolicy& policy, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_policy_csv(policy, out);
}

PricingPolicy read_policy_csv(const PricingPolicy& shape, std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("policy csv: empty input");
  if (line.rfind("block,station,value", 0) != 0) {
    throw std::runtime_error("policy csv: expected header block,station,value");
  }
  std::vector<double> values(shape.num_params(), std::numeric_limits<double>::quiet_NaN());
  std::size_t seen = 0;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::istringstream row(line);
    std::string b_s, j_s, v_s;
    if (!std::getline(row, b_s, ',') || !std::getline(row, j_s, ',') || !std::getline(row, v_s)) {
      throw std::runtime_error("policy csv line " + std::to_string(line_no) + ": expected 3 fields");
    }
    const int b = std::stoi(b_s);
    const int j = std::stoi(j_s);
    if (b < 0 || b >= shape.num_blocks() || j < 0 || j >= shape.num_stations()) {
      throw DimensionError("policy csv line " + std::to_string(line_no) + ": block " + b_s +
                           " station " + j_s + " outside the scenario's " +
                           std::to_string(shape.num_blocks()) + "x" +
                           std::to_string(shape.num_stations()) + " policy");
    }
    double& slot = values[static_cast<std::size_t>(b) * shape.num_stations() + j];
    if (!std::isnan(slot)) throw std::runtime_error("policy csv: duplicate entry on line " + std::to_string(line_no));
    slot = std::stod(v_s);
    ++seen;
  }
  if (seen != values.size()) {
    throw DimensionError("policy csv has " + std::to_string(seen) + " entries, scenario needs " +
                         std::to_string(values.size()));
  }
  return PricingPolicy(shape.horizon(), shape.num_stations(), shape.block_len(), std::move(values));
}

PricingPolicy read_policy_csv(const PricingPolicy& shape, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return read_policy_csv(shape, in);
}

}  // namespace dabm
