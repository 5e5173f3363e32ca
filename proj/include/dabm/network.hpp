#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dabm/autodiff.hpp"

namespace dabm {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Coord = std::array<double, 2>;

/// Sum of absolute coordinate differences.
double manhattan(std::span<const double> a, std::span<const double> b);
inline double manhattan(const Coord& a, const Coord& b) {
  return manhattan(std::span<const double>(a), std::span<const double>(b));
}

/**
 * Stations on a plane with Manhattan distances, the inventory at t = 0 and
 * the inventory the operator wants at the final step.
 */
class StationNetwork {
 public:
  StationNetwork() = default;
  StationNetwork(std::vector<Coord> coords, std::vector<double> initial_inventory,
                 std::vector<double> desired_final);

  /// rows x cols unit grid, station index = row * cols + col, x = col, y = row.
  static StationNetwork grid(int rows, int cols, double initial_inventory, double desired_final);

  int size() const { return static_cast<int>(coords_.size()); }
  const Coord& coord(int j) const { return coords_.at(static_cast<std::size_t>(j)); }
  const std::vector<Coord>& coords() const { return coords_; }
  double distance(int a, int b) const { return distance_[static_cast<std::size_t>(a) * coords_.size() + b]; }
  const std::vector<double>& initial_inventory() const { return initial_; }
  const std::vector<double>& desired_final() const { return desired_; }
  void set_desired_final(std::vector<double> desired);

  double total_bikes() const;

 private:
  std::vector<Coord> coords_;
  std::vector<double> distance_;
  std::vector<double> initial_;
  std::vector<double> desired_;
};

/**
 * Discounts held constant over blocks of `block_len` timesteps. Values are
 * stored block-major: value(b, j) = values()[b * J + j].
 */
class PricingPolicy {
 public:
  PricingPolicy() = default;
  /// Zero policy covering `horizon` timesteps.
  PricingPolicy(int horizon, int num_stations, int block_len);
  PricingPolicy(int horizon, int num_stations, int block_len, std::vector<double> values);

  int horizon() const { return horizon_; }
  int num_stations() const { return stations_; }
  int block_len() const { return block_len_; }
  int num_blocks() const { return blocks_; }
  std::size_t num_params() const { return values_.size(); }

  int block_of(int t) const;
  std::size_t param_index(int t, int j) const;
  double at(int t, int j) const { return values_[param_index(t, j)]; }
  double value(int block, int j) const;

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  void set_values(std::span<const double> values);

 private:
  int horizon_ = 0;
  int stations_ = 0;
  int block_len_ = 1;
  int blocks_ = 0;
  std::vector<double> values_;
};

/// Discount p_{t,j} as a differentiable value, given one Var per policy parameter.
ad::Var discount_at(const PricingPolicy& policy, std::span<const ad::Var> params, int t, int j);
inline double discount_at(const PricingPolicy& policy, int t, int j) { return policy.at(t, j); }

/// Sum over every timestep and station of the discount in force.
double policy_cost(const PricingPolicy& policy, int horizon);
inline double policy_cost(const PricingPolicy& policy) { return policy_cost(policy, policy.horizon()); }

/// CSV with header `block,station,value`.
void write_policy_csv(const PricingPolicy& policy, std::ostream& out);
void write_policy_csv(const PricingPolicy& policy, const std::string& path);
/// Reads values into a policy shaped like `shape`; every (block, station) must appear once.
PricingPolicy read_policy_csv(const PricingPolicy& shape, std::istream& in);
PricingPolicy read_policy_csv(const PricingPolicy& shape, const std::string& path);

}  // namespace dabm
