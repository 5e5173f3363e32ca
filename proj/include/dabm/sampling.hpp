#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "dabm/autodiff.hpp"
#include "dabm/noise.hpp"

namespace dabm {

class InvalidDistributionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class CountFamily { Poisson, DiscretizedExponential };

/// An unbounded count distribution. Poisson counts start at 0; discretized
/// exponential durations start at 1 timestep.
struct CountBase {
  CountFamily family = CountFamily::Poisson;
  double rate = 1.0;      // Poisson mean, or exponential rate per unit time
  double timestep = 1.0;  // bin width for the exponential

  static CountBase poisson(double mean) { return {CountFamily::Poisson, mean, 1.0}; }
  static CountBase exponential(double rate, double timestep = 1.0) {
    return {CountFamily::DiscretizedExponential, rate, timestep};
  }

  int support_min() const { return family == CountFamily::Poisson ? 0 : 1; }
  double mean() const;
  double variance() const;
};

struct TruncationConfig {
  double tail_tol = 1e-6;
  int max_limit = 64;

  bool operator==(const TruncationConfig&) const = default;
};

/**
 * Finite approximation of a count distribution: categories 0..n-1 carry the
 * base pmf of values support_min+0 .. support_min+n-1 and category n absorbs
 * the remaining tail mass, so the pmf sums to one exactly.
 */
class TruncatedCountDist {
 public:
  TruncatedCountDist(CountBase base, std::vector<double> pmf);

  const CountBase& base() const { return base_; }
  int limit() const { return static_cast<int>(pmf_.size()) - 1; }
  int num_categories() const { return static_cast<int>(pmf_.size()); }
  std::span<const double> pmf() const { return pmf_; }
  double tail_mass() const { return pmf_.back(); }
  int value_of(int category) const { return base_.support_min() + category; }

 private:
  CountBase base_;
  std::vector<double> pmf_;
};

/// Smallest limit n with P(X >= support_min + n) < tail_tol.
TruncatedCountDist truncate(const CountBase& base, const TruncationConfig& config = {});
/// The pmf `truncate` would produce, written into `out` without building a distribution.
void truncated_pmf(const CountBase& base, const TruncationConfig& config, std::vector<double>& out);

/// P(duration = k) = integral of rate*exp(-rate*x) over ((k-1)*timestep, k*timestep].
TruncatedCountDist discretize_exponential(double rate, double timestep,
                                          const TruncationConfig& config = {});

// ---------------------------------------------------------------------------
// Relaxed (Gumbel-Softmax) sampling.

/**
 * y_i = softmax((log P_i + g_i) / tau). Categories with P_i == 0 are left out
 * of the softmax and get y_i = 0 exactly. The noise is treated as constant,
 * so y is differentiable in the probabilities.
 */
std::vector<ad::Var> gumbel_softmax_sample(std::span<const ad::Var> probs, double tau,
                                           std::span<const double> gumbel);

template <std::uniform_random_bit_generator URBG>
std::vector<ad::Var> gumbel_softmax_sample(std::span<const ad::Var> probs, double tau, URBG& rng) {
  std::extreme_value_distribution<double> gumbel_dist(0.0, 1.0);
  std::vector<double> g(probs.size());
  for (double& gi : g) gi = gumbel_dist(rng);
  return gumbel_softmax_sample(probs, tau, g);
}

/// Plain-value version of gumbel_softmax_sample for constant probabilities.
void gumbel_softmax_values(std::span<const double> probs, std::span<const double> gumbel,
                           double tau, std::span<double> out);

/**
 * Relaxed sample with keyed noise: category k uses the draw indexed by
 * `ids[k]` under `key`. Keying by a stable id (a station, a count value)
 * keeps each category's noise fixed even when the category list changes.
 * Zero-probability categories are masked.
 */
void gumbel_softmax_keyed(std::span<const double> probs, std::span<const std::uint32_t> ids,
                          std::uint64_t key, double tau, std::span<double> out);

struct SoftCount {
  ad::Var count;                // sum_k value(k) * y_k
  std::vector<ad::Var> onehot;  // relaxed one-hot over the categories
};

/// Relaxed count draw over an explicit pmf (generalised Gumbel-Softmax).
SoftCount gengs_count_sample(std::span<const ad::Var> pmf, int support_min, double tau,
                             std::span<const double> gumbel);
SoftCount gengs_count_sample(const TruncatedCountDist& dist, double tau,
                             std::span<const double> gumbel);

template <std::uniform_random_bit_generator URBG>
SoftCount gengs_count_sample(const TruncatedCountDist& dist, double tau, URBG& rng) {
  std::extreme_value_distribution<double> gumbel_dist(0.0, 1.0);
  std::vector<double> g(dist.pmf().size());
  for (double& gi : g) gi = gumbel_dist(rng);
  return gengs_count_sample(dist, tau, g);
}

// ---------------------------------------------------------------------------
// Hard sampling by inverse CDF. `u` must lie in (0, 1).

int hard_sample_categorical(std::span<const double> probs, double u);
/// Exact draw from the untruncated base distribution.
int hard_sample(const CountBase& base, double u);
inline int hard_sample(const TruncatedCountDist& dist, double u) { return hard_sample(dist.base(), u); }

template <std::uniform_random_bit_generator URBG>
int hard_sample(const TruncatedCountDist& dist, URBG& rng) {
  return hard_sample(dist.base(), to_unit_open(rng()));
}
template <std::uniform_random_bit_generator URBG>
int hard_sample_categorical(std::span<const double> probs, URBG& rng) {
  return hard_sample_categorical(probs, to_unit_open(rng()));
}

}  // namespace dabm
