#include "dabm/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace dabm {

namespace {

void check_rate(const CountBase& base) {
  if (!(base.rate > 0.0) || !std::isfinite(base.rate)) {
    throw InvalidDistributionError("count distribution rate must be positive and finite, got " +
                                   std::to_string(base.rate));
  }
  if (base.family == CountFamily::DiscretizedExponential && !(base.timestep > 0.0)) {
    throw InvalidDistributionError("duration timestep must be positive");
  }
}

void check_tau(double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("temperature must be positive");
}

}  // namespace

double CountBase::mean() const {
  if (family == CountFamily::Poisson) return rate;
  const double q = std::exp(-rate * timestep);
  return 1.0 / (1.0 - q);
}

double CountBase::variance() const {
  if (family == CountFamily::Poisson) return rate;
  const double q = std::exp(-rate * timestep);
  return q / ((1.0 - q) * (1.0 - q));
}

TruncatedCountDist::TruncatedCountDist(CountBase base, std::vector<double> pmf)
    : base_(base), pmf_(std::move(pmf)) {
  if (pmf_.empty()) throw InvalidDistributionError("truncated distribution needs a category");
}

void truncated_pmf(const CountBase& base, const TruncationConfig& config, std::vector<double>& out) {
  check_rate(base);
  if (!(config.tail_tol > 0.0 && config.tail_tol < 1.0)) {
    throw ConfigError("tail_tol must lie in (0, 1)");
  }
  out.clear();
  const bool poisson = base.family == CountFamily::Poisson;
  const double step = base.rate * base.timestep;
  const double first_bin = -std::expm1(-step);
  double head = 0.0;
  double p = poisson ? std::exp(-base.rate) : first_bin;
  for (int n = 0;; ++n) {
    // Tail beyond the first n values: P(X >= support_min + n).
    const double tail = poisson ? std::max(0.0, 1.0 - head) : std::exp(-step * n);
    if (tail < config.tail_tol) {
      out.push_back(std::max(0.0, 1.0 - head));
      return;
    }
    if (n >= config.max_limit) {
      throw ConfigError("truncation limit exceeds the cap of " + std::to_string(config.max_limit) +
                        " categories for rate " + std::to_string(base.rate));
    }
    out.push_back(p);
    head += p;
    p = poisson ? p * base.rate / (n + 1) : std::exp(-step * (n + 1)) * first_bin;
  }
}

TruncatedCountDist truncate(const CountBase& base, const TruncationConfig& config) {
  std::vector<double> pmf;
  truncated_pmf(base, config, pmf);
  return TruncatedCountDist(base, std::move(pmf));
}

TruncatedCountDist discretize_exponential(double rate, double timestep,
                                          const TruncationConfig& config) {
  return truncate(CountBase::exponential(rate, timestep), config);
}

std::vector<ad::Var> gumbel_softmax_sample(std::span<const ad::Var> probs, double tau,
                                           std::span<const double> gumbel) {
  check_tau(tau);
  if (probs.size() != gumbel.size()) {
    throw std::invalid_argument("gumbel_softmax_sample: one noise draw per category required");
  }
  std::vector<std::size_t> live;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    const double p = probs[k].value();
    if (p < 0.0 || !std::isfinite(p)) {
      throw InvalidDistributionError("category probabilities must be finite and nonnegative");
    }
    if (p > 0.0) live.push_back(k);
  }
  if (live.empty()) throw InvalidDistributionError("all category probabilities are zero");

  std::vector<ad::Var> logits;
  logits.reserve(live.size());
  for (std::size_t k : live) logits.push_back(ad::log(probs[k]) + ad::Var(gumbel[k]));
  std::vector<ad::Var> soft = ad::softmax(logits, tau);

  std::vector<ad::Var> out(probs.size(), ad::Var(0.0));
  for (std::size_t m = 0; m < live.size(); ++m) out[live[m]] = soft[m];
  return out;
}

void gumbel_softmax_values(std::span<const double> probs, std::span<const double> gumbel,
                           double tau, std::span<double> out) {
  check_tau(tau);
  if (probs.size() != gumbel.size() || probs.size() != out.size()) {
    throw std::invalid_argument("gumbel_softmax_values: size mismatch");
  }
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (probs[k] < 0.0) throw InvalidDistributionError("negative category probability");
    out[k] = probs[k] > 0.0 ? (std::log(probs[k]) + gumbel[k]) / tau
                            : -std::numeric_limits<double>::infinity();
    hi = std::max(hi, out[k]);
  }
  if (hi == -std::numeric_limits<double>::infinity()) {
    throw InvalidDistributionError("all category probabilities are zero");
  }
  double z = 0.0;
  for (double& v : out) {
    v = std::exp(v - hi);
    z += v;
  }
  for (double& v : out) v /= z;
}

void gumbel_softmax_keyed(std::span<const double> probs, std::span<const std::uint32_t> ids,
                          std::uint64_t key, double tau, std::span<double> out) {
  const std::size_t m = probs.size();
  if (ids.size() != m || out.size() != m) throw std::invalid_argument("gumbel_softmax_keyed: size mismatch");
  double z = 0.0;
  if (tau == 1.0) {
    // exp(log p + g) == p / E for the exponential E behind the same draw.
    for (std::size_t k = 0; k < m; ++k) {
      out[k] = probs[k] > 0.0 ? probs[k] / NoiseStream::exponential_at(key, ids[k]) : 0.0;
      z += out[k];
    }
  } else {
    check_tau(tau);
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < m; ++k) {
      out[k] = probs[k] > 0.0 ? (std::log(probs[k]) + NoiseStream::gumbel_at(key, ids[k])) / tau
                              : -std::numeric_limits<double>::infinity();
      hi = std::max(hi, out[k]);
    }
    if (hi == -std::numeric_limits<double>::infinity()) {
      throw InvalidDistributionError("all category probabilities are zero");
    }
    for (double& v : out) {
      v = std::exp(v - hi);
      z += v;
    }
  }
  if (!(z > 0.0)) throw InvalidDistributionError("all category probabilities are zero");
  for (double& v : out) v /= z;
}

SoftCount gengs_count_sample(std::span<const ad::Var> pmf, int support_min, double tau,
                             std::span<const double> gumbel) {
  SoftCount result;
  result.onehot = gumbel_softmax_sample(pmf, tau, gumbel);
  std::vector<double> values(pmf.size());
  std::iota(values.begin(), values.end(), static_cast<double>(support_min));
  result.count = ad::affine(result.onehot, values);
  return result;
}

SoftCount gengs_count_sample(const TruncatedCountDist& dist, double tau,
                             std::span<const double> gumbel) {
  std::vector<ad::Var> pmf(dist.pmf().begin(), dist.pmf().end());
  return gengs_count_sample(pmf, dist.base().support_min(), tau, gumbel);
}

int hard_sample_categorical(std::span<const double> probs, double u) {
  double total = 0.0;
  for (double p : probs) {
    if (p < 0.0) throw InvalidDistributionError("negative category probability");
    total += p;
  }
  if (!(total > 0.0)) throw InvalidDistributionError("all category probabilities are zero");
  const double target = u * total;
  double cdf = 0.0;
  int last_positive = 0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (probs[k] <= 0.0) continue;
    cdf += probs[k];
    last_positive = static_cast<int>(k);
    if (target < cdf) return last_positive;
  }
  return last_positive;
}

int hard_sample(const CountBase& base, double u) {
  check_rate(base);
  if (base.family == CountFamily::DiscretizedExponential) {
    const double x = -std::log(u) / base.rate;
    const double bins = std::ceil(x / base.timestep);
    if (bins >= static_cast<double>(std::numeric_limits<int>::max())) {
      return std::numeric_limits<int>::max();
    }
    return std::max(1, static_cast<int>(bins));
  }
  // Poisson inverse CDF by sequential search.
  double p = std::exp(-base.rate);
  double cdf = p;
  int k = 0;
  const int guard = static_cast<int>(base.rate + 40.0 * std::sqrt(base.rate) + 100.0);
  while (u > cdf && k < guard) {
    ++k;
    p *= base.rate / k;
    cdf += p;
  }
  return k;
}

}  // namespace dabm
