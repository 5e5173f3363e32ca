#include "dabm/choice.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dabm/sampling.hpp"

namespace dabm {

ChoiceSet build_choice_set(std::span<const double> discounts, int intended,
                           const StationNetwork& network) {
  const int J = network.size();
  if (discounts.size() != static_cast<std::size_t>(J)) throw DimensionError("one discount per station required");
  if (intended < 0 || intended >= J) throw std::out_of_range("intended station out of range");
  ChoiceSet set;
  set.intended = intended;
  set.members.push_back(intended);
  set.delta_p.push_back(0.0);
  set.distance.push_back(0.0);
  const double base = discounts[intended];
  for (int s = 0; s < J; ++s) {
    if (s == intended || !(discounts[s] > base)) continue;
    set.members.push_back(s);
    set.delta_p.push_back(discounts[s] - base);
    set.distance.push_back(network.distance(intended, s));
  }
  return set;
}

ChoiceSet build_choice_set(const PricingPolicy& policy, int t, int intended,
                           const StationNetwork& network) {
  std::vector<double> discounts(static_cast<std::size_t>(policy.num_stations()));
  for (int s = 0; s < policy.num_stations(); ++s) discounts[s] = policy.at(t, s);
  return build_choice_set(discounts, intended, network);
}

std::vector<double> utilities(const ChoiceSet& set, const ChoiceParams& params) {
  std::vector<double> u(set.size());
  u[0] = params.asc_intended;
  for (std::size_t k = 1; k < set.size(); ++k) {
    u[k] = params.w_discount * set.delta_p[k] + params.w_distance * set.distance[k] + params.asc_switch;
  }
  return u;
}

std::vector<ad::Var> utilities(const ChoiceSet& set, std::span<const ad::Var> discounts,
                               const ChoiceParams& params) {
  std::vector<ad::Var> u;
  u.reserve(set.size());
  u.emplace_back(params.asc_intended);
  const ad::Var& base = discounts[static_cast<std::size_t>(set.intended)];
  const double coeffs[2] = {params.w_discount, -params.w_discount};
  for (std::size_t k = 1; k < set.size(); ++k) {
    const ad::Var pair[2] = {discounts[static_cast<std::size_t>(set.members[k])], base};
    u.push_back(ad::affine(pair, coeffs, params.w_distance * set.distance[k] + params.asc_switch));
  }
  return u;
}

std::vector<double> choice_probs(std::span<const double> u) {
  if (u.empty()) throw std::invalid_argument("choice_probs: empty choice set");
  const double hi = *std::max_element(u.begin(), u.end());
  std::vector<double> p(u.size());
  double z = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    p[k] = std::exp(u[k] - hi);
    z += p[k];
  }
  for (double& v : p) v /= z;
  return p;
}

std::vector<ad::Var> choice_probs(std::span<const ad::Var> u) {
  if (u.empty()) throw std::invalid_argument("choice_probs: empty choice set");
  return ad::softmax(u, 1.0);
}

std::vector<ad::Var> choose_destination(std::span<const ad::Var> probs, double tau,
                                        std::span<const double> gumbel) {
  return gumbel_softmax_sample(probs, tau, gumbel);
}

int choose_destination(std::span<const double> probs, double u) {
  return hard_sample_categorical(probs, u);
}

}  // namespace dabm
