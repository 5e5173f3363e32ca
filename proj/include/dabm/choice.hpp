#pragma once

#include <span>
#include <vector>

#include "dabm/autodiff.hpp"
#include "dabm/network.hpp"

namespace dabm {

/// Linear utility weights of the destination-choice model.
struct ChoiceParams {
  double w_discount = 1.0;
  double w_distance = -1.0;
  double asc_intended = 0.0;
  double asc_switch = -1.0;

  bool operator==(const ChoiceParams&) const = default;
};

/**
 * Stations an agent heading to `intended` will consider: the intended one
 * (always first) plus every station whose discount is strictly higher.
 * delta_p and distance are measured from the intended station and are
 * exactly zero for the intended member.
 */
struct ChoiceSet {
  int intended = 0;
  std::vector<int> members;
  std::vector<double> delta_p;
  std::vector<double> distance;

  std::size_t size() const { return members.size(); }
};

/// `discounts` holds the discount of every station at the current timestep.
ChoiceSet build_choice_set(std::span<const double> discounts, int intended,
                           const StationNetwork& network);
ChoiceSet build_choice_set(const PricingPolicy& policy, int t, int intended,
                           const StationNetwork& network);

std::vector<double> utilities(const ChoiceSet& set, const ChoiceParams& params);
/// Differentiable utilities; `discounts` holds one Var per station at the current timestep.
std::vector<ad::Var> utilities(const ChoiceSet& set, std::span<const ad::Var> discounts,
                               const ChoiceParams& params);

/// Multinomial-logit probabilities (softmax of the utilities).
std::vector<double> choice_probs(std::span<const double> utilities);
std::vector<ad::Var> choice_probs(std::span<const ad::Var> utilities);

/// Relaxed destination draw: a soft one-hot over the members.
std::vector<ad::Var> choose_destination(std::span<const ad::Var> probs, double tau,
                                        std::span<const double> gumbel);
/// Hard destination draw by inverse CDF; returns the member position.
int choose_destination(std::span<const double> probs, double u);

}  // namespace dabm
