#pragma once

#include <vector>

#include "bnmarket/event_space.hpp"

namespace bnm {

// A normalized probability table over all 2^M world states.
class JointDistribution {
  public:
    // Entries must be non-negative and sum to 1 within 1e-12.
    JointDistribution(EventSpace space, std::vector<double> probs);

    // Rescales arbitrary non-negative weights to a distribution.
    static JointDistribution from_weights(EventSpace space, std::vector<double> weights);

    static JointDistribution uniform(EventSpace space);

    const EventSpace& space() const { return space_; }
    double at(WorldState state) const { return probs_[state]; }
    const std::vector<double>& table() const { return probs_; }

  private:
    EventSpace space_;
    std::vector<double> probs_;
};

// Probability of a conjunction event: sum over the member states.
double prob(const JointDistribution& dist, const EventExpr& e);

// prob(target AND given) / prob(given); throws ZeroConditioningEvent if the
// conditioning event has no mass.
double conditional(const JointDistribution& dist, const EventExpr& target, const EventExpr& given);

// Conditional independence of event j from the events in x_mask given those
// in w_mask: Pr(A_j | w x) = Pr(A_j | w) within tol for every assignment
// (w, x) with positive mass.  Zero-mass conditioning assignments are skipped.
inline constexpr double kDefaultCiTol = 1e-9;
bool check_ci(const JointDistribution& dist, int j, std::uint32_t w_mask, std::uint32_t x_mask,
              double tol = kDefaultCiTol);

}  // namespace bnm
