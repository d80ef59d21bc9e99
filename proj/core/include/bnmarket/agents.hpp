#pragma once

#include <string>
#include <vector>

#include "bnmarket/bayesnet.hpp"
#include "bnmarket/securities.hpp"

namespace bnm {

enum class UtilityKind { Linear, Exponential, Log };

// Utility of net trading profit mu on top of the agent's state-contingent
// endowment.  Exponential: u = -exp(-c mu), constant absolute risk aversion
// c.  Log: u = ln(w0 + mu), defined for mu > -w0.
class Utility {
  public:
    static Utility linear() { return Utility(UtilityKind::Linear, 0.0); }
    static Utility exponential(double c);
    static Utility log(double w0);

    UtilityKind kind() const { return kind_; }
    double risk_aversion() const { return param_; }  // Exponential only
    double wealth_base() const { return param_; }    // Log only

    double value(double wealth) const;
    double deriv(double wealth) const;
    double second(double wealth) const;
    // True when wealth is inside the utility's domain.
    bool feasible(double wealth) const;

  private:
    Utility(UtilityKind kind, double param) : kind_(kind), param_(param) {}
    UtilityKind kind_;
    double param_;
};

struct Agent {
    std::string id;
    Utility utility = Utility::exponential(1.0);
    JointDistribution belief;
    // State-contingent prior stake, one entry per world state.
    std::vector<double> endowment;
};

// Endowment plus the settled value of the holdings at each world state.
std::vector<double> wealth_profile(const Agent& agent, const Market& market,
                                   const Holdings& units, const PriceVector& prices);

// Sum over positive-probability states of belief * u(wealth).  Throws
// InfeasibleWealth when a positive-probability state lies outside the
// utility's domain.
double expected_utility(const Agent& agent, const std::vector<double>& wealth);

// The distribution proportional to belief * u'(wealth): what the agent's
// buying behavior reveals in place of its true belief.
JointDistribution rn_distribution(const Agent& agent, const std::vector<double>& wealth);

struct DemandOptions {
    // Convergence when ||gradient||_inf / (sum of belief * u') <= foc_tol.
    double foc_tol = 1e-10;
    int max_iterations = 10000;
};

struct DemandResult {
    Holdings x;
    int iterations = 0;
    double foc_gap = 0.0;
};

// Utility-maximizing holdings at fixed prices, by damped Newton iteration on
// the first-order conditions.  Throws UnboundedDemand when no finite
// maximizer exists (linear utility, prices at or beyond 0/1 on supported
// securities, or a costless profitable portfolio).  Securities whose
// condition has zero belief probability cannot affect the agent and are held
// at zero.
DemandResult solve_demand(const Agent& agent, const Market& market, const PriceVector& prices,
                          const DemandOptions& options = {});
Holdings demand(const Agent& agent, const Market& market, const PriceVector& prices,
                const DemandOptions& options = {});

// For every assignment of the events in w_mask, the ratio
//
//   u'(wealth at {A_j false, w, x}) / u'(wealth at {A_j true, w, x})
//
// must not depend on the assignment x of the events in x_mask: any two x
// assignments give ratios within tol of each other.  Together with belief CI
// of A_j and x_mask given w_mask, this makes the independence carry over to
// the agent's risk-neutral distribution.  j, w_mask, and x_mask must
// partition the events; wealth has one entry per world state.
bool mu_ratio_invariant(const Agent& agent, const std::vector<double>& wealth, int j,
                        std::uint32_t w_mask, std::uint32_t x_mask, double tol = 1e-9);

// True when the agent's risk-neutral distribution at these holdings and
// prices is an I-map of dag.
bool rn_imap_check(const Agent& agent, const Market& market, const Holdings& units,
                   const PriceVector& prices, const Dag& dag, double tol = kDefaultCiTol);

}  // namespace bnm
