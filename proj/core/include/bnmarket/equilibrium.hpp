#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "bnmarket/agents.hpp"

namespace bnm {

struct SolverOptions {
    // Convergence threshold on per-security aggregate excess demand.
    double clear_tol = 1e-8;
    // Passed through to each agent's demand solve.
    double foc_tol = 1e-10;
    int max_iterations = 300;
    int max_demand_iterations = 10000;
    // Consensus threshold for operational completeness.
    double oc_tol = 1e-6;
};

struct EquilibriumResult {
    PriceVector prices;
    std::vector<Holdings> allocations;
    // Largest absolute aggregate demand over securities at the returned
    // prices.
    double residual = std::numeric_limits<double>::infinity();
    int iterations = 0;
    // Per-agent risk-neutral tables at the equilibrium wealth profiles.
    std::vector<JointDistribution> rn_tables;
    // False when the iteration budget ran out; the best iterate is still
    // reported so callers can inspect how close it came.
    bool converged = false;
    std::string message;
};

// Finds prices at which every agent's utility-maximizing holdings sum to
// zero per security (the market clears).  Newton iteration on aggregate
// excess demand with an analytic Jacobian, falling back to damped
// tatonnement steps when a Newton step fails to reduce the residual.
//
// Securities that are exactly replicable from the others plus cash are
// removed before iterating (their presence makes demand degenerate or, when
// mispriced, unbounded); they re-enter the result priced by replication with
// zero allocation, which is exactly the no-trade equilibrium they admit.
//
// Throws UnboundedDemand if the market admits a costless profitable
// portfolio at every price tried, InfeasibleProblem when a Log agent's
// endowment is infeasible.  Nonconvergence is reported via the result, not
// thrown.
EquilibriumResult solve_equilibrium(const Market& market, const std::vector<Agent>& agents,
                                    const SolverOptions& options = {});

struct ConsensusReport {
    // Largest gap between two agents' risk-neutral state probabilities.
    double max_gap = 0.0;
    int agent_a = -1;
    int agent_b = -1;
    WorldState state = 0;
};

// Full risk-neutral consensus measure over the state space.  Zero for a
// single agent.
ConsensusReport consensus_gap(const EquilibriumResult& result);

// Largest violation over agents and securities of the first-order identity
// rn(pay and cond) = price * rn(cond).
double rn_identity_gap(const EquilibriumResult& result, const Market& market);

// The implied state distribution: a BayesNet on the market's structure
// whose CPT rows are the prices of the matching conditional securities.
// Requires a structured market (throws MissingStructure otherwise).
JointDistribution state_prices(const PriceVector& prices, const Market& market);
inline JointDistribution state_prices(const EquilibriumResult& result, const Market& market) {
    return state_prices(result.prices, market);
}

// Price any security off the state-price distribution.
double price_redundant(const EquilibriumResult& result, const Market& market, const EventExpr& e,
                       const EventExpr& given);

struct OcReport {
    bool is_oc = false;
    // Consensus gap of the market's own equilibrium.
    double consensus = 0.0;
    // Cross-check: largest per-agent, per-state wealth difference against
    // the fully connected benchmark market's equilibrium.
    double wealth_gap = 0.0;
    EquilibriumResult result;
    EquilibriumResult benchmark;
};

// A market is operationally complete for this population when its own
// equilibrium already produces full risk-neutral consensus; the fully
// connected benchmark solve is reported alongside for comparison.
OcReport verify_operational_completeness(const Market& market, const std::vector<Agent>& agents,
                                         const SolverOptions& options = {});

struct TradeProposal {
    int agent_a = -1;
    int agent_b = -1;
    // State-wealth transfer added to agent_a and subtracted from agent_b.
    std::vector<double> delta;
    double gain_a = 0.0;
    double gain_b = 0.0;
};

// Randomized direct Pareto test: samples zero-sum state-wealth transfers of
// the given magnitude between random agent pairs and returns one that
// strictly raises both expected utilities, if any is found.  A miss
// corroborates (never proves) Pareto optimality of the profiles.
std::optional<TradeProposal> pareto_improvement_search(
    const std::vector<Agent>& agents, const std::vector<std::vector<double>>& wealth_profiles,
    int trials, double step, std::uint64_t seed);

}  // namespace bnm
