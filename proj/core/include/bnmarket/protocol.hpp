#pragma once

#include <vector>

#include "bnmarket/agents.hpp"
#include "bnmarket/bayesnet.hpp"
#include "bnmarket/equilibrium.hpp"
#include "bnmarket/securities.hpp"

namespace bnm {

struct ProtocolOptions {
    // Probe and allocation threshold below which demand counts as zero.
    double demand_eps = 1e-6;
    // Probe/retract rounds before giving up (the final quiet round counts).
    int max_rounds = 25;
    SolverOptions solver{};
};

// One solved round: the market as listed at the start of the round, its
// equilibrium prices (implied prices for securities the solve treats as
// redundant), and the changes decided against that equilibrium.
struct RoundRecord {
    std::vector<Security> market;
    PriceVector prices;
    std::vector<Security> created;
    std::vector<Security> retracted;
    double consensus = 0.0;
    double residual = 0.0;
    bool solver_converged = false;
};

struct ProtocolState {
    ProtocolState(Market m, Dag d) : market(std::move(m)), structure(std::move(d)) {}

    // Terminal listing: the base securities plus surviving creations.
    Market market;
    // The conditioning structure the listing amounts to: per node, the
    // largest parent set whose full assignment family is present.
    Dag structure;
    PriceVector prices;
    std::vector<Holdings> allocations;
    double consensus = 0.0;
    double residual = 0.0;
    bool solver_converged = false;
    int rounds = 0;
    // False when max_rounds stopped the run before a quiet round.
    bool completed = false;
    std::vector<RoundRecord> history;
};

// Iterates the market-formation loop: solve the current market, open a
// market for any candidate conditional security some agent would trade at
// its probe price, retract created securities nobody holds, and stop at the
// first round with no changes.  Candidates for event k refine the current
// family one conditioning event at a time; a single-literal candidate is
// probed at the price of its base security, deeper ones at their implied
// chain-rule price.  A security retracted twice is frozen out, which forces
// termination even where the probe rule oscillates.
ProtocolState run_protocol(const std::vector<Agent>& agents, const EventSpace& space,
                           const ProtocolOptions& options = {});

// The candidate-security component of the agent's demand when the market is
// extended by the candidate at probe_price, everything else unchanged.
double probe_demand(const Agent& agent, const Market& market, const PriceVector& prices,
                    const Security& candidate, double probe_price,
                    const DemandOptions& options = {});

}  // namespace bnm
