#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bnmarket/agents.hpp"
#include "bnmarket/arbitrage.hpp"
#include "bnmarket/bayesnet.hpp"
#include "bnmarket/equilibrium.hpp"
#include "bnmarket/protocol.hpp"
#include "bnmarket/securities.hpp"

namespace bnm {

struct ExperimentSpec {
    // run | compare | arbitrage | protocol | search
    std::string kind = "run";
    // protocol
    double demand_eps = 1e-6;
    int max_rounds = 25;
    // search
    std::string search_utility = "log";  // log | exponential
    int trials = 1000;
    std::uint64_t seed = 1;
    double gap_threshold = 1e-3;
    int search_agents = 2;
};

struct Scenario {
    EventSpace space;
    Market market;
    std::vector<Agent> agents;
    // Optional fixed quotes (market key "prices"); when present, arbitrage
    // detection prices against these instead of solving for equilibrium.
    PriceVector quoted_prices;
    SolverOptions solver{};
    ExperimentSpec experiment{};
    std::string name;
};

// Reads and validates a scenario document (JSON, top-level keys events /
// market / agents / solver / experiment).  Errors carry the offending
// JSON-pointer-style location.
Scenario load_scenario(const std::string& path);
Scenario parse_scenario(const std::string& text, const std::string& origin);
// Canonical document round-trippable through parse_scenario.
std::string serialize_scenario(const Scenario& scenario);

// "<security>=<price>", e.g. "A2|A1=0.4".
Quote parse_quote(const std::string& text, const EventSpace& space);

struct CheckResult {
    std::string name;
    bool pass = false;
    // Hard checks always gate the exit code; soft findings only under strict.
    bool hard = true;
    double value = 0.0;
    double tol = 0.0;
    std::string note;
};

struct Tolerances {
    double clear = 1e-8;
    double foc = 1e-10;
    double consensus = 1e-6;
    double identity = 1e-8;
    double wealth = 1e-6;
    double arb = 1e-9;
};
// Defaults with BNMARKET_TOL_<NAME> environment overrides applied.
Tolerances tolerances_from_env();
// Named lookup used by --tol name=value; throws ValidationError on an
// unknown name.
void set_tolerance(Tolerances& tol, const std::string& name, double value);

struct RunOptions {
    bool strict = false;
    Tolerances tol{};
};

struct RunReport {
    std::string kind;
    std::vector<CheckResult> checks;
    bool solver_converged = true;
    bool strict = false;
    std::string json;  // machine-readable document (format_version inside)
    std::string text;  // human-readable summary

    bool pass() const;
    // 0 pass, 1 check failure, 3 solver nonconvergence.
    int exit_code() const;
};

// Solve the scenario's market and report prices, gaps, and checks.
RunReport run_scenario(const Scenario& scenario, const RunOptions& options = {});
// Compact market against the fully connected benchmark.
RunReport compare_scenario(const Scenario& scenario, const RunOptions& options = {});
// Price a quote off the scenario equilibrium and look for arbitrage.
RunReport arbitrage_scenario(const Scenario& scenario, const Quote& quote,
                             const RunOptions& options = {});
// Market-formation rounds starting from the base securities.
RunReport protocol_scenario(const Scenario& scenario, const RunOptions& options = {});
// Randomized hunt for populations whose equilibrium breaks RN consensus on
// the scenario's structure.
RunReport search_scenario(const Scenario& scenario, const RunOptions& options = {});
// Dispatches on scenario.experiment.kind (arbitrage requires the quote
// subcommand and is rejected here).
RunReport run_experiment(const Scenario& scenario, const RunOptions& options = {});

struct SearchOutcome {
    double best_gap = 0.0;
    int best_trial = -1;
    int trials_run = 0;
    bool found = false;
    std::vector<Agent> best_agents;
    // Replayable scenario document for the best trial; empty when no trial
    // was solvable.
    std::string best_scenario_json;
};

// Draws random populations on the structure (beliefs are CPTs on it;
// endowments are separable clique terms for Exponential, per-state tables
// for Log), solves each, and tracks the largest consensus gap.  Stops early
// once threshold is exceeded.  Deterministic in (seed, trial index): trials
// are evaluated in parallel blocks but reduced in index order, so the
// outcome matches a serial run exactly, core count notwithstanding.
SearchOutcome counterexample_search(UtilityKind utility, const EventSpace& space,
                                    const Dag& structure, int trials, std::uint64_t seed,
                                    double threshold = 1e-3, const SolverOptions& solver = {},
                                    int num_agents = 2);

}  // namespace bnm
