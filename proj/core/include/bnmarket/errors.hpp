#pragma once

#include <stdexcept>
#include <string>

namespace bnm {

// Conditioning event has zero probability mass.
struct ZeroConditioningEvent : std::runtime_error {
    explicit ZeroConditioningEvent(const std::string& what) : std::runtime_error(what) {}
};

// Log-utility wealth at or below -W0 in a state the agent assigns positive probability.
struct InfeasibleWealth : std::runtime_error {
    explicit InfeasibleWealth(const std::string& what) : std::runtime_error(what) {}
};

// Demand has no finite maximizer (risk-neutral agent, or a price at 0/1).
struct UnboundedDemand : std::runtime_error {
    explicit UnboundedDemand(const std::string& what) : std::runtime_error(what) {}
};

// No feasible point exists for the optimization at hand.
struct InfeasibleProblem : std::runtime_error {
    explicit InfeasibleProblem(const std::string& what) : std::runtime_error(what) {}
};

// Iteration cap hit without meeting the convergence tolerance.
struct NoConvergence : std::runtime_error {
    explicit NoConvergence(const std::string& what) : std::runtime_error(what) {}
};

// Operation requires a DAG-structured market but the market carries none.
struct MissingStructure : std::runtime_error {
    explicit MissingStructure(const std::string& what) : std::runtime_error(what) {}
};

// Scenario file could not be parsed at all.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Scenario file parsed but violates an invariant; message carries a location anchor.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace bnm
