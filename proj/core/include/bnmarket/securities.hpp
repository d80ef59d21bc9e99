#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bnmarket/bayesnet.hpp"

namespace bnm {

using PriceVector = std::vector<double>;
using Holdings = std::vector<double>;

// A ticket on pay, called off unless cond obtains.  Pays 1 when pay and
// cond both hold, refunds the price when cond fails, else expires at 0.
// Unconditional securities carry cond == EventExpr::sure().
struct Security {
    EventExpr pay;
    EventExpr cond;

    EventExpr payout_event() const { return pay.conjoin(cond); }
    bool operator==(const Security&) const = default;
};

// Canonical text form: literals ascending by event index, '!' for negation,
// '&' between literals, '|' before the condition, no whitespace.  Examples:
// "A1", "A2|A1", "A3|!A2", "A1&A2".
std::string to_string(const Security& sec, const EventSpace& space);
Security parse_security(const std::string& text, const EventSpace& space);

// Realized value of a position of `units` bought at `price` once `state` is
// revealed.  Zero whenever the condition fails (purchase refunded); sales
// (negative units) mirror purchases with flipped sign.
double settle(const Security& sec, double price, double units, WorldState state);

class Market {
  public:
    // An ad-hoc market; securities must be distinct.
    Market(EventSpace space, std::vector<Security> securities);
    // The market structured on a DAG, in canonical order.  Carries the DAG.
    explicit Market(const Dag& dag);

    const EventSpace& space() const { return space_; }
    // The generating DAG for structured markets, empty otherwise.
    const std::optional<Dag>& structure() const { return structure_; }
    int size() const { return static_cast<int>(securities_.size()); }
    const Security& at(int k) const { return securities_[k]; }
    const std::vector<Security>& securities() const { return securities_; }
    // Index of an identical security, -1 if absent.
    int find(const Security& sec) const;
    // The same securities plus one more; the result is unstructured.
    Market with_appended(const Security& sec) const;

  private:
    EventSpace space_;
    std::vector<Security> securities_;
    std::optional<Dag> structure_;
};

// One security per conditional probability the structure parameterizes:
// node-major, parent assignments in ascending packed order.  Root nodes get
// unconditional securities.
Market structured_market(const Dag& dag);
// One unconditional security per event.
Market base_market(const EventSpace& space);
// Market on the fully connected structure: 2^M - 1 securities, complete.
Market complete_market(const EventSpace& space);

// Net payoff per unit at the given prices, column k for security k:
// n_k(s) = [pay_k and cond_k hold at s] - price_k * [cond_k holds at s].
Eigen::MatrixXd net_payoff_matrix(const Market& market, const PriceVector& prices);

double portfolio_settle(const Market& market, const Holdings& units, const PriceVector& prices,
                        WorldState state);

struct CompletenessReport {
    // Independent wealth directions beyond cash that the market's payout and
    // condition indicators span.
    int rank = 0;
    // True iff those indicators plus cash span all 2^M state contingencies.
    bool complete = false;
};

// Exact (rational arithmetic) rank computation; no tolerance involved.
CompletenessReport completeness_rank(const Market& market);

}  // namespace bnm
