#pragma once

#include "bnmarket/equilibrium.hpp"
#include "bnmarket/securities.hpp"

namespace bnm {

// An outside offer to trade one security at a stated price.
struct Quote {
    Security security;
    double price = 0.0;
};

enum class ArbitrageKind { None, Replicable, RNProfit };
enum class TradeSide { Buy, Sell };

struct ArbitrageReport {
    double implied = 0.0;
    double quoted = 0.0;
    ArbitrageKind kind = ArbitrageKind::None;
    // Replicable only: positions in the market's securities plus the quoted
    // one.  Settling the whole package yields guaranteed_profit in every
    // state regardless of the outcome.
    Holdings hedge;
    double quote_units = 0.0;
    double guaranteed_profit = 0.0;
    // RNProfit only: the side of the quote worth taking and an intermediate
    // price at which it can be passed on.
    TradeSide direction = TradeSide::Buy;
    double p_star = 0.0;
};

// The price the market's structure implies for an arbitrary target security:
// chain-rule state prices synthesized from the current quotes, then the
// conditional probability of the target's payout given its condition.  A
// target already in the market returns its own quoted price exactly.
double implied_price(const PriceVector& prices, const Market& market, const Security& target);

// Compares a quote against the implied price.  Within tol the quote is fair.
// Otherwise, when the quote's payout and condition indicators both lie in
// the market's indicator span and a static replication exists at the current
// prices, returns a state-by-state riskless hedge; when no replication
// exists, reports the profitable side together with a midpoint resale price.
ArbitrageReport detect(const PriceVector& prices, const Market& market, const Quote& quote,
                       double tol = 1e-9);

}  // namespace bnm
