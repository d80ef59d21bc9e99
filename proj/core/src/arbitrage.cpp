#include "bnmarket/arbitrage.hpp"

#include <cmath>
#include <stdexcept>

#include "bnmarket/errors.hpp"
#include "exact.hpp"

namespace bnm {

namespace {

std::vector<exact::Rational> indicator(const EventExpr& e, std::uint32_t n) {
    std::vector<exact::Rational> row(n);
    for (WorldState s = 0; s < n; ++s) row[s] = e.satisfied_by(s) ? 1 : 0;
    return row;
}

}  // namespace

double implied_price(const PriceVector& prices, const Market& market, const Security& target) {
    if (!market.structure()) {
        throw MissingStructure("implied prices require a structured market");
    }
    if (static_cast<int>(prices.size()) != market.size()) {
        throw std::invalid_argument("price count must match security count");
    }
    if (const int idx = market.find(target); idx >= 0) return prices[idx];
    const JointDistribution pr0 = state_prices(prices, market);
    return conditional(pr0, target.pay, target.cond);
}

ArbitrageReport detect(const PriceVector& prices, const Market& market, const Quote& quote,
                       double tol) {
    if (!std::isfinite(quote.price) || quote.price < 0.0 || quote.price > 1.0) {
        throw ValidationError("quote price must lie in [0,1]");
    }
    ArbitrageReport report;
    report.quoted = quote.price;
    report.implied = implied_price(prices, market, quote.security);
    if (std::abs(quote.price - report.implied) <= tol) {
        report.kind = ArbitrageKind::None;
        return report;
    }

    const std::uint32_t n = market.space().num_states();
    const auto pay_target = indicator(quote.security.payout_event(), n);
    const auto cond_target = indicator(quote.security.cond, n);

    std::vector<std::vector<exact::Rational>> ind_cols;
    ind_cols.push_back(indicator(EventExpr::sure(), n));
    for (int k = 0; k < market.size(); ++k) {
        ind_cols.push_back(indicator(market.at(k).payout_event(), n));
        ind_cols.push_back(indicator(market.at(k).cond, n));
    }
    const bool spanned = exact::coordinates_in_span(ind_cols, pay_target).has_value() &&
                         exact::coordinates_in_span(ind_cols, cond_target).has_value();

    if (spanned) {
        // Replication works in net-payoff space: represent both target
        // indicators over {cash, market net payoffs} at the exact current
        // prices.  With payout = a0 + sum a_k n_k and condition = b0 + sum
        // b_k n_k, holding 1/b0 units of the quote against -(a_k - q b_k)/b0
        // of each market security settles to (a0/b0 - q) in every state.
        std::vector<std::vector<exact::Rational>> net_cols;
        net_cols.push_back(indicator(EventExpr::sure(), n));
        for (int k = 0; k < market.size(); ++k) {
            const Security& sec = market.at(k);
            const exact::Rational pk(prices[k]);
            auto col = indicator(sec.payout_event(), n);
            const auto cond = indicator(sec.cond, n);
            for (std::uint32_t s = 0; s < n; ++s) col[s] -= pk * cond[s];
            net_cols.push_back(std::move(col));
        }
        const auto a = exact::coordinates_in_span(net_cols, pay_target);
        const auto b = exact::coordinates_in_span(net_cols, cond_target);
        if (a && b && (*b)[0] != 0) {
            const exact::Rational q(quote.price);
            const exact::Rational b0 = (*b)[0];
            const exact::Rational implied_exact = (*a)[0] / b0;
            const int side = quote.price < static_cast<double>(implied_exact) ? 1 : -1;
            report.kind = ArbitrageKind::Replicable;
            report.direction = side > 0 ? TradeSide::Buy : TradeSide::Sell;
            report.quote_units = static_cast<double>(side / b0);
            report.hedge.resize(market.size());
            for (int k = 0; k < market.size(); ++k) {
                const exact::Rational coef = -side * ((*a)[k + 1] - q * (*b)[k + 1]) / b0;
                report.hedge[k] = static_cast<double>(coef);
            }
            report.guaranteed_profit = static_cast<double>(side * (implied_exact - q));
            return report;
        }
        // Indicators lie in the span but no static hedge exists at these
        // prices; fall through to the resale report.
    }
    report.kind = ArbitrageKind::RNProfit;
    report.direction = quote.price < report.implied ? TradeSide::Buy : TradeSide::Sell;
    report.p_star = 0.5 * (quote.price + report.implied);
    return report;
}

}  // namespace bnm
