#include "bnmarket/securities.hpp"

#include <stdexcept>

#include "bnmarket/errors.hpp"
#include "exact.hpp"

namespace bnm {

namespace {

void validate_security(const Security& sec, const EventSpace& space) {
    const std::uint32_t legal = (space.num_states() - 1u);
    if ((sec.pay.mask | sec.cond.mask) & ~legal) {
        throw std::invalid_argument("security references events outside the space");
    }
    if (sec.pay.is_sure()) {
        throw std::invalid_argument("security needs a payoff literal");
    }
    if (sec.pay.mask & sec.cond.mask) {
        throw std::invalid_argument("payoff and condition constrain the same event");
    }
}

}  // namespace

std::string to_string(const Security& sec, const EventSpace& space) {
    std::string out = to_string(sec.pay, space);
    if (!sec.cond.is_sure()) {
        out += '|';
        out += to_string(sec.cond, space);
    }
    return out;
}

Security parse_security(const std::string& text, const EventSpace& space) {
    const std::size_t bar = text.find('|');
    if (bar != std::string::npos && text.find('|', bar + 1) != std::string::npos) {
        throw ParseError("security '" + text + "' has more than one '|'");
    }
    Security sec;
    sec.pay = parse_event_expr(text.substr(0, bar), space);
    sec.cond = bar == std::string::npos ? EventExpr::sure()
                                        : parse_event_expr(text.substr(bar + 1), space);
    if (sec.pay.is_sure()) throw ParseError("security '" + text + "' has an empty payoff side");
    if (sec.pay.mask & sec.cond.mask) {
        throw ParseError("security '" + text + "' constrains an event on both sides");
    }
    return sec;
}

double settle(const Security& sec, double price, double units, WorldState state) {
    if (!sec.cond.satisfied_by(state)) return 0.0;
    const double paid = sec.pay.satisfied_by(state) ? 1.0 : 0.0;
    return units * (paid - price);
}

Market::Market(EventSpace space, std::vector<Security> securities)
    : space_(std::move(space)), securities_(std::move(securities)) {
    for (std::size_t k = 0; k < securities_.size(); ++k) {
        validate_security(securities_[k], space_);
        for (std::size_t j = 0; j < k; ++j) {
            if (securities_[j] == securities_[k]) {
                throw std::invalid_argument("duplicate security " +
                                            to_string(securities_[k], space_));
            }
        }
    }
}

Market::Market(const Dag& dag) : space_(dag.space()), structure_(dag) {
    securities_.reserve(static_cast<std::size_t>(dag.security_count()));
    for (int j = 0; j < dag.size(); ++j) {
        for (const EventExpr& pa : all_assignments(dag.parent_mask(j))) {
            securities_.push_back(Security{EventExpr::literal(j, true), pa});
        }
    }
}

int Market::find(const Security& sec) const {
    for (int k = 0; k < size(); ++k) {
        if (securities_[k] == sec) return k;
    }
    return -1;
}

Market Market::with_appended(const Security& sec) const {
    std::vector<Security> all = securities_;
    all.push_back(sec);
    return Market(space_, std::move(all));
}

Market structured_market(const Dag& dag) { return Market(dag); }

Market base_market(const EventSpace& space) { return structured_market(Dag::edgeless(space)); }

Market complete_market(const EventSpace& space) {
    return structured_market(Dag::fully_connected(space));
}

Eigen::MatrixXd net_payoff_matrix(const Market& market, const PriceVector& prices) {
    if (static_cast<int>(prices.size()) != market.size()) {
        throw std::invalid_argument("price count must match security count");
    }
    const std::uint32_t n = market.space().num_states();
    Eigen::MatrixXd net = Eigen::MatrixXd::Zero(n, market.size());
    for (int k = 0; k < market.size(); ++k) {
        const Security& sec = market.at(k);
        const EventExpr payout = sec.payout_event();
        for (WorldState s = 0; s < n; ++s) {
            if (!sec.cond.satisfied_by(s)) continue;
            net(s, k) = (payout.satisfied_by(s) ? 1.0 : 0.0) - prices[k];
        }
    }
    return net;
}

double portfolio_settle(const Market& market, const Holdings& units, const PriceVector& prices,
                        WorldState state) {
    if (units.size() != prices.size() ||
        static_cast<int>(units.size()) != market.size()) {
        throw std::invalid_argument("holdings and prices must match security count");
    }
    double total = 0.0;
    for (int k = 0; k < market.size(); ++k) {
        total += settle(market.at(k), prices[k], units[k], state);
    }
    return total;
}

CompletenessReport completeness_rank(const Market& market) {
    const std::uint32_t n = market.space().num_states();
    exact::RationalMatrix rows;
    rows.reserve(1 + 2 * static_cast<std::size_t>(market.size()));
    auto indicator = [n](const EventExpr& e) {
        std::vector<exact::Rational> row(n);
        for (WorldState s = 0; s < n; ++s) row[s] = e.satisfied_by(s) ? 1 : 0;
        return row;
    };
    rows.push_back(indicator(EventExpr::sure()));
    for (const Security& sec : market.securities()) {
        rows.push_back(indicator(sec.payout_event()));
        rows.push_back(indicator(sec.cond));
    }
    const int span = exact::rank(std::move(rows));
    CompletenessReport report;
    // The sure event always contributes one dimension; completeness means the
    // span exhausts all state contingencies.
    report.rank = span - 1;
    report.complete = span == static_cast<int>(n);
    return report;
}

}  // namespace bnm
