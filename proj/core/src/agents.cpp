#include "bnmarket/agents.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Cholesky>

#include "bnmarket/errors.hpp"

namespace bnm {

namespace {

constexpr double kArmijoSlope = 1e-4;
constexpr double kMinStep = 1e-14;
// Positions beyond this magnitude mean the objective has no finite maximizer
// (a costless profitable portfolio is being scaled up).
constexpr double kPositionBlowup = 1e9;

[[noreturn]] void infeasible(const Utility& u, double wealth) {
    throw InfeasibleWealth("wealth " + std::to_string(wealth) + " at or below -" +
                           std::to_string(u.wealth_base()) + " in a supported state");
}

}  // namespace

Utility Utility::exponential(double c) {
    if (!std::isfinite(c) || c <= 0.0) {
        throw std::invalid_argument("risk aversion must be positive and finite");
    }
    return Utility(UtilityKind::Exponential, c);
}

Utility Utility::log(double w0) {
    if (!std::isfinite(w0) || w0 <= 0.0) {
        throw std::invalid_argument("wealth base must be positive and finite");
    }
    return Utility(UtilityKind::Log, w0);
}

bool Utility::feasible(double wealth) const {
    if (!std::isfinite(wealth)) return false;
    return kind_ != UtilityKind::Log || wealth + param_ > 0.0;
}

double Utility::value(double wealth) const {
    switch (kind_) {
        case UtilityKind::Linear:
            return wealth;
        case UtilityKind::Exponential:
            return -std::exp(-param_ * wealth);
        case UtilityKind::Log:
            if (!feasible(wealth)) infeasible(*this, wealth);
            return std::log(param_ + wealth);
    }
    return 0.0;
}

double Utility::deriv(double wealth) const {
    switch (kind_) {
        case UtilityKind::Linear:
            return 1.0;
        case UtilityKind::Exponential:
            return param_ * std::exp(-param_ * wealth);
        case UtilityKind::Log:
            if (!feasible(wealth)) infeasible(*this, wealth);
            return 1.0 / (param_ + wealth);
    }
    return 0.0;
}

double Utility::second(double wealth) const {
    switch (kind_) {
        case UtilityKind::Linear:
            return 0.0;
        case UtilityKind::Exponential:
            return -param_ * param_ * std::exp(-param_ * wealth);
        case UtilityKind::Log: {
            if (!feasible(wealth)) infeasible(*this, wealth);
            const double d = param_ + wealth;
            return -1.0 / (d * d);
        }
    }
    return 0.0;
}

std::vector<double> wealth_profile(const Agent& agent, const Market& market,
                                   const Holdings& units, const PriceVector& prices) {
    const std::uint32_t n = market.space().num_states();
    if (agent.endowment.size() != n) {
        throw std::invalid_argument("endowment must have one entry per world state");
    }
    std::vector<double> wealth = agent.endowment;
    if (static_cast<int>(units.size()) != market.size() || units.size() != prices.size()) {
        throw std::invalid_argument("holdings and prices must match security count");
    }
    for (int k = 0; k < market.size(); ++k) {
        if (units[k] == 0.0) continue;
        const Security& sec = market.at(k);
        for (WorldState s = 0; s < n; ++s) {
            wealth[s] += settle(sec, prices[k], units[k], s);
        }
    }
    return wealth;
}

double expected_utility(const Agent& agent, const std::vector<double>& wealth) {
    const auto& pi = agent.belief.table();
    if (wealth.size() != pi.size()) {
        throw std::invalid_argument("wealth profile size must match state count");
    }
    double eu = 0.0;
    for (std::size_t s = 0; s < pi.size(); ++s) {
        if (pi[s] > 0.0) eu += pi[s] * agent.utility.value(wealth[s]);
    }
    return eu;
}

JointDistribution rn_distribution(const Agent& agent, const std::vector<double>& wealth) {
    const auto& pi = agent.belief.table();
    if (wealth.size() != pi.size()) {
        throw std::invalid_argument("wealth profile size must match state count");
    }
    std::vector<double> weights(pi.size(), 0.0);
    for (std::size_t s = 0; s < pi.size(); ++s) {
        if (pi[s] > 0.0) weights[s] = pi[s] * agent.utility.deriv(wealth[s]);
    }
    return JointDistribution::from_weights(agent.belief.space(), std::move(weights));
}

namespace {

// Exact 1D maximization along a column by bisecting the directional FOC.
// Used when the Newton step stalls; always strictly improves the objective.
void coordinate_step(const Agent& agent, const Eigen::MatrixXd& net, int j, Eigen::VectorXd& x,
                     Eigen::VectorXd& wealth) {
    const auto& pi = agent.belief.table();
    const Utility& u = agent.utility;
    const auto foc = [&](double d) {
        double acc = 0.0;
        for (int s = 0; s < net.rows(); ++s) {
            if (pi[s] > 0.0 && net(s, j) != 0.0) {
                acc += pi[s] * u.deriv(wealth[s] + d * net(s, j)) * net(s, j);
            }
        }
        return acc;
    };
    const double g0 = foc(0.0);
    if (g0 == 0.0) return;
    const double dir = g0 > 0.0 ? 1.0 : -1.0;

    double bound = std::numeric_limits<double>::infinity();
    if (u.kind() == UtilityKind::Log) {
        for (int s = 0; s < net.rows(); ++s) {
            const double step = dir * net(s, j);
            if (pi[s] > 0.0 && step < 0.0) {
                bound = std::min(bound, (wealth[s] + u.wealth_base()) / -step);
            }
        }
    }
    double lo = 0.0;
    double hi = std::isfinite(bound) ? std::min(1.0, 0.5 * bound) : 1.0;
    int guard = 0;
    while (dir * foc(dir * hi) > 0.0) {
        lo = hi;
        hi = std::isfinite(bound) ? 0.5 * (hi + 0.999 * bound) : 2.0 * hi;
        if (hi > kPositionBlowup || ++guard > 400) {
            throw UnboundedDemand("no finite optimum along security " + std::to_string(j));
        }
    }
    for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
        const double mid = 0.5 * (lo + hi);
        (dir * foc(dir * mid) > 0.0 ? lo : hi) = mid;
    }
    const double d = dir * 0.5 * (lo + hi);
    x[j] += d;
    for (int s = 0; s < net.rows(); ++s) wealth[s] += d * net(s, j);
}

}  // namespace

DemandResult solve_demand(const Agent& agent, const Market& market, const PriceVector& prices,
                          const DemandOptions& options) {
    const EventSpace& space = market.space();
    if (!(agent.belief.space() == space)) {
        throw std::invalid_argument("agent belief and market use different event spaces");
    }
    const std::uint32_t n = space.num_states();
    if (agent.endowment.size() != n) {
        throw std::invalid_argument("endowment must have one entry per world state");
    }
    if (static_cast<int>(prices.size()) != market.size()) {
        throw std::invalid_argument("price count must match security count");
    }
    if (agent.utility.kind() == UtilityKind::Linear) {
        throw UnboundedDemand("risk-neutral demand has no finite maximizer");
    }
    const auto& pi = agent.belief.table();

    // Classify securities by their net payoff values on the belief support.
    // A security whose support values are all of one sign is a money pump
    // (or, if identically zero, cannot matter and stays at zero).
    std::vector<int> active;
    for (int k = 0; k < market.size(); ++k) {
        const Security& sec = market.at(k);
        const EventExpr payout = sec.payout_event();
        double pay_mass = 0.0;
        double refund_mass = 0.0;
        for (WorldState s = 0; s < n; ++s) {
            if (pi[s] <= 0.0 || !sec.cond.satisfied_by(s)) continue;
            (payout.satisfied_by(s) ? pay_mass : refund_mass) += pi[s];
        }
        if (pay_mass <= 0.0 && refund_mass <= 0.0) continue;
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        if (pay_mass > 0.0) lo = hi = 1.0 - prices[k];
        if (refund_mass > 0.0) {
            lo = std::min(lo, -prices[k]);
            hi = std::max(hi, -prices[k]);
        }
        if (lo == 0.0 && hi == 0.0) continue;
        if (lo >= 0.0 || hi <= 0.0) {
            throw UnboundedDemand("security " + to_string(sec, space) + " at price " +
                                  std::to_string(prices[k]) + " admits a sure gain");
        }
        active.push_back(k);
    }

    DemandResult out;
    out.x.assign(market.size(), 0.0);
    if (active.empty()) return out;

    const Eigen::MatrixXd full_net = net_payoff_matrix(market, prices);
    const int sa = static_cast<int>(active.size());
    Eigen::MatrixXd net(n, sa);
    for (int j = 0; j < sa; ++j) net.col(j) = full_net.col(active[j]);

    Eigen::VectorXd wealth(n);
    for (WorldState s = 0; s < n; ++s) {
        wealth[s] = agent.endowment[s];
        if (pi[s] > 0.0 && !agent.utility.feasible(wealth[s])) {
            infeasible(agent.utility, wealth[s]);
        }
    }
    Eigen::VectorXd x = Eigen::VectorXd::Zero(sa);

    const auto eu_at = [&](const Eigen::VectorXd& w) {
        double eu = 0.0;
        for (std::uint32_t s = 0; s < n; ++s) {
            if (pi[s] <= 0.0) continue;
            if (!agent.utility.feasible(w[s])) return -std::numeric_limits<double>::infinity();
            eu += pi[s] * agent.utility.value(w[s]);
        }
        return eu;
    };

    double gap = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < options.max_iterations; ++iter) {
        Eigen::VectorXd d1 = Eigen::VectorXd::Zero(n);
        Eigen::VectorXd d2 = Eigen::VectorXd::Zero(n);
        for (std::uint32_t s = 0; s < n; ++s) {
            if (pi[s] <= 0.0) continue;
            d1[s] = pi[s] * agent.utility.deriv(wealth[s]);
            d2[s] = pi[s] * agent.utility.second(wealth[s]);
        }
        const double mass = d1.sum();
        const Eigen::VectorXd g = net.transpose() * d1;
        gap = g.lpNorm<Eigen::Infinity>() / mass;
        out.iterations = iter;
        if (gap <= options.foc_tol) {
            for (int j = 0; j < sa; ++j) out.x[active[j]] = x[j];
            out.foc_gap = gap;
            return out;
        }

        const Eigen::MatrixXd curv = net.transpose() * (-d2).asDiagonal() * net;
        Eigen::VectorXd step;
        double ridge = 0.0;
        for (int attempt = 0;; ++attempt) {
            Eigen::MatrixXd h = curv;
            if (ridge > 0.0) h.diagonal().array() += ridge;
            const Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
            step = ldlt.solve(g);
            if (ldlt.info() == Eigen::Success && step.allFinite() && g.dot(step) > 0.0) break;
            if (attempt >= 40) {
                step.setZero();
                break;
            }
            const double base = curv.trace() / sa;
            ridge = ridge == 0.0 ? std::max(base, 1.0) * 1e-12 : ridge * 10.0;
        }

        bool moved = false;
        if (!step.isZero()) {
            double t = 1.0;
            if (agent.utility.kind() == UtilityKind::Log) {
                const Eigen::VectorXd dw = net * step;
                for (std::uint32_t s = 0; s < n; ++s) {
                    if (pi[s] > 0.0 && dw[s] < 0.0) {
                        t = std::min(t, 0.99 * (wealth[s] + agent.utility.wealth_base()) / -dw[s]);
                    }
                }
            }
            const Eigen::VectorXd dw = net * step;
            const double eu0 = eu_at(wealth);
            const double slope = g.dot(step);
            while (t >= kMinStep) {
                const Eigen::VectorXd wt = wealth + t * dw;
                if (eu_at(wt) >= eu0 + kArmijoSlope * t * slope) {
                    x += t * step;
                    wealth = wt;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
        }
        if (!moved) {
            for (int j = 0; j < sa; ++j) coordinate_step(agent, net, j, x, wealth);
        }
        if (x.lpNorm<Eigen::Infinity>() > kPositionBlowup) {
            throw UnboundedDemand("position diverging: prices admit a costless profitable portfolio");
        }
    }
    throw NoConvergence("demand iteration cap reached, FOC gap " + std::to_string(gap));
}

Holdings demand(const Agent& agent, const Market& market, const PriceVector& prices,
                const DemandOptions& options) {
    return solve_demand(agent, market, prices, options).x;
}

bool mu_ratio_invariant(const Agent& agent, const std::vector<double>& wealth, int j,
                        std::uint32_t w_mask, std::uint32_t x_mask, double tol) {
    const EventSpace& space = agent.belief.space();
    const std::uint32_t all = space.num_states() - 1u;
    const std::uint32_t j_bit = 1u << j;
    if ((w_mask & x_mask) || (w_mask & j_bit) || (x_mask & j_bit) ||
        (j_bit | w_mask | x_mask) != all) {
        throw std::invalid_argument("j, W, X must partition the event set");
    }
    if (wealth.size() != space.num_states()) {
        throw std::invalid_argument("wealth profile size must match state count");
    }
    for (const EventExpr& w : all_assignments(w_mask)) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (const EventExpr& xa : all_assignments(x_mask)) {
            const WorldState off = w.value | xa.value;
            const double ratio =
                agent.utility.deriv(wealth[off]) / agent.utility.deriv(wealth[off | j_bit]);
            lo = std::min(lo, ratio);
            hi = std::max(hi, ratio);
            if (hi - lo > tol) return false;
        }
    }
    return true;
}

bool rn_imap_check(const Agent& agent, const Market& market, const Holdings& units,
                   const PriceVector& prices, const Dag& dag, double tol) {
    const auto wealth = wealth_profile(agent, market, units, prices);
    return is_imap(dag, rn_distribution(agent, wealth), tol);
}

}  // namespace bnm
