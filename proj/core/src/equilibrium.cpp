#include "bnmarket/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include <Eigen/Dense>

#include "bnmarket/errors.hpp"
#include "bnmarket/rng.hpp"
#include "exact.hpp"

namespace bnm {

namespace {

constexpr double kPriceFloor = 1e-7;

std::vector<exact::Rational> indicator_exact(const EventExpr& e, std::uint32_t n) {
    std::vector<exact::Rational> row(n);
    for (WorldState s = 0; s < n; ++s) row[s] = e.satisfied_by(s) ? 1 : 0;
    return row;
}

struct Reduction {
    std::vector<int> kept;
    std::vector<int> dropped;
};

// Splits the market into an independent kept set and securities whose payout
// and condition indicators are both replicable from {cash, kept net payoffs}.
// Membership is tested in exact rational arithmetic at generic rational
// prices: a relation that holds at a generic point holds identically in the
// prices, so the kept set stays independent at every interior price vector.
// Pure structured markets are never degenerate and skip the scan.
Reduction reduce_market(const Market& market) {
    Reduction red;
    if (market.structure() || market.size() <= 1) {
        red.kept.resize(market.size());
        std::iota(red.kept.begin(), red.kept.end(), 0);
        return red;
    }
    const std::uint32_t n = market.space().num_states();
    std::vector<std::vector<exact::Rational>> cols;
    cols.push_back(indicator_exact(EventExpr::sure(), n));
    for (int k = 0; k < market.size(); ++k) {
        const Security& sec = market.at(k);
        const auto pay = indicator_exact(sec.payout_event(), n);
        const auto cond = indicator_exact(sec.cond, n);
        const bool replicable = exact::coordinates_in_span(cols, pay).has_value() &&
                                exact::coordinates_in_span(cols, cond).has_value();
        if (replicable) {
            red.dropped.push_back(k);
            continue;
        }
        const long long num = static_cast<long long>(mix64(0x5eedULL + k) % 999983ull) + 1;
        const exact::Rational price(num, 1000003);
        std::vector<exact::Rational> net(n);
        for (std::uint32_t s = 0; s < n; ++s) net[s] = pay[s] - price * cond[s];
        cols.push_back(std::move(net));
        red.kept.push_back(k);
    }
    return red;
}

Eigen::VectorXd indicator_vec(const EventExpr& e, std::uint32_t n) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    for (WorldState s = 0; s < n; ++s) {
        if (e.satisfied_by(s)) v[s] = 1.0;
    }
    return v;
}

struct Evaluation {
    std::vector<Holdings> demands;
    Eigen::VectorXd excess;
    double residual = 0.0;
};

}  // namespace

EquilibriumResult solve_equilibrium(const Market& market, const std::vector<Agent>& agents,
                                    const SolverOptions& options) {
    const EventSpace& space = market.space();
    const std::uint32_t n = space.num_states();
    const int num_agents = static_cast<int>(agents.size());
    if (num_agents < 1) throw std::invalid_argument("need at least one agent");
    for (const Agent& agent : agents) {
        if (!(agent.belief.space() == space)) {
            throw std::invalid_argument("agent '" + agent.id + "' uses a different event space");
        }
        if (agent.endowment.size() != n) {
            throw std::invalid_argument("agent '" + agent.id + "' endowment size mismatch");
        }
        if (agent.utility.kind() == UtilityKind::Linear) {
            throw UnboundedDemand("agent '" + agent.id + "' is risk-neutral");
        }
        // Feasibility probe: holdings start at zero, so the endowment itself
        // must be inside the utility domain wherever the agent assigns mass.
        for (WorldState s = 0; s < n; ++s) {
            if (agent.belief.at(s) > 0.0 && !agent.utility.feasible(agent.endowment[s])) {
                throw InfeasibleProblem("agent '" + agent.id +
                                        "' has an infeasible endowment in a supported state");
            }
        }
    }

    EquilibriumResult out;
    out.prices.assign(market.size(), 0.0);
    out.allocations.assign(num_agents, Holdings(market.size(), 0.0));
    auto fill_rn = [&](const PriceVector& prices) {
        out.rn_tables.clear();
        out.rn_tables.reserve(num_agents);
        for (int i = 0; i < num_agents; ++i) {
            const auto wealth =
                wealth_profile(agents[i], market, out.allocations[i], prices);
            out.rn_tables.push_back(rn_distribution(agents[i], wealth));
        }
    };
    if (market.size() == 0) {
        out.residual = 0.0;
        out.converged = true;
        fill_rn(out.prices);
        return out;
    }

    const Reduction red = reduce_market(market);
    const int kept_count = static_cast<int>(red.kept.size());
    std::vector<Security> kept_secs;
    kept_secs.reserve(kept_count);
    for (int k : red.kept) kept_secs.push_back(market.at(k));
    const Market reduced(space, kept_secs);

    // Initial prices: across-agent mean of belief conditionals, clamped
    // interior.  Securities no agent can condition on are frozen here and
    // stay out of the Newton system (their excess demand is identically 0).
    PriceVector p(kept_count, 0.5);
    std::vector<bool> inert(kept_count, false);
    for (int k = 0; k < kept_count; ++k) {
        const Security& sec = reduced.at(k);
        double sum = 0.0;
        int contributors = 0;
        for (const Agent& agent : agents) {
            if (prob(agent.belief, sec.cond) > 0.0) {
                sum += conditional(agent.belief, sec.pay, sec.cond);
                ++contributors;
            }
        }
        if (contributors == 0) {
            inert[k] = true;
        } else {
            p[k] = std::clamp(sum / contributors, 0.01, 0.99);
        }
    }
    std::vector<int> live;
    for (int k = 0; k < kept_count; ++k) {
        if (!inert[k]) live.push_back(k);
    }
    const int num_live = static_cast<int>(live.size());

    const DemandOptions dopts{options.foc_tol, options.max_demand_iterations};
    const auto evaluate = [&](const PriceVector& prices) -> std::optional<Evaluation> {
        Evaluation ev;
        ev.excess = Eigen::VectorXd::Zero(kept_count);
        for (const Agent& agent : agents) {
            try {
                ev.demands.push_back(demand(agent, reduced, prices, dopts));
            } catch (const UnboundedDemand&) {
                return std::nullopt;
            } catch (const NoConvergence&) {
                return std::nullopt;
            }
            for (int k = 0; k < kept_count; ++k) ev.excess[k] += ev.demands.back()[k];
        }
        ev.residual = ev.excess.lpNorm<Eigen::Infinity>();
        return ev;
    };

    std::optional<Evaluation> ev = evaluate(p);
    for (int shrink = 0; !ev && shrink < 8; ++shrink) {
        // The mean-of-beliefs start can admit an arbitrage portfolio in
        // ad-hoc markets; pulling prices toward 1/2 restores boundedness.
        for (double& pk : p) pk = 0.5 + 0.8 * (pk - 0.5);
        ev = evaluate(p);
    }
    if (!ev) {
        throw UnboundedDemand("no bounded-demand starting prices found");
    }

    PriceVector best_p = p;
    Evaluation best_ev = *ev;
    double eta = 0.25;
    int iter = 0;
    for (; iter < options.max_iterations && ev->residual > options.clear_tol; ++iter) {
        // Assemble dZ/dp over live securities via the implicit function
        // theorem at each agent's optimum: dx/dp = -H^{-1} dg/dp with
        // H = N' diag(pi u'') N and
        // dg_k/dp_l = -x_l sum_s pi u'' 1{cond_l} n_k - [k=l] sum_s pi u' 1{cond_k}.
        Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(num_live, num_live);
        const Eigen::MatrixXd net = net_payoff_matrix(reduced, p);
        std::vector<Eigen::VectorXd> cond_ind(kept_count);
        for (int k = 0; k < kept_count; ++k) cond_ind[k] = indicator_vec(reduced.at(k).cond, n);
        for (int i = 0; i < num_agents; ++i) {
            const Agent& agent = agents[i];
            const auto& pi = agent.belief.table();
            Eigen::VectorXd wealth(n);
            for (WorldState s = 0; s < n; ++s) wealth[s] = agent.endowment[s];
            for (int k = 0; k < kept_count; ++k) {
                const double units = ev->demands[i][k];
                if (units != 0.0) wealth += units * net.col(k);
            }
            Eigen::VectorXd d1 = Eigen::VectorXd::Zero(n);
            Eigen::VectorXd d2 = Eigen::VectorXd::Zero(n);
            for (std::uint32_t s = 0; s < n; ++s) {
                if (pi[s] <= 0.0) continue;
                d1[s] = pi[s] * agent.utility.deriv(wealth[s]);
                d2[s] = pi[s] * agent.utility.second(wealth[s]);
            }
            Eigen::MatrixXd na(n, num_live);
            for (int a = 0; a < num_live; ++a) na.col(a) = net.col(live[a]);
            const Eigen::MatrixXd curv = na.transpose() * (-d2).asDiagonal() * na;
            Eigen::MatrixXd dgdp(num_live, num_live);
            for (int b = 0; b < num_live; ++b) {
                const int l = live[b];
                const Eigen::VectorXd weighted = d2.cwiseProduct(cond_ind[l]);
                for (int a = 0; a < num_live; ++a) {
                    dgdp(a, b) = -ev->demands[i][l] * na.col(a).dot(weighted);
                }
                dgdp(b, b) -= d1.dot(cond_ind[l]);
            }
            Eigen::LDLT<Eigen::MatrixXd> ldlt(curv);
            if (ldlt.info() == Eigen::Success) {
                // dx/dp = (-H)^{-1} dg/dp
                jac += ldlt.solve(dgdp);
            }
        }

        Eigen::VectorXd z_live(num_live);
        for (int a = 0; a < num_live; ++a) z_live[a] = ev->excess[live[a]];
        Eigen::VectorXd delta = jac.fullPivLu().solve(-z_live);
        if (!delta.allFinite()) delta.setZero();

        bool accepted = false;
        double t = 1.0;
        for (int cut = 0; cut < 10 && !accepted; ++cut, t *= 0.5) {
            PriceVector trial = p;
            for (int a = 0; a < num_live; ++a) {
                trial[live[a]] =
                    std::clamp(p[live[a]] + t * delta[a], kPriceFloor, 1.0 - kPriceFloor);
            }
            if (trial == p) break;
            if (auto trial_ev = evaluate(trial); trial_ev && trial_ev->residual < ev->residual) {
                p = std::move(trial);
                ev = std::move(trial_ev);
                accepted = true;
            }
        }
        while (!accepted && eta > 1e-8) {
            // Tatonnement rescue: raise prices where demand is long, lower
            // where short.
            PriceVector trial = p;
            for (int a = 0; a < num_live; ++a) {
                trial[live[a]] =
                    std::clamp(p[live[a]] + eta * z_live[a], kPriceFloor, 1.0 - kPriceFloor);
            }
            if (auto trial_ev = evaluate(trial); trial_ev && trial_ev->residual < ev->residual) {
                p = std::move(trial);
                ev = std::move(trial_ev);
                accepted = true;
            } else {
                eta *= 0.5;
            }
        }
        if (ev->residual < best_ev.residual) {
            best_p = p;
            best_ev = *ev;
        }
        if (!accepted) break;
    }

    if (ev->residual > best_ev.residual) {
        p = best_p;
        ev = best_ev;
    }
    out.iterations = iter;
    out.residual = ev->residual;
    out.converged = ev->residual <= options.clear_tol;
    if (!out.converged) {
        out.message = "market did not clear within the iteration budget; best residual " +
                      std::to_string(ev->residual);
    }

    for (int k = 0; k < kept_count; ++k) {
        out.prices[red.kept[k]] = p[k];
        for (int i = 0; i < num_agents; ++i) out.allocations[i][red.kept[k]] = ev->demands[i][k];
    }
    if (!red.dropped.empty()) {
        // Price each dropped security off its replication at the solved
        // prices: with payout = a0 cash + sum a_k n_k and condition = b0 cash
        // + sum b_k n_k, the no-arbitrage price is a0/b0 (b0 is the implied
        // probability of the condition).
        Eigen::MatrixXd basis(n, 1 + kept_count);
        basis.col(0).setOnes();
        const Eigen::MatrixXd net = net_payoff_matrix(reduced, p);
        for (int k = 0; k < kept_count; ++k) basis.col(1 + k) = net.col(k);
        const auto qr = basis.colPivHouseholderQr();
        for (int r : red.dropped) {
            const Security& sec = market.at(r);
            const Eigen::VectorXd alpha = qr.solve(indicator_vec(sec.payout_event(), n));
            const Eigen::VectorXd beta = qr.solve(indicator_vec(sec.cond, n));
            if (std::abs(beta[0]) < 1e-12) {
                throw ZeroConditioningEvent("replicable security " + to_string(sec, space) +
                                            " has zero implied condition probability");
            }
            out.prices[r] =
                std::clamp(alpha[0] / beta[0], kPriceFloor, 1.0 - kPriceFloor);
        }
    }
    fill_rn(out.prices);
    return out;
}

ConsensusReport consensus_gap(const EquilibriumResult& result) {
    ConsensusReport report;
    const int num_agents = static_cast<int>(result.rn_tables.size());
    for (int a = 0; a < num_agents; ++a) {
        for (int b = a + 1; b < num_agents; ++b) {
            const auto& ta = result.rn_tables[a].table();
            const auto& tb = result.rn_tables[b].table();
            for (std::size_t s = 0; s < ta.size(); ++s) {
                const double gap = std::abs(ta[s] - tb[s]);
                if (gap > report.max_gap) {
                    report.max_gap = gap;
                    report.agent_a = a;
                    report.agent_b = b;
                    report.state = static_cast<WorldState>(s);
                }
            }
        }
    }
    return report;
}

double rn_identity_gap(const EquilibriumResult& result, const Market& market) {
    double worst = 0.0;
    for (const auto& rn : result.rn_tables) {
        for (int k = 0; k < market.size(); ++k) {
            const Security& sec = market.at(k);
            const double lhs = prob(rn, sec.payout_event());
            const double rhs = result.prices[k] * prob(rn, sec.cond);
            worst = std::max(worst, std::abs(lhs - rhs));
        }
    }
    return worst;
}

JointDistribution state_prices(const PriceVector& prices, const Market& market) {
    if (!market.structure()) {
        throw MissingStructure("state prices require a structured market");
    }
    if (static_cast<int>(prices.size()) != market.size()) {
        throw std::invalid_argument("price count must match security count");
    }
    const Dag& dag = *market.structure();
    std::vector<Cpt> cpts;
    int offset = 0;
    for (int j = 0; j < dag.size(); ++j) {
        Cpt t;
        t.node = j;
        const int rows = 1 << dag.num_parents(j);
        for (int r = 0; r < rows; ++r) {
            t.rows.push_back(std::clamp(prices[offset + r], 0.0, 1.0));
        }
        offset += rows;
        cpts.push_back(std::move(t));
    }
    return joint_from_bn(BayesNet(dag, std::move(cpts)));
}

double price_redundant(const EquilibriumResult& result, const Market& market, const EventExpr& e,
                       const EventExpr& given) {
    return conditional(state_prices(result, market), e, given);
}

OcReport verify_operational_completeness(const Market& market, const std::vector<Agent>& agents,
                                         const SolverOptions& options) {
    OcReport report;
    report.result = solve_equilibrium(market, agents, options);
    report.consensus = consensus_gap(report.result).max_gap;
    report.is_oc = report.result.converged && report.consensus <= options.oc_tol;
    report.benchmark = solve_equilibrium(complete_market(market.space()), agents, options);
    const Market bench = complete_market(market.space());
    double gap = 0.0;
    for (std::size_t i = 0; i < agents.size(); ++i) {
        const auto compact =
            wealth_profile(agents[i], market, report.result.allocations[i], report.result.prices);
        const auto full = wealth_profile(agents[i], bench, report.benchmark.allocations[i],
                                         report.benchmark.prices);
        for (std::size_t s = 0; s < compact.size(); ++s) {
            gap = std::max(gap, std::abs(compact[s] - full[s]));
        }
    }
    report.wealth_gap = gap;
    return report;
}

std::optional<TradeProposal> pareto_improvement_search(
    const std::vector<Agent>& agents, const std::vector<std::vector<double>>& wealth_profiles,
    int trials, double step, std::uint64_t seed) {
    const int num_agents = static_cast<int>(agents.size());
    if (num_agents < 2) return std::nullopt;
    if (wealth_profiles.size() != agents.size()) {
        throw std::invalid_argument("need one wealth profile per agent");
    }
    const std::uint32_t n = agents[0].belief.space().num_states();
    Rng rng(seed);
    for (int t = 0; t < trials; ++t) {
        const int a = rng.below(num_agents);
        int b = rng.below(num_agents - 1);
        if (b >= a) ++b;
        std::vector<double> delta(n);
        double scale = 0.0;
        for (auto& d : delta) {
            d = rng.uniform(-1.0, 1.0);
            scale = std::max(scale, std::abs(d));
        }
        if (scale == 0.0) continue;
        for (auto& d : delta) d *= step / scale;

        std::vector<double> wa = wealth_profiles[a];
        std::vector<double> wb = wealth_profiles[b];
        for (std::uint32_t s = 0; s < n; ++s) {
            wa[s] += delta[s];
            wb[s] -= delta[s];
        }
        try {
            const double gain_a = expected_utility(agents[a], wa) -
                                  expected_utility(agents[a], wealth_profiles[a]);
            const double gain_b = expected_utility(agents[b], wb) -
                                  expected_utility(agents[b], wealth_profiles[b]);
            if (gain_a > 0.0 && gain_b > 0.0) {
                return TradeProposal{a, b, std::move(delta), gain_a, gain_b};
            }
        } catch (const InfeasibleWealth&) {
            // Transfer left the utility domain; not an improvement.
        }
    }
    return std::nullopt;
}

}  // namespace bnm
