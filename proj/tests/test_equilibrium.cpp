#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bnmarket/equilibrium.hpp"
#include "bnmarket/errors.hpp"
#include "bnmarket/rng.hpp"

using namespace bnm;

namespace {

Agent cara(const EventSpace& space, double c, std::vector<double> weights,
           std::vector<double> endowment = {}) {
    if (endowment.empty()) endowment.assign(space.num_states(), 0.0);
    return Agent{.id = "a",
                 .utility = Utility::exponential(c),
                 .belief = JointDistribution::from_weights(space, std::move(weights)),
                 .endowment = std::move(endowment)};
}

}  // namespace

TEST_CASE("symmetric binary disagreement clears at one half") {
    EventSpace space(1);
    const Market market = base_market(space);
    const auto r = solve_equilibrium(
        market, {cara(space, 1.0, {0.4, 0.6}), cara(space, 1.0, {0.6, 0.4})});
    REQUIRE(r.converged);
    CHECK(r.prices[0] == doctest::Approx(0.5).epsilon(1e-9));
    // Holdings are log(1.5) and -log(1.5).
    CHECK(r.allocations[0][0] == doctest::Approx(std::log(1.5)).epsilon(1e-8));
    CHECK(r.allocations[0][0] + r.allocations[1][0] == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("asymmetric binary disagreement clears at the odds midpoint") {
    EventSpace space(1);
    const Market market = base_market(space);
    const auto r = solve_equilibrium(
        market, {cara(space, 1.0, {0.4, 0.6}), cara(space, 1.0, {0.5, 0.5})});
    REQUIRE(r.converged);
    // p = sqrt(1.5) / (1 + sqrt(1.5)).
    CHECK(r.prices[0] == doctest::Approx(0.5505102572168221).epsilon(1e-9));
}

TEST_CASE("clearing price pools beliefs by risk tolerance") {
    EventSpace space(1);
    const Market market = base_market(space);
    const double pis[] = {0.6, 0.3, 0.8};
    const double cs[] = {1.0, 2.0, 4.0};
    std::vector<Agent> agents;
    for (int i = 0; i < 3; ++i) agents.push_back(cara(space, cs[i], {1.0 - pis[i], pis[i]}));
    const auto r = solve_equilibrium(market, agents);
    REQUIRE(r.converged);
    double T = 0.0;
    for (double c : cs) T += 1.0 / c;
    double prod = 1.0;
    for (int i = 0; i < 3; ++i) {
        prod *= std::pow(pis[i] / (1.0 - pis[i]), -(1.0 / cs[i]) / T);
    }
    CHECK(r.prices[0] == doctest::Approx(1.0 / (1.0 + prod)).epsilon(1e-9));
}

TEST_CASE("complete-market equilibrium matches the cara closed form") {
    EventSpace space(2);
    const Market market = complete_market(space);
    const std::vector<Agent> agents = {
        cara(space, 1.0, {2, 1, 1, 2}, {0.5, -0.5, 0.0, 0.3}),
        cara(space, 2.5, {1, 2, 2, 1}, {-0.2, 0.4, 0.1, -0.6})};
    const auto r = solve_equilibrium(market, agents);
    REQUIRE(r.converged);

    // State prices: q ~ exp(-W/T) * prod_i pi_i^(t_i/T).
    const double T = 1.0 / 1.0 + 1.0 / 2.5;
    std::vector<double> q(4);
    double qsum = 0.0;
    for (WorldState s = 0; s < 4; ++s) {
        const double W = agents[0].endowment[s] + agents[1].endowment[s];
        double v = std::exp(-W / T);
        for (const Agent& a : agents) {
            const double t = 1.0 / a.utility.risk_aversion();
            v *= std::pow(a.belief.at(s), t / T);
        }
        q[s] = v;
        qsum += v;
    }
    for (auto& v : q) v /= qsum;

    const JointDistribution sp = state_prices(r, market);
    for (WorldState s = 0; s < 4; ++s) CHECK(sp.at(s) == doctest::Approx(q[s]).epsilon(1e-9));

    // Wealth: w_i = t_i ln(pi_i/q) + kappa_i with the budget-pinned constant.
    for (std::size_t i = 0; i < agents.size(); ++i) {
        const Agent& a = agents[i];
        const double t = 1.0 / a.utility.risk_aversion();
        double ey = 0.0, elog = 0.0;
        for (WorldState s = 0; s < 4; ++s) {
            ey += q[s] * a.endowment[s];
            elog += q[s] * std::log(a.belief.at(s) / q[s]);
        }
        const auto wealth = wealth_profile(a, market, r.allocations[i], r.prices);
        for (WorldState s = 0; s < 4; ++s) {
            const double want = t * std::log(a.belief.at(s) / q[s]) + ey - t * elog;
            CHECK(wealth[s] == doctest::Approx(want).epsilon(1e-8));
        }
    }
}

TEST_CASE("complete markets force risk-neutral consensus") {
    EventSpace space(2);
    const Market market = complete_market(space);
    const auto r = solve_equilibrium(market, {cara(space, 1.0, {2, 1, 1, 2}, {0.5, -0.5, 0.0, 0.3}),
                                              cara(space, 2.5, {1, 2, 2, 1})});
    REQUIRE(r.converged);
    const ConsensusReport c = consensus_gap(r);
    CHECK(c.max_gap <= 1e-8);
    CHECK(rn_identity_gap(r, market) <= 1e-8);
}

TEST_CASE("incomplete markets leave disagreement behind") {
    EventSpace space(2);
    const Market market = base_market(space);
    // Beliefs correlate the events in opposite directions; the base market
    // cannot trade the correlation away.
    const auto r = solve_equilibrium(
        market, {cara(space, 1.0, {3, 1, 1, 3}), cara(space, 1.0, {1, 3, 3, 1})});
    REQUIRE(r.converged);
    const ConsensusReport c = consensus_gap(r);
    CHECK(c.max_gap > 1e-3);
    CHECK(c.agent_a >= 0);
    CHECK(c.agent_b >= 0);
    CHECK(c.agent_a != c.agent_b);
    // The structured identity still holds on what is traded.
    CHECK(rn_identity_gap(r, market) <= 1e-8);
}

TEST_CASE("single agent trades nothing and prices its own conditionals") {
    EventSpace space(2);
    const Market market = structured_market(Dag::chain(space));
    const BayesNet bn(Dag::chain(space), {{0, {0.6}}, {1, {0.2, 0.7}}});
    const std::vector<Agent> one = {Agent{.id = "solo",
                                          .utility = Utility::exponential(1.0),
                                          .belief = joint_from_bn(bn),
                                          .endowment = {0, 0, 0, 0}}};
    const auto r = solve_equilibrium(market, one);
    REQUIRE(r.converged);
    CHECK(r.prices[0] == doctest::Approx(0.6).epsilon(1e-8));
    CHECK(r.prices[1] == doctest::Approx(0.2).epsilon(1e-8));
    CHECK(r.prices[2] == doctest::Approx(0.7).epsilon(1e-8));
    for (double x : r.allocations[0]) CHECK(std::abs(x) <= 1e-8);
    CHECK(consensus_gap(r).max_gap == 0.0);
}

TEST_CASE("state prices factor through the market structure") {
    EventSpace space(2);
    const Market market = structured_market(Dag::chain(space));
    const JointDistribution sp = state_prices({0.5, 0.2, 0.8}, market);
    CHECK(sp.at(0b00) == doctest::Approx(0.40).epsilon(1e-12));
    CHECK(sp.at(0b01) == doctest::Approx(0.10).epsilon(1e-12));
    CHECK(sp.at(0b10) == doctest::Approx(0.10).epsilon(1e-12));
    CHECK(sp.at(0b11) == doctest::Approx(0.40).epsilon(1e-12));

    const Market adhoc(space, {parse_security("A1", space)});
    CHECK_THROWS_AS(state_prices({0.5}, adhoc), MissingStructure);
}

TEST_CASE("redundant securities price off the state distribution") {
    EventSpace space(2);
    const Market market = structured_market(Dag::chain(space));
    EquilibriumResult r;
    r.prices = {0.5, 0.2, 0.8};
    CHECK(price_redundant(r, market, parse_event_expr("A1&A2", space), EventExpr::sure()) ==
          doctest::Approx(0.4).epsilon(1e-12));
    CHECK(price_redundant(r, market, parse_event_expr("A2", space), EventExpr::sure()) ==
          doctest::Approx(0.5).epsilon(1e-12));
    CHECK(price_redundant(r, market, parse_event_expr("A1", space),
                          parse_event_expr("A2", space)) ==
          doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("appending a replicable security changes nothing") {
    EventSpace space(2);
    const Market market = structured_market(Dag::chain(space));
    const std::vector<Agent> agents = {cara(space, 1.0, {2, 1, 1, 2}, {0.3, -0.1, 0.2, -0.4}),
                                       cara(space, 1.5, {1, 2, 2, 1})};
    const auto base = solve_equilibrium(market, agents);
    REQUIRE(base.converged);

    const Security extra = parse_security("A1&A2", space);
    const double implied =
        price_redundant(base, market, extra.pay, extra.cond);
    const auto extended = solve_equilibrium(market.with_appended(extra), agents);
    REQUIRE(extended.converged);
    for (int k = 0; k < market.size(); ++k) {
        CHECK(extended.prices[k] == doctest::Approx(base.prices[k]).epsilon(1e-8));
    }
    CHECK(extended.prices[3] == doctest::Approx(implied).epsilon(1e-8));
    for (const auto& alloc : extended.allocations) CHECK(std::abs(alloc[3]) <= 1e-8);
}

TEST_CASE("operational completeness of the compact chain market") {
    EventSpace space(3);
    const Dag chain = Dag::chain(space);
    const std::vector<Agent> agents = {
        Agent{.id = "alice",
              .utility = Utility::exponential(1.0),
              .belief = joint_from_bn(BayesNet(chain, {{0, {0.6}}, {1, {0.2, 0.7}},
                                                       {2, {0.3, 0.8}}})),
              .endowment = std::vector<double>(8, 0.0)},
        Agent{.id = "bob",
              .utility = Utility::exponential(1.5),
              .belief = joint_from_bn(BayesNet(chain, {{0, {0.4}}, {1, {0.3, 0.9}},
                                                       {2, {0.25, 0.65}}})),
              .endowment = std::vector<double>(8, 0.0)}};
    const OcReport oc = verify_operational_completeness(structured_market(chain), agents);
    CHECK(oc.is_oc);
    CHECK(oc.consensus <= 1e-6);
    CHECK(oc.wealth_gap <= 1e-6);

    // The base market alone is not operationally complete here.
    const OcReport base = verify_operational_completeness(base_market(space), agents);
    CHECK_FALSE(base.is_oc);
    CHECK(base.consensus > 1e-4);
}

TEST_CASE("pareto search finds autarky improvements and respects optima") {
    EventSpace space(1);
    const std::vector<Agent> agents = {cara(space, 1.0, {0.3, 0.7}), cara(space, 1.0, {0.7, 0.3})};
    // Autarky wealth: nobody trades despite opposite beliefs.
    const std::vector<std::vector<double>> autarky(2, std::vector<double>(2, 0.0));
    const auto found = pareto_improvement_search(agents, autarky, 2000, 1e-2, 7);
    REQUIRE(found.has_value());
    CHECK(found->gain_a > 0.0);
    CHECK(found->gain_b > 0.0);
    CHECK(found->delta.size() == 2);

    // The market-clearing split admits no improvement.
    const Market market = base_market(space);
    const auto r = solve_equilibrium(market, agents);
    REQUIRE(r.converged);
    std::vector<std::vector<double>> cleared;
    for (std::size_t i = 0; i < agents.size(); ++i) {
        cleared.push_back(wealth_profile(agents[i], market, r.allocations[i], r.prices));
    }
    CHECK_FALSE(pareto_improvement_search(agents, cleared, 5000, 1e-3, 7).has_value());
}

TEST_CASE("solver reports nonconvergence instead of throwing") {
    EventSpace space(2);
    SolverOptions opts;
    opts.max_iterations = 0;
    // Unequal risk tolerances put the clearing price away from the
    // mean-of-beliefs start, so zero iterations cannot reach it.
    const auto r = solve_equilibrium(
        base_market(space), {cara(space, 1.0, {4, 1, 1, 1}), cara(space, 3.0, {1, 1, 1, 4})},
        opts);
    CHECK_FALSE(r.converged);
    CHECK_FALSE(r.message.empty());
    CHECK(r.residual > 0.0);
}

TEST_CASE("risk-neutral agents make equilibrium meaningless") {
    EventSpace space(1);
    const std::vector<Agent> agents = {
        Agent{.id = "rn",
              .utility = Utility::linear(),
              .belief = JointDistribution::from_weights(space, {1, 1}),
              .endowment = {0, 0}},
        cara(space, 1.0, {1, 1})};
    CHECK_THROWS_AS(solve_equilibrium(base_market(space), agents), UnboundedDemand);
}

TEST_CASE("infeasible log endowments are rejected up front") {
    EventSpace space(1);
    const std::vector<Agent> agents = {
        Agent{.id = "broke",
              .utility = Utility::log(1.0),
              .belief = JointDistribution::from_weights(space, {1, 1}),
              .endowment = {-2.0, 0.0}},
        cara(space, 1.0, {1, 1})};
    CHECK_THROWS_AS(solve_equilibrium(base_market(space), agents), InfeasibleProblem);
}

TEST_CASE("securities nobody can touch settle at one half with no trade") {
    EventSpace space(2);
    // Both agents rule A1 out, so the conditional ticket is inert.
    const Market market(space,
                        {parse_security("A2", space), parse_security("A2|A1", space)});
    const auto r = solve_equilibrium(
        market, {cara(space, 1.0, {3, 0, 1, 0}), cara(space, 1.0, {1, 0, 3, 0})});
    REQUIRE(r.converged);
    CHECK(r.prices[1] == 0.5);
    for (const auto& alloc : r.allocations) CHECK(alloc[1] == 0.0);
    CHECK(r.prices[0] > 0.25);
    CHECK(r.prices[0] < 0.75);
}

TEST_CASE("mixed utility populations clear too") {
    EventSpace space(2);
    const Market market = complete_market(space);
    const std::vector<Agent> agents = {
        Agent{.id = "log",
              .utility = Utility::log(4.0),
              .belief = JointDistribution::from_weights(space, {2, 1, 1, 2}),
              .endowment = {0.5, -0.5, 0.2, -0.2}},
        cara(space, 2.0, {1, 2, 2, 1})};
    const auto r = solve_equilibrium(market, agents);
    REQUIRE(r.converged);
    CHECK(consensus_gap(r).max_gap <= 1e-7);
    CHECK(rn_identity_gap(r, market) <= 1e-8);
    // Clearing is exact security by security.
    for (int k = 0; k < market.size(); ++k) {
        double net = 0.0;
        for (const auto& alloc : r.allocations) net += alloc[k];
        CHECK(std::abs(net) <= 1e-8);
    }
}
