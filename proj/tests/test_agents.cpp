#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bnmarket/agents.hpp"
#include "bnmarket/errors.hpp"
#include "bnmarket/rng.hpp"

using namespace bnm;

namespace {

Agent cara_agent(const EventSpace& space, double c, std::vector<double> weights,
                 std::vector<double> endowment = {}) {
    if (endowment.empty()) endowment.assign(space.num_states(), 0.0);
    return Agent{.id = "t",
                 .utility = Utility::exponential(c),
                 .belief = JointDistribution::from_weights(space, std::move(weights)),
                 .endowment = std::move(endowment)};
}

}  // namespace

TEST_CASE("utility parameter validation") {
    CHECK_THROWS_AS(Utility::exponential(0.0), std::invalid_argument);
    CHECK_THROWS_AS(Utility::exponential(-1.0), std::invalid_argument);
    CHECK_THROWS_AS(Utility::log(0.0), std::invalid_argument);
    CHECK_THROWS_AS(Utility::log(-2.0), std::invalid_argument);
    CHECK(Utility::exponential(2.0).risk_aversion() == 2.0);
    CHECK(Utility::log(3.0).wealth_base() == 3.0);
}

TEST_CASE("utility derivatives match finite differences") {
    const double h = 1e-6;
    for (const Utility& u :
         {Utility::linear(), Utility::exponential(1.7), Utility::log(2.5)}) {
        for (double w : {-0.5, 0.0, 0.8, 2.0}) {
            if (!u.feasible(w - h) || !u.feasible(w + h)) continue;
            const double d1 = (u.value(w + h) - u.value(w - h)) / (2 * h);
            const double d2 = (u.value(w + h) - 2 * u.value(w) + u.value(w - h)) / (h * h);
            CHECK(std::abs(u.deriv(w) - d1) <= 1e-6 * (1.0 + std::abs(d1)));
            CHECK(std::abs(u.second(w) - d2) <= 1e-3 * (1.0 + std::abs(d2)));
        }
    }
}

TEST_CASE("feasibility domains") {
    CHECK(Utility::linear().feasible(-1e9));
    CHECK(Utility::exponential(1.0).feasible(-1e9));
    CHECK(Utility::log(2.0).feasible(-1.999));
    CHECK_FALSE(Utility::log(2.0).feasible(-2.0));
    CHECK_FALSE(Utility::log(2.0).feasible(-2.5));
}

TEST_CASE("expected utility of the unit bet") {
    EventSpace space(1);
    const Agent agent = cara_agent(space, 1.0, {1, 1});
    // Wealth 0 in one state, 1 in the other: -(1 + 1/e)/2.
    const double eu = expected_utility(agent, {0.0, 1.0});
    CHECK(eu == doctest::Approx(-(1.0 + std::exp(-1.0)) / 2.0).epsilon(1e-15));
}

TEST_CASE("expected utility skips zero-probability states and guards the domain") {
    EventSpace space(1);
    Agent agent{.id = "log",
                .utility = Utility::log(2.0),
                .belief = JointDistribution(space, {1.0, 0.0}),
                .endowment = {0.0, 0.0}};
    // Infeasible wealth only in the zero-probability state is fine.
    CHECK_NOTHROW(expected_utility(agent, {0.0, -5.0}));
    CHECK_THROWS_AS(expected_utility(agent, {-5.0, 0.0}), InfeasibleWealth);
}

TEST_CASE("risk-neutral distribution tilts toward poor states") {
    EventSpace space(1);
    const Agent agent = cara_agent(space, 1.0, {1, 1});
    const JointDistribution rn = rn_distribution(agent, {0.0, 1.0});
    // rn(1) = e^-1 / (1 + e^-1) = 1/(1+e).
    CHECK(rn.at(1) == doctest::Approx(1.0 / (1.0 + std::exp(1.0))).epsilon(1e-14));
    CHECK(rn.at(0) + rn.at(1) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("cara risk-neutral distribution is invariant to wealth shifts") {
    EventSpace space(2);
    const Agent agent = cara_agent(space, 1.3, {1, 2, 3, 4});
    const std::vector<double> w{0.2, -0.4, 0.9, 0.1};
    std::vector<double> shifted = w;
    for (auto& v : shifted) v += 5.0;
    const JointDistribution a = rn_distribution(agent, w);
    const JointDistribution b = rn_distribution(agent, shifted);
    for (WorldState s = 0; s < 4; ++s) CHECK(std::abs(a.at(s) - b.at(s)) <= 1e-15);
}

TEST_CASE("wealth profile adds settlements to the endowment") {
    EventSpace space(2);
    const Market market = structured_market(Dag::chain(space));
    const Agent agent = cara_agent(space, 1.0, {1, 1, 1, 1}, {1.0, 2.0, 3.0, 4.0});
    const Holdings units{1.0, 0.0, -2.0};
    const PriceVector prices{0.5, 0.2, 0.8};
    const auto wealth = wealth_profile(agent, market, units, prices);
    for (WorldState s = 0; s < 4; ++s) {
        const double settled = portfolio_settle(market, units, prices, s);
        CHECK(wealth[s] == doctest::Approx(agent.endowment[s] + settled).epsilon(1e-15));
    }
}

TEST_CASE("single-security cara demand matches the closed form") {
    EventSpace space(1);
    const Market market = base_market(space);
    // x = (1/c) ln(odds (1-p) / p), odds = pi/(1-pi).
    const Agent agent = cara_agent(space, 2.0, {0.4, 0.6});
    const Holdings x = demand(agent, market, {0.5});
    CHECK(x[0] == doctest::Approx(0.5 * std::log(1.5)).epsilon(1e-9));
    CHECK(x[0] == doctest::Approx(0.2027325540540822).epsilon(1e-9));

    const Agent unit = cara_agent(space, 1.0, {0.4, 0.6});
    CHECK(demand(unit, market, {0.5})[0] ==
          doctest::Approx(0.4054651081081644).epsilon(1e-9));

    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const double pi = rng.uniform(0.1, 0.9);
        const double p = rng.uniform(0.1, 0.9);
        const double c = rng.uniform(0.5, 3.0);
        const Agent a = cara_agent(space, c, {1.0 - pi, pi});
        const double want = std::log(pi * (1.0 - p) / ((1.0 - pi) * p)) / c;
        CHECK(demand(a, market, {p})[0] == doctest::Approx(want).epsilon(1e-9));
    }
}

TEST_CASE("demand first-order conditions certify the maximum under perturbation") {
    EventSpace space(2);
    const Market market = structured_market(Dag::chain(space));
    const Agent agents[] = {
        cara_agent(space, 1.5, {1, 2, 3, 4}, {0.3, -0.2, 0.4, -0.1}),
        Agent{.id = "log",
              .utility = Utility::log(3.0),
              .belief = JointDistribution::from_weights(space, {4, 3, 2, 1}),
              .endowment = {0.1, -0.3, 0.2, 0.0}}};
    const PriceVector prices{0.45, 0.3, 0.7};
    Rng rng(23);
    for (const Agent& agent : agents) {
        const Holdings star = demand(agent, market, prices);
        const double best = expected_utility(agent, wealth_profile(agent, market, star, prices));
        for (int trial = 0; trial < 1000; ++trial) {
            Holdings x = star;
            for (auto& v : x) v += rng.uniform(-1e-3, 1e-3);
            const double eu = expected_utility(agent, wealth_profile(agent, market, x, prices));
            CHECK(eu <= best + 1e-12);
        }
    }
}

TEST_CASE("demand is unbounded for risk-neutral agents and boundary prices") {
    EventSpace space(1);
    const Market market = base_market(space);
    Agent linear{.id = "rn",
                 .utility = Utility::linear(),
                 .belief = JointDistribution::from_weights(space, {1, 1}),
                 .endowment = {0.0, 0.0}};
    CHECK_THROWS_AS(demand(linear, market, {0.4}), UnboundedDemand);
    const Agent cara = cara_agent(space, 1.0, {1, 1});
    CHECK_THROWS_AS(demand(cara, market, {0.0}), UnboundedDemand);
    CHECK_THROWS_AS(demand(cara, market, {1.0}), UnboundedDemand);
}

TEST_CASE("securities on conditions the agent rules out are held at zero") {
    EventSpace space(2);
    // Pr(A1) = 0: the A2-given-A1 ticket cannot matter to this agent.
    const Market market(space, {parse_security("A2|A1", space)});
    const Agent agent = cara_agent(space, 1.0, {1, 0, 1, 0});
    const Holdings x = demand(agent, market, {0.5});
    CHECK(x[0] == 0.0);
    const DemandResult r = solve_demand(agent, market, {0.5});
    CHECK(r.foc_gap <= 1e-10);
}

TEST_CASE("wealth-difference invariance holds exactly for separable cara wealth") {
    EventSpace space(3);
    const Agent agent = cara_agent(space, 1.2, {1, 1, 1, 1, 1, 1, 1, 1});
    Rng rng(31);
    // w(s) = f(A1,A2) + g(A2,A3): differences in A3 depend on A2 alone.
    double f[4], g[4];
    for (int i = 0; i < 4; ++i) {
        f[i] = rng.uniform(-1.0, 1.0);
        g[i] = rng.uniform(-1.0, 1.0);
    }
    std::vector<double> wealth(8);
    for (WorldState s = 0; s < 8; ++s) {
        wealth[s] = f[pack_bits(s, 0b011u)] + g[pack_bits(s, 0b110u)];
    }
    CHECK(mu_ratio_invariant(agent, wealth, 2, 0b010u, 0b001u));
    CHECK(mu_ratio_invariant(agent, wealth, 0, 0b010u, 0b100u));

    // A generic table has no such structure.
    std::vector<double> messy(8);
    for (auto& v : messy) v = rng.uniform(-1.0, 1.0);
    CHECK_FALSE(mu_ratio_invariant(agent, messy, 2, 0b010u, 0b001u));
}

TEST_CASE("risk-neutral i-map check at separable holdings") {
    EventSpace space(3);
    const Dag chain = Dag::chain(space);
    const Market market = structured_market(chain);
    const BayesNet bn(chain, {{0, {0.6}}, {1, {0.2, 0.7}}, {2, {0.3, 0.8}}});
    Agent agent{.id = "s",
                .utility = Utility::exponential(1.0),
                .belief = joint_from_bn(bn),
                .endowment = std::vector<double>(8, 0.0)};
    const PriceVector prices{0.5, 0.4, 0.6, 0.35, 0.65};
    const Holdings units = demand(agent, market, prices);
    CHECK(rn_imap_check(agent, market, units, prices, chain, 1e-8));
}
