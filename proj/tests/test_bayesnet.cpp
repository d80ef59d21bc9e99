#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bnmarket/bayesnet.hpp"
#include "bnmarket/errors.hpp"
#include "bnmarket/rng.hpp"

using namespace bnm;

namespace {

// Independent joint synthesis used as the inference oracle: walks the state
// bits directly instead of going through joint_from_bn.
double oracle_state_prob(const BayesNet& bn, WorldState state) {
    double p = 1.0;
    for (int k = 0; k < bn.space().size(); ++k) {
        const double row = bn.cpt(k).rows[pack_bits(state, bn.dag().parent_mask(k))];
        p *= ((state >> k) & 1u) ? row : 1.0 - row;
    }
    return p;
}

double oracle_infer(const BayesNet& bn, const EventExpr& target, const EventExpr& given) {
    double num = 0.0, den = 0.0;
    for (WorldState s = 0; s < bn.space().num_states(); ++s) {
        if (!given.satisfied_by(s)) continue;
        const double p = oracle_state_prob(bn, s);
        den += p;
        if (target.satisfied_by(s)) num += p;
    }
    return num / den;
}

BayesNet random_bn(const Dag& dag, Rng& rng) {
    std::vector<Cpt> cpts;
    for (int k = 0; k < dag.size(); ++k) {
        Cpt t;
        t.node = k;
        for (int r = 0; r < (1 << dag.num_parents(k)); ++r) {
            t.rows.push_back(rng.uniform(0.05, 0.95));
        }
        cpts.push_back(std::move(t));
    }
    return BayesNet(dag, std::move(cpts));
}

Dag random_dag(const EventSpace& space, Rng& rng) {
    std::vector<std::vector<int>> parents(space.size());
    for (int k = 1; k < space.size(); ++k) {
        for (int j = 0; j < k; ++j) {
            if (rng.uniform() < 0.4) parents[k].push_back(j);
        }
    }
    return Dag(space, std::move(parents));
}

}  // namespace

TEST_CASE("dag construction enforces topological parent indices") {
    EventSpace space(3);
    CHECK_THROWS_AS(Dag(space, {{}, {1}, {}}), std::invalid_argument);
    CHECK_THROWS_AS(Dag(space, {{}, {0}, {2}}), std::invalid_argument);
    CHECK_THROWS_AS(Dag(space, {{}, {0, 0}, {}}), std::invalid_argument);
    CHECK_THROWS_AS(Dag(space, {{}, {0}}), std::invalid_argument);
    const Dag d(space, {{}, {0}, {0, 1}});
    CHECK(d.has_edge(0, 1));
    CHECK(d.has_edge(1, 2));
    CHECK_FALSE(d.has_edge(1, 0));
    CHECK(d.parent_mask(2) == 0b011u);
    CHECK(d.num_parents(2) == 2);
}

TEST_CASE("factory structures and their conditional-probability counts") {
    EventSpace s3(3), s5(5);
    CHECK(Dag::edgeless(s3).security_count() == 3);
    CHECK(Dag::chain(s3).security_count() == 5);
    CHECK(Dag::fully_connected(s3).security_count() == 7);
    CHECK(Dag::chain(s5).security_count() == 9);
    CHECK(Dag::fully_connected(s5).security_count() == 31);
    for (int k = 1; k < 5; ++k) CHECK(Dag::chain(s5).parents(k) == std::vector<int>{k - 1});
}

TEST_CASE("bayes net validation") {
    EventSpace space(2);
    const Dag chain = Dag::chain(space);
    CHECK_THROWS_AS(BayesNet(chain, {{0, {0.5}}}), std::invalid_argument);
    CHECK_THROWS_AS(BayesNet(chain, {{0, {0.5}}, {1, {0.2}}}), std::invalid_argument);
    CHECK_THROWS_AS(BayesNet(chain, {{0, {0.5}}, {1, {0.2, 1.5}}}), std::invalid_argument);
    CHECK_THROWS_AS(BayesNet(chain, {{1, {0.5}}, {0, {0.2, 0.8}}}), std::invalid_argument);
    CHECK_NOTHROW(BayesNet(chain, {{0, {0.5}}, {1, {0.0, 1.0}}}));
}

TEST_CASE("chain-rule product on the two-event chain") {
    EventSpace space(2);
    const BayesNet bn(Dag::chain(space), {{0, {0.5}}, {1, {0.2, 0.8}}});
    const JointDistribution joint = joint_from_bn(bn);
    CHECK(joint.at(0b00) == doctest::Approx(0.40).epsilon(1e-15));
    CHECK(joint.at(0b01) == doctest::Approx(0.10).epsilon(1e-15));
    CHECK(joint.at(0b10) == doctest::Approx(0.10).epsilon(1e-15));
    CHECK(joint.at(0b11) == doctest::Approx(0.40).epsilon(1e-15));
    CHECK(bn.row_for_state(1, 0b01) == 0.8);
    CHECK(bn.row_for_state(1, 0b00) == 0.2);
}

TEST_CASE("inference agrees with independent enumeration to 1e-12") {
    Rng rng(2026);
    int done = 0;
    while (done < 200) {
        const EventSpace space(2 + rng.below(5));  // M in 2..6
        const Dag dag = random_dag(space, rng);
        const BayesNet bn = random_bn(dag, rng);
        for (int q = 0; q < 5; ++q, ++done) {
            const std::uint32_t all = (1u << space.size()) - 1u;
            const std::uint32_t tm = 1u + static_cast<std::uint32_t>(rng.next() % all);
            std::uint32_t gm = static_cast<std::uint32_t>(rng.next()) & all & ~tm;
            const EventExpr target = EventExpr::assignment(
                tm, static_cast<std::uint32_t>(rng.next()));
            const EventExpr given =
                EventExpr::assignment(gm, static_cast<std::uint32_t>(rng.next()));
            const double got = infer(bn, target, given);
            const double want = oracle_infer(bn, target, given);
            CHECK(std::abs(got - want) <= 1e-12);
        }
    }
}

TEST_CASE("inference rejects zero-mass conditioning") {
    EventSpace space(2);
    const BayesNet bn(Dag::chain(space), {{0, {1.0}}, {1, {0.5, 0.5}}});
    CHECK_THROWS_AS(infer(bn, EventExpr::literal(1, true), EventExpr::literal(0, false)),
                    ZeroConditioningEvent);
}

TEST_CASE("decomposability requires pairwise-adjacent parents") {
    EventSpace space(3);
    CHECK(is_decomposable(Dag::chain(space)));
    CHECK(is_decomposable(Dag::fully_connected(space)));
    CHECK(is_decomposable(Dag::edgeless(space)));
    // Collider A1 -> A3 <- A2 without the A1-A2 edge.
    CHECK_FALSE(is_decomposable(Dag(space, {{}, {}, {0, 1}})));
}

TEST_CASE("i-map recognition on chains") {
    EventSpace space(3);
    const Dag chain = Dag::chain(space);
    Rng rng(5);
    const JointDistribution chain_dist = joint_from_bn(random_bn(chain, rng));
    CHECK(is_imap(chain, chain_dist));
    CHECK(is_imap(Dag::fully_connected(space), chain_dist));

    // A distribution with A1-A3 dependence given A2 is not chain-structured.
    std::vector<double> w(8, 0.05);
    w[0b000] = 2.0;
    w[0b101] = 2.0;
    const JointDistribution tangled = JointDistribution::from_weights(space, w);
    CHECK_FALSE(is_imap(chain, tangled));
    CHECK(is_imap(Dag::fully_connected(space), tangled));
}

TEST_CASE("cpt fitting recovers i-mapped distributions exactly") {
    EventSpace space(4);
    Rng rng(99);
    const Dag dag(space, {{}, {0}, {0}, {1, 2}});
    const JointDistribution dist = joint_from_bn(random_bn(dag, rng));
    const BayesNet fit = fit_cpts(dag, dist);
    const JointDistribution back = joint_from_bn(fit);
    for (WorldState s = 0; s < space.num_states(); ++s) {
        CHECK(std::abs(back.at(s) - dist.at(s)) <= 1e-12);
    }
}

TEST_CASE("cpt fitting fills unreachable rows with one half") {
    EventSpace space(2);
    // A1 is always true, so the row of A2 given !A1 is unconstrained.
    const JointDistribution d(space, {0.0, 0.3, 0.0, 0.7});
    const BayesNet fit = fit_cpts(Dag::chain(space), d);
    CHECK(fit.cpt(0).rows[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(fit.cpt(1).rows[0] == 0.5);
    CHECK(fit.cpt(1).rows[1] == doctest::Approx(0.7).epsilon(1e-12));
}
