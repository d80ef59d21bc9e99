#include <benchmark/benchmark.h>

#include "bnmarket/equilibrium.hpp"
#include "bnmarket/rng.hpp"

using namespace bnm;

namespace {

BayesNet random_chain_bn(const EventSpace& space, std::uint64_t seed) {
    Rng rng(seed);
    const Dag dag = Dag::chain(space);
    std::vector<Cpt> cpts;
    for (int k = 0; k < dag.size(); ++k) {
        Cpt t;
        t.node = k;
        for (int r = 0; r < (1 << dag.num_parents(k)); ++r) {
            t.rows.push_back(rng.uniform(0.1, 0.9));
        }
        cpts.push_back(std::move(t));
    }
    return BayesNet(dag, std::move(cpts));
}

Agent chain_cara(const EventSpace& space, std::uint64_t seed) {
    return Agent{.id = "b",
                 .utility = Utility::exponential(1.0),
                 .belief = joint_from_bn(random_chain_bn(space, seed)),
                 .endowment = std::vector<double>(space.num_states(), 0.0)};
}

void BM_JointFromBn(benchmark::State& state) {
    const BayesNet bn = random_chain_bn(EventSpace(static_cast<int>(state.range(0))), 7);
    for (auto _ : state) benchmark::DoNotOptimize(joint_from_bn(bn));
}
BENCHMARK(BM_JointFromBn)->DenseRange(4, 16, 4);

void BM_Infer(benchmark::State& state) {
    const EventSpace space(static_cast<int>(state.range(0)));
    const BayesNet bn = random_chain_bn(space, 7);
    const EventExpr target = EventExpr::literal(space.size() - 1, true);
    const EventExpr given = EventExpr::literal(0, true);
    for (auto _ : state) benchmark::DoNotOptimize(infer(bn, target, given));
}
BENCHMARK(BM_Infer)->DenseRange(4, 16, 4);

void BM_CompletenessRank(benchmark::State& state) {
    const Market market = structured_market(Dag::chain(EventSpace(static_cast<int>(state.range(0)))));
    for (auto _ : state) benchmark::DoNotOptimize(completeness_rank(market));
}
BENCHMARK(BM_CompletenessRank)->DenseRange(3, 7, 1);

void BM_Demand(benchmark::State& state) {
    const EventSpace space(static_cast<int>(state.range(0)));
    const Market market = structured_market(Dag::chain(space));
    const Agent agent = chain_cara(space, 11);
    PriceVector prices(market.size(), 0.5);
    for (auto _ : state) benchmark::DoNotOptimize(demand(agent, market, prices));
}
BENCHMARK(BM_Demand)->DenseRange(3, 7, 1);

void BM_SolveEquilibrium(benchmark::State& state) {
    const EventSpace space(static_cast<int>(state.range(0)));
    const Market market = structured_market(Dag::chain(space));
    const std::vector<Agent> agents = {chain_cara(space, 21), chain_cara(space, 22)};
    for (auto _ : state) benchmark::DoNotOptimize(solve_equilibrium(market, agents));
}
BENCHMARK(BM_SolveEquilibrium)->DenseRange(3, 6, 1);

}  // namespace

BENCHMARK_MAIN();
