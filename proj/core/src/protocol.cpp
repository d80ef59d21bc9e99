#include "bnmarket/protocol.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "bnmarket/errors.hpp"

namespace bnm {

namespace {

constexpr double kProbeFloor = 1e-6;

bool is_literal_family_member(const Security& sec, int* node, std::uint32_t* parent_mask) {
    if (std::popcount(sec.pay.mask) != 1 || sec.pay.value != sec.pay.mask) return false;
    const int k = std::countr_zero(sec.pay.mask);
    if (sec.cond.mask >= sec.pay.mask) return false;
    *node = k;
    *parent_mask = sec.cond.mask;
    return true;
}

// Per node, the largest parent set whose full assignment family is listed;
// ties go to the mask with the highest-indexed events.  The base security is
// the empty-set family, so every node has at least that.
std::vector<std::uint32_t> canonical_parent_masks(const std::vector<Security>& listed, int m) {
    std::vector<std::map<std::uint32_t, int>> counts(m);
    for (const Security& sec : listed) {
        int node = 0;
        std::uint32_t pm = 0;
        if (is_literal_family_member(sec, &node, &pm)) ++counts[node][pm];
    }
    std::vector<std::uint32_t> best(m, 0);
    for (int k = 0; k < m; ++k) {
        for (const auto& [pm, cnt] : counts[k]) {
            if (cnt != 1 << std::popcount(pm)) continue;
            const auto rank = [](std::uint32_t mask) {
                return std::make_pair(std::popcount(mask), mask);
            };
            if (rank(pm) > rank(best[k])) best[k] = pm;
        }
    }
    return best;
}

Security base_security(int k) {
    return Security{EventExpr::literal(k, true), EventExpr::sure()};
}

}  // namespace

double probe_demand(const Agent& agent, const Market& market, const PriceVector& prices,
                    const Security& candidate, double probe_price,
                    const DemandOptions& options) {
    const Market extended = market.with_appended(candidate);
    PriceVector p = prices;
    p.push_back(probe_price);
    return demand(agent, extended, p, options).back();
}

ProtocolState run_protocol(const std::vector<Agent>& agents, const EventSpace& space,
                           const ProtocolOptions& options) {
    const int m = space.size();
    if (agents.empty()) throw std::invalid_argument("need at least one agent");

    std::vector<Security> listed;
    for (int k = 0; k < m; ++k) listed.push_back(base_security(k));

    std::map<std::string, int> retract_count;
    std::set<std::string> frozen;
    const DemandOptions probe_opts{options.solver.foc_tol, options.solver.max_demand_iterations};

    std::vector<RoundRecord> history;
    bool completed = false;

    // Round state carried out of the loop for the terminal report.
    std::vector<std::uint32_t> pmask(m, 0);
    PriceVector listed_prices;
    std::vector<Holdings> listed_allocs;
    EquilibriumResult result;

    for (int round = 0;; ++round) {
        pmask = canonical_parent_masks(listed, m);
        std::vector<std::vector<int>> parents(m);
        for (int k = 0; k < m; ++k) {
            for (int j = 0; j < k; ++j) {
                if (pmask[k] & (1u << j)) parents[k].push_back(j);
            }
        }
        const Dag dag(space, parents);
        const Market canonical(dag);
        std::vector<Security> solve_secs = canonical.securities();
        for (const Security& sec : listed) {
            if (canonical.find(sec) >= 0) continue;
            int node = 0;
            std::uint32_t pm = 0;
            const bool superseded_base =
                is_literal_family_member(sec, &node, &pm) && pm == 0 && pmask[node] != 0;
            if (!superseded_base) solve_secs.push_back(sec);
        }
        const Market solve_market = static_cast<int>(solve_secs.size()) == canonical.size()
                                        ? canonical
                                        : Market(space, solve_secs);
        result = solve_equilibrium(solve_market, agents, options.solver);

        PriceVector canonical_prices(result.prices.begin(),
                                     result.prices.begin() + canonical.size());
        const JointDistribution pr0 = state_prices(canonical_prices, canonical);

        listed_prices.assign(listed.size(), 0.0);
        listed_allocs.assign(agents.size(), Holdings(listed.size(), 0.0));
        for (std::size_t i = 0; i < listed.size(); ++i) {
            if (const int idx = solve_market.find(listed[i]); idx >= 0) {
                listed_prices[i] = result.prices[idx];
                for (std::size_t a = 0; a < agents.size(); ++a) {
                    listed_allocs[a][i] = result.allocations[a][idx];
                }
            } else {
                // Superseded base: priced off the canonical structure.
                listed_prices[i] = conditional(pr0, listed[i].pay, listed[i].cond);
            }
        }

        RoundRecord record;
        record.market = listed;
        record.prices = listed_prices;
        record.consensus = consensus_gap(result).max_gap;
        record.residual = result.residual;
        record.solver_converged = result.converged;

        if (round >= options.max_rounds) break;

        // Creations: refine each node's family one conditioning event at a
        // time, all candidates judged against this round's equilibrium.
        const auto listed_has = [&](const Security& sec) {
            return std::find(listed.begin(), listed.end(), sec) != listed.end();
        };
        for (int k = 0; k < m; ++k) {
            for (int l = 0; l < k; ++l) {
                if (pmask[k] & (1u << l)) continue;
                const std::uint32_t target_mask = pmask[k] | (1u << l);
                for (const EventExpr& w : all_assignments(target_mask)) {
                    const Security cand{EventExpr::literal(k, true), w};
                    if (listed_has(cand) || frozen.count(to_string(cand, space))) continue;
                    double probe = std::popcount(target_mask) == 1
                                       ? listed_prices[k]
                                       : conditional(pr0, cand.pay, cand.cond);
                    probe = std::clamp(probe, kProbeFloor, 1.0 - kProbeFloor);
                    bool wanted = false;
                    for (const Agent& agent : agents) {
                        try {
                            if (std::abs(probe_demand(agent, solve_market, result.prices, cand,
                                                      probe, probe_opts)) >
                                options.demand_eps) {
                                wanted = true;
                            }
                        } catch (const UnboundedDemand&) {
                            wanted = true;  // insatiable demand still counts
                        } catch (const NoConvergence&) {
                        }
                        if (wanted) break;
                    }
                    if (wanted) record.created.push_back(cand);
                }
            }
        }

        // Retractions: non-base securities nobody holds.
        for (std::size_t i = 0; i < listed.size(); ++i) {
            if (listed[i].cond.is_sure()) continue;
            bool held = false;
            for (const auto& alloc : listed_allocs) {
                if (std::abs(alloc[i]) > options.demand_eps) {
                    held = true;
                    break;
                }
            }
            if (!held) record.retracted.push_back(listed[i]);
        }

        const bool quiet = record.created.empty() && record.retracted.empty();
        history.push_back(record);
        if (quiet) {
            completed = true;
            break;
        }
        for (const Security& sec : record.retracted) {
            listed.erase(std::find(listed.begin(), listed.end(), sec));
            if (++retract_count[to_string(sec, space)] >= 2) {
                frozen.insert(to_string(sec, space));
            }
        }
        for (const Security& sec : record.created) listed.push_back(sec);
    }

    std::vector<std::vector<int>> parents(m);
    for (int k = 0; k < m; ++k) {
        for (int j = 0; j < k; ++j) {
            if (pmask[k] & (1u << j)) parents[k].push_back(j);
        }
    }
    ProtocolState state(Market(space, listed), Dag(space, parents));
    state.prices = listed_prices;
    state.allocations = listed_allocs;
    state.consensus = consensus_gap(result).max_gap;
    state.residual = result.residual;
    state.solver_converged = result.converged;
    state.rounds = static_cast<int>(history.size());
    state.completed = completed;
    state.history = std::move(history);
    return state;
}

}  // namespace bnm
