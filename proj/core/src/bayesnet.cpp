#include "bnmarket/bayesnet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "bnmarket/errors.hpp"

namespace bnm {

Dag::Dag(EventSpace space, std::vector<std::vector<int>> parents)
    : space_(std::move(space)), parents_(std::move(parents)) {
    const int m = space_.size();
    if (static_cast<int>(parents_.size()) != m) {
        throw std::invalid_argument("parent list count must equal event count");
    }
    parent_masks_.resize(m, 0);
    for (int k = 0; k < m; ++k) {
        auto& pa = parents_[k];
        std::sort(pa.begin(), pa.end());
        std::uint32_t mask = 0;
        for (int p : pa) {
            if (p < 0 || p >= k) {
                throw std::invalid_argument("parent of node " + std::to_string(k) +
                                            " must have smaller index");
            }
            const std::uint32_t bit = 1u << p;
            if (mask & bit) {
                throw std::invalid_argument("duplicate parent for node " + std::to_string(k));
            }
            mask |= bit;
        }
        parent_masks_[k] = mask;
    }
}

Dag Dag::edgeless(EventSpace space) {
    std::vector<std::vector<int>> parents(space.size());
    return Dag(std::move(space), std::move(parents));
}

Dag Dag::fully_connected(EventSpace space) {
    std::vector<std::vector<int>> parents(space.size());
    for (int k = 0; k < static_cast<int>(parents.size()); ++k) {
        for (int p = 0; p < k; ++p) parents[k].push_back(p);
    }
    return Dag(std::move(space), std::move(parents));
}

Dag Dag::chain(EventSpace space) {
    std::vector<std::vector<int>> parents(space.size());
    for (int k = 1; k < static_cast<int>(parents.size()); ++k) parents[k].push_back(k - 1);
    return Dag(std::move(space), std::move(parents));
}

bool Dag::has_edge(int from, int to) const {
    if (to < 0 || to >= size()) return false;
    if (from < 0 || from >= size()) return false;
    return (parent_masks_[to] >> from) & 1u;
}

long Dag::security_count() const {
    long total = 0;
    for (int k = 0; k < size(); ++k) total += 1L << num_parents(k);
    return total;
}

BayesNet::BayesNet(Dag dag, std::vector<Cpt> cpts) : dag_(std::move(dag)), cpts_(std::move(cpts)) {
    const int m = dag_.size();
    if (static_cast<int>(cpts_.size()) != m) {
        throw std::invalid_argument("need exactly one table per node");
    }
    for (int k = 0; k < m; ++k) {
        const Cpt& t = cpts_[k];
        if (t.node != k) throw std::invalid_argument("tables must be listed in node order");
        const std::size_t want = std::size_t{1} << dag_.num_parents(k);
        if (t.rows.size() != want) {
            throw std::invalid_argument("table for node " + std::to_string(k) +
                                        " needs " + std::to_string(want) + " rows");
        }
        for (double p : t.rows) {
            if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
                throw std::invalid_argument("conditional probabilities must lie in [0,1]");
            }
        }
    }
}

JointDistribution joint_from_bn(const BayesNet& bn) {
    const EventSpace& space = bn.space();
    const std::uint32_t n = space.num_states();
    std::vector<double> probs(n);
    for (std::uint32_t s = 0; s < n; ++s) {
        double p = 1.0;
        for (int k = 0; k < space.size(); ++k) {
            const double row = bn.row_for_state(k, s);
            p *= ((s >> k) & 1u) ? row : 1.0 - row;
        }
        probs[s] = p;
    }
    // The chain-rule product sums to 1 exactly in real arithmetic; rounding
    // can leave it a few ulps off, which from_weights absorbs.
    return JointDistribution::from_weights(space, std::move(probs));
}

double infer(const BayesNet& bn, const EventExpr& target, const EventExpr& given) {
    const std::uint32_t n = bn.space().num_states();
    double joint = 0.0;
    double cond = 0.0;
    for (std::uint32_t s = 0; s < n; ++s) {
        if (!given.satisfied_by(s)) continue;
        double p = 1.0;
        for (int k = 0; k < bn.space().size(); ++k) {
            const double row = bn.row_for_state(k, s);
            p *= ((s >> k) & 1u) ? row : 1.0 - row;
        }
        cond += p;
        if (target.satisfied_by(s)) joint += p;
    }
    if (cond <= 0.0) {
        throw ZeroConditioningEvent("conditioning event has zero probability: " +
                                    to_string(given, bn.space()));
    }
    return joint / cond;
}

bool is_decomposable(const Dag& dag) {
    for (int k = 0; k < dag.size(); ++k) {
        const auto& pa = dag.parents(k);
        for (std::size_t i = 0; i < pa.size(); ++i) {
            for (std::size_t j = i + 1; j < pa.size(); ++j) {
                // Parents are ordered, so adjacency can only be pa[i] -> pa[j].
                if (!dag.has_edge(pa[i], pa[j])) return false;
            }
        }
    }
    return true;
}

bool is_imap(const Dag& dag, const JointDistribution& dist, double tol) {
    if (!(dag.space() == dist.space())) {
        throw std::invalid_argument("structure and distribution use different event spaces");
    }
    for (int k = 0; k < dag.size(); ++k) {
        const std::uint32_t pred = (k == 0) ? 0u : ((1u << k) - 1u);
        const std::uint32_t rest = pred & ~dag.parent_mask(k);
        if (rest == 0) continue;
        if (!check_ci(dist, k, dag.parent_mask(k), rest, tol)) return false;
    }
    return true;
}

BayesNet fit_cpts(const Dag& dag, const JointDistribution& dist) {
    if (!(dag.space() == dist.space())) {
        throw std::invalid_argument("structure and distribution use different event spaces");
    }
    std::vector<Cpt> cpts;
    cpts.reserve(dag.size());
    for (int k = 0; k < dag.size(); ++k) {
        const std::uint32_t mask = dag.parent_mask(k);
        Cpt t;
        t.node = k;
        for (const EventExpr& pa : all_assignments(mask)) {
            const double denom = prob(dist, pa);
            if (denom > 0.0) {
                t.rows.push_back(conditional(dist, EventExpr::literal(k, true), pa));
            } else {
                // Unreachable parent assignment: any value reproduces the
                // joint; 0.5 keeps the table well formed.
                t.rows.push_back(0.5);
            }
        }
        cpts.push_back(std::move(t));
    }
    return BayesNet(dag, std::move(cpts));
}

}  // namespace bnm
