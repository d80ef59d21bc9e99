#include "bnmarket/joint.hpp"

#include <cmath>
#include <stdexcept>

#include "bnmarket/errors.hpp"

namespace bnm {

JointDistribution::JointDistribution(EventSpace space, std::vector<double> probs)
    : space_(std::move(space)), probs_(std::move(probs)) {
    if (probs_.size() != space_.num_states()) {
        throw std::invalid_argument("JointDistribution: table size " +
                                    std::to_string(probs_.size()) + " != 2^M");
    }
    double sum = 0.0;
    for (double p : probs_) {
        if (!(p >= 0.0) || !std::isfinite(p)) {
            throw std::invalid_argument("JointDistribution: negative or non-finite entry");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
        throw std::invalid_argument("JointDistribution: entries sum to " + std::to_string(sum));
    }
}

JointDistribution JointDistribution::from_weights(EventSpace space, std::vector<double> weights) {
    double sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw std::invalid_argument("JointDistribution: negative or non-finite weight");
        }
        sum += w;
    }
    if (sum <= 0.0) throw std::invalid_argument("JointDistribution: all weights zero");
    for (double& w : weights) w /= sum;
    // Absorb residual round-off into the largest entry so the table passes
    // the 1e-12 normalization check exactly.
    double resid = 1.0;
    std::size_t top = 0;
    for (std::size_t s = 0; s < weights.size(); ++s) {
        resid -= weights[s];
        if (weights[s] > weights[top]) top = s;
    }
    weights[top] += resid;
    return JointDistribution(std::move(space), std::move(weights));
}

JointDistribution JointDistribution::uniform(EventSpace space) {
    const std::uint32_t n = space.num_states();
    return JointDistribution(std::move(space), std::vector<double>(n, 1.0 / n));
}

double prob(const JointDistribution& dist, const EventExpr& e) {
    double sum = 0.0;
    const std::uint32_t n = dist.space().num_states();
    for (WorldState s = 0; s < n; ++s) {
        if (e.satisfied_by(s)) sum += dist.at(s);
    }
    return sum;
}

double conditional(const JointDistribution& dist, const EventExpr& target,
                   const EventExpr& given) {
    const double pg = prob(dist, given);
    if (pg <= 0.0) {
        throw ZeroConditioningEvent("conditional: conditioning event '" +
                                    to_string(given, dist.space()) + "' has zero mass");
    }
    if (target.contradicts(given)) return 0.0;
    return prob(dist, target.conjoin(given)) / pg;
}

bool check_ci(const JointDistribution& dist, int j, std::uint32_t w_mask, std::uint32_t x_mask,
              double tol) {
    const std::uint32_t j_bit = 1u << j;
    if ((w_mask & j_bit) || (x_mask & j_bit) || (w_mask & x_mask)) {
        throw std::invalid_argument("check_ci: j, W, X must be pairwise disjoint");
    }
    const EventExpr aj = EventExpr::literal(j, true);
    for (const EventExpr& w : all_assignments(w_mask)) {
        const double pw = prob(dist, w);
        if (pw <= 0.0) continue;
        const double pj_w = prob(dist, aj.conjoin(w)) / pw;
        for (const EventExpr& x : all_assignments(x_mask)) {
            const EventExpr wx = w.conjoin(x);
            const double pwx = prob(dist, wx);
            if (pwx <= 0.0) continue;
            const double pj_wx = prob(dist, aj.conjoin(wx)) / pwx;
            if (std::abs(pj_wx - pj_w) > tol) return false;
        }
    }
    return true;
}

}  // namespace bnm
