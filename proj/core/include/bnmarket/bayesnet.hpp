#pragma once

#include <vector>

#include "bnmarket/joint.hpp"

namespace bnm {

// A DAG over the events of an EventSpace.  Indices are required to be
// topologically consistent: every parent of event k has index < k, which
// makes acyclicity structural.
class Dag {
  public:
    // parents[k] lists the parent indices of event k (each < k, no dups).
    Dag(EventSpace space, std::vector<std::vector<int>> parents);

    static Dag edgeless(EventSpace space);
    // parents(k) = {0..k-1}: the trivial I-map of any distribution.
    static Dag fully_connected(EventSpace space);
    // parents(k) = {k-1}.
    static Dag chain(EventSpace space);

    const EventSpace& space() const { return space_; }
    int size() const { return space_.size(); }
    // Sorted ascending.
    const std::vector<int>& parents(int k) const { return parents_[k]; }
    std::uint32_t parent_mask(int k) const { return parent_masks_[k]; }
    int num_parents(int k) const { return static_cast<int>(parents_[k].size()); }
    bool has_edge(int from, int to) const;

    // Total conditional-probability count: sum over nodes of 2^q(k).  Equals
    // the security count of the market structured on this DAG.
    long security_count() const;

    bool operator==(const Dag& other) const {
        return space_ == other.space_ && parents_ == other.parents_;
    }

  private:
    EventSpace space_;
    std::vector<std::vector<int>> parents_;
    std::vector<std::uint32_t> parent_masks_;
};

// Conditional probability table for one node: Pr(A_k = true | parent
// assignment), one row per assignment.  Rows are indexed by the packed
// parent assignment, lowest parent index least significant.
struct Cpt {
    int node = 0;
    std::vector<double> rows;
};

class BayesNet {
  public:
    // One CPT per node, row counts matching 2^q(k), entries in [0,1].
    BayesNet(Dag dag, std::vector<Cpt> cpts);

    const Dag& dag() const { return dag_; }
    const EventSpace& space() const { return dag_.space(); }
    const Cpt& cpt(int k) const { return cpts_[k]; }
    const std::vector<Cpt>& cpts() const { return cpts_; }

    // Pr(A_k = true | the parent assignment read off from state).
    double row_for_state(int k, WorldState state) const {
        return cpts_[k].rows[pack_bits(state, dag_.parent_mask(k))];
    }

  private:
    Dag dag_;
    std::vector<Cpt> cpts_;
};

// Chain-rule product: each state's probability is the product over nodes of
// the matching CPT entry.
JointDistribution joint_from_bn(const BayesNet& bn);

// Pr(target | given) under the network's joint, by full enumeration.
// Throws ZeroConditioningEvent when the conditioning event has no mass.
double infer(const BayesNet& bn, const EventExpr& target, const EventExpr& given);

// True iff every node's parents are pairwise adjacent.
bool is_decomposable(const Dag& dag);

// True iff the ordered Markov conditions hold in dist: for every node k,
// CI[A_k, pa(A_k), pred(A_k) - pa(A_k)] within tol.
bool is_imap(const Dag& dag, const JointDistribution& dist, double tol = kDefaultCiTol);

// Projects a joint onto a structure: CPT rows are the conditionals of dist
// for positive-mass parent assignments, 0.5 for zero-mass ones.  Recovers
// dist exactly (via joint_from_bn) when dag is an I-map of dist.
BayesNet fit_cpts(const Dag& dag, const JointDistribution& dist);

}  // namespace bnm
