#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bdmp/state_space.hpp"

namespace bdmp {

// Exploration limits. 0 means unlimited for the counters; sequences whose
// probability drops to min_prob or below are truncated.
struct CutoffCriteria {
    double min_prob = 0.0;
    int max_len = 0;
    int max_failures = 0;
    int max_repairs = 0;
};

enum class SequenceKind { Complete, Loop, Truncated };

struct Sequence {
    std::vector<int> transitions;  // indices into ctmc.transitions
    double embedded_prob = 1.0;
    double timed_prob = 0.0;  // NS only
    SequenceKind kind = SequenceKind::Complete;

    bool complete() const { return kind == SequenceKind::Complete; }
    std::vector<std::string> labels(const CtmcSparse& ctmc) const;
};

// NRI: upper bound 1 - exp(-Lambda*epsilon*t) where Lambda is the exit rate
// of the initial state and epsilon the no-return failure probability of the
// embedded chain (exact, loops included). The listing enumerates loop-free
// paths; branches returning to the initial state are not sequences.
struct NriReport {
    double lambda = 0.0;
    double epsilon = 0.0;
    double bound = 0.0;
    std::vector<Sequence> sequences;  // goal-terminated, ranked
    std::vector<Sequence> explored;   // every explored sequence, any kind
    double discarded_mass = 0.0;      // epsilon not covered by the listing
    uint64_t truncated_count = 0;
};

// NS: exhaustive sequence-tree exploration with cutoffs. Truncated
// sequences are counted as failures, which makes `upper` safe.
struct NsReport {
    double lower = 0.0;
    double upper = 0.0;
    std::vector<Sequence> sequences;  // complete, ranked by timed_prob
    uint64_t explored_count = 0;
    uint64_t truncated_count = 0;
    double truncated_mass = 0.0;
    bool partial = false;  // exploration budget hit; bounds remain valid
};

NriReport explore_nri(const CtmcSparse& ctmc, double t, const CutoffCriteria& cutoff);

NsReport explore_ns(const CtmcSparse& ctmc, double t, const CutoffCriteria& cutoff,
                    uint64_t node_budget = 4'000'000);

// Probability that the path completes within t: product of embedded jump
// probabilities times the hypoexponential CDF over the sojourn rates of the
// visited states (the final state's sojourn is not part of completion).
double sequence_time_prob(const CtmcSparse& ctmc, std::span<const int> transitions, double t);

// CDF at t of a sum of independent exponentials. Evaluated by uniformizing
// the path chain, which stays stable for repeated or clustered rates.
double hypoexp_cdf(std::vector<double> rates, double t, double tol = 1e-13);

}  // namespace bdmp
