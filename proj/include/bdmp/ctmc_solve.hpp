#pragma once

#include <vector>

#include "bdmp/state_space.hpp"

namespace bdmp {

// Uniformized chain: all exit rates normalized to `rate` by self-loops;
// pbar rows are stochastic. degenerate marks an all-absorbing chain (r = 0).
struct UniformizedChain {
    double rate = 0.0;
    int n = 0;
    bool degenerate = false;
    std::vector<int> row_start;  // CSR over (col, prob), self-loops included
    std::vector<int> col;
    std::vector<double> prob;
};

// Truncated Poisson(rt) weights on [left, right] with mass >= 1 - tol.
struct FoxGlynn {
    int left = 0;
    int right = 0;
    std::vector<double> weights;  // weights[k - left] = Poisson(rt){k}
};

struct TransientResult {
    double t = 0.0;
    std::vector<double> distribution;
    double goal_probability = 0.0;
    int left = 0;
    int right = 0;
    double tol = 0.0;
};

// Copy of the chain with all outgoing transitions of `goals` removed.
// Idempotent; `goals` need not match ctmc.goal.
CtmcSparse make_absorbing(const CtmcSparse& ctmc, const std::vector<int>& goals);

UniformizedChain uniformize(const CtmcSparse& ctmc);

// Stable Poisson truncation: weights are computed by recurrence around the
// mode in a scaled domain, so very large rt neither overflows nor underflows.
FoxGlynn poisson_weights(double rt, double tol);

// Transient distribution at time t by uniformization with Fox-Glynn weights.
// goal_probability sums the distribution over ctmc.goal.
TransientResult transient(const CtmcSparse& ctmc, double t, double tol = 1e-10);

// Probability, per state, of reaching `targets` before touching `taboo`,
// on the embedded jump chain. Loops are handled exactly by the linear solve.
std::vector<double> absorption_probabilities(const CtmcSparse& ctmc,
                                             const std::vector<int>& targets,
                                             const std::vector<int>& taboo);

}  // namespace bdmp
