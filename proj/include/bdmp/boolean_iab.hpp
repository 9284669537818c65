#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bdmp/model.hpp"

namespace bdmp {

// Coherent boolean formula over leaf ids (positive literals only).
struct BoolFormula {
    enum class Kind { Literal, And, Or };
    Kind kind = Kind::Literal;
    std::string leaf;                // Literal
    std::vector<BoolFormula> args;   // And / Or

    static BoolFormula literal(std::string id);
    static BoolFormula make_and(std::vector<BoolFormula> args);
    static BoolFormula make_or(std::vector<BoolFormula> args);
};

// Static over-approximation of the top event: gates map structurally, pand
// becomes and, triggers are erased (they only constrain order and timing).
BoolFormula structure_function(const Bdmp& model);

using LeafSet = std::vector<std::string>;  // sorted leaf ids

struct MocusOptions {
    double cutoff = 0.0;  // on the conservative cut-set probability estimate
    double t = 0.0;       // mission time used by the estimate
    const Bdmp* model = nullptr;  // parameters for the estimate; required when cutoff > 0
};

struct MocusResult {
    std::vector<LeafSet> cutsets;  // minimal, sorted
    double discarded_bound = 0.0;  // upper bound on discarded probability mass
    uint64_t expanded = 0;
};

// Top-down MOCUS expansion with subsumption removal. With cutoff > 0,
// partially generated cut sets are discarded against a conservative
// estimate that never drops below any completion's final value.
MocusResult mocus_mcs(const BoolFormula& formula, const MocusOptions& opts = {});

struct OnDemandBarrier {
    std::string id;
    double gamma = 0.0;
    double mu = 0.0;
};

struct InFunctionBarrier {
    std::string id;
    double lambda = 0.0;
    double mu = 0.0;
};

// One initiating event plus the barriers that must all be down before the
// initiator is repaired.
struct CutSet {
    std::string initiator;
    double lambda_i = 0.0;
    double mu_i = 0.0;
    std::vector<OnDemandBarrier> on_demand;
    std::vector<InFunctionBarrier> in_function;

    LeafSet events() const;
};

struct ClassifiedCutSets {
    std::vector<CutSet> cutsets;
    std::vector<Diagnostic> dropped;  // cut sets without exactly one initiator
};

// Split each cut set into initiator + barriers. Initiators must be exp
// leaves flagged `initiator`; on-demand leaves become on-demand barriers and
// everything else an in-function barrier. Repair-crew couplings are ignored
// with a warning (set the coupled repair rates to 0 to model them safely).
ClassifiedCutSets classify_cutsets(const Bdmp& model, const std::vector<LeafSet>& mcs,
                                   std::vector<Diagnostic>* warnings = nullptr);

// Frequency of one cut set: lambda_i times the probability that the
// absorbing chain started right after the initiating event reaches the state
// with every cut-set component down before any move to the safe state.
// Quantified by an exact absorption solve on that chain.
double iab_cutset_rate(const CutSet& cs);

struct IabResult {
    std::vector<CutSet> cutsets;       // ranked by frequency, descending
    std::vector<double> frequency;     // per cut set, aligned with `cutsets`
    double lambda_eq = 0.0;            // sum of frequencies (per hour)
    double unreliability = 0.0;        // 1 - exp(-lambda_eq * t)
    double t = 0.0;
    double discarded_bound = 0.0;      // carried over from MCS generation
};

IabResult iab_system(std::vector<CutSet> mcs, double t);

// Exact probability of the union of cut sets from per-leaf probabilities,
// by a reduced ordered BDD (variables ordered by descending probability).
struct BddProbability {
    double probability = 0.0;
    size_t node_count = 0;
};

BddProbability mcs_bdd_probability(const std::vector<LeafSet>& mcs,
                                   const std::map<std::string, double>& leaf_prob);

// (rare-event sum, min-cut upper bound)
std::pair<double, double> mcs_bounds(const std::vector<LeafSet>& mcs,
                                     const std::map<std::string, double>& leaf_prob);

// Non-repairable leaf probability at mission time t: 1 - exp(-lambda t) for
// exp, gamma for on-demand, the Erlang CDF for phase-type leaves.
double leaf_probability_at(const Leaf& leaf, double t);

}  // namespace bdmp
