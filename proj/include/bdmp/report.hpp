#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "bdmp/mc_sim.hpp"
#include "bdmp/model.hpp"
#include "bdmp/seq_explore.hpp"

namespace bdmp {

using Json = nlohmann::ordered_json;

// Shared engine configuration; every CLI flag maps onto one field.
struct RunOptions {
    std::vector<double> times{10000.0};  // mission times (hours)
    double tol = 1e-10;                  // transient tolerance
    CutoffCriteria cutoff;               // sequence exploration cutoffs
    uint64_t ns_budget = 4'000'000;
    double mcs_cutoff = 0.0;  // boolean cutoff on cut-set probability
    bool filtering = false;
    int max_states = 1 << 20;
    uint64_t trials = 100000;
    uint64_t seed = 1;
    double ci_level = 0.90;
    BatteryPolicy battery_policy = BatteryPolicy::Optimistic;
    int threads = 0;
    std::map<std::string, LeafLawOverride> law_overrides;
};

// Known engines: transient, nri, ns, mc, iab, mcs-bdd.
extern const std::vector<std::string> kEngines;

// One AnalysisReport document: engine identity, config echo, one result row
// per mission time, ranked qualitative items, and resource counters. Timing
// lives under the "timing" key only, so reports compare stably without it.
Json run_engine(const Bdmp& model, const std::string& engine, const RunOptions& opts);

Json compare_engines(const Bdmp& model, const std::vector<std::string>& engines,
                     const RunOptions& opts);

// Human-readable table for a compare or single-engine report.
std::string render_table(const Json& report);

// Remove "timing" keys recursively; used for byte-stable comparisons.
Json strip_timing(Json report);

}  // namespace bdmp
