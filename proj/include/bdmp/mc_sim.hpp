#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bdmp/model.hpp"

namespace bdmp {

// Delay distribution for the simulator. Deterministic delays exist only
// here; the analytic engines require the Erlang variant of the model.
struct DelayLaw {
    enum class Kind { Exponential, Erlang, Deterministic };
    Kind kind = Kind::Exponential;
    double rate = 0.0;      // exponential rate or erlang per-phase rate
    int phases = 1;         // erlang
    double duration = 0.0;  // deterministic

    static DelayLaw exponential(double rate) { return {Kind::Exponential, rate, 1, 0.0}; }
    static DelayLaw erlang(int phases, double rate) { return {Kind::Erlang, rate, phases, 0.0}; }
    static DelayLaw deterministic(double duration) {
        return {Kind::Deterministic, 0.0, 1, duration};
    }
};

// Handling of deterministic depletion under intermittent activation:
// Optimistic restores full capacity whenever the component is deactivated,
// Pessimistic accumulates active time until repair.
enum class BatteryPolicy { Optimistic, Pessimistic };

struct LeafLawOverride {
    std::optional<DelayLaw> failure;  // replaces the active-failure law
    std::optional<DelayLaw> repair;
};

struct SimConfig {
    uint64_t trials = 100000;
    double horizon = 0.0;  // hours
    uint64_t seed = 1;
    double ci_level = 0.90;
    BatteryPolicy battery_policy = BatteryPolicy::Optimistic;
    int threads = 0;  // 0 = $BDMP_THREADS or hardware concurrency
    std::map<std::string, LeafLawOverride> law_overrides;
};

struct SimReport {
    double estimate = 0.0;
    double halfwidth = 0.0;
    double ci_level = 0.90;
    uint64_t trials = 0;
    uint64_t failed = 0;
    uint64_t seed = 0;
    // Failure-story label sequences seen at least twice, most frequent first.
    std::vector<std::pair<std::string, uint64_t>> tallies;
    double wall_seconds = 0.0;
};

// Event-driven Monte Carlo directly on the BDMP semantics. Per-trial random
// streams are derived from (seed, trial index), so the report is
// bit-identical for a given (seed, trials) regardless of thread count.
SimReport simulate(const Bdmp& model, const SimConfig& config);

// Normal-approximation halfwidth z(level) * sqrt(p(1-p)/n).
double ci_halfwidth(double p_hat, uint64_t n, double level);

// Inverse standard normal CDF (two-sided z for ci_halfwidth).
double normal_quantile(double p);

}  // namespace bdmp
