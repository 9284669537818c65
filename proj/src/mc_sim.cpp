#include "bdmp/mc_sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <thread>

#include "bdmp/state_space.hpp"

namespace bdmp {

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw NumericError("normal_quantile: p must lie in (0,1)");
    // Bisection on the standard normal CDF expressed through erfc; a handful
    // of extra iterations is cheaper than carrying rational approximations.
    double lo = -40.0, hi = 40.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double cdf = 0.5 * std::erfc(-mid / std::sqrt(2.0));
        (cdf < p ? lo : hi) = mid;
        if (hi - lo < 1e-15) break;
    }
    return 0.5 * (lo + hi);
}

double ci_halfwidth(double p_hat, uint64_t n, double level) {
    if (n < 1) throw NumericError("ci_halfwidth: n must be >= 1");
    const double z = normal_quantile(0.5 + level / 2.0);
    return z * std::sqrt(p_hat * (1.0 - p_hat) / static_cast<double>(n));
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// splitmix64: counter-based, one independent stream per trial.
struct Rng {
    uint64_t state;
    explicit Rng(uint64_t seed, uint64_t trial) : state((seed + 1) * 0x9E3779B97F4A7C15ull + trial) {
        next();
        next();
    }
    uint64_t next() {
        uint64_t z = (state += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }
    // uniform in (0, 1]; never 0 so log() is safe
    double u01() { return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53; }
    double exp(double rate) { return -std::log(u01()) / rate; }
    bool bernoulli(double p) { return u01() <= p; }
};

// Story events, compact: kind in the high bits, leaf index in the low bits.
enum : uint32_t { kEvRepair = 0, kEvPhase = 1, kEvFail = 2, kEvDemandFail = 3, kEvDemandOk = 4 };

struct Accumulator {
    uint64_t failed = 0;
    std::map<std::string, uint64_t> tally;
};

struct Engine {
    const ModelIndex& ix;
    const SimConfig& cfg;
    int nleaves;

    std::vector<DelayLaw> fail_law;    // active-failure law per leaf
    std::vector<DelayLaw> repair_law;  // per leaf; rate 0 = non-repairable

    SystemState state;
    std::vector<uint8_t> value, value_post, active, active_prev, act_snap;
    std::vector<double> next_fail, next_repair;
    std::vector<double> batt_remaining, batt_active_since;
    std::vector<uint32_t> story;
    std::vector<int> pending;

    Engine(const ModelIndex& ix_, const SimConfig& cfg_) : ix(ix_), cfg(cfg_) {
        nleaves = ix.leaf_count();
        fail_law.resize(nleaves);
        repair_law.resize(nleaves);
        next_fail.resize(nleaves);
        next_repair.resize(nleaves);
        batt_remaining.resize(nleaves);
        batt_active_since.resize(nleaves);
        for (int l = 0; l < nleaves; ++l) {
            const Leaf& leaf = ix.leaf(l);
            switch (leaf.kind) {
                case LeafKind::ExpFailure:
                    fail_law[l] = DelayLaw::exponential(leaf.lambda_active);
                    break;
                case LeafKind::PhaseErlang:
                    fail_law[l] = DelayLaw::erlang(leaf.erlang_phases, leaf.erlang_rate);
                    break;
                case LeafKind::OnDemand:
                    fail_law[l] = DelayLaw::exponential(0.0);
                    break;
            }
            repair_law[l] = DelayLaw::exponential(leaf.mu);
            auto it = cfg.law_overrides.find(leaf.id);
            if (it != cfg.law_overrides.end()) {
                if (it->second.failure) fail_law[l] = *it->second.failure;
                if (it->second.repair) repair_law[l] = *it->second.repair;
            }
        }
    }

    double sample_law(Rng& rng, const DelayLaw& law) {
        switch (law.kind) {
            case DelayLaw::Kind::Exponential:
                return law.rate > 0.0 ? rng.exp(law.rate) : kInf;
            case DelayLaw::Kind::Erlang: {
                if (!(law.rate > 0.0)) return kInf;
                double s = 0.0;
                for (int i = 0; i < law.phases; ++i) s += rng.exp(law.rate);
                return s;
            }
            case DelayLaw::Kind::Deterministic:
                return law.duration;
        }
        return kInf;
    }

    // (Re)arm the failure clock of a working leaf after an activation or
    // status change at time t.
    void arm_failure(Rng& rng, int l, double t) {
        const Leaf& leaf = ix.leaf(l);
        if (state.failed(l)) {
            next_fail[l] = kInf;
            return;
        }
        const bool act = active[l] != 0;
        switch (fail_law[l].kind) {
            case DelayLaw::Kind::Exponential: {
                const double rate = act ? fail_law[l].rate : leaf.lambda_standby;
                next_fail[l] = rate > 0.0 ? t + rng.exp(rate) : kInf;
                break;
            }
            case DelayLaw::Kind::Erlang:
                // One clock per phase; standby freezes the current phase.
                next_fail[l] = act && fail_law[l].rate > 0.0 ? t + rng.exp(fail_law[l].rate) : kInf;
                break;
            case DelayLaw::Kind::Deterministic:
                if (act) {
                    if (std::isinf(batt_active_since[l])) batt_active_since[l] = t;
                    next_fail[l] = batt_active_since[l] + batt_remaining[l];
                } else {
                    if (!std::isinf(batt_active_since[l])) {
                        if (cfg.battery_policy == BatteryPolicy::Pessimistic)
                            batt_remaining[l] -= t - batt_active_since[l];
                        else
                            batt_remaining[l] = fail_law[l].duration;
                        batt_active_since[l] = kInf;
                    }
                    next_fail[l] = kInf;
                }
                break;
        }
    }

    bool repairable_law(int l) const {
        const DelayLaw& law = repair_law[l];
        if (law.kind == DelayLaw::Kind::Deterministic) return law.duration > 0.0;
        return law.rate > 0.0;
    }

    void start_repair(Rng& rng, int l, double t) { next_repair[l] = t + sample_law(rng, repair_law[l]); }

    // The failed leaf starts repair right away unless it queues behind
    // another member of its repair group.
    void maybe_start_repair(Rng& rng, int l, double t) {
        if (!repairable_law(l)) return;
        const int g = ix.leaf_group(l);
        if (g < 0 || state.repair_queue[g].front() == l) start_repair(rng, l, t);
    }

    // Apply a status flip plus bookkeeping shared with the CTMC builder.
    void flip(int l, EventKind kind) { apply_leaf_event(ix, state, l, kind, value, value_post); }

    // Returns true when the story failed before the horizon.
    bool run_trial(Rng& rng, bool keep_story) {
        state = initial_state(ix);
        std::fill(next_fail.begin(), next_fail.end(), kInf);
        std::fill(next_repair.begin(), next_repair.end(), kInf);
        std::fill(batt_remaining.begin(), batt_remaining.end(), 0.0);
        std::fill(batt_active_since.begin(), batt_active_since.end(), kInf);
        for (int l = 0; l < nleaves; ++l)
            if (fail_law[l].kind == DelayLaw::Kind::Deterministic)
                batt_remaining[l] = fail_law[l].duration;
        story.clear();

        ix.eval(state.leaf_state.data(), state.pand_prefix.data(), value, active);
        for (int l = 0; l < nleaves; ++l) arm_failure(rng, l, 0.0);

        double t = 0.0;
        while (true) {
            int ev_leaf = -1;
            bool ev_repair = false;
            double ev_t = kInf;
            for (int l = 0; l < nleaves; ++l) {
                if (next_fail[l] < ev_t) {
                    ev_t = next_fail[l];
                    ev_leaf = l;
                    ev_repair = false;
                }
                if (next_repair[l] < ev_t) {
                    ev_t = next_repair[l];
                    ev_leaf = l;
                    ev_repair = true;
                }
            }
            if (ev_leaf < 0 || ev_t > cfg.horizon) return false;
            t = ev_t;
            active_prev = active;

            if (ev_repair) {
                flip(ev_leaf, EventKind::Repair);
                next_repair[ev_leaf] = kInf;
                if (keep_story) story.push_back((kEvRepair << 24) | ev_leaf);
                if (fail_law[ev_leaf].kind == DelayLaw::Kind::Deterministic) {
                    batt_remaining[ev_leaf] = fail_law[ev_leaf].duration;
                    batt_active_since[ev_leaf] = kInf;
                }
                const int g = ix.leaf_group(ev_leaf);
                if (g >= 0 && !state.repair_queue[g].empty())
                    start_repair(rng, state.repair_queue[g].front(), t);
            } else {
                // Failure clock fired: phase advance or an actual failure.
                bool failure = true;
                if (fail_law[ev_leaf].kind == DelayLaw::Kind::Erlang &&
                    state.phase(ev_leaf) + 1 < fail_law[ev_leaf].phases) {
                    flip(ev_leaf, EventKind::PhaseAdvance);
                    if (keep_story) story.push_back((kEvPhase << 24) | ev_leaf);
                    next_fail[ev_leaf] = t + rng.exp(fail_law[ev_leaf].rate);
                    failure = false;
                }
                if (failure) {
                    flip(ev_leaf, EventKind::Failure);
                    next_fail[ev_leaf] = kInf;
                    if (keep_story) story.push_back((kEvFail << 24) | ev_leaf);
                    if (fail_law[ev_leaf].kind == DelayLaw::Kind::Deterministic)
                        batt_active_since[ev_leaf] = kInf;
                    maybe_start_repair(rng, ev_leaf, t);
                }
            }

            // Instantaneous demands on activation edges, lowest index first.
            // act_snap tracks the activation seen at the previous micro-step
            // so each edge is drawn exactly once per activation spell.
            ix.eval(state.leaf_state.data(), state.pand_prefix.data(), value, active);
            act_snap = active_prev;
            pending.clear();
            while (true) {
                for (int l = 0; l < nleaves; ++l) {
                    if (ix.leaf(l).kind != LeafKind::OnDemand || state.failed(l)) continue;
                    if (active[l] && !act_snap[l] &&
                        std::find(pending.begin(), pending.end(), l) == pending.end())
                        pending.push_back(l);
                }
                act_snap = active;
                if (value[ix.top()] || pending.empty()) break;
                std::sort(pending.begin(), pending.end());
                const int l = pending.front();
                pending.erase(pending.begin());
                if (rng.bernoulli(ix.leaf(l).gamma)) {
                    flip(l, EventKind::Failure);
                    if (keep_story) story.push_back((kEvDemandFail << 24) | l);
                    maybe_start_repair(rng, l, t);
                    ix.eval(state.leaf_state.data(), state.pand_prefix.data(), value, active);
                } else {
                    if (keep_story) story.push_back((kEvDemandOk << 24) | l);
                }
            }

            if (value[ix.top()]) return true;

            // Re-arm clocks of leaves whose activation flipped.
            for (int l = 0; l < nleaves; ++l)
                if (active[l] != active_prev[l] || l == ev_leaf) arm_failure(rng, l, t);
        }
    }

    std::string story_string() const {
        std::string s;
        for (uint32_t ev : story) {
            const uint32_t kind = ev >> 24;
            const int leaf = static_cast<int>(ev & 0xffffff);
            switch (kind) {
                case kEvRepair: s += s.empty() ? "r:" : " r:"; break;
                case kEvPhase: s += s.empty() ? "p:" : " p:"; break;
                case kEvFail: s += s.empty() ? "f:" : " f:"; break;
                case kEvDemandFail: s += ",d+:"; break;
                case kEvDemandOk: s += ",d-:"; break;
            }
            s += ix.node_id(leaf);
        }
        return s;
    }
};

}  // namespace

SimReport simulate(const Bdmp& model, const SimConfig& config) {
    if (config.trials < 1) throw NumericError("simulate: trials must be >= 1");
    if (!(config.ci_level > 0.0 && config.ci_level < 1.0))
        throw NumericError("simulate: ci_level must lie in (0,1)");
    const auto t0 = std::chrono::steady_clock::now();
    ModelIndex ix(model);

    int threads = config.threads;
    if (threads <= 0) {
        if (const char* env = std::getenv("BDMP_THREADS")) threads = std::atoi(env);
        if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
        if (threads <= 0) threads = 1;
    }
    threads = static_cast<int>(std::min<uint64_t>(threads, config.trials));

    std::vector<Accumulator> acc(threads);
    auto worker = [&](int w, uint64_t lo, uint64_t hi) {
        Engine eng(ix, config);
        for (uint64_t i = lo; i < hi; ++i) {
            Rng rng(config.seed, i);
            if (eng.run_trial(rng, true)) {
                ++acc[w].failed;
                ++acc[w].tally[eng.story_string()];
            }
        }
    };

    if (threads == 1) {
        worker(0, 0, config.trials);
    } else {
        std::vector<std::thread> pool;
        const uint64_t chunk = (config.trials + threads - 1) / threads;
        for (int w = 0; w < threads; ++w) {
            const uint64_t lo = w * chunk, hi = std::min<uint64_t>(config.trials, lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(worker, w, lo, hi);
        }
        for (auto& th : pool) th.join();
    }

    SimReport rep;
    rep.trials = config.trials;
    rep.seed = config.seed;
    rep.ci_level = config.ci_level;
    std::map<std::string, uint64_t> tally;
    for (const auto& a : acc) {
        rep.failed += a.failed;
        for (const auto& [k, v] : a.tally) tally[k] += v;
    }
    rep.estimate = static_cast<double>(rep.failed) / static_cast<double>(rep.trials);
    rep.halfwidth = ci_halfwidth(rep.estimate, rep.trials, rep.ci_level);
    for (const auto& [k, v] : tally)
        if (v >= 2) rep.tallies.emplace_back(k, v);
    std::sort(rep.tallies.begin(), rep.tallies.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

}  // namespace bdmp
