#include "bdmp/seq_explore.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>

#include "bdmp/ctmc_solve.hpp"

namespace bdmp {

std::vector<std::string> Sequence::labels(const CtmcSparse& ctmc) const {
    std::vector<std::string> out;
    out.reserve(transitions.size());
    for (int idx : transitions) out.push_back(ctmc.transitions[idx].label);
    return out;
}

double hypoexp_cdf(std::vector<double> rates, double t, double tol) {
    if (rates.empty()) return 1.0;
    if (!(t > 0.0)) return 0.0;
    for (double r : rates)
        if (!(r > 0.0)) throw NumericError("hypoexp_cdf: rates must be positive");

    const double rmax = *std::max_element(rates.begin(), rates.end());
    const size_t k = rates.size();
    const FoxGlynn fg = poisson_weights(rmax * t, tol);

    // Path chain: state i jumps to i+1 with probability rates[i]/rmax and
    // stays put otherwise; state k is absorbing. v tracks p(i) per step.
    std::vector<double> v(k + 1, 0.0), next(k + 1, 0.0);
    v[0] = 1.0;
    double cdf = fg.left == 0 ? fg.weights[0] * v[k] : 0.0;
    for (int i = 1; i <= fg.right; ++i) {
        for (size_t s = 0; s < k; ++s) {
            const double p = rates[s] / rmax;
            next[s] = v[s] * (1.0 - p);
            if (s > 0) next[s] += v[s - 1] * rates[s - 1] / rmax;
        }
        next[k] = v[k] + v[k - 1] * rates[k - 1] / rmax;
        v.swap(next);
        if (i >= fg.left) cdf += fg.weights[i - fg.left] * v[k];
    }
    // The tail beyond `right` is dropped; with the chosen tol this stays
    // below the caller-visible precision.
    return std::min(cdf, 1.0);
}

double sequence_time_prob(const CtmcSparse& ctmc, std::span<const int> transitions, double t) {
    const auto r = ctmc.exit_rates();
    double embedded = 1.0;
    std::vector<double> sojourn;
    sojourn.reserve(transitions.size());
    int at = 0;
    for (int idx : transitions) {
        const auto& tr = ctmc.transitions[idx];
        if (tr.src != at) throw NumericError("sequence_time_prob: path is not contiguous from state 0");
        embedded *= tr.rate / r[tr.src];
        sojourn.push_back(r[tr.src]);
        at = tr.dst;
    }
    if (transitions.empty()) return 1.0;
    return embedded * hypoexp_cdf(std::move(sojourn), t);
}

namespace {

struct LabelsLess {
    const CtmcSparse& ctmc;
    bool operator()(const Sequence& a, const Sequence& b) const {
        auto la = a.labels(ctmc), lb = b.labels(ctmc);
        return la < lb;
    }
};

void rank_sequences(std::vector<Sequence>& seqs, const CtmcSparse& ctmc, bool by_timed) {
    std::sort(seqs.begin(), seqs.end(), [&](const Sequence& a, const Sequence& b) {
        const double pa = by_timed ? a.timed_prob : a.embedded_prob;
        const double pb = by_timed ? b.timed_prob : b.embedded_prob;
        if (pa != pb) return pa > pb;
        return LabelsLess{ctmc}(a, b);
    });
}

}  // namespace

NriReport explore_nri(const CtmcSparse& ctmc, double t, const CutoffCriteria& cutoff) {
    if (ctmc.is_goal(0)) throw NumericError("explore_nri: initial state is a goal state");
    NriReport rep;
    const auto r = ctmc.exit_rates();
    rep.lambda = r[0];

    const auto absorb = absorption_probabilities(ctmc, ctmc.goal, {0});
    const auto& rows = ctmc.row_start();
    for (int e = rows[0]; e < rows[1]; ++e) {
        const auto& tr = ctmc.transitions[e];
        const double p = tr.rate / r[0];
        rep.epsilon += p * (ctmc.is_goal(tr.dst) ? 1.0 : absorb[tr.dst]);
    }
    rep.bound = -std::expm1(-rep.lambda * rep.epsilon * t);

    // Depth-first enumeration of loop-free paths. A transition back to the
    // initial state is the complement event NRI conditions away, so that
    // branch is pruned without producing a sequence; a transition onto any
    // other on-path state closes a loop that is recorded and not extended.
    std::vector<int> path;
    std::vector<uint8_t> on_path(ctmc.n_states(), 0);
    on_path[0] = 1;
    int failures = 0, repairs = 0;

    auto dfs = [&](auto&& self, int state, double embedded) -> void {
        for (int e = rows[state]; e < rows[state + 1]; ++e) {
            const auto& tr = ctmc.transitions[e];
            if (tr.dst == 0) continue;
            const double p = embedded * tr.rate / r[state];
            const bool is_repair = tr.label.rfind("r:", 0) == 0;
            const bool is_failure = tr.label.rfind("f:", 0) == 0;

            path.push_back(e);
            if (cutoff.min_prob > 0.0 && p <= cutoff.min_prob) {
                ++rep.truncated_count;
                rep.explored.push_back({path, p, 0.0, SequenceKind::Truncated});
            } else if (ctmc.is_goal(tr.dst)) {
                rep.explored.push_back({path, p, 0.0, SequenceKind::Complete});
            } else if (on_path[tr.dst]) {
                rep.explored.push_back({path, p, 0.0, SequenceKind::Loop});
            } else if ((cutoff.max_len > 0 && static_cast<int>(path.size()) >= cutoff.max_len) ||
                       (cutoff.max_failures > 0 && failures + is_failure > cutoff.max_failures) ||
                       (cutoff.max_repairs > 0 && repairs + is_repair > cutoff.max_repairs)) {
                ++rep.truncated_count;
                rep.explored.push_back({path, p, 0.0, SequenceKind::Truncated});
            } else {
                failures += is_failure;
                repairs += is_repair;
                on_path[tr.dst] = 1;
                self(self, tr.dst, p);
                on_path[tr.dst] = 0;
                failures -= is_failure;
                repairs -= is_repair;
            }
            path.pop_back();
        }
    };
    dfs(dfs, 0, 1.0);

    double listed = 0.0;
    for (const auto& s : rep.explored) {
        if (s.kind == SequenceKind::Complete) {
            rep.sequences.push_back(s);
            listed += s.embedded_prob;
        }
    }
    rep.discarded_mass = std::max(0.0, rep.epsilon - listed);
    rank_sequences(rep.sequences, ctmc, /*by_timed=*/false);
    rank_sequences(rep.explored, ctmc, /*by_timed=*/false);
    return rep;
}

NsReport explore_ns(const CtmcSparse& ctmc, double t, const CutoffCriteria& cutoff,
                    uint64_t node_budget) {
    if (!(t > 0.0)) throw NumericError("explore_ns: t must be > 0");
    NsReport rep;
    const auto r = ctmc.exit_rates();
    const auto& rows = ctmc.row_start();

    // Arena of explored nodes; paths are rebuilt via parent links.
    struct Node {
        int parent;       // arena index, -1 for root
        int transition;   // ctmc transition index
        int state;
        int depth;
        int failures, repairs;
        double embedded;
        double timed;
    };
    std::vector<Node> arena;
    auto path_of = [&](int node) {
        std::vector<int> p;
        for (int n = node; n >= 0 && arena[n].transition >= 0; n = arena[n].parent)
            p.push_back(arena[n].transition);
        std::reverse(p.begin(), p.end());
        return p;
    };
    auto sojourns_of = [&](int node) {
        std::vector<double> s;
        for (int n = node; n >= 0 && arena[n].transition >= 0; n = arena[n].parent)
            s.push_back(r[ctmc.transitions[arena[n].transition].src]);
        return s;  // order is irrelevant for the hypoexponential CDF
    };

    // Best-first on embedded probability; ties by arena order for
    // reproducibility (arena order itself is deterministic).
    auto cmp = [&](int a, int b) {
        if (arena[a].embedded != arena[b].embedded) return arena[a].embedded < arena[b].embedded;
        return a > b;
    };
    std::priority_queue<int, std::vector<int>, decltype(cmp)> open(cmp);

    std::map<std::vector<double>, double> cdf_cache;
    auto timed_of = [&](int node) {
        auto s = sojourns_of(node);
        std::sort(s.begin(), s.end());
        auto it = cdf_cache.find(s);
        double cdf;
        if (it != cdf_cache.end()) {
            cdf = it->second;
        } else {
            cdf = hypoexp_cdf(s, t);
            cdf_cache.emplace(std::move(s), cdf);
        }
        return arena[node].embedded * cdf;
    };

    auto classify = [&](int node) {
        const Node& n = arena[node];
        ++rep.explored_count;
        if (ctmc.is_goal(n.state)) {
            rep.lower += n.timed;
            rep.sequences.push_back({path_of(node), n.embedded, n.timed, SequenceKind::Complete});
            return;
        }
        const bool cut = n.timed <= cutoff.min_prob ||
                         (cutoff.max_len > 0 && n.depth > cutoff.max_len) ||
                         (cutoff.max_failures > 0 && n.failures > cutoff.max_failures) ||
                         (cutoff.max_repairs > 0 && n.repairs > cutoff.max_repairs);
        if (cut) {
            ++rep.truncated_count;
            rep.truncated_mass += n.timed;
            return;
        }
        if (rows[n.state + 1] == rows[n.state]) return;  // dead end, contributes nothing
        open.push(node);
    };

    arena.push_back({-1, -1, 0, 0, 0, 0, 1.0, 1.0});
    classify(0);

    while (!open.empty()) {
        if (rep.explored_count > node_budget) {
            // Drain the frontier into the upper bound; it stays conservative.
            rep.partial = true;
            while (!open.empty()) {
                int node = open.top();
                open.pop();
                ++rep.truncated_count;
                rep.truncated_mass += arena[node].timed;
            }
            break;
        }
        const int cur = open.top();
        open.pop();
        const int state = arena[cur].state;
        for (int e = rows[state]; e < rows[state + 1]; ++e) {
            const auto& tr = ctmc.transitions[e];
            Node child;
            child.parent = cur;
            child.transition = e;
            child.state = tr.dst;
            child.depth = arena[cur].depth + 1;
            child.failures = arena[cur].failures + (tr.label.rfind("f:", 0) == 0 ? 1 : 0);
            child.repairs = arena[cur].repairs + (tr.label.rfind("r:", 0) == 0 ? 1 : 0);
            child.embedded = arena[cur].embedded * tr.rate / r[state];
            arena.push_back(child);
            const int id = static_cast<int>(arena.size()) - 1;
            arena[id].timed = timed_of(id);
            classify(id);
        }
    }

    rep.upper = std::min(1.0, rep.lower + rep.truncated_mass);
    rank_sequences(rep.sequences, ctmc, /*by_timed=*/true);
    return rep;
}

}  // namespace bdmp
