#include "bdmp/state_space.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <istream>
#include <ostream>
#include <sstream>

namespace bdmp {

ModelIndex::ModelIndex(const Bdmp& model) : model_(&model) {
    auto diags = validate(model);
    if (!diags.empty())
        throw ModelError("model rejected: " + diags.front().message +
                         (diags.size() > 1 ? " (+" + std::to_string(diags.size() - 1) + " more)" : ""));

    nleaves_ = static_cast<int>(model.leaves.size());
    for (const auto& l : model.leaves) node_ids_.push_back(l.id);
    for (const auto& g : model.gates) node_ids_.push_back(g.id);
    for (int i = 0; i < static_cast<int>(node_ids_.size()); ++i) index_[node_ids_[i]] = i;
    top_ = index_.at(model.top);

    children_.resize(model.gates.size());
    for (size_t gi = 0; gi < model.gates.size(); ++gi)
        for (const auto& c : model.gates[gi].children) children_[gi].push_back(index_.at(c));

    trig_into_.resize(node_ids_.size());
    for (const auto& t : model.triggers) trig_into_[index_.at(t.target)].push_back(index_.at(t.origin));

    // Bottom-up gate order (children before parents).
    std::vector<int> mark(node_ids_.size(), 0);
    auto dfs = [&](auto&& self, int n) -> void {
        if (n < nleaves_ || mark[n]) return;
        mark[n] = 1;
        for (int c : children_[n - nleaves_]) self(self, c);
        gate_order_.push_back(n);
    };
    for (int n = nleaves_; n < static_cast<int>(node_ids_.size()); ++n) dfs(dfs, n);

    pand_slot_.assign(node_ids_.size(), -1);
    for (int n = nleaves_; n < static_cast<int>(node_ids_.size()); ++n) {
        if (gate(n).kind == GateKind::PriorityAnd) {
            pand_slot_[n] = static_cast<int>(pand_gates_.size());
            pand_gates_.push_back(n);
        }
    }

    leaf_group_.assign(nleaves_, -1);
    for (const auto& [name, members] : model.repair_groups) {
        int g = static_cast<int>(group_names_.size());
        group_names_.push_back(name);
        std::vector<int> ms;
        for (const auto& id : members) {
            int leaf = index_.at(id);
            ms.push_back(leaf);
            leaf_group_[leaf] = g;
        }
        std::sort(ms.begin(), ms.end());
        group_members_.push_back(std::move(ms));
    }
}

int ModelIndex::index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw ModelError("unknown node \"" + id + "\"");
    return it->second;
}

void ModelIndex::eval(const uint8_t* leaf_failed, const uint8_t* pand_prefix,
                      std::vector<uint8_t>& value, std::vector<uint8_t>& active) const {
    const int n = node_count();
    value.assign(n, 0);
    active.assign(n, 0);

    for (int i = 0; i < nleaves_; ++i) value[i] = leaf_failed[i] ? 1 : 0;
    for (int g : gate_order_) {
        const auto& ch = children_[g - nleaves_];
        switch (gate(g).kind) {
            case GateKind::And: {
                uint8_t v = 1;
                for (int c : ch) v &= value[c];
                value[g] = v;
                break;
            }
            case GateKind::Or: {
                uint8_t v = 0;
                for (int c : ch) v |= value[c];
                value[g] = v;
                break;
            }
            case GateKind::PriorityAnd:
                value[g] = pand_prefix[pand_slot_[g]] == static_cast<uint8_t>(ch.size()) ? 1 : 0;
                break;
        }
    }

    // Activation flows top-down through gate edges. A trigger target needs
    // both an active parent and a failed origin; the top is always active.
    active[top_] = 1;
    for (auto it = gate_order_.rbegin(); it != gate_order_.rend(); ++it) {
        int g = *it;
        if (!active[g]) continue;
        for (int c : children_[g - nleaves_]) {
            if (c == top_) continue;
            if (trig_into_[c].empty()) {
                active[c] = 1;
            } else {
                for (int origin : trig_into_[c])
                    if (value[origin]) {
                        active[c] = 1;
                        break;
                    }
            }
        }
    }
}

size_t SystemStateHash::operator()(const SystemState& s) const {
    uint64_t h = 1469598103934665603ull;
    auto mix = [&h](uint8_t byte) {
        h ^= byte;
        h *= 1099511628211ull;
    };
    for (uint8_t b : s.leaf_state) mix(b);
    mix(0xfe);
    for (uint8_t b : s.pand_prefix) mix(b);
    for (const auto& q : s.repair_queue) {
        mix(0xff);
        for (uint16_t v : q) {
            mix(static_cast<uint8_t>(v & 0xff));
            mix(static_cast<uint8_t>(v >> 8));
        }
    }
    return static_cast<size_t>(h);
}

SystemState initial_state(const ModelIndex& ix) {
    SystemState s;
    s.leaf_state.assign(ix.leaf_count(), 0);
    s.pand_prefix.assign(ix.pand_count(), 0);
    s.repair_queue.assign(ix.group_count(), {});
    return s;
}

std::string TransitionLabel::str(const ModelIndex& ix) const {
    std::string out;
    switch (event) {
        case EventKind::Repair: out = "r:"; break;
        case EventKind::PhaseAdvance: out = "p:"; break;
        case EventKind::Failure: out = "f:"; break;
    }
    out += ix.node_id(leaf);
    for (const auto& d : demands) {
        out += d.failed ? ",d+:" : ",d-:";
        out += ix.node_id(d.leaf);
    }
    return out;
}

bool CtmcSparse::is_goal(int s) const {
    return std::binary_search(goal.begin(), goal.end(), s);
}

std::vector<double> CtmcSparse::exit_rates() const {
    std::vector<double> r(n_states(), 0.0);
    for (const auto& t : transitions) r[t.src] += t.rate;
    return r;
}

void CtmcSparse::build_rows() {
    std::stable_sort(transitions.begin(), transitions.end(),
                     [](const CtmcTransition& a, const CtmcTransition& b) { return a.src < b.src; });
    row_start_.assign(n_states() + 1, 0);
    for (const auto& t : transitions) ++row_start_[t.src + 1];
    for (int s = 0; s < n_states(); ++s) row_start_[s + 1] += row_start_[s];
}

namespace {

// Shared scratch for one enumerate_transitions call.
struct EvalScratch {
    std::vector<uint8_t> value_pre, value_post, active;
};

}  // namespace

void apply_leaf_event(const ModelIndex& ix, SystemState& state, int leaf, EventKind kind,
                      std::vector<uint8_t>& value_pre, std::vector<uint8_t>& value_post) {
    switch (kind) {
        case EventKind::Failure:
            state.leaf_state[leaf] = SystemState::kFailedBit;
            if (ix.leaf(leaf).repairable() && ix.leaf_group(leaf) >= 0)
                state.repair_queue[ix.leaf_group(leaf)].push_back(static_cast<uint16_t>(leaf));
            break;
        case EventKind::Repair: {
            state.leaf_state[leaf] = 0;
            int g = ix.leaf_group(leaf);
            if (g >= 0) {
                auto& q = state.repair_queue[g];
                q.erase(std::find(q.begin(), q.end(), static_cast<uint16_t>(leaf)));
            }
            break;
        }
        case EventKind::PhaseAdvance:
            state.leaf_state[leaf] = static_cast<uint8_t>(state.phase(leaf) + 1);
            return;  // no structural change, values are untouched
    }

    // Re-evaluate values bottom-up, advancing or breaking pand prefixes as
    // child values flip. A single event flips values in one direction only.
    value_post.assign(ix.node_count(), 0);
    for (int i = 0; i < ix.leaf_count(); ++i) value_post[i] = state.failed(i) ? 1 : 0;
    for (int g : ix.gate_eval_order()) {
        const auto& ch = ix.gate_children(g);
        switch (ix.gate(g).kind) {
            case GateKind::And: {
                uint8_t v = 1;
                for (int c : ch) v &= value_post[c];
                value_post[g] = v;
                break;
            }
            case GateKind::Or: {
                uint8_t v = 0;
                for (int c : ch) v |= value_post[c];
                value_post[g] = v;
                break;
            }
            case GateKind::PriorityAnd: {
                uint8_t& prefix = state.pand_prefix[ix.pand_slot(g)];
                for (int k = 0; k < prefix; ++k) {
                    if (!value_post[ch[k]]) {
                        prefix = static_cast<uint8_t>(k);
                        break;
                    }
                }
                while (prefix < ch.size() && value_post[ch[prefix]] && !value_pre[ch[prefix]])
                    ++prefix;
                value_post[g] = prefix == static_cast<uint8_t>(ch.size()) ? 1 : 0;
                break;
            }
        }
    }
    value_pre = value_post;
}

namespace {

struct DemandResolver {
    const ModelIndex& ix;
    double base_rate;
    TransitionLabel base_label;
    std::vector<EnumeratedTransition>* out;
    std::vector<uint8_t> demanded;  // per leaf: already resolved in this cascade

    // `pending` collects on-demand leaves whose activation edge fired during
    // the cascade and whose Bernoulli draw is still open. Failures can only
    // widen activation, so the set grows monotonically until resolved.
    void resolve(SystemState state, std::vector<uint8_t> value, std::vector<uint8_t> active_prev,
                 std::vector<int> pending, double factor, std::vector<DemandOutcome> demands,
                 int depth) {
        if (depth > 2 * ix.leaf_count() + 2)
            throw ModelError("instantaneous activation cascade does not settle");

        std::vector<uint8_t> active;
        ix.eval(state.leaf_state.data(), state.pand_prefix.data(), value, active);
        for (int l = 0; l < ix.leaf_count(); ++l) {
            if (ix.leaf(l).kind != LeafKind::OnDemand || demanded[l] || state.failed(l)) continue;
            if (active[l] && !active_prev[l] &&
                std::find(pending.begin(), pending.end(), l) == pending.end())
                pending.push_back(l);
        }
        std::sort(pending.begin(), pending.end());

        // Once the top event holds, the state is absorbing; leave any
        // remaining demands unresolved (their outcomes sum to 1).
        if (!value[ix.top()] && !pending.empty()) {
            const int l = pending.front();
            pending.erase(pending.begin());
            demanded[l] = 1;
            const double gamma = ix.leaf(l).gamma;
            if (gamma > 0.0) {
                SystemState failed_state = state;
                std::vector<uint8_t> vpre = value, vpost;
                apply_leaf_event(ix, failed_state, l, EventKind::Failure, vpre, vpost);
                auto d = demands;
                d.push_back({l, true, gamma});
                resolve(std::move(failed_state), std::move(vpre), active, pending, factor * gamma,
                        std::move(d), depth + 1);
            }
            if (gamma < 1.0) {
                auto d = demands;
                d.push_back({l, false, 1.0 - gamma});
                resolve(std::move(state), std::move(value), active, std::move(pending),
                        factor * (1.0 - gamma), std::move(d), depth + 1);
            }
            demanded[l] = 0;
            return;
        }

        TransitionLabel label = base_label;
        label.demands = std::move(demands);
        out->push_back({base_rate * factor, std::move(state), std::move(label)});
    }
};

}  // namespace

std::vector<EnumeratedTransition> enumerate_transitions(const ModelIndex& ix,
                                                        const SystemState& state, bool filtering) {
    std::vector<EnumeratedTransition> out;
    EvalScratch s;
    std::vector<uint8_t> active_pre;
    ix.eval(state.leaf_state.data(), state.pand_prefix.data(), s.value_pre, active_pre);
    if (s.value_pre[ix.top()]) return out;  // goal states are absorbing

    struct Candidate {
        EventKind kind;
        int leaf;
        double rate;
    };
    std::vector<Candidate> candidates;
    for (int l = 0; l < ix.leaf_count(); ++l) {
        const Leaf& leaf = ix.leaf(l);
        if (state.failed(l)) {
            if (!leaf.repairable()) continue;
            int g = ix.leaf_group(l);
            if (g >= 0 && (state.repair_queue[g].empty() || state.repair_queue[g].front() != l))
                continue;  // FCFS: only the queue head is under repair
            candidates.push_back({EventKind::Repair, l, leaf.mu});
            continue;
        }
        switch (leaf.kind) {
            case LeafKind::ExpFailure: {
                double rate = active_pre[l] ? leaf.lambda_active : leaf.lambda_standby;
                if (rate > 0.0) candidates.push_back({EventKind::Failure, l, rate});
                break;
            }
            case LeafKind::PhaseErlang:
                if (active_pre[l] && leaf.erlang_rate > 0.0) {
                    EventKind kind = state.phase(l) + 1 >= leaf.erlang_phases ? EventKind::Failure
                                                                              : EventKind::PhaseAdvance;
                    candidates.push_back({kind, l, leaf.erlang_rate});
                }
                break;
            case LeafKind::OnDemand:
                break;  // fails only at activation instants
        }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        return std::tie(a.kind, a.leaf) < std::tie(b.kind, b.leaf);
    });

    const int ngates = ix.gate_count();
    for (const auto& cand : candidates) {
        SystemState next = state;
        std::vector<uint8_t> value = s.value_pre;
        apply_leaf_event(ix, next, cand.leaf, cand.kind, value, s.value_post);

        if (filtering && cand.kind == EventKind::Failure) {
            bool changed = false;
            for (int g = 0; g < ngates && !changed; ++g)
                changed = value[ix.leaf_count() + g] != s.value_pre[ix.leaf_count() + g];
            if (!changed) continue;  // irrelevant event inside a failed subsystem
        }

        DemandResolver resolver{ix, cand.rate, {cand.leaf, cand.kind, {}}, &out, {}};
        resolver.demanded.assign(ix.leaf_count(), 0);
        resolver.resolve(std::move(next), std::move(value), active_pre, {}, 1.0, {}, 0);
    }
    return out;
}

namespace {

std::string state_name(const ModelIndex& ix, const SystemState& s) {
    std::string name;
    for (int l = 0; l < ix.leaf_count(); ++l) {
        if (s.failed(l)) {
            if (!name.empty()) name += '+';
            name += ix.node_id(l);
        } else if (s.phase(l) > 0) {
            if (!name.empty()) name += '+';
            name += ix.node_id(l) + "@" + std::to_string(s.phase(l));
        }
    }
    return name.empty() ? "ok" : name;
}

}  // namespace

CtmcSparse build_ctmc(const Bdmp& model, const BuildOptions& opts) {
    return build_ctmc(ModelIndex(model), opts);
}

CtmcSparse build_ctmc(const ModelIndex& ix, const BuildOptions& opts) {
    CtmcSparse ctmc;
    std::unordered_map<SystemState, int, SystemStateHash> seen;
    std::deque<int> frontier;
    std::vector<uint8_t> value, active;
    int fail_index = -1;

    auto is_goal_state = [&](const SystemState& s) {
        ix.eval(s.leaf_state.data(), s.pand_prefix.data(), value, active);
        return value[ix.top()] != 0;
    };
    auto intern = [&](SystemState s, bool goal) {
        if (goal && opts.merge_goals) {
            if (fail_index < 0) {
                fail_index = ctmc.n_states();
                ctmc.state_names.push_back("fail");
                ctmc.states.push_back(std::move(s));
                ctmc.goal.push_back(fail_index);
            }
            return fail_index;
        }
        auto it = seen.find(s);
        if (it != seen.end()) return it->second;
        int idx = ctmc.n_states();
        if (idx >= opts.max_states)
            throw ModelError("state space exceeds max_states = " + std::to_string(opts.max_states));
        seen.emplace(s, idx);
        ctmc.state_names.push_back(goal ? "fail:" + state_name(ix, s) : state_name(ix, s));
        ctmc.states.push_back(std::move(s));
        if (goal) ctmc.goal.push_back(idx);
        if (!goal) frontier.push_back(idx);
        return idx;
    };

    SystemState init = initial_state(ix);
    intern(init, is_goal_state(init));

    while (!frontier.empty()) {
        int src = frontier.front();
        frontier.pop_front();
        auto outgoing = enumerate_transitions(ix, ctmc.states[src], opts.filtering);
        for (auto& tr : outgoing) {
            bool goal = is_goal_state(tr.to);
            int dst = intern(std::move(tr.to), goal);
            ctmc.transitions.push_back({src, dst, tr.rate, tr.label.str(ix)});
        }
    }

    std::sort(ctmc.goal.begin(), ctmc.goal.end());
    ctmc.build_rows();
    return ctmc;
}

void export_ctmc(const CtmcSparse& ctmc, std::ostream& out) {
    out << "ctmc " << ctmc.n_states() << ' ' << ctmc.transitions.size() << '\n';
    for (int s = 0; s < ctmc.n_states(); ++s) out << "state " << s << ' ' << ctmc.state_names[s] << '\n';
    char buf[64];
    for (const auto& t : ctmc.transitions) {
        std::snprintf(buf, sizeof buf, "%.17g", t.rate);
        out << t.src << ' ' << t.dst << ' ' << buf << ' ' << t.label << '\n';
    }
    out << "init 0\n";
    if (!ctmc.goal.empty()) {
        out << "goal";
        for (int g : ctmc.goal) out << ' ' << g;
        out << '\n';
    }
}

std::string export_ctmc(const CtmcSparse& ctmc) {
    std::ostringstream os;
    export_ctmc(ctmc, os);
    return os.str();
}

CtmcSparse import_ctmc(std::istream& in) {
    CtmcSparse ctmc;
    std::string line;
    if (!std::getline(in, line)) throw ModelError("empty ctmc document");
    int n = 0;
    size_t m = 0;
    {
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag >> n >> m) || tag != "ctmc")
            throw ModelError("ctmc document must start with \"ctmc <nstates> <ntransitions>\"");
    }
    ctmc.state_names.assign(n, "");
    std::vector<bool> named(n, false);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "state") {
            int idx;
            std::string name;
            if (!(ls >> idx >> name) || idx < 0 || idx >= n)
                throw ModelError("bad state line: " + line);
            ctmc.state_names[idx] = name;
            named[idx] = true;
        } else if (tag == "init") {
            int idx;
            if (!(ls >> idx) || idx != 0) throw ModelError("init state must be 0");
        } else if (tag == "goal") {
            int idx;
            while (ls >> idx) {
                if (idx < 0 || idx >= n) throw ModelError("goal index out of range");
                ctmc.goal.push_back(idx);
            }
        } else {
            int src = std::stoi(tag), dst;
            double rate;
            std::string label;
            if (!(ls >> dst >> rate >> label) || src < 0 || src >= n || dst < 0 || dst >= n)
                throw ModelError("bad transition line: " + line);
            if (!(rate > 0.0)) throw ModelError("transition rates must be positive: " + line);
            ctmc.transitions.push_back({src, dst, rate, label});
        }
    }
    if (ctmc.transitions.size() != m)
        throw ModelError("transition count mismatch: header says " + std::to_string(m) + ", found " +
                         std::to_string(ctmc.transitions.size()));
    for (int s = 0; s < n; ++s)
        if (!named[s]) ctmc.state_names[s] = "s" + std::to_string(s);
    std::sort(ctmc.goal.begin(), ctmc.goal.end());
    ctmc.goal.erase(std::unique(ctmc.goal.begin(), ctmc.goal.end()), ctmc.goal.end());
    for (const auto& t : ctmc.transitions)
        if (ctmc.is_goal(t.src)) throw ModelError("goal state " + std::to_string(t.src) + " has outgoing transitions");
    ctmc.build_rows();
    return ctmc;
}

CtmcSparse import_ctmc(const std::string& text) {
    std::istringstream is(text);
    return import_ctmc(is);
}

std::map<std::string, bool> activation(const Bdmp& model, const SystemState& state) {
    ModelIndex ix(model);
    std::vector<uint8_t> value, active;
    ix.eval(state.leaf_state.data(), state.pand_prefix.data(), value, active);
    std::map<std::string, bool> out;
    for (int n = 0; n < ix.node_count(); ++n) out[ix.node_id(n)] = active[n] != 0;
    return out;
}

std::map<std::string, bool> structure_value(const Bdmp& model, const SystemState& state) {
    ModelIndex ix(model);
    std::vector<uint8_t> value, active;
    ix.eval(state.leaf_state.data(), state.pand_prefix.data(), value, active);
    std::map<std::string, bool> out;
    for (int n = 0; n < ix.node_count(); ++n) out[ix.node_id(n)] = value[n] != 0;
    return out;
}

}  // namespace bdmp
