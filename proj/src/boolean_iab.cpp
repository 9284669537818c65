#include "bdmp/boolean_iab.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>
#include <unordered_map>

#include "bdmp/ctmc_solve.hpp"
#include "bdmp/state_space.hpp"

namespace bdmp {

BoolFormula BoolFormula::literal(std::string id) {
    BoolFormula f;
    f.kind = Kind::Literal;
    f.leaf = std::move(id);
    return f;
}

BoolFormula BoolFormula::make_and(std::vector<BoolFormula> args) {
    BoolFormula f;
    f.kind = Kind::And;
    f.args = std::move(args);
    return f;
}

BoolFormula BoolFormula::make_or(std::vector<BoolFormula> args) {
    BoolFormula f;
    f.kind = Kind::Or;
    f.args = std::move(args);
    return f;
}

BoolFormula structure_function(const Bdmp& model) {
    auto build = [&](auto&& self, const std::string& id) -> BoolFormula {
        if (model.find_leaf(id)) return BoolFormula::literal(id);
        const Gate* g = model.find_gate(id);
        std::vector<BoolFormula> args;
        args.reserve(g->children.size());
        for (const auto& c : g->children) args.push_back(self(self, c));
        if (g->kind == GateKind::Or) return BoolFormula::make_or(std::move(args));
        return BoolFormula::make_and(std::move(args));  // pand maps to and
    };
    return build(build, model.top);
}

namespace {

// Dynamic bitset over leaf indices.
struct Mask {
    std::vector<uint64_t> w;
    explicit Mask(size_t bits = 0) : w((bits + 63) / 64, 0) {}
    void set(int i) { w[i >> 6] |= 1ull << (i & 63); }
    bool test(int i) const { return w[i >> 6] & (1ull << (i & 63)); }
    bool subset_of(const Mask& o) const {
        for (size_t i = 0; i < w.size(); ++i)
            if (w[i] & ~o.w[i]) return false;
        return true;
    }
    int count() const {
        int c = 0;
        for (uint64_t x : w) c += __builtin_popcountll(x);
        return c;
    }
    bool operator==(const Mask&) const = default;
    bool operator<(const Mask& o) const { return w < o.w; }
};

struct LeafTable {
    std::vector<std::string> ids;
    std::unordered_map<std::string, int> index;
    int intern(const std::string& id) {
        auto it = index.find(id);
        if (it != index.end()) return it->second;
        int i = static_cast<int>(ids.size());
        ids.push_back(id);
        index.emplace(id, i);
        return i;
    }
};

// Upper bound on the number of cut sets a formula node can produce.
double completion_count(const BoolFormula& f,
                        std::unordered_map<const BoolFormula*, double>& memo) {
    auto it = memo.find(&f);
    if (it != memo.end()) return it->second;
    double n = 1.0;
    if (f.kind == BoolFormula::Kind::Or) {
        n = 0.0;
        for (const auto& a : f.args) n += completion_count(a, memo);
    } else if (f.kind == BoolFormula::Kind::And) {
        for (const auto& a : f.args) n = std::min(1e300, n * completion_count(a, memo));
    }
    memo.emplace(&f, n);
    return n;
}

double iab_barrier_rate(const Leaf& l) {
    if (l.kind == LeafKind::PhaseErlang)
        return l.erlang_phases > 0 ? l.erlang_rate / l.erlang_phases : 0.0;
    return l.lambda_active;
}

// Conservative cut-set frequency estimate from the leaves known so far:
// lambda_i, the product of on-demand gammas, and the sharpest single
// in-function race factor. Every completion of the partial has a final
// frequency at or below this.
struct PartialEstimator {
    const Bdmp* model;
    const LeafTable& table;

    double rate_bound(const Mask& leaves) const {
        double lambda_i = -1.0, mu_i = 0.0, gammas = 1.0;
        std::vector<double> in_function;
        for (int i = 0; i < static_cast<int>(table.ids.size()); ++i) {
            if (!leaves.test(i)) continue;
            const Leaf* l = model->find_leaf(table.ids[i]);
            if (l->initiator && l->kind == LeafKind::ExpFailure) {
                if (lambda_i >= 0.0) return 0.0;  // two initiators never classify
                lambda_i = l->lambda_active;
                mu_i = l->mu;
            } else if (l->kind == LeafKind::OnDemand) {
                gammas *= l->gamma;
            } else {
                in_function.push_back(iab_barrier_rate(*l));
            }
        }
        if (lambda_i < 0.0) return std::numeric_limits<double>::infinity();
        double race = 1.0;
        for (double lk : in_function) {
            const double f = lk + mu_i > 0.0 ? lk / (lk + mu_i) : 0.0;
            race = std::min(race, f);
        }
        return lambda_i * gammas * race;
    }
};

}  // namespace

MocusResult mocus_mcs(const BoolFormula& formula, const MocusOptions& opts) {
    if (opts.cutoff > 0.0 && (!opts.model || !(opts.t > 0.0)))
        throw NumericError("mocus_mcs: a cutoff needs the model and a mission time");

    LeafTable table;
    {
        // Intern every literal so masks have a fixed width.
        auto walk = [&](auto&& self, const BoolFormula& f) -> void {
            if (f.kind == BoolFormula::Kind::Literal)
                table.intern(f.leaf);
            else
                for (const auto& a : f.args) self(self, a);
        };
        walk(walk, formula);
    }
    const size_t nbits = table.ids.size();
    std::unordered_map<const BoolFormula*, double> count_memo;
    PartialEstimator estimator{opts.model, table};

    struct Partial {
        Mask leaves;
        std::vector<const BoolFormula*> gates;
    };
    MocusResult res;
    std::deque<Partial> work;
    {
        Partial root{Mask(nbits), {}};
        if (formula.kind == BoolFormula::Kind::Literal)
            root.leaves.set(table.index.at(formula.leaf));
        else
            root.gates.push_back(&formula);
        work.push_back(std::move(root));
    }

    std::set<Mask> complete;
    while (!work.empty()) {
        Partial p = std::move(work.front());
        work.pop_front();
        ++res.expanded;

        if (opts.cutoff > 0.0) {
            const double rate = estimator.rate_bound(p.leaves);
            if (std::isfinite(rate) && std::min(1.0, rate * opts.t) < opts.cutoff) {
                double mult = 1.0;
                for (const auto* g : p.gates)
                    mult = std::min(1e300, mult * completion_count(*g, count_memo));
                res.discarded_bound += std::min(1.0, rate * opts.t) * mult;
                continue;
            }
        }

        if (p.gates.empty()) {
            complete.insert(std::move(p.leaves));
            continue;
        }

        const BoolFormula* g = p.gates.back();
        p.gates.pop_back();
        if (g->kind == BoolFormula::Kind::And) {
            for (const auto& a : g->args) {
                if (a.kind == BoolFormula::Kind::Literal)
                    p.leaves.set(table.index.at(a.leaf));
                else
                    p.gates.push_back(&a);
            }
            work.push_back(std::move(p));
        } else {  // Or: one branch per argument
            for (const auto& a : g->args) {
                Partial q = p;
                if (a.kind == BoolFormula::Kind::Literal)
                    q.leaves.set(table.index.at(a.leaf));
                else
                    q.gates.push_back(&a);
                work.push_back(std::move(q));
            }
        }
    }

    // Absorption: drop any set that contains another one.
    std::vector<Mask> masks(complete.begin(), complete.end());
    std::stable_sort(masks.begin(), masks.end(),
                     [](const Mask& a, const Mask& b) { return a.count() < b.count(); });
    std::vector<Mask> minimal;
    for (const auto& m : masks) {
        bool subsumed = false;
        for (const auto& kept : minimal) {
            if (kept.subset_of(m)) {
                subsumed = true;
                break;
            }
        }
        if (!subsumed) minimal.push_back(m);
    }

    for (const auto& m : minimal) {
        LeafSet s;
        for (int i = 0; i < static_cast<int>(nbits); ++i)
            if (m.test(i)) s.push_back(table.ids[i]);
        std::sort(s.begin(), s.end());
        res.cutsets.push_back(std::move(s));
    }
    std::sort(res.cutsets.begin(), res.cutsets.end());
    return res;
}

LeafSet CutSet::events() const {
    LeafSet s{initiator};
    for (const auto& b : on_demand) s.push_back(b.id);
    for (const auto& b : in_function) s.push_back(b.id);
    std::sort(s.begin(), s.end());
    return s;
}

ClassifiedCutSets classify_cutsets(const Bdmp& model, const std::vector<LeafSet>& mcs,
                                   std::vector<Diagnostic>* warnings) {
    ClassifiedCutSets out;
    if (warnings && !model.repair_groups.empty())
        warnings->push_back({"", "iab-repair-group-ignored",
                             "repair-crew couplings are ignored by the boolean engine; set the "
                             "coupled repair rates to 0 to stay conservative"});
    for (const auto& set : mcs) {
        std::vector<const Leaf*> initiators;
        for (const auto& id : set) {
            const Leaf* l = model.find_leaf(id);
            if (!l) throw ModelError("cut set references unknown leaf \"" + id + "\"");
            if (l->initiator) initiators.push_back(l);
        }
        if (initiators.size() != 1) {
            out.dropped.push_back({set.empty() ? "" : set.front(), "cutset-initiator-count",
                                   "cut set needs exactly one initiator-flagged leaf, found " +
                                       std::to_string(initiators.size())});
            continue;
        }
        if (initiators[0]->kind != LeafKind::ExpFailure) {
            out.dropped.push_back({initiators[0]->id, "cutset-initiator-kind",
                                   "initiator \"" + initiators[0]->id + "\" must be an exp leaf"});
            continue;
        }
        CutSet cs;
        cs.initiator = initiators[0]->id;
        cs.lambda_i = initiators[0]->lambda_active;
        cs.mu_i = initiators[0]->mu;
        for (const auto& id : set) {
            const Leaf* l = model.find_leaf(id);
            if (l == initiators[0]) continue;
            if (l->kind == LeafKind::OnDemand)
                cs.on_demand.push_back({l->id, l->gamma, l->mu});
            else
                cs.in_function.push_back({l->id, iab_barrier_rate(*l), l->mu});
        }
        out.cutsets.push_back(std::move(cs));
    }
    return out;
}

double iab_cutset_rate(const CutSet& cs) {
    if (cs.in_function.size() > 12)
        throw NumericError("iab_cutset_rate: more than 12 in-function barriers");
    double gammas = 1.0;
    double safe_rate = cs.mu_i;
    for (const auto& b : cs.on_demand) {
        gammas *= b.gamma;
        safe_rate += b.mu;  // an on-demand barrier repaired first means safety
    }
    if (gammas == 0.0 || cs.lambda_i == 0.0) return 0.0;

    const int k = static_cast<int>(cs.in_function.size());
    if (k == 0) return cs.lambda_i * gammas;  // the demand completes the cut set

    // States are subsets of down in-function barriers; the full subset is
    // `fail`, and `safe` absorbs initiator or on-demand repairs.
    const int full = (1 << k) - 1;
    const int fail = full;      // the full mask slot doubles as the fail state
    const int safe = full + 1;
    CtmcSparse chain;
    chain.state_names.resize(full + 2);
    for (int m = 0; m < full; ++m) chain.state_names[m] = "m" + std::to_string(m);
    chain.state_names[fail] = "fail";
    chain.state_names[safe] = "safe";
    chain.goal = {fail};
    for (int m = 0; m < full; ++m) {
        for (int b = 0; b < k; ++b) {
            if (m & (1 << b)) {
                if (cs.in_function[b].mu > 0.0)
                    chain.transitions.push_back({m, m & ~(1 << b), cs.in_function[b].mu,
                                                 "r:" + cs.in_function[b].id});
            } else if (cs.in_function[b].lambda > 0.0) {
                chain.transitions.push_back(
                    {m, m | (1 << b), cs.in_function[b].lambda, "f:" + cs.in_function[b].id});
            }
        }
        if (safe_rate > 0.0) chain.transitions.push_back({m, safe, safe_rate, "safe"});
    }
    chain.build_rows();

    const auto x = absorption_probabilities(chain, {fail}, {});
    return cs.lambda_i * gammas * x[0];
}

IabResult iab_system(std::vector<CutSet> mcs, double t) {
    IabResult res;
    res.t = t;
    res.frequency.reserve(mcs.size());
    for (const auto& cs : mcs) {
        const double f = iab_cutset_rate(cs);
        res.frequency.push_back(f);
        res.lambda_eq += f;
    }
    res.unreliability = -std::expm1(-res.lambda_eq * t);

    std::vector<size_t> order(mcs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (res.frequency[a] != res.frequency[b]) return res.frequency[a] > res.frequency[b];
        return mcs[a].events() < mcs[b].events();
    });
    std::vector<double> freq_sorted;
    for (size_t i : order) {
        res.cutsets.push_back(std::move(mcs[i]));
        freq_sorted.push_back(res.frequency[i]);
    }
    res.frequency = std::move(freq_sorted);
    return res;
}

namespace {

// Plain hash-consed reduced ordered BDD, large enough for MCS lists.
class BddBuilder {
  public:
    // terminals: 0 = false, 1 = true
    int mk(int var, int lo, int hi) {
        if (lo == hi) return lo;
        const auto key = std::tuple{var, lo, hi};
        auto it = unique_.find(key);
        if (it != unique_.end()) return it->second;
        nodes_.push_back({var, lo, hi});
        const int id = static_cast<int>(nodes_.size()) - 1 + 2;
        unique_.emplace(key, id);
        return id;
    }

    int apply_or(int a, int b) {
        if (a == 1 || b == 1) return 1;
        if (a == 0) return b;
        if (b == 0 || a == b) return a;
        if (a > b) std::swap(a, b);
        const auto key = std::pair{a, b};
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        const auto [va, la, ha] = node(a);
        const auto [vb, lb, hb] = node(b);
        int r;
        if (va == vb)
            r = mk(va, apply_or(la, lb), apply_or(ha, hb));
        else if (va < vb)
            r = mk(va, apply_or(la, b), apply_or(ha, b));
        else
            r = mk(vb, apply_or(a, lb), apply_or(a, hb));
        cache_.emplace(key, r);
        return r;
    }

    double probability(int root, const std::vector<double>& p) {
        prob_memo_.clear();
        return prob(root, p);
    }

    size_t reachable_count(int root) const {
        if (root < 2) return 0;
        std::set<int> seen;
        std::vector<int> stack{root};
        while (!stack.empty()) {
            int n = stack.back();
            stack.pop_back();
            if (n < 2 || !seen.insert(n).second) continue;
            const auto [v, lo, hi] = node(n);
            stack.push_back(lo);
            stack.push_back(hi);
        }
        return seen.size();
    }

  private:
    std::tuple<int, int, int> node(int id) const { return nodes_[id - 2]; }

    double prob(int n, const std::vector<double>& p) {
        if (n == 0) return 0.0;
        if (n == 1) return 1.0;
        auto it = prob_memo_.find(n);
        if (it != prob_memo_.end()) return it->second;
        const auto [v, lo, hi] = node(n);
        const double r = p[v] * prob(hi, p) + (1.0 - p[v]) * prob(lo, p);
        prob_memo_.emplace(n, r);
        return r;
    }

    std::vector<std::tuple<int, int, int>> nodes_;
    std::map<std::tuple<int, int, int>, int> unique_;
    std::map<std::pair<int, int>, int> cache_;
    std::unordered_map<int, double> prob_memo_;
};

std::pair<std::vector<std::string>, std::vector<double>> bdd_variable_order(
    const std::vector<LeafSet>& mcs, const std::map<std::string, double>& leaf_prob) {
    std::set<std::string> used;
    for (const auto& cs : mcs) used.insert(cs.begin(), cs.end());
    std::vector<std::string> order(used.begin(), used.end());
    for (const auto& id : order) {
        auto it = leaf_prob.find(id);
        if (it == leaf_prob.end()) throw NumericError("missing probability for leaf \"" + id + "\"");
        if (!(it->second >= 0.0 && it->second <= 1.0))
            throw NumericError("leaf probability out of [0,1] for \"" + id + "\"");
    }
    std::sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
        const double pa = leaf_prob.at(a), pb = leaf_prob.at(b);
        if (pa != pb) return pa > pb;
        return a < b;
    });
    std::vector<double> probs;
    probs.reserve(order.size());
    for (const auto& id : order) probs.push_back(leaf_prob.at(id));
    return {order, probs};
}

}  // namespace

BddProbability mcs_bdd_probability(const std::vector<LeafSet>& mcs,
                                   const std::map<std::string, double>& leaf_prob) {
    BddProbability out;
    if (mcs.empty()) return out;
    auto [order, probs] = bdd_variable_order(mcs, leaf_prob);
    std::map<std::string, int> var_of;
    for (size_t i = 0; i < order.size(); ++i) var_of[order[i]] = static_cast<int>(i);

    BddBuilder b;
    int root = 0;
    for (const auto& cs : mcs) {
        std::vector<int> vars;
        vars.reserve(cs.size());
        for (const auto& id : cs) vars.push_back(var_of.at(id));
        std::sort(vars.begin(), vars.end());
        int conj = 1;
        for (auto it = vars.rbegin(); it != vars.rend(); ++it) conj = b.mk(*it, 0, conj);
        root = b.apply_or(root, conj);
    }
    out.probability = b.probability(root, probs);
    out.node_count = b.reachable_count(root);
    return out;
}

std::pair<double, double> mcs_bounds(const std::vector<LeafSet>& mcs,
                                     const std::map<std::string, double>& leaf_prob) {
    double sum = 0.0, prod = 1.0;
    for (const auto& cs : mcs) {
        double p = 1.0;
        for (const auto& id : cs) {
            auto it = leaf_prob.find(id);
            if (it == leaf_prob.end())
                throw NumericError("missing probability for leaf \"" + id + "\"");
            p *= it->second;
        }
        sum += p;
        prod *= 1.0 - p;
    }
    return {sum, 1.0 - prod};
}

double leaf_probability_at(const Leaf& leaf, double t) {
    switch (leaf.kind) {
        case LeafKind::ExpFailure:
            return -std::expm1(-leaf.lambda_active * t);
        case LeafKind::OnDemand:
            return leaf.gamma;
        case LeafKind::PhaseErlang: {
            // P(Erlang(k, r) <= t) = 1 - sum_{i<k} e^{-rt} (rt)^i / i!
            const double rt = leaf.erlang_rate * t;
            double term = std::exp(-rt), tail = term;
            for (int i = 1; i < leaf.erlang_phases; ++i) {
                term *= rt / i;
                tail += term;
            }
            return std::max(0.0, 1.0 - tail);
        }
    }
    return 0.0;
}

}  // namespace bdmp
