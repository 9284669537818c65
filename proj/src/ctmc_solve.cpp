#include "bdmp/ctmc_solve.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <Eigen/IterativeLinearSolvers>

namespace bdmp {

CtmcSparse make_absorbing(const CtmcSparse& ctmc, const std::vector<int>& goals) {
    std::set<int> g(goals.begin(), goals.end());
    CtmcSparse out;
    out.state_names = ctmc.state_names;
    out.states = ctmc.states;
    out.goal.assign(g.begin(), g.end());
    for (const auto& t : ctmc.transitions)
        if (!g.count(t.src)) out.transitions.push_back(t);
    out.build_rows();
    return out;
}

UniformizedChain uniformize(const CtmcSparse& ctmc) {
    const int n = ctmc.n_states();
    const auto r = ctmc.exit_rates();
    UniformizedChain u;
    u.n = n;
    u.rate = 0.0;
    for (double x : r) u.rate = std::max(u.rate, x);
    if (u.rate <= 0.0) {
        u.degenerate = true;
        u.rate = 0.0;
    }

    // Collapse parallel edges per (src, dst); add the self-loop filling the
    // row up to probability 1.
    u.row_start.assign(n + 1, 0);
    std::vector<std::vector<std::pair<int, double>>> rows(n);
    for (const auto& t : ctmc.transitions) {
        double p = u.degenerate ? 0.0 : t.rate / u.rate;
        auto& row = rows[t.src];
        auto it = std::find_if(row.begin(), row.end(), [&](const auto& e) { return e.first == t.dst; });
        if (it == row.end())
            row.push_back({t.dst, p});
        else
            it->second += p;
    }
    for (int s = 0; s < n; ++s) {
        bool has_self = false;
        const double self = u.degenerate ? 1.0 : 1.0 - r[s] / u.rate;
        // An existing self-loop scales like any other edge and the filler
        // (r - r(s))/r comes on top of it.
        for (auto& [dst, p] : rows[s]) {
            if (dst == s) {
                p += self;
                has_self = true;
            }
        }
        if (!has_self && (self > 0.0 || rows[s].empty())) rows[s].push_back({s, self});
        std::sort(rows[s].begin(), rows[s].end());
    }
    for (int s = 0; s < n; ++s) {
        u.row_start[s + 1] = u.row_start[s] + static_cast<int>(rows[s].size());
        for (auto& [dst, p] : rows[s]) {
            u.col.push_back(dst);
            u.prob.push_back(p);
        }
    }
    return u;
}

FoxGlynn poisson_weights(double rt, double tol) {
    if (!(rt >= 0.0) || !std::isfinite(rt)) throw NumericError("poisson_weights: rt must be finite and >= 0");
    if (!(tol > 0.0 && tol < 1.0)) throw NumericError("poisson_weights: tol must lie in (0,1)");
    if (tol < 1e-14)
        throw NumericError("poisson_weights: tol below working precision (min 1e-14)");

    FoxGlynn fg;
    if (rt == 0.0) {
        fg.left = fg.right = 0;
        fg.weights = {1.0};
        return fg;
    }

    const int mode = static_cast<int>(rt);
    // Unnormalized weights around the mode; w[mode] = 1. Terms below 1e-30
    // relative are beyond double resolution of the total mass.
    std::vector<double> down, up;  // mode-1, mode-2, ... and mode+1, ...
    double w = 1.0;
    for (int k = mode; k > 0; --k) {
        w *= static_cast<double>(k) / rt;
        if (w < 1e-30) break;
        down.push_back(w);
    }
    w = 1.0;
    for (int k = mode + 1;; ++k) {
        w *= rt / static_cast<double>(k);
        if (w < 1e-30) break;
        up.push_back(w);
    }

    const int lo = mode - static_cast<int>(down.size());
    const int hi = mode + static_cast<int>(up.size());
    std::vector<double> raw(hi - lo + 1);
    for (size_t i = 0; i < down.size(); ++i) raw[mode - lo - 1 - static_cast<int>(i)] = down[i];
    raw[mode - lo] = 1.0;
    for (size_t i = 0; i < up.size(); ++i) raw[mode - lo + 1 + static_cast<int>(i)] = up[i];

    // Sum smallest-first for an accurate total, then normalize: the full
    // range carries all representable Poisson mass, so total ~ e^{rt}/scale.
    double total = 0.0;
    {
        std::vector<double> sorted = raw;
        std::sort(sorted.begin(), sorted.end());
        for (double x : sorted) total += x;
    }

    // Trim up to tol/2 from each tail.
    const double budget = 0.5 * tol * total;
    int left = lo, right = hi;
    double trimmed = 0.0;
    while (left < mode && trimmed + raw[left - lo] <= budget) trimmed += raw[left++ - lo];
    trimmed = 0.0;
    while (right > mode && trimmed + raw[right - lo] <= budget) trimmed += raw[right-- - lo];

    fg.left = left;
    fg.right = right;
    fg.weights.resize(right - left + 1);
    for (int k = left; k <= right; ++k) fg.weights[k - left] = raw[k - lo] / total;
    return fg;
}

TransientResult transient(const CtmcSparse& ctmc, double t, double tol) {
    if (!(t >= 0.0)) throw NumericError("transient: t must be >= 0");
    const int n = ctmc.n_states();
    TransientResult res;
    res.t = t;
    res.tol = tol;
    res.distribution.assign(n, 0.0);
    if (n > 0) res.distribution[0] = 1.0;

    const UniformizedChain u = uniformize(ctmc);
    if (!u.degenerate && t > 0.0) {
        const FoxGlynn fg = poisson_weights(u.rate * t, tol);
        std::vector<double> v = res.distribution, next(n, 0.0), acc(n, 0.0);
        if (fg.left == 0)
            for (int s = 0; s < n; ++s) acc[s] += fg.weights[0] * v[s];
        for (int i = 1; i <= fg.right; ++i) {
            std::fill(next.begin(), next.end(), 0.0);
            for (int s = 0; s < n; ++s) {
                const double vs = v[s];
                if (vs == 0.0) continue;
                for (int e = u.row_start[s]; e < u.row_start[s + 1]; ++e)
                    next[u.col[e]] += vs * u.prob[e];
            }
            v.swap(next);
            if (i >= fg.left)
                for (int s = 0; s < n; ++s) acc[s] += fg.weights[i - fg.left] * v[s];
        }
        res.distribution = std::move(acc);
        res.left = fg.left;
        res.right = fg.right;
    }

    for (int g : ctmc.goal) res.goal_probability += res.distribution[g];
    return res;
}

std::vector<double> absorption_probabilities(const CtmcSparse& ctmc,
                                             const std::vector<int>& targets,
                                             const std::vector<int>& taboo) {
    const int n = ctmc.n_states();
    std::vector<int> kind(n, 0);  // 0 unknown, 1 target, 2 taboo/zero
    for (int s : targets) kind[s] = 1;
    for (int s : taboo) {
        if (kind[s] == 1) throw NumericError("absorption_probabilities: targets and taboo overlap");
        kind[s] = 2;
    }

    // States that cannot reach a target without passing through taboo get
    // probability zero; removing them keeps the linear system nonsingular.
    std::vector<std::vector<int>> pred(n);
    for (const auto& t : ctmc.transitions)
        if (kind[t.src] != 2 && t.rate > 0.0) pred[t.dst].push_back(t.src);
    std::vector<uint8_t> can_reach(n, 0);
    std::vector<int> stack;
    for (int s : targets) {
        can_reach[s] = 1;
        stack.push_back(s);
    }
    while (!stack.empty()) {
        int s = stack.back();
        stack.pop_back();
        for (int p : pred[s]) {
            if (can_reach[p] || kind[p] == 2) continue;
            can_reach[p] = 1;
            stack.push_back(p);
        }
    }

    const auto r = ctmc.exit_rates();
    std::vector<int> unknown;
    std::vector<int> pos(n, -1);
    for (int s = 0; s < n; ++s) {
        if (kind[s] == 0 && can_reach[s] && r[s] > 0.0) {
            pos[s] = static_cast<int>(unknown.size());
            unknown.push_back(s);
        }
    }

    std::vector<double> x(n, 0.0);
    for (int s : targets) x[s] = 1.0;

    const int m = static_cast<int>(unknown.size());
    if (m > 0) {
        // (I - P_uu) x_u = P_ut * 1 over the embedded chain.
        std::vector<Eigen::Triplet<double>> trips;
        Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
        for (int i = 0; i < m; ++i) trips.emplace_back(i, i, 1.0);
        for (const auto& t : ctmc.transitions) {
            if (pos[t.src] < 0) continue;
            const double p = t.rate / r[t.src];
            if (kind[t.dst] == 1)
                b[pos[t.src]] += p;
            else if (pos[t.dst] >= 0)
                trips.emplace_back(pos[t.src], pos[t.dst], -p);
        }
        Eigen::SparseMatrix<double> A(m, m);
        A.setFromTriplets(trips.begin(), trips.end());
        Eigen::VectorXd sol;
        if (m < 10000) {
            Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
            lu.compute(A);
            if (lu.info() != Eigen::Success)
                throw NumericError("absorption_probabilities: singular embedded system");
            sol = lu.solve(b);
        } else {
            Eigen::BiCGSTAB<Eigen::SparseMatrix<double>> it;
            it.setTolerance(1e-12);
            it.compute(A);
            sol = it.solve(b);
            if (it.info() != Eigen::Success)
                throw NumericError("absorption_probabilities: iterative solve did not converge");
        }
        for (int i = 0; i < m; ++i) x[unknown[i]] = std::clamp(sol[i], 0.0, 1.0);
    }
    return x;
}

}  // namespace bdmp
