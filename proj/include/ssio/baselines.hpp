#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ssio/annealer.hpp"
#include "ssio/linalg.hpp"
#include "ssio/rng.hpp"
#include "ssio/types.hpp"

namespace ssio {

struct MethodResult {
    std::string method;
    HardDesign design;
    double wall_time_s = 0.0;
    int iterations = 0;
    bool converged = false;
};

namespace detail {

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

inline double binom(int n, int r) {
    double v = 1.0;
    for (int k = 1; k <= r; ++k) v *= static_cast<double>(n - r + k) / k;
    return v;
}

/// Lexicographic advance of an r-combination of {0..n-1}. Returns false once
/// exhausted.
inline bool next_combination(std::vector<int>& idx, int n) {
    const int r = static_cast<int>(idx.size());
    for (int k = r - 1; k >= 0; --k) {
        if (idx[k] < n - r + k) {
            ++idx[k];
            for (int j = k + 1; j < r; ++j) idx[j] = idx[j - 1] + 1;
            return true;
        }
    }
    return false;
}

inline std::vector<int> combination_to_selection(const std::vector<int>& idx, int n) {
    std::vector<int> s(n, 0);
    for (int i : idx) s[i] = 1;
    return s;
}

/// Draws an r-subset uniformly without replacement (partial Fisher-Yates).
inline std::vector<int> random_subset(int n, int r, Rng& rng) {
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i) pool[i] = i;
    for (int k = 0; k < r; ++k) {
        const auto j = k + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n - k)));
        std::swap(pool[k], pool[j]);
    }
    std::vector<int> s(n, 0);
    for (int k = 0; k < r; ++k) s[pool[k]] = 1;
    return s;
}

} // namespace detail

/// Mean imputation: each missing cell gets its column's known-entry mean,
/// clamped to the cell's bounds (bound midpoint for fully-missing columns).
inline Matrix mean_impute(const IncompleteMatrix& inc) { return mean_filled(inc); }

/// Best-improvement Fedorov exchange from a random full-rank start:
/// repeatedly applies the single (selected, unselected) swap with the largest
/// strict cost decrease; terminates when no swap improves. Up to
/// `restarts` random starts, best result kept.
inline MethodResult fedorov_exchange(const Matrix& X, int r, DesignCriterion crit,
                                     std::uint64_t seed, int restarts = 5) {
    const detail::Stopwatch watch;
    const int n = static_cast<int>(X.rows());
    if (r < X.cols() || r > n) throw Infeasible("fedorov_exchange: need p <= r <= n");
    Rng rng(seed);

    std::vector<int> best_s;
    double best_cost = kInfCost;
    int total_swaps = 0;
    int started = 0;
    for (int restart = 0; restart < restarts; ++restart) {
        // Find a full-rank start; a handful of draws per restart.
        std::vector<int> s;
        double cost = kInfCost;
        for (int attempt = 0; attempt < 20 && !std::isfinite(cost); ++attempt) {
            s = detail::random_subset(n, r, rng);
            cost = hard_cost_or_inf(X, s, crit);
        }
        if (!std::isfinite(cost)) continue;
        ++started;

        bool improved = true;
        while (improved) {
            improved = false;
            int swap_out = -1, swap_in = -1;
            double swap_cost = cost;
            for (int i = 0; i < n; ++i) {
                if (!s[i]) continue;
                for (int j = 0; j < n; ++j) {
                    if (s[j]) continue;
                    s[i] = 0; s[j] = 1;
                    const double c = hard_cost_or_inf(X, s, crit);
                    s[i] = 1; s[j] = 0;
                    if (c < swap_cost) { swap_cost = c; swap_out = i; swap_in = j; }
                }
            }
            if (swap_out >= 0) {
                s[swap_out] = 0;
                s[swap_in] = 1;
                cost = swap_cost;
                ++total_swaps;
                improved = true;
            }
        }
        if (cost < best_cost) { best_cost = cost; best_s = s; }
    }
    if (started == 0)
        throw Infeasible("fedorov_exchange: no full-rank start found in " +
                         std::to_string(restarts) + " restarts");
    return MethodResult{"fedorov", HardDesign{best_s, X, best_cost}, watch.seconds(),
                        total_swaps, true};
}

/// Uniform selection of an r-subset without replacement. Rank-deficient draws
/// are reported with cost +inf, never resampled.
inline MethodResult uniform_sample(const Matrix& X, int r, std::uint64_t seed) {
    const detail::Stopwatch watch;
    const int n = static_cast<int>(X.rows());
    if (r > n) throw Infeasible("uniform_sample: r > n");
    Rng rng(seed);
    std::vector<int> s = detail::random_subset(n, r, rng);
    const double cost = hard_cost_or_inf(X, s, DesignCriterion::A);
    return MethodResult{"uniform", HardDesign{std::move(s), X, cost}, watch.seconds(), 1, true};
}

namespace detail {

/// Euclidean projection onto {q : sum q = r, 0 <= q <= 1} by bisection on
/// the uniform shift.
inline Vector project_capped_simplex(const Vector& v, int r) {
    const double target = static_cast<double>(r);
    auto mass = [&](double tau) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < v.size(); ++i)
            acc += std::clamp(v[i] - tau, 0.0, 1.0);
        return acc;
    };
    double lo = v.minCoeff() - 1.0;   // mass >= target
    double hi = v.maxCoeff();         // mass <= target (each coord <= 0... clamp)
    // Widen until bracketing is certain.
    while (mass(lo) < target) lo -= 1.0;
    while (mass(hi) > target) hi += 1.0;
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mass(mid) >= target) lo = mid; else hi = mid;
    }
    const double tau = 0.5 * (lo + hi);
    Vector out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = std::clamp(v[i] - tau, 0.0, 1.0);
    return out;
}

} // namespace detail

/// Direct local optimization of the relaxed A-cost over
/// (q in {sum q = r} /\ [0,1]^n, m in boxes): projected gradient with Armijo
/// backtracking, no annealing. Starts at q = r/n and mean-imputed m, hardens
/// at convergence. Exhibits the local minima the annealed method escapes.
inline MethodResult direct_joint(const IncompleteMatrix& inc, int r,
                                 std::uint64_t /*seed*/ = 0, int max_iters = 2000) {
    const detail::Stopwatch watch;
    const int n = inc.rows();
    if (r < inc.cols() || r > n) throw Infeasible("direct_joint: need p <= r <= n");
    const auto& cells = inc.missing();
    const auto& boxes = inc.bounds();

    Matrix X = mean_filled(inc);
    Vector q = Vector::Constant(n, static_cast<double>(r) / n);

    auto objective = [&](const Matrix& Xc, const Vector& qc) {
        return criterion_cost_or_inf(fisher_matrix(Xc, qc), DesignCriterion::A);
    };

    double f = objective(X, q);
    if (!std::isfinite(f)) throw SingularInformation("direct_joint: singular at start");

    double step = 1.0;
    int iter = 0;
    bool converged = false;
    for (; iter < max_iters; ++iter) {
        SpdFactor fac(fisher_matrix(X, q));
        Vector grad_q(n);
        for (int i = 0; i < n; ++i)
            grad_q[i] = -fac.quad_inverse(X.row(i).transpose(), 2);
        std::vector<double> grad_m(cells.size());
        for (std::size_t k = 0; k < cells.size(); ++k) {
            const Cell c = cells[k];
            const Vector w = detail::inverse_column(fac, c.col, DesignCriterion::A);
            grad_m[k] = -2.0 * q[c.row] * X.row(c.row).dot(w.transpose());
        }

        bool accepted = false;
        double t = step;
        for (int bt = 0; bt < 50; ++bt) {
            Vector q_new = detail::project_capped_simplex(q - t * grad_q, r);
            Matrix X_new = X;
            for (std::size_t k = 0; k < cells.size(); ++k) {
                const Cell c = cells[k];
                X_new(c.row, c.col) =
                    std::clamp(X(c.row, c.col) - t * grad_m[k], boxes[k].lo, boxes[k].hi);
            }
            double pred = grad_q.dot(q_new - q);
            for (std::size_t k = 0; k < cells.size(); ++k)
                pred += grad_m[k] * (X_new(cells[k].row, cells[k].col) -
                                     X(cells[k].row, cells[k].col));
            const double f_new = objective(X_new, q_new);
            if (std::isfinite(f_new) && f_new <= f + 1e-4 * pred && pred < 0.0) {
                const double move = std::max((q_new - q).cwiseAbs().maxCoeff(),
                                             cells.empty() ? 0.0
                                                           : (X_new - X).cwiseAbs().maxCoeff());
                q = std::move(q_new);
                X = std::move(X_new);
                f = f_new;
                accepted = true;
                step = t * 2.0;   // gentle step growth after success
                if (move < 1e-9) { converged = true; }
                break;
            }
            t *= 0.5;
        }
        if (!accepted || converged) {
            converged = true;
            break;
        }
    }

    HardDesign hd = harden(q, X, r, DesignCriterion::A);
    return MethodResult{"direct", std::move(hd), watch.seconds(), iter, converged};
}

/// Exhaustive A/D-optimal selection over all r-subsets of a complete matrix.
/// Rank-deficient subsets count as +inf; exact ties resolve to the
/// lexicographically smallest selection vector. Guarded at C(n,r) <= 1e6.
inline HardDesign brute_force_select(const Matrix& X, int r, DesignCriterion crit) {
    const int n = static_cast<int>(X.rows());
    if (r < 1 || r > n) throw Infeasible("brute_force_select: r outside [1, n]");
    if (detail::binom(n, r) > 1e6)
        throw GuardError("brute_force_select: C(n,r) exceeds 1e6");

    std::vector<int> idx(r);
    for (int k = 0; k < r; ++k) idx[k] = k;
    std::vector<int> best_s;
    double best_cost = kInfCost;
    do {
        std::vector<int> s = detail::combination_to_selection(idx, n);
        const double c = hard_cost_or_inf(X, s, crit);
        if (c < best_cost || (c == best_cost && !best_s.empty() &&
                              std::lexicographical_compare(s.begin(), s.end(),
                                                           best_s.begin(), best_s.end()))) {
            best_cost = c;
            best_s = std::move(s);
        }
    } while (detail::next_combination(idx, n));
    if (!std::isfinite(best_cost))
        throw Infeasible("brute_force_select: every r-subset is rank-deficient");
    return HardDesign{best_s, X, best_cost};
}

/// Desk-scale joint oracle: exhaustive over r-subsets crossed with per-cell
/// uniform grids over the bounds. Guarded at C(n,r) * grid^|missing| <= 1e7.
inline HardDesign brute_force_joint(const IncompleteMatrix& inc, int r, DesignCriterion crit,
                                    int grid_points) {
    const int n = inc.rows();
    const auto& cells = inc.missing();
    const auto& boxes = inc.bounds();
    if (grid_points < 1) throw DimensionError("brute_force_joint: grid_points must be >= 1");
    const double combos =
        detail::binom(n, r) * std::pow(static_cast<double>(grid_points),
                                       static_cast<double>(cells.size()));
    if (combos > 1e7)
        throw GuardError("brute_force_joint: C(n,r) * grid^|missing| exceeds 1e7");

    std::vector<double> fill(cells.size(), 0.0);
    HardDesign best;
    best.cost = kInfCost;

    auto grid_value = [&](std::size_t k, int t) {
        const Bounds b = boxes[k];
        if (grid_points == 1 || b.lo == b.hi) return 0.5 * (b.lo + b.hi);
        return b.lo + (b.hi - b.lo) * static_cast<double>(t) / (grid_points - 1);
    };

    std::vector<int> ticks(cells.size(), 0);
    while (true) {
        for (std::size_t k = 0; k < cells.size(); ++k) fill[k] = grid_value(k, ticks[k]);
        Matrix X = inc.filled(fill);
        try {
            HardDesign cand = brute_force_select(X, r, crit);
            if (cand.cost < best.cost) best = std::move(cand);
        } catch (const Infeasible&) {
            // every subset singular on this grid point; skip
        }
        // Advance the mixed-radix tick counter.
        std::size_t k = 0;
        for (; k < ticks.size(); ++k) {
            if (++ticks[k] < grid_points) break;
            ticks[k] = 0;
        }
        if (k == ticks.size()) break;
        if (cells.empty()) break;
    }
    if (!std::isfinite(best.cost))
        throw Infeasible("brute_force_joint: no full-rank design on the grid");
    return best;
}

} // namespace ssio
