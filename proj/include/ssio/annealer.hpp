#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "ssio/linalg.hpp"
#include "ssio/types.hpp"

namespace ssio {

/// Geometric annealing schedule plus inner-loop tolerances. t_init and t_min
/// of 0 mean "choose automatically": t_init = 10 * max_i sensitivity at the
/// uniform start, t_min = t_init * 1e-6.
struct AnnealSchedule {
    double t_init = 0.0;
    double alpha = 0.9;
    double t_min = 0.0;
    int inner_max_iters = 500;
    double inner_tol = 1e-7;
    double mass_tol = 1e-6;
    double damping = 1.0;   // q/mu blend factor, auto-halved down to 1/16 on ascent
    double ridge = 0.0;     // jitter added to R during annealing only
};

struct TracePoint {
    double temperature;
    double free_energy;
    double entropy;
};

/// Everything the fixed-point iteration touches: the current imputations
/// (X is the pattern's matrix with missing cells filled in), the relaxed
/// selection weights, the multiplier and temperature.
struct AnnealState {
    IncompleteMatrix pattern;
    Matrix X;
    Vector q;
    int r;
    double mu = 0.0;
    double T = 0.0;
    double free_energy = 0.0;
    DesignCriterion criterion = DesignCriterion::A;
    double ridge = 0.0;
    std::vector<TracePoint> trace;
    bool converged = false;
    int last_inner_iters = 0;
    std::vector<double> last_cycle_energies;   // accepted cycles of the latest inner loop

    AnnealState(IncompleteMatrix pat, Matrix x0, Vector q0, int r_in)
        : pattern(std::move(pat)), X(std::move(x0)), q(std::move(q0)), r(r_in) {
        if (q.size() != X.rows())
            throw DimensionError("AnnealState: q length mismatch");
        if (r < pattern.cols() || r > pattern.rows())
            throw Infeasible("AnnealState: need p <= r <= n");
    }

    Matrix ridged_fisher() const {
        Matrix R = fisher_matrix(X, q);
        if (ridge > 0.0) R.diagonal().array() += ridge;
        return R;
    }
};

/// Missing cells initialized to the column mean of known entries, clamped to
/// the cell's bounds; fully-missing columns get bound midpoints.
inline Matrix mean_filled(const IncompleteMatrix& inc) {
    const int n = inc.rows();
    const int p = inc.cols();
    Vector colsum = Vector::Zero(p);
    Eigen::VectorXi colcount = Eigen::VectorXi::Zero(p);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j)
            if (!inc.is_missing(i, j)) {
                colsum[j] += inc.raw()(i, j);
                colcount[j] += 1;
            }
    std::vector<double> fill(inc.missing_count());
    for (std::size_t k = 0; k < inc.missing_count(); ++k) {
        const int j = inc.missing()[k].col;
        const Bounds b = inc.bounds()[k];
        const double v = colcount[j] > 0 ? colsum[j] / colcount[j] : 0.5 * (b.lo + b.hi);
        fill[k] = std::clamp(v, b.lo, b.hi);
    }
    return inc.filled(fill);
}

namespace detail {

inline double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

/// sigma((s - mu) / T) with the exponent clamped to +-500 and the result
/// kept strictly inside (0, 1).
inline double clamped_sigmoid(double s, double mu, double T) {
    double z = (s - mu) / T;
    z = std::clamp(z, -500.0, 500.0);
    const double q = 1.0 / (1.0 + std::exp(-z));
    constexpr double lo = 1e-300;
    const double hi = 1.0 - std::numeric_limits<double>::epsilon();
    return std::clamp(q, lo, hi);
}

} // namespace detail

/// Per-row sensitivities driving the q-update: x^T R^-2 x for A-optimality,
/// (cost/p) * x^T R^-1 x for D-optimality. In both cases the value equals
/// -d(cost)/dq_i.
inline Vector row_sensitivities(const Matrix& X, const Vector& q, DesignCriterion crit,
                                double ridge = 0.0) {
    Matrix R = fisher_matrix(X, q);
    if (ridge > 0.0) R.diagonal().array() += ridge;
    SpdFactor f(R);
    const int n = static_cast<int>(X.rows());
    Vector s(n);
    if (crit == DesignCriterion::A) {
        for (int i = 0; i < n; ++i) s[i] = f.quad_inverse(X.row(i).transpose(), 2);
    } else {
        const double d = std::exp(-f.log_det() / f.dim());
        const double scale = d / static_cast<double>(f.dim());
        for (int i = 0; i < n; ++i) s[i] = scale * f.quad_inverse(X.row(i).transpose(), 1);
    }
    return s;
}

/// -H(q), i.e. sum_i [q ln q + (1-q) ln(1-q)].
inline double neg_entropy(const Vector& q) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < q.size(); ++i)
        acc += detail::xlogx(q[i]) + detail::xlogx(1.0 - q[i]);
    return acc;
}

/// The annealed Lagrangian: criterion cost - T H + mu (sum q - r).
/// Singular information matrices map to +inf.
inline double free_energy(const AnnealState& st) {
    const double cost = criterion_cost_or_inf(st.ridged_fisher(), st.criterion);
    return cost + st.T * neg_entropy(st.q) + st.mu * (st.q.sum() - st.r);
}

/// One sigmoid q-step blended with the current q: (1-damping) q + damping q+.
inline Vector q_update(const AnnealState& st, double damping = 1.0) {
    const Vector sens = row_sensitivities(st.X, st.q, st.criterion, st.ridge);
    Vector out(st.q.size());
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        const double qi = detail::clamped_sigmoid(sens[i], st.mu, st.T);
        out[i] = (1.0 - damping) * st.q[i] + damping * qi;
    }
    return out;
}

namespace detail {

/// mu+ = T log(K / r) with K = sum_i 1/(e^{-mu/T} + e^{-s_i/T}). Evaluated in
/// the algebraically identical overflow-free form mu + T (log sum_i sigma_i - log r)
/// where sigma_i = sigma((s_i - mu)/T).
inline double mu_step(const Vector& sens, double mu, double T, int r) {
    double sum_sigma = 0.0;
    for (Eigen::Index i = 0; i < sens.size(); ++i)
        sum_sigma += clamped_sigmoid(sens[i], mu, T);
    const double out = mu + T * (std::log(sum_sigma) - std::log(static_cast<double>(r)));
    if (!std::isfinite(out)) throw NumericalError("mu_update: nonfinite multiplier");
    return out;
}

} // namespace detail

inline double mu_update(const AnnealState& st) {
    const Vector sens = row_sensitivities(st.X, st.q, st.criterion, st.ridge);
    return detail::mu_step(sens, st.mu, st.T, st.r);
}

namespace detail {

/// The multiplier mu_step converges to: the unique mu with
/// sum_i sigma((s_i - mu)/T) = r. The left side is strictly decreasing in mu,
/// so bisection from an expanding bracket is exact and deterministic. When r
/// equals n the target is unattainable (each sigma < 1); the bracket guard
/// then returns a very negative mu, which saturates every weight as intended.
inline double mu_solve(const Vector& sens, double T, int r, double guess) {
    const double target = static_cast<double>(r);
    auto mass = [&](double m) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < sens.size(); ++i) acc += clamped_sigmoid(sens[i], m, T);
        return acc;
    };
    double lo = guess, hi = guess;
    double span = std::max({1.0, std::abs(guess), T});
    while (mass(lo) < target && span < 1e30) { lo -= span; span *= 2.0; }
    span = std::max({1.0, std::abs(guess), T});
    while (mass(hi) > target && span < 1e30) { hi += span; span *= 2.0; }
    if (mass(lo) < target) return lo;   // r == n: saturate from below
    if (mass(hi) > target) return hi;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mass(mid) >= target) lo = mid; else hi = mid;
        if (hi - lo <= 1e-15 * std::max(1.0, std::abs(lo))) break;
    }
    return 0.5 * (lo + hi);
}

} // namespace detail

namespace detail {

inline std::size_t cell_index(const IncompleteMatrix& inc, Cell cell) {
    const auto& m = inc.missing();
    const auto it = std::lower_bound(m.begin(), m.end(), cell);
    if (it == m.end() || !(*it == cell))
        throw DimensionError("cell (" + std::to_string(cell.row) + "," +
                             std::to_string(cell.col) + ") is not a missing cell");
    return static_cast<std::size_t>(it - m.begin());
}

/// Column k of R^-power (power 2 for A, 1 for D).
inline Vector inverse_column(const SpdFactor& f, int k, DesignCriterion crit) {
    Vector e = Vector::Zero(f.dim());
    e[k] = 1.0;
    Vector w = f.solve(e);
    if (crit == DesignCriterion::A) w = f.solve(w);
    return w;
}

/// Free energy as a function of one imputed coordinate, everything else fixed
/// (R rebuilt from the modified matrix).
inline double coordinate_free_energy(AnnealState& st, Cell cell, double value) {
    const double saved = st.X(cell.row, cell.col);
    st.X(cell.row, cell.col) = value;
    const double L = free_energy(st);
    st.X(cell.row, cell.col) = saved;
    return L;
}

} // namespace detail

namespace detail {

/// x_jk = -(1 / w_k) sum_{l != k} x_jl w_l with w = column k of the inverse
/// power of R.
inline double stationary_coordinate(const SpdFactor& f, const Vector& xj, int k,
                                    DesignCriterion crit) {
    const Vector w = inverse_column(f, k, crit);
    const double wk = w[k];
    if (!(wk > 0.0)) throw SingularInformation("impute_update: nonpositive diagonal of R^-2");
    const double cross = xj.dot(w) - xj[k] * wk;
    return -cross / wk;
}

} // namespace detail

/// Stationary value of the coordinate x_jk with R frozen:
/// x_jk = -(1 / w_k) sum_{l != k} x_jl w_l where w = column k of R^-2
/// (R^-1 under D-optimality). Minimizes the frozen-R quadratic surrogate.
inline double impute_update_unconstrained(const AnnealState& st, Cell cell) {
    SpdFactor f(st.ridged_fisher());
    return detail::stationary_coordinate(f, st.X.row(cell.row).transpose(), cell.col,
                                         st.criterion);
}

/// True partial derivative of the free energy w.r.t. the imputed coordinate:
/// -2 q_j x_j^T R^-2 e_k for A-optimality (the stationarity condition
/// x_j^T R^-2 e_k = 0 is unchanged by the -2 q_j factor).
inline double impute_gradient(const AnnealState& st, Cell cell) {
    Matrix R = st.ridged_fisher();
    SpdFactor f(R);
    const Vector w = detail::inverse_column(f, cell.col, st.criterion);
    const double inner = st.X.row(cell.row).dot(w.transpose());
    double scale = -2.0 * st.q[cell.row];
    if (st.criterion == DesignCriterion::D)
        scale *= std::exp(-f.log_det() / f.dim()) / static_cast<double>(f.dim());
    return scale * inner;
}

namespace detail {

/// Best value on a uniform grid over the cell's bounds (including both
/// endpoints), judged by the coordinate free energy. Returns the current
/// value when nothing on the grid improves on it, so the coordinate free
/// energy never increases.
inline double grid_scan_coordinate(AnnealState& st, Cell cell, int grid) {
    const std::size_t idx = cell_index(st.pattern, cell);
    const Bounds b = st.pattern.bounds()[idx];
    double best_v = st.X(cell.row, cell.col);
    if (b.hi <= b.lo) return b.lo;
    double best_L = coordinate_free_energy(st, cell, best_v);
    for (int k = 0; k <= grid; ++k) {
        const double v = b.lo + (b.hi - b.lo) * k / grid;
        const double L = coordinate_free_energy(st, cell, v);
        if (L < best_L) { best_L = L; best_v = v; }
    }
    return best_v;
}

} // namespace detail

/// Clamped coordinate step: the stationary value clamped to [a, b] if that
/// does not increase the free energy along the coordinate, otherwise a
/// backtracking step along the negative coordinate gradient projected into
/// the box. Never increases the coordinate free energy.
inline double impute_update_boxed(AnnealState& st, Cell cell) {
    const std::size_t idx = detail::cell_index(st.pattern, cell);
    const Bounds b = st.pattern.bounds()[idx];
    if (b.lo == b.hi) return b.lo;
    const double cur = st.X(cell.row, cell.col);
    const double L0 = detail::coordinate_free_energy(st, cell, cur);
    const double cand = std::clamp(impute_update_unconstrained(st, cell), b.lo, b.hi);
    const double tol = 1e-12 * std::max(1.0, std::abs(L0));
    if (detail::coordinate_free_energy(st, cell, cand) <= L0 + tol) return cand;
    const double g = impute_gradient(st, cell);
    if (g == 0.0 || !std::isfinite(g)) return cur;
    double step = std::max(std::abs(cand - cur), 1e-2 * (b.hi - b.lo)) / std::abs(g);
    for (int k = 0; k < 60; ++k) {
        const double x = std::clamp(cur - step * g, b.lo, b.hi);
        if (x != cur &&
            detail::coordinate_free_energy(st, cell, x) <= L0 + 1e-4 * g * (x - cur))
            return x;
        step *= 0.5;
    }
    return cur;
}

/// Cycles the multiplier solve, the damped q-update, and the imputation
/// updates at fixed temperature until the largest component change drops
/// below inner_tol and the selection mass is within mass_tol, or
/// inner_max_iters is hit. The multiplier is resolved exactly (it is the
/// limit of the contraction mu_update performs one step of), so the mass
/// constraint holds at every cycle and the monitored free energy carries no
/// multiplier contribution. The damping factor is halved (down to 1/16)
/// whenever a cycle would raise the free energy; if even the smallest damping
/// raises it, the best state seen is returned flagged unconverged. The
/// returned free energy never exceeds the entry value + 1e-9.
inline AnnealState inner_fixed_point(AnnealState st, const AnnealSchedule& sched) {
    if (!(st.T > 0.0)) throw NumericalError("inner_fixed_point: T must be positive");
    double damping = sched.damping;
    st.free_energy = free_energy(st);
    st.converged = false;
    st.last_inner_iters = 0;
    st.last_cycle_energies.clear();
    st.last_cycle_energies.push_back(st.free_energy);
    AnnealState best = st;
    int stagnant = 0;
    for (int iter = 0; iter < sched.inner_max_iters; ++iter) {
        const AnnealState before = st;
        const Vector sens = row_sensitivities(st.X, st.q, st.criterion, st.ridge);
        st.mu = detail::mu_solve(sens, st.T, st.r, st.mu);
        Vector q_hat(st.q.size());
        for (Eigen::Index i = 0; i < st.q.size(); ++i)
            q_hat[i] = detail::clamped_sigmoid(sens[i], st.mu, st.T);
        st.q = (1.0 - damping) * st.q + damping * q_hat;
        for (const Cell cell : st.pattern.missing()) {
            // The coordinate free energy is a rational function with possible
            // interior humps; a coarse global scan on the first cycle of each
            // loop keeps cells from being stranded in a poor basin, then the
            // cheap local step takes over.
            if (iter == 0)
                st.X(cell.row, cell.col) = detail::grid_scan_coordinate(st, cell, 16);
            st.X(cell.row, cell.col) = impute_update_boxed(st, cell);
        }

        const double L_new = free_energy(st);
        if (!(L_new <= st.free_energy + 1e-9)) {
            // q_hat - q is a strict descent direction of the free energy at
            // conserved mass, so a small enough step always improves; keep
            // halving until machine precision is exhausted.
            if (damping > 0x1p-45) {
                damping *= 0.5;
                st = before;
                continue;
            }
            st = best;
            break;
        }
        // Convergence is judged on the undamped fixed-point residual, not on
        // the (possibly heavily damped) step actually taken.
        double residual = (q_hat - before.q).cwiseAbs().maxCoeff();
        if (st.pattern.missing_count() > 0)
            residual = std::max(residual, (st.X - before.X).cwiseAbs().maxCoeff());
        const double improvement = st.free_energy - L_new;
        st.free_energy = L_new;
        st.last_cycle_energies.push_back(L_new);
        st.last_inner_iters = iter + 1;
        if (L_new <= best.free_energy) best = st;
        damping = std::min(sched.damping, damping * 2.0);   // recover after acceptance
        // Converge on a small undamped fixed-point residual, or when the free
        // energy has stopped improving for several accepted cycles (the
        // residual can stay finite for a long tail of vanishing steps).
        if (improvement <= 1e-14 * std::max(1.0, std::abs(L_new))) ++stagnant;
        else stagnant = 0;
        if ((residual < sched.inner_tol || stagnant >= 5) &&
            std::abs(st.q.sum() - static_cast<double>(st.r)) <= sched.mass_tol) {
            st.converged = true;
            break;
        }
    }
    st.trace.push_back({st.T, st.free_energy, -neg_entropy(st.q)});
    return st;
}

/// Rounds the relaxed weights to the r largest entries (ties broken by
/// lowest index) and evaluates the hard cost on the given complete matrix.
inline HardDesign harden(const Vector& q, const Matrix& X, int r,
                         DesignCriterion crit = DesignCriterion::A) {
    const int n = static_cast<int>(q.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return q[a] > q[b]; });
    std::vector<int> s(n, 0);
    for (int k = 0; k < r; ++k) s[order[k]] = 1;
    return HardDesign{s, X, hard_cost_or_inf(X, s, crit)};
}

namespace detail {

/// Coordinate-descent sweeps over the missing cells until the largest change
/// drops below tol. Each coordinate is minimized globally along its interval:
/// a uniform grid over the bounds plus the frozen-R stationary candidate are
/// scanned, then the winner is refined locally. The coordinate cost is a
/// rational function with possible interior maxima, so a purely local step
/// can strand a cell on the wrong side of a hump.
inline void polish_cells(AnnealState& st, double tol = 1e-10, int max_sweeps = 100,
                         int grid = 32) {
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double delta = 0.0;
        for (const Cell cell : st.pattern.missing()) {
            const std::size_t idx = cell_index(st.pattern, cell);
            const Bounds b = st.pattern.bounds()[idx];
            const double old = st.X(cell.row, cell.col);
            double best_v = old;
            double best_L = coordinate_free_energy(st, cell, old);
            auto consider = [&](double v) {
                v = std::clamp(v, b.lo, b.hi);
                const double L = coordinate_free_energy(st, cell, v);
                if (L < best_L) { best_L = L; best_v = v; }
            };
            if (b.hi > b.lo)
                for (int k = 0; k <= grid; ++k)
                    consider(b.lo + (b.hi - b.lo) * k / grid);
            try {
                consider(impute_update_unconstrained(st, cell));
            } catch (const SingularInformation&) {}
            st.X(cell.row, cell.col) = best_v;
            st.X(cell.row, cell.col) = impute_update_boxed(st, cell);   // local refinement
            delta = std::max(delta, std::abs(st.X(cell.row, cell.col) - old));
        }
        if (delta < tol) break;
    }
}

} // namespace detail

/// Final rounding phase. The relaxed optimum the inner loops track is in
/// general fractional on a few contested rows (the criterion cost is strictly
/// convex in q, so the entropy-regularized minimizer does not land on a
/// vertex of the polytope). The deliverable is a binary selection, so the
/// state is projected onto the hardened top-r indicator and the imputed cells
/// are re-optimized for that selection, which can only improve the cost the
/// selection actually pays. Returns the polished hard design; the state is
/// left binary with matching imputations.
inline HardDesign finalize_selection(AnnealState& st) {
    HardDesign hd = harden(st.q, st.X, st.r, st.criterion);
    if (!std::isfinite(hd.cost)) return hd;
    for (Eigen::Index i = 0; i < st.q.size(); ++i) st.q[i] = static_cast<double>(hd.s[i]);
    detail::polish_cells(st);
    double best_cost = hard_cost_or_inf(st.X, hd.s, st.criterion);
    Matrix best_X = st.X;
    // Coordinate descent cannot swap a coupled pair of cells between mirrored
    // corners of the box. With few cells, restart it from every corner.
    const std::size_t k = st.pattern.missing_count();
    if (k >= 1 && k <= 6) {
        for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << k); ++mask) {
            AnnealState trial = st;
            for (std::size_t j = 0; j < k; ++j) {
                const Cell cell = st.pattern.missing()[j];
                const Bounds b = st.pattern.bounds()[j];
                trial.X(cell.row, cell.col) = (mask >> j & 1) ? b.hi : b.lo;
            }
            detail::polish_cells(trial, 1e-10, 30, 16);
            const double c = hard_cost_or_inf(trial.X, hd.s, st.criterion);
            if (c < best_cost) { best_cost = c; best_X = trial.X; }
        }
    }
    st.X = best_X;
    hd.imputed = best_X;
    hd.cost = best_cost;
    st.free_energy = free_energy(st);
    return hd;
}

/// Resolves the schedule's automatic temperatures against a concrete start
/// state. Returned schedule always has explicit t_init/t_min.
inline AnnealSchedule resolve_schedule(AnnealSchedule sched, const Matrix& X0,
                                       const Vector& q0, DesignCriterion crit) {
    if (sched.t_init <= 0.0) {
        const Vector sens = row_sensitivities(X0, q0, crit, sched.ridge);
        sched.t_init = 10.0 * sens.maxCoeff();
    }
    if (sched.t_min <= 0.0) sched.t_min = sched.t_init * 1e-6;
    if (!(sched.t_min < sched.t_init))
        throw NumericalError("schedule: need t_min < t_init");
    if (!(sched.alpha > 0.0 && sched.alpha < 1.0))
        throw NumericalError("schedule: need alpha in (0,1)");
    return sched;
}

/// Algorithm: q starts uniform at r/n, missing cells at clamped column
/// means; the inner fixed point runs at T = t_init, then T is multiplied by
/// alpha until it reaches t_min (one final inner loop runs at exactly t_min),
/// and the run ends with finalize_selection: the weights are rounded to the
/// hardened top-r indicator and the imputed cells re-optimized for that
/// binary selection. The seed parameter is accepted for
/// interface uniformity with the stochastic methods; the run is deterministic.
inline std::pair<AnnealState, HardDesign> anneal(const IncompleteMatrix& inc, int r,
                                                 AnnealSchedule sched,
                                                 DesignCriterion crit = DesignCriterion::A,
                                                 std::uint64_t /*seed*/ = 0) {
    if (r < inc.cols() || r > inc.rows())
        throw Infeasible("anneal: need p <= r <= n, got r=" + std::to_string(r));
    Matrix X0 = mean_filled(inc);
    Vector q0 = Vector::Constant(inc.rows(), static_cast<double>(r) / inc.rows());
    sched = resolve_schedule(sched, X0, q0, crit);

    AnnealState st(inc, std::move(X0), std::move(q0), r);
    st.criterion = crit;
    st.ridge = sched.ridge;
    st.T = sched.t_init;
    while (st.T > sched.t_min) {
        st = inner_fixed_point(std::move(st), sched);
        st.T *= sched.alpha;
    }
    st.T = sched.t_min;
    st = inner_fixed_point(std::move(st), sched);

    HardDesign hd = finalize_selection(st);
    if (!std::isfinite(hd.cost))
        throw Infeasible("anneal: hardened selection is rank-deficient");
    return {std::move(st), std::move(hd)};
}

/// Numerical verification of the descent interpretation of the updates.
struct DescentFormReport {
    double max_rel_err = 0.0;   // part (a): xi-step vs finite-difference descent form
    int checked = 0;
    int skipped = 0;            // saturated coordinates
    double k_bar = 0.0;         // part (b): recovered mean-value point
    double sum_q_plus = 0.0;    // sum of the undamped q-update
    bool k_bar_between = true;  // strictly between sum q+ and r (or equal when degenerate)
};

/// Part (a): one q-update expressed in xi_i = -ln(q_i/(1-q_i)) coordinates
/// equals xi_i - (1/T)(e^{xi/2} + e^{-xi/2})^2 dL/dxi with dL/dxi taken from
/// central finite differences of the free energy. Part (b): the mu step has
/// the form mu + (T/k_bar)(sum q - r) with k_bar the mean-value point of the
/// logarithm, strictly between sum q and r.
inline DescentFormReport descent_form_check(const AnnealState& state) {
    DescentFormReport rep;
    AnnealState st = state;   // scratch copy for perturbations
    const Vector sens = row_sensitivities(st.X, st.q, st.criterion, st.ridge);

    for (Eigen::Index i = 0; i < st.q.size(); ++i) {
        const double qi = st.q[i];
        if (qi * (1.0 - qi) < 1e-12) {
            ++rep.skipped;
            continue;
        }
        const double xi = -std::log(qi / (1.0 - qi));
        // dL/dq by central differences (R rebuilt), chained to xi.
        const double h = 1e-6 * std::max(1.0, std::abs(qi));
        const double saved = st.q[i];
        st.q[i] = saved + h;
        const double Lp = free_energy(st);
        st.q[i] = saved - h;
        const double Lm = free_energy(st);
        st.q[i] = saved;
        const double dLdq = (Lp - Lm) / (2.0 * h);
        const double dLdxi = -qi * (1.0 - qi) * dLdq;
        const double gamma = std::pow(std::exp(xi / 2.0) + std::exp(-xi / 2.0), 2.0);
        const double xi_pred = xi - (1.0 / st.T) * gamma * dLdxi;
        const double xi_plus = -(sens[i] - st.mu) / st.T;
        const double err = std::abs(xi_pred - xi_plus) / std::max(1.0, std::abs(xi_plus));
        rep.max_rel_err = std::max(rep.max_rel_err, err);
        ++rep.checked;
    }

    double sum_q_plus = 0.0;
    for (Eigen::Index i = 0; i < st.q.size(); ++i)
        sum_q_plus += detail::clamped_sigmoid(sens[i], st.mu, st.T);
    rep.sum_q_plus = sum_q_plus;
    const double r = static_cast<double>(st.r);
    if (std::abs(sum_q_plus - r) < 1e-12) {
        rep.k_bar = r;   // degenerate mean-value interval
        rep.k_bar_between = true;
    } else {
        rep.k_bar = (sum_q_plus - r) / (std::log(sum_q_plus) - std::log(r));
        const double lo = std::min(sum_q_plus, r);
        const double hi = std::max(sum_q_plus, r);
        rep.k_bar_between = (rep.k_bar > lo && rep.k_bar < hi);
    }
    return rep;
}

} // namespace ssio
