#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ssio/annealer.hpp"
#include "ssio/linalg.hpp"
#include "ssio/types.hpp"

namespace ssio {

/// Per-experiment resource costs (row i holds c_i in R^p) and per-feature
/// caps kappa. The budget constraint is the equality sum_i c_i q_i = kappa.
struct BudgetSpec {
    Matrix costs;       // n x p, nonnegative
    Vector caps;        // length p, nonnegative
    double budget_tol = 1e-4;

    void validate(int n, int p) const {
        if (costs.rows() != n || costs.cols() != p)
            throw DimensionError("BudgetSpec: costs must be n x p");
        if (caps.size() != p)
            throw DimensionError("BudgetSpec: caps must have length p");
        if ((costs.array() < 0.0).any() || (caps.array() < 0.0).any())
            throw NumericalError("BudgetSpec: costs and caps must be nonnegative");
    }
};

/// Feasibility precheck: damped alternating projections onto
/// {sum q = r} /\ {C^T q = kappa} /\ [0,1]^n. Returns the feasible point on
/// success; throws Infeasible with the residuals otherwise.
inline Vector budget_feasible_point(int n, int r, const BudgetSpec& budget) {
    const int p = static_cast<int>(budget.caps.size());
    Matrix A(p + 1, n);
    A.row(0).setOnes();
    A.bottomRows(p) = budget.costs.transpose();
    Vector b(p + 1);
    b[0] = static_cast<double>(r);
    b.tail(p) = budget.caps;

    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(A);
    Vector q = Vector::Constant(n, static_cast<double>(r) / n);
    const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
    double resid = 0.0;
    for (int it = 0; it < 20000; ++it) {
        Vector corr = cod.solve(b - A * q);
        q += corr;
        q = q.cwiseMax(0.0).cwiseMin(1.0);
        resid = (A * q - b).cwiseAbs().maxCoeff();
        if (resid <= 1e-12 * scale) break;
    }
    if (resid > 1e-5 * scale)
        throw Infeasible("budget precheck failed: max constraint residual " +
                         std::to_string(resid));
    return q;
}

namespace detail {

/// Effective sensitivities under the budget multipliers: s_i - nu . c_i.
inline Vector budget_effective_sens(const Vector& sens, const BudgetSpec& budget,
                                    const Vector& nu) {
    return sens - budget.costs * nu;
}

/// Solves sum_i c_il sigma((s_i - mu - nu.c_i)/T) = kappa_l for nu_l by
/// bisection (the left side is non-increasing in nu_l). Entries of nu other
/// than l are held fixed. Returns the endpoint of a wide bracket when the
/// target is unattainable (saturation).
inline double nu_solve(const Vector& sens, double mu, double T, const BudgetSpec& budget,
                       const Vector& nu, int l) {
    const int n = static_cast<int>(sens.size());
    const Vector cl = budget.costs.col(l);
    if (cl.maxCoeff() == 0.0) return nu[l];   // vacuous constraint, inactive

    // base_i: exponent numerator with coordinate l's contribution removed.
    Vector base(n);
    for (int i = 0; i < n; ++i)
        base[i] = sens[i] - mu - budget.costs.row(i).dot(nu) + nu[l] * cl[i];

    auto lhs = [&](double v) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i)
            acc += cl[i] * clamped_sigmoid(base[i] - v * cl[i], 0.0, T);
        return acc;
    };

    const double target = budget.caps[l];
    // Expand a bracket around the current value.
    double lo = nu[l], hi = nu[l];
    double span = std::max(1.0, std::abs(nu[l]));
    const double limit = 1e8 * std::max(T, 1.0) + 1e8;
    while (lhs(lo) < target && lo > -limit) { lo -= span; span *= 2.0; }
    span = std::max(1.0, std::abs(nu[l]));
    while (lhs(hi) > target && hi < limit) { hi += span; span *= 2.0; }
    if (lhs(lo) < target) return lo;   // cap exceeds attainable mass: saturate
    if (lhs(hi) > target) return hi;

    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (lhs(mid) >= target) lo = mid; else hi = mid;
        if (hi - lo < 1e-14 * std::max(1.0, std::abs(lo))) break;
    }
    return 0.5 * (lo + hi);
}

} // namespace detail

/// Sigmoid q-update including the budget penalty:
/// q_i = sigma((x_i^T R^-2 x_i - mu - sum_j nu_j c_i^j) / T).
/// With nu = 0 this is bitwise identical to q_update.
inline Vector budget_q_update(const AnnealState& st, const BudgetSpec& budget,
                              const Vector& nu, double damping = 1.0) {
    const Vector sens = row_sensitivities(st.X, st.q, st.criterion, st.ridge);
    const Vector eff = detail::budget_effective_sens(sens, budget, nu);
    Vector out(st.q.size());
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        const double qi = detail::clamped_sigmoid(eff[i], st.mu, st.T);
        out[i] = (1.0 - damping) * st.q[i] + damping * qi;
    }
    return out;
}

/// Fixed point of the budget multiplier for feature l, reported in eta-space
/// (eta_l = exp(-nu_l / T)). Iterating over all l together with
/// budget_q_update drives sum_i c_i^l q_i toward kappa_l.
inline double eta_update(const AnnealState& st, const BudgetSpec& budget, const Vector& nu,
                         int l) {
    const Vector sens = row_sensitivities(st.X, st.q, st.criterion, st.ridge);
    const double nu_l = detail::nu_solve(sens, st.mu, st.T, budget, nu, l);
    const double z = std::clamp(-nu_l / st.T, -500.0, 500.0);
    return std::exp(z);
}

struct ConstrainedAnnealResult {
    AnnealState state;
    HardDesign design;
    Vector nu;
    std::vector<double> residual_trace;   // max budget residual per accepted cycle
};

namespace detail {

inline double budget_lagrangian(const AnnealState& st, const BudgetSpec& budget,
                                const Vector& nu) {
    return free_energy(st) + nu.dot(budget.costs.transpose() * st.q - budget.caps);
}

} // namespace detail

/// Annealing under the augmented Lagrangian with equality budget constraints:
/// alternates the penalized q-update, the mu-update, one eta pass per feature
/// in index order, and the boxed imputation steps.
inline ConstrainedAnnealResult constrained_anneal(const IncompleteMatrix& inc, int r,
                                                  AnnealSchedule sched,
                                                  const BudgetSpec& budget,
                                                  std::uint64_t /*seed*/ = 0) {
    const int n = inc.rows();
    const int p = inc.cols();
    budget.validate(n, p);
    if (r < p || r > n) throw Infeasible("constrained_anneal: need p <= r <= n");
    budget_feasible_point(n, r, budget);

    Matrix X0 = mean_filled(inc);
    Vector q0 = Vector::Constant(n, static_cast<double>(r) / n);
    sched = resolve_schedule(sched, X0, q0, DesignCriterion::A);

    AnnealState st(inc, std::move(X0), std::move(q0), r);
    st.criterion = DesignCriterion::A;
    st.ridge = sched.ridge;
    st.T = sched.t_init;
    Vector nu = Vector::Zero(p);
    std::vector<double> residuals;

    // One inner loop at fixed T. The multipliers (mu, nu) are resolved by
    // dual coordinate ascent -- exact 1-D solves against the current
    // sensitivities -- before each damped q step, so both the mass and the
    // attainable budget constraints hold at every cycle and the monitored
    // Lagrangian carries no multiplier contribution.
    auto inner = [&](AnnealState s) {
        double damping = sched.damping;
        s.free_energy = detail::budget_lagrangian(s, budget, nu);
        s.converged = false;
        AnnealState best = s;
        Vector best_nu = nu;
        int stagnant = 0;
        for (int iter = 0; iter < sched.inner_max_iters; ++iter) {
            const AnnealState before = s;
            const Vector nu_before = nu;
            const Vector sens = row_sensitivities(s.X, s.q, s.criterion, s.ridge);
            for (int sweep = 0; sweep < 60; ++sweep) {
                s.mu = detail::mu_solve(detail::budget_effective_sens(sens, budget, nu), s.T,
                                        s.r, s.mu);
                for (int l = 0; l < p; ++l)
                    nu[l] = detail::nu_solve(sens, s.mu, s.T, budget, nu, l);
                const Vector eff = detail::budget_effective_sens(sens, budget, nu);
                Vector q_hat(s.q.size());
                for (Eigen::Index i = 0; i < s.q.size(); ++i)
                    q_hat[i] = detail::clamped_sigmoid(eff[i], s.mu, s.T);
                const double mass_err = std::abs(q_hat.sum() - static_cast<double>(s.r));
                const double budget_err =
                    (budget.costs.transpose() * q_hat - budget.caps).cwiseAbs().maxCoeff();
                if (mass_err <= 1e-10 * s.q.size() && budget_err <= 0.01 * budget.budget_tol)
                    break;
            }
            // The mass constraint is pinned exactly by a final mu solve.
            s.mu = detail::mu_solve(detail::budget_effective_sens(sens, budget, nu), s.T, s.r,
                                    s.mu);
            const Vector eff = detail::budget_effective_sens(sens, budget, nu);
            Vector q_hat(s.q.size());
            for (Eigen::Index i = 0; i < s.q.size(); ++i)
                q_hat[i] = detail::clamped_sigmoid(eff[i], s.mu, s.T);
            s.q = (1.0 - damping) * s.q + damping * q_hat;
            for (const Cell cell : s.pattern.missing()) {
                // Mirror of the unconstrained loop: coarse global scan on the
                // first cycle, cheap local step afterwards.
                if (iter == 0)
                    s.X(cell.row, cell.col) = detail::grid_scan_coordinate(s, cell, 16);
                s.X(cell.row, cell.col) = impute_update_boxed(s, cell);
            }

            const double L_new = detail::budget_lagrangian(s, budget, nu);
            if (!(L_new <= s.free_energy + 1e-9)) {
                if (damping > 0x1p-45) {
                    damping *= 0.5;
                    s = before;
                    nu = nu_before;
                    continue;
                }
                s = best;
                nu = best_nu;
                break;
            }
            double residual = (q_hat - before.q).cwiseAbs().maxCoeff();
            if (s.pattern.missing_count() > 0)
                residual = std::max(residual, (s.X - before.X).cwiseAbs().maxCoeff());
            const double improvement = s.free_energy - L_new;
            s.free_energy = L_new;
            const double resid =
                (budget.costs.transpose() * s.q - budget.caps).cwiseAbs().maxCoeff();
            residuals.push_back(resid);
            if (L_new <= best.free_energy) { best = s; best_nu = nu; }
            damping = std::min(sched.damping, damping * 2.0);
            if (improvement <= 1e-14 * std::max(1.0, std::abs(L_new))) ++stagnant;
            else stagnant = 0;
            if ((residual < sched.inner_tol || stagnant >= 5) &&
                std::abs(s.q.sum() - static_cast<double>(s.r)) <= sched.mass_tol &&
                resid <= budget.budget_tol) {
                s.converged = true;
                break;
            }
        }
        s.trace.push_back({s.T, s.free_energy, -neg_entropy(s.q)});
        return s;
    };

    while (st.T > sched.t_min) {
        st = inner(std::move(st));
        st.T *= sched.alpha;
    }
    st.T = sched.t_min;
    st = inner(std::move(st));

    const double mass_resid = std::abs(st.q.sum() - static_cast<double>(r));
    const double budget_resid =
        (budget.costs.transpose() * st.q - budget.caps).cwiseAbs().maxCoeff();
    if (mass_resid > 1e-2 || budget_resid > std::max(0.1, 100.0 * budget.budget_tol))
        throw Infeasible("constrained_anneal: persistent constraint violation, mass residual " +
                         std::to_string(mass_resid) + ", budget residual " +
                         std::to_string(budget_resid));

    // Round to the hard selection and re-optimize the imputed cells for it on
    // a scratch copy; the returned state keeps its budget-feasible weights.
    AnnealState rounded = st;
    HardDesign hd = finalize_selection(rounded);
    if (!std::isfinite(hd.cost))
        throw Infeasible("constrained_anneal: hardened selection is rank-deficient");
    st.X = rounded.X;
    st.free_energy = detail::budget_lagrangian(st, budget, nu);
    return {std::move(st), std::move(hd), std::move(nu), std::move(residuals)};
}

/// D-optimality annealing: identical machinery with det(R)^(-1/p) as the
/// cost; the q-update exponent is (cost/p) x_i^T R^-1 x_i, the negative of
/// d(cost)/dq_i.
inline std::pair<AnnealState, HardDesign> d_anneal(const IncompleteMatrix& inc, int r,
                                                   const AnnealSchedule& sched,
                                                   std::uint64_t seed = 0) {
    return anneal(inc, r, sched, DesignCriterion::D, seed);
}

} // namespace ssio
