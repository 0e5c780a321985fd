#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ssio/errors.hpp"
#include "ssio/types.hpp"

namespace ssio {

enum class DesignCriterion { A, D };

inline constexpr double kInfCost = std::numeric_limits<double>::infinity();

/// R = sum_i q_i x_i x_i^T. Only the upper triangle is accumulated, then
/// mirrored, so the result is bitwise symmetric.
inline Matrix fisher_matrix(const Matrix& X, const Vector& q) {
    if (q.size() != X.rows())
        throw DimensionError("fisher_matrix: q has " + std::to_string(q.size()) +
                             " entries for " + std::to_string(X.rows()) + " rows");
    if (!X.allFinite())
        throw NumericalError("fisher_matrix: nonfinite entry in X");
    const int p = static_cast<int>(X.cols());
    Matrix R = Matrix::Zero(p, p);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double qi = q[i];
        if (qi == 0.0) continue;
        for (int a = 0; a < p; ++a)
            for (int b = a; b < p; ++b)
                R(a, b) += qi * X(i, a) * X(i, b);
    }
    for (int a = 0; a < p; ++a)
        for (int b = 0; b < a; ++b)
            R(a, b) = R(b, a);
    return R;
}

/// Cholesky factorization of a symmetric positive definite matrix, the one
/// factorization object every criterion and sensitivity goes through.
/// Throws SingularInformation when the matrix is not numerically PD.
class SpdFactor {
public:
    explicit SpdFactor(const Matrix& R) : llt_(R) {
        if (llt_.info() != Eigen::Success)
            throw SingularInformation();
        const auto L = llt_.matrixLLT().diagonal();
        const double dmax = L.maxCoeff();
        const double dmin = L.minCoeff();
        // Relative pivot test: catches PSD rank deficiency that slips past
        // Eigen's sign check via roundoff.
        if (!(dmin > 0.0) || dmin < dmax * 1e-7 || !std::isfinite(dmax))
            throw SingularInformation();
    }

    int dim() const { return static_cast<int>(llt_.matrixLLT().rows()); }

    Vector solve(const Vector& b) const { return llt_.solve(b); }

    /// trace(R^-1) = ||L^-1||_F^2, via p triangular solves; R^-1 is never formed.
    double trace_inverse() const {
        const int p = dim();
        Matrix Linv = llt_.matrixL().solve(Matrix::Identity(p, p));
        return Linv.squaredNorm();
    }

    double log_det() const {
        return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
    }

    /// x^T R^-power x for power in {1, 2}, via one or two chained solves.
    double quad_inverse(const Vector& x, int power) const {
        Vector y = llt_.solve(x);
        if (power == 1) return x.dot(y);
        if (power == 2) return y.squaredNorm();
        throw DimensionError("quad_inverse: power must be 1 or 2");
    }

private:
    Eigen::LLT<Matrix> llt_;
};

/// A-optimality cost trace(R^-1).
inline double a_cost(const Matrix& R) { return SpdFactor(R).trace_inverse(); }

/// D-optimality cost det(R)^(-1/p), computed via the factorization
/// log-determinant for range safety.
inline double d_cost(const Matrix& R) {
    SpdFactor f(R);
    return std::exp(-f.log_det() / static_cast<double>(f.dim()));
}

inline double criterion_cost(const Matrix& R, DesignCriterion crit) {
    return crit == DesignCriterion::A ? a_cost(R) : d_cost(R);
}

/// x^T R^-power x. power 2 drives the A-optimality q-update; power 1 the
/// D-optimality one.
inline double sensitivity(const Matrix& R, const Vector& x, int power) {
    return SpdFactor(R).quad_inverse(x, power);
}

/// Criterion value of a hard selection: mask X by s, assemble the Fisher
/// matrix, evaluate. Throws SingularInformation on rank-deficient selections.
inline double hard_cost(const Matrix& X, const std::vector<int>& s, DesignCriterion crit) {
    if (static_cast<Eigen::Index>(s.size()) != X.rows())
        throw DimensionError("hard_cost: selection length mismatch");
    Vector q(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) q[i] = s[i] ? 1.0 : 0.0;
    return criterion_cost(fisher_matrix(X, q), crit);
}

/// Same, mapping singular selections to +inf instead of throwing.
inline double hard_cost_or_inf(const Matrix& X, const std::vector<int>& s,
                               DesignCriterion crit) noexcept {
    try {
        return hard_cost(X, s, crit);
    } catch (const SingularInformation&) {
        return kInfCost;
    }
}

inline double criterion_cost_or_inf(const Matrix& R, DesignCriterion crit) noexcept {
    try {
        return criterion_cost(R, crit);
    } catch (const SingularInformation&) {
        return kInfCost;
    }
}

} // namespace ssio
