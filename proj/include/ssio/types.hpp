#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ssio/errors.hpp"

namespace ssio {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Bounds {
    double lo;
    double hi;
};

struct Cell {
    int row;
    int col;

    friend bool operator==(const Cell& a, const Cell& b) = default;
    friend auto operator<=>(const Cell& a, const Cell& b) = default;
};

/// An n x p design matrix with a set of missing (designable) cells, each
/// carrying a closed bound interval. Missing cells hold NaN in storage and
/// are never consumed as data; `complete()` / `filled()` are the only ways
/// to obtain a matrix safe for numerics.
class IncompleteMatrix {
public:
    IncompleteMatrix(Matrix values, std::vector<Cell> missing, std::vector<Bounds> bounds)
        : values_(std::move(values)), missing_(std::move(missing)), bounds_(std::move(bounds)) {
        // Canonical row-major cell order; iteration order elsewhere relies on it.
        std::vector<std::size_t> perm(missing_.size());
        for (std::size_t k = 0; k < perm.size(); ++k) perm[k] = k;
        std::sort(perm.begin(), perm.end(),
                  [&](std::size_t a, std::size_t b) { return missing_[a] < missing_[b]; });
        std::vector<Cell> m2(missing_.size());
        std::vector<Bounds> b2(bounds_.size());
        for (std::size_t k = 0; k < perm.size(); ++k) {
            m2[k] = missing_[perm[k]];
            if (perm[k] < bounds_.size()) b2[k] = bounds_[perm[k]];
        }
        missing_ = std::move(m2);
        bounds_ = std::move(b2);
        const int n = rows();
        const int p = cols();
        if (n < p)
            throw DimensionError("IncompleteMatrix: need n >= p, got n=" + std::to_string(n) +
                                 " p=" + std::to_string(p));
        if (missing_.size() != bounds_.size())
            throw DimensionError("IncompleteMatrix: missing/bounds size mismatch");
        std::set<Cell> seen;
        for (std::size_t k = 0; k < missing_.size(); ++k) {
            const Cell c = missing_[k];
            if (c.row < 0 || c.row >= n || c.col < 0 || c.col >= p)
                throw DimensionError("IncompleteMatrix: missing cell (" + std::to_string(c.row) +
                                     "," + std::to_string(c.col) + ") out of range");
            if (!seen.insert(c).second)
                throw DimensionError("IncompleteMatrix: duplicate missing cell (" +
                                     std::to_string(c.row) + "," + std::to_string(c.col) + ")");
            if (!(bounds_[k].lo <= bounds_[k].hi))
                throw NumericalError("IncompleteMatrix: bounds lo > hi at cell (" +
                                     std::to_string(c.row) + "," + std::to_string(c.col) + ")");
            values_(c.row, c.col) = std::numeric_limits<double>::quiet_NaN();
        }
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < p; ++j)
                if (std::isnan(values_(i, j)) && !seen.count(Cell{i, j}))
                    throw NumericalError("IncompleteMatrix: NaN in a known cell (" +
                                         std::to_string(i) + "," + std::to_string(j) + ")");
    }

    /// Convenience: a complete matrix, no missing cells.
    explicit IncompleteMatrix(Matrix values) : IncompleteMatrix(std::move(values), {}, {}) {}

    int rows() const { return static_cast<int>(values_.rows()); }
    int cols() const { return static_cast<int>(values_.cols()); }
    std::size_t missing_count() const { return missing_.size(); }
    const std::vector<Cell>& missing() const { return missing_; }
    const std::vector<Bounds>& bounds() const { return bounds_; }
    const Matrix& raw() const { return values_; }

    bool is_missing(int i, int j) const {
        return std::binary_search(missing_.begin(), missing_.end(), Cell{i, j});
    }

    /// Returns the matrix with missing cells replaced by `fill` (one value per
    /// missing cell, in missing() order). Values are clamped to their bounds.
    Matrix filled(const std::vector<double>& fill) const {
        if (fill.size() != missing_.size())
            throw DimensionError("filled: expected " + std::to_string(missing_.size()) +
                                 " values, got " + std::to_string(fill.size()));
        Matrix out = values_;
        for (std::size_t k = 0; k < missing_.size(); ++k) {
            const double v = std::clamp(fill[k], bounds_[k].lo, bounds_[k].hi);
            out(missing_[k].row, missing_[k].col) = v;
        }
        if (!out.allFinite())
            throw NumericalError("filled: nonfinite entry in result");
        return out;
    }

    /// The matrix when there are no missing cells; throws otherwise.
    Matrix complete() const {
        if (!missing_.empty())
            throw NumericalError("complete: matrix still has " +
                                 std::to_string(missing_.size()) + " missing cells");
        if (!values_.allFinite())
            throw NumericalError("complete: nonfinite entry");
        return values_;
    }

private:
    Matrix values_;
    std::vector<Cell> missing_;
    std::vector<Bounds> bounds_;
};

/// Relaxed selection distribution: q in [0,1]^n with target mass r.
struct SelectionWeights {
    Vector q;
    int target_mass;

    SelectionWeights(Vector q_in, int r) : q(std::move(q_in)), target_mass(r) {
        if (r < 1 || r > q.size())
            throw Infeasible("SelectionWeights: r=" + std::to_string(r) + " outside [1, n=" +
                             std::to_string(q.size()) + "]");
        for (Eigen::Index i = 0; i < q.size(); ++i)
            if (!(q[i] >= 0.0 && q[i] <= 1.0))
                throw NumericalError("SelectionWeights: q[" + std::to_string(i) +
                                     "] outside [0,1]");
    }
};

/// A hard design: binary selection with sum(s) = r plus the fully imputed
/// matrix it was evaluated on.
struct HardDesign {
    std::vector<int> s;   // 0/1 per row
    Matrix imputed;       // complete n x p
    double cost;

    int selected_count() const {
        int c = 0;
        for (int v : s) c += v;
        return c;
    }

    std::string bitstring() const {
        std::string out;
        out.reserve(s.size());
        for (int v : s) out.push_back(v ? '1' : '0');
        return out;
    }
};

} // namespace ssio
