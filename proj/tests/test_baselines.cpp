#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ssio/baselines.hpp"
#include "ssio/bench.hpp"
#include "ssio/rng.hpp"

using namespace ssio;

namespace {

Matrix random_matrix(int n, int p, Rng& rng, double lo = -2.0, double hi = 2.0) {
    Matrix X(n, p);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) X(i, j) = rng.uniform(lo, hi);
    return X;
}

} // namespace

TEST_CASE("mean_impute: column means clamped to bounds") {
    Matrix X(3, 2);
    X << 1, 4,
         0, 0,
         3, 8;
    IncompleteMatrix inc(X, {{1, 0}, {1, 1}}, {{-10.0, 10.0}, {0.0, 5.0}});
    const Matrix filled = mean_impute(inc);
    CHECK(filled(1, 0) == doctest::Approx(2.0));
    CHECK(filled(1, 1) == doctest::Approx(5.0));   // mean 6 clamped to hi
    CHECK(filled(0, 0) == 1.0);
}

TEST_CASE("fedorov_exchange: single-feature instance picks the largest row") {
    Matrix X(3, 1);
    X << 1, 2, 3;
    const MethodResult res = fedorov_exchange(X, 1, DesignCriterion::A, 5);
    CHECK(res.design.s == std::vector<int>{0, 0, 1});
    CHECK(res.design.cost == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
    CHECK(res.converged);
}

TEST_CASE("fedorov_exchange: r = n leaves nothing to swap") {
    Rng rng(71);
    const Matrix X = random_matrix(5, 2, rng);
    const MethodResult res = fedorov_exchange(X, 5, DesignCriterion::A, 1);
    CHECK(res.design.selected_count() == 5);
    CHECK(res.iterations == 0);
    CHECK(res.design.cost ==
          doctest::Approx(hard_cost(X, std::vector<int>(5, 1), DesignCriterion::A)));
}

TEST_CASE("fedorov_exchange: within 1.25x of the exhaustive optimum") {
    Rng rng(73);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix X = random_matrix(9, 3, rng);
        const HardDesign opt = brute_force_select(X, 4, DesignCriterion::A);
        const MethodResult res =
            fedorov_exchange(X, 4, DesignCriterion::A, derive_seed(1000, trial));
        CHECK(res.design.cost <= opt.cost * 1.25);
        CHECK(res.design.cost >= opt.cost - 1e-12);
    }
}

TEST_CASE("uniform_sample: deterministic per seed, r = n, dominated by optimum") {
    Rng rng(79);
    const Matrix X = random_matrix(8, 2, rng);
    const MethodResult a = uniform_sample(X, 3, 12345);
    const MethodResult b = uniform_sample(X, 3, 12345);
    CHECK(a.design.s == b.design.s);
    CHECK(uniform_sample(X, 8, 7).design.selected_count() == 8);
    const HardDesign opt = brute_force_select(X, 3, DesignCriterion::A);
    double acc = 0.0;
    int finite = 0;
    for (int k = 0; k < 30; ++k) {
        const MethodResult res = uniform_sample(X, 3, derive_seed(99, k));
        CHECK(res.design.cost >= opt.cost - 1e-12);
        if (std::isfinite(res.design.cost)) { acc += res.design.cost; ++finite; }
    }
    REQUIRE(finite > 0);
    CHECK(acc / finite >= opt.cost);
}

TEST_CASE("uniform_sample: rank-deficient draws report +inf, no resampling") {
    // Two identical rows: any single-row draw over p = 2 features is singular.
    Matrix X(2, 2);
    X << 1, 0, 1, 0;
    const MethodResult res = uniform_sample(X, 1, 3);
    CHECK(res.design.cost == kInfCost);
}

TEST_CASE("project_capped_simplex: idempotence and exact mass") {
    Rng rng(83);
    for (int trial = 0; trial < 10; ++trial) {
        Vector v(7);
        for (int i = 0; i < 7; ++i) v[i] = rng.uniform(-3.0, 3.0);
        const Vector q = detail::project_capped_simplex(v, 3);
        CHECK(q.sum() == doctest::Approx(3.0).epsilon(1e-10));
        CHECK(q.minCoeff() >= 0.0);
        CHECK(q.maxCoeff() <= 1.0);
        const Vector q2 = detail::project_capped_simplex(q, 3);
        CHECK((q2 - q).cwiseAbs().maxCoeff() < 1e-9);
    }
    // A feasible point projects to itself.
    Vector f(4);
    f << 1.0, 0.5, 0.5, 0.0;
    const Vector pf = detail::project_capped_simplex(f, 2);
    CHECK((pf - f).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("direct_joint: orthonormal rows give the exact optimum") {
    const Matrix X = Matrix::Identity(4, 4);
    const MethodResult res = direct_joint(IncompleteMatrix(X), 4);
    CHECK(res.design.selected_count() == 4);
    CHECK(res.design.cost == doctest::Approx(4.0).epsilon(1e-8));
}

TEST_CASE("direct_joint: never worse than hardening the start") {
    InstanceSpec spec{"mini", 12, 3, 0.1, 6, -1.0, 2.0, 2024};
    IncompleteMatrix inst = generate_instance(spec);
    const MethodResult res = direct_joint(inst, 6);
    const HardDesign start = harden(Vector::Constant(12, 0.5), mean_filled(inst), 6);
    CHECK(res.design.cost <= start.cost + 1e-9);
    for (std::size_t k = 0; k < inst.missing().size(); ++k) {
        const Cell c = inst.missing()[k];
        CHECK(res.design.imputed(c.row, c.col) >= inst.bounds()[k].lo);
        CHECK(res.design.imputed(c.row, c.col) <= inst.bounds()[k].hi);
    }
}

TEST_CASE("brute_force_select: hand-checkable 3-row instance") {
    Matrix X(3, 2);
    X << 1, 0,
         0, 1,
         1, 1;
    const HardDesign hd = brute_force_select(X, 2, DesignCriterion::A);
    // (1,1,0): R = I, cost 2. (1,0,1) and (0,1,1): cost 3. Optimum is rows 0,1.
    CHECK(hd.s == std::vector<int>{1, 1, 0});
    CHECK(hd.cost == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("brute_force_select: ties resolve to the lexicographically smallest") {
    Matrix Y(4, 1);
    Y << 1, -1, 1, -1;   // all single rows cost 1: four-way tie
    const HardDesign hd = brute_force_select(Y, 1, DesignCriterion::A);
    // Lexicographically smallest selection vector: zeros first.
    CHECK(hd.s == std::vector<int>{0, 0, 0, 1});
}

TEST_CASE("brute_force_select: permutation equivariance") {
    Rng rng(89);
    const Matrix X = random_matrix(7, 2, rng);
    const HardDesign hd = brute_force_select(X, 3, DesignCriterion::A);
    std::vector<int> perm{3, 0, 6, 1, 5, 2, 4};
    Matrix Xp(7, 2);
    for (int i = 0; i < 7; ++i) Xp.row(i) = X.row(perm[i]);
    const HardDesign hp = brute_force_select(Xp, 3, DesignCriterion::A);
    CHECK(hp.cost == doctest::Approx(hd.cost).epsilon(1e-12));
    for (int i = 0; i < 7; ++i) CHECK(hp.s[i] == hd.s[perm[i]]);
}

TEST_CASE("brute_force_select: guards and failure modes") {
    Rng rng(97);
    const Matrix X = random_matrix(40, 2, rng);
    CHECK_THROWS_AS(brute_force_select(X, 20, DesignCriterion::A), GuardError);
    Matrix flat(3, 2);
    flat << 1, 0, 2, 0, 3, 0;   // rank 1: every subset singular
    CHECK_THROWS_AS(brute_force_select(flat, 2, DesignCriterion::A), Infeasible);
}

TEST_CASE("brute_force_joint: no missing cells reduces to pure selection") {
    Rng rng(101);
    const Matrix X = random_matrix(6, 2, rng);
    const HardDesign joint = brute_force_joint(IncompleteMatrix(X), 3, DesignCriterion::A, 5);
    const HardDesign sel = brute_force_select(X, 3, DesignCriterion::A);
    CHECK(joint.s == sel.s);
    CHECK(joint.cost == doctest::Approx(sel.cost).epsilon(1e-12));
}

TEST_CASE("brute_force_joint: dominates any fixed grid fill") {
    Rng rng(103);
    Matrix X = random_matrix(6, 2, rng);
    IncompleteMatrix inc(X, {{0, 1}, {4, 0}}, {{-1.0, 1.0}, {-1.0, 1.0}});
    const HardDesign joint = brute_force_joint(inc, 3, DesignCriterion::A, 7);
    // Any particular grid fill's exhaustive selection can't beat the joint
    // optimum over the same grid.
    for (double a : {-1.0, 0.0, 1.0})
        for (double b : {-1.0, 0.0, 1.0}) {
            const HardDesign fixed =
                brute_force_select(inc.filled({a, b}), 3, DesignCriterion::A);
            CHECK(joint.cost <= fixed.cost + 1e-12);
        }
    for (std::size_t k = 0; k < inc.missing().size(); ++k) {
        const Cell c = inc.missing()[k];
        CHECK(joint.imputed(c.row, c.col) >= -1.0);
        CHECK(joint.imputed(c.row, c.col) <= 1.0);
    }
}

TEST_CASE("brute_force_joint: degenerate grids and guard") {
    Matrix X(3, 1);
    X << 1, 2, 0;
    IncompleteMatrix inc(X, {{2, 0}}, {{4.0, 4.0}});
    const HardDesign hd = brute_force_joint(inc, 1, DesignCriterion::A, 9);
    CHECK(hd.imputed(2, 0) == doctest::Approx(4.0));
    CHECK(hd.s == std::vector<int>{0, 0, 1});   // row value 4 beats 1 and 2

    Matrix Y = Matrix::Zero(20, 2);
    Y.col(0).setLinSpaced(20, 1.0, 20.0);
    Y.col(1).setOnes();
    std::vector<Cell> cells;
    std::vector<Bounds> boxes;
    for (int i = 0; i < 8; ++i) {
        cells.push_back({i, 1});
        boxes.push_back({0.0, 1.0});
    }
    IncompleteMatrix big(Y, cells, boxes);
    CHECK_THROWS_AS(brute_force_joint(big, 10, DesignCriterion::A, 51), GuardError);
}
