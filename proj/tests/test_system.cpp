#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <random>

#include "stokes_green/system.hpp"

using namespace sgreen;

namespace {

std::shared_ptr<const SaddleOperator> make_op(int n, const CoefficientField& k = constant_identity()) {
    auto disc = std::make_shared<const Discretization>(build_box({1.0, 1.0, 1.0}, 1.0 / n));
    return std::make_shared<const SaddleOperator>(disc, k);
}

Eigen::MatrixXd dense(const SaddleOperator& op) {
    const int n = op.size();
    Eigen::MatrixXd m(n, n);
    Vector e = Vector::Zero(n), col;
    for (int j = 0; j < n; ++j) {
        e[j] = 1.0;
        op.apply(e, col);
        m.col(j) = col;
        e[j] = 0.0;
    }
    return m;
}

// Oracle: direct LU solve of the system bordered by the three constant
// velocity modes, then the same normalization.
Vector bordered_solve(const SaddleOperator& op, const Vector& b) {
    const int n = op.size();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n + 3, n + 3);
    m.topLeftCorner(n, n) = dense(op);
    for (int i = 0; i < n / 4; ++i)
        for (int c = 0; c < 3; ++c) m(4 * i + c, n + c) = m(n + c, 4 * i + c) = 1.0;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 3);
    rhs.head(n) = b;
    Vector x = m.fullPivLu().solve(rhs).head(n);
    op.normalize(x);
    return x;
}

StokesData make_data(const VoxelDomain& d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    StokesData s;
    const auto n = static_cast<std::size_t>(d.cell_count());
    s.f.assign(n, Vec3{});
    s.f_alpha[1].assign(n, Vec3{});
    s.g.assign(n, 0.0);
    for (int c : d.included_cells()) {
        s.f[c] = {g(rng), g(rng), g(rng)};
        s.f_alpha[1][c] = {g(rng), g(rng), g(rng)};
        s.g[c] = g(rng);
    }
    return s;
}

CoefficientField skew_field(const VoxelDomain& d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.08, 0.08);
    std::vector<Tensor> cells(static_cast<std::size_t>(d.cell_count()));
    for (auto& t : cells) {
        t = identity_tensor(1.0 + 4 * std::abs(u(rng)));
        for (int k = 0; k < 6; ++k) {
            const int e = static_cast<int>(rng() % 81);
            t[e] += u(rng);
        }
    }
    return CoefficientField::from_cells(GridSpec::of(d), cells, 0.5);
}

}  // namespace

TEST(Operator, SymmetryFlag) {
    EXPECT_TRUE(make_op(4)->symmetric());
    const auto d = build_box({1.0, 1.0, 1.0}, 0.25);
    EXPECT_FALSE(make_op(4, skew_field(d, 1))->symmetric());
}

TEST(Operator, ConstantsAreInKernel) {
    const auto op = make_op(5);
    Vector x = Vector::Zero(op->size()), y;
    for (int i = 0; i < op->size() / 4; ++i) x[4 * i + 1] = 1.0;
    op->apply(x, y);
    EXPECT_LT(y.norm(), 1e-12);
}

// The operator built from A* is exactly the transpose of the one built from A.
TEST(Operator, AdjointIsTranspose) {
    const auto d = build_box({1.0, 1.0, 1.0}, 0.25);
    const auto k = skew_field(d, 4);
    const auto op = make_op(4, k), adj = make_op(4, adjoint_field(k));
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    for (int t = 0; t < 5; ++t) {
        Vector x(op->size()), y(op->size()), mx, ay;
        for (int i = 0; i < x.size(); ++i) {
            x[i] = g(rng);
            y[i] = g(rng);
        }
        op->apply(x, mx);
        adj->apply(y, ay);
        EXPECT_NEAR(y.dot(mx), x.dot(ay), 1e-11 * std::abs(y.dot(mx)) + 1e-12);
    }
}

TEST(Solve, MatchesDenseOracleSymmetric) {
    const auto op = make_op(6);
    const auto sys = assemble(op, make_data(op->disc().domain(), 7));
    const auto sol = solve_conormal(sys, {1e-12, 20000, std::nullopt});
    const Vector ref = bordered_solve(*op, sys.rhs);
    EXPECT_EQ(sol.report.method, "minres");
    EXPECT_LT((sol.field.nodal() - ref).norm(), 1e-8 * ref.norm());
}

TEST(Solve, MatchesDenseOracleNonsymmetric) {
    const auto d = build_box({1.0, 1.0, 1.0}, 1.0 / 6);
    const auto op = make_op(6, skew_field(d, 9));
    const auto sys = assemble(op, make_data(d, 8));
    const auto sol = solve_conormal(sys, {1e-12, 20000, std::nullopt});
    const Vector ref = bordered_solve(*op, sys.rhs);
    EXPECT_EQ(sol.report.method, "gmres");
    EXPECT_LT((sol.field.nodal() - ref).norm(), 1e-8 * ref.norm());
}

TEST(Solve, VelocityMeanIsZero) {
    const auto op = make_op(8);
    const auto sol = solve_conormal(assemble(op, make_data(op->disc().domain(), 3)));
    const Vec3 m = sol.field.velocity_mean();
    EXPECT_LT(norm(m), 1e-12 * sol.field.max_velocity());
    EXPECT_LE(sol.report.relative_residual, 1e-9);
    EXPECT_GT(sol.report.energy_quotient, 0.0);
}

// Property: random data and random initial guesses converge to one solution.
TEST(Solve, PropertyInitialGuessIndependent) {
    const auto op = make_op(8);
    std::mt19937_64 rng(21);
    std::normal_distribution<double> g;
    for (int s = 0; s < 3; ++s) {
        const auto sys = assemble(op, make_data(op->disc().domain(), 100 + s));
        SolveOptions a{1e-11, 20000, std::nullopt}, b = a;
        Vector x0(op->size());
        for (int i = 0; i < x0.size(); ++i) x0[i] = g(rng);
        b.initial = x0;
        const auto ra = solve_conormal(sys, a), rb = solve_conormal(sys, b);
        EXPECT_LT((ra.field.nodal() - rb.field.nodal()).norm(), 1e-8 * ra.field.nodal().norm());
    }
}

TEST(Solve, ZeroDataGivesZero) {
    const auto op = make_op(4);
    const auto sol = solve_conormal(assemble(op, {}));
    EXPECT_EQ(sol.field.nodal().norm(), 0.0);
    EXPECT_TRUE(sol.report.converged);
}

TEST(Solve, RejectsIncompatibleRhs) {
    const auto op = make_op(4);
    SaddleSystem sys;
    sys.op = op;
    sys.rhs = Vector::Zero(op->size());
    sys.rhs[0] = 1.0;
    EXPECT_THROW(solve_conormal(sys), CompatibilityError);
}

TEST(Solve, IterationBudgetFailure) {
    const auto op = make_op(8);
    const auto sys = assemble(op, make_data(op->disc().domain(), 5));
    try {
        solve_conormal(sys, {1e-12, 3, std::nullopt});
        FAIL() << "expected IterativeFailure";
    } catch (const IterativeFailure& e) {
        EXPECT_GT(e.best_residual(), 1e-12);
    }
}

TEST(Solve, DataSizeMismatch) {
    const auto op = make_op(4);
    StokesData s;
    s.g.assign(5, 1.0);
    EXPECT_THROW(assemble(op, s), ShapeMismatchError);
}

TEST(Divergence, CheckWithinSlack) {
    const auto op = make_op(8);
    const auto sys = assemble(op, make_data(op->disc().domain(), 6));
    const auto sol = solve_conormal(sys);
    const auto dc = divergence_check(*op, sol.field.nodal(), sys.rhs, sol.report.relative_residual);
    EXPECT_TRUE(dc.pass());
    EXPECT_NEAR(sol.report.divergence_residual, dc.residual, 1e-15);
}

TEST(Bogovskii, ResidualAndStability) {
    std::vector<double> q;
    for (int n : {8, 16}) {
        const auto d = build_box({1.0, 1.0, 1.0}, 1.0 / n);
        std::vector<double> g(static_cast<std::size_t>(d.cell_count()));
        for (int c = 0; c < d.cell_count(); ++c) g[c] = d.cell_center(c)[0] < 0.5 ? 1.0 : -1.0;
        const auto sol = solve_divergence(d, g);
        EXPECT_LT(sol.residual, 1e-8);
        q.push_back(sol.quotient);
    }
    EXPECT_LT(std::max(q[0], q[1]) / std::min(q[0], q[1]), 1.25);
}

// Coordinate probe on the unit box: ||x - 1/2||_L6 / ||1||_L2 = (1/448)^(1/6).
TEST(Poincare, CoordinateProbe) {
    const auto est = poincare_constant(build_box({1.0, 1.0, 1.0}, 1.0 / 16), 3, 1);
    ASSERT_EQ(est.quotients.size(), 3u);
    for (double q : est.quotients) EXPECT_NEAR(q, std::pow(1.0 / 448.0, 1.0 / 6.0), 0.01);
    EXPECT_THROW(poincare_constant(build_box({1, 1, 1}, 0.25), 0, 1), ParameterError);
}

TEST(Poincare, ConstantProbeSkipped) {
    Discretization disc(build_box({1.0, 1.0, 1.0}, 0.25));
    Vector p = Vector::Zero(disc.dof_count());
    for (int i = 0; i < disc.node_count(); ++i) p[4 * i] = 3.0;
    EXPECT_FALSE(poincare_quotient(disc, p).has_value());
}

TEST(Report, TextHasKeys) {
    const auto op = make_op(4);
    const auto sol = solve_conormal(assemble(op, make_data(op->disc().domain(), 1)));
    const auto t = to_text(sol.report);
    for (const char* k : {"method=", "iterations=", "relative_residual=", "divergence_residual=", "stabilization_slack="})
        EXPECT_NE(t.find(k), std::string::npos) << k;
}
