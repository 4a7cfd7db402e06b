#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <random>

#include "stokes_green/coefficients.hpp"

using namespace sgreen;

namespace {

// Oracle: the coercivity constant is the smallest eigenvalue of the symmetric
// part of the 9x9 matrix M[(a,i),(b,j)] = A^{ab}_{ij}.
double min_eigen(const Tensor& t) {
    Eigen::Matrix<double, 9, 9> m;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) m(3 * a + i, 3 * b + j) = t[tensor_index(a, b, i, j)];
    const Eigen::Matrix<double, 9, 9> s = 0.5 * (m + m.transpose());
    return Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 9, 9>>(s).eigenvalues().minCoeff();
}

Tensor random_tensor(std::mt19937_64& rng, double shift, double noise) {
    std::normal_distribution<double> g;
    Tensor t = identity_tensor(shift);
    for (auto& v : t) v += noise * g(rng);
    return t;
}

}  // namespace

TEST(Tensor, IdentityBlocks) {
    const auto t = identity_tensor(2.0);
    EXPECT_DOUBLE_EQ(t[tensor_index(1, 1, 2, 2)], 2.0);
    EXPECT_DOUBLE_EQ(t[tensor_index(0, 1, 0, 0)], 0.0);
    EXPECT_NEAR(block_norm(t, 0, 0), 2.0, 1e-14);
    EXPECT_NEAR(min_eigen(t), 2.0, 1e-12);
}

TEST(Tensor, AdjointIsInvolution) {
    std::mt19937_64 rng(3);
    for (int k = 0; k < 20; ++k) {
        const auto t = random_tensor(rng, 1.0, 0.3);
        EXPECT_EQ(adjoint_tensor(adjoint_tensor(t)), t);
        const auto s = adjoint_tensor(t);
        EXPECT_DOUBLE_EQ(s[tensor_index(0, 2, 1, 0)], t[tensor_index(2, 0, 0, 1)]);
    }
}

// Sampled quotients never undercut the eigenvalue oracle, and with enough
// samples get close to it.
TEST(Ellipticity, AgreesWithEigenOracle) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    for (int k = 0; k < 20; ++k) {
        const auto t = random_tensor(rng, 1.0, 0.1);
        const double lam = min_eigen(t);
        for (int s = 0; s < 200; ++s) {
            std::array<double, 9> xi{};
            for (auto& v : xi) v = g(rng);
            EXPECT_GE(coercivity_quotient(t, xi), lam - 1e-12);
        }
        if (lam > 0.05) {
            const auto field = CoefficientField::constant(t, std::min(lam, 1.0 / max_block_norm(t)) * 0.999);
            EXPECT_TRUE(validate_ellipticity(field, 500, 9).pass);
        }
    }
}

TEST(Ellipticity, RejectsNegativeEntry) {
    Tensor t = identity_tensor();
    t[tensor_index(0, 0, 0, 0)] = -1.0;
    EXPECT_LT(min_eigen(t), 0.0);
    EXPECT_FALSE(validate_ellipticity(CoefficientField::constant(t, 0.5), 256, 1).pass);
}

TEST(Ellipticity, RejectsLargeBlocks) {
    EXPECT_FALSE(validate_ellipticity(CoefficientField::constant(identity_tensor(3.0), 0.5), 64, 1).pass);
    EXPECT_TRUE(validate_ellipticity(CoefficientField::constant(identity_tensor(1.5), 0.5), 64, 1).pass);
}

TEST(Field, PiecewiseLayers) {
    const auto d = build_box({1.0, 1.0, 1.0}, 0.125);
    const auto f = piecewise_in_direction(d, {{0.0, identity_tensor(1.0)}, {0.5, identity_tensor(2.0)}},
                                          Frame::aligned(0), 0.4);
    EXPECT_FALSE(f.is_constant());
    EXPECT_TRUE(f.fits(d));
    EXPECT_DOUBLE_EQ(f.at_point({0.2, 0.5, 0.5})[0], 1.0);
    EXPECT_DOUBLE_EQ(f.at_point({0.8, 0.5, 0.5})[0], 2.0);
    EXPECT_TRUE(f.is_self_adjoint());
    EXPECT_THROW(piecewise_in_direction(d, {{0.5, identity_tensor()}, {0.2, identity_tensor()}}, Frame::aligned(0), 0.5),
                 ParameterError);
    EXPECT_THROW(piecewise_in_direction(d, {{0.0, identity_tensor(5.0)}}, Frame::aligned(0), 0.5), ValidationError);
}

TEST(Field, FromCellsChecksSize) {
    const auto d = build_box({1.0, 1.0, 1.0}, 0.25);
    EXPECT_THROW(CoefficientField::from_cells(GridSpec::of(d), std::vector<Tensor>(3), 1.0), Error);
}

TEST(Frame, AlignedIsOrthonormal) {
    for (int a = 0; a < 3; ++a) {
        const auto f = Frame::aligned(a, {0.1, 0.2, 0.3});
        const Vec3 x{0.4, 0.9, -0.2};
        const auto back = f.to_global(f.to_local(x));
        for (int k = 0; k < 3; ++k) EXPECT_NEAR(back[k], x[k], 1e-14);
        EXPECT_NEAR(f.to_local(x)[0], x[a] - f.origin[a], 1e-14);
    }
    EXPECT_THROW(Frame({}, Mat3{{{1, 0, 0}, {1, 0, 0}, {0, 0, 1}}}), Error);
}

TEST(Oscillation, ConstantIsExactlyZero) {
    const auto d = build_box({1.0, 1.0, 1.0}, 1.0 / 32);
    const BallQuery q{{0.5, 0.5, 0.5}, 0.25};
    EXPECT_EQ(partial_oscillation(constant_identity(), Frame::aligned(0), q), 0.0);
    const auto stored = CoefficientField::from_cells(
        GridSpec::of(d), std::vector<Tensor>(static_cast<std::size_t>(d.cell_count()), identity_tensor()), 1.0);
    EXPECT_EQ(partial_oscillation(stored, Frame::aligned(1), q), 0.0);
}

TEST(Oscillation, AlignedLayersAndCheckerboard) {
    const double h = 1.0 / 32, R = 0.25, lambda = 0.4;
    const auto d = build_box({1.0, 1.0, 1.0}, h);
    const BallQuery q{{0.5, 0.5, 0.5}, R};
    const auto layered = piecewise_in_direction(
        d, {{0.0, identity_tensor(1.0)}, {0.4, identity_tensor(2.0)}, {0.6, identity_tensor(1.5)}}, Frame::aligned(0),
        lambda);
    EXPECT_LE(partial_oscillation(layered, Frame::aligned(0), q), 2 * h / R / lambda);
    // The same layers seen from a frame whose first axis is transverse oscillate.
    EXPECT_GT(partial_oscillation(layered, Frame::aligned(1), q), 0.1);
    const auto checker = alternating_in_direction(d, 1, 0.125, identity_tensor(1.0), identity_tensor(2.0), lambda);
    EXPECT_GT(partial_oscillation(checker, Frame::aligned(0), q), 0.1);
}

TEST(Oscillation, Preconditions) {
    const auto d = build_box({1.0, 1.0, 1.0}, 1.0 / 16);
    const auto checker = alternating_in_direction(d, 0, 0.25, identity_tensor(1.0), identity_tensor(2.0), 0.4);
    EXPECT_THROW(partial_oscillation(checker, Frame::aligned(0), {{0.5, 0.5, 0.5}, 0.1}), ResolutionError);
    EXPECT_THROW(partial_oscillation(checker, Frame::aligned(0), {{0.1, 0.5, 0.5}, 0.3}), ParameterError);
}

TEST(Adjoint, FieldSwapsBlocks) {
    const auto d = build_box({1.0, 1.0, 1.0}, 0.25);
    Tensor t = identity_tensor();
    t[tensor_index(0, 1, 0, 1)] = 0.2;
    const auto f = CoefficientField::from_cells(GridSpec::of(d), std::vector<Tensor>(64, t), 0.5);
    EXPECT_FALSE(f.is_self_adjoint());
    const auto a = adjoint_field(f);
    EXPECT_DOUBLE_EQ(a.at_cell(5)[tensor_index(1, 0, 1, 0)], 0.2);
}
