#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "stokes_green/domain.hpp"

using namespace sgreen;

TEST(Box, CountsAndVolume) {
    const auto d = build_box({1.0, 0.5, 0.25}, 0.125);
    EXPECT_EQ(d.shape(), (Shape3{8, 4, 2}));
    EXPECT_EQ(d.included_count(), 64);
    EXPECT_NEAR(d.volume(), 0.125, 1e-15);
    // Each of the six faces contributes its cell faces.
    EXPECT_EQ(d.boundary_faces().size(), static_cast<std::size_t>(2 * (8 * 4 + 4 * 2 + 8 * 2)));
}

TEST(Box, RejectsNonDividingWidth) {
    EXPECT_THROW(build_box({1.0, 1.0, 1.0}, 0.3), GeometryError);
    EXPECT_THROW(build_box({1.0, 1.0, 1.0}, -0.1), GeometryError);
}

TEST(Box, CellIndexRoundTrip) {
    const auto d = build_box({1.0, 1.0, 1.0}, 0.25);
    for (int c = 0; c < d.cell_count(); ++c) {
        const auto ijk = d.cell_coords(c);
        EXPECT_EQ(d.cell_index(ijk[0], ijk[1], ijk[2]), c);
        EXPECT_EQ(*d.locate(d.cell_center(c)), c);
    }
    EXPECT_FALSE(d.locate({1.5, 0.5, 0.5}).has_value());
}

TEST(Domain, RejectsDisconnectedMask) {
    std::vector<std::uint8_t> mask(27, 0);
    mask[0] = 1;
    mask[26] = 1;
    EXPECT_THROW(VoxelDomain({3, 3, 3}, 1.0, mask), GeometryError);
    EXPECT_THROW(VoxelDomain({3, 3, 3}, 1.0, std::vector<std::uint8_t>(27, 0)), GeometryError);
}

TEST(LShape, NotchRemoved) {
    const auto d = build_l_shape({1.0, 1.0, 1.0}, {0.5, 0.5, 0.0}, {1.0, 1.0, 1.0}, 0.125);
    EXPECT_EQ(d.included_count(), 512 - 128);
    EXPECT_FALSE(d.contains({0.8, 0.8, 0.5}));
    EXPECT_TRUE(d.contains({0.2, 0.8, 0.5}));
    EXPECT_THROW(build_l_shape({1, 1, 1}, {0, 0, 0}, {1, 1, 1}, 0.25), GeometryError);
}

TEST(VoxelBall, VolumeApproachesBall) {
    const auto d = build_voxel_ball(0.5, 1.0 / 32);
    const double exact = unit_ball_volume() * 0.125;
    EXPECT_NEAR(d.volume(), exact, 0.02 * exact);
    EXPECT_THROW(build_voxel_ball(0.1, 0.05), ResolutionError);
}

TEST(Distance, BoxCenterAndOutside) {
    const auto d = build_box({1.0, 1.0, 1.0}, 0.125);
    // Nearest face centroid sits half a cell off the axis through the center.
    EXPECT_NEAR(dist_to_boundary(d, {0.5, 0.5, 0.5}), std::sqrt(0.25 + 2 * 0.0625 * 0.0625), 1e-12);
    EXPECT_THROW(dist_to_boundary(d, {2.0, 0.5, 0.5}), DomainError);
}

TEST(Boundary, FaceCentroidsAreOnBoundary) {
    const auto d = build_box({1.0, 1.0, 1.0}, 0.25);
    for (const auto& f : d.boundary_faces()) EXPECT_TRUE(on_boundary(d, f.centroid));
    EXPECT_TRUE(on_boundary(d, {0.0, 0.3, 0.7}));
    EXPECT_FALSE(on_boundary(d, {0.5, 0.5, 0.5}));
}

TEST(BallVolume, CountsCellCenters) {
    const auto d = build_box({1.0, 1.0, 1.0}, 1.0 / 32);
    const double r = 0.25;
    EXPECT_NEAR(ball_volume(d, {{0.5, 0.5, 0.5}, r}), unit_ball_volume() * r * r * r, 0.03 * unit_ball_volume() * r * r * r);
    EXPECT_THROW(ball_volume(d, {{0.5, 0.5, 0.5}, 0.0}), ParameterError);
}

// Exterior density at a flat face is the half ball: 2 pi / 3.
TEST(ExteriorDensity, HalfBallOnFace) {
    const double h = 1.0 / 32;
    const auto d = build_box({1.0, 1.0, 1.0}, h);
    const Vec3 x0{0.0, 0.5 + 0.5 * h, 0.5 + 0.5 * h};
    const auto e = exterior_density(d, 0.25, std::span<const Vec3>(&x0, 1));
    EXPECT_NEAR(e.theta, 2.0 * std::numbers::pi / 3.0, 0.1 * 2.0 * std::numbers::pi / 3.0);
    EXPECT_EQ(e.points_used, 1);
    EXPECT_FALSE(e.radii.empty());
}

// At a box corner the exterior is 7/8 of the ball.
TEST(ExteriorDensity, CornerOracle) {
    const double h = 1.0 / 32;
    const auto d = build_box({1.0, 1.0, 1.0}, h);
    const double R = 0.25;
    const double ext = ball_exterior_volume(d, {{0.0, 0.0, 0.0}, R});
    EXPECT_NEAR(ext / (R * R * R), 7.0 / 8.0 * unit_ball_volume(), 0.05 * unit_ball_volume());
}

TEST(ExteriorDensity, Preconditions) {
    const auto d = build_box({1.0, 1.0, 1.0}, 0.125);
    EXPECT_THROW(exterior_density(d, 1.5, 4), ParameterError);
    EXPECT_THROW(exterior_density(d, 0.25, 4), ResolutionError);
    const Vec3 inside{0.5, 0.5, 0.5};
    EXPECT_THROW(exterior_density(d, 1.0, std::span<const Vec3>(&inside, 1)), DomainError);
}

TEST(ExteriorDensity, LShapePositive) {
    const auto d = build_l_shape({1.0, 1.0, 1.0}, {0.5, 0.5, 0.0}, {1.0, 1.0, 1.0}, 1.0 / 32);
    EXPECT_GT(exterior_density(d, 0.5, 64).theta, 0.0);
}

// Property: ball volume plus exterior volume equals the lattice ball count.
TEST(BallVolume, PropertyComplement) {
    const auto d = build_l_shape({1.0, 1.0, 1.0}, {0.25, 0.25, 0.0}, {1.0, 0.75, 1.0}, 1.0 / 16);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-0.2, 1.2), ur(0.1, 0.6);
    for (int t = 0; t < 50; ++t) {
        const BallQuery q{{u(rng), u(rng), u(rng)}, ur(rng)};
        long lattice = 0;
        detail::for_each_lattice_cell_in_ball(d, q, [&](int, int, int) { ++lattice; });
        EXPECT_NEAR(ball_volume(d, q) + ball_exterior_volume(d, q), lattice * d.cell_volume(), 1e-12);
    }
}
