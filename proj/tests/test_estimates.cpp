#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "stokes_green/estimates.hpp"

using namespace sgreen;

namespace {

double stokeslet_norm(const Vec3& r) {
    const double R = norm(r);
    double s = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) s += std::pow(((i == j) / R + r[i] * r[j] / (R * R * R)) / (8 * std::numbers::pi), 2);
    return std::sqrt(s);
}

std::vector<double> sampled(const VoxelDomain& d, const Vec3& y) {
    std::vector<double> v(static_cast<std::size_t>(d.cell_count()), 0.0);
    for (int c : d.included_cells()) {
        const Vec3 r = d.cell_center(c) - y;
        v[c] = norm(r) > 0.0 ? stokeslet_norm(r) : 0.0;
    }
    return v;
}

const GreenApprox& small_green() {
    static const GreenApprox g = [] {
        const auto d = build_box({1.0, 1.0, 1.0}, 1.0 / 12);
        return compute_green(d, constant_identity(), {0.5, 0.5, 0.5}, 2.0 / 12);
    }();
    return g;
}

}  // namespace

TEST(PowerFit, RecoversExactPowerLaw) {
    std::vector<std::pair<double, double>> s;
    for (double r : {0.1, 0.2, 0.4, 0.8}) s.emplace_back(r, 3.0 / r);
    const auto f = fit_power_law(s);
    EXPECT_NEAR(f.slope, -1.0, 1e-12);
    EXPECT_NEAR(std::exp(f.intercept), 3.0, 1e-10);
    EXPECT_NEAR(f.residual, 0.0, 1e-12);
}

TEST(PowerFit, MergesRepeatedRadii) {
    EXPECT_THROW(fit_power_law({{0.1, 1.0}, {0.1, 2.0}, {0.2, 1.0}, {0.2, 3.0}}), DataError);
    EXPECT_THROW(fit_power_law({{0.1, 1.0}, {0.2, -1.0}, {0.3, 1.0}}), DataError);
    const auto f = fit_power_law({{1.0, 1.0}, {1.0, 4.0}, {2.0, 1.0}, {4.0, 0.25}});
    EXPECT_TRUE(std::isfinite(f.slope));
}

TEST(PowerFit, ToleratesMildOscillation) {
    std::vector<std::pair<double, double>> s;
    for (int i = 0; i < 20; ++i) {
        const double r = 0.05 * std::pow(1.2, i);
        s.emplace_back(r, (1.0 + 0.1 * std::sin(r)) / r);
    }
    EXPECT_NEAR(fit_power_law(s).slope, -1.0, 0.05);
}

// Shell maxima of a sampled Stokeslet approach slope -1 as the grid refines.
TEST(Decay, SampledStokesletSlopeConverges) {
    double prev = 1e300;
    for (int n : {16, 32, 64}) {
        const auto d = build_box({1.0, 1.0, 1.0}, 1.0 / n);
        const Vec3 y = d.cell_center(d.locate({0.5, 0.5, 0.5}).value());
        const auto rep = decay_profile(d, sampled(d, y), y, {0.125, 0.17, 0.22, 0.3}, false);
        const double err = std::abs(rep.fitted + 1.0);
        EXPECT_LT(err, prev);
        prev = err;
        EXPECT_TRUE(rep.pass);
    }
    EXPECT_LT(prev, 0.05);
}

TEST(Decay, ZeroFieldAndBadInput) {
    const auto d = build_box({1.0, 1.0, 1.0}, 1.0 / 16);
    const std::vector<double> zero(static_cast<std::size_t>(d.cell_count()), 0.0);
    const auto rep = decay_profile(d, zero, {0.5, 0.5, 0.5}, {0.25, 0.3, 0.35}, false);
    EXPECT_EQ(rep.note, "no decay measurable");
    EXPECT_FALSE(rep.pass);
    EXPECT_THROW(decay_profile(d, std::vector<double>(3), {0.5, 0.5, 0.5}, {0.25}, false), ShapeMismatchError);
    EXPECT_THROW(decay_profile(d, zero, {0.5, 0.5, 0.5}, {0.1, 0.3}, true), ResolutionError);
}

TEST(WeakType, MeasureMatchesSortingOracle) {
    const auto d = build_box({1.0, 1.0, 1.0}, 1.0 / 8);
    std::mt19937_64 rng(3);
    std::exponential_distribution<double> e(1.0);
    std::vector<double> v(static_cast<std::size_t>(d.cell_count()));
    for (auto& x : v) x = e(rng);
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    for (double t : {0.1, 0.5, 1.0, 2.0, 4.0}) {
        const auto above = std::upper_bound(sorted.begin(), sorted.end(), t, std::greater<>()) - sorted.begin();
        EXPECT_DOUBLE_EQ(level_set_measure(d, v, t), static_cast<double>(above) * d.cell_volume());
    }
    const auto rep = weak_type_profile(d, v, 1.0, threshold_grid(0.1, 1.0, 5), 0.1);
    const auto* env = rep.find("envelope");
    ASSERT_TRUE(env);
    EXPECT_EQ(env->size(), 5u);
    EXPECT_THROW(weak_type_profile(d, v, 1.0, {0.05}, 0.1), ParameterError);
    EXPECT_THROW(weak_type_profile(d, v, 1.0, {}, 0.1), ParameterError);
}

TEST(LocalLq, RejectsInadmissibleExponent) {
    const auto& g = small_green();
    EXPECT_THROW(local_lq_norms(g, LqTarget::G, {0.4}, 3.0), ParameterError);
    EXPECT_THROW(local_lq_norms(g, LqTarget::DG, {0.4}, 1.5), ParameterError);
    EXPECT_THROW(local_lq_norms(g, LqTarget::Pi, {0.4}, 0.5), ParameterError);
    EXPECT_THROW(local_lq_norms(g, LqTarget::G, {0.1}, 1.0), ResolutionError);
}

TEST(Annulus, OutsideNormsShrinkWithRadius) {
    const auto& g = small_green();
    double prev_g = 1e300, prev_dg = 1e300;
    for (double R : {0.2, 0.3, 0.4, 0.5}) {
        const auto n = annulus_norms_at(g, R);
        EXPECT_LE(n.G_l6, prev_g);
        EXPECT_LE(n.DG_l2, prev_dg);
        prev_g = n.G_l6;
        prev_dg = n.DG_l2;
    }
    const auto far = annulus_norms_at(g, 2.0);
    EXPECT_EQ(far.G_l6, 0.0);
    EXPECT_EQ(far.DG_l2, 0.0);
    EXPECT_THROW(annulus_norms(g, {0.1}, 1.0, true, AnnulusPart::total), ResolutionError);
}

// L_q over B_R and over the complement add up to the full norm.
TEST(Annulus, BallAndComplementPartitionTheDomain) {
    const auto& g = small_green();
    const auto& d = g.domain();
    const auto v = g.DG_magnitude();
    const double R = 0.3;
    const double out = annulus_norms_at(g, R).DG_l2;
    const double in = detail::lq_norm(d, v, 2.0, [&](int c) { return norm(d.cell_center(c) - g.pole()) < R; });
    const double all = detail::lq_norm(d, v, 2.0, [](int) { return true; });
    EXPECT_NEAR(in * in + out * out, all * all, 1e-12 * all * all);
}

TEST(Report, PassIsRecomputedFromSeriesOnly) {
    EstimateReport r;
    r.id = "x";
    r.add_series("r", {0.1, 0.2, 0.4});
    r.add_series("v", {10.0, 5.0, 2.5});
    r.checks.push_back(slope_check("s", "v", "r", -1.0, 0.1));
    evaluate(r);
    EXPECT_TRUE(r.pass);
    EXPECT_TRUE(recompute_pass(r));
    r.pass = false;
    EXPECT_TRUE(recompute_pass(r));
    r.series[1].second = {10.0, 2.0, 0.1};
    EXPECT_FALSE(recompute_pass(r));
    EstimateReport empty;
    EXPECT_FALSE(recompute_pass(empty));
}

TEST(Report, TextAndCsvLayout) {
    EstimateReport r;
    r.id = "T1-i";
    r.quantity = "q";
    r.predicted = -1.0;
    r.add_series("R", {1.0, 2.0});
    r.add_series("ratio", {1.0, 1.5});
    r.checks.push_back(bound_check("flat", CheckKind::ratio, "ratio", 1.0, 2.0));
    evaluate(r);
    const auto text = to_text(r);
    EXPECT_NE(text.find("[estimate T1-i]\n"), std::string::npos);
    EXPECT_NE(text.find("series.ratio=1,1.5\n"), std::string::npos);
    EXPECT_NE(text.find("check.flat=kind:"), std::string::npos);
    EXPECT_NE(text.find("pass=1\n"), std::string::npos);
    EXPECT_EQ(csv_header(), "estimate_id,predicted,fitted,envelope,pass\n");
    EXPECT_EQ(to_csv_row(r), "T1-i,-1,nan,1.5,1\n");
}

TEST(Caccioppoli, ConstantVelocityGivesZero) {
    const auto d = build_box({1.0, 1.0, 1.0}, 1.0 / 8);
    auto disc = std::make_shared<const Discretization>(d);
    Vector x = Vector::Zero(4 * disc->node_count());
    for (int i = 0; i < disc->node_count(); ++i) x.segment<3>(4 * i) << 1.0, -2.0, 0.5;
    const Field f(disc, x);
    const auto q = caccioppoli_interior(f, nullptr, {0.5, 0.5, 0.5}, 0.4);
    EXPECT_EQ(q.quotient, 0.0);
    EXPECT_NEAR(q.left, 0.0, 1e-12);
    EXPECT_THROW(caccioppoli_interior(f, nullptr, {0.5, 0.5, 0.5}, 0.6), DomainError);
    EXPECT_THROW(caccioppoli_interior(f, nullptr, {0.5, 0.5, 0.5}, 0.0), ParameterError);
    EXPECT_THROW(caccioppoli_boundary(f, nullptr, {0.5, 0.5, 0.5}, 0.2, 0.5), DomainError);
}

// u = (x_1, 0, 0): |B_{R/2}|^{1/2} / (R^{-1} (4 pi R^5 / 15)^{1/2}) = (5/8)^{1/2}.
TEST(Caccioppoli, LinearFieldMatchesContinuumQuotient) {
    std::vector<double> qs;
    for (int n : {8, 16, 32}) {
        const auto d = build_box({1.0, 1.0, 1.0}, 1.0 / n);
        auto disc = std::make_shared<const Discretization>(d);
        Vector x = Vector::Zero(4 * disc->node_count());
        for (int i = 0; i < disc->node_count(); ++i) x[4 * i] = disc->node_position(i)[1];
        qs.push_back(caccioppoli_interior(Field(disc, x), nullptr, {0.5, 0.5, 0.5}, 0.4).quotient);
    }
    const double exact = std::sqrt(5.0 / 8.0);
    EXPECT_LT(std::abs(qs[2] - exact), std::abs(qs[0] - exact));
    EXPECT_NEAR(qs[2], exact, 0.05 * exact);
}
