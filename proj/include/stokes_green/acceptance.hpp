#pragma once

// The fourteen acceptance criteria as one suite. Grids, poles, radii and
// tolerances are pinned here; each criterion yields one pass/fail line.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "stokes_green/coefficients.hpp"
#include "stokes_green/domain.hpp"
#include "stokes_green/estimates.hpp"
#include "stokes_green/green.hpp"
#include "stokes_green/protocol.hpp"
#include "stokes_green/system.hpp"

namespace sgreen {

struct CriterionResult {
    int number = 0;
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

struct AcceptanceOptions {
    int n = 32;       // main grid (cells per unit length)
    int coarse = 16;  // comparison grid for the symmetry trend
    int workers = 1;
    double tol = 1e-9;
    double tamper_scale = 1.0;  // applied to every Green function the suite computes
    std::vector<int> only;      // criteria to run; empty means all
    std::ostream* log = nullptr;
};

/// Unit boxes, identity operators and Green functions, built on demand and
/// shared between criteria.
class AcceptanceContext {
  public:
    explicit AcceptanceContext(const AcceptanceOptions& o) : opt_(o) {}

    const AcceptanceOptions& options() const { return opt_; }

    std::shared_ptr<const SaddleOperator> op(int n) {
        auto it = ops_.find(n);
        if (it != ops_.end()) return it->second;
        auto disc = std::make_shared<const Discretization>(build_box({1.0, 1.0, 1.0}, 1.0 / n));
        auto o = std::make_shared<const SaddleOperator>(disc, constant_identity());
        ops_[n] = o;
        return o;
    }

    SolveOptions solve_options() const {
        SolveOptions so;
        so.tol = opt_.tol;
        return so;
    }

    /// Green function at y with eps = eps_h * h on the n-grid (identity coefficients).
    const GreenApprox& green(int n, const Vec3& y, double eps_h) {
        const auto key = std::make_tuple(n, y[0], y[1], y[2], eps_h);
        for (auto& [k, g] : greens_)
            if (k == key) return g;
        auto g = compute_green(op(n), y, eps_h / n, solve_options(), opt_.workers);
        if (opt_.tamper_scale != 1.0) g = g.with_scaled_velocity(opt_.tamper_scale);
        greens_.emplace_back(key, std::move(g));
        return greens_.back().second;
    }

    std::vector<std::pair<std::string, const GreenApprox*>> greens_at(int n) const {
        std::vector<std::pair<std::string, const GreenApprox*>> out;
        for (const auto& [k, g] : greens_)
            if (std::get<0>(k) == n)
                out.emplace_back("y=" + detail::fmt(g.pole()) + " eps=" + detail::fmt(g.epsilon()), &g);
        return out;
    }

  private:
    using Key = std::tuple<int, double, double, double, double>;
    AcceptanceOptions opt_;
    std::map<int, std::shared_ptr<const SaddleOperator>> ops_;
    std::list<std::pair<Key, GreenApprox>> greens_;
};

namespace acceptance {

inline const Vec3 kCenter{0.5, 0.5, 0.5};
inline const Vec3 kNearBoundary{0.5, 0.5, 0.125};
inline constexpr double kMainEps = 2.0;  // eps = 2h

inline std::string f3(double v) { return detail::fmt(v); }

inline std::string series_text(const EstimateReport& r) {
    std::ostringstream os;
    os << r.id << (r.pass ? " pass" : " FAIL");
    for (const auto& c : r.checks) os << " " << c.name << "=" << f3(c.measured) << " in [" << f3(c.lo) << "," << f3(c.hi) << "]";
    if (!r.note.empty()) os << " (" << r.note << ")";
    return os.str();
}

inline const EstimateReport& find_report(const std::vector<EstimateReport>& rs, const std::string& id) {
    for (const auto& r : rs)
        if (r.id == id) return r;
    throw Error("missing report " + id);
}

/// 1: five random data sets on 16^3, two initial guesses each.
inline CriterionResult well_posedness(AcceptanceContext& ctx) {
    CriterionResult out{1, "well-posedness"};
    const auto t0 = std::chrono::steady_clock::now();
    auto op = ctx.op(16);
    const auto& dom = op->disc().domain();
    double worst_res = 0.0, worst_gap = 0.0;
    for (int s = 0; s < 5; ++s) {
        std::mt19937_64 rng(1000 + s);
        std::normal_distribution<double> gauss;
        StokesData data;
        data.f.assign(static_cast<std::size_t>(dom.cell_count()), Vec3{});
        data.g.assign(static_cast<std::size_t>(dom.cell_count()), 0.0);
        data.f_alpha[s % 3].assign(static_cast<std::size_t>(dom.cell_count()), Vec3{});
        double gmean = 0.0;
        for (int c : dom.included_cells()) {
            data.f[c] = {gauss(rng), gauss(rng), gauss(rng)};
            data.f_alpha[s % 3][c] = {gauss(rng), gauss(rng), gauss(rng)};
            data.g[c] = gauss(rng);
            gmean += data.g[c];
        }
        gmean /= dom.included_count();
        for (int c : dom.included_cells()) data.g[c] -= gmean;
        const auto sys = assemble(op, data);
        SolveOptions a = ctx.solve_options(), b = a;
        a.tol = b.tol = 1e-9;
        Vector x0(op->size());
        for (Eigen::Index i = 0; i < x0.size(); ++i) x0[i] = gauss(rng);
        b.initial = x0;
        const auto ra = solve_conormal(sys, a);
        const auto rb = solve_conormal(sys, b);
        worst_res = std::max({worst_res, ra.report.relative_residual, rb.report.relative_residual});
        const Field diff(op->disc_ptr(), ra.field.nodal() - rb.field.nodal());
        const double energy = ra.field.gradient_l2() + ra.field.pressure_l2();
        worst_gap = std::max(worst_gap, (diff.gradient_l2() + diff.pressure_l2()) / energy);
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.pass = worst_res <= 1e-9 && worst_gap <= 1e-8 && out.seconds <= 120.0;
    out.detail = "max residual " + f3(worst_res) + " (<= 1e-9), max energy gap " + f3(worst_gap) + " (<= 1e-8), " +
                 f3(out.seconds) + " s (<= 120)";
    return out;
}

/// 2: divergence and normalization of every Green function computed on the main grid.
inline CriterionResult divergence_normalization(AcceptanceContext& ctx) {
    CriterionResult out{2, "divergence and normalization"};
    auto all = ctx.greens_at(ctx.options().n);
    if (all.empty()) {
        ctx.green(ctx.options().n, kCenter, kMainEps);
        all = ctx.greens_at(ctx.options().n);
    }
    const auto r = protocol::invariants_report(all);
    out.pass = r.pass;
    out.detail = std::to_string(all.size()) + " Green functions: " + series_text(r);
    return out;
}

/// 3: energy envelope over eps in {8,6,4,2}h.
inline CriterionResult energy_scaling(AcceptanceContext& ctx) {
    CriterionResult out{3, "energy scaling"};
    const int n = ctx.options().n;
    std::vector<const GreenApprox*> sweep;
    for (double e : {8.0, 6.0, 4.0, 2.0}) sweep.push_back(&ctx.green(n, kCenter, e));
    TolerancePolicy pol;
    pol.energy_flatness = 2.0;
    const auto r = protocol::energy_report(sweep, pol);
    out.pass = r.pass;
    out.detail = series_text(r);
    return out;
}

/// 4: shell-max decay for the center pole and the near-boundary pole.
inline CriterionResult pointwise_decay(AcceptanceContext& ctx) {
    CriterionResult out{4, "pointwise decay"};
    const int n = ctx.options().n;
    const auto in = protocol::decay_report(ctx.green(n, kCenter, kMainEps), true, {}, "decay-interior");
    const auto bd = protocol::decay_report(ctx.green(n, kNearBoundary, kMainEps), false, {}, "decay-boundary");
    out.pass = in.pass && bd.pass;
    out.detail = series_text(in) + "; " + series_text(bd);
    return out;
}

inline std::vector<EstimateReport> interior_items(AcceptanceContext& ctx, const std::vector<std::string>& ids) {
    return protocol::pole_reports(ctx.green(ctx.options().n, kCenter, kMainEps), 1.0, true, {}, "T1", ids);
}

inline CriterionResult from_reports(int number, std::string name, const std::vector<EstimateReport>& rs) {
    CriterionResult out{number, std::move(name)};
    out.pass = !rs.empty();
    for (const auto& r : rs) {
        out.pass = out.pass && r.pass;
        out.detail += (out.detail.empty() ? "" : "; ") + series_text(r);
    }
    return out;
}

/// 5: total annulus norm exponent, window -1/2 +- 0.35.
inline CriterionResult annulus(AcceptanceContext& ctx) {
    return from_reports(5, "annulus bounds", interior_items(ctx, {"T1-ii"}));
}

/// 6: weak-type envelopes for G, DG, Pi over two decades above the floor.
inline CriterionResult weak_type(AcceptanceContext& ctx) {
    return from_reports(6, "weak-type bounds", interior_items(ctx, {"T1-iii", "T1-iv", "T1-v"}));
}

/// 7: L_1 norms on balls, window +-0.4.
inline CriterionResult local_lq(AcceptanceContext& ctx) {
    return from_reports(7, "local L_q bounds", interior_items(ctx, {"T1-vi", "T1-vii", "T1-viii"}));
}

/// 8: symmetry and averaging at h = 1/n against h = 1/coarse, eps = sigma = 4h.
inline CriterionResult symmetry(AcceptanceContext& ctx) {
    CriterionResult out{8, "symmetry and averaging"};
    const Vec3 y{0.25, 0.5, 0.5}, x{0.75, 0.5, 0.5};
    auto measure = [&](int n) {
        const auto& direct = ctx.green(n, y, 4.0);
        const auto& adjoint = ctx.green(n, x, 4.0);  // identity coefficients are self-adjoint
        return std::pair{symmetry_check(direct, adjoint).discrepancy, averaging_identity_check(direct, adjoint).discrepancy};
    };
    const auto fine = measure(ctx.options().n);
    const auto coarse = measure(ctx.options().coarse);
    out.pass = fine.first <= 0.15 && fine.second <= 0.15 && fine.first < coarse.first && fine.second < coarse.second;
    out.detail = "symmetry " + f3(fine.first) + " (coarse " + f3(coarse.first) + "), averaging " + f3(fine.second) +
                 " (coarse " + f3(coarse.second) + "), limit 0.15 and strictly decreasing";
    return out;
}

/// 9: discrete duality on 16^3 for force and divergence data; continuum error
/// at the pole decreasing over n = 8, 16, 32.
inline CriterionResult representation(AcceptanceContext& ctx) {
    CriterionResult out{9, "representation formula"};
    const auto& g16 = ctx.green(16, kCenter, kMainEps);
    const auto rp = protocol::representation_pair(g16, ctx.op(16), ctx.solve_options());
    const auto rep = protocol::representation_report(rp, g16, ctx.options().tol, {});
    std::vector<double> cf, cg;
    for (int n : {8, 16, 32}) {
        const auto& g = ctx.green(n, kCenter, kMainEps);
        const auto p = protocol::representation_pair(g, ctx.op(n), ctx.solve_options());
        cf.push_back(p.force.continuum_error);
        cg.push_back(p.divergence.continuum_error);
    }
    const bool dec = cf[1] < cf[0] && cf[2] < cf[1] && cg[1] < cg[0] && cg[2] < cg[1];
    out.pass = rep.pass && dec;
    out.detail = series_text(rep) + "; continuum error force " + f3(cf[0]) + " " + f3(cf[1]) + " " + f3(cf[2]) +
                 ", divergence " + f3(cg[0]) + " " + f3(cg[1]) + " " + f3(cg[2]) + " (must decrease)";
    return out;
}

/// 10: Bogovskii quotient for the half-box pattern over n = 8, 16, 32.
inline CriterionResult bogovskii(AcceptanceContext&) {
    std::vector<double> hs, qs, res;
    for (int n : {8, 16, 32}) {
        const auto d = build_box({1.0, 1.0, 1.0}, 1.0 / n);
        const auto sol = solve_divergence(d, protocol::half_box_pattern(d));
        hs.push_back(d.h());
        qs.push_back(sol.quotient);
        res.push_back(sol.residual);
    }
    return from_reports(10, "Bogovskii", {protocol::bogovskii_report(hs, qs, res, {})});
}

/// 11: Caccioppoli quotients, interior and boundary, over R in {0.075, 0.15, 0.3}.
inline CriterionResult caccioppoli(AcceptanceContext& ctx) {
    const int n = ctx.options().n;
    const auto& dom = ctx.op(n)->disc().domain();
    const auto setup = protocol::caccioppoli_setup(dom);
    return from_reports(11, "Caccioppoli", protocol::caccioppoli_reports(ctx.green(n, setup.pole, kMainEps), setup, 1.0, {}));
}

/// 12: oscillation fixtures on a 64^3 grid, ball B_{1/4} at the center.
inline CriterionResult oscillation(AcceptanceContext&) {
    CriterionResult out{12, "oscillation functional"};
    const double h = 1.0 / 64, R = 0.25, lambda = 0.4;
    const auto dom = build_box({1.0, 1.0, 1.0}, h);
    const BallQuery q{{0.5, 0.5, 0.5}, R};
    const auto frame = Frame::aligned(0);
    const auto layered = piecewise_in_direction(
        dom, {{0.0, identity_tensor(1.0)}, {0.3, identity_tensor(2.0)}, {0.55, identity_tensor(1.5)}}, frame, lambda);
    const double g_layered = partial_oscillation(layered, frame, q);
    const double g_const = partial_oscillation(CoefficientField::constant(identity_tensor(1.3), lambda), frame, q);
    const auto stored = CoefficientField::from_cells(
        GridSpec::of(dom), std::vector<Tensor>(static_cast<std::size_t>(dom.cell_count()), identity_tensor(1.0)), lambda);
    const double g_stored = partial_oscillation(stored, frame, q);
    const auto checker = alternating_in_direction(dom, 1, 0.125, identity_tensor(1.0), identity_tensor(2.0), lambda);
    const double g_checker = partial_oscillation(checker, frame, q);
    const double bound = 2.0 * h / R / lambda;
    out.pass = g_layered <= bound && g_const == 0.0 && g_stored == 0.0 && g_checker > 0.1;
    out.detail = "layered " + f3(g_layered) + " (<= " + f3(bound) + "), constant " + f3(g_const) + " and " +
                 f3(g_stored) + " (== 0), checkerboard " + f3(g_checker) + " (> 0.1)";
    return out;
}

/// 13: exterior density on a box face and an L-shape at h = 1/64.
inline CriterionResult exterior(AcceptanceContext&) {
    CriterionResult out{13, "exterior density"};
    const double h = 1.0 / 64;
    const auto box = build_box({1.0, 1.0, 1.0}, h);
    const Vec3 x0{0.0, 0.5 + 0.5 * h, 0.5 + 0.5 * h};
    const double theta = exterior_density(box, 0.25, std::span<const Vec3>(&x0, 1)).theta;
    const double half = 2.0 * std::numbers::pi / 3.0;
    const auto l = build_l_shape({1.0, 1.0, 1.0}, {0.5, 0.5, 0.0}, {1.0, 1.0, 1.0}, h);
    const double theta_l = exterior_density(l, 0.25, 64).theta;
    out.pass = std::abs(theta - half) <= 0.1 * half && theta_l > 0.0;
    out.detail = "box face " + f3(theta) + " vs 2pi/3 = " + f3(half) + " (within 10%), L-shape " + f3(theta_l) + " (> 0)";
    return out;
}

/// 14: non-elliptic coefficients are rejected; G scaled by 2 fails 2 and 9.
inline CriterionResult negative_control(AcceptanceContext& ctx) {
    CriterionResult out{14, "negative control"};
    Tensor t = identity_tensor();
    t[tensor_index(0, 0, 0, 0)] = -1.0;
    const bool rejected = !validate_ellipticity(CoefficientField::constant(t, 0.5), 256, 3).pass;
    const auto& g = ctx.green(16, kCenter, kMainEps);
    const auto bad = g.with_scaled_velocity(2.0);
    const auto inv = protocol::invariants_report({{"tampered", &bad}});
    const auto rp = protocol::representation_pair(bad, ctx.op(16), ctx.solve_options());
    const auto rep = protocol::representation_report(rp, bad, ctx.options().tol, {});
    out.pass = rejected && !inv.pass && !rep.pass;
    out.detail = std::string("ellipticity ") + (rejected ? "rejected" : "accepted") + ", tampered invariants " +
                 (inv.pass ? "pass" : "fail") + ", tampered representation " + (rep.pass ? "pass" : "fail") +
                 " (all three must reject)";
    return out;
}

}  // namespace acceptance

inline std::string to_line(const CriterionResult& r) {
    std::ostringstream os;
    os << "criterion " << r.number << " [" << (r.pass ? "PASS" : "FAIL") << "] " << r.name << ": " << r.detail << " ("
       << detail::fmt(r.seconds) << " s)";
    return os.str();
}

/// Runs the selected criteria. Criterion 2 runs after the others so it sees
/// every Green function they computed; results come back in number order.
inline std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& opt) {
    using Fn = std::function<CriterionResult(AcceptanceContext&)>;
    const std::vector<std::pair<int, Fn>> order = {
        {3, acceptance::energy_scaling},   {4, acceptance::pointwise_decay}, {5, acceptance::annulus},
        {6, acceptance::weak_type},        {7, acceptance::local_lq},        {8, acceptance::symmetry},
        {9, acceptance::representation},   {10, acceptance::bogovskii},      {11, acceptance::caccioppoli},
        {2, acceptance::divergence_normalization}, {1, acceptance::well_posedness}, {12, acceptance::oscillation},
        {13, acceptance::exterior},        {14, acceptance::negative_control}};
    AcceptanceContext ctx(opt);
    std::vector<CriterionResult> out;
    for (const auto& [num, fn] : order) {
        if (!opt.only.empty() && std::find(opt.only.begin(), opt.only.end(), num) == opt.only.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        CriterionResult r;
        try {
            r = fn(ctx);
        } catch (const std::exception& e) {
            r.number = num;
            r.name = "criterion " + std::to_string(num);
            r.pass = false;
            r.detail = std::string("error: ") + e.what();
        }
        if (r.seconds == 0.0) r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (opt.log) *opt.log << to_line(r) << std::endl;
        out.push_back(std::move(r));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.number < b.number; });
    return out;
}

}  // namespace sgreen
