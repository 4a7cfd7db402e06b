#pragma once

// Approximated Green functions: for a pole y and radius eps, column k solves
// the conormal problem with f = Phi_{eps,y} e_k, g = 0, where
//   Phi_{eps,y} = -|Omega_eps(y)|^{-1} 1_{Omega_eps(y)} + |Omega|^{-1}.
// Adjoint pairs come from re-assembly with the adjoint coefficients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <memory>
#include <string>
#include <vector>

#include "stokes_green/coefficients.hpp"
#include "stokes_green/domain.hpp"
#include "stokes_green/system.hpp"

namespace sgreen {

struct Mollifier {
    std::vector<double> values;  // per grid cell, zero outside Omega
    Vec3 requested{};
    Vec3 pole{};                 // center of the cell containing the requested point
    int pole_cell = -1;
    double snap_distance = 0.0;
    double epsilon = 0.0;
    std::vector<int> ball_cells;  // Omega_eps(pole)
    double ball_volume = 0.0;
    double domain_volume = 0.0;
};

/// Cells of Omega whose centers lie strictly within r of x.
inline std::vector<int> cells_in_ball(const VoxelDomain& domain, const Vec3& x, double r) {
    std::vector<int> out;
    detail::for_each_lattice_cell_in_ball(domain, {x, r}, [&](int i, int j, int k) {
        if (domain.included(i, j, k)) out.push_back(domain.cell_index(i, j, k));
    });
    std::sort(out.begin(), out.end());
    return out;
}

inline Mollifier mollified_rhs(const VoxelDomain& domain, const Vec3& y, double eps) {
    const auto cell = domain.locate(y);
    if (!cell) throw DomainError("pole lies outside the domain");
    if (!(eps <= 1.0)) throw ParameterError("epsilon must not exceed 1");
    if (eps < 2.0 * domain.h() * (1.0 - 1e-12)) throw ResolutionError("epsilon must be at least 2h");
    Mollifier m;
    m.requested = y;
    m.pole_cell = *cell;
    m.pole = domain.cell_center(*cell);
    m.snap_distance = norm(m.pole - y);
    m.epsilon = eps;
    m.ball_cells = cells_in_ball(domain, m.pole, eps);
    m.ball_volume = static_cast<double>(m.ball_cells.size()) * domain.cell_volume();
    m.domain_volume = domain.volume();
    m.values.assign(static_cast<std::size_t>(domain.cell_count()), 0.0);
    const double outer = 1.0 / m.domain_volume;
    for (int c : domain.included_cells()) m.values[c] = outer;
    const double inner = 1.0 / m.ball_volume;
    for (int c : m.ball_cells) m.values[c] = outer - inner;
    return m;
}

/// (G_eps(., y), Pi_eps(., y)): column k of G is the velocity of problem k,
/// entry k of Pi its pressure.
class GreenApprox {
  public:
    GreenApprox(std::shared_ptr<const SaddleOperator> op, Mollifier moll, std::array<Field, 3> columns,
                std::array<SolveReport, 3> reports, std::array<Vector, 3> rhs)
        : op_(std::move(op)),
          moll_(std::move(moll)),
          columns_(std::move(columns)),
          reports_(std::move(reports)),
          rhs_(std::move(rhs)) {}

    const SaddleOperator& op() const { return *op_; }
    const std::shared_ptr<const SaddleOperator>& op_ptr() const { return op_; }
    const VoxelDomain& domain() const { return op_->disc().domain(); }
    const Mollifier& mollifier() const noexcept { return moll_; }
    const Vec3& pole() const noexcept { return moll_.pole; }
    int pole_cell() const noexcept { return moll_.pole_cell; }
    double epsilon() const noexcept { return moll_.epsilon; }
    const Field& column(int k) const { return columns_[k]; }
    const SolveReport& report(int k) const { return reports_[k]; }
    const Vector& rhs(int k) const { return rhs_[k]; }

    /// G[i][k] at a cell.
    Mat3 G(int cell) const {
        Mat3 m{};
        for (int k = 0; k < 3; ++k) {
            const Vec3 v = columns_[k].velocity(cell);
            for (int i = 0; i < 3; ++i) m[i][k] = v[i];
        }
        return m;
    }

    Vec3 Pi(int cell) const { return {columns_[0].pressure(cell), columns_[1].pressure(cell), columns_[2].pressure(cell)}; }

    /// Frobenius norm of the 27 first derivatives D_a G^{ik}.
    double DG_norm(int cell) const {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) {
            const double f = frobenius(columns_[k].gradient(cell));
            s += f * f;
        }
        return std::sqrt(s);
    }

    /// Cellwise |G|, |DG| and |Pi| over the grid (zero outside Omega).
    std::vector<double> G_magnitude() const {
        return cellwise([this](int c) { return frobenius(G(c)); });
    }
    std::vector<double> DG_magnitude() const {
        return cellwise([this](int c) { return DG_norm(c); });
    }
    std::vector<double> Pi_magnitude() const {
        return cellwise([this](int c) { return norm(Pi(c)); });
    }

    double max_G() const {
        double m = 0.0;
        for (int c : domain().included_cells()) m = std::max(m, frobenius(G(c)));
        return m;
    }

    double gradient_l2() const {
        double s = 0.0;
        for (const auto& col : columns_) s += std::pow(col.gradient_l2(), 2);
        return std::sqrt(s);
    }

    double pressure_l2() const {
        double s = 0.0;
        for (const auto& col : columns_) s += std::pow(col.pressure_l2(), 2);
        return std::sqrt(s);
    }

    /// C(eps) = (||DG||_{L_2} + ||Pi||_{L_2}) |Omega_eps(y)|^{(d-2)/(2d)}.
    double energy_envelope() const {
        return (gradient_l2() + pressure_l2()) * std::pow(moll_.ball_volume, (kDim - 2.0) / (2.0 * kDim));
    }

    /// Copy with every velocity scaled by s and pressures untouched (fault injection).
    GreenApprox with_scaled_velocity(double s) const {
        auto cols = columns_;
        for (auto& col : cols) {
            auto& x = col.nodal();
            for (Eigen::Index i = 0; i < x.size(); i += 4)
                for (int c = 0; c < 3; ++c) x[i + c] *= s;
        }
        return GreenApprox(op_, moll_, std::move(cols), reports_, rhs_);
    }

  private:
    template <typename Fn>
    std::vector<double> cellwise(Fn&& fn) const {
        std::vector<double> out(static_cast<std::size_t>(domain().cell_count()), 0.0);
        for (int c : domain().included_cells()) out[c] = fn(c);
        return out;
    }

    std::shared_ptr<const SaddleOperator> op_;
    Mollifier moll_;
    std::array<Field, 3> columns_;
    std::array<SolveReport, 3> reports_;
    std::array<Vector, 3> rhs_;
};

namespace detail {

/// Runs jobs[0..n) with at most `workers` in flight; rethrows the first failure.
inline void run_jobs(int n, int workers, const std::function<void(int)>& job) {
    if (workers <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) job(i);
        return;
    }
    for (int start = 0; start < n; start += workers) {
        std::vector<std::future<void>> batch;
        for (int i = start; i < std::min(n, start + workers); ++i) batch.push_back(std::async(std::launch::async, job, i));
        for (auto& f : batch) f.get();
    }
}

}  // namespace detail

inline GreenApprox compute_green(std::shared_ptr<const SaddleOperator> op, const Vec3& y, double eps,
                                 const SolveOptions& opt = {}, int workers = 1) {
    Mollifier moll = mollified_rhs(op->disc().domain(), y, eps);
    std::array<Field, 3> cols;
    std::array<SolveReport, 3> reps;
    std::array<Vector, 3> rhs;
    detail::run_jobs(3, workers, [&](int k) {
        StokesData data;
        data.f.assign(moll.values.size(), Vec3{});
        for (std::size_t c = 0; c < moll.values.size(); ++c) data.f[c][k] = moll.values[c];
        auto sys = assemble(op, data);
        try {
            auto res = solve_conormal(sys, opt);
            cols[k] = std::move(res.field);
            reps[k] = res.report;
        } catch (const IterativeFailure& e) {
            throw IterativeFailure("column " + std::to_string(k + 1) + ": " + e.what(), e.best_residual());
        } catch (const Error& e) {
            throw Error("column " + std::to_string(k + 1) + ": " + e.what());
        }
        rhs[k] = std::move(sys.rhs);
    });
    return GreenApprox(std::move(op), std::move(moll), std::move(cols), std::move(reps), std::move(rhs));
}

inline GreenApprox compute_green(const VoxelDomain& domain, const CoefficientField& coeffs, const Vec3& y, double eps,
                                 double tol = 1e-9, OperatorOptions opts = {}) {
    auto disc = std::make_shared<const Discretization>(domain);
    SolveOptions so;
    so.tol = tol;
    return compute_green(std::make_shared<const SaddleOperator>(disc, coeffs, opts), y, eps, so);
}

/// (G*_sigma(., x), Pi*_sigma(., x)) for the adjoint operator L*.
inline GreenApprox compute_adjoint_green(const VoxelDomain& domain, const CoefficientField& coeffs, const Vec3& x,
                                         double sigma, double tol = 1e-9, OperatorOptions opts = {}) {
    return compute_green(domain, adjoint_field(coeffs), x, sigma, tol, opts);
}

struct GreenInvariants {
    std::array<DivergenceCheck, 3> divergence{};
    double mean_ratio = 0.0;  // max_k |(G^{.k})_Omega| / max|G|
    double envelope = 0.0;
    bool divergence_pass = false;
    bool normalization_pass = false;
    bool pass() const { return divergence_pass && normalization_pass; }
};

inline GreenInvariants check_invariants(const GreenApprox& g, double divergence_floor = 1e-8,
                                        double mean_tol = 1e-10) {
    GreenInvariants out;
    out.divergence_pass = true;
    double worst_mean = 0.0;
    for (int k = 0; k < 3; ++k) {
        const auto& col = g.column(k);
        out.divergence[k] = divergence_check(g.op(), col.nodal(), g.rhs(k), g.report(k).relative_residual);
        out.divergence_pass = out.divergence_pass && out.divergence[k].pass(divergence_floor);
        worst_mean = std::max(worst_mean, norm(col.velocity_mean()));
    }
    const double gmax = g.max_G();
    out.mean_ratio = gmax > 0.0 ? worst_mean / gmax : 0.0;
    out.normalization_pass = gmax == 0.0 ? worst_mean == 0.0 : out.mean_ratio <= mean_tol;
    out.envelope = g.energy_envelope();
    return out;
}

namespace detail {

inline Mat3 transpose(const Mat3& m) {
    Mat3 t{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) t[i][j] = m[j][i];
    return t;
}

inline Mat3 subtract(const Mat3& a, const Mat3& b) {
    Mat3 d{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) d[i][j] = a[i][j] - b[i][j];
    return d;
}

inline double relative_gap(const Mat3& a, const Mat3& b) {
    const double scale = std::max(frobenius(a), frobenius(b));
    return scale > 0.0 ? frobenius(subtract(a, b)) / scale : 0.0;
}

inline void require_separated(const GreenApprox& a, const GreenApprox& b) {
    const double dist = norm(a.pole() - b.pole());
    if (a.pole_cell() == b.pole_cell() || dist < a.epsilon() + b.epsilon())
        throw SeparationError("poles are closer than eps + sigma");
}

}  // namespace detail

struct PairCheck {
    Mat3 lhs{};
    Mat3 rhs{};
    double discrepancy = 0.0;  // |lhs - rhs|_F / max(|lhs|_F, |rhs|_F)
};

/// G*_sigma(y, x) against the average of G_eps(., y)^T over Omega_sigma(x).
inline PairCheck averaging_identity_check(const GreenApprox& direct, const GreenApprox& adjoint) {
    detail::require_separated(direct, adjoint);
    Mat3 avg{};
    const auto& ball = adjoint.mollifier().ball_cells;
    for (int c : ball) {
        const Mat3 g = direct.G(c);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) avg[i][j] += g[i][j] / static_cast<double>(ball.size());
    }
    PairCheck out;
    out.lhs = adjoint.G(direct.pole_cell());
    out.rhs = detail::transpose(avg);
    out.discrepancy = detail::relative_gap(out.lhs, out.rhs);
    return out;
}

inline PairCheck averaging_identity_check(const GreenApprox& direct, const CoefficientField& coeffs, const Vec3& x,
                                          double sigma, double tol = 1e-9) {
    if (direct.domain().locate(x) == std::optional<int>(direct.pole_cell()))
        throw SeparationError("poles coincide");
    return averaging_identity_check(direct,
                                    compute_adjoint_green(direct.domain(), coeffs, x, sigma, tol, direct.op().options()));
}

/// G_eps(x, y) against G*_sigma(y, x)^T at the two pole cells.
inline PairCheck symmetry_check(const GreenApprox& direct, const GreenApprox& adjoint) {
    detail::require_separated(direct, adjoint);
    PairCheck out;
    out.lhs = direct.G(adjoint.pole_cell());
    out.rhs = detail::transpose(adjoint.G(direct.pole_cell()));
    out.discrepancy = detail::relative_gap(out.lhs, out.rhs);
    return out;
}

struct RepresentationCheck {
    Vec3 u_ball{};       // average of u over Omega_eps(y)
    Vec3 u_center{};     // u at the pole cell
    Vec3 formula{};      // -∫ G^T f + ∫ Pi^T g
    double u_max = 0.0;
    double discrete_error = 0.0;   // |u_ball - formula|
    double error_scale = 0.0;      // max_k (||b_G|| ||x_w|| + ||x_G|| ||b_w||)
    double continuum_error = 0.0;  // |u_center - formula| / max|u|
    SolveReport adjoint_report;
    bool discrete_pass(double tol, double factor = 10.0) const {
        return discrete_error <= factor * tol * error_scale;
    }
};

/// Solves L* u + grad p = f, div u = g with conormal data on the adjoint
/// operator and compares u near the pole with the Green representation.
inline RepresentationCheck representation_check(const GreenApprox& green,
                                                std::shared_ptr<const SaddleOperator> adjoint_op,
                                                const std::vector<Vec3>& f, const std::vector<double>& g,
                                                const SolveOptions& opt = {}) {
    const auto& dom = green.domain();
    if (adjoint_op->disc().node_count() != green.op().disc().node_count())
        throw ShapeMismatchError("adjoint operator lives on a different grid");
    StokesData data;
    data.f = f;
    data.g = g;
    detail::check_cell_size(f, dom, "f");
    detail::check_cell_size(g, dom, "g");
    if (!f.empty()) {
        Vec3 mean{};
        double fmax = 0.0;
        for (int c : dom.included_cells()) {
            mean = mean + f[c];
            fmax = std::max(fmax, norm(f[c]));
        }
        mean = (1.0 / dom.included_count()) * mean;
        if (norm(mean) > 1e-10 * std::max(fmax, 1e-300)) throw CompatibilityError("f must have mean zero");
    }
    const auto sys = assemble(std::move(adjoint_op), data);
    const auto sol = solve_conormal(sys, opt);

    RepresentationCheck out;
    out.adjoint_report = sol.report;
    const double vol = dom.cell_volume();
    const auto& ball = green.mollifier().ball_cells;
    for (int c : ball) out.u_ball = out.u_ball + (1.0 / static_cast<double>(ball.size())) * sol.field.velocity(c);
    out.u_center = sol.field.velocity(green.pole_cell());
    out.u_max = sol.field.max_velocity();
    for (int c : dom.included_cells()) {
        const Mat3 G = green.G(c);
        const Vec3 Pi = green.Pi(c);
        for (int k = 0; k < 3; ++k) {
            double s = 0.0;
            if (!f.empty())
                for (int i = 0; i < 3; ++i) s -= G[i][k] * f[c][i];
            if (!g.empty()) s += Pi[k] * g[c];
            out.formula[k] += s * vol;
        }
    }
    out.discrete_error = norm(out.u_ball - out.formula);
    const double bw = sys.rhs.norm(), xw = sol.field.nodal().norm();
    for (int k = 0; k < 3; ++k)
        out.error_scale = std::max(out.error_scale, green.rhs(k).norm() * xw + green.column(k).nodal().norm() * bw);
    out.continuum_error = out.u_max > 0.0 ? norm(out.u_center - out.formula) / out.u_max : 0.0;
    return out;
}

struct CauchyRow {
    double eps_a = 0.0;
    double eps_b = 0.0;
    double l2_outside = 0.0;  // ||G_a - G_b||_{L_2(Omega \ B_R(y))}
    double l1_inside = 0.0;   // ||G_a - G_b||_{L_1(B_R(y))}
};

struct CauchyTable {
    double radius = 0.0;
    std::vector<CauchyRow> rows;
    bool cauchy = true;  // successive outside differences do not grow
};

/// Successive differences of Green functions sharing a pole, in sweep order.
inline CauchyTable epsilon_convergence(const std::vector<const GreenApprox*>& sweep, double R) {
    if (sweep.empty()) throw ParameterError("empty epsilon sweep");
    const auto& dom = sweep.front()->domain();
    double emax = 0.0;
    for (std::size_t i = 0; i < sweep.size(); ++i) {
        if (sweep[i]->pole_cell() != sweep.front()->pole_cell()) throw ParameterError("sweep poles differ");
        if (i > 0 && sweep[i]->epsilon() > sweep[i - 1]->epsilon()) throw ParameterError("epsilon list must decrease");
        emax = std::max(emax, sweep[i]->epsilon());
    }
    if (!(R > 2.0 * emax)) throw ParameterError("R must exceed twice the largest epsilon");
    CauchyTable out;
    out.radius = R;
    const Vec3 y = sweep.front()->pole();
    const double vol = dom.cell_volume();
    for (std::size_t i = 0; i + 1 < sweep.size(); ++i) {
        CauchyRow row{sweep[i]->epsilon(), sweep[i + 1]->epsilon()};
        double l2 = 0.0;
        for (int c : dom.included_cells()) {
            const double d = frobenius(detail::subtract(sweep[i]->G(c), sweep[i + 1]->G(c)));
            if (norm(dom.cell_center(c) - y) < R)
                row.l1_inside += d * vol;
            else
                l2 += d * d * vol;
        }
        row.l2_outside = std::sqrt(l2);
        if (!out.rows.empty() && row.l2_outside > out.rows.back().l2_outside) out.cauchy = false;
        out.rows.push_back(row);
    }
    return out;
}

/// Computes the sweep on one operator, then tabulates it.
inline CauchyTable epsilon_convergence(std::shared_ptr<const SaddleOperator> op, const Vec3& y,
                                       const std::vector<double>& eps, double R, const SolveOptions& opt = {}) {
    const double h = op->disc().h();
    for (double e : eps)
        if (e < 2.0 * h * (1.0 - 1e-12)) throw ResolutionError("epsilon must be at least 2h");
    for (std::size_t i = 1; i < eps.size(); ++i)
        if (eps[i] > eps[i - 1]) throw ParameterError("epsilon list must decrease");
    if (!eps.empty() && !(R > 2.0 * eps.front())) throw ParameterError("R must exceed twice the largest epsilon");
    std::vector<GreenApprox> greens;
    for (double e : eps) greens.push_back(compute_green(op, y, e, opt));
    std::vector<const GreenApprox*> ptrs;
    for (const auto& g : greens) ptrs.push_back(&g);
    return epsilon_convergence(ptrs, R);
}

}  // namespace sgreen
