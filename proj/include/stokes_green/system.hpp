#pragma once

// Discrete conormal-derivative Stokes problem
//
//   div u = g,   D_a(A^{ab} D_b u) + grad p = f + D_a f_a   in Omega,
//   A^{ab} D_b u nu_a + p nu = f_a nu_a                      on dOmega,
//
// with (u)_Omega = 0, discretized by equal-order Q1 elements and
// Brezzi-Pitkaranta pressure stabilization. The boundary condition is natural,
// so no boundary rows are touched. Also hosts the divergence-equation solver
// and the Poincare-Sobolev probe.

#include <Eigen/CholmodSupport>
#include <Eigen/Sparse>
#include <chrono>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include "stokes_green/coefficients.hpp"
#include "stokes_green/fem.hpp"
#include "stokes_green/linalg.hpp"

namespace sgreen {

using SparseMatrix = Eigen::SparseMatrix<double>;
using CholeskyFactor = Eigen::CholmodSimplicialLLT<SparseMatrix>;

struct OperatorOptions {
    double stabilization = 0.1;  // c_s in the pressure term c_s h^2 ∫ grad p . grad q
};

/// The assembled saddle-point operator
///   [ K   B^T ] [u]
///   [ B   -S  ] [p]
/// for one (domain, coefficients) pair, together with its block-diagonal
/// preconditioner. Immutable after construction.
class SaddleOperator {
  public:
    SaddleOperator(std::shared_ptr<const Discretization> disc, CoefficientField coeffs, OperatorOptions opts = {})
        : disc_(std::move(disc)), coeffs_(std::move(coeffs)), opts_(opts) {
        if (!coeffs_.fits(disc_->domain())) throw ShapeMismatchError("coefficient grid does not match the domain");
        if (!(opts_.stabilization > 0.0)) throw ParameterError("stabilization parameter must be positive");
        assemble_matrix();
        build_preconditioner();
    }

    SaddleOperator(const SaddleOperator&) = delete;
    SaddleOperator& operator=(const SaddleOperator&) = delete;

    const Discretization& disc() const noexcept { return *disc_; }
    const std::shared_ptr<const Discretization>& disc_ptr() const noexcept { return disc_; }
    const CoefficientField& coefficients() const noexcept { return coeffs_; }
    const OperatorOptions& options() const noexcept { return opts_; }
    const NodeBlockMatrix& matrix() const noexcept { return matrix_; }
    bool symmetric() const noexcept { return symmetric_; }
    double coefficient_scale() const noexcept { return scale_; }
    int size() const noexcept { return matrix_.size(); }

    void apply(const Vector& x, Vector& y) const { matrix_.multiply(x, y); }
    void apply_transpose(const Vector& x, Vector& y) const { matrix_.multiply_transpose(x, y); }

    /// Pressure rows of B u (the discrete divergence tested against Q1 functions).
    Vector divergence(const Vector& x) const {
        Vector y;
        matrix_.multiply_part(x, y, 3, 4, 0, 3);
        return y;
    }

    /// S p, the stabilization contribution (positive semidefinite part).
    Vector stabilization(const Vector& x) const {
        Vector y;
        matrix_.multiply_part(x, y, 3, 4, 3, 4);
        return -y;
    }

    /// z = P^{-1} r with P = diag(scalar Laplacian + shift per component, lumped
    /// pressure mass); velocity output is projected to nodal mean zero.
    void precondition(const Vector& r, Vector& z) const {
        const int n = disc_->node_count();
        Eigen::MatrixXd rhs(n, 3);
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < 3; ++c) rhs(i, c) = r[4 * i + c];
        Eigen::MatrixXd sol;
        {
            // CHOLMOD keeps workspace in its common object, so solves are serialized.
            std::lock_guard<std::mutex> lock(solve_mutex_);
            sol = factor_->solve(rhs);
        }
        const Eigen::RowVectorXd means = sol.colwise().mean();
        z.resize(r.size());
        for (int i = 0; i < n; ++i) {
            for (int c = 0; c < 3; ++c) z[4 * i + c] = sol(i, c) - means[c];
            z[4 * i + 3] = r[4 * i + 3] / pressure_diag_[i];
        }
    }

    /// Removes the velocity constant (cell mean) from a nodal solution vector.
    void normalize(Vector& x) const {
        for (int c = 0; c < 3; ++c) {
            const double m = disc_->mean(x, c);
            for (int i = 0; i < disc_->node_count(); ++i) x[4 * i + c] -= m;
        }
    }

  private:
    void assemble_matrix() {
        const auto& ref = ReferenceElement::get();
        const double h = disc_->h();
        matrix_ = NodeBlockMatrix(disc_->node_neighbors());

        // Element velocity blocks per distinct tensor: ke[l][m][i][j].
        const auto& palette = coeffs_.palette();
        std::vector<std::vector<double>> element_k(palette.size(), std::vector<double>(8 * 8 * 9));
        for (std::size_t t = 0; t < palette.size(); ++t)
            for (int l = 0; l < 8; ++l)
                for (int m = 0; m < 8; ++m)
                    for (int i = 0; i < 3; ++i)
                        for (int j = 0; j < 3; ++j) {
                            double s = 0.0;
                            for (int a = 0; a < 3; ++a)
                                for (int b = 0; b < 3; ++b)
                                    s += palette[t][tensor_index(a, b, i, j)] * ref.stiffness[a][b][l][m];
                            element_k[t][((l * 8 + m) * 3 + i) * 3 + j] = h * s;
                        }

        const double cs = opts_.stabilization;
        scale_ = 0.0;
        for (int e = 0; e < disc_->element_count(); ++e) {
            const int cell = disc_->cell_of_element(e);
            const std::size_t t = coeffs_.is_constant() ? 0 : coeffs_.index()[cell];
            const auto& ke = element_k[t];
            double trace = 0.0;
            for (int a = 0; a < 3; ++a)
                for (int i = 0; i < 3; ++i) trace += palette[t][tensor_index(a, a, i, i)];
            scale_ += trace / 9.0;

            const auto& nodes = disc_->element_nodes(e);
            for (int l = 0; l < 8; ++l)
                for (int m = 0; m < 8; ++m) {
                    double* blk = matrix_.block(matrix_.slot(nodes[l], nodes[m]));
                    for (int i = 0; i < 3; ++i) {
                        for (int j = 0; j < 3; ++j) blk[i * 4 + j] += ke[((l * 8 + m) * 3 + i) * 3 + j];
                        blk[i * 4 + 3] += h * h * ref.grad_mass[i][m][l];
                        blk[3 * 4 + i] += h * h * ref.grad_mass[i][l][m];
                    }
                    double lap = 0.0;
                    for (int a = 0; a < 3; ++a) lap += ref.stiffness[a][a][l][m];
                    blk[15] -= cs * h * h * h * lap;
                }
        }
        scale_ /= disc_->element_count();
        symmetric_ = coeffs_.is_self_adjoint();
    }

    void build_preconditioner() {
        const auto& ref = ReferenceElement::get();
        const double h = disc_->h();
        const int n = disc_->node_count();
        const double diam = disc_->domain().diameter();
        const double shift = 1.0 / (diam * diam);
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(static_cast<std::size_t>(disc_->element_count()) * 64);
        pressure_diag_ = Vector::Zero(n);
        for (int e = 0; e < disc_->element_count(); ++e) {
            const auto& nodes = disc_->element_nodes(e);
            for (int l = 0; l < 8; ++l) {
                pressure_diag_[nodes[l]] += h * h * h / 8.0 / scale_;
                for (int m = 0; m < 8; ++m) {
                    double lap = 0.0;
                    for (int a = 0; a < 3; ++a) lap += ref.stiffness[a][a][l][m];
                    trips.emplace_back(nodes[l], nodes[m], scale_ * (h * lap + shift * h * h * h * ref.mass[l][m]));
                }
            }
        }
        SparseMatrix lap(n, n);
        lap.setFromTriplets(trips.begin(), trips.end());
        factor_ = std::make_unique<CholeskyFactor>();
        factor_->compute(lap);
        if (factor_->info() != Eigen::Success) throw Error("velocity preconditioner factorization failed");
    }

    std::shared_ptr<const Discretization> disc_;
    CoefficientField coeffs_;
    OperatorOptions opts_;
    NodeBlockMatrix matrix_;
    bool symmetric_ = false;
    double scale_ = 1.0;
    Vector pressure_diag_;
    std::unique_ptr<CholeskyFactor> factor_;
    mutable std::mutex solve_mutex_;
};

/// Cellwise data (indexed by grid cell; entries of excluded cells are ignored).
/// Empty vectors mean zero.
struct StokesData {
    std::vector<Vec3> f;
    std::array<std::vector<Vec3>, 3> f_alpha;
    std::vector<double> g;
};

struct DataNorms {
    double f_l65 = 0.0;      // ||f - (f)_Omega||_{L_{6/5}}
    double f_alpha_l2 = 0.0;  // (sum_a ||f_a||_{L_2}^2)^{1/2}
    double g_l2 = 0.0;
};

struct SaddleSystem {
    std::shared_ptr<const SaddleOperator> op;
    Vector rhs;
    Vec3 f_mean_removed{};  // (f)_Omega subtracted before assembly
    DataNorms norms;
};

namespace detail {

template <typename T>
void check_cell_size(const std::vector<T>& v, const VoxelDomain& d, const char* what) {
    if (!v.empty() && v.size() != static_cast<std::size_t>(d.cell_count()))
        throw ShapeMismatchError(std::string(what) + " does not match the domain grid");
}

}  // namespace detail

inline SaddleSystem assemble(std::shared_ptr<const SaddleOperator> op, const StokesData& data) {
    const auto& disc = op->disc();
    const auto& dom = disc.domain();
    detail::check_cell_size(data.f, dom, "f");
    for (const auto& fa : data.f_alpha) detail::check_cell_size(fa, dom, "f_alpha");
    detail::check_cell_size(data.g, dom, "g");

    const auto& ref = ReferenceElement::get();
    const double h = disc.h();
    const double vol = h * h * h;
    SaddleSystem sys;
    sys.rhs = Vector::Zero(disc.dof_count());

    Vec3 fmean{};
    if (!data.f.empty()) {
        for (int c : dom.included_cells()) fmean = fmean + data.f[c];
        fmean = (1.0 / dom.included_count()) * fmean;
    }
    sys.f_mean_removed = fmean;

    double f65 = 0.0, fa2 = 0.0, g2 = 0.0;
    for (int e = 0; e < disc.element_count(); ++e) {
        const int c = disc.cell_of_element(e);
        const auto& nodes = disc.element_nodes(e);
        if (!data.f.empty()) {
            const Vec3 fc = data.f[c] - fmean;
            f65 += std::pow(norm(fc), 1.2) * vol;
            for (int n : nodes)
                for (int i = 0; i < 3; ++i) sys.rhs[4 * n + i] -= fc[i] * vol / 8.0;
        }
        for (int a = 0; a < 3; ++a) {
            if (data.f_alpha[a].empty()) continue;
            const Vec3& fa = data.f_alpha[a][c];
            fa2 += dot(fa, fa) * vol;
            for (int l = 0; l < 8; ++l)
                for (int i = 0; i < 3; ++i) sys.rhs[4 * nodes[l] + i] += fa[i] * h * h * ref.grad_integral[a][l];
        }
        if (!data.g.empty()) {
            g2 += data.g[c] * data.g[c] * vol;
            for (int n : nodes) sys.rhs[4 * n + 3] += data.g[c] * vol / 8.0;
        }
    }
    sys.norms = {std::pow(f65, 1.0 / 1.2), std::sqrt(fa2), std::sqrt(g2)};
    sys.op = std::move(op);
    return sys;
}

inline SaddleSystem assemble(const VoxelDomain& domain, const CoefficientField& coeffs, const StokesData& data,
                             OperatorOptions opts = {}) {
    auto disc = std::make_shared<const Discretization>(domain);
    return assemble(std::make_shared<const SaddleOperator>(disc, coeffs, opts), data);
}

/// A discrete velocity/pressure pair with cellwise views.
class Field {
  public:
    Field() = default;
    Field(std::shared_ptr<const Discretization> disc, Vector nodal) : disc_(std::move(disc)), nodal_(std::move(nodal)) {}

    const Discretization& disc() const { return *disc_; }
    const std::shared_ptr<const Discretization>& disc_ptr() const { return disc_; }
    const Vector& nodal() const { return nodal_; }
    Vector& nodal() { return nodal_; }

    Vec3 velocity(int cell) const {
        const int e = disc_->element_of_cell(cell);
        if (e < 0) return {};
        return {disc_->cell_value(nodal_, e, 0), disc_->cell_value(nodal_, e, 1), disc_->cell_value(nodal_, e, 2)};
    }
    double pressure(int cell) const {
        const int e = disc_->element_of_cell(cell);
        return e < 0 ? 0.0 : disc_->cell_value(nodal_, e, 3);
    }
    Mat3 gradient(int cell) const {
        const int e = disc_->element_of_cell(cell);
        return e < 0 ? Mat3{} : disc_->cell_velocity_gradient(nodal_, e);
    }

    Vec3 velocity_mean() const { return {disc_->mean(nodal_, 0), disc_->mean(nodal_, 1), disc_->mean(nodal_, 2)}; }

    double max_velocity() const {
        double m = 0.0;
        for (int c : disc_->domain().included_cells()) m = std::max(m, norm(velocity(c)));
        return m;
    }

    /// Midpoint-rule ||Du||_{L_2}.
    double gradient_l2() const {
        double s = 0.0;
        for (int c : disc_->domain().included_cells()) {
            const double f = frobenius(gradient(c));
            s += f * f;
        }
        return std::sqrt(s * disc_->domain().cell_volume());
    }

    /// Exact ||Du||_{L_2} of the trilinear velocity.
    double gradient_l2_exact() const {
        double s = 0.0;
        for (int c = 0; c < 3; ++c) s += disc_->exact_gradient_energy(nodal_, c);
        return std::sqrt(s);
    }

    double pressure_l2() const {
        double s = 0.0;
        for (int c : disc_->domain().included_cells()) s += pressure(c) * pressure(c);
        return std::sqrt(s * disc_->domain().cell_volume());
    }

  private:
    std::shared_ptr<const Discretization> disc_;
    Vector nodal_;
};

struct SolveOptions {
    double tol = 1e-9;
    int max_iter = 20000;
    std::optional<Vector> initial;
};

struct SolveReport {
    std::string method;
    int iterations = 0;
    double relative_residual = 0.0;
    bool converged = false;
    double gradient_l2 = 0.0;
    double pressure_l2 = 0.0;
    DataNorms data;
    double energy_quotient = 0.0;
    double divergence_residual = 0.0;
    double stabilization_slack = 0.0;
    double stabilization = 0.0;
    double f_mean_removed = 0.0;
    double wall_seconds = 0.0;
};

inline std::string to_text(const SolveReport& r) {
    std::ostringstream os;
    os.precision(12);
    os << "method=" << r.method << '\n'
       << "iterations=" << r.iterations << '\n'
       << "relative_residual=" << r.relative_residual << '\n'
       << "converged=" << (r.converged ? 1 : 0) << '\n'
       << "gradient_l2=" << r.gradient_l2 << '\n'
       << "pressure_l2=" << r.pressure_l2 << '\n'
       << "f_l65=" << r.data.f_l65 << '\n'
       << "f_alpha_l2=" << r.data.f_alpha_l2 << '\n'
       << "g_l2=" << r.data.g_l2 << '\n'
       << "energy_quotient=" << r.energy_quotient << '\n'
       << "divergence_residual=" << r.divergence_residual << '\n'
       << "stabilization_slack=" << r.stabilization_slack << '\n'
       << "stabilization=" << r.stabilization << '\n'
       << "f_mean_removed=" << r.f_mean_removed << '\n';
    return os.str();
}

struct DivergenceCheck {
    double residual = 0.0;  // ||B u - g|| / ||b||
    double slack = 0.0;     // ||S p|| / ||b|| + solver residual
    bool pass(double floor = 1e-8) const { return residual <= std::max(floor, slack); }
};

/// Discrete divergence defect of x against the pressure rows of rhs. The
/// stabilized equation reads B u - S p = g, so ||B u - g|| can only exceed
/// ||S p|| by the solver residual.
inline DivergenceCheck divergence_check(const SaddleOperator& op, const Vector& x, const Vector& rhs,
                                        double solver_residual) {
    const double bnorm = rhs.norm();
    if (bnorm == 0.0) return {};
    Vector div = op.divergence(x);
    for (int i = 0; i < op.disc().node_count(); ++i) div[4 * i + 3] -= rhs[4 * i + 3];
    return {div.norm() / bnorm, op.stabilization(x).norm() / bnorm + solver_residual};
}

struct SolveResult {
    Field field;
    SolveReport report;
};

namespace detail {

/// Iterates until the true relative residual reaches tol.
inline KrylovResult krylov_solve(const SaddleOperator& op, const Vector& b, Vector& x, double tol, int max_iter,
                                 std::string& method) {
    const LinearMap apply = [&op](const Vector& in, Vector& out) { op.apply(in, out); };
    const LinearMap prec = [&op](const Vector& in, Vector& out) { op.precondition(in, out); };
    const double bnorm = b.norm();
    KrylovResult total;
    Vector tmp;
    if (op.symmetric()) {
        method = "minres";
        double inner_tol = tol;
        while (total.iterations < max_iter) {
            const auto r = minres(apply, prec, b, x, inner_tol, max_iter - total.iterations);
            total.iterations += std::max(r.iterations, 1);
            op.apply(x, tmp);
            total.relative_residual = (b - tmp).norm() / bnorm;
            if (total.relative_residual <= tol) {
                total.converged = true;
                break;
            }
            inner_tol = std::max(inner_tol * 0.5 * tol / total.relative_residual, 1e-16);
        }
    } else {
        method = "gmres";
        total = gmres(apply, prec, b, x, tol, max_iter);
        op.apply(x, tmp);
        total.relative_residual = (b - tmp).norm() / bnorm;
        total.converged = total.relative_residual <= tol;
    }
    return total;
}

}  // namespace detail

/// Solves the assembled system. The velocity is normalized to cell mean zero.
inline SolveResult solve_conormal(const SaddleSystem& sys, const SolveOptions& opt = {}) {
    if (!(opt.tol > 0.0)) throw ParameterError("tolerance must be positive");
    const auto t0 = std::chrono::steady_clock::now();
    const auto& op = *sys.op;
    const auto& disc = op.disc();

    // Velocity rows must be orthogonal to constants (the kernel of the operator).
    double row_abs = 0.0;
    Vec3 row_sum{};
    for (int i = 0; i < disc.node_count(); ++i)
        for (int c = 0; c < 3; ++c) {
            row_sum[c] += sys.rhs[4 * i + c];
            row_abs += std::abs(sys.rhs[4 * i + c]);
        }
    if (norm(row_sum) > 1e-10 * std::max(row_abs, 1e-300))
        throw CompatibilityError("right-hand side is not orthogonal to constant velocities");

    SolveReport rep;
    rep.stabilization = op.options().stabilization;
    rep.data = sys.norms;
    rep.f_mean_removed = norm(sys.f_mean_removed);

    Vector x = opt.initial ? *opt.initial : Vector::Zero(op.size());
    if (x.size() != op.size()) throw ShapeMismatchError("initial guess has the wrong size");
    if (sys.rhs.norm() == 0.0) {
        x.setZero();
        rep.method = op.symmetric() ? "minres" : "gmres";
        rep.converged = true;
    } else {
        const auto kr = detail::krylov_solve(op, sys.rhs, x, opt.tol, opt.max_iter, rep.method);
        rep.iterations = kr.iterations;
        rep.relative_residual = kr.relative_residual;
        rep.converged = kr.converged;
        if (!kr.converged)
            throw IterativeFailure("Krylov solver did not reach the requested tolerance", kr.relative_residual);
    }
    op.normalize(x);
    Field field(op.disc_ptr(), std::move(x));
    rep.gradient_l2 = field.gradient_l2();
    rep.pressure_l2 = field.pressure_l2();
    const double data = rep.data.f_l65 + rep.data.f_alpha_l2 + rep.data.g_l2;
    rep.energy_quotient = data > 0.0 ? (rep.gradient_l2 + rep.pressure_l2) / data : 0.0;
    const auto dc = divergence_check(op, field.nodal(), sys.rhs, rep.relative_residual);
    rep.divergence_residual = dc.residual;
    rep.stabilization_slack = dc.slack;
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(field), rep};
}

struct DivergenceSolution {
    Field velocity;           // pressure slot holds zero
    double quotient = 0.0;    // ||Du||_{L_2} / ||g||_{L_2}
    double residual = 0.0;    // ||div_h u - g||_{L_2} / ||g||_{L_2}, cellwise
    int iterations = 0;
};

/// Minimal-energy solution of div u = g with (u)_Omega = 0, where the
/// divergence is imposed cell by cell (∫_cell div u = ∫_cell g) on the Q1
/// velocity. The Schur complement B K^+ B^T is solved by conjugate gradients.
inline DivergenceSolution solve_divergence(const VoxelDomain& domain, const std::vector<double>& g, double tol = 1e-10,
                                           int max_iter = 20000) {
    detail::check_cell_size(g, domain, "g");
    if (g.empty()) throw ShapeMismatchError("g must be given per cell");
    auto disc = std::make_shared<const Discretization>(domain);
    const int ne = disc->element_count();
    const int nn = disc->node_count();
    const double h = disc->h();
    const double vol = h * h * h;

    Vector gvec(ne);
    double gmean = 0.0;
    for (int e = 0; e < ne; ++e) {
        gvec[e] = g[disc->cell_of_element(e)];
        gmean += gvec[e];
    }
    gmean /= ne;
    const double gnorm_l2 = std::sqrt(gvec.squaredNorm() * vol);
    if (std::abs(gmean) * std::sqrt(domain.volume()) > 1e-10 * std::max(gnorm_l2, 1e-300))
        throw CompatibilityError("divergence data must have mean zero");
    DivergenceSolution out;
    if (gnorm_l2 == 0.0) {
        out.velocity = Field(disc, Vector::Zero(disc->dof_count()));
        return out;
    }

    // Scalar Neumann Laplacian with node 0 pinned: solves K u = r up to a constant.
    const auto& ref = ReferenceElement::get();
    std::vector<Eigen::Triplet<double>> trips;
    for (int e = 0; e < ne; ++e) {
        const auto& nodes = disc->element_nodes(e);
        for (int l = 0; l < 8; ++l)
            for (int m = 0; m < 8; ++m) {
                if (nodes[l] == 0 || nodes[m] == 0) continue;
                double lap = 0.0;
                for (int a = 0; a < 3; ++a) lap += ref.stiffness[a][a][l][m];
                trips.emplace_back(nodes[l], nodes[m], h * lap);
            }
    }
    trips.emplace_back(0, 0, 1.0);
    SparseMatrix lap(nn, nn);
    lap.setFromTriplets(trips.begin(), trips.end());
    CholeskyFactor factor(lap);
    if (factor.info() != Eigen::Success) throw Error("Laplacian factorization failed");

    // (B0 u)_e = ∫_e div u / |e|; B0^T mu is the matching nodal load.
    auto div_cells = [&](const Eigen::MatrixXd& u) {
        Vector d = Vector::Zero(ne);
        for (int e = 0; e < ne; ++e) {
            const auto& nodes = disc->element_nodes(e);
            double s = 0.0;
            for (int l = 0; l < 8; ++l)
                for (int a = 0; a < 3; ++a) s += u(nodes[l], a) * ref.grad_integral[a][l];
            d[e] = s / h;
        }
        return d;
    };
    auto div_transpose = [&](const Vector& mu) {
        Eigen::MatrixXd r = Eigen::MatrixXd::Zero(nn, 3);
        for (int e = 0; e < ne; ++e) {
            const auto& nodes = disc->element_nodes(e);
            for (int l = 0; l < 8; ++l)
                for (int a = 0; a < 3; ++a) r(nodes[l], a) += mu[e] * ref.grad_integral[a][l] / h;
        }
        return r;
    };
    auto velocity_of = [&](const Vector& mu) {
        Eigen::MatrixXd r = div_transpose(mu);
        r.row(0).setZero();
        return Eigen::MatrixXd(factor.solve(r));
    };
    const LinearMap schur = [&](const Vector& mu, Vector& out_vec) { out_vec = div_cells(velocity_of(mu)); };
    const LinearMap identity = [](const Vector& in, Vector& out_vec) { out_vec = in; };

    Vector mu = Vector::Zero(ne);
    const auto kr = conjugate_gradient(schur, identity, gvec, mu, tol, max_iter);
    if (!kr.converged) throw IterativeFailure("divergence solve did not converge", kr.relative_residual);

    Eigen::MatrixXd u = velocity_of(mu);
    Vector nodal = Vector::Zero(disc->dof_count());
    for (int i = 0; i < nn; ++i)
        for (int a = 0; a < 3; ++a) nodal[4 * i + a] = u(i, a);
    for (int a = 0; a < 3; ++a) {
        const double m = disc->mean(nodal, a);
        for (int i = 0; i < nn; ++i) nodal[4 * i + a] -= m;
    }
    out.velocity = Field(disc, std::move(nodal));
    Eigen::MatrixXd un(nn, 3);
    for (int i = 0; i < nn; ++i)
        for (int a = 0; a < 3; ++a) un(i, a) = out.velocity.nodal()[4 * i + a];
    out.residual = (div_cells(un) - gvec).norm() / gvec.norm();
    out.quotient = out.velocity.gradient_l2_exact() / gnorm_l2;
    out.iterations = kr.iterations;
    return out;
}

/// ||phi||_{L_6} / ||D phi||_{L_2} for a nodal scalar probe stored in slot 0 of
/// an interleaved vector; the probe is shifted to cell mean zero first. Returns
/// nothing for probes with vanishing gradient.
inline std::optional<double> poincare_quotient(const Discretization& disc, Vector probe) {
    const double m = disc.mean(probe, 0);
    for (int i = 0; i < disc.node_count(); ++i) probe[4 * i] -= m;
    double l6 = 0.0, grad = 0.0;
    for (int e = 0; e < disc.element_count(); ++e) {
        l6 += std::pow(disc.cell_value(probe, e, 0), 6);
        for (int a = 0; a < 3; ++a) grad += std::pow(disc.cell_derivative(probe, e, 0, a), 2);
    }
    const double vol = disc.domain().cell_volume();
    grad = std::sqrt(grad * vol);
    if (grad <= 1e-14 * std::max(1.0, std::abs(m))) return std::nullopt;
    return std::pow(l6 * vol, 1.0 / 6.0) / grad;
}

struct PoincareEstimate {
    double k0_lower = 0.0;
    std::vector<double> quotients;  // per accepted probe, in probe order
    int skipped = 0;
};

/// Lower bound for the Poincare-Sobolev constant K0 in ||phi||_{L_6} <= K0 ||D phi||_{L_2}:
/// the first three probes are the coordinate functions, later ones random
/// low-frequency cosine series.
inline PoincareEstimate poincare_constant(const VoxelDomain& domain, int probes, std::uint64_t seed) {
    if (probes < 1) throw ParameterError("need at least one probe");
    Discretization disc(domain);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    const Vec3 lo = domain.origin();
    Vec3 len{};
    for (int a = 0; a < 3; ++a) len[a] = domain.shape()[a] * domain.h();

    PoincareEstimate out;
    for (int p = 0; p < probes; ++p) {
        Vector probe = Vector::Zero(disc.dof_count());
        if (p < 3) {
            for (int i = 0; i < disc.node_count(); ++i) probe[4 * i] = disc.node_position(i)[p];
        } else {
            std::vector<std::pair<std::array<int, 3>, double>> modes;
            for (int kx = 0; kx <= 3; ++kx)
                for (int ky = 0; ky <= 3; ++ky)
                    for (int kz = 0; kz <= 3; ++kz) {
                        if (kx + ky + kz == 0) continue;
                        modes.push_back({{kx, ky, kz}, gauss(rng) / (kx * kx + ky * ky + kz * kz)});
                    }
            for (int i = 0; i < disc.node_count(); ++i) {
                const Vec3& x = disc.node_position(i);
                double v = 0.0;
                for (const auto& [k, c] : modes) {
                    double t = c;
                    for (int a = 0; a < 3; ++a) t *= std::cos(k[a] * std::numbers::pi * (x[a] - lo[a]) / len[a]);
                    v += t;
                }
                probe[4 * i] = v;
            }
        }
        if (auto q = poincare_quotient(disc, std::move(probe))) {
            out.quotients.push_back(*q);
            out.k0_lower = std::max(out.k0_lower, *q);
        } else {
            ++out.skipped;
        }
    }
    return out;
}

}  // namespace sgreen
