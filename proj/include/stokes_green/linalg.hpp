#pragma once

// Node-blocked sparse storage and Krylov solvers for the saddle-point system.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "stokes_green/common.hpp"

namespace sgreen {

using Vector = Eigen::VectorXd;

/// Block CSR matrix with dense 4x4 blocks (u0, u1, u2, p per node), stored row-major.
class NodeBlockMatrix {
  public:
    static constexpr int B = 4;

    NodeBlockMatrix() = default;

    /// neighbors[i] must be sorted and contain i.
    explicit NodeBlockMatrix(const std::vector<std::vector<int>>& neighbors) : rows_(static_cast<int>(neighbors.size())) {
        row_ptr_.reserve(rows_ + 1);
        row_ptr_.push_back(0);
        for (const auto& nb : neighbors) {
            col_.insert(col_.end(), nb.begin(), nb.end());
            row_ptr_.push_back(static_cast<int>(col_.size()));
        }
        val_.assign(col_.size() * B * B, 0.0);
    }

    int block_rows() const noexcept { return rows_; }
    int size() const noexcept { return rows_ * B; }
    std::size_t block_count() const noexcept { return col_.size(); }
    const std::vector<int>& row_ptr() const noexcept { return row_ptr_; }
    const std::vector<int>& cols() const noexcept { return col_; }

    /// Slot of block (i, j); -1 if structurally zero.
    int slot(int i, int j) const {
        const auto first = col_.begin() + row_ptr_[i];
        const auto last = col_.begin() + row_ptr_[i + 1];
        const auto it = std::lower_bound(first, last, j);
        return (it != last && *it == j) ? static_cast<int>(it - col_.begin()) : -1;
    }

    double* block(int s) noexcept { return val_.data() + static_cast<std::size_t>(s) * B * B; }
    const double* block(int s) const noexcept { return val_.data() + static_cast<std::size_t>(s) * B * B; }

    /// y = M x.
    void multiply(const Vector& x, Vector& y) const {
        y.setZero(size());
        for (int i = 0; i < rows_; ++i) {
            double acc[B] = {0, 0, 0, 0};
            for (int s = row_ptr_[i]; s < row_ptr_[i + 1]; ++s) {
                const double* blk = block(s);
                const double* xv = x.data() + static_cast<std::size_t>(col_[s]) * B;
                for (int r = 0; r < B; ++r)
                    acc[r] += blk[r * B] * xv[0] + blk[r * B + 1] * xv[1] + blk[r * B + 2] * xv[2] + blk[r * B + 3] * xv[3];
            }
            for (int r = 0; r < B; ++r) y[i * B + r] = acc[r];
        }
    }

    /// y = M^T x.
    void multiply_transpose(const Vector& x, Vector& y) const {
        y.setZero(size());
        for (int i = 0; i < rows_; ++i) {
            const double* xv = x.data() + static_cast<std::size_t>(i) * B;
            for (int s = row_ptr_[i]; s < row_ptr_[i + 1]; ++s) {
                const double* blk = block(s);
                double* yv = y.data() + static_cast<std::size_t>(col_[s]) * B;
                for (int r = 0; r < B; ++r)
                    for (int c = 0; c < B; ++c) yv[c] += blk[r * B + c] * xv[r];
            }
        }
    }

    /// y_rows = M[rows, cols] x_cols for sub-block component ranges, e.g. the
    /// divergence part (rows {3}, cols {0,1,2}). Other entries of y are zero.
    void multiply_part(const Vector& x, Vector& y, int r0, int r1, int c0, int c1) const {
        y.setZero(size());
        for (int i = 0; i < rows_; ++i)
            for (int s = row_ptr_[i]; s < row_ptr_[i + 1]; ++s) {
                const double* blk = block(s);
                const double* xv = x.data() + static_cast<std::size_t>(col_[s]) * B;
                for (int r = r0; r < r1; ++r)
                    for (int c = c0; c < c1; ++c) y[i * B + r] += blk[r * B + c] * xv[c];
            }
    }

    bool is_symmetric(double tol = 0.0) const {
        for (int i = 0; i < rows_; ++i)
            for (int s = row_ptr_[i]; s < row_ptr_[i + 1]; ++s) {
                const int t = slot(col_[s], i);
                if (t < 0) return false;
                const double* a = block(s);
                const double* b = block(t);
                for (int r = 0; r < B; ++r)
                    for (int c = 0; c < B; ++c)
                        if (std::abs(a[r * B + c] - b[c * B + r]) > tol) return false;
            }
        return true;
    }

  private:
    int rows_ = 0;
    std::vector<int> row_ptr_;
    std::vector<int> col_;
    std::vector<double> val_;
};

using LinearMap = std::function<void(const Vector&, Vector&)>;

struct KrylovResult {
    int iterations = 0;
    double relative_residual = std::numeric_limits<double>::infinity();
    bool converged = false;
};

/// Preconditioned MINRES for symmetric (possibly singular but consistent) systems.
/// `precond` must be symmetric positive semidefinite and definite on the range.
/// Stops when the preconditioned residual estimate drops below tol relative to
/// the initial one; the caller checks the true residual.
inline KrylovResult minres(const LinearMap& apply, const LinearMap& precond, const Vector& b, Vector& x, double tol,
                           int max_iter) {
    KrylovResult out;
    const Eigen::Index n = b.size();
    Vector r1(n), y(n), tmp(n);
    apply(x, tmp);
    r1 = b - tmp;
    precond(r1, y);
    double beta1 = r1.dot(y);
    if (beta1 < 0.0) throw Error("minres: preconditioner is not positive semidefinite");
    beta1 = std::sqrt(beta1);
    if (beta1 == 0.0) {
        out.converged = true;
        out.relative_residual = 0.0;
        return out;
    }
    Vector r2 = r1, v(n), w = Vector::Zero(n), w1(n), w2 = Vector::Zero(n);
    double oldb = 0.0, beta = beta1, dbar = 0.0, epsln = 0.0, phibar = beta1;
    double cs = -1.0, sn = 0.0;
    for (int itn = 1; itn <= max_iter; ++itn) {
        v = y / beta;
        apply(v, y);
        if (itn >= 2) y -= (beta / oldb) * r1;
        const double alfa = v.dot(y);
        y -= (alfa / beta) * r2;
        r1.swap(r2);
        r2 = y;
        precond(r2, y);
        oldb = beta;
        beta = r2.dot(y);
        if (beta < 0.0) throw Error("minres: preconditioner is not positive semidefinite");
        beta = std::sqrt(beta);
        const double oldeps = epsln;
        const double delta = cs * dbar + sn * alfa;
        const double gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        const double gamma = std::max(std::hypot(gbar, beta), std::numeric_limits<double>::min());
        cs = gbar / gamma;
        sn = beta / gamma;
        const double phi = cs * phibar;
        phibar = sn * phibar;
        w1.swap(w2);
        w2.swap(w);
        w = (v - oldeps * w1 - delta * w2) / gamma;
        x += phi * w;
        out.iterations = itn;
        out.relative_residual = phibar / beta1;
        if (out.relative_residual < tol || beta == 0.0) {
            out.converged = true;
            break;
        }
    }
    return out;
}

/// Restarted right-preconditioned GMRES(m). The residual tracked is the true
/// (unpreconditioned) residual relative to ||b||.
inline KrylovResult gmres(const LinearMap& apply, const LinearMap& precond, const Vector& b, Vector& x, double tol,
                          int max_iter, int restart = 40) {
    KrylovResult out;
    const Eigen::Index n = b.size();
    const double bnorm = b.norm();
    if (bnorm == 0.0) {
        x.setZero(n);
        out.converged = true;
        out.relative_residual = 0.0;
        return out;
    }
    std::vector<Vector> V(restart + 1, Vector(n)), Z(restart, Vector(n));
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(restart + 1, restart);
    Vector cs(restart), sn(restart), g(restart + 1), tmp(n);
    int total = 0;
    while (total < max_iter) {
        apply(x, tmp);
        Vector r = b - tmp;
        const double beta = r.norm();
        out.relative_residual = beta / bnorm;
        if (out.relative_residual < tol) {
            out.converged = true;
            break;
        }
        V[0] = r / beta;
        g.setZero();
        g[0] = beta;
        H.setZero();
        int j = 0;
        for (; j < restart && total < max_iter; ++j, ++total) {
            precond(V[j], Z[j]);
            apply(Z[j], V[j + 1]);
            for (int i = 0; i <= j; ++i) {
                H(i, j) = V[j + 1].dot(V[i]);
                V[j + 1] -= H(i, j) * V[i];
            }
            H(j + 1, j) = V[j + 1].norm();
            if (H(j + 1, j) > 0.0) V[j + 1] /= H(j + 1, j);
            for (int i = 0; i < j; ++i) {
                const double t = cs[i] * H(i, j) + sn[i] * H(i + 1, j);
                H(i + 1, j) = -sn[i] * H(i, j) + cs[i] * H(i + 1, j);
                H(i, j) = t;
            }
            const double d = std::hypot(H(j, j), H(j + 1, j));
            cs[j] = H(j, j) / d;
            sn[j] = H(j + 1, j) / d;
            H(j, j) = d;
            H(j + 1, j) = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j] * g[j];
            if (std::abs(g[j + 1]) / bnorm < tol) {
                ++j;
                ++total;
                break;
            }
        }
        Vector coef = H.topLeftCorner(j, j).triangularView<Eigen::Upper>().solve(g.head(j));
        for (int i = 0; i < j; ++i) x += coef[i] * Z[i];
        out.iterations = total;
    }
    if (!out.converged) {
        apply(x, tmp);
        out.relative_residual = (b - tmp).norm() / bnorm;
        out.converged = out.relative_residual < tol;
    }
    return out;
}

/// Preconditioned conjugate gradients for SPD (or PSD consistent) maps.
inline KrylovResult conjugate_gradient(const LinearMap& apply, const LinearMap& precond, const Vector& b, Vector& x,
                                       double tol, int max_iter) {
    KrylovResult out;
    const double bnorm = b.norm();
    if (bnorm == 0.0) {
        x.setZero(b.size());
        out.converged = true;
        out.relative_residual = 0.0;
        return out;
    }
    Vector r(b.size()), z(b.size()), p(b.size()), q(b.size());
    apply(x, q);
    r = b - q;
    precond(r, z);
    p = z;
    double rz = r.dot(z);
    for (int it = 1; it <= max_iter; ++it) {
        apply(p, q);
        const double alpha = rz / p.dot(q);
        x += alpha * p;
        r -= alpha * q;
        out.iterations = it;
        out.relative_residual = r.norm() / bnorm;
        if (out.relative_residual < tol) {
            out.converged = true;
            break;
        }
        precond(r, z);
        const double rz_new = r.dot(z);
        p = z + (rz_new / rz) * p;
        rz = rz_new;
    }
    return out;
}

}  // namespace sgreen
