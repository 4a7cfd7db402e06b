#pragma once

// Trilinear (Q1) finite elements on the voxel cells of a VoxelDomain.
// Unknowns live on cell corners, interleaved as (u0, u1, u2, p) per node.
// Cellwise values of a nodal field are corner averages, which equal both the
// value at the cell center and the exact cell mean of the trilinear function.

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <vector>

#include "stokes_green/common.hpp"
#include "stokes_green/domain.hpp"
#include "stokes_green/linalg.hpp"

namespace sgreen {

/// Integrals of products of Q1 shape functions and their derivatives over the
/// unit cube, exact (2-point Gauss per axis). Local corner l has offsets
/// (l >> 2 & 1, l >> 1 & 1, l & 1).
struct ReferenceElement {
    double stiffness[3][3][8][8]{};  // ∫ d_a phi_l d_b phi_m
    double grad_mass[3][8][8]{};     // ∫ phi_l d_b phi_m
    double mass[8][8]{};             // ∫ phi_l phi_m
    double grad_integral[3][8]{};    // ∫ d_b phi_m

    static const ReferenceElement& get() {
        static const ReferenceElement ref = build();
        return ref;
    }

    static int offset(int l, int axis) { return (l >> (2 - axis)) & 1; }

  private:
    static ReferenceElement build() {
        ReferenceElement r;
        const double g = 0.5 / std::sqrt(3.0);
        const double pts[2] = {0.5 - g, 0.5 + g};
        for (int qi = 0; qi < 2; ++qi)
            for (int qj = 0; qj < 2; ++qj)
                for (int qk = 0; qk < 2; ++qk) {
                    const double xi[3] = {pts[qi], pts[qj], pts[qk]};
                    const double w = 0.125;
                    double phi[8], dphi[8][3];
                    for (int l = 0; l < 8; ++l) {
                        double f[3], df[3];
                        for (int a = 0; a < 3; ++a) {
                            const int o = offset(l, a);
                            f[a] = o ? xi[a] : 1.0 - xi[a];
                            df[a] = o ? 1.0 : -1.0;
                        }
                        phi[l] = f[0] * f[1] * f[2];
                        dphi[l][0] = df[0] * f[1] * f[2];
                        dphi[l][1] = f[0] * df[1] * f[2];
                        dphi[l][2] = f[0] * f[1] * df[2];
                    }
                    for (int l = 0; l < 8; ++l)
                        for (int m = 0; m < 8; ++m) {
                            r.mass[l][m] += w * phi[l] * phi[m];
                            for (int a = 0; a < 3; ++a) {
                                r.grad_mass[a][l][m] += w * phi[l] * dphi[m][a];
                                for (int b = 0; b < 3; ++b) r.stiffness[a][b][l][m] += w * dphi[l][a] * dphi[m][b];
                            }
                        }
                    for (int m = 0; m < 8; ++m)
                        for (int a = 0; a < 3; ++a) r.grad_integral[a][m] += w * dphi[m][a];
                }
        return r;
    }
};

class Discretization {
  public:
    explicit Discretization(VoxelDomain domain) : domain_(std::move(domain)) {
        const auto& s = domain_.shape();
        const int nx = s[0] + 1, ny = s[1] + 1, nz = s[2] + 1;
        std::vector<int> lattice_to_node(static_cast<std::size_t>(nx) * ny * nz, -1);
        element_of_cell_.assign(static_cast<std::size_t>(domain_.cell_count()), -1);
        const auto& cells = domain_.included_cells();
        elements_.resize(cells.size());
        for (std::size_t e = 0; e < cells.size(); ++e) {
            const auto ijk = domain_.cell_coords(cells[e]);
            element_of_cell_[cells[e]] = static_cast<int>(e);
            for (int l = 0; l < 8; ++l) {
                const int i = ijk[0] + ReferenceElement::offset(l, 0);
                const int j = ijk[1] + ReferenceElement::offset(l, 1);
                const int k = ijk[2] + ReferenceElement::offset(l, 2);
                int& id = lattice_to_node[(static_cast<std::size_t>(i) * ny + j) * nz + k];
                if (id < 0) {
                    id = static_cast<int>(positions_.size());
                    positions_.push_back({domain_.origin()[0] + i * domain_.h(), domain_.origin()[1] + j * domain_.h(),
                                          domain_.origin()[2] + k * domain_.h()});
                }
                elements_[e][l] = id;
            }
        }
        neighbors_.resize(positions_.size());
        for (const auto& el : elements_)
            for (int a : el)
                for (int b : el) neighbors_[a].push_back(b);
        for (auto& nb : neighbors_) {
            std::sort(nb.begin(), nb.end());
            nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
        }
    }

    const VoxelDomain& domain() const noexcept { return domain_; }
    double h() const noexcept { return domain_.h(); }
    int node_count() const noexcept { return static_cast<int>(positions_.size()); }
    int element_count() const noexcept { return static_cast<int>(elements_.size()); }
    int dof_count() const noexcept { return 4 * node_count(); }
    const std::array<int, 8>& element_nodes(int e) const noexcept { return elements_[e]; }
    int element_of_cell(int c) const noexcept { return element_of_cell_[c]; }
    int cell_of_element(int e) const noexcept { return domain_.included_cells()[e]; }
    const Vec3& node_position(int n) const noexcept { return positions_[n]; }
    const std::vector<std::vector<int>>& node_neighbors() const noexcept { return neighbors_; }

    /// Corner average of component `comp` on element e.
    double cell_value(const Vector& x, int e, int comp) const {
        double s = 0.0;
        for (int n : elements_[e]) s += x[4 * n + comp];
        return 0.125 * s;
    }

    /// Derivative of component `comp` along `axis` at the center of element e.
    double cell_derivative(const Vector& x, int e, int comp, int axis) const {
        double s = 0.0;
        for (int l = 0; l < 8; ++l)
            s += (ReferenceElement::offset(l, axis) ? 1.0 : -1.0) * x[4 * elements_[e][l] + comp];
        return 0.25 * s / h();
    }

    /// (D u)_{ia} = d_a u_i at the center of element e.
    Mat3 cell_velocity_gradient(const Vector& x, int e) const {
        Mat3 g{};
        for (int i = 0; i < 3; ++i)
            for (int a = 0; a < 3; ++a) g[i][a] = cell_derivative(x, e, i, a);
        return g;
    }

    /// Exact ∫_Omega |D u_comp|^2 of the trilinear interpolant of one component.
    double exact_gradient_energy(const Vector& x, int comp) const {
        const auto& ref = ReferenceElement::get();
        double total = 0.0;
        for (const auto& el : elements_)
            for (int l = 0; l < 8; ++l)
                for (int m = 0; m < 8; ++m) {
                    double k = 0.0;
                    for (int a = 0; a < 3; ++a) k += ref.stiffness[a][a][l][m];
                    total += k * x[4 * el[l] + comp] * x[4 * el[m] + comp];
                }
        return total * h();
    }

    /// Cell mean over Omega of component comp.
    double mean(const Vector& x, int comp) const {
        double s = 0.0;
        for (int e = 0; e < element_count(); ++e) s += cell_value(x, e, comp);
        return s / element_count();
    }

  private:
    VoxelDomain domain_;
    std::vector<std::array<int, 8>> elements_;
    std::vector<int> element_of_cell_;
    std::vector<Vec3> positions_;
    std::vector<std::vector<int>> neighbors_;
};

}  // namespace sgreen
