#pragma once

// Voxelized bounded domains in R^3 and the geometric queries the estimates
// need: |Omega|, |Omega ∩ B_r(x)|, dist(x, dOmega) and the exterior-measure
// density |B_R(x0) \ Omega| / R^d.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "stokes_green/common.hpp"

namespace sgreen {

using Shape3 = std::array<int, 3>;

struct BoundaryFace {
    int cell;         // included cell owning the face
    int axis;         // 0, 1, 2
    int orientation;  // +1: face at the upper end of the cell along axis
    Vec3 normal;      // outward unit normal
    Vec3 centroid;
};

struct BallQuery {
    Vec3 center{};
    double radius = 0.0;
};

class VoxelDomain {
  public:
    VoxelDomain(Shape3 shape, double h, std::vector<std::uint8_t> mask, Vec3 origin = {0.0, 0.0, 0.0})
        : shape_(shape), h_(h), origin_(origin), mask_(std::move(mask)) {
        if (h_ <= 0.0 || !std::isfinite(h_)) throw GeometryError("cell width must be positive");
        for (int n : shape_)
            if (n <= 0) throw GeometryError("grid shape must be positive");
        if (mask_.size() != static_cast<std::size_t>(cell_count()))
            throw GeometryError("mask size does not match grid shape");
        for (int c = 0; c < cell_count(); ++c)
            if (mask_[c]) included_.push_back(c);
        if (included_.empty()) throw GeometryError("domain has no included cells");
        check_connected();
        collect_boundary_faces();
    }

    const Shape3& shape() const noexcept { return shape_; }
    double h() const noexcept { return h_; }
    const Vec3& origin() const noexcept { return origin_; }
    int cell_count() const noexcept { return shape_[0] * shape_[1] * shape_[2]; }
    int included_count() const noexcept { return static_cast<int>(included_.size()); }
    double cell_volume() const noexcept { return h_ * h_ * h_; }
    double volume() const noexcept { return cell_volume() * included_count(); }
    const std::vector<std::uint8_t>& mask() const noexcept { return mask_; }
    const std::vector<int>& included_cells() const noexcept { return included_; }
    const std::vector<BoundaryFace>& boundary_faces() const noexcept { return faces_; }

    /// Row-major cell index, last axis fastest.
    int cell_index(int i, int j, int k) const noexcept { return (i * shape_[1] + j) * shape_[2] + k; }
    std::array<int, 3> cell_coords(int c) const noexcept {
        const int k = c % shape_[2];
        const int j = (c / shape_[2]) % shape_[1];
        const int i = c / (shape_[1] * shape_[2]);
        return {i, j, k};
    }
    bool in_grid(int i, int j, int k) const noexcept {
        return i >= 0 && j >= 0 && k >= 0 && i < shape_[0] && j < shape_[1] && k < shape_[2];
    }
    bool included(int i, int j, int k) const noexcept { return in_grid(i, j, k) && mask_[cell_index(i, j, k)]; }
    bool included(int c) const noexcept { return mask_[c] != 0; }

    Vec3 cell_center(int c) const noexcept {
        const auto ijk = cell_coords(c);
        return {origin_[0] + (ijk[0] + 0.5) * h_, origin_[1] + (ijk[1] + 0.5) * h_, origin_[2] + (ijk[2] + 0.5) * h_};
    }

    /// Lattice cell containing x (may lie outside the grid).
    std::array<int, 3> lattice_cell(const Vec3& x) const noexcept {
        std::array<int, 3> ijk{};
        for (int a = 0; a < 3; ++a) ijk[a] = static_cast<int>(std::floor((x[a] - origin_[a]) / h_));
        return ijk;
    }

    /// Included cell containing x, if any.
    std::optional<int> locate(const Vec3& x) const noexcept {
        const auto ijk = lattice_cell(x);
        if (!included(ijk[0], ijk[1], ijk[2])) return std::nullopt;
        return cell_index(ijk[0], ijk[1], ijk[2]);
    }

    bool contains(const Vec3& x) const noexcept { return locate(x).has_value(); }

    /// Included cell whose center is closest to x.
    int nearest_included_cell(const Vec3& x) const {
        if (auto c = locate(x)) return *c;
        int best = included_.front();
        double best_d = std::numeric_limits<double>::infinity();
        for (int c : included_) {
            const double d = norm(cell_center(c) - x);
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        return best;
    }

    /// Largest distance between included cell centers, plus one cell diagonal.
    double diameter() const {
        Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
        for (int c : included_) {
            const Vec3 x = cell_center(c);
            for (int a = 0; a < 3; ++a) {
                lo[a] = std::min(lo[a], x[a]);
                hi[a] = std::max(hi[a], x[a]);
            }
        }
        return norm(hi - lo) + std::sqrt(3.0) * h_;
    }

  private:
    void check_connected() const {
        std::vector<std::uint8_t> seen(mask_.size(), 0);
        std::queue<int> todo;
        todo.push(included_.front());
        seen[included_.front()] = 1;
        int reached = 0;
        while (!todo.empty()) {
            const int c = todo.front();
            todo.pop();
            ++reached;
            const auto ijk = cell_coords(c);
            for (int a = 0; a < 3; ++a)
                for (int s : {-1, 1}) {
                    auto n = ijk;
                    n[a] += s;
                    if (!included(n[0], n[1], n[2])) continue;
                    const int nc = cell_index(n[0], n[1], n[2]);
                    if (seen[nc]) continue;
                    seen[nc] = 1;
                    todo.push(nc);
                }
        }
        if (reached != included_count()) throw GeometryError("included region is not face-connected");
    }

    void collect_boundary_faces() {
        for (int c : included_) {
            const auto ijk = cell_coords(c);
            const Vec3 x = cell_center(c);
            for (int a = 0; a < 3; ++a)
                for (int s : {-1, 1}) {
                    auto n = ijk;
                    n[a] += s;
                    if (included(n[0], n[1], n[2])) continue;
                    BoundaryFace f{c, a, s, {0.0, 0.0, 0.0}, x};
                    f.normal[a] = s;
                    f.centroid[a] += 0.5 * s * h_;
                    faces_.push_back(f);
                }
        }
    }

    Shape3 shape_;
    double h_;
    Vec3 origin_;
    std::vector<std::uint8_t> mask_;
    std::vector<int> included_;
    std::vector<BoundaryFace> faces_;
};

namespace detail {

inline int cells_along(double extent, double h) {
    if (!(extent > 0.0) || !(h > 0.0)) throw GeometryError("extent and cell width must be positive");
    const double ratio = extent / h;
    const double n = std::round(ratio);
    if (n < 1.0 || std::abs(ratio - n) > 1e-3 * n)
        throw GeometryError("cell width does not divide extent " + std::to_string(extent));
    return static_cast<int>(n);
}

}  // namespace detail

inline VoxelDomain build_box(const Vec3& extent, double h) {
    Shape3 shape{};
    for (int a = 0; a < 3; ++a) shape[a] = detail::cells_along(extent[a], h);
    return VoxelDomain(shape, h, std::vector<std::uint8_t>(static_cast<std::size_t>(shape[0]) * shape[1] * shape[2], 1));
}

/// Box [0, extent] with the axis-aligned block [notch_lo, notch_hi] removed
/// (cells whose centers fall inside the block).
inline VoxelDomain build_l_shape(const Vec3& extent, const Vec3& notch_lo, const Vec3& notch_hi, double h) {
    Shape3 shape{};
    for (int a = 0; a < 3; ++a) {
        shape[a] = detail::cells_along(extent[a], h);
        if (!(notch_lo[a] >= 0.0 && notch_lo[a] < notch_hi[a] && notch_hi[a] <= extent[a]))
            throw GeometryError("notch must be a non-empty block inside the extent");
    }
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(shape[0]) * shape[1] * shape[2], 1);
    for (int i = 0; i < shape[0]; ++i)
        for (int j = 0; j < shape[1]; ++j)
            for (int k = 0; k < shape[2]; ++k) {
                const Vec3 x{(i + 0.5) * h, (j + 0.5) * h, (k + 0.5) * h};
                bool inside = true;
                for (int a = 0; a < 3; ++a) inside = inside && x[a] > notch_lo[a] && x[a] < notch_hi[a];
                if (inside) mask[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k] = 0;
            }
    if (std::none_of(mask.begin(), mask.end(), [](auto m) { return m != 0; }))
        throw GeometryError("notch removes the whole domain");
    return VoxelDomain(shape, h, std::move(mask));
}

/// Ball of the given radius centered in the box [0, 2 radius]^3.
inline VoxelDomain build_voxel_ball(double radius, double h) {
    if (!(radius > 0.0) || !(h > 0.0)) throw GeometryError("radius and cell width must be positive");
    if (radius < 4.0 * h) throw ResolutionError("ball radius must be at least 4h");
    const int n = static_cast<int>(std::ceil(2.0 * radius / h - 1e-9));
    const double c = 0.5 * n * h;
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(n) * n * n, 0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                const Vec3 x{(i + 0.5) * h - c, (j + 0.5) * h - c, (k + 0.5) * h - c};
                if (norm(x) < radius) mask[(static_cast<std::size_t>(i) * n + j) * n + k] = 1;
            }
    const Vec3 origin{radius - c, radius - c, radius - c};
    return VoxelDomain({n, n, n}, h, std::move(mask), origin);
}

/// Euclidean distance from an interior point to the nearest boundary face centroid.
inline double dist_to_boundary(const VoxelDomain& domain, const Vec3& x) {
    if (!domain.contains(x)) throw DomainError("point lies outside the domain");
    double best = std::numeric_limits<double>::infinity();
    for (const auto& f : domain.boundary_faces()) best = std::min(best, norm(f.centroid - x));
    return best;
}

namespace detail {

/// Calls fn(i, j, k, inside_grid) for every lattice cell whose center lies in the ball.
template <typename Fn>
void for_each_lattice_cell_in_ball(const VoxelDomain& domain, const BallQuery& q, Fn&& fn) {
    const double h = domain.h();
    const auto& o = domain.origin();
    std::array<int, 3> lo{}, hi{};
    for (int a = 0; a < 3; ++a) {
        lo[a] = static_cast<int>(std::floor((q.center[a] - q.radius - o[a]) / h - 0.5));
        hi[a] = static_cast<int>(std::ceil((q.center[a] + q.radius - o[a]) / h - 0.5));
    }
    const double r2 = q.radius * q.radius;
    for (int i = lo[0]; i <= hi[0]; ++i) {
        const double dx = o[0] + (i + 0.5) * h - q.center[0];
        for (int j = lo[1]; j <= hi[1]; ++j) {
            const double dy = o[1] + (j + 0.5) * h - q.center[1];
            for (int k = lo[2]; k <= hi[2]; ++k) {
                const double dz = o[2] + (k + 0.5) * h - q.center[2];
                if (dx * dx + dy * dy + dz * dz < r2) fn(i, j, k);
            }
        }
    }
}

}  // namespace detail

/// |Omega ∩ B| by counting included cells whose centers fall in the ball.
inline double ball_volume(const VoxelDomain& domain, const BallQuery& q) {
    if (!(q.radius > 0.0)) throw ParameterError("ball radius must be positive");
    long count = 0;
    detail::for_each_lattice_cell_in_ball(domain, q, [&](int i, int j, int k) {
        if (domain.included(i, j, k)) ++count;
    });
    return static_cast<double>(count) * domain.cell_volume();
}

/// |B \ Omega| by counting excluded lattice cells (inside or outside the grid).
inline double ball_exterior_volume(const VoxelDomain& domain, const BallQuery& q) {
    long count = 0;
    detail::for_each_lattice_cell_in_ball(domain, q, [&](int i, int j, int k) {
        if (!domain.included(i, j, k)) ++count;
    });
    return static_cast<double>(count) * domain.cell_volume();
}

struct ExteriorDensity {
    double theta = 0.0;
    std::vector<double> radii;  // admissible dyadic radii actually used
    int points_used = 0;
    Vec3 worst_point{};
    double worst_radius = 0.0;
};

inline bool on_boundary(const VoxelDomain& domain, const Vec3& x) {
    const double h = domain.h();
    const double tol = 1e-9 * h;
    for (const auto& f : domain.boundary_faces()) {
        bool hit = std::abs(x[f.axis] - f.centroid[f.axis]) <= tol;
        for (int a = 0; a < 3 && hit; ++a)
            if (a != f.axis) hit = std::abs(x[a] - f.centroid[a]) <= 0.5 * h + tol;
        if (hit) return true;
    }
    return false;
}

/// min over boundary points x0 and dyadic R in (4h, R0] of |B_R(x0) \ Omega| / R^3.
inline ExteriorDensity exterior_density(const VoxelDomain& domain, double R0, std::span<const Vec3> points) {
    if (!(R0 > 0.0 && R0 <= 1.0)) throw ParameterError("R0 must lie in (0, 1]");
    const double h = domain.h();
    if (R0 <= 4.0 * h) throw ResolutionError("R0 must exceed 4h");
    ExteriorDensity out;
    for (double R = R0; R > 4.0 * h; R *= 0.5) out.radii.push_back(R);
    out.theta = std::numeric_limits<double>::infinity();
    for (const auto& x0 : points) {
        if (!on_boundary(domain, x0)) continue;
        ++out.points_used;
        for (double R : out.radii) {
            const double th = ball_exterior_volume(domain, {x0, R}) / (R * R * R);
            if (th < out.theta) {
                out.theta = th;
                out.worst_point = x0;
                out.worst_radius = R;
            }
        }
    }
    if (out.points_used == 0) throw DomainError("no sample point lies on the boundary");
    return out;
}

/// Samples `samples` boundary face centroids with an even stride.
inline ExteriorDensity exterior_density(const VoxelDomain& domain, double R0, int samples) {
    if (samples < 1) throw ParameterError("need at least one sample");
    const auto& faces = domain.boundary_faces();
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(samples), faces.size());
    std::vector<Vec3> points;
    points.reserve(n);
    for (std::size_t s = 0; s < n; ++s) points.push_back(faces[s * faces.size() / n].centroid);
    return exterior_density(domain, R0, std::span<const Vec3>(points));
}

inline double unit_ball_volume() { return 4.0 / 3.0 * std::numbers::pi; }

}  // namespace sgreen
