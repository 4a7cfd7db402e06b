#pragma once

// Coefficient tensors A^{ab}_{ij}(x) of the operator D_a(A^{ab} D_b u),
// ellipticity validation, the adjoint tensor and the partially averaged
// mean-oscillation functional used to audit "measurable in one direction"
// coefficient fields.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <vector>

#include "stokes_green/common.hpp"
#include "stokes_green/domain.hpp"

namespace sgreen {

/// A^{ab}_{ij}, a,b,i,j in {0,1,2}; stored at ((a*3+b)*3+i)*3+j.
using Tensor = std::array<double, 81>;

inline constexpr int tensor_index(int a, int b, int i, int j) { return ((a * 3 + b) * 3 + i) * 3 + j; }

inline Tensor identity_tensor(double scale = 1.0) {
    Tensor t{};
    for (int a = 0; a < 3; ++a)
        for (int i = 0; i < 3; ++i) t[tensor_index(a, a, i, i)] = scale;
    return t;
}

inline Tensor adjoint_tensor(const Tensor& t) {
    Tensor out{};
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) out[tensor_index(a, b, i, j)] = t[tensor_index(b, a, j, i)];
    return out;
}

/// Max absolute row sum of the 3x3 block A^{ab}.
inline double block_norm(const Tensor& t, int a, int b) {
    double worst = 0.0;
    for (int i = 0; i < 3; ++i) {
        double row = 0.0;
        for (int j = 0; j < 3; ++j) row += std::abs(t[tensor_index(a, b, i, j)]);
        worst = std::max(worst, row);
    }
    return worst;
}

inline double max_block_norm(const Tensor& t) {
    double worst = 0.0;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) worst = std::max(worst, block_norm(t, a, b));
    return worst;
}

/// sum_{a,b} A^{ab} xi_b . xi_a / sum_a |xi_a|^2, with xi stored as xi[a*3+i].
inline double coercivity_quotient(const Tensor& t, const std::array<double, 9>& xi) {
    double num = 0.0, den = 0.0;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) num += t[tensor_index(a, b, i, j)] * xi[b * 3 + j] * xi[a * 3 + i];
    for (double v : xi) den += v * v;
    return num / den;
}

struct GridSpec {
    Shape3 shape{};
    double h = 0.0;
    Vec3 origin{};

    static GridSpec of(const VoxelDomain& d) { return {d.shape(), d.h(), d.origin()}; }
    int cell_count() const { return shape[0] * shape[1] * shape[2]; }
    bool operator==(const GridSpec&) const = default;
};

/// Orthonormal coordinate frame. Row r of `rotation` is the r-th new axis;
/// new coordinates of x are rotation * (x - origin).
struct Frame {
    Vec3 origin{};
    Mat3 rotation{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};

    Frame() = default;
    Frame(Vec3 o, Mat3 r) : origin(o), rotation(r) {
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) {
                double d = 0.0;
                for (int k = 0; k < 3; ++k) d += rotation[a][k] * rotation[b][k];
                if (std::abs(d - (a == b ? 1.0 : 0.0)) > 1e-12) throw ValidationError("frame rotation is not orthonormal");
            }
    }

    /// Cyclic axis permutation whose first new axis is the old axis `first`.
    static Frame aligned(int first, Vec3 origin = {}) {
        Mat3 r{};
        for (int a = 0; a < 3; ++a) r[a][(first + a) % 3] = 1.0;
        return Frame(origin, r);
    }

    Vec3 axis(int r) const { return rotation[r]; }
    Vec3 to_local(const Vec3& x) const {
        const Vec3 d = x - origin;
        return {dot(rotation[0], d), dot(rotation[1], d), dot(rotation[2], d)};
    }
    Vec3 to_global(const Vec3& s) const {
        Vec3 x = origin;
        for (int r = 0; r < 3; ++r)
            for (int a = 0; a < 3; ++a) x[a] += s[r] * rotation[r][a];
        return x;
    }
};

/// Cellwise coefficient field stored as a palette of distinct tensors plus a
/// per-cell palette index. A field without a grid is constant in space.
class CoefficientField {
  public:
    static CoefficientField constant(const Tensor& t, double lambda) {
        CoefficientField f;
        f.palette_.push_back(t);
        f.lambda_ = check_lambda(lambda);
        return f;
    }

    CoefficientField(GridSpec grid, std::vector<Tensor> palette, std::vector<std::uint32_t> index, double lambda)
        : grid_(grid), palette_(std::move(palette)), index_(std::move(index)), lambda_(check_lambda(lambda)) {
        if (index_.size() != static_cast<std::size_t>(grid.cell_count()))
            throw ShapeMismatchError("coefficient index does not match grid");
        for (auto i : index_)
            if (i >= palette_.size()) throw ValidationError("coefficient index out of palette range");
    }

    /// Builds a field from raw per-cell tensors, merging identical values.
    static CoefficientField from_cells(GridSpec grid, const std::vector<Tensor>& cells, double lambda) {
        std::map<Tensor, std::uint32_t> seen;
        std::vector<Tensor> palette;
        std::vector<std::uint32_t> index;
        index.reserve(cells.size());
        for (const auto& t : cells) {
            auto [it, fresh] = seen.try_emplace(t, static_cast<std::uint32_t>(palette.size()));
            if (fresh) palette.push_back(t);
            index.push_back(it->second);
        }
        return CoefficientField(grid, std::move(palette), std::move(index), lambda);
    }

    bool is_constant() const noexcept { return !grid_.has_value(); }
    const std::optional<GridSpec>& grid() const noexcept { return grid_; }
    double lambda() const noexcept { return lambda_; }
    const std::vector<Tensor>& palette() const noexcept { return palette_; }
    const std::vector<std::uint32_t>& index() const noexcept { return index_; }

    const Tensor& at_cell(int c) const { return is_constant() ? palette_.front() : palette_[index_[c]]; }

    /// Tensor of the grid cell containing x; points off the grid use the nearest cell.
    const Tensor& at_point(const Vec3& x) const {
        if (is_constant()) return palette_.front();
        std::array<int, 3> ijk{};
        for (int a = 0; a < 3; ++a) {
            ijk[a] = static_cast<int>(std::floor((x[a] - grid_->origin[a]) / grid_->h));
            ijk[a] = std::clamp(ijk[a], 0, grid_->shape[a] - 1);
        }
        return palette_[index_[(ijk[0] * grid_->shape[1] + ijk[1]) * grid_->shape[2] + ijk[2]]];
    }

    /// True when the field can be used on `domain` (constant, or same grid).
    bool fits(const VoxelDomain& domain) const { return is_constant() || *grid_ == GridSpec::of(domain); }

    /// A^{ab} = (A^{ba})^T everywhere, i.e. the operator is formally self-adjoint.
    bool is_self_adjoint() const {
        return std::all_of(palette_.begin(), palette_.end(), [](const Tensor& t) { return adjoint_tensor(t) == t; });
    }

    CoefficientField with_lambda(double lambda) const {
        CoefficientField f = *this;
        f.lambda_ = check_lambda(lambda);
        return f;
    }

    bool operator==(const CoefficientField&) const = default;

  private:
    CoefficientField() = default;
    static double check_lambda(double lambda) {
        if (!(lambda > 0.0 && lambda <= 1.0)) throw ValidationError("ellipticity constant must lie in (0, 1]");
        return lambda;
    }

    std::optional<GridSpec> grid_;
    std::vector<Tensor> palette_;
    std::vector<std::uint32_t> index_;
    double lambda_ = 1.0;
};

inline CoefficientField constant_identity() { return CoefficientField::constant(identity_tensor(), 1.0); }

struct EllipticityReport {
    bool pass = false;
    double worst_quotient = 0.0;
    double max_block_norm = 0.0;
};

/// Samples `trials` random xi per distinct tensor; passes iff every quotient
/// is >= lambda - 1e-12 and every block norm is <= 1/lambda.
inline EllipticityReport validate_ellipticity(const CoefficientField& field, int trials, std::uint64_t seed) {
    if (trials < 1) throw ParameterError("need at least one trial");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    EllipticityReport rep;
    rep.worst_quotient = std::numeric_limits<double>::infinity();
    for (const auto& t : field.palette()) {
        rep.max_block_norm = std::max(rep.max_block_norm, max_block_norm(t));
        for (int s = 0; s < trials; ++s) {
            std::array<double, 9> xi{};
            for (auto& v : xi) v = gauss(rng);
            rep.worst_quotient = std::min(rep.worst_quotient, coercivity_quotient(t, xi));
        }
    }
    const double lambda = field.lambda();
    rep.pass = rep.worst_quotient >= lambda - 1e-12 && rep.max_block_norm <= 1.0 / lambda + 1e-12;
    return rep;
}

inline CoefficientField adjoint_field(const CoefficientField& field) {
    if (field.is_constant()) return CoefficientField::constant(adjoint_tensor(field.palette().front()), field.lambda());
    std::vector<Tensor> palette;
    palette.reserve(field.palette().size());
    for (const auto& t : field.palette()) palette.push_back(adjoint_tensor(t));
    return CoefficientField(*field.grid(), std::move(palette), field.index(), field.lambda());
}

struct Layer {
    double start = 0.0;  // first frame coordinate where this tensor begins
    Tensor tensor{};
};

namespace detail {

inline void require_elliptic(const Tensor& t, double lambda) {
    const auto rep = validate_ellipticity(CoefficientField::constant(t, 1.0).with_lambda(lambda), 64, 0x5eed);
    if (!rep.pass) throw ValidationError("profile tensor violates the ellipticity bounds");
}

}  // namespace detail

/// Field depending only on the first frame coordinate s = e_1 . (x - z) of the
/// cell center: the tensor of the last layer with start <= s (the first layer
/// below all starts).
inline CoefficientField piecewise_in_direction(const VoxelDomain& domain, const std::vector<Layer>& profile,
                                               const Frame& frame, double lambda) {
    if (profile.empty()) throw ParameterError("profile must not be empty");
    for (std::size_t k = 1; k < profile.size(); ++k)
        if (!(profile[k].start > profile[k - 1].start)) throw ParameterError("profile breaks must increase");
    for (const auto& layer : profile) detail::require_elliptic(layer.tensor, lambda);

    std::vector<Tensor> palette;
    for (const auto& layer : profile) palette.push_back(layer.tensor);
    std::vector<std::uint32_t> index(static_cast<std::size_t>(domain.cell_count()));
    for (int c = 0; c < domain.cell_count(); ++c) {
        const double s = frame.to_local(domain.cell_center(c))[0];
        std::uint32_t which = 0;
        for (std::size_t k = 0; k < profile.size(); ++k)
            if (profile[k].start <= s) which = static_cast<std::uint32_t>(k);
        index[c] = which;
    }
    return CoefficientField(GridSpec::of(domain), std::move(palette), std::move(index), lambda);
}

/// Stripes of width `width` along `axis`, alternating between t0 and t1.
inline CoefficientField alternating_in_direction(const VoxelDomain& domain, int axis, double width, const Tensor& t0,
                                                 const Tensor& t1, double lambda) {
    if (axis < 0 || axis > 2 || !(width > 0.0)) throw ParameterError("bad stripe axis or width");
    detail::require_elliptic(t0, lambda);
    detail::require_elliptic(t1, lambda);
    std::vector<std::uint32_t> index(static_cast<std::size_t>(domain.cell_count()));
    for (int c = 0; c < domain.cell_count(); ++c) {
        const double s = domain.cell_center(c)[axis] - domain.origin()[axis];
        index[c] = static_cast<std::uint32_t>(static_cast<long>(std::floor(s / width)) & 1L);
    }
    return CoefficientField(GridSpec::of(domain), {t0, t1}, std::move(index), lambda);
}

/// Cell average over B_R(z) of |A(x1, x') - average over B'_R(z') of A(x1, .)|,
/// maximized over the blocks (a, b). Quadrature points form a frame-aligned
/// lattice of spacing h centered at the ball center.
inline double partial_oscillation(const CoefficientField& field, const Frame& frame, const BallQuery& q) {
    if (field.is_constant()) {
        if (!(q.radius > 0.0)) throw ParameterError("ball radius must be positive");
        return 0.0;
    }
    const auto& g = *field.grid();
    if (q.radius < 4.0 * g.h) throw ResolutionError("oscillation ball radius must be at least 4h");
    for (int a = 0; a < 3; ++a)
        if (q.center[a] - q.radius < g.origin[a] - 1e-12 || q.center[a] + q.radius > g.origin[a] + g.shape[a] * g.h + 1e-12)
            throw ParameterError("oscillation ball leaves the grid bounding box");

    const int n = static_cast<int>(std::floor(q.radius / g.h));
    const double r2 = q.radius * q.radius;
    Frame local(q.center, frame.rotation);

    std::array<double, 9> dev_sum{};
    long ball_points = 0;
    for (int s1 = -n; s1 <= n; ++s1) {
        const double x1 = s1 * g.h;
        if (x1 * x1 >= r2) continue;
        // Average over the full (d-1)-disk of radius R at this first coordinate.
        std::vector<const Tensor*> disk;
        Tensor mean{};
        for (int s2 = -n; s2 <= n; ++s2)
            for (int s3 = -n; s3 <= n; ++s3) {
                const double y2 = s2 * g.h, y3 = s3 * g.h;
                if (y2 * y2 + y3 * y3 >= r2) continue;
                const Tensor& t = field.at_point(local.to_global({x1, y2, y3}));
                for (int e = 0; e < 81; ++e) mean[e] += t[e];
                if (x1 * x1 + y2 * y2 + y3 * y3 < r2) disk.push_back(&t);
            }
        long disk_points = 0;
        for (int s2 = -n; s2 <= n; ++s2)
            for (int s3 = -n; s3 <= n; ++s3)
                if ((s2 * s2 + s3 * s3) * g.h * g.h < r2) ++disk_points;
        for (double& v : mean) v /= static_cast<double>(disk_points);

        for (const Tensor* t : disk) {
            Tensor diff{};
            for (int e = 0; e < 81; ++e) diff[e] = (*t)[e] - mean[e];
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) dev_sum[a * 3 + b] += block_norm(diff, a, b);
            ++ball_points;
        }
    }
    double worst = 0.0;
    for (double v : dev_sum) worst = std::max(worst, v / static_cast<double>(ball_points));
    return worst;
}

}  // namespace sgreen
