#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace sgreen {

/// Spatial dimension. The theory needs d >= 3; everything here is built for d = 3.
inline constexpr int kDim = 3;

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

inline double frobenius(const Mat3& m) {
    double s = 0.0;
    for (const auto& row : m)
        for (double v : row) s += v * v;
    return std::sqrt(s);
}

// Error hierarchy. Each category maps onto one failure mode named by the
// operation contracts; the CLI maps categories onto exit codes.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class GeometryError : public Error {
  public:
    using Error::Error;
};
class ResolutionError : public Error {
  public:
    using Error::Error;
};
class DomainError : public Error {
  public:
    using Error::Error;
};
class ValidationError : public Error {
  public:
    using Error::Error;
};
class ShapeMismatchError : public Error {
  public:
    using Error::Error;
};
class CompatibilityError : public Error {
  public:
    using Error::Error;
};
class SeparationError : public Error {
  public:
    using Error::Error;
};
class ParameterError : public Error {
  public:
    using Error::Error;
};
class DataError : public Error {
  public:
    using Error::Error;
};
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// Krylov iteration ran out of budget. Carries the best relative residual seen.
class IterativeFailure : public Error {
  public:
    IterativeFailure(const std::string& what, double best_residual)
        : Error(what), best_residual_(best_residual) {}
    double best_residual() const noexcept { return best_residual_; }

  private:
    double best_residual_;
};

}  // namespace sgreen
