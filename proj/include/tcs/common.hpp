#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace tcs {

inline constexpr double kPi = 3.14159265358979323846;

// Base error; subtypes below name the failure modes used across the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeMismatch : Error { using Error::Error; };
struct LengthMismatch : Error { using Error::Error; };
struct EmptyInput : Error { using Error::Error; };
struct PointTooFar : Error { using Error::Error; };
struct OutOfRange : Error { using Error::Error; };
struct IndexOutOfRange : Error { using Error::Error; };
struct MissingForwardCache : Error { using Error::Error; };
struct DegenerateBatch : Error { using Error::Error; };
struct DegenerateScan : Error { using Error::Error; };
struct NonPositiveDt : Error { using Error::Error; };
struct OutsideGate : Error { using Error::Error; };
struct NonMonotoneTime : Error { using Error::Error; };
struct EmptyDataset : Error { using Error::Error; };
struct NonFiniteLoss : Error { using Error::Error; };
struct EmptyCalibrationSet : Error { using Error::Error; };
struct NotCalibrated : Error { using Error::Error; };
struct NoMatches : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct SchemaError : Error { using Error::Error; };

// Canonical angle representation everywhere: (-pi, pi].
inline double wrap_angle(double a) {
    double r = std::remainder(a, 2.0 * kPi);
    if (r <= -kPi) r += 2.0 * kPi;
    return r;
}

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double cross(const Vec2& o) const { return x * o.y - y * o.x; }
    double norm() const { return std::hypot(x, y); }
    double squared_norm() const { return x * x + y * y; }
};

inline Vec2 rotate(const Vec2& v, double angle) {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    return {c * v.x - s * v.y, s * v.x + c * v.y};
}

}  // namespace tcs
