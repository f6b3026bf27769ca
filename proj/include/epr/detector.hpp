#pragma once

#include "epr/kinematics.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <variant>

// Spatial detector regions and their momentum-space localization kernels
//
//   Delta_Omega(q) = (2 pi)^-3  Integral_Omega d^3x e^{-i q.x}
//
// i.e. the matrix elements of the Newton-Wigner projector onto the region.
// Delta_Omega(0) = Vol(Omega)/(2 pi)^3 and Delta_Omega(-q) = conj(Delta_Omega(q)).

namespace epr {

// Raised when a distributional kernel is evaluated pointwise. The all-space
// region acts as the identity; ratios of localized matrix elements degenerate
// to the sharp-momentum correlation, which is the intended route.
struct DistributionalKernelError : std::domain_error {
    DistributionalKernelError()
        : std::domain_error("delta_kernel: all-space kernel is a delta distribution; "
                            "use the sharp-momentum correlation path instead")
    {
    }
};

struct Box {
    Vec3 center;
    Vec3 sides; // full edge lengths, all > 0
};

struct Ball {
    Vec3 center;
    double radius; // > 0
};

struct AllSpace {
};

class DetectorRegion {
public:
    DetectorRegion(const Box& b) : shape_(b) // NOLINT(google-explicit-constructor)
    {
        if (!(b.sides.array() > 0.0).all())
            throw std::domain_error("DetectorRegion: box sides must be positive");
    }

    DetectorRegion(const Ball& b) : shape_(b) // NOLINT(google-explicit-constructor)
    {
        if (!(b.radius > 0.0))
            throw std::domain_error("DetectorRegion: ball radius must be positive");
    }

    DetectorRegion(const AllSpace& a) : shape_(a) {} // NOLINT(google-explicit-constructor)

    bool is_all_space() const { return std::holds_alternative<AllSpace>(shape_); }
    bool is_box() const { return std::holds_alternative<Box>(shape_); }
    bool is_ball() const { return std::holds_alternative<Ball>(shape_); }

    const Box& box() const { return std::get<Box>(shape_); }
    const Ball& ball() const { return std::get<Ball>(shape_); }

    Vec3 center() const
    {
        if (is_box()) return box().center;
        if (is_ball()) return ball().center;
        return Vec3::Zero();
    }

    double volume() const
    {
        if (is_box()) return box().sides.prod();
        if (is_ball()) {
            const double r = ball().radius;
            return 4.0 / 3.0 * std::numbers::pi * r * r * r;
        }
        return std::numeric_limits<double>::infinity();
    }

    // Width of the projection of the region onto a line along unit vector n;
    // independent of the center.
    double extent_along(const Vec3& n) const
    {
        if (is_box()) return box().sides.cwiseProduct(n.cwiseAbs()).sum();
        if (is_ball()) return 2.0 * ball().radius;
        return std::numeric_limits<double>::infinity();
    }

private:
    std::variant<Box, Ball, AllSpace> shape_;
};

namespace detail {

// sin(x)/(pi q) for one box axis, with the even series below |q L| = 1e-4
// where the direct quotient loses digits. x = q L / 2; the q -> 0 limit is
// L/(2 pi).
inline double box_axis_factor(double q, double L)
{
    const double x = 0.5 * q * L;
    if (std::abs(q * L) < 1e-4) {
        const double x2 = x * x;
        return L / (2.0 * std::numbers::pi) * (1.0 - x2 / 6.0 + x2 * x2 / 120.0);
    }
    return std::sin(x) / (std::numbers::pi * q);
}

// (sin x - x cos x)/x^3; the x -> 0 limit is 1/3. The subtraction cancels
// catastrophically for small x (relative error ~ eps/x^2), so the series
// covers |x| < 1/2 where the trig form first reaches ~1e-14 accuracy. At
// the switch the series tail (x^16 term) is below 1e-19.
inline double ball_radial_factor(double x)
{
    if (std::abs(x) < 0.5) {
        // sum_{n>=1} (-1)^(n+1) 2n x^(2n-2) / (2n+1)!  up to n = 8
        const double x2 = x * x;
        double term = 1.0 / 3.0, sum = term;
        for (int n = 2; n <= 8; ++n) {
            term *= -x2 * (2.0 * n) / ((2.0 * n - 2.0) * (2.0 * n) * (2.0 * n + 1.0));
            sum += term;
        }
        return sum;
    }
    return (std::sin(x) - x * std::cos(x)) / (x * x * x);
}

} // namespace detail

inline std::complex<double> delta_kernel(const DetectorRegion& region, const Vec3& q)
{
    if (region.is_all_space())
        throw DistributionalKernelError{};

    const std::complex<double> phase = std::polar(1.0, -q.dot(region.center()));
    if (region.is_box()) {
        const Box& b = region.box();
        double prod = 1.0;
        for (int i = 0; i < 3; ++i)
            prod *= detail::box_axis_factor(q[i], b.sides[i]);
        return phase * prod;
    }
    const Ball& b = region.ball();
    const double r = b.radius;
    const double x = q.norm() * r;
    return phase * (r * r * r * detail::ball_radial_factor(x) /
                    (2.0 * std::numbers::pi * std::numbers::pi));
}

} // namespace epr
