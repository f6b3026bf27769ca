#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

// Relativistic kinematics for equal-mass spin-1/2 pairs.
// Natural units throughout: hbar = c = 1; momenta carry the same unit as the mass.

namespace epr {

template <typename Scalar>
using Vec3T = Eigen::Matrix<Scalar, 3, 1>;

using Vec3 = Vec3T<double>;

// Mass-shell residual tolerance, relative to max(e^2, |p|^2, m^2).
inline constexpr double on_shell_rel_tol = 1e-12;

// Energy-momentum pair; valid states satisfy e^2 - |p|^2 = m^2 with e > 0.
template <typename Scalar>
struct FourMomentumT {
    Scalar e;
    Vec3T<Scalar> p;
};

using FourMomentum = FourMomentumT<double>;

template <typename Scalar>
FourMomentumT<Scalar> on_shell(Scalar mass, const Vec3T<Scalar>& p)
{
    if (!(mass > Scalar(0)))
        throw std::domain_error("on_shell: mass must be positive");
    return {std::sqrt(mass * mass + p.squaredNorm()), p};
}

// Expression-friendly form: accepts any 3-vector expression (Vec3::Zero(), sums, ...).
template <typename Scalar, typename Derived>
FourMomentumT<Scalar> on_shell(Scalar mass, const Eigen::MatrixBase<Derived>& p)
{
    return on_shell(mass, Vec3T<Scalar>(p));
}

// Metric (+,-,-,-): a.e*b.e - a.p.b.p
template <typename Scalar>
Scalar minkowski_dot(const FourMomentumT<Scalar>& a, const FourMomentumT<Scalar>& b)
{
    return a.e * b.e - a.p.dot(b.p);
}

template <typename Scalar>
bool is_on_shell(const FourMomentumT<Scalar>& q, Scalar mass,
                 Scalar rel_tol = Scalar(on_shell_rel_tol))
{
    const Scalar scale = std::max({q.e * q.e, q.p.squaredNorm(), mass * mass});
    return q.e > Scalar(0) &&
           std::abs(q.e * q.e - q.p.squaredNorm() - mass * mass) <= rel_tol * scale;
}

template <typename Scalar>
void require_on_shell(const FourMomentumT<Scalar>& q, Scalar mass, const char* where)
{
    if (!is_on_shell(q, mass))
        throw std::domain_error(std::string(where) + ": four-momentum off the mass shell");
}

// Spatial unit vector; normalized on construction, |vec()| = 1 to 1e-12.
template <typename Scalar>
class DirectionT {
public:
    explicit DirectionT(const Vec3T<Scalar>& v)
    {
        const Scalar n = v.norm();
        if (!(n > Scalar(0)))
            throw std::domain_error("Direction: cannot normalize a zero vector");
        v_ = v / n;
    }

    const Vec3T<Scalar>& vec() const { return v_; }

private:
    Vec3T<Scalar> v_;
};

using Direction = DirectionT<double>;

template <typename Derived>
void require_unit(const Eigen::MatrixBase<Derived>& v, const char* where)
{
    using Scalar = typename Derived::Scalar;
    if (std::abs(v.norm() - Scalar(1)) > Scalar(1e-12))
        throw std::domain_error(std::string(where) + ": expected a unit 3-vector");
}

} // namespace epr
