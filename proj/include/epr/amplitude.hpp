#pragma once

#include "epr/kinematics.hpp"

#include <Eigen/Dense>

#include <cassert>
#include <cmath>
#include <complex>

// Covariant singlet amplitude for two equal-mass spin-1/2 particles and the
// spin traces the correlation function is built from.
//
// In the 2x2 spin indices,
//
//   M(k,p) = -i [ (m+k0)(m+p0) - k.p - i sigma.(k x p) ] sigma2
//            / ( 2 m sqrt((m+p0)(m+k0)) )
//
// so that at rest M = -i sigma2, the usual nonrelativistic singlet. Momentum
// dependence enters only through the Wigner rotations of the boosted spins.

namespace epr {

template <typename Scalar>
using Mat2T = Eigen::Matrix<std::complex<Scalar>, 2, 2>;

using Mat2 = Mat2T<double>;

template <typename Scalar>
Mat2T<Scalar> pauli_x()
{
    Mat2T<Scalar> s;
    s << 0, 1, 1, 0;
    return s;
}

template <typename Scalar>
Mat2T<Scalar> pauli_y()
{
    using C = std::complex<Scalar>;
    Mat2T<Scalar> s;
    s << C(0), C(0, -1), C(0, 1), C(0);
    return s;
}

template <typename Scalar>
Mat2T<Scalar> pauli_z()
{
    Mat2T<Scalar> s;
    s << 1, 0, 0, -1;
    return s;
}

// v . sigma
template <typename Scalar>
Mat2T<Scalar> pauli_dot(const Vec3T<Scalar>& v)
{
    using C = std::complex<Scalar>;
    Mat2T<Scalar> s;
    s << C(v[2]), C(v[0], -v[1]), C(v[0], v[1]), C(-v[2]);
    return s;
}

template <typename Scalar>
struct SingletAmplitudeT {
    Mat2T<Scalar> mat;
    FourMomentumT<Scalar> k, p;
    Scalar mass;
};

using SingletAmplitude = SingletAmplitudeT<double>;

template <typename Scalar>
SingletAmplitudeT<Scalar> amplitude_matrix(const FourMomentumT<Scalar>& k,
                                           const FourMomentumT<Scalar>& p, Scalar mass)
{
    if (!(mass > Scalar(0)))
        throw std::domain_error("amplitude_matrix: mass must be positive");
    require_on_shell(k, mass, "amplitude_matrix");
    require_on_shell(p, mass, "amplitude_matrix");

    using C = std::complex<Scalar>;
    const Scalar a = (mass + k.e) * (mass + p.e) - k.p.dot(p.p);
    const Vec3T<Scalar> w = k.p.cross(p.p);
    const C pref = C(0, -1) / (Scalar(2) * mass * std::sqrt((mass + p.e) * (mass + k.e)));

    Mat2T<Scalar> core = C(a) * Mat2T<Scalar>::Identity() - C(0, 1) * pauli_dot(w);
    return {pref * (core * pauli_y<Scalar>()), k, p, mass};
}

// Matrix route: Tr{ (a.sigma) M (b.sigma^T) M'^dagger }.
template <typename Scalar>
std::complex<Scalar> trace_ab_direct(const Vec3T<Scalar>& a, const Vec3T<Scalar>& b,
                                     const SingletAmplitudeT<Scalar>& M,
                                     const SingletAmplitudeT<Scalar>& Mprime)
{
    return (pauli_dot(a) * M.mat * pauli_dot(b).transpose() * Mprime.mat.adjoint()).trace();
}

// Matrix route: Tr{ M M'^dagger }.
template <typename Scalar>
std::complex<Scalar> trace_plain_direct(const SingletAmplitudeT<Scalar>& M,
                                        const SingletAmplitudeT<Scalar>& Mprime)
{
    return (M.mat * Mprime.mat.adjoint()).trace();
}

namespace detail {

// Shared scalars of both closed-form traces: the invariant combinations
//   A  = (m+k0)(m+p0) - k.p          w  = k x p
//   A' = (m+k'0)(m+p'0) - k'.p'      w' = k' x p'
// and the positive normalization 2 m^2 sqrt((m+p0)(m+k0)(m+p'0)(m+k'0)).
template <typename Scalar>
struct TracePieces {
    Scalar A, Ap, norm;
    Vec3T<Scalar> w, wp;
};

template <typename Scalar>
TracePieces<Scalar> trace_pieces(const SingletAmplitudeT<Scalar>& M,
                                 const SingletAmplitudeT<Scalar>& Mprime)
{
    const Scalar m = M.mass;
    TracePieces<Scalar> t;
    t.A = (m + M.k.e) * (m + M.p.e) - M.k.p.dot(M.p.p);
    t.Ap = (m + Mprime.k.e) * (m + Mprime.p.e) - Mprime.k.p.dot(Mprime.p.p);
    t.w = M.k.p.cross(M.p.p);
    t.wp = Mprime.k.p.cross(Mprime.p.p);
    t.norm = Scalar(2) * m * m *
             std::sqrt((m + M.p.e) * (m + M.k.e) * (m + Mprime.p.e) * (m + Mprime.k.e));
    return t;
}

// Magnitude envelope of either trace; used to scale the closed-vs-direct check.
template <typename Scalar>
Scalar trace_scale(const TracePieces<Scalar>& t)
{
    return (std::abs(t.A) + t.w.norm()) * (std::abs(t.Ap) + t.wp.norm()) / t.norm;
}

template <typename Scalar>
void check_same_mass(const SingletAmplitudeT<Scalar>& M, const SingletAmplitudeT<Scalar>& Mprime)
{
    if (std::abs(M.mass - Mprime.mass) > Scalar(1e-12) * std::max(M.mass, Mprime.mass))
        throw std::domain_error("trace: amplitudes carry different masses");
}

} // namespace detail

// Closed form of Tr{ (a.sigma) M(k,p) (b.sigma^T) M^dagger(k',p') }:
//
//   -1/norm * { [a.w][b.w'] + [a.w'][b.w] - (a.b)(w.w') + (a.b) A A'
//               - (a x b).(w' A + w A') }
//
// Real for real momenta; at rest with a = b it equals -2.
template <typename Scalar>
std::complex<Scalar> trace_ab(const Vec3T<Scalar>& a, const Vec3T<Scalar>& b,
                              const SingletAmplitudeT<Scalar>& M,
                              const SingletAmplitudeT<Scalar>& Mprime)
{
    require_unit(a, "trace_ab(a)");
    require_unit(b, "trace_ab(b)");
    detail::check_same_mass(M, Mprime);

    const auto t = detail::trace_pieces(M, Mprime);
    const Scalar bracket = a.dot(t.w) * b.dot(t.wp) + a.dot(t.wp) * b.dot(t.w) -
                           a.dot(b) * t.w.dot(t.wp) + a.dot(b) * t.A * t.Ap -
                           a.cross(b).dot(t.wp * t.A + t.w * t.Ap);
    const std::complex<Scalar> closed(-bracket / t.norm);

#ifndef NDEBUG
    {
        const std::complex<Scalar> direct = trace_ab_direct(a, b, M, Mprime);
        assert(std::abs(closed - direct) <= Scalar(1e-10) * detail::trace_scale(t));
    }
#endif
    return closed;
}

// Closed form of Tr{ M(k,p) M^dagger(k',p') } = ( A A' + w.w' ) / norm.
// Real; strictly positive at coincident arguments (equals 2 at rest).
template <typename Scalar>
std::complex<Scalar> trace_plain(const SingletAmplitudeT<Scalar>& M,
                                 const SingletAmplitudeT<Scalar>& Mprime)
{
    detail::check_same_mass(M, Mprime);
    const auto t = detail::trace_pieces(M, Mprime);
    const std::complex<Scalar> closed((t.A * t.Ap + t.w.dot(t.wp)) / t.norm);

#ifndef NDEBUG
    {
        const std::complex<Scalar> direct = trace_plain_direct(M, Mprime);
        assert(std::abs(closed - direct) <= Scalar(1e-10) * detail::trace_scale(t));
    }
#endif
    return closed;
}

} // namespace epr
