#pragma once

#include "epr/amplitude.hpp"
#include "epr/detector.hpp"
#include "epr/integrals.hpp"
#include "epr/kinematics.hpp"
#include "epr/wavepacket.hpp"

#include <cmath>
#include <complex>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <utility>

// Spin correlation C(a,b) = <(a.S_A)(b.S_B)> / <P_A P_B> for the two-particle
// singlet, in three regimes: sharp momenta (closed form, exact), both packets
// along fixed directions (scalar assembly), and general packets (full tensor
// assembly). Detector localization enters only through MomentumIntegrals.

namespace epr {

enum class Regime { SharpMomentum, FixedDirection, General };

inline const char* regime_name(Regime r)
{
    switch (r) {
    case Regime::SharpMomentum: return "sharp";
    case Regime::FixedDirection: return "fixed_direction";
    case Regime::General: return "general";
    }
    return "?";
}

struct CorrelationResult {
    double value = 0.0;
    double abs_error = 0.0;
    Regime regime = Regime::SharpMomentum;
    std::string inputs_digest;
    bool warning = false;
};

// The normalization integral of the state vanished to working precision, so
// the correlation ratio is undefined for these inputs.
struct DegenerateStateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string fmt_vec(const Vec3& v)
{
    char buf[96];
    std::snprintf(buf, sizeof(buf), "[%.9g,%.9g,%.9g]", v.x(), v.y(), v.z());
    return buf;
}

inline std::string fmt_num(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", x);
    return buf;
}

} // namespace detail

inline std::string describe(const DetectorRegion& det)
{
    if (det.is_all_space()) return "all_space";
    if (det.is_box())
        return "box" + detail::fmt_vec(det.box().sides) + "@" + detail::fmt_vec(det.box().center);
    return "ball(r=" + detail::fmt_num(det.ball().radius) + ")@" +
           detail::fmt_vec(det.ball().center);
}

inline std::string describe(const RadialProfile& f)
{
    if (f.is_gaussian())
        return "gaussian(k0=" + detail::fmt_num(f.gaussian().k0) +
               ",sigma=" + detail::fmt_num(f.gaussian().sigma) + ")";
    return "rectangular(" + detail::fmt_num(f.rectangular().kmin) + "," +
           detail::fmt_num(f.rectangular().kmax) + ")";
}

// --- sharp momenta ------------------------------------------------------------

// Matrix route: C as a ratio of direct spin traces of the singlet amplitude.
inline double correlation_sharp_trace_ratio(const FourMomentum& qa, const FourMomentum& qb,
                                            const Vec3& a, const Vec3& b, double mass)
{
    const SingletAmplitude m = amplitude_matrix(qa, qb, mass);
    const std::complex<double> num = trace_ab_direct(a, b, m, m);
    const std::complex<double> den = trace_plain_direct(m, m);
    return (num / den).real();
}

// Closed form for plane-wave momenta. The product qa.qb is the Minkowski one.
inline CorrelationResult correlation_sharp(const FourMomentum& qa, const FourMomentum& qb,
                                           const Vec3& a, const Vec3& b)
{
    require_unit(a, "correlation_sharp(a)");
    require_unit(b, "correlation_sharp(b)");
    const double ma2 = minkowski_dot(qa, qa);
    const double mb2 = minkowski_dot(qb, qb);
    if (!(ma2 > 0.0) || !(mb2 > 0.0))
        throw std::domain_error("correlation_sharp: momenta must be timelike with positive energy");
    const double scale = std::max(ma2, mb2);
    if (std::abs(ma2 - mb2) > 1e-10 * scale)
        throw std::domain_error("correlation_sharp: particle masses disagree");
    const double mass = std::sqrt(0.5 * (ma2 + mb2));

    const Vec3 cr = qa.p.cross(qb.p);
    const Vec3 inner = a.cross(b) + (a.dot(qa.p) * b.cross(qb.p) - b.dot(qb.p) * a.cross(qa.p)) /
                                        ((qa.e + mass) * (qb.e + mass));
    const double c = -a.dot(b) + cr.dot(inner) / (mass * mass + minkowski_dot(qa, qb));

#ifndef NDEBUG
    {
        const double ref = correlation_sharp_trace_ratio(qa, qb, a, b, mass);
        assert(std::abs(c - ref) <= 1e-12 * std::max(1.0, std::abs(c)));
    }
#endif

    CorrelationResult r;
    r.value = c;
    r.abs_error = 0.0;
    r.regime = Regime::SharpMomentum;
    r.inputs_digest = "sharp m=" + detail::fmt_num(mass) + " qa=" + detail::fmt_vec(qa.p) +
                      " qb=" + detail::fmt_vec(qb.p) + " a=" + detail::fmt_vec(a) +
                      " b=" + detail::fmt_vec(b);
    return r;
}

inline CorrelationResult correlation_sharp(double mass, const Vec3& qa, const Vec3& qb,
                                           const Vec3& a, const Vec3& b)
{
    return correlation_sharp(on_shell(mass, qa), on_shell(mass, qb), a, b);
}

// --- assembly from pair integrals ---------------------------------------------

namespace detail {

struct BracketPair {
    std::complex<double> num, den;
};

// Spin-trace contractions of the factorized pair integrals. The correlation
// is C = -Re(num/den); the common mass and 2^n prefactors of the localized
// matrix elements cancel in the ratio and are dropped here.
inline BracketPair correlation_brackets(const MomentumIntegrals& ia,
                                        const MomentumIntegrals& ib, const Vec3& a,
                                        const Vec3& b)
{
    using C = std::complex<double>;
    const C j1 = ia.i1 * ib.i1;
    const C j2 = ia.i2.cwiseProduct(ib.i2).sum(); // plain bilinear sum, no conjugation
    const Mat3c i3a = ia.i3, i3b = ib.i3;
    const Mat3c i3bc = i3b.conjugate();
    const Mat3c i3ac = i3a.conjugate();

    const C tr_mixed = (i3a * i3bc).trace();
    const C tr_plain = (i3a * i3b).trace();
    const C tr_split = i3a.trace() * i3b.trace();

    const C two_re_j2 = j2 + std::conj(j2);

    // a.b coefficient
    const C s_ab = j1 - two_re_j2 + tr_mixed + tr_plain - tr_split;

    // (a x b) . [I2A x I2B + c.c.]
    Vec3c cross;
    cross << ia.i2.y() * ib.i2.z() - ia.i2.z() * ib.i2.y(),
        ia.i2.z() * ib.i2.x() - ia.i2.x() * ib.i2.z(),
        ia.i2.x() * ib.i2.y() - ia.i2.y() * ib.i2.x();
    const Vec3 axb = a.cross(b);
    C s_cross{};
    for (int i = 0; i < 3; ++i) s_cross += axb[i] * (cross[i] + std::conj(cross[i]));

    // a^T [I3A I3B* - I3B I3A* + I3A* I3B - I3B* I3A] b
    const Mat3c comm = i3a * i3bc - i3b * i3ac + i3ac * i3b - i3bc * i3a;
    C s_sandwich{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) s_sandwich += a[i] * comm(i, j) * b[j];

    // eps^{ijk} eps^{qrs} a_i b_q [I3A_{jr} I3B_{ks} + c.c.]
    struct EpsEntry {
        int i, j, k;
        double sign;
    };
    static constexpr EpsEntry eps[6] = {{0, 1, 2, 1.0}, {1, 2, 0, 1.0}, {2, 0, 1, 1.0},
                                        {0, 2, 1, -1.0}, {2, 1, 0, -1.0}, {1, 0, 2, -1.0}};
    C s_eps{};
    for (const auto& ea : eps)
        for (const auto& eb : eps) {
            const C prod = i3a(ea.j, eb.j) * i3b(ea.k, eb.k);
            s_eps += ea.sign * eb.sign * a[ea.i] * b[eb.i] * (prod + std::conj(prod));
        }

    BracketPair out;
    out.num = a.dot(b) * s_ab - s_cross + s_sandwich + s_eps;
    out.den = j1 - two_re_j2 + tr_mixed - tr_plain + tr_split;
    return out;
}

struct FamilyMagnitudes {
    double m1, m2, m3;
};

inline FamilyMagnitudes magnitudes(const MomentumIntegrals& x)
{
    return {std::abs(x.i1), x.i2.norm(), x.i3.norm()};
}

} // namespace detail

// General (tensor) assembly from precomputed pair integrals. a, b are unit
// analyzer directions. Error bars combine the per-family quadrature errors
// with conservative term-count constants.
inline CorrelationResult correlation_general(const MomentumIntegrals& ia,
                                             const MomentumIntegrals& ib, const Vec3& a,
                                             const Vec3& b)
{
    require_unit(a, "correlation_general(a)");
    require_unit(b, "correlation_general(b)");

    const detail::BracketPair br = detail::correlation_brackets(ia, ib, a, b);

    const auto ma = detail::magnitudes(ia);
    const auto mb = detail::magnitudes(ib);
    const double scale = ma.m1 * mb.m1 + ma.m2 * mb.m2 + ma.m3 * mb.m3 + 1e-300;
    if (std::abs(br.den) <= 1e-14 * scale)
        throw DegenerateStateError("correlation ratio is 0/0 for this state and detectors");

    const std::complex<double> ratio = br.num / br.den;
    const double value = -ratio.real();

    const double dp1 = ma.m1 * ib.err_i1 + mb.m1 * ia.err_i1;
    const double dp2 = ma.m2 * ib.err_i2 + mb.m2 * ia.err_i2;
    const double dp3 = ma.m3 * ib.err_i3 + mb.m3 * ia.err_i3;
    const double dnum = dp1 + 4.0 * dp2 + 12.0 * dp3;
    const double dden = dp1 + 2.0 * dp2 + 4.0 * dp3;

    CorrelationResult r;
    r.value = value;
    r.abs_error = (dnum + std::abs(value) * dden) / std::abs(br.den) + std::abs(ratio.imag());
    r.regime = Regime::General;
    r.warning = ia.warning || ib.warning;
    return r;
}

inline CorrelationResult correlation_general(const FactorizedState& st,
                                             const DetectorRegion& det_a,
                                             const DetectorRegion& det_b, const Vec3& a,
                                             const Vec3& b, const QuadratureSpec& spec)
{
    // The general route treats each packet as spherically symmetric about the
    // origin of its radial profile; the stored directions are not used here.
    const MomentumIntegrals ia = general_integrals(st.profile_a, det_a, st.mass, spec);
    const MomentumIntegrals ib = general_integrals(st.profile_b, det_b, st.mass, spec);
    CorrelationResult r = correlation_general(ia, ib, a, b);
    r.inputs_digest = "general m=" + detail::fmt_num(st.mass) + " A={" +
                      describe(st.profile_a) + " in " + describe(det_a) + "} B={" +
                      describe(st.profile_b) + " in " + describe(det_b) + "} a=" +
                      detail::fmt_vec(a) + " b=" + detail::fmt_vec(b);
    return r;
}

// Fixed-direction scalar assembly: packets along unit n (particle A) and m
// (particle B), pair integrals reduced along those lines. For m = -n the
// ratio collapses to C = -a.b identically.
inline CorrelationResult correlation_fixed_directions(const MomentumIntegrals& ia,
                                                      const MomentumIntegrals& ib,
                                                      const Vec3& a, const Vec3& b)
{
    require_unit(a, "correlation_fixed_directions(a)");
    require_unit(b, "correlation_fixed_directions(b)");
    if (!ia.direction || !ib.direction || !ia.i2_scalar || !ia.i3_scalar || !ib.i2_scalar ||
        !ib.i3_scalar)
        throw std::domain_error(
            "correlation_fixed_directions: integrals lack fixed-direction reductions");

    using C = std::complex<double>;
    const Vec3 n = ia.direction->vec(), m = ib.direction->vec();
    const double nm = n.dot(m);
    const Vec3 nxm = n.cross(m);

    const C j1 = ia.i1 * ib.i1;
    const C j2 = *ia.i2_scalar * *ib.i2_scalar;
    const C j3 = *ia.i3_scalar * *ib.i3_scalar;
    const C two_re_j2 = j2 + std::conj(j2);

    const double c3 = a.dot(b) * nxm.squaredNorm() - a.dot(b) * nm * nm -
                      2.0 * a.dot(nxm) * b.dot(nxm) - 2.0 * a.cross(b).dot(nxm) * nm;
    const double c2 = a.dot(b) * nm + a.cross(b).dot(nxm);

    const C num = -a.dot(b) * j1 + c3 * j3 + c2 * two_re_j2;
    const C den = j1 + j3 - nm * two_re_j2;

    const double scale =
        std::abs(ia.i1 * ib.i1) + std::abs(*ia.i2_scalar * *ib.i2_scalar) +
        std::abs(*ia.i3_scalar * *ib.i3_scalar) + 1e-300;
    if (std::abs(den) <= 1e-14 * scale)
        throw DegenerateStateError("correlation ratio is 0/0 for this state and detectors");

    const std::complex<double> ratio = num / den;
    const double value = ratio.real();

    // Family errors propagate through the scalar products; coefficient bounds
    // |c1| <= 1, |c3| <= 6, |c2| <= 2, and the conjugate pair doubles j2.
    const double dj1 = std::abs(ia.i1) * ib.err_i1 + std::abs(ib.i1) * ia.err_i1;
    const double dj2 = std::abs(*ia.i2_scalar) * ib.err_i2 + std::abs(*ib.i2_scalar) * ia.err_i2;
    const double dj3 = std::abs(*ia.i3_scalar) * ib.err_i3 + std::abs(*ib.i3_scalar) * ia.err_i3;
    const double dnum = dj1 + 6.0 * dj3 + 4.0 * dj2;
    const double dden = dj1 + dj3 + 2.0 * dj2;

    CorrelationResult r;
    r.value = value;
    r.abs_error = (dnum + std::abs(value) * dden) / std::abs(den) + std::abs(ratio.imag());
    r.regime = Regime::FixedDirection;
    r.warning = ia.warning || ib.warning;
    return r;
}

inline CorrelationResult correlation_fixed_directions(const FactorizedState& st,
                                                      const DetectorRegion& det_a,
                                                      const DetectorRegion& det_b,
                                                      const Vec3& a, const Vec3& b,
                                                      const QuadratureSpec& spec)
{
    const MomentumIntegrals ia =
        fixed_direction_integrals(st.profile_a, st.dir_a, det_a, st.mass, spec);
    const MomentumIntegrals ib =
        fixed_direction_integrals(st.profile_b, st.dir_b, det_b, st.mass, spec);
    CorrelationResult r = correlation_fixed_directions(ia, ib, a, b);
    r.inputs_digest = "fixed_direction m=" + detail::fmt_num(st.mass) + " A={" +
                      describe(st.profile_a) + " along " + detail::fmt_vec(st.dir_a.vec()) +
                      " in " + describe(det_a) + "} B={" + describe(st.profile_b) + " along " +
                      detail::fmt_vec(st.dir_b.vec()) + " in " + describe(det_b) + "} a=" +
                      detail::fmt_vec(a) + " b=" + detail::fmt_vec(b);
    return r;
}

// --- CHSH ----------------------------------------------------------------------

struct ChshResult {
    double value = 0.0;
    double abs_error = 0.0;
    bool warning = false;
};

// S = C(a,b) - C(a,b') + C(a',b) + C(a',b'), errors added linearly since the
// four evaluations share deterministic inputs.
template <typename Evaluator>
ChshResult chsh(const Vec3& a, const Vec3& a_prime, const Vec3& b, const Vec3& b_prime,
                Evaluator&& correlation)
{
    const CorrelationResult cab = correlation(a, b);
    const CorrelationResult cabp = correlation(a, b_prime);
    const CorrelationResult capb = correlation(a_prime, b);
    const CorrelationResult capbp = correlation(a_prime, b_prime);

    ChshResult s;
    s.value = cab.value - cabp.value + capb.value + capbp.value;
    s.abs_error = cab.abs_error + cabp.abs_error + capb.abs_error + capbp.abs_error;
    s.warning = cab.warning || cabp.warning || capb.warning || capbp.warning;
    return s;
}

} // namespace epr
