#pragma once

#include "epr/amplitude.hpp"
#include "epr/detector.hpp"
#include "epr/kinematics.hpp"
#include "epr/quadrature.hpp"
#include "epr/wavepacket.hpp"

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

// Momentum-pair integrals of a factorized state against a detector kernel.
// For a single-particle wave function phi and region A, with e = sqrt(m^2+k^2),
//
//   i1    = II (m+k0)(m+k'0) / D  Delta_A(k'-k) phi*(k') phi(k)
//   i2^i  = II k^i (m+k'0)   / D  Delta_A(k'-k) phi*(k') phi(k)
//   i3^ij = II k^i k'^j      / D  Delta_A(k'-k) phi*(k') phi(k)
//
// over d^3k' d^3k with D = sqrt(k0(m+k0)) sqrt(k'0(m+k'0)). Swapping the
// integration labels shows i1 is real for real phi and i3 is Hermitian.
//
// When both particles propagate along fixed unit directions the angular
// deltas collapse these to 1D pair integrals of the radial profile f:
//
//   i1 = II dt du (m+e(t))(m+e(u)) Delta_A((t-u) n) f*(t) f(u)
//   i2 = II dt du  u (m+e(t))      Delta_A((t-u) n) f*(t) f(u)   (i2_vec = i2 n)
//   i3 = II dt du  t u             Delta_A((t-u) n) f*(t) f(u)   (i3_mat = i3 n n^T)

namespace epr {

using Vec3c = Eigen::Vector3cd;
using Mat3c = Eigen::Matrix3cd;

struct MomentumIntegrals {
    std::complex<double> i1{};
    Vec3c i2 = Vec3c::Zero();
    Mat3c i3 = Mat3c::Zero();

    // Scalar reductions along the propagation direction; set by the
    // fixed-direction driver, in which case i2 = i2_scalar * n and
    // i3 = i3_scalar * n n^T exactly.
    std::optional<std::complex<double>> i2_scalar, i3_scalar;

    DetectorRegion detector;
    std::optional<Direction> direction;

    // Absolute error estimates per integral family (0 for exact grid sums).
    double err_i1 = 0.0, err_i2 = 0.0, err_i3 = 0.0;
    int nodes_used = 0;   // finest 1D node count of the converged pass
    bool warning = false; // accuracy target not met within the refinement budget
    std::string note;

    explicit MomentumIntegrals(const DetectorRegion& det,
                               std::optional<Direction> dir = std::nullopt)
        : detector(det), direction(std::move(dir))
    {
    }

    // Worst family error relative to the dominant integral magnitude.
    double rel_error() const
    {
        const double scale = std::max({std::abs(i1), i2.cwiseAbs().maxCoeff(),
                                       i3.cwiseAbs().maxCoeff(), 1e-300});
        return std::max({err_i1, err_i2, err_i3}) / scale;
    }
};

// Minimum admissible 1D node count against kernel oscillation: the kernel
// restricted to the integration line carries frequencies up to
// max_{x in Omega} |x.n| = extent/2 + |c.n|, and we require two nodes per
// half-oscillation across the truncated support, plus a fixed margin.
inline int min_nodes_1d(const DetectorRegion& det, const Direction& n, double tmin, double tmax)
{
    if (det.is_all_space()) return 2; // diagonal collapse, no kernel oscillation
    const double l_max =
        det.extent_along(n.vec()) + 2.0 * std::abs(det.center().dot(n.vec()));
    return 8 + static_cast<int>(std::ceil((tmax - tmin) * l_max / std::numbers::pi));
}

// Hard ceiling on 1D nodes; the pair loops scale quadratically.
inline constexpr int max_nodes_1d = 8192;

namespace detail {

struct PairAccum {
    std::complex<double> i1{};
    Vec3c i2 = Vec3c::Zero();
    Mat3c i3 = Mat3c::Zero();

    PairAccum() = default;
    PairAccum& operator+=(const PairAccum& o)
    {
        i1 += o.i1;
        i2 += o.i2;
        i3 += o.i3;
        return *this;
    }
};

// One fixed-direction tensor pass on the given 1D rule. Index i is the
// conjugated (primed) radial momentum, so the kernel argument is t_i - t_j.
inline PairAccum fixed_direction_pass(const QuadratureRule& rule,
                                      const std::function<double(double)>& f,
                                      const Vec3& n, const DetectorRegion& det, double mass,
                                      int jobs)
{
    const std::size_t nn = rule.x.size();
    std::vector<double> fv(nn), me(nn), t(nn);
    for (std::size_t i = 0; i < nn; ++i) {
        t[i] = rule.x[i];
        fv[i] = f(t[i]) * rule.w[i];
        me[i] = mass + std::sqrt(mass * mass + t[i] * t[i]);
    }
    const Vec3c nc = n.cast<std::complex<double>>();
    const Mat3c nnc = (n * n.transpose()).cast<std::complex<double>>();

    if (det.is_all_space()) {
        // Delta collapse onto t = u. The divergent transverse normalization is
        // common to i1, i2, i3 and cancels in every correlation; values here
        // are the 1D diagonal integrals with that factor dropped.
        PairAccum a;
        double s1 = 0, s2 = 0, s3 = 0;
        for (std::size_t i = 0; i < nn; ++i) {
            const double f2 = f(t[i]) * fv[i]; // f^2 w (one factor carries w)
            s1 += f2 * me[i] * me[i];
            s2 += f2 * t[i] * me[i];
            s3 += f2 * t[i] * t[i];
        }
        a.i1 = s1;
        a.i2 = s2 * nc;
        a.i3 = s3 * nnc;
        return a;
    }

    return block_mapreduce<PairAccum>(nn, jobs, 16, [&](std::size_t, std::size_t lo, std::size_t hi) {
        PairAccum acc;
        std::complex<double> s1{}, s2{}, s3{};
        for (std::size_t i = lo; i < hi; ++i) {
            for (std::size_t j = 0; j < nn; ++j) {
                const std::complex<double> w =
                    fv[i] * fv[j] * delta_kernel(det, (t[i] - t[j]) * n);
                s1 += w * (me[i] * me[j]);
                s2 += w * (t[j] * me[i]);
                s3 += w * (t[i] * t[j]);
            }
        }
        acc.i1 = s1;
        acc.i2 = s2 * nc;
        acc.i3 = s3 * nnc;
        return acc;
    });
}

inline double accum_scale(const PairAccum& a)
{
    return std::max({std::abs(a.i1), a.i2.cwiseAbs().maxCoeff(), a.i3.cwiseAbs().maxCoeff(),
                     1e-300});
}

struct ErrorTriple {
    double e1, e2, e3;
};

inline ErrorTriple accum_diff(const PairAccum& fine, const PairAccum& coarse)
{
    return {std::abs(fine.i1 - coarse.i1), (fine.i2 - coarse.i2).cwiseAbs().maxCoeff(),
            (fine.i3 - coarse.i3).cwiseAbs().maxCoeff()};
}

inline double rel_of(const ErrorTriple& e, const PairAccum& fine)
{
    return std::max({e.e1, e.e2, e.e3}) / accum_scale(fine);
}

} // namespace detail

// Fixed-direction pair integrals of a radial weight f over [tmin, tmax].
// Gauss-Legendre tensor rule; node count is raised to the oscillation bound,
// then doubled until the step-to-step change meets target_rel_error or the
// refinement budget runs out (which flags a warning, never silently).
inline MomentumIntegrals fixed_direction_integrals(const std::function<double(double)>& f,
                                                   double tmin, double tmax, const Direction& n,
                                                   const DetectorRegion& det, double mass,
                                                   const QuadratureSpec& spec)
{
    spec.validate();
    if (!(mass > 0.0)) throw std::domain_error("fixed_direction_integrals: mass must be positive");
    if (!(tmax > tmin))
        throw std::domain_error("fixed_direction_integrals: empty truncated support");

    const int bound = min_nodes_1d(det, n, tmin, tmax);
    const int n0 = std::max(spec.nodes_1d, bound);
    if (n0 > max_nodes_1d)
        throw AccuracyError("fixed_direction_integrals: oscillation bound needs " +
                            std::to_string(n0) + " nodes, above the ceiling of " +
                            std::to_string(max_nodes_1d));

    auto pass = [&](int nodes) {
        return detail::fixed_direction_pass(gauss_legendre_on(tmin, tmax, nodes), f, n.vec(),
                                            det, mass, spec.jobs);
    };

    detail::PairAccum prev = pass(n0);
    int nodes = n0;
    detail::PairAccum fine = prev;
    detail::ErrorTriple err{};
    bool met = false;
    const int steps = 1 + spec.max_refinements;
    for (int s = 0; s < steps; ++s) {
        if (2 * nodes > max_nodes_1d) break;
        nodes *= 2;
        fine = pass(nodes);
        err = detail::accum_diff(fine, prev);
        if (detail::rel_of(err, fine) <= spec.target_rel_error) {
            met = true;
            break;
        }
        prev = fine;
    }

    MomentumIntegrals out(det, n);
    out.i1 = fine.i1;
    out.i2 = fine.i2;
    out.i3 = fine.i3;
    std::complex<double> i2s{}, i3s{};
    for (int r = 0; r < 3; ++r) {
        i2s += n.vec()[r] * fine.i2[r];
        for (int c = 0; c < 3; ++c) i3s += n.vec()[r] * fine.i3(r, c) * n.vec()[c];
    }
    out.i2_scalar = i2s;
    out.i3_scalar = i3s;
    out.err_i1 = err.e1;
    out.err_i2 = err.e2;
    out.err_i3 = err.e3;
    out.nodes_used = nodes;
    out.warning = !met;
    if (!met)
        out.note = "accuracy target " + std::to_string(spec.target_rel_error) +
                   " not reached within the refinement budget";
    return out;
}

inline MomentumIntegrals fixed_direction_integrals(const RadialProfile& f, const Direction& n,
                                                   const DetectorRegion& det, double mass,
                                                   const QuadratureSpec& spec)
{
    const SupportBounds sb = support_bounds(f, spec.truncation_tail);
    return fixed_direction_integrals([&f](double t) { return profile_eval(f, t); }, sb.lo,
                                     sb.hi, n, det, mass, spec);
}

// --- shared-grid path -------------------------------------------------------

struct MomentumGrid {
    std::vector<Vec3> nodes;
    std::vector<double> weights;
};

namespace detail {

// Discrete pair sums over explicit 3D nodes with the general (full solid
// angle) weights g1 = (m+e)/sqrt(e(m+e)) and beta = k/sqrt(e(m+e)).
inline PairAccum grid_pass(const std::vector<Vec3>& nodes, const std::vector<double>& w,
                           const std::vector<std::complex<double>>& phi,
                           const DetectorRegion& det, double mass, int jobs)
{
    const std::size_t nn = nodes.size();
    std::vector<double> g1(nn);
    std::vector<Vec3c> beta(nn);
    std::vector<std::complex<double>> wphi(nn), wphic(nn);
    for (std::size_t i = 0; i < nn; ++i) {
        const double e = std::sqrt(mass * mass + nodes[i].squaredNorm());
        const double d = std::sqrt(e * (mass + e));
        g1[i] = (mass + e) / d;
        beta[i] = (nodes[i] / d).cast<std::complex<double>>();
        wphi[i] = w[i] * phi[i];
        wphic[i] = w[i] * std::conj(phi[i]);
    }

    return block_mapreduce<PairAccum>(nn, jobs, 8, [&](std::size_t, std::size_t lo, std::size_t hi) {
        PairAccum acc;
        for (std::size_t i = lo; i < hi; ++i) { // primed (conjugated) node
            std::complex<double> s1{};
            Vec3c s2 = Vec3c::Zero();
            Mat3c s3 = Mat3c::Zero();
            for (std::size_t j = 0; j < nn; ++j) { // unprimed node
                const std::complex<double> wij =
                    wphic[i] * wphi[j] * delta_kernel(det, nodes[i] - nodes[j]);
                s1 += wij * (g1[i] * g1[j]);
                s2 += (wij * g1[i]) * beta[j];
                s3 += wij * (beta[j] * beta[i].transpose());
            }
            acc.i1 += s1;
            acc.i2 += s2;
            acc.i3 += s3;
        }
        return acc;
    });
}

} // namespace detail

// Exact discrete pair sums on a caller-supplied grid; the oracle side of the
// factorized-reduction identity. No quadrature error is attached.
inline MomentumIntegrals
integrals_on_grid(const std::function<std::complex<double>(const Vec3&)>& phi,
                  const MomentumGrid& grid, const DetectorRegion& det, double mass)
{
    if (!(mass > 0.0)) throw std::domain_error("integrals_on_grid: mass must be positive");
    if (grid.nodes.size() != grid.weights.size() || grid.nodes.empty())
        throw std::domain_error("integrals_on_grid: malformed grid");

    std::vector<std::complex<double>> pv(grid.nodes.size());
    for (std::size_t i = 0; i < pv.size(); ++i) pv[i] = phi(grid.nodes[i]);

    const detail::PairAccum acc =
        detail::grid_pass(grid.nodes, grid.weights, pv, det, mass, 0);
    MomentumIntegrals out(det);
    out.i1 = acc.i1;
    out.i2 = acc.i2;
    out.i3 = acc.i3;
    out.nodes_used = static_cast<int>(grid.nodes.size());
    return out;
}

// --- general (full solid angle) path ----------------------------------------

// Angular domain about an axis: directions with axis.k_hat >= cos_min.
struct SolidAngleCap {
    Direction axis;
    double cos_min;

    SolidAngleCap(const Direction& ax, double cmin) : axis(ax), cos_min(cmin)
    {
        if (!(cos_min >= -1.0 && cos_min < 1.0))
            throw std::domain_error("SolidAngleCap: cos_min must lie in [-1,1)");
    }

    static SolidAngleCap full() { return {Direction(Vec3(0, 0, 1)), -1.0}; }
};

namespace detail {

struct SphericalDims {
    int nr, nmu, nphi;
    long long pair_cost() const
    {
        const long long m = static_cast<long long>(nr) * nmu * nphi;
        return m * m;
    }
};

// Frequency ceiling of the kernel phase over the region: max |x|.
inline double region_freq(const DetectorRegion& det)
{
    if (det.is_box()) return det.box().center.norm() + 0.5 * det.box().sides.norm();
    if (det.is_ball()) return det.ball().center.norm() + det.ball().radius;
    return 0.0;
}

inline int osc_nodes(double phase_span)
{
    return 8 + static_cast<int>(std::ceil(2.0 * phase_span / std::numbers::pi));
}

inline SphericalDims spherical_dims(const DetectorRegion& det, double rmin, double rmax,
                                    int radial_request)
{
    const double fmax = region_freq(det);
    SphericalDims d;
    d.nr = std::max(radial_request, osc_nodes((rmax - rmin) * fmax));
    d.nmu = osc_nodes(2.0 * rmax * fmax);
    d.nphi = 2 * osc_nodes(2.0 * rmax * fmax);
    if (d.nphi % 2) ++d.nphi;
    return d;
}

// Tensor nodes of one particle's d^3k in spherical coordinates about the cap
// axis: Gauss-Legendre in r and mu = cos(theta), uniform midpoint in phi
// (spectrally accurate on the periodic circle). Weights absorb r^2.
inline void spherical_nodes(double rmin, double rmax, const SolidAngleCap& cap,
                            const SphericalDims& dims, std::vector<Vec3>& nodes,
                            std::vector<double>& weights)
{
    const QuadratureRule rr = gauss_legendre_on(rmin, rmax, dims.nr);
    const QuadratureRule rmu = gauss_legendre_on(cap.cos_min, 1.0, dims.nmu);
    const double wphi = 2.0 * std::numbers::pi / dims.nphi;

    Eigen::Matrix3d rot = Eigen::Quaterniond::FromTwoVectors(Vec3(0, 0, 1), cap.axis.vec())
                              .toRotationMatrix();

    nodes.clear();
    weights.clear();
    nodes.reserve(static_cast<std::size_t>(dims.nr) * dims.nmu * dims.nphi);
    weights.reserve(nodes.capacity());
    for (int ir = 0; ir < dims.nr; ++ir) {
        const double r = rr.x[ir];
        for (int im = 0; im < dims.nmu; ++im) {
            const double mu = rmu.x[im];
            const double s = std::sqrt(std::max(0.0, 1.0 - mu * mu));
            for (int ip = 0; ip < dims.nphi; ++ip) {
                const double ph = (ip + 0.5) * wphi;
                nodes.push_back(rot * Vec3(s * std::cos(ph), s * std::sin(ph), mu) * r);
                weights.push_back(rr.w[ir] * rmu.w[im] * wphi * r * r);
            }
        }
    }
}

inline PairAccum spherical_pass(const std::function<std::complex<double>(const Vec3&)>& phi,
                                double rmin, double rmax, const SolidAngleCap& cap,
                                const SphericalDims& dims, const DetectorRegion& det,
                                double mass, int jobs)
{
    std::vector<Vec3> nodes;
    std::vector<double> weights;
    spherical_nodes(rmin, rmax, cap, dims, nodes, weights);
    std::vector<std::complex<double>> pv(nodes.size());
    for (std::size_t i = 0; i < pv.size(); ++i) pv[i] = phi(nodes[i]);
    return grid_pass(nodes, weights, pv, det, mass, jobs);
}

// Single 3D quadrature for the all-space region, where the kernel acts as
// d^3(k'-k): i1 = I g1^2 |phi|^2, i2 = I g1 beta |phi|^2, i3 = I beta beta^T |phi|^2.
inline PairAccum allspace_pass(const std::function<std::complex<double>(const Vec3&)>& phi,
                               double rmin, double rmax, const SolidAngleCap& cap,
                               const SphericalDims& dims, double mass)
{
    std::vector<Vec3> nodes;
    std::vector<double> weights;
    spherical_nodes(rmin, rmax, cap, dims, nodes, weights);
    double s1 = 0;
    Vec3 s2 = Vec3::Zero();
    Eigen::Matrix3d s3 = Eigen::Matrix3d::Zero();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const double e = std::sqrt(mass * mass + nodes[i].squaredNorm());
        const double d = std::sqrt(e * (mass + e));
        const double g1 = (mass + e) / d;
        const Vec3 beta = nodes[i] / d;
        const double w = weights[i] * std::norm(phi(nodes[i]));
        s1 += w * g1 * g1;
        s2 += (w * g1) * beta;
        s3 += w * (beta * beta.transpose());
    }
    PairAccum acc;
    acc.i1 = s1;
    acc.i2 = s2.cast<std::complex<double>>();
    acc.i3 = s3.cast<std::complex<double>>();
    return acc;
}

struct McAccum {
    PairAccum mean;
    double var_i1 = 0.0, var_i2 = 0.0, var_i3 = 0.0;

    McAccum& operator+=(const McAccum& o)
    {
        mean += o.mean;
        var_i1 += o.var_i1;
        var_i2 += o.var_i2;
        var_i3 += o.var_i3;
        return *this;
    }
};

// Stratified Monte Carlo over the 6D (r, mu, phi)^2 cube: s strata per
// dimension, two samples per cell, per-cell variance from the paired samples.
// Cell RNG streams are derived from (seed, cell index), so the estimate is
// independent of the worker count.
inline McAccum stratified_mc(const std::function<std::complex<double>(const Vec3&)>& phi,
                             double rmin, double rmax, const SolidAngleCap& cap,
                             const DetectorRegion& det, double mass, int strata,
                             std::uint64_t seed, int jobs)
{
    const double lo[6] = {rmin, cap.cos_min, 0.0, rmin, cap.cos_min, 0.0};
    const double hi[6] = {rmax, 1.0, 2.0 * std::numbers::pi,
                          rmax, 1.0, 2.0 * std::numbers::pi};
    double cell_vol = 1.0;
    for (int d = 0; d < 6; ++d) cell_vol *= (hi[d] - lo[d]) / strata;

    const Eigen::Matrix3d rot =
        Eigen::Quaterniond::FromTwoVectors(Vec3(0, 0, 1), cap.axis.vec()).toRotationMatrix();

    auto to_vec = [&](double r, double mu, double ph) {
        const double s = std::sqrt(std::max(0.0, 1.0 - mu * mu));
        return Vec3(rot * Vec3(s * std::cos(ph), s * std::sin(ph), mu) * r);
    };

    // Full integrand of the pair integral including both r^2 jacobians;
    // component weights follow the grid-pass conventions.
    auto eval = [&](const double* u) {
        const Vec3 kp = to_vec(u[0], u[1], u[2]); // primed (conjugated)
        const Vec3 k = to_vec(u[3], u[4], u[5]);
        const double ep = std::sqrt(mass * mass + kp.squaredNorm());
        const double e = std::sqrt(mass * mass + k.squaredNorm());
        const double dp = std::sqrt(ep * (mass + ep));
        const double d = std::sqrt(e * (mass + e));
        const std::complex<double> w = std::conj(phi(kp)) * phi(k) *
                                       delta_kernel(det, kp - k) * (u[0] * u[0]) *
                                       (u[3] * u[3]);
        const Vec3c bu = (k / d).cast<std::complex<double>>();
        const Vec3c bp = (kp / dp).cast<std::complex<double>>();
        PairAccum out;
        out.i1 = w * ((mass + ep) / dp) * ((mass + e) / d);
        out.i2 = (w * (mass + ep) / dp) * bu;
        out.i3 = w * (bu * bp.transpose());
        return out;
    };

    const std::size_t ncells = [&] {
        std::size_t n = 1;
        for (int d = 0; d < 6; ++d) n *= static_cast<std::size_t>(strata);
        return n;
    }();

    return block_mapreduce<McAccum>(ncells, jobs, 1024, [&](std::size_t, std::size_t clo,
                                                            std::size_t chi) {
        McAccum acc;
        for (std::size_t c = clo; c < chi; ++c) {
            std::mt19937_64 rng(mix_seed(seed, c));
            std::uniform_real_distribution<double> uni(0.0, 1.0);
            std::size_t idx = c;
            int cell[6];
            for (int d = 0; d < 6; ++d) {
                cell[d] = static_cast<int>(idx % strata);
                idx /= strata;
            }
            PairAccum s[2];
            for (int rep = 0; rep < 2; ++rep) {
                double u[6];
                for (int d = 0; d < 6; ++d) {
                    const double width = (hi[d] - lo[d]) / strata;
                    u[d] = lo[d] + (cell[d] + uni(rng)) * width;
                }
                s[rep] = eval(u);
            }
            PairAccum m;
            m.i1 = 0.5 * cell_vol * (s[0].i1 + s[1].i1);
            m.i2 = 0.5 * cell_vol * (s[0].i2 + s[1].i2);
            m.i3 = 0.5 * cell_vol * (s[0].i3 + s[1].i3);
            acc.mean += m;
            // var of the cell mean with n=2: |f1-f2|^2/4 * V^2
            const double q = 0.25 * cell_vol * cell_vol;
            acc.var_i1 += q * std::norm(s[0].i1 - s[1].i1);
            acc.var_i2 += q * (s[0].i2 - s[1].i2).squaredNorm();
            acc.var_i3 += q * (s[0].i3 - s[1].i3).squaredNorm();
        }
        return acc;
    });
}

} // namespace detail

// Full-solid-angle pair integrals of a wave function phi over the radial
// shell [rmin, rmax] restricted to an angular cap. Deterministic spherical
// tensor quadrature while the pairwise evaluation count fits the cap in
// `spec.eval_cap`; stratified Monte Carlo with the configured seed beyond it.
inline MomentumIntegrals
general_integrals(const std::function<std::complex<double>(const Vec3&)>& phi, double rmin,
                  double rmax, const SolidAngleCap& cap, const DetectorRegion& det, double mass,
                  const QuadratureSpec& spec)
{
    spec.validate();
    if (!(mass > 0.0)) throw std::domain_error("general_integrals: mass must be positive");
    rmin = std::max(0.0, rmin);
    if (!(rmax > rmin)) throw std::domain_error("general_integrals: empty radial support");

    MomentumIntegrals out(det);

    if (det.is_all_space()) {
        detail::SphericalDims dims{std::max(spec.nodes_1d, 16), 16, 32};
        detail::PairAccum prev = detail::allspace_pass(phi, rmin, rmax, cap, dims, mass);
        detail::PairAccum fine = prev;
        detail::ErrorTriple err{};
        bool met = false;
        for (int s = 0; s < 1 + spec.max_refinements; ++s) {
            dims.nr *= 2;
            dims.nmu *= 2;
            dims.nphi *= 2;
            fine = detail::allspace_pass(phi, rmin, rmax, cap, dims, mass);
            err = detail::accum_diff(fine, prev);
            if (detail::rel_of(err, fine) <= spec.target_rel_error) {
                met = true;
                break;
            }
            prev = fine;
        }
        out.i1 = fine.i1;
        out.i2 = fine.i2;
        out.i3 = fine.i3;
        out.err_i1 = err.e1;
        out.err_i2 = err.e2;
        out.err_i3 = err.e3;
        out.nodes_used = dims.nr;
        out.warning = !met;
        if (!met) out.note = "accuracy target not reached within the refinement budget";
        return out;
    }

    detail::SphericalDims dims = detail::spherical_dims(det, rmin, rmax, spec.nodes_1d);

    if (dims.pair_cost() <= spec.eval_cap) {
        auto scaled = [](const detail::SphericalDims& d, double fac) {
            detail::SphericalDims s;
            s.nr = std::max(4, static_cast<int>(std::lround(d.nr * fac)));
            s.nmu = std::max(4, static_cast<int>(std::lround(d.nmu * fac)));
            s.nphi = std::max(4, static_cast<int>(std::lround(d.nphi * fac)));
            if (s.nphi % 2) ++s.nphi;
            return s;
        };

        detail::PairAccum fine =
            detail::spherical_pass(phi, rmin, rmax, cap, dims, det, mass, spec.jobs);
        detail::PairAccum coarse =
            detail::spherical_pass(phi, rmin, rmax, cap, scaled(dims, 2.0 / 3.0), det, mass,
                                   spec.jobs);
        detail::ErrorTriple err = detail::accum_diff(fine, coarse);
        bool met = detail::rel_of(err, fine) <= spec.target_rel_error;
        for (int s = 0; !met && s < spec.max_refinements; ++s) {
            const detail::SphericalDims next = scaled(dims, std::pow(2.0, 1.0 / 3.0));
            if (next.pair_cost() > spec.eval_cap) break;
            coarse = fine;
            dims = next;
            fine = detail::spherical_pass(phi, rmin, rmax, cap, dims, det, mass, spec.jobs);
            err = detail::accum_diff(fine, coarse);
            met = detail::rel_of(err, fine) <= spec.target_rel_error;
        }
        out.i1 = fine.i1;
        out.i2 = fine.i2;
        out.i3 = fine.i3;
        out.err_i1 = err.e1;
        out.err_i2 = err.e2;
        out.err_i3 = err.e3;
        out.nodes_used = dims.nr;
        out.warning = !met;
        if (!met) out.note = "accuracy target not reached within the evaluation cap";
        return out;
    }

    // Beyond the deterministic budget: stratified Monte Carlo.
    const int strata = std::max(
        2, static_cast<int>(std::floor(std::pow(double(spec.eval_cap) / 2.0, 1.0 / 6.0))));
    const detail::McAccum mc =
        detail::stratified_mc(phi, rmin, rmax, cap, det, mass, strata, spec.mc_seed, spec.jobs);
    out.i1 = mc.mean.i1;
    out.i2 = mc.mean.i2;
    out.i3 = mc.mean.i3;
    out.err_i1 = std::sqrt(mc.var_i1);
    out.err_i2 = std::sqrt(mc.var_i2);
    out.err_i3 = std::sqrt(mc.var_i3);
    out.nodes_used = strata;
    out.warning = out.rel_error() > spec.target_rel_error;
    out.note = "stratified Monte Carlo (" + std::to_string(strata) + "^6 cells x 2)";
    return out;
}

// Spherically symmetric phi(k) = f(|k|) over its truncated support.
inline MomentumIntegrals general_integrals(const RadialProfile& f, const DetectorRegion& det,
                                           double mass, const QuadratureSpec& spec)
{
    const SupportBounds sb = support_bounds(f, spec.truncation_tail);
    return general_integrals(
        [&f](const Vec3& k) { return std::complex<double>(profile_eval(f, k.norm())); },
        sb.lo, sb.hi, SolidAngleCap::full(), det, mass, spec);
}

// --- brute-force oracle ------------------------------------------------------

using PairWaveFunction =
    std::function<std::complex<double>(const FourMomentum&, const FourMomentum&)>;

struct PairMoments {
    std::complex<double> numerator;   // includes the spin-operator factor 1/4
    std::complex<double> denominator;
};

// Direct discretized matrix elements of the localized correlation: the
// quadruple sum over (k', k, p', p) with the matrix-route traces, no
// factorized shortcut. Cost is (|grid_a| |grid_b|)^2; keep the grids tiny.
inline PairMoments brute_force_pair_moments(const PairWaveFunction& phi,
                                            const MomentumGrid& grid_a,
                                            const MomentumGrid& grid_b, const Vec3& a,
                                            const Vec3& b, const DetectorRegion& det_a,
                                            const DetectorRegion& det_b, double mass)
{
    require_unit(a, "brute_force_pair_moments(a)");
    require_unit(b, "brute_force_pair_moments(b)");
    if (!(mass > 0.0))
        throw std::domain_error("brute_force_pair_moments: mass must be positive");

    const std::size_t na = grid_a.nodes.size(), nb = grid_b.nodes.size();
    if (na == 0 || nb == 0 || na != grid_a.weights.size() || nb != grid_b.weights.size())
        throw std::domain_error("brute_force_pair_moments: malformed grid");

    std::vector<FourMomentum> ka(na), kb(nb);
    for (std::size_t i = 0; i < na; ++i) ka[i] = on_shell(mass, grid_a.nodes[i]);
    for (std::size_t i = 0; i < nb; ++i) kb[i] = on_shell(mass, grid_b.nodes[i]);

    // Per-pair amplitude tables; X = (a.sigma) M, Y = (b.sigma^T) M^dagger.
    const Mat2 sa = pauli_dot(a), sbT = pauli_dot(b).transpose();
    std::vector<Mat2> m(na * nb), x(na * nb), y(na * nb);
    std::vector<std::complex<double>> pv(na * nb);
    for (std::size_t i = 0; i < na; ++i)
        for (std::size_t r = 0; r < nb; ++r) {
            const Mat2 amp = amplitude_matrix(ka[i], kb[r], mass).mat;
            m[i * nb + r] = amp;
            x[i * nb + r] = sa * amp;
            y[i * nb + r] = sbT * amp.adjoint();
            pv[i * nb + r] = phi(ka[i], kb[r]);
        }

    // Pair kernels with the 1/sqrt(2k0 2k'0) measure factors.
    std::vector<std::complex<double>> ta(na * na), tb(nb * nb);
    for (std::size_t i = 0; i < na; ++i)
        for (std::size_t j = 0; j < na; ++j)
            ta[i * na + j] = grid_a.weights[i] * grid_a.weights[j] *
                             delta_kernel(det_a, grid_a.nodes[i] - grid_a.nodes[j]) /
                             std::sqrt(4.0 * ka[i].e * ka[j].e);
    for (std::size_t r = 0; r < nb; ++r)
        for (std::size_t s = 0; s < nb; ++s)
            tb[r * nb + s] = grid_b.weights[r] * grid_b.weights[s] *
                             delta_kernel(det_b, grid_b.nodes[r] - grid_b.nodes[s]) /
                             std::sqrt(4.0 * kb[r].e * kb[s].e);

    std::complex<double> num{}, den{};
    for (std::size_t i = 0; i < na; ++i)         // k' (conjugated)
        for (std::size_t j = 0; j < na; ++j)     // k
            for (std::size_t r = 0; r < nb; ++r) // p' (conjugated)
                for (std::size_t s = 0; s < nb; ++s) { // p
                    const std::complex<double> common =
                        ta[i * na + j] * tb[r * nb + s] * std::conj(pv[i * nb + r]) *
                        pv[j * nb + s];
                    const Mat2& xm = x[j * nb + s];
                    const Mat2& ym = y[i * nb + r];
                    const std::complex<double> tr_ab =
                        xm(0, 0) * ym(0, 0) + xm(0, 1) * ym(1, 0) + xm(1, 0) * ym(0, 1) +
                        xm(1, 1) * ym(1, 1);
                    const Mat2& mm = m[j * nb + s];
                    const Mat2& mp = m[i * nb + r];
                    const std::complex<double> tr_pl =
                        mm(0, 0) * std::conj(mp(0, 0)) + mm(0, 1) * std::conj(mp(0, 1)) +
                        mm(1, 0) * std::conj(mp(1, 0)) + mm(1, 1) * std::conj(mp(1, 1));
                    num += 0.25 * common * tr_ab;
                    den += common * tr_pl;
                }
    return {num, den};
}

} // namespace epr
