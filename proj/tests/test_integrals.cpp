#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <epr/correlator.hpp>
#include <epr/integrals.hpp>

#include <cmath>
#include <complex>
#include <random>

using namespace epr;
using C = std::complex<double>;

namespace {

std::mt19937_64 rng(2024);

double uniform(double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Cartesian tensor grid with shared per-axis nodes, as the reduction
// identity requires (primed and unprimed points drawn from one set).
MomentumGrid tensor_grid(int n, double lo, double hi)
{
    const QuadratureRule r = gauss_legendre_on(lo, hi, n);
    MomentumGrid g;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                g.nodes.emplace_back(r.x[i], r.x[j], r.x[k]);
                g.weights.push_back(r.w[i] * r.w[j] * r.w[k]);
            }
    return g;
}

} // namespace

TEST_CASE("grid integrals: i1 real and i3 Hermitian for any state")
{
    const DetectorRegion det = Box{Vec3(0.2, -0.1, 0.3), Vec3(1.5, 1.0, 2.0)};
    const MomentumGrid g = tensor_grid(3, -0.8, 1.1);
    auto phi = [](const Vec3& k) {
        return C(std::cos(1.7 * k.x() + 0.3 * k.z()), std::sin(0.9 * k.y() - k.x()));
    };
    const MomentumIntegrals mi = integrals_on_grid(phi, g, det, 0.8);

    const double scale = std::abs(mi.i1);
    CHECK(std::abs(mi.i1.imag()) < 1e-14 * scale);
    CHECK((mi.i3 - mi.i3.adjoint()).cwiseAbs().maxCoeff() < 1e-14 * scale);
    CHECK(mi.err_i1 == 0.0);
    CHECK(mi.nodes_used == 27);
}

TEST_CASE("fixed-direction integrals against an independent 2D sum")
{
    // plain Riemann reference over the same support
    const double m = 1.0, tmin = 0.6, tmax = 1.4;
    const Direction n(Vec3(0, 0, 1));
    const DetectorRegion det = Box{Vec3(0, 0, 0.4), Vec3(2, 2, 3)};
    auto f = [](double t) { return std::exp(-8.0 * (t - 1.0) * (t - 1.0)); };

    const int nr = 2000;
    const double h = (tmax - tmin) / nr;
    C r1{}, r2{}, r3{};
    for (int i = 0; i < nr; ++i)
        for (int j = 0; j < nr; ++j) {
            const double t = tmin + (i + 0.5) * h, u = tmin + (j + 0.5) * h;
            const C w = h * h * f(t) * f(u) * delta_kernel(det, (t - u) * n.vec());
            const double et = std::sqrt(m * m + t * t), eu = std::sqrt(m * m + u * u);
            r1 += w * (m + et) * (m + eu);
            r2 += w * u * (m + et);
            r3 += w * t * u;
        }

    QuadratureSpec spec;
    spec.nodes_1d = 48;
    const MomentumIntegrals mi = fixed_direction_integrals(f, tmin, tmax, n, det, m, spec);
    REQUIRE(mi.i2_scalar.has_value());
    REQUIRE(mi.i3_scalar.has_value());
    CHECK(std::abs(mi.i1 - r1) < 1e-6 * std::abs(r1));
    CHECK(std::abs(*mi.i2_scalar - r2) < 1e-6 * std::abs(r1));
    CHECK(std::abs(*mi.i3_scalar - r3) < 1e-6 * std::abs(r1));
    CHECK_FALSE(mi.warning);

    // vector and matrix forms are the scalar reductions times n and n n^T
    CHECK((mi.i2 - *mi.i2_scalar * n.vec().cast<C>()).norm() < 1e-15 * std::abs(r1));
    const Mat3c nn = (n.vec() * n.vec().transpose()).cast<C>();
    CHECK((mi.i3 - *mi.i3_scalar * nn).cwiseAbs().maxCoeff() < 1e-15 * std::abs(r1));

    // the off-center region makes the pair kernel genuinely complex
    CHECK(std::abs(mi.i2_scalar->imag()) > 1e-12 * std::abs(r1));
}

TEST_CASE("fixed-direction integrals: centered region gives real i2")
{
    QuadratureSpec spec;
    const Direction n(Vec3(0, 1, 0));
    const DetectorRegion det = Box{Vec3::Zero(), Vec3(2, 2, 2)};
    const MomentumIntegrals mi =
        fixed_direction_integrals(RadialProfile(GaussianProfile{1.0, 0.15}), n, det, 1.0, spec);
    const double scale = std::abs(mi.i1);
    CHECK(std::abs(mi.i1.imag()) < 1e-14 * scale);
    CHECK(std::abs(mi.i2_scalar->imag()) < 1e-14 * scale);
    CHECK(std::abs(mi.i3_scalar->imag()) < 1e-14 * scale);
}

TEST_CASE("fixed-direction all-space collapse matches the 1D diagonal integral")
{
    const double m = 0.9;
    const Direction n(Vec3(1, 2, 2).normalized());
    QuadratureSpec spec;
    spec.nodes_1d = 64;
    const RadialProfile prof = GaussianProfile{1.2, 0.2};
    const MomentumIntegrals mi =
        fixed_direction_integrals(prof, n, DetectorRegion(AllSpace{}), m, spec);

    // reference with the same node count (values are exact for the rule)
    const SupportBounds sb = support_bounds(prof, spec.truncation_tail);
    const QuadratureRule r = gauss_legendre_on(sb.lo, sb.hi, mi.nodes_used);
    double s1 = 0, s2 = 0, s3 = 0;
    for (std::size_t i = 0; i < r.x.size(); ++i) {
        const double t = r.x[i], f = profile_eval(prof, t);
        const double me = m + std::sqrt(m * m + t * t);
        s1 += r.w[i] * f * f * me * me;
        s2 += r.w[i] * f * f * t * me;
        s3 += r.w[i] * f * f * t * t;
    }
    CHECK(mi.i1.real() == doctest::Approx(s1).epsilon(1e-13));
    CHECK(mi.i2_scalar->real() == doctest::Approx(s2).epsilon(1e-13));
    CHECK(mi.i3_scalar->real() == doctest::Approx(s3).epsilon(1e-13));
}

TEST_CASE("refinement honors its budget and flags unmet targets")
{
    const Direction n(Vec3(0, 0, 1));
    const DetectorRegion det = Box{Vec3::Zero(), Vec3(4, 4, 4)};
    auto f = [](double t) { return std::exp(-2.0 * (t - 1.0) * (t - 1.0)); };

    QuadratureSpec tight;
    tight.nodes_1d = 16;
    tight.target_rel_error = 1e-13;
    tight.max_refinements = 0; // only the mandatory error-estimate doubling
    const MomentumIntegrals budget = fixed_direction_integrals(f, 0.2, 1.8, n, det, 1.0, tight);
    CHECK(budget.nodes_used == 32);

    QuadratureSpec loose = tight;
    loose.target_rel_error = 1e-3;
    const MomentumIntegrals ok = fixed_direction_integrals(f, 0.2, 1.8, n, det, 1.0, loose);
    CHECK_FALSE(ok.warning);

    QuadratureSpec hopeless = tight;
    hopeless.target_rel_error = 1e-16;
    hopeless.max_refinements = 1;
    const MomentumIntegrals bad = fixed_direction_integrals(f, 0.2, 1.8, n, det, 1.0, hopeless);
    CHECK(bad.warning);
    CHECK_FALSE(bad.note.empty());
}

TEST_CASE("oscillation bound raises the node count and caps out")
{
    const Direction n(Vec3(0, 0, 1));
    const DetectorRegion small = Box{Vec3::Zero(), Vec3(1, 1, 1)};
    const DetectorRegion large = Box{Vec3::Zero(), Vec3(1, 1, 400)};
    CHECK(min_nodes_1d(small, n, 0.0, 2.0) < min_nodes_1d(large, n, 0.0, 2.0));
    // off-center phase adds frequency
    const DetectorRegion moved = Box{Vec3(0, 0, 200), Vec3(1, 1, 1)};
    CHECK(min_nodes_1d(moved, n, 0.0, 2.0) > min_nodes_1d(small, n, 0.0, 2.0));

    auto f = [](double t) { return std::exp(-t * t); };
    QuadratureSpec spec;
    const DetectorRegion huge = Box{Vec3::Zero(), Vec3(1, 1, 1e5)};
    CHECK_THROWS_AS(fixed_direction_integrals(f, 0.0, 2.0, n, huge, 1.0, spec), AccuracyError);

    const DetectorRegion mid = Box{Vec3::Zero(), Vec3(1, 1, 100)};
    QuadratureSpec fast = spec;
    fast.target_rel_error = 1e-6;
    const MomentumIntegrals raised = fixed_direction_integrals(f, 0.0, 2.0, n, mid, 1.0, fast);
    CHECK(raised.nodes_used >= min_nodes_1d(mid, n, 0.0, 2.0));
}

TEST_CASE("general integrals: all-space spherical state")
{
    const double m = 1.1;
    QuadratureSpec spec;
    spec.nodes_1d = 48;
    const RadialProfile prof = GaussianProfile{1.0, 0.2};
    const MomentumIntegrals mi =
        general_integrals(prof, DetectorRegion(AllSpace{}), m, spec);

    // i1 = 4 pi int r^2 (m+e)/e f^2 dr, i2 = 0, i3 isotropic with
    // tr i3 = 4 pi int r^4 /(e(m+e)) f^2 dr
    const SupportBounds sb = support_bounds(prof, spec.truncation_tail);
    const QuadratureRule r = gauss_legendre_on(sb.lo, sb.hi, 400);
    double ref1 = 0, ref3 = 0;
    for (std::size_t i = 0; i < r.x.size(); ++i) {
        const double t = r.x[i], f = profile_eval(prof, t);
        const double e = std::sqrt(m * m + t * t);
        ref1 += r.w[i] * 4.0 * std::numbers::pi * t * t * (m + e) / e * f * f;
        ref3 += r.w[i] * 4.0 * std::numbers::pi * t * t * t * t / (e * (m + e)) * f * f;
    }
    CHECK(mi.i1.real() == doctest::Approx(ref1).epsilon(1e-9));
    CHECK(mi.i2.norm() < 1e-12 * ref1);
    CHECK(mi.i3.trace().real() == doctest::Approx(ref3).epsilon(1e-9));
    CHECK((mi.i3 - mi.i3.trace() / 3.0 * Mat3c::Identity()).cwiseAbs().maxCoeff() <
          1e-12 * ref1);
    CHECK_FALSE(mi.warning);
}

TEST_CASE("general integrals: deterministic tensor path under the cap")
{
    const double m = 1.0;
    QuadratureSpec spec;
    spec.nodes_1d = 10;
    spec.eval_cap = 100'000'000;
    spec.target_rel_error = 1e-5;
    spec.max_refinements = 1;
    const RadialProfile prof = GaussianProfile{1.0, 0.25};
    const DetectorRegion det = Ball{Vec3(0.3, 0, 0), 1.0};

    const MomentumIntegrals a = general_integrals(prof, det, m, spec);
    const MomentumIntegrals b = general_integrals(prof, det, m, spec);
    CHECK(a.i1 == b.i1); // bitwise deterministic
    CHECK((a.i2 - b.i2).norm() == 0.0);
    CHECK((a.i3 - b.i3).norm() == 0.0);
    CHECK(a.note.find("Monte Carlo") == std::string::npos);

    const double scale = std::abs(a.i1);
    CHECK(std::abs(a.i1.imag()) < 1e-12 * scale);
    CHECK((a.i3 - a.i3.adjoint()).cwiseAbs().maxCoeff() < 1e-12 * scale);
}

TEST_CASE("general integrals: Monte Carlo fallback beyond the cap")
{
    const double m = 1.0;
    const RadialProfile prof = GaussianProfile{1.0, 0.25};
    const DetectorRegion det = Ball{Vec3(0.3, 0, 0), 1.0};

    QuadratureSpec tensor;
    tensor.nodes_1d = 10;
    tensor.eval_cap = 100'000'000;
    tensor.target_rel_error = 1e-5;
    tensor.max_refinements = 1;
    const MomentumIntegrals ref = general_integrals(prof, det, m, tensor);

    QuadratureSpec mc;
    mc.eval_cap = 600'000; // forces the stochastic path
    mc.mc_seed = 11;
    const MomentumIntegrals est = general_integrals(prof, det, m, mc);
    CHECK(est.note.find("Monte Carlo") != std::string::npos);

    const MomentumIntegrals est2 = general_integrals(prof, det, m, mc);
    CHECK(est.i1 == est2.i1); // same seed, same estimate

    QuadratureSpec mc2 = mc;
    mc2.mc_seed = 12;
    const MomentumIntegrals other = general_integrals(prof, det, m, mc2);
    CHECK(est.i1 != other.i1);

    // statistical agreement with the deterministic value
    CHECK(std::abs(est.i1 - ref.i1) < 10.0 * (est.err_i1 + ref.err_i1 + 1e-12));
    CHECK((est.i2 - ref.i2).norm() < 10.0 * (est.err_i2 + ref.err_i2 + 1e-12));
    CHECK((est.i3 - ref.i3).norm() < 10.0 * (est.err_i3 + ref.err_i3 + 1e-12));
}

TEST_CASE("factorized reduction matches the brute-force pair sum")
{
    for (int trial = 0; trial < 5; ++trial) {
        const double m = uniform(0.5, 1.5);
        const int n = 2;
        MomentumGrid ga = tensor_grid(n, -1.0 + 0.2 * uniform(-1, 1), 1.0 + 0.2 * uniform(-1, 1));
        MomentumGrid gb = tensor_grid(n, -1.1 + 0.2 * uniform(-1, 1), 0.9 + 0.2 * uniform(-1, 1));

        std::vector<C> fa(ga.nodes.size()), fb(gb.nodes.size());
        for (auto& z : fa) z = {uniform(-1, 1), uniform(-1, 1)};
        for (auto& z : fb) z = {uniform(-1, 1), uniform(-1, 1)};
        auto lookup = [](const MomentumGrid& g, const std::vector<C>& f, const Vec3& k) {
            for (std::size_t i = 0; i < g.nodes.size(); ++i)
                if ((g.nodes[i] - k).norm() < 1e-12) return f[i];
            return C{};
        };
        auto phiA = [&](const Vec3& k) { return lookup(ga, fa, k); };
        auto phiB = [&](const Vec3& k) { return lookup(gb, fb, k); };

        const DetectorRegion da = Box{Vec3(0.1 * uniform(-1, 1), 0, 0), Vec3(1.0, 2.0, 1.5)};
        const DetectorRegion db = Ball{Vec3(0, 0.1 * uniform(-1, 1), 0), 1.2};

        const Vec3 a = Vec3(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1)).normalized();
        const Vec3 b = Vec3(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1)).normalized();

        const MomentumIntegrals ia = integrals_on_grid(phiA, ga, da, m);
        const MomentumIntegrals ib = integrals_on_grid(phiB, gb, db, m);
        const CorrelationResult assembled = correlation_general(ia, ib, a, b);

        auto pairphi = [&](const FourMomentum& k, const FourMomentum& p) {
            return phiA(k.p) * phiB(p.p);
        };
        const PairMoments pm =
            brute_force_pair_moments(pairphi, ga, gb, a, b, da, db, m);
        const double direct = 4.0 * (pm.numerator / pm.denominator).real();

        CHECK(std::abs(assembled.value - direct) < 1e-12 * std::max(1.0, std::abs(direct)));
    }
}

TEST_CASE("input validation")
{
    QuadratureSpec spec;
    auto f = [](double) { return 1.0; };
    const Direction n(Vec3(0, 0, 1));
    const DetectorRegion det = Box{Vec3::Zero(), Vec3(1, 1, 1)};

    CHECK_THROWS_AS(fixed_direction_integrals(f, 1.0, 1.0, n, det, 1.0, spec),
                    std::domain_error);
    CHECK_THROWS_AS(fixed_direction_integrals(f, 0.0, 1.0, n, det, 0.0, spec),
                    std::domain_error);

    MomentumGrid bad;
    bad.nodes.emplace_back(0, 0, 0);
    CHECK_THROWS_AS(integrals_on_grid([](const Vec3&) { return C{1.0}; }, bad, det, 1.0),
                    std::domain_error);

    CHECK_THROWS_AS(general_integrals([](const Vec3&) { return C{1.0}; }, 1.0, 1.0,
                                      SolidAngleCap::full(), det, 1.0, spec),
                    std::domain_error);
    CHECK_THROWS_AS(SolidAngleCap(Direction(Vec3(0, 0, 1)), 1.0), std::domain_error);

    MomentumGrid g = tensor_grid(2, -1.0, 1.0);
    CHECK_THROWS_AS(brute_force_pair_moments(
                        [](const FourMomentum&, const FourMomentum&) { return C{1.0}; }, g, g,
                        Vec3(0, 0, 2), Vec3(1, 0, 0), det, det, 1.0),
                    std::domain_error);
}

TEST_CASE("growing boxes drive the kernel to its delta collapse")
{
    // Centered cubes of growing side: the sinc kernel sharpens and the
    // integral ratios approach the all-space (exact delta) values at O(1/L),
    // limited by the profile edge at t = 0.
    const double m = 1.0;
    const RadialProfile f(GaussianProfile{0.0, 0.25});
    const Direction n(Vec3(0, 0, 1));
    QuadratureSpec spec;
    spec.nodes_1d = 32;
    spec.target_rel_error = 1e-9;

    const SupportBounds sb = support_bounds(f, spec.truncation_tail);
    const QuadratureRule g = gauss_legendre_on(sb.lo, sb.hi, 400);
    double num = 0, den = 0;
    for (int i = 0; i < 400; ++i) {
        const double t = g.x[i], ft = profile_eval(f, t);
        const double e = std::sqrt(m * m + t * t);
        num += g.w[i] * ft * ft * t * t;
        den += g.w[i] * ft * ft * (m + e) * (m + e);
    }
    const double ref = num / den; // <t^2> / <(m+e)^2> over f^2

    double prev_dev = 1.0;
    for (double L : {20.0, 40.0, 80.0, 160.0, 1000.0}) {
        const DetectorRegion det(Box{Vec3::Zero(), Vec3(L, L, L)});
        const MomentumIntegrals mi = fixed_direction_integrals(f, n, det, m, spec);
        const double dev =
            std::abs((mi.i3_scalar.value() / mi.i1).real() - ref) / ref;
        CHECK(dev < 0.62 * prev_dev);
        prev_dev = dev;
    }
    CHECK(prev_dev < 2.5e-3); // L*m = 10^3

    const MomentumIntegrals ma =
        fixed_direction_integrals(f, n, DetectorRegion(AllSpace{}), m, spec);
    CHECK(std::abs((ma.i3_scalar.value() / ma.i1).real() - ref) < 1e-10 * ref);
}

TEST_CASE("narrow packet in a small box gives positive integrals")
{
    const RadialProfile f(GaussianProfile{1.0, 0.01});
    const DetectorRegion det(Box{Vec3::Zero(), Vec3(5, 5, 5)});
    QuadratureSpec spec;
    const MomentumIntegrals mi =
        fixed_direction_integrals(f, Direction(Vec3(0, 0, 1)), det, 1.0, spec);
    CHECK(mi.i1.real() > 0.0);
    CHECK(mi.i2_scalar.value().real() > 0.0);
    CHECK(mi.i3_scalar.value().real() > 0.0);
    CHECK(std::abs(mi.i1.imag()) < 1e-12 * mi.i1.real());
    CHECK(std::abs(mi.i2_scalar.value().imag()) < 1e-12 * mi.i2_scalar.value().real());
    CHECK(std::abs(mi.i3_scalar.value().imag()) < 1e-12 * mi.i3_scalar.value().real());
}

TEST_CASE("single-point grids reproduce the sharp-momentum ratio")
{
    // With one node per side every kernel factor cancels in the ratio, which
    // must equal the plane-wave trace ratio at those momenta.
    const double m = 0.9;
    MomentumGrid ga, gb;
    ga.nodes.emplace_back(0.4, -0.1, 0.6);
    ga.weights.push_back(1.0);
    gb.nodes.emplace_back(-0.3, 0.5, 0.2);
    gb.weights.push_back(1.0);
    const DetectorRegion da(Box{Vec3(0.2, 0, 0), Vec3(1.0, 2.0, 1.5)});
    const DetectorRegion db(Ball{Vec3(0, -0.1, 0.3), 0.8});

    for (int trial = 0; trial < 4; ++trial) {
        const Vec3 a = Vec3(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1)).normalized();
        const Vec3 b = Vec3(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1)).normalized();
        const PairMoments pm = brute_force_pair_moments(
            [](const FourMomentum&, const FourMomentum&) { return C{1.0}; }, ga, gb, a,
            b, da, db, m);
        const double brute = 4.0 * (pm.numerator / pm.denominator).real();
        const double sharp = correlation_sharp_trace_ratio(
            on_shell(m, ga.nodes[0]), on_shell(m, gb.nodes[0]), a, b, m);
        CHECK(std::abs(brute - sharp) < 1e-12 * std::max(1.0, std::abs(sharp)));
    }

    // all momenta at rest with a = b: the singlet gives exactly -1
    MomentumGrid rest;
    rest.nodes.emplace_back(0.0, 0.0, 0.0);
    rest.weights.push_back(1.0);
    const Vec3 z(0, 0, 1);
    const PairMoments pm = brute_force_pair_moments(
        [](const FourMomentum&, const FourMomentum&) { return C{1.0}; }, rest, rest, z,
        z, da, db, 1.0);
    CHECK(4.0 * (pm.numerator / pm.denominator).real() ==
          doctest::Approx(-1.0).epsilon(1e-14));
}
