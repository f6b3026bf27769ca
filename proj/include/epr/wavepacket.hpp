#pragma once

#include "epr/kinematics.hpp"
#include "epr/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <variant>

// Radial momentum profiles for factorized two-particle states. Profiles are
// not normalized internally; every correlation is a ratio in which the overall
// scale of f cancels.

namespace epr {

struct GaussianProfile {
    double k0;    // >= 0, center of the packet
    double sigma; // > 0, width in f(t) = exp(-(t-k0)^2 / (4 sigma^2))
};

struct RectangularProfile {
    double kmin; // >= 0
    double kmax; // > kmin
};

struct SupportBounds {
    double lo, hi;
};

class RadialProfile {
public:
    RadialProfile(const GaussianProfile& g) : shape_(g) // NOLINT(google-explicit-constructor)
    {
        if (!(g.k0 >= 0.0)) throw std::domain_error("GaussianProfile: k0 must be >= 0");
        if (!(g.sigma > 0.0)) throw std::domain_error("GaussianProfile: sigma must be positive");
    }

    RadialProfile(const RectangularProfile& r) : shape_(r) // NOLINT(google-explicit-constructor)
    {
        if (!(r.kmin >= 0.0)) throw std::domain_error("RectangularProfile: kmin must be >= 0");
        if (!(r.kmax > r.kmin))
            throw std::domain_error("RectangularProfile: requires kmax > kmin (empty support)");
    }

    bool is_gaussian() const { return std::holds_alternative<GaussianProfile>(shape_); }
    const GaussianProfile& gaussian() const { return std::get<GaussianProfile>(shape_); }
    const RectangularProfile& rectangular() const { return std::get<RectangularProfile>(shape_); }

private:
    std::variant<GaussianProfile, RectangularProfile> shape_;
};

inline double profile_eval(const RadialProfile& f, double t)
{
    if (!(t >= 0.0)) throw std::domain_error("profile_eval: radial momentum must be >= 0");
    if (f.is_gaussian()) {
        const auto& g = f.gaussian();
        const double u = (t - g.k0) / (2.0 * g.sigma);
        return std::exp(-u * u);
    }
    const auto& r = f.rectangular();
    return (t >= r.kmin && t <= r.kmax) ? 1.0 : 0.0;
}

// Interval outside of which at most mass_tail of integral f^2 dt lives.
// Gaussian: k0 +- 2 sigma erfc_inv(mass_tail), clipped at 0 (a bound on the
// wider envelope f itself, so the f^2 coverage is strictly better).
// Rectangular: exact support.
inline SupportBounds support_bounds(const RadialProfile& f, double mass_tail)
{
    if (!(mass_tail > 0.0 && mass_tail < 1.0))
        throw std::domain_error("support_bounds: mass_tail must lie in (0,1)");
    if (f.is_gaussian()) {
        const auto& g = f.gaussian();
        const double halfwidth = 2.0 * g.sigma * erfc_inv(mass_tail);
        return {std::max(0.0, g.k0 - halfwidth), g.k0 + halfwidth};
    }
    const auto& r = f.rectangular();
    return {r.kmin, r.kmax};
}

// Factorized two-particle state phi(k,p) = phi_a(k) phi_b(p) of equal-mass
// constituents. For the fixed-direction reduction the spatial momenta are
// pinned to dir_a/dir_b; the full-solid-angle drivers ignore the directions
// and read the profiles as spherically symmetric phi(k) = f(|k|).
struct FactorizedState {
    RadialProfile profile_a, profile_b;
    Direction dir_a, dir_b;
    double mass;

    FactorizedState(const RadialProfile& pa, const RadialProfile& pb, const Direction& da,
                    const Direction& db, double m)
        : profile_a(pa), profile_b(pb), dir_a(da), dir_b(db), mass(m)
    {
        if (!(m > 0.0)) throw std::domain_error("FactorizedState: mass must be positive");
    }
};

} // namespace epr
