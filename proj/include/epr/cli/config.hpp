#pragma once

#include <epr/epr.hpp>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

// JSON run configuration for the command-line front end. Parsing is strict:
// anything malformed or physically inconsistent raises ConfigError, which the
// driver maps to exit code 3.

namespace epr::cli {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One sweep dimension: rotate `target` about `axis` by theta over
// [start, stop] in `steps` evenly spaced points (inclusive ends).
struct SweepAxis {
    std::string target; // "a" | "b" | "dir_a" | "dir_b"
    Vec3 axis = Vec3(0, 0, 1);
    double start = 0.0, stop = 0.0;
    int steps = 1;
};

struct OutputSpec {
    std::string format = "json"; // "json" | "csv"
    std::string path;            // empty: stdout
};

struct ChshAngles {
    Vec3 a, a_prime, b, b_prime;
};

struct RunConfig {
    double mass = 1.0;
    Regime regime = Regime::SharpMomentum;

    // sharp regime
    Vec3 momentum_a = Vec3::Zero(), momentum_b = Vec3::Zero();

    // wave-packet regimes
    std::optional<RadialProfile> profile_a, profile_b;
    std::optional<Vec3> direction_a, direction_b; // unit, fixed_direction only
    std::optional<DetectorRegion> detector_a, detector_b;

    Vec3 meas_a = Vec3(0, 0, 1), meas_b = Vec3(0, 0, 1);
    std::vector<SweepAxis> sweep;
    std::optional<ChshAngles> chsh_angles;

    QuadratureSpec quadrature;
    OutputSpec output;
    std::uint64_t seed = 1;
};

// Parses and cross-validates a JSON document (text, not a path).
RunConfig parse_config(const std::string& json_text);

RunConfig load_config_file(const std::string& path);

// Human-readable summary of the run: regime, state, detectors, and the
// effective 1D node floors the oscillation bound would impose.
std::string validate_report(const RunConfig& cfg);

} // namespace epr::cli
