#include <epr/cli/runner.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Geometry>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace epr::cli {

namespace {

using nlohmann::ordered_json;

// One evaluated sweep point. theta values are NaN when the dimension does
// not exist; optional members are absent when the regime has no such input.
struct Point {
    long index = 0;
    double theta0 = std::numeric_limits<double>::quiet_NaN();
    double theta1 = std::numeric_limits<double>::quiet_NaN();
    Vec3 a, b;
    std::optional<Vec3> qa, qb;        // sharp momenta
    std::optional<Vec3> dir_a, dir_b;  // packet axes
    CorrelationResult result{};
};

Vec3 rotate_about(const Vec3& v, const Vec3& axis, double theta) {
    return Eigen::AngleAxisd(theta, axis).toRotationMatrix() * v;
}

double sweep_theta(const SweepAxis& ax, int step) {
    if (ax.steps <= 1) return ax.start;
    return ax.start + step * (ax.stop - ax.start) / double(ax.steps - 1);
}

// Applies one sweep rotation to the point's inputs. Unit-vector targets are
// re-normalized to cancel rotation round-off.
void apply_rotation(Point& pt, const SweepAxis& ax, double theta) {
    auto spin_unit = [&](Vec3& v) {
        v = rotate_about(v, ax.axis, theta).normalized();
    };
    if (ax.target == "a") {
        spin_unit(pt.a);
    } else if (ax.target == "b") {
        spin_unit(pt.b);
    } else if (ax.target == "dir_a") {
        if (pt.qa)
            *pt.qa = rotate_about(*pt.qa, ax.axis, theta);
        if (pt.dir_a)
            spin_unit(*pt.dir_a);
    } else if (ax.target == "dir_b") {
        if (pt.qb)
            *pt.qb = rotate_about(*pt.qb, ax.axis, theta);
        if (pt.dir_b)
            spin_unit(*pt.dir_b);
    }
}

Point base_point(const RunConfig& cfg) {
    Point pt;
    pt.a = cfg.meas_a;
    pt.b = cfg.meas_b;
    if (cfg.regime == Regime::SharpMomentum) {
        pt.qa = cfg.momentum_a;
        pt.qb = cfg.momentum_b;
    } else if (cfg.regime == Regime::FixedDirection) {
        pt.dir_a = *cfg.direction_a;
        pt.dir_b = *cfg.direction_b;
    }
    return pt;
}

CorrelationResult evaluate(const RunConfig& cfg, const Point& pt,
                           const QuadratureSpec& spec) {
    switch (cfg.regime) {
    case Regime::SharpMomentum:
        return correlation_sharp(cfg.mass, *pt.qa, *pt.qb, pt.a, pt.b);
    case Regime::FixedDirection: {
        FactorizedState st(*cfg.profile_a, *cfg.profile_b,
                           Direction(*pt.dir_a), Direction(*pt.dir_b),
                           cfg.mass);
        return correlation_fixed_directions(st, *cfg.detector_a,
                                            *cfg.detector_b, pt.a, pt.b,
                                            spec);
    }
    case Regime::General: {
        // Packet axes do not enter the general route; placeholders satisfy
        // the state type.
        FactorizedState st(*cfg.profile_a, *cfg.profile_b,
                           Direction(Vec3(0, 0, 1)),
                           Direction(Vec3(0, 0, 1)), cfg.mass);
        return correlation_general(st, *cfg.detector_a, *cfg.detector_b,
                                   pt.a, pt.b, spec);
    }
    }
    throw std::logic_error("evaluate: unreachable regime");
}

// Expands the sweep grid (or the single correlate point) and evaluates each
// point with its own derived Monte Carlo seed.
std::vector<Point> run_points(const RunConfig& cfg, int jobs_override) {
    std::vector<SweepAxis> axes = cfg.sweep;
    const int n0 = axes.empty() ? 1 : axes[0].steps;
    const int n1 = axes.size() > 1 ? axes[1].steps : 1;

    std::vector<Point> points;
    points.reserve(static_cast<std::size_t>(n0) * n1);
    for (int i0 = 0; i0 < n0; ++i0) {
        for (int i1 = 0; i1 < n1; ++i1) {
            Point pt = base_point(cfg);
            pt.index = static_cast<long>(i0) * n1 + i1;
            if (!axes.empty()) {
                pt.theta0 = sweep_theta(axes[0], i0);
                apply_rotation(pt, axes[0], pt.theta0);
            }
            if (axes.size() > 1) {
                pt.theta1 = sweep_theta(axes[1], i1);
                apply_rotation(pt, axes[1], pt.theta1);
            }
            QuadratureSpec spec = cfg.quadrature;
            spec.mc_seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(pt.index));
            if (jobs_override >= 0) spec.jobs = jobs_override;
            pt.result = evaluate(cfg, pt, spec);
            points.push_back(std::move(pt));
        }
    }
    return points;
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void csv_vec(std::ostream& out, const std::optional<Vec3>& v) {
    if (v)
        out << ',' << fmt17(v->x()) << ',' << fmt17(v->y()) << ','
            << fmt17(v->z());
    else
        out << ",,,";
}

// Superset header: regimes leave inapplicable cells empty so downstream
// parsers see one stable schema.
void write_csv(std::ostream& out, const std::vector<Point>& points) {
    out << "index,theta_0,theta_1,"
           "a_x,a_y,a_z,b_x,b_y,b_z,"
           "qa_x,qa_y,qa_z,qb_x,qb_y,qb_z,"
           "dira_x,dira_y,dira_z,dirb_x,dirb_y,dirb_z,"
           "value,abs_error,regime,warning\n";
    for (const Point& pt : points) {
        out << pt.index;
        out << ',' << (std::isnan(pt.theta0) ? std::string() : fmt17(pt.theta0));
        out << ',' << (std::isnan(pt.theta1) ? std::string() : fmt17(pt.theta1));
        csv_vec(out, pt.a);
        csv_vec(out, pt.b);
        csv_vec(out, pt.qa);
        csv_vec(out, pt.qb);
        csv_vec(out, pt.dir_a);
        csv_vec(out, pt.dir_b);
        out << ',' << fmt17(pt.result.value) << ',' << fmt17(pt.result.abs_error)
            << ',' << regime_name(pt.result.regime) << ','
            << (pt.result.warning ? 1 : 0) << '\n';
    }
}

ordered_json vec_json(const Vec3& v) {
    return ordered_json::array({v.x(), v.y(), v.z()});
}

ordered_json point_json(const Point& pt) {
    ordered_json j;
    j["index"] = pt.index;
    if (!std::isnan(pt.theta0)) j["theta_0"] = pt.theta0;
    if (!std::isnan(pt.theta1)) j["theta_1"] = pt.theta1;
    j["a"] = vec_json(pt.a);
    j["b"] = vec_json(pt.b);
    if (pt.qa) j["qa"] = vec_json(*pt.qa);
    if (pt.qb) j["qb"] = vec_json(*pt.qb);
    if (pt.dir_a) j["dir_a"] = vec_json(*pt.dir_a);
    if (pt.dir_b) j["dir_b"] = vec_json(*pt.dir_b);
    j["value"] = pt.result.value;
    j["abs_error"] = pt.result.abs_error;
    j["regime"] = regime_name(pt.result.regime);
    j["warning"] = pt.result.warning;
    if (!pt.result.inputs_digest.empty()) j["inputs"] = pt.result.inputs_digest;
    return j;
}

int write_output(const OutputSpec& out, const std::string& text) {
    if (out.path.empty()) {
        std::cout << text;
        return 0;
    }
    std::ofstream f(out.path, std::ios::binary);
    if (!f) {
        std::cerr << "error: cannot write " << out.path << "\n";
        return 1;
    }
    f << text;
    return 0;
}

struct CommonOpts {
    std::string config_path;
    int jobs = -1;
    std::optional<std::uint64_t> seed;
    std::string output_path;
    std::string format;
    bool timings = false;
};

void attach_common(CLI::App* sub, CommonOpts& o) {
    sub->add_option("-c,--config", o.config_path, "JSON run configuration")
        ->required();
    sub->add_option("-j,--jobs", o.jobs, "worker threads (0 = all cores)");
    sub->add_option("--seed", o.seed, "override the config seed");
    sub->add_option("-o,--output", o.output_path, "write results to this file");
    sub->add_option("--format", o.format, "output format: json or csv")
        ->check(CLI::IsMember({"json", "csv"}));
    sub->add_flag("--timings", o.timings, "report wall time on stderr");
}

RunConfig load_and_override(const CommonOpts& o) {
    RunConfig cfg = load_config_file(o.config_path);
    if (o.seed) cfg.seed = *o.seed;
    if (!o.output_path.empty()) cfg.output.path = o.output_path;
    if (!o.format.empty()) cfg.output.format = o.format;
    return cfg;
}

int emit_points(const RunConfig& cfg, const std::vector<Point>& points,
                const char* command) {
    std::string text;
    if (cfg.output.format == "csv") {
        std::ostringstream s;
        write_csv(s, points);
        text = s.str();
    } else if (points.size() == 1 && cfg.sweep.empty()) {
        ordered_json j = point_json(points[0]);
        j["command"] = command;
        text = j.dump(2) + "\n";
    } else {
        ordered_json j;
        j["command"] = command;
        ordered_json rows = ordered_json::array();
        for (const Point& pt : points) rows.push_back(point_json(pt));
        j["points"] = std::move(rows);
        text = j.dump(2) + "\n";
    }
    int rc = write_output(cfg.output, text);
    if (rc != 0) return rc;
    for (const Point& pt : points)
        if (pt.result.warning) return 2;
    return 0;
}

int run_correlate_or_sweep(const RunConfig& cfg, const CommonOpts& o,
                           bool is_sweep) {
    if (is_sweep && cfg.sweep.empty())
        throw ConfigError("sweep: config has no sweep block");
    RunConfig eff = cfg;
    if (!is_sweep) eff.sweep.clear(); // correlate: single point at the base inputs
    std::vector<Point> points = run_points(eff, o.jobs);
    return emit_points(eff, points, is_sweep ? "sweep" : "correlate");
}

int run_chsh(const RunConfig& cfg, const CommonOpts& o) {
    if (cfg.output.format != "json")
        throw ConfigError("chsh writes json only; drop output.format=csv");
    ChshAngles ang;
    if (cfg.chsh_angles) {
        ang = *cfg.chsh_angles;
    } else {
        // Default analyzer set saturating the quantum bound at rest.
        const double s = 1.0 / std::sqrt(2.0);
        ang.a = Vec3(0, 0, 1);
        ang.a_prime = Vec3(1, 0, 0);
        ang.b = Vec3(s, 0, s);
        ang.b_prime = Vec3(s, 0, -s);
    }

    RunConfig eff = cfg;
    eff.sweep.clear();
    long counter = 0;
    std::vector<Point> terms;
    auto eval_pair = [&](const Vec3& a, const Vec3& b) {
        Point pt = base_point(eff);
        pt.index = counter++;
        pt.a = a;
        pt.b = b;
        QuadratureSpec spec = eff.quadrature;
        spec.mc_seed = mix_seed(eff.seed, static_cast<std::uint64_t>(pt.index));
        if (o.jobs >= 0) spec.jobs = o.jobs;
        pt.result = evaluate(eff, pt, spec);
        terms.push_back(pt);
        return pt.result;
    };
    ChshResult s = chsh(ang.a, ang.a_prime, ang.b, ang.b_prime, eval_pair);

    ordered_json j;
    j["command"] = "chsh";
    j["value"] = s.value;
    j["abs_error"] = s.abs_error;
    j["warning"] = s.warning;
    ordered_json rows = ordered_json::array();
    for (const Point& pt : terms) rows.push_back(point_json(pt));
    j["terms"] = std::move(rows);
    int rc = write_output(eff.output, j.dump(2) + "\n");
    if (rc != 0) return rc;
    return s.warning ? 2 : 0;
}

} // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"EPR spin correlations for localized two-particle states"};
    app.require_subcommand(1);

    CommonOpts o;
    CLI::App* correlate =
        app.add_subcommand("correlate", "evaluate C(a,b) at one setting");
    CLI::App* sweep =
        app.add_subcommand("sweep", "evaluate C over a rotation grid");
    CLI::App* chsh_cmd =
        app.add_subcommand("chsh", "evaluate the CHSH combination S");
    CLI::App* validate =
        app.add_subcommand("validate", "check a config and report its plan");
    for (CLI::App* sub : {correlate, sweep, chsh_cmd, validate})
        attach_common(sub, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 3;
    }

    const auto t0 = std::chrono::steady_clock::now();
    int rc = 0;
    try {
        RunConfig cfg = load_and_override(o);
        if (validate->parsed()) {
            std::cout << validate_report(cfg);
            rc = 0;
        } else if (chsh_cmd->parsed()) {
            rc = run_chsh(cfg, o);
        } else {
            rc = run_correlate_or_sweep(cfg, o, sweep->parsed());
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        rc = 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        rc = 1;
    }
    if (o.timings) {
        const auto t1 = std::chrono::steady_clock::now();
        const auto ms =
            std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0);
        std::cerr << "wall_ms=" << ms.count() << "\n";
    }
    return rc;
}

} // namespace epr::cli
