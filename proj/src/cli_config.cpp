#include <epr/cli/config.hpp>

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace epr::cli {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& what) { throw ConfigError(what); }

const json& member(const json& obj, const char* key, const char* where) {
    auto it = obj.find(key);
    if (it == obj.end())
        fail(std::string(where) + ": missing required key \"" + key + "\"");
    return *it;
}

double number_at(const json& obj, const char* key, const char* where) {
    const json& v = member(obj, key, where);
    if (!v.is_number())
        fail(std::string(where) + "." + key + ": expected a number");
    return v.get<double>();
}

Vec3 vec3_at(const json& obj, const char* key, const char* where) {
    const json& v = member(obj, key, where);
    if (!v.is_array() || v.size() != 3 || !v[0].is_number() ||
        !v[1].is_number() || !v[2].is_number())
        fail(std::string(where) + "." + key + ": expected [x, y, z]");
    return Vec3(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
}

// Measurement axes and sweep axes are directions; normalize once here so the
// library's unit-vector checks never fire on user rounding.
Vec3 unit_at(const json& obj, const char* key, const char* where) {
    Vec3 v = vec3_at(obj, key, where);
    double n = v.norm();
    if (!(n > 0.0) || !std::isfinite(n))
        fail(std::string(where) + "." + key + ": zero or non-finite vector");
    return v / n;
}

RadialProfile parse_profile(const json& obj, const char* where) {
    if (!obj.is_object())
        fail(std::string(where) + ": expected an object");
    const json& t = member(obj, "type", where);
    if (!t.is_string())
        fail(std::string(where) + ".type: expected a string");
    std::string type = t.get<std::string>();
    if (type == "gaussian") {
        GaussianProfile g{number_at(obj, "k0", where),
                          number_at(obj, "sigma", where)};
        return RadialProfile(g);
    }
    if (type == "rectangular") {
        RectangularProfile r{number_at(obj, "kmin", where),
                             number_at(obj, "kmax", where)};
        return RadialProfile(r);
    }
    fail(std::string(where) + ".type: unknown profile \"" + type +
         "\" (use \"gaussian\" or \"rectangular\")");
}

DetectorRegion parse_detector(const json& obj, const char* where) {
    if (!obj.is_object())
        fail(std::string(where) + ": expected an object");
    const json& s = member(obj, "shape", where);
    if (!s.is_string())
        fail(std::string(where) + ".shape: expected a string");
    std::string shape = s.get<std::string>();
    if (shape == "box") {
        Box b;
        b.center = vec3_at(obj, "center", where);
        b.sides = vec3_at(obj, "sides", where);
        return DetectorRegion(b);
    }
    if (shape == "ball") {
        Ball b;
        b.center = vec3_at(obj, "center", where);
        b.radius = number_at(obj, "radius", where);
        return DetectorRegion(b);
    }
    if (shape == "all_space")
        return DetectorRegion(AllSpace{});
    fail(std::string(where) + ".shape: unknown shape \"" + shape +
         "\" (use \"box\", \"ball\", or \"all_space\")");
}

Regime parse_regime(const std::string& name) {
    if (name == "sharp") return Regime::SharpMomentum;
    if (name == "fixed_direction") return Regime::FixedDirection;
    if (name == "general") return Regime::General;
    fail("regime: unknown value \"" + name +
         "\" (use \"sharp\", \"fixed_direction\", or \"general\")");
}

void parse_quadrature(const json& obj, QuadratureSpec& spec) {
    if (!obj.is_object())
        fail("quadrature: expected an object");
    auto take_int = [&](const char* key, auto& field) {
        auto it = obj.find(key);
        if (it == obj.end()) return;
        if (!it->is_number_integer())
            fail(std::string("quadrature.") + key + ": expected an integer");
        field = it->get<std::decay_t<decltype(field)>>();
    };
    auto take_num = [&](const char* key, double& field) {
        auto it = obj.find(key);
        if (it == obj.end()) return;
        if (!it->is_number())
            fail(std::string("quadrature.") + key + ": expected a number");
        field = it->get<double>();
    };
    take_int("nodes_1d", spec.nodes_1d);
    take_num("truncation_tail", spec.truncation_tail);
    take_int("max_refinements", spec.max_refinements);
    take_num("target_rel_error", spec.target_rel_error);
    take_int("eval_cap", spec.eval_cap);
    take_int("mc_seed", spec.mc_seed);
    try {
        spec.validate();
    } catch (const std::exception& e) {
        fail(std::string("quadrature: ") + e.what());
    }
}

SweepAxis parse_sweep_entry(const json& obj, std::size_t idx) {
    std::ostringstream name;
    name << "sweep[" << idx << "]";
    std::string where = name.str();
    if (!obj.is_object())
        fail(where + ": expected an object");
    SweepAxis ax;
    const json& t = member(obj, "target", where.c_str());
    if (!t.is_string())
        fail(where + ".target: expected a string");
    ax.target = t.get<std::string>();
    if (ax.target != "a" && ax.target != "b" && ax.target != "dir_a" &&
        ax.target != "dir_b")
        fail(where + ".target: unknown target \"" + ax.target +
             "\" (use \"a\", \"b\", \"dir_a\", or \"dir_b\")");
    ax.axis = unit_at(obj, "axis", where.c_str());
    ax.start = number_at(obj, "start", where.c_str());
    ax.stop = number_at(obj, "stop", where.c_str());
    const json& st = member(obj, "steps", where.c_str());
    if (!st.is_number_integer() || st.get<long long>() < 1)
        fail(where + ".steps: expected an integer >= 1");
    ax.steps = st.get<int>();
    if (ax.steps > 1 && ax.stop == ax.start)
        fail(where + ": steps > 1 with stop == start");
    return ax;
}

} // namespace

RunConfig parse_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        fail(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object())
        fail("config root: expected an object");

    RunConfig cfg;
    cfg.mass = number_at(doc, "mass", "config");
    if (!(cfg.mass > 0.0))
        fail("mass: must be positive");

    const json& reg = member(doc, "regime", "config");
    if (!reg.is_string())
        fail("regime: expected a string");
    cfg.regime = parse_regime(reg.get<std::string>());

    const json& state = member(doc, "state", "config");
    if (!state.is_object())
        fail("state: expected an object");

    if (cfg.regime == Regime::SharpMomentum) {
        cfg.momentum_a = vec3_at(state, "momentum_a", "state");
        cfg.momentum_b = vec3_at(state, "momentum_b", "state");
    } else {
        cfg.profile_a = parse_profile(member(state, "profile_a", "state"),
                                      "state.profile_a");
        cfg.profile_b = parse_profile(member(state, "profile_b", "state"),
                                      "state.profile_b");
        if (cfg.regime == Regime::FixedDirection) {
            cfg.direction_a = unit_at(state, "direction_a", "state");
            cfg.direction_b = unit_at(state, "direction_b", "state");
        } else if (state.contains("direction_a") ||
                   state.contains("direction_b")) {
            fail("state: direction_a/direction_b have no effect in the "
                 "general regime; remove them");
        }
    }

    if (cfg.regime == Regime::SharpMomentum) {
        // Plane waves carry no localization; a finite detector would demand
        // the distributional kernel. Only all_space is coherent here.
        for (const char* key : {"detector_a", "detector_b"}) {
            if (!doc.contains(key)) continue;
            DetectorRegion det = parse_detector(doc.at(key), key);
            if (!det.is_all_space())
                fail(std::string(key) +
                     ": sharp-momentum states take no finite detector; use "
                     "regime \"fixed_direction\" or \"general\"");
        }
    } else {
        cfg.detector_a =
            parse_detector(member(doc, "detector_a", "config"), "detector_a");
        cfg.detector_b =
            parse_detector(member(doc, "detector_b", "config"), "detector_b");
    }

    const json& meas = member(doc, "measurement", "config");
    if (!meas.is_object())
        fail("measurement: expected an object");
    cfg.meas_a = unit_at(meas, "a", "measurement");
    cfg.meas_b = unit_at(meas, "b", "measurement");

    if (doc.contains("sweep")) {
        const json& sw = doc.at("sweep");
        if (!sw.is_array() || sw.empty() || sw.size() > 2)
            fail("sweep: expected an array of 1 or 2 entries");
        for (std::size_t i = 0; i < sw.size(); ++i) {
            SweepAxis ax = parse_sweep_entry(sw[i], i);
            if ((ax.target == "dir_a" || ax.target == "dir_b") &&
                cfg.regime == Regime::General)
                fail("sweep: target \"" + ax.target +
                     "\" is undefined in the general regime");
            cfg.sweep.push_back(ax);
        }
    }

    if (doc.contains("chsh")) {
        const json& c = doc.at("chsh");
        if (!c.is_object())
            fail("chsh: expected an object");
        ChshAngles ang;
        ang.a = unit_at(c, "a", "chsh");
        ang.a_prime = unit_at(c, "a_prime", "chsh");
        ang.b = unit_at(c, "b", "chsh");
        ang.b_prime = unit_at(c, "b_prime", "chsh");
        cfg.chsh_angles = ang;
    }

    if (doc.contains("quadrature"))
        parse_quadrature(doc.at("quadrature"), cfg.quadrature);

    if (doc.contains("output")) {
        const json& out = doc.at("output");
        if (!out.is_object())
            fail("output: expected an object");
        if (out.contains("format")) {
            const json& f = out.at("format");
            if (!f.is_string())
                fail("output.format: expected a string");
            cfg.output.format = f.get<std::string>();
            if (cfg.output.format != "json" && cfg.output.format != "csv")
                fail("output.format: use \"json\" or \"csv\"");
        }
        if (out.contains("path")) {
            const json& p = out.at("path");
            if (!p.is_string())
                fail("output.path: expected a string");
            cfg.output.path = p.get<std::string>();
        }
    }

    if (doc.contains("seed")) {
        const json& s = doc.at("seed");
        if (!s.is_number_integer() || s.get<long long>() < 0)
            fail("seed: expected a non-negative integer");
        cfg.seed = s.get<std::uint64_t>();
    }

    // Early physics validation so `validate` catches what `correlate` would
    // only hit mid-run.
    try {
        if (cfg.regime == Regime::SharpMomentum) {
            on_shell(cfg.mass, cfg.momentum_a);
            on_shell(cfg.mass, cfg.momentum_b);
        } else {
            support_bounds(*cfg.profile_a, cfg.quadrature.truncation_tail);
            support_bounds(*cfg.profile_b, cfg.quadrature.truncation_tail);
        }
    } catch (const std::exception& e) {
        fail(std::string("state: ") + e.what());
    }

    return cfg;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string validate_report(const RunConfig& cfg) {
    std::ostringstream out;
    out << "regime: " << regime_name(cfg.regime) << "\n";
    out << "mass: " << cfg.mass << "\n";
    if (cfg.regime == Regime::SharpMomentum) {
        FourMomentum qa = on_shell(cfg.mass, cfg.momentum_a);
        FourMomentum qb = on_shell(cfg.mass, cfg.momentum_b);
        out << "momentum_a: [" << cfg.momentum_a.x() << ", "
            << cfg.momentum_a.y() << ", " << cfg.momentum_a.z()
            << "] (energy " << qa.e << ")\n";
        out << "momentum_b: [" << cfg.momentum_b.x() << ", "
            << cfg.momentum_b.y() << ", " << cfg.momentum_b.z()
            << "] (energy " << qb.e << ")\n";
    } else {
        auto side = [&](const char* label, const RadialProfile& prof,
                        const DetectorRegion& det,
                        const std::optional<Vec3>& dir) {
            out << label << ": " << describe(prof) << " in " << describe(det);
            if (dir)
                out << ", direction [" << dir->x() << ", " << dir->y() << ", "
                    << dir->z() << "]";
            out << "\n";
            SupportBounds sb =
                support_bounds(prof, cfg.quadrature.truncation_tail);
            out << "  radial support: [" << sb.lo << ", " << sb.hi << "]\n";
            if (cfg.regime == Regime::FixedDirection && dir) {
                int floor_nodes =
                    min_nodes_1d(det, Direction(*dir), sb.lo, sb.hi);
                out << "  oscillation bound: >= " << floor_nodes
                    << " nodes per pass (nodes_1d "
                    << cfg.quadrature.nodes_1d << ")\n";
            }
        };
        side("side_a", *cfg.profile_a, *cfg.detector_a, cfg.direction_a);
        side("side_b", *cfg.profile_b, *cfg.detector_b, cfg.direction_b);
    }
    out << "measurement a: [" << cfg.meas_a.x() << ", " << cfg.meas_a.y()
        << ", " << cfg.meas_a.z() << "]\n";
    out << "measurement b: [" << cfg.meas_b.x() << ", " << cfg.meas_b.y()
        << ", " << cfg.meas_b.z() << "]\n";
    if (!cfg.sweep.empty()) {
        for (const SweepAxis& ax : cfg.sweep)
            out << "sweep: " << ax.target << " about [" << ax.axis.x() << ", "
                << ax.axis.y() << ", " << ax.axis.z() << "], theta "
                << ax.start << " .. " << ax.stop << " in " << ax.steps
                << " steps\n";
    }
    if (cfg.chsh_angles)
        out << "chsh: explicit analyzer set\n";
    out << "output: " << cfg.output.format << " to "
        << (cfg.output.path.empty() ? std::string("stdout") : cfg.output.path)
        << "\n";
    out << "ok\n";
    return out.str();
}

} // namespace epr::cli
