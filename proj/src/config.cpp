#include "qtflow/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "qtflow/diagnostics.hpp"
#include "qtflow/rng.hpp"

namespace qtflow {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

int edit_distance(const std::string& a, const std::string& b) {
    std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = static_cast<int>(i);
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

[[noreturn]] void fail(const std::string& name, long line, const std::string& msg) {
    throw ConfigError(name + ":" + std::to_string(line) + ": " + msg);
}

const std::map<std::string, std::vector<std::string>> kKnownKeys = {
    {"grid", {"n1", "n2", "n3", "n4", "L1", "L2", "L3"}},
    {"background", {"kind"}},
    {"flow",
     {"type", "initial", "F", "S", "dt0", "dt_min", "dt_max", "dt_growth", "x_tol", "max_steps",
      "snapshot_every", "skip_hypothesis_check", "seed"}},
    {"solver", {"cg_tol", "cg_max_iter", "precond"}},
    {"output", {"out_dir"}},
};

std::string suggestion_for(const std::string& section, const std::string& key) {
    auto it = kKnownKeys.find(section);
    if (it == kKnownKeys.end()) return "";
    std::string best;
    int best_d = 3;  // only suggest close matches
    for (const auto& k : it->second) {
        const int d = edit_distance(key, k);
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return best;
}

double parse_double(const std::string& name, long line, const std::string& v) {
    try {
        std::size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("junk");
        return x;
    } catch (...) {
        fail(name, line, "expected a number, got '" + v + "'");
    }
}

long parse_long(const std::string& name, long line, const std::string& v) {
    try {
        std::size_t pos = 0;
        long x = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("junk");
        return x;
    } catch (...) {
        fail(name, line, "expected an integer, got '" + v + "'");
    }
}

bool parse_bool(const std::string& name, long line, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail(name, line, "expected true/false, got '" + v + "'");
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    return out;
}

std::string join_path(const std::string& dir, const std::string& rel) {
    if (rel.empty() || rel.front() == '/' || dir.empty()) return rel;
    return dir + "/" + rel;
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& dir,
                            const std::string& display_name) {
    RunConfig cfg;
    cfg.config_dir = dir;

    std::istringstream in(text);
    std::string line, section;
    long lineno = 0;
    bool saw_grid = false, saw_flow = false;
    bool profile_set = false;

    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') fail(display_name, lineno, "unterminated section header");
            section = trim(t.substr(1, t.size() - 2));
            if (kKnownKeys.find(section) == kKnownKeys.end())
                fail(display_name, lineno, "unknown section [" + section + "]");
            if (section == "grid") saw_grid = true;
            if (section == "flow") saw_flow = true;
            continue;
        }
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos) fail(display_name, lineno, "expected key = value");
        if (section.empty()) fail(display_name, lineno, "key outside of any section");
        const std::string key = trim(t.substr(0, eq));
        const std::string val = trim(t.substr(eq + 1));

        const auto& known = kKnownKeys.at(section);
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            std::string sug = suggestion_for(section, key);
            std::string msg = "unknown key '" + key + "' in [" + section + "]";
            if (!sug.empty()) msg += " (did you mean '" + sug + "'?)";
            fail(display_name, lineno, msg);
        }

        if (section == "grid") {
            if (key == "n1") cfg.n1 = static_cast<int>(parse_long(display_name, lineno, val));
            else if (key == "n2") cfg.n2 = static_cast<int>(parse_long(display_name, lineno, val));
            else if (key == "n3") cfg.n3 = static_cast<int>(parse_long(display_name, lineno, val));
            else if (key == "n4") cfg.n4 = static_cast<int>(parse_long(display_name, lineno, val));
            else if (key == "L1") cfg.L1 = parse_double(display_name, lineno, val);
            else if (key == "L2") cfg.L2 = parse_double(display_name, lineno, val);
            else if (key == "L3") cfg.L3 = parse_double(display_name, lineno, val);
        } else if (section == "background") {
            if (val == "flat") {
                cfg.flat = true;
            } else if (val.rfind("synthetic:", 0) == 0) {
                cfg.flat = false;
                cfg.synthetic_path = join_path(dir, trim(val.substr(10)));
            } else {
                fail(display_name, lineno, "background kind must be flat or synthetic:<path>");
            }
        } else if (section == "flow") {
            if (key == "type") {
                if (val == "qflow") cfg.flow = FlowKind::qflow;
                else if (val == "tflow") cfg.flow = FlowKind::tflow;
                else fail(display_name, lineno, "flow type must be qflow or tflow");
            } else if (key == "initial") {
                if (val == "zero") {
                    cfg.initial.kind = InitialSpec::Kind::zero;
                } else if (val.rfind("mode:", 0) == 0) {
                    cfg.initial.kind = InitialSpec::Kind::mode;
                    auto parts = split(val.substr(5), ',');
                    if (parts.size() == 5) {
                        cfg.initial.k1 = static_cast<int>(parse_long(display_name, lineno, parts[0]));
                        cfg.initial.k2 = static_cast<int>(parse_long(display_name, lineno, parts[1]));
                        cfg.initial.k3 = static_cast<int>(parse_long(display_name, lineno, parts[2]));
                        cfg.initial.m = static_cast<int>(parse_long(display_name, lineno, parts[3]));
                        cfg.initial.amplitude = parse_double(display_name, lineno, parts[4]);
                    } else if (parts.size() == 4) {
                        // boundary mode: k1,k2,k3,amp
                        cfg.initial.k1 = static_cast<int>(parse_long(display_name, lineno, parts[0]));
                        cfg.initial.k2 = static_cast<int>(parse_long(display_name, lineno, parts[1]));
                        cfg.initial.k3 = static_cast<int>(parse_long(display_name, lineno, parts[2]));
                        cfg.initial.m = 0;
                        cfg.initial.amplitude = parse_double(display_name, lineno, parts[3]);
                    } else {
                        fail(display_name, lineno,
                             "mode spec is mode:k1,k2,k3,m,amp (volume) or mode:k1,k2,k3,amp "
                             "(boundary)");
                    }
                } else if (val.rfind("random:", 0) == 0) {
                    cfg.initial.kind = InitialSpec::Kind::random;
                    cfg.initial.amplitude = parse_double(display_name, lineno, val.substr(7));
                } else if (val.rfind("file:", 0) == 0) {
                    cfg.initial.kind = InitialSpec::Kind::file;
                    cfg.initial.path = join_path(dir, trim(val.substr(5)));
                } else {
                    fail(display_name, lineno, "initial must be zero|mode:...|random:amp|file:path");
                }
            } else if (key == "F" || key == "S") {
                profile_set = true;
                if ((key == "F") != (cfg.flow == FlowKind::qflow)) {
                    // tolerated: the key name documents which flow it feeds
                }
                if (val == "one") {
                    cfg.profile.kind = ProfileSpec::Kind::one;
                } else if (val.rfind("cosine:", 0) == 0) {
                    auto parts = split(val.substr(7), ',');
                    if (parts.size() != 2)
                        fail(display_name, lineno, "cosine profile is cosine:axis,amplitude");
                    cfg.profile.kind = ProfileSpec::Kind::cosine;
                    cfg.profile.axis = static_cast<int>(parse_long(display_name, lineno, parts[0]));
                    cfg.profile.amplitude = parse_double(display_name, lineno, parts[1]);
                    if (cfg.profile.axis < 1 || cfg.profile.axis > 3)
                        fail(display_name, lineno, "cosine axis must be 1, 2 or 3");
                    if (std::abs(cfg.profile.amplitude) >= 1.0)
                        fail(display_name, lineno,
                             "cosine amplitude " + parts[1] +
                                 " makes the profile nonpositive somewhere; the target profile "
                                 "must stay positive");
                } else if (val.rfind("file:", 0) == 0) {
                    cfg.profile.kind = ProfileSpec::Kind::file;
                    cfg.profile.path = join_path(dir, trim(val.substr(5)));
                } else {
                    fail(display_name, lineno, "profile must be one|cosine:axis,amp|file:path");
                }
            } else if (key == "dt0") {
                cfg.controls.dt0 = parse_double(display_name, lineno, val);
            } else if (key == "dt_min") {
                cfg.controls.dt_min = parse_double(display_name, lineno, val);
            } else if (key == "dt_max") {
                cfg.controls.dt_max = parse_double(display_name, lineno, val);
            } else if (key == "dt_growth") {
                cfg.controls.dt_growth = parse_double(display_name, lineno, val);
            } else if (key == "x_tol") {
                cfg.controls.x_tol = parse_double(display_name, lineno, val);
            } else if (key == "max_steps") {
                cfg.controls.max_steps = parse_long(display_name, lineno, val);
            } else if (key == "snapshot_every") {
                cfg.snapshot_every = parse_long(display_name, lineno, val);
            } else if (key == "skip_hypothesis_check") {
                cfg.skip_hypothesis_check = parse_bool(display_name, lineno, val);
            } else if (key == "seed") {
                cfg.seed = static_cast<std::uint64_t>(parse_long(display_name, lineno, val));
            }
        } else if (section == "solver") {
            if (key == "cg_tol") cfg.controls.cg_tol = parse_double(display_name, lineno, val);
            else if (key == "cg_max_iter")
                cfg.controls.cg_max_iter = static_cast<int>(parse_long(display_name, lineno, val));
            else if (key == "precond") {
                if (val == "spectral") cfg.controls.precond = PrecondKind::spectral;
                else if (val == "jacobi") cfg.controls.precond = PrecondKind::jacobi;
                else if (val == "none") cfg.controls.precond = PrecondKind::none;
                else fail(display_name, lineno, "precond must be spectral|jacobi|none");
            }
        } else if (section == "output") {
            if (key == "out_dir") cfg.out_dir = join_path(dir, val);
        }
    }

    if (!saw_grid) throw ConfigError(display_name + ": missing [grid] section");
    if (!saw_flow) throw ConfigError(display_name + ": missing [flow] section");
    if (cfg.n1 == 0 || cfg.n2 == 0 || cfg.n3 == 0 || cfg.n4 == 0)
        throw ConfigError(display_name + ": [grid] must set n1..n4");
    if (!(cfg.controls.dt0 > 0.0) || !(cfg.controls.x_tol > 0.0) || !(cfg.controls.cg_tol > 0.0))
        throw ConfigError(display_name + ": tolerances and dt0 must be positive");
    if (!profile_set) cfg.profile.kind = ProfileSpec::Kind::one;
    return cfg;
}

RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string dir = ".";
    const std::size_t slash = path.find_last_of('/');
    if (slash != std::string::npos) dir = path.substr(0, slash);
    return parse_config_text(buf.str(), dir, path);
}

BackgroundGeometry make_background(const RunConfig& cfg) {
    Grid g = build_grid(cfg.n1, cfg.n2, cfg.n3, cfg.n4, cfg.L1, cfg.L2, cfg.L3);
    if (cfg.flat) return flat_background(g);

    // Synthetic backgrounds from the CLI carry constant fields; the full
    // field set is available through the library API.
    SyntheticConstants c = cfg.synthetic;
    if (!cfg.synthetic_path.empty()) {
        std::ifstream in(cfg.synthetic_path);
        if (!in) throw ConfigError("cannot open synthetic background file: " + cfg.synthetic_path);
        std::string line;
        long lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::string t = trim(line);
            if (t.empty() || t[0] == '#' || t[0] == ';' || t[0] == '[') continue;
            const std::size_t eq = t.find('=');
            if (eq == std::string::npos)
                fail(cfg.synthetic_path, lineno, "expected key = value");
            const std::string key = trim(t.substr(0, eq));
            const double val = parse_double(cfg.synthetic_path, lineno, trim(t.substr(eq + 1)));
            if (key == "R") c.scalar_curvature = val;
            else if (key == "Q0") c.q0 = val;
            else if (key == "H0") c.h0 = val;
            else if (key == "T0") c.t0 = val;
            else fail(cfg.synthetic_path, lineno, "unknown synthetic field '" + key + "'");
        }
    }
    SyntheticFields f = SyntheticFields::zeros(g);
    f.scalar_curvature = ScalarField(g, c.scalar_curvature);
    f.q0 = ScalarField(g, c.q0);
    f.h0 = BoundaryField(g, Face::both, c.h0);
    f.t0 = BoundaryField(g, Face::both, c.t0);
    return synthetic_background(g, f);
}

namespace {

ScalarField random_bc_field(const Grid& g, double amplitude, std::uint64_t seed) {
    // Seeded superposition over a fixed low-mode dictionary; every component
    // satisfies the reflected boundary conditions exactly.
    SplitMix64 rng(seed);
    ScalarField u(g);
    for (int k1 = 0; k1 <= 2; ++k1)
        for (int k2 = 0; k2 <= 2; ++k2)
            for (int k3 = 0; k3 <= 2; ++k3)
                for (int m = 0; m <= 2; ++m) {
                    const double c = rng.symmetric();
                    if (k1 == 0 && k2 == 0 && k3 == 0 && m == 0) continue;
                    std::size_t idx = 0;
                    for (int i1 = 0; i1 < g.n1; ++i1)
                        for (int i2 = 0; i2 < g.n2; ++i2)
                            for (int i3 = 0; i3 < g.n3; ++i3)
                                for (int i4 = 0; i4 < g.n4; ++i4)
                                    u.values[idx++] +=
                                        c * std::cos(2.0 * M_PI * k1 * g.x1(i1) / g.L1) *
                                        std::cos(2.0 * M_PI * k2 * g.x2(i2) / g.L2) *
                                        std::cos(2.0 * M_PI * k3 * g.x3(i3) / g.L3) *
                                        std::cos(M_PI * m * g.x4(i4));
                }
    const double m = max_abs(u.values);
    if (m > 0.0)
        for (double& x : u.values) x *= amplitude / m;
    return u;
}

}  // namespace

ScalarField make_initial_u(const RunConfig& cfg, const Grid& g) {
    switch (cfg.initial.kind) {
        case InitialSpec::Kind::zero:
            return ScalarField(g);
        case InitialSpec::Kind::mode: {
            const InitialSpec& s = cfg.initial;
            return ScalarField::sample(g, [&](double x1, double x2, double x3, double x4) {
                return s.amplitude * std::cos(2.0 * M_PI * s.k1 * x1 / g.L1) *
                       std::cos(2.0 * M_PI * s.k2 * x2 / g.L2) *
                       std::cos(2.0 * M_PI * s.k3 * x3 / g.L3) * std::cos(M_PI * s.m * x4);
            });
        }
        case InitialSpec::Kind::random:
            return random_bc_field(g, cfg.initial.amplitude, cfg.seed);
        case InitialSpec::Kind::file:
            return read_volume_snapshot(cfg.initial.path, &g);
    }
    return ScalarField(g);
}

BoundaryField make_initial_v(const RunConfig& cfg, const Grid& g) {
    switch (cfg.initial.kind) {
        case InitialSpec::Kind::zero:
            return BoundaryField(g, Face::both);
        case InitialSpec::Kind::mode: {
            const InitialSpec& s = cfg.initial;
            return BoundaryField::sample(g, Face::both, [&](double x1, double x2, double x3) {
                return s.amplitude * std::cos(2.0 * M_PI * s.k1 * x1 / g.L1) *
                       std::cos(2.0 * M_PI * s.k2 * x2 / g.L2) *
                       std::cos(2.0 * M_PI * s.k3 * x3 / g.L3);
            });
        }
        case InitialSpec::Kind::random: {
            ScalarField u = random_bc_field(g, cfg.initial.amplitude, cfg.seed);
            return boundary_trace(u);
        }
        case InitialSpec::Kind::file:
            return read_boundary_snapshot(cfg.initial.path, &g);
    }
    return BoundaryField(g, Face::both);
}

ScalarField make_f_profile(const RunConfig& cfg, const Grid& g) {
    switch (cfg.profile.kind) {
        case ProfileSpec::Kind::one:
            return ScalarField(g, 1.0);
        case ProfileSpec::Kind::cosine: {
            const int axis = cfg.profile.axis;
            const double amp = cfg.profile.amplitude;
            return ScalarField::sample(g, [&](double x1, double x2, double x3, double) {
                const double x = axis == 1 ? x1 / g.L1 : (axis == 2 ? x2 / g.L2 : x3 / g.L3);
                return 1.0 + amp * std::cos(2.0 * M_PI * x);
            });
        }
        case ProfileSpec::Kind::file: {
            ScalarField f = read_volume_snapshot(cfg.profile.path, &g);
            for (double v : f.values)
                if (!(v > 0.0))
                    throw ConfigError("profile from " + cfg.profile.path +
                                      " is not positive everywhere");
            return f;
        }
    }
    return ScalarField(g, 1.0);
}

BoundaryField make_s_profile(const RunConfig& cfg, const Grid& g) {
    switch (cfg.profile.kind) {
        case ProfileSpec::Kind::one:
            return BoundaryField(g, Face::both, 1.0);
        case ProfileSpec::Kind::cosine: {
            const int axis = cfg.profile.axis;
            const double amp = cfg.profile.amplitude;
            return BoundaryField::sample(g, Face::both, [&](double x1, double x2, double x3) {
                const double x = axis == 1 ? x1 / g.L1 : (axis == 2 ? x2 / g.L2 : x3 / g.L3);
                return 1.0 + amp * std::cos(2.0 * M_PI * x);
            });
        }
        case ProfileSpec::Kind::file: {
            BoundaryField f = read_boundary_snapshot(cfg.profile.path, &g);
            if (f.face != Face::both)
                throw ConfigError("boundary profile must cover both faces: " + cfg.profile.path);
            for (double v : f.values)
                if (!(v > 0.0))
                    throw ConfigError("profile from " + cfg.profile.path +
                                      " is not positive everywhere");
            return f;
        }
    }
    return BoundaryField(g, Face::both, 1.0);
}

}  // namespace qtflow
