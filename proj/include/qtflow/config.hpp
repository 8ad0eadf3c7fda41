#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "qtflow/qflow.hpp"
#include "qtflow/tflow.hpp"

namespace qtflow {

// Raised with a message carrying the config path and line number.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class FlowKind { qflow, tflow };

struct InitialSpec {
    enum class Kind { zero, mode, random, file } kind = Kind::zero;
    // mode: cos(2 pi k1 x1/L1) cos(2 pi k2 x2/L2) cos(2 pi k3 x3/L3) cos(pi m x4)
    int k1 = 0, k2 = 0, k3 = 0, m = 0;
    double amplitude = 0.0;
    std::string path;
};

struct ProfileSpec {
    enum class Kind { one, cosine, file } kind = Kind::one;
    int axis = 1;          // 1..3
    double amplitude = 0.0;
    std::string path;
};

struct SyntheticConstants {
    double scalar_curvature = 0.0;
    double q0 = 0.0;
    double h0 = 0.0;
    double t0 = 0.0;
};

struct RunConfig {
    // [grid]
    int n1 = 0, n2 = 0, n3 = 0, n4 = 0;
    double L1 = 1.0, L2 = 1.0, L3 = 1.0;
    // [background]
    bool flat = true;
    SyntheticConstants synthetic;
    std::string synthetic_path;
    // [flow]
    FlowKind flow = FlowKind::qflow;
    InitialSpec initial;
    ProfileSpec profile;  // F (qflow) or S (tflow)
    StepControls controls;
    long snapshot_every = 0;
    bool skip_hypothesis_check = false;
    std::uint64_t seed = 1;
    // [output]
    std::string out_dir = ".";

    std::string config_dir;  // directory of the config file, for relative paths
};

// Parses the INI-style run configuration.  Unknown keys are rejected with a
// nearest-key suggestion; the first error wins and carries the line number.
RunConfig parse_config(const std::string& path);

// Same parser over an in-memory string (tests); `dir` resolves relative paths.
RunConfig parse_config_text(const std::string& text, const std::string& dir,
                            const std::string& display_name);

// Materialization helpers shared by the CLI and the tests.
BackgroundGeometry make_background(const RunConfig& cfg);
ScalarField make_initial_u(const RunConfig& cfg, const Grid& g);
BoundaryField make_initial_v(const RunConfig& cfg, const Grid& g);
ScalarField make_f_profile(const RunConfig& cfg, const Grid& g);
BoundaryField make_s_profile(const RunConfig& cfg, const Grid& g);

}  // namespace qtflow
