// Command-line front end: flow runs, operator verification, invariant
// reports and snapshot inspection.
//
// Exit codes: 0 success/converged, 2 budget exhausted (or flow stuck),
// 3 diverged, 4 config/input error, 5 invariant failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "qtflow/config.hpp"
#include "qtflow/diagnostics.hpp"
#include "qtflow/rng.hpp"

namespace fs = std::filesystem;
using namespace qtflow;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::string grid_override;
};

void apply_overrides(RunConfig& cfg, const CommonArgs& args) {
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    if (args.seed) cfg.seed = *args.seed;
    if (!args.grid_override.empty()) {
        int n[4];
        if (std::sscanf(args.grid_override.c_str(), "%dx%dx%dx%d", &n[0], &n[1], &n[2], &n[3]) != 4)
            throw ConfigError("--grid-override expects n1xn2xn3xn4, got '" + args.grid_override +
                              "'");
        cfg.n1 = n[0];
        cfg.n2 = n[1];
        cfg.n3 = n[2];
        cfg.n4 = n[3];
    }
}

int status_exit_code(RunStatus s) {
    switch (s) {
        case RunStatus::converged: return 0;
        case RunStatus::budget_exhausted: return 2;
        case RunStatus::stuck: return 2;
        case RunStatus::diverged: return 3;
        case RunStatus::solver_failure: return 5;
    }
    return 2;
}

void print_summary(std::ostream& os, const std::string& out_dir,
                   const std::vector<std::pair<std::string, std::string>>& kv) {
    std::string text;
    for (const auto& [k, v] : kv) text += k + ": " + v + "\n";
    os << text;
    std::ofstream f(out_dir + "/summary.txt");
    if (f) f << text;
}

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

int cmd_run_qflow(const CommonArgs& args) {
    RunConfig cfg = parse_config(args.config_path);
    apply_overrides(cfg, args);
    fs::create_directories(cfg.out_dir);

    BackgroundGeometry geo = make_background(cfg);
    const Grid& g = geo.grid();

    QFlowSetup setup;
    setup.geo = &geo;
    setup.initial_u = make_initial_u(cfg, g);
    setup.f_profile = make_f_profile(cfg, g);
    setup.controls = cfg.controls;
    setup.check_hypotheses = !cfg.skip_hypothesis_check;
    setup.snapshot_every = cfg.snapshot_every;

    CsvSink sink(cfg.out_dir + "/diagnostics.csv", CsvSink::Kind::qflow);
    setup.sink = &sink;
    std::string out_dir = cfg.out_dir;
    setup.snapshot_hook = [&out_dir](const FlowState& st) {
        char name[64];
        std::snprintf(name, sizeof name, "/snapshot_%06ld.pfld", st.step_index);
        write_snapshot(out_dir + name, st.u);
    };

    RunResult res = run_qflow(setup);
    write_snapshot(cfg.out_dir + "/snapshot_final.pfld", res.final_state.u);
    try {
        write_snapshot(cfg.out_dir + "/q_final.pfld", q_curvature(res.final_state.u, geo));
    } catch (const ConformalOverflow&) {
        // diverged states have no representable curvature field
    }

    if (res.records.empty()) {
        print_summary(std::cout, cfg.out_dir,
                      {{"status", run_status_name(res.status)},
                       {"message", res.message.empty() ? "-" : res.message}});
        if (!res.message.empty()) std::cerr << res.message << "\n";
        return status_exit_code(res.status);
    }
    const DiagnosticsRecord& last = res.records.back();
    double mean_u = 0.0, vol0 = 0.0;
    for (std::size_t i = 0; i < res.final_state.u.values.size(); ++i) {
        mean_u += res.final_state.u.values[i] * geo.quad_volume_weight()[i];
        vol0 += geo.quad_volume_weight()[i];
    }
    mean_u /= vol0;

    // Residual of the prescription Q = (Qbar/Fbar) F in the evolving L2 norm.
    const double residual = std::sqrt(std::max(0.0, res.final_x));

    print_summary(std::cout, cfg.out_dir,
                  {{"status", run_status_name(res.status)},
                   {"steps", std::to_string(last.step)},
                   {"t_final", fmt(last.t)},
                   {"x_final", fmt(res.final_x)},
                   {"energy_final", fmt(last.energy)},
                   {"volume_final", fmt(last.measure)},
                   {"volume_drift_rel",
                    fmt(std::abs(last.measure - res.initial_measure) /
                        std::abs(res.initial_measure))},
                   {"qbar_final", fmt(last.mean)},
                   {"prescription_residual_L2", fmt(residual)},
                   {"u_mean_g0", fmt(mean_u)},
                   {"u_min", fmt(last.min_u)},
                   {"u_max", fmt(last.max_u)},
                   {"max_h2_norm", fmt(res.max_h2_norm)},
                   {"message", res.message.empty() ? "-" : res.message}});
    if (!res.message.empty()) std::cerr << res.message << "\n";
    return status_exit_code(res.status);
}

int cmd_run_tflow(const CommonArgs& args) {
    RunConfig cfg = parse_config(args.config_path);
    apply_overrides(cfg, args);
    fs::create_directories(cfg.out_dir);

    BackgroundGeometry geo = make_background(cfg);
    const Grid& g = geo.grid();

    TFlowSetup setup;
    setup.geo = &geo;
    setup.initial_v = make_initial_v(cfg, g);
    setup.s_profile = make_s_profile(cfg, g);
    setup.controls = cfg.controls;
    setup.check_hypotheses = !cfg.skip_hypothesis_check;
    setup.snapshot_every = cfg.snapshot_every;

    CsvSink sink(cfg.out_dir + "/diagnostics.csv", CsvSink::Kind::tflow);
    setup.sink = &sink;
    std::string out_dir = cfg.out_dir;
    setup.snapshot_hook = [&out_dir](const FlowState& st) {
        char name[64];
        std::snprintf(name, sizeof name, "/snapshot_%06ld.pfld", st.step_index);
        write_snapshot(out_dir + name, st.u);
    };

    TRunResult res = run_tflow(setup);
    if (res.records.empty()) {
        print_summary(std::cout, cfg.out_dir,
                      {{"status", run_status_name(res.status)},
                       {"message", res.message.empty() ? "-" : res.message}});
        if (!res.message.empty()) std::cerr << res.message << "\n";
        return status_exit_code(res.status);
    }
    write_snapshot(cfg.out_dir + "/snapshot_final.pfld", res.final_state.v);
    write_snapshot(cfg.out_dir + "/extension_final.pfld", res.final_state.w);
    try {
        BoundaryField p3 = boundary_p3_of_extension(res.final_state.w, geo);
        std::vector<double> em3 = conformal_weight(res.final_state.v.values, -3.0);
        BoundaryField tfield(g, Face::both);
        for (std::size_t i = 0; i < tfield.values.size(); ++i)
            tfield.values[i] = em3[i] * (p3.values[i] + geo.t0().values[i]);
        write_snapshot(cfg.out_dir + "/t_final.pfld", tfield);
    } catch (const ConformalOverflow&) {
    }

    const DiagnosticsRecord& last = res.records.back();
    print_summary(std::cout, cfg.out_dir,
                  {{"status", run_status_name(res.status)},
                   {"steps", std::to_string(last.step)},
                   {"t_final", fmt(last.t)},
                   {"x_T_final", fmt(res.final_x)},
                   {"energy_final", fmt(last.energy)},
                   {"area_final", fmt(last.measure)},
                   {"area_drift_rel",
                    fmt(std::abs(last.measure - res.initial_area) / std::abs(res.initial_area))},
                   {"tbar_final", fmt(last.mean)},
                   {"extension_residual", fmt(res.final_state.extension_residual)},
                   {"v_min", fmt(last.min_u)},
                   {"v_max", fmt(last.max_u)},
                   {"message", res.message.empty() ? "-" : res.message}});
    if (!res.message.empty()) std::cerr << res.message << "\n";
    return status_exit_code(res.status);
}

struct CheckRow {
    std::string name;
    double measured;
    double tolerance;
    bool pass;
};

int cmd_verify_operators(const CommonArgs& args) {
    RunConfig cfg;
    if (!args.config_path.empty()) {
        cfg = parse_config(args.config_path);
    } else {
        cfg.n1 = cfg.n2 = cfg.n3 = 8;
        cfg.n4 = 9;
    }
    CommonArgs a = args;
    apply_overrides(cfg, a);
    if (!cfg.out_dir.empty()) fs::create_directories(cfg.out_dir);

    BackgroundGeometry geo = make_background(cfg);
    const Grid& g = geo.grid();
    LinearOperator op = p43_operator(geo, BoundaryConditionSet::both());

    std::vector<CheckRow> rows;

    // Symmetry on random BC-satisfying pairs.
    {
        double worst = 0.0;
        for (int trial = 0; trial < 10; ++trial) {
            auto mk = [&](std::uint64_t salt) {
                RunConfig c2 = cfg;
                c2.seed = cfg.seed * 1000003ULL + salt;
                c2.initial.kind = InitialSpec::Kind::random;
                c2.initial.amplitude = 1.0;
                return make_initial_u(c2, g);
            };
            ScalarField u = mk(2 * trial);
            ScalarField v = mk(2 * trial + 1);
            ScalarField opu = op.apply(u);
            ScalarField opv = op.apply(v);
            const double a1 = inner_volume(opu, v, geo);
            const double a2 = inner_volume(u, opv, geo);
            const double scale = l2_norm_volume(u, geo) * l2_norm_volume(v, geo);
            worst = std::max(worst, std::abs(a1 - a2) / scale);
        }
        rows.push_back({"self-adjointness (relative)", worst, 1e-10, worst <= 1e-10});
    }

    // Kernel: op(1) = 0.
    {
        ScalarField one(g, 1.0);
        const double n = max_abs(op.apply(one).values);
        rows.push_back({"kernel op(1) sup-norm", n, 1e-12, n <= 1e-12});
    }

    // Nonnegativity via Lanczos.
    {
        LanczosResult lr = lanczos_extremes(op, geo, 50, cfg.seed + 17, false);
        const double floor = -1e-8 * std::max(1.0, lr.max_ritz);
        rows.push_back({"Lanczos min Ritz", lr.min_ritz, floor, lr.min_ritz >= floor});
        LanczosResult lr2 = lanczos_extremes(op, geo, 50, cfg.seed + 18, true);
        rows.push_back({"second-smallest Ritz > 0", lr2.min_ritz, 0.0, lr2.min_ritz > 0.0});
    }

    // Separable-mode eigenvalue.
    {
        ScalarField mode = ScalarField::sample(g, [&](double x1, double, double, double x4) {
            return std::cos(2.0 * M_PI * x1 / g.L1) * std::cos(M_PI * x4);
        });
        const double lam = periodic_mode_eigenvalue(1, g.n1, g.h1, g.L1);
        const double mu = reflected_mode_eigenvalue(1, g.n4, g.h4);
        const double expect = (lam + mu) * (lam + mu);
        ScalarField res = op.apply(mode);
        const double rayleigh = inner_volume(res, mode, geo) / inner_volume(mode, mode, geo);
        const double err = std::abs(rayleigh - expect) / expect;
        rows.push_back({"separable mode eigenvalue (rel err)", err, 1e-8, err <= 1e-8});
    }

    // Bilinear/operator compatibility.
    {
        RunConfig c2 = cfg;
        c2.initial.kind = InitialSpec::Kind::random;
        c2.initial.amplitude = 0.7;
        c2.seed = cfg.seed + 41;
        ScalarField u = make_initial_u(c2, g);
        c2.seed = cfg.seed + 42;
        ScalarField v = make_initial_u(c2, g);
        const double b = p43_bilinear(u, v, geo);
        const double o = inner_volume(op.apply(u), v, geo);
        const double rel = std::abs(b - o) / std::max(1e-300, std::abs(b));
        rows.push_back({"bilinear vs operator (relative)", rel, 1e-8, rel <= 1e-8});
    }

    bool all = true;
    std::printf("operator verification on %dx%dx%dx%d (%s background)\n", g.n1, g.n2, g.n3, g.n4,
                geo.is_flat() ? "flat" : "synthetic");
    std::string csv = "check,measured,tolerance,pass\n";
    for (const auto& r : rows) {
        std::printf("[%s] %-38s measured %.3e  (tolerance %.3e)\n", r.pass ? "PASS" : "FAIL",
                    r.name.c_str(), r.measured, r.tolerance);
        csv += r.name + "," + fmt(r.measured) + "," + fmt(r.tolerance) + "," +
               (r.pass ? "1" : "0") + "\n";
        all = all && r.pass;
    }
    {
        std::ofstream f(cfg.out_dir + "/operator_report.csv");
        if (f) f << csv;
    }
    return all ? 0 : 5;
}

int cmd_check_invariants(const CommonArgs& args, const std::string& snapshot_path) {
    RunConfig cfg = parse_config(args.config_path);
    CommonArgs a = args;
    apply_overrides(cfg, a);
    BackgroundGeometry geo = make_background(cfg);
    const Grid& g = geo.grid();

    ScalarField u = read_volume_snapshot(snapshot_path, &g);
    KappaInvariants k = kappa_invariants(u, geo);
    std::printf("snapshot: %s\n", snapshot_path.c_str());
    std::printf("kappa_P4 = %.10g, kappa_P3 = %.10g, kappa = %.10g\n", k.p4, k.p3, k.total);

    if (cfg.flow == FlowKind::qflow) {
        EnergyBreakdown e = energy_qf(u, make_f_profile(cfg, g), geo);
        std::printf("II_QF: quadratic %.10g, linear %.10g, log %.10g, total %.10g%s\n",
                    e.quadratic, e.linear, e.log_term, e.total,
                    e.bc_warning ? "  [warning: normal derivative looks nonzero]" : "");
    } else {
        EnergyBreakdown e = energy_ts(u, make_s_profile(cfg, g), geo);
        std::printf("II_TS: quadratic %.10g, linear %.10g, log %.10g, total %.10g%s\n",
                    e.quadratic, e.linear, e.log_term, e.total,
                    e.bc_warning ? "  [warning: normal derivative looks nonzero]" : "");
    }

    const double pi2 = M_PI * M_PI;
    const double quad = p43_bilinear(u, u, geo);
    if (quad > 0.0) {
        for (double alpha : {8.0 * pi2, 12.0 * pi2, 16.0 * pi2}) {
            std::printf("MT ratio      alpha=%8.4f: %.10g\n", alpha, mt_ratio(u, geo, alpha));
            std::printf("trace MT      alpha=%8.4f: %.10g\n", alpha,
                        trace_mt_ratio(u, geo, alpha));
        }
        std::printf("(sharp thresholds 16*pi^2 = %.6f interior, 12*pi^2 = %.6f trace; "
                    "reported for context, not asserted)\n",
                    16.0 * pi2, 12.0 * pi2);
    } else {
        std::printf("MT ratios undefined for constant fields\n");
    }
    return 0;
}

int cmd_report(const std::string& csv_path) {
    InvariantReport rep = invariant_report(csv_path);
    std::cout << rep.text();
    if (!rep.has_data) return 4;
    return rep.all_ok() ? 0 : 5;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Q- and T-curvature flow simulator on T^3 x [0,1]"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string snapshot_path, csv_path;

    auto add_common = [&](CLI::App* cmd, bool config_required) {
        cmd->add_option("--config", args.config_path, "run configuration file")
            ->required(config_required);
        cmd->add_option("--out-dir", args.out_dir, "output directory override");
        cmd->add_option("--seed", args.seed, "seed override for random fields");
        cmd->add_option("--grid-override", args.grid_override, "grid as n1xn2xn3xn4");
    };

    auto* run_q = app.add_subcommand("run-qflow", "run the interior Q-curvature flow");
    add_common(run_q, true);
    auto* run_t = app.add_subcommand("run-tflow", "run the boundary T-curvature flow");
    add_common(run_t, true);
    auto* verify = app.add_subcommand("verify-operators", "operator verification report");
    add_common(verify, false);
    auto* check = app.add_subcommand("check-invariants", "energies and MT ratios of a snapshot");
    add_common(check, true);
    check->add_option("snapshot", snapshot_path, "PFLD snapshot path")->required();
    auto* report = app.add_subcommand("report", "invariant report over a diagnostics CSV");
    report->add_option("csv", csv_path, "diagnostics.csv path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_q->parsed()) return cmd_run_qflow(args);
        if (run_t->parsed()) return cmd_run_tflow(args);
        if (verify->parsed()) return cmd_verify_operators(args);
        if (check->parsed()) return cmd_check_invariants(args, snapshot_path);
        if (report->parsed()) return cmd_report(csv_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 4;
    } catch (const ConformalOverflow& e) {
        std::cerr << "diverged: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
