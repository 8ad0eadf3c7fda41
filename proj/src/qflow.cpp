#include "qtflow/qflow.hpp"

#include <algorithm>
#include <cmath>

namespace qtflow {

const char* run_status_name(RunStatus s) {
    switch (s) {
        case RunStatus::converged: return "converged";
        case RunStatus::budget_exhausted: return "budget_exhausted";
        case RunStatus::diverged: return "diverged";
        case RunStatus::stuck: return "stuck";
        case RunStatus::solver_failure: return "solver_failure";
    }
    return "unknown";
}

namespace {

struct VolumeMeans {
    double q_bar = 0.0;
    double f_bar = 0.0;
    double volume = 0.0;
};

VolumeMeans volume_means(const ScalarField& q, const std::vector<double>& mass,
                         const ScalarField& f_profile) {
    VolumeMeans m;
    double vol = 0.0, qi = 0.0, fi = 0.0;
    for (std::size_t i = 0; i < mass.size(); ++i) {
        vol += mass[i];
        qi += q.values[i] * mass[i];
        fi += f_profile.values[i] * mass[i];
    }
    m.volume = vol;
    m.q_bar = qi / vol;
    m.f_bar = fi / vol;
    return m;
}

std::vector<double> evolving_mass(const ScalarField& u, const BackgroundGeometry& geo) {
    std::vector<double> m = conformal_weight(u.values, 4.0);
    const auto& w = geo.quad_volume_weight();
    for (std::size_t i = 0; i < m.size(); ++i) m[i] *= w[i];
    return m;
}

}  // namespace

ScalarField qflow_rhs(const ScalarField& u, const BackgroundGeometry& geo,
                      const ScalarField& f_profile) {
    require_same_grid(u.grid, geo.grid(), "qflow_rhs");
    for (double f : f_profile.values)
        if (!(f > 0.0)) throw std::invalid_argument("qflow_rhs: F must be positive");
    ScalarField q = q_curvature(u, geo);
    std::vector<double> mass = evolving_mass(u, geo);
    VolumeMeans m = volume_means(q, mass, f_profile);
    const double ratio = m.q_bar / m.f_bar;
    ScalarField rhs(geo.grid());
    for (std::size_t i = 0; i < rhs.values.size(); ++i)
        rhs.values[i] = -(q.values[i] - ratio * f_profile.values[i]);
    return rhs;
}

double qflow_x(const ScalarField& u, const BackgroundGeometry& geo,
               const ScalarField& f_profile) {
    ScalarField q = q_curvature(u, geo);
    std::vector<double> mass = evolving_mass(u, geo);
    VolumeMeans m = volume_means(q, mass, f_profile);
    const double ratio = m.q_bar / m.f_bar;
    double x = 0.0;
    for (std::size_t i = 0; i < mass.size(); ++i) {
        const double d = q.values[i] - ratio * f_profile.values[i];
        x += d * d * mass[i];
    }
    return x;
}

QFlowWorkspace::QFlowWorkspace(const BackgroundGeometry& geo, const ScalarField& f_profile,
                               const StepControls& controls)
    : geo_(&geo), f_(f_profile), controls_(controls) {
    require_same_grid(f_profile.grid, geo.grid(), "QFlowWorkspace");
    for (double f : f_.values)
        if (!(f > 0.0)) throw std::invalid_argument("QFlowWorkspace: F must be positive");
    op_ = p43_operator(geo, BoundaryConditionSet::both());
    if (controls_.precond == PrecondKind::spectral) modal_ = make_modal_transform(geo.grid());
}

StepOutcome qflow_step(FlowState& state, QFlowWorkspace& ws) {
    const BackgroundGeometry& geo = ws.geo();
    const Grid& g = geo.grid();
    const StepControls& ctl = ws.controls();
    StepOutcome outcome;

    std::vector<double> mass;
    ScalarField q(g);
    try {
        mass = evolving_mass(state.u, geo);
        q = q_curvature(state.u, geo);
    } catch (const ConformalOverflow&) {
        outcome.fatal = RunStatus::diverged;
        return outcome;
    }
    VolumeMeans means = volume_means(q, mass, ws.f_profile());
    const double ratio = means.q_bar / means.f_bar;

    std::vector<double> rhs(mass.size());
    for (std::size_t i = 0; i < rhs.size(); ++i)
        rhs[i] = -(q.values[i] - ratio * ws.f_profile().values[i]);

    const auto& w = geo.quad_volume_weight();
    ScalarField scratch(g);

    double dt = state.dt > 0.0 ? state.dt : ctl.dt0;
    std::vector<double> delta(mass.size(), 0.0);
    std::vector<double> b(mass.size());

    const double slack = ctl.accept_slack_rel * (1.0 + std::abs(state.energy));

    while (true) {
        for (std::size_t i = 0; i < b.size(); ++i) b[i] = dt * mass[i] * rhs[i];

        VecApply apply = [&](const std::vector<double>& in, std::vector<double>& out) {
            scratch.values = in;
            ScalarField opu = ws.p43().apply(scratch);
            out.resize(in.size());
            const double half_dt = 0.5 * dt;
            for (std::size_t i = 0; i < out.size(); ++i)
                out[i] = mass[i] * in[i] + half_dt * w[i] * opu.values[i];
        };

        VecApply precond;
        if (ctl.precond == PrecondKind::spectral && ws.modal()) {
            double vol0 = 0.0, msum = 0.0;
            for (std::size_t i = 0; i < mass.size(); ++i) {
                vol0 += w[i];
                msum += mass[i];
            }
            const double c = msum / vol0;
            const auto modal = ws.modal();
            const double half_dt = 0.5 * dt;
            precond = [modal, c, half_dt](const std::vector<double>& in,
                                          std::vector<double>& out) {
                std::vector<double> coeffs;
                modal->forward(in, coeffs);
                const auto& sym = modal->p43_symbol();
                for (std::size_t i = 0; i < coeffs.size(); ++i)
                    coeffs[i] /= (c + half_dt * sym[i]);
                modal->inverse(coeffs, out);
            };
        } else if (ctl.precond == PrecondKind::jacobi) {
            double s = 2.0 / (g.h1 * g.h1) + 2.0 / (g.h2 * g.h2) + 2.0 / (g.h3 * g.h3) +
                       2.0 / (g.h4 * g.h4);
            double s4 = 2.0 / std::pow(g.h1, 4) + 2.0 / std::pow(g.h2, 4) +
                        2.0 / std::pow(g.h3, 4) + 2.0 / std::pow(g.h4, 4);
            const double diag_ll = s * s + s4;
            std::vector<double> diag(mass.size());
            for (std::size_t i = 0; i < diag.size(); ++i)
                diag[i] = mass[i] + 0.5 * dt * w[i] * diag_ll;
            precond = jacobi_preconditioner(std::move(diag));
        }

        SolveReport rep = conjugate_gradient_raw(apply, b, delta, ctl.cg_tol, ctl.cg_max_iter,
                                                 precond);
        outcome.cg_iterations += rep.iterations;
        outcome.cg_residual = rep.final_residual;

        bool reject = false;
        ScalarField u_next(g);
        double e_next = 0.0;
        if (!rep.converged || rep.nan_detected) {
            reject = true;
        } else {
            // Multiplicative update of the conformal volume density: the
            // step increment has zero evolving-measure mean, so this keeps
            // the discrete volume fixed to solver tolerance.
            double min_arg = 1.0;
            for (double d : delta) min_arg = std::min(min_arg, 1.0 + 4.0 * d);
            if (min_arg <= 0.05) {
                reject = true;
            } else {
                u_next = state.u;
                for (std::size_t i = 0; i < delta.size(); ++i)
                    u_next.values[i] += 0.25 * std::log1p(4.0 * delta[i]);
                try {
                    e_next = energy_qf(u_next, ws.f_profile(), geo).total;
                } catch (const ConformalOverflow&) {
                    outcome.fatal = RunStatus::diverged;
                    return outcome;
                }
                if (!(e_next <= state.energy + slack)) reject = true;
            }
        }

        if (!reject) {
            state.u = std::move(u_next);
            state.t += dt;
            state.dt = std::min(dt * ctl.dt_growth, ctl.dt_max);
            state.step_index += 1;
            state.energy = e_next;
            outcome.accepted = true;
            outcome.fatal.reset();
            return outcome;
        }

        dt *= 0.5;
        outcome.retries += 1;
        if (dt < ctl.dt_min) {
            outcome.fatal = rep.nan_detected || !rep.converged ? RunStatus::solver_failure
                                                               : RunStatus::stuck;
            return outcome;
        }
        for (double& d : delta) d *= 0.5;  // warm start for the halved step
    }
}

RunResult run_qflow(const QFlowSetup& setup) {
    if (!setup.geo) throw std::invalid_argument("run_qflow: geometry required");
    const BackgroundGeometry& geo = *setup.geo;
    const Grid& g = geo.grid();

    QFlowWorkspace ws(geo, setup.f_profile, setup.controls);
    RunResult result;

    FlowState state;
    state.u = setup.initial_u.values.empty() ? ScalarField(g) : setup.initial_u;
    require_same_grid(state.u.grid, g, "run_qflow initial data");
    state.dt = setup.controls.dt0;

    if (setup.check_hypotheses) {
        LanczosResult lr = lanczos_extremes(ws.p43(), geo, 30, 0x9e3779b9ULL, false);
        if (lr.min_ritz < -1e-8 * std::max(1.0, lr.max_ritz)) {
            result.status = RunStatus::solver_failure;
            result.message = "background fails the nonnegativity hypothesis: min Ritz " +
                             std::to_string(lr.min_ritz);
            result.final_state = std::move(state);
            return result;
        }
    }

    auto fill_record = [&](const FlowState& st, const StepOutcome* oc) {
        DiagnosticsRecord rec;
        rec.step = st.step_index;
        rec.t = st.t;
        rec.dt = oc ? st.dt : 0.0;
        rec.energy = st.energy;
        ScalarField qf = q_curvature(st.u, geo);
        std::vector<double> mass = evolving_mass(st.u, geo);
        VolumeMeans m = volume_means(qf, mass, ws.f_profile());
        rec.measure = m.volume;
        rec.mean = m.q_bar;
        rec.target_ratio = m.q_bar / m.f_bar;
        double x = 0.0;
        for (std::size_t i = 0; i < mass.size(); ++i) {
            const double d = qf.values[i] - rec.target_ratio * ws.f_profile().values[i];
            x += d * d * mass[i];
        }
        rec.x_t = x;
        rec.kappa = kappa_invariants(st.u, geo).total;
        rec.cg_iterations = oc ? oc->cg_iterations : 0;
        rec.residual = oc ? oc->cg_residual : 0.0;
        rec.max_u = *std::max_element(st.u.values.begin(), st.u.values.end());
        rec.min_u = *std::min_element(st.u.values.begin(), st.u.values.end());
        return rec;
    };

    try {
        state.energy = energy_qf(state.u, ws.f_profile(), geo).total;
    } catch (const ConformalOverflow& e) {
        result.status = RunStatus::diverged;
        result.message = e.what();
        result.final_state = std::move(state);
        return result;
    }

    // Boundedness monitors: the g0-mean of u must stay within +-10 of its
    // initial value (sanity tripwire against kernel runaway), and the
    // H^2-type norm <P^{4,3}u,u> + ubar^2 is tracked for the summary.
    double vol0 = 0.0;
    for (double w : geo.quad_volume_weight()) vol0 += w;
    auto g0_mean = [&](const ScalarField& u) {
        double m = 0.0;
        for (std::size_t i = 0; i < u.values.size(); ++i)
            m += u.values[i] * geo.quad_volume_weight()[i];
        return m / vol0;
    };
    const double mean0 = g0_mean(state.u);
    auto h2_norm = [&](const ScalarField& u) {
        const double m = g0_mean(u);
        return p43_bilinear(u, u, geo) + m * m;
    };
    result.max_h2_norm = h2_norm(state.u);

    DiagnosticsRecord rec0 = fill_record(state, nullptr);
    state.diagnostics = rec0;
    result.initial_measure = rec0.measure;
    result.records.push_back(rec0);
    if (setup.sink) setup.sink->emit(rec0);

    result.status = RunStatus::budget_exhausted;
    if (rec0.x_t <= setup.controls.x_tol) {
        result.status = RunStatus::converged;
        result.final_x = rec0.x_t;
        result.final_state = std::move(state);
        return result;
    }

    while (state.step_index < setup.controls.max_steps) {
        StepOutcome oc = qflow_step(state, ws);
        if (oc.fatal) {
            result.status = *oc.fatal;
            break;
        }
        DiagnosticsRecord rec = fill_record(state, &oc);
        // record the dt actually used, not the grown proposal
        rec.dt = state.t - result.records.back().t;
        state.diagnostics = rec;
        result.records.push_back(rec);
        if (setup.sink) setup.sink->emit(rec);
        if (setup.snapshot_hook && setup.snapshot_every > 0 &&
            state.step_index % setup.snapshot_every == 0)
            setup.snapshot_hook(state);

        result.max_h2_norm = std::max(result.max_h2_norm, h2_norm(state.u));
        if (std::abs(g0_mean(state.u) - mean0) > 10.0) {
            result.status = RunStatus::diverged;
            result.message = "g0-mean of u left the [-10, +10] band around its initial value";
            break;
        }

        if (rec.x_t <= setup.controls.x_tol) {
            result.status = RunStatus::converged;
            break;
        }
    }

    result.final_x = result.records.empty() ? 0.0 : result.records.back().x_t;
    result.final_state = std::move(state);
    return result;
}

double q_evolution_check(const FlowState& before, const FlowState& after,
                         const BackgroundGeometry& geo, const ScalarField& f_profile) {
    const double dt = after.t - before.t;
    if (!(dt > 0.0) || dt > 1e-3 + 1e-15)
        throw std::invalid_argument("q_evolution_check: need 0 < dt <= 1e-3");

    auto deviation = [&](const ScalarField& u, VolumeMeans& m, std::vector<double>& mass) {
        ScalarField q = q_curvature(u, geo);
        mass = evolving_mass(u, geo);
        m = volume_means(q, mass, f_profile);
        const double ratio = m.q_bar / m.f_bar;
        ScalarField wfield(geo.grid());
        for (std::size_t i = 0; i < wfield.values.size(); ++i)
            wfield.values[i] = q.values[i] - ratio * f_profile.values[i];
        return std::pair<ScalarField, ScalarField>{std::move(wfield), std::move(q)};
    };

    VolumeMeans m0, m1;
    std::vector<double> mass0, mass1;
    auto [w0, q0] = deviation(before.u, m0, mass0);
    auto [w1, q1] = deviation(after.u, m1, mass1);

    ScalarField lhs(geo.grid());
    for (std::size_t i = 0; i < lhs.values.size(); ++i)
        lhs.values[i] = (w1.values[i] - w0.values[i]) / dt;

    // Theory value at the earlier state, with the conformal covariance
    // P4_{g(t)} = e^{-4u} P4_{g0} and all means against the evolving measure.
    const double ratio = m0.q_bar / m0.f_bar;
    ScalarField p4w = paneitz_p4(w0, geo, BoundaryConditionSet::both());
    std::vector<double> em4u = conformal_weight(before.u.values, -4.0);
    double mean_fw = 0.0;
    for (std::size_t i = 0; i < mass0.size(); ++i)
        mean_fw += (f_profile.values[i] / m0.f_bar) * w0.values[i] * mass0[i];
    mean_fw /= m0.volume;

    ScalarField rhs(geo.grid());
    for (std::size_t i = 0; i < rhs.values.size(); ++i)
        rhs.values[i] = 4.0 * w0.values[i] * q0.values[i] -
                        0.5 * em4u[i] * p4w.values[i] -
                        4.0 * ratio * f_profile.values[i] * mean_fw;

    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < mass0.size(); ++i) {
        const double d = lhs.values[i] - rhs.values[i];
        num += d * d * mass0[i];
        den += rhs.values[i] * rhs.values[i] * mass0[i];
    }
    return std::sqrt(num / (den > 0.0 ? den : 1.0));
}

}  // namespace qtflow
