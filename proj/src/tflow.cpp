#include "qtflow/tflow.hpp"

#include <algorithm>
#include <cmath>

#include "qtflow/detail/dense1d.hpp"

namespace qtflow {

namespace {

void require_q0_free(const BackgroundGeometry& geo, const char* what) {
    if (geo.is_flat()) return;
    for (double q : geo.q0().values)
        if (q != 0.0)
            throw std::invalid_argument(std::string(what) + " requires Q0 == 0 on the background");
}

std::vector<double> boundary_mass(const BoundaryField& v, const BackgroundGeometry& geo) {
    std::vector<double> m = conformal_weight(v.values, 3.0);
    const auto& a = geo.quad_area_weight();
    for (std::size_t i = 0; i < m.size(); ++i) m[i] *= a[i];
    return m;
}

// K_mat v = a * P3(extend v) = (w_q/2) * (P4 w)|faces; l2-symmetric PSD.
void stiffness_from_extension(const ScalarField& w, const BackgroundGeometry& geo,
                              std::vector<double>& kv) {
    ScalarField p4 = paneitz_p4(w, geo, BoundaryConditionSet::both());
    const Grid& g = geo.grid();
    const auto& wq = geo.quad_volume_weight();
    kv.resize(2 * g.face_points());
    const int N = g.n4 - 1;
    for (int i1 = 0; i1 < g.n1; ++i1)
        for (int i2 = 0; i2 < g.n2; ++i2)
            for (int i3 = 0; i3 < g.n3; ++i3) {
                const std::size_t fi = g.face_index(i1, i2, i3);
                const std::size_t lo = g.index(i1, i2, i3, 0);
                const std::size_t hi = lo + N;
                kv[fi] = 0.5 * wq[lo] * p4.values[lo];
                kv[g.face_points() + fi] = 0.5 * wq[hi] * p4.values[hi];
            }
}

void apply_face_axis(std::vector<double>& slab, const Grid& g, int axis,
                     const std::vector<double>& phi, bool transpose) {
    const int ns[3] = {g.n1, g.n2, g.n3};
    const int n = ns[axis];
    const std::size_t n_after =
        axis == 0 ? static_cast<std::size_t>(g.n2) * g.n3
                  : (axis == 1 ? static_cast<std::size_t>(g.n3) : 1);
    const std::size_t n_before = slab.size() / (n * n_after);
    std::vector<double> work(n);
    for (std::size_t b = 0; b < n_before; ++b)
        for (std::size_t a = 0; a < n_after; ++a) {
            const std::size_t base = b * n * n_after + a;
            for (int k = 0; k < n; ++k) {
                double acc = 0.0;
                if (transpose) {
                    const double* col = phi.data() + static_cast<std::size_t>(k) * n;
                    for (int j = 0; j < n; ++j) acc += col[j] * slab[base + j * n_after];
                } else {
                    for (int j = 0; j < n; ++j)
                        acc += phi[static_cast<std::size_t>(j) * n + k] * slab[base + j * n_after];
                }
                work[k] = acc;
            }
            for (int k = 0; k < n; ++k) slab[base + k * n_after] = work[k];
        }
}

}  // namespace

std::pair<ScalarField, SolveReport> extend(const BoundaryField& v, const BackgroundGeometry& geo,
                                           double tol, const ScalarField* warm_start) {
    require_q0_free(geo, "extend");
    return solve_constrained_biharmonic(v, geo, tol, 2000, warm_start);
}

BoundaryField boundary_p3_of_extension(const ScalarField& w, const BackgroundGeometry& geo) {
    require_same_grid(w.grid, geo.grid(), "boundary_p3_of_extension");
    std::vector<double> kv;
    stiffness_from_extension(w, geo, kv);
    const Grid& g = geo.grid();
    const auto& aw = geo.quad_area_weight();
    BoundaryField out(g, Face::both);
    for (std::size_t i = 0; i < kv.size(); ++i) out.values[i] = kv[i] / aw[i];
    return out;
}

BoundaryField operator_A(const BoundaryField& v, const BoundaryField& u_current,
                         const BackgroundGeometry& geo, double tol) {
    require_same_grid(v.grid, geo.grid(), "operator_A");
    auto [w, rep] = extend(v, geo, tol);
    if (!rep.converged) throw std::runtime_error("operator_A: extension solve failed");
    BoundaryField p3 = boundary_p3_of_extension(w, geo);
    std::vector<double> em3u = conformal_weight(u_current.values, -3.0);
    BoundaryField out(geo.grid(), Face::both);
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = -em3u[i] * p3.values[i];
    return out;
}

BoundaryField tflow_rhs(const BoundaryFlowState& state, const BackgroundGeometry& geo,
                        const BoundaryField& s_profile) {
    for (double s : s_profile.values)
        if (!(s > 0.0)) throw std::invalid_argument("tflow_rhs: S must be positive");

    BoundaryField p3 = boundary_p3_of_extension(state.w, geo);
    const auto& t0 = geo.t0().values;
    std::vector<double> em3 = conformal_weight(state.v.values, -3.0);
    std::vector<double> mass = boundary_mass(state.v, geo);

    // T of the evolving metric, and its evolving mean.
    std::vector<double> t(p3.values.size());
    double t_int = 0.0, s_int = 0.0, area = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = em3[i] * (p3.values[i] + t0[i]);
        t_int += t[i] * mass[i];
        s_int += s_profile.values[i] * mass[i];
        area += mass[i];
    }
    const double ratio = (t_int / area) / (s_int / area);

    BoundaryField rhs(geo.grid(), Face::both);
    for (std::size_t i = 0; i < t.size(); ++i)
        rhs.values[i] = -(t[i] - ratio * s_profile.values[i]);
    return rhs;
}

double tflow_x(const BoundaryFlowState& state, const BackgroundGeometry& geo,
               const BoundaryField& s_profile) {
    BoundaryField p3 = boundary_p3_of_extension(state.w, geo);
    const auto& t0 = geo.t0().values;
    std::vector<double> em3 = conformal_weight(state.v.values, -3.0);
    std::vector<double> mass = boundary_mass(state.v, geo);
    std::vector<double> t(p3.values.size());
    double t_int = 0.0, s_int = 0.0, area = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = em3[i] * (p3.values[i] + t0[i]);
        t_int += t[i] * mass[i];
        s_int += s_profile.values[i] * mass[i];
        area += mass[i];
    }
    const double ratio = (t_int / area) / (s_int / area);
    double x = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double d = t[i] - ratio * s_profile.values[i];
        x += d * d * mass[i];
    }
    return x;
}

TFlowWorkspace::TFlowWorkspace(const BackgroundGeometry& geo, const BoundaryField& s_profile,
                               const StepControls& controls)
    : geo_(&geo), s_(s_profile), controls_(controls), extension_cache_(geo.grid()) {
    require_same_grid(s_profile.grid, geo.grid(), "TFlowWorkspace");
    if (s_profile.face != Face::both)
        throw std::invalid_argument("TFlowWorkspace: S must cover both faces");
    for (double s : s_.values)
        if (!(s > 0.0)) throw std::invalid_argument("TFlowWorkspace: S must be positive");
    require_q0_free(geo, "TFlowWorkspace");
    build_modal_tables();
}

void TFlowWorkspace::build_modal_tables() {
    const Grid& g = geo_->grid();
    tangential_[0] = periodic_axis_basis(g.n1, g.h1);
    tangential_[1] = periodic_axis_basis(g.n2, g.h2);
    tangential_[2] = periodic_axis_basis(g.n3, g.h3);

    const int n4 = g.n4;
    const int ni = n4 - 2;
    std::vector<double> s = detail::reflected_second_difference_matrix(n4, g.h4);
    std::vector<double> w4 = detail::trapezoid_weights(n4, g.h4);

    khat_.resize(g.face_points());
    std::vector<double> m(static_cast<std::size_t>(n4) * n4);
    std::vector<double> a(static_cast<std::size_t>(ni) * ni);
    std::vector<double> p0(n4), p1(n4), rhs(ni);
    std::size_t idx = 0;
    for (int k1 = 0; k1 < g.n1; ++k1)
        for (int k2 = 0; k2 < g.n2; ++k2)
            for (int k3 = 0; k3 < g.n3; ++k3, ++idx) {
                const double rho = tangential_[0].eig[k1] + tangential_[1].eig[k2] +
                                   tangential_[2].eig[k3];
                std::vector<double> d = detail::shifted_operator(s, n4, rho);
                // m = W4 D D
                for (int i = 0; i < n4; ++i)
                    for (int j = 0; j < n4; ++j) {
                        double v = 0.0;
                        for (int k = 0; k < n4; ++k)
                            v += d[static_cast<std::size_t>(i) * n4 + k] *
                                 d[static_cast<std::size_t>(k) * n4 + j];
                        m[static_cast<std::size_t>(i) * n4 + j] = w4[i] * v;
                    }
                for (int i = 0; i < ni; ++i)
                    for (int j = 0; j < ni; ++j)
                        a[static_cast<std::size_t>(i) * ni + j] =
                            m[static_cast<std::size_t>(i + 1) * n4 + (j + 1)];
                if (!detail::cholesky_factor(a, ni))
                    throw std::runtime_error("boundary modal factorization failed");

                auto extend_1d = [&](double lo, double hi, std::vector<double>& p) {
                    std::fill(p.begin(), p.end(), 0.0);
                    p[0] = lo;
                    p[n4 - 1] = hi;
                    for (int i = 0; i < ni; ++i) {
                        rhs[i] = -(m[static_cast<std::size_t>(i + 1) * n4 + 0] * lo +
                                   m[static_cast<std::size_t>(i + 1) * n4 + (n4 - 1)] * hi);
                    }
                    detail::cholesky_solve(a, ni, rhs.data());
                    for (int i = 0; i < ni; ++i) p[i + 1] = rhs[i];
                };
                extend_1d(1.0, 0.0, p0);
                extend_1d(0.0, 1.0, p1);

                auto half_b1d = [&](const std::vector<double>& pa, const std::vector<double>& pb) {
                    // 1/2 sum_j W4 (D pa)_j (D pb)_j
                    double acc = 0.0;
                    for (int i = 0; i < n4; ++i) {
                        double da = 0.0, db = 0.0;
                        for (int j = 0; j < n4; ++j) {
                            da += d[static_cast<std::size_t>(i) * n4 + j] * pa[j];
                            db += d[static_cast<std::size_t>(i) * n4 + j] * pb[j];
                        }
                        acc += w4[i] * da * db;
                    }
                    return 0.5 * acc;
                };
                khat_[idx] = {half_b1d(p0, p0), half_b1d(p0, p1), half_b1d(p1, p1)};
            }
}

void TFlowWorkspace::apply_stiffness(const std::vector<double>& v, std::vector<double>& kv,
                                     ScalarField* extension_scratch) const {
    BoundaryField bv(geo_->grid(), Face::both);
    bv.values = v;
    ScalarField* warm = extension_scratch && !extension_scratch->values.empty()
                            ? extension_scratch
                            : nullptr;
    auto [w, rep] = solve_constrained_biharmonic(bv, *geo_, 1e-11, 400, warm);
    if (rep.nan_detected) throw std::runtime_error("tflow stiffness: extension returned NaN");
    if (extension_scratch) *extension_scratch = w;
    stiffness_from_extension(w, *geo_, kv);
}

VecApply TFlowWorkspace::make_preconditioner(const std::vector<double>& mass_diag,
                                             double dt) const {
    const Grid& g = geo_->grid();
    const std::size_t fp = g.face_points();
    double msum = 0.0, asum = 0.0;
    const auto& aw = geo_->quad_area_weight();
    for (std::size_t i = 0; i < mass_diag.size(); ++i) {
        msum += mass_diag[i];
        asum += aw[i];
    }
    const double c = msum / asum;

    const auto* tables = &khat_;
    const auto* bases = &tangential_;
    return [tables, bases, c, dt, fp, g](const std::vector<double>& in,
                                         std::vector<double>& out) {
        out = in;
        std::vector<double> lower(out.begin(), out.begin() + fp);
        std::vector<double> upper(out.begin() + fp, out.end());
        for (int a = 0; a < 3; ++a) {
            apply_face_axis(lower, g, a, (*bases)[a].phi, true);
            apply_face_axis(upper, g, a, (*bases)[a].phi, true);
        }
        for (std::size_t i = 0; i < fp; ++i) {
            const auto& k = (*tables)[i];
            const double a00 = c + dt * k[0];
            const double a01 = dt * k[1];
            const double a11 = c + dt * k[2];
            const double det = a00 * a11 - a01 * a01;
            const double r0 = lower[i], r1 = upper[i];
            lower[i] = (a11 * r0 - a01 * r1) / det;
            upper[i] = (a00 * r1 - a01 * r0) / det;
        }
        for (int a = 0; a < 3; ++a) {
            apply_face_axis(lower, g, a, (*bases)[a].phi, false);
            apply_face_axis(upper, g, a, (*bases)[a].phi, false);
        }
        std::copy(lower.begin(), lower.end(), out.begin());
        std::copy(upper.begin(), upper.end(), out.begin() + fp);
    };
}

StepOutcome tflow_step(BoundaryFlowState& state, TFlowWorkspace& ws) {
    const BackgroundGeometry& geo = ws.geo();
    const StepControls& ctl = ws.controls();
    StepOutcome outcome;

    std::vector<double> mass;
    BoundaryField rhs(geo.grid(), Face::both);
    try {
        mass = boundary_mass(state.v, geo);
        rhs = tflow_rhs(state, geo, ws.s_profile());
    } catch (const ConformalOverflow&) {
        outcome.fatal = RunStatus::diverged;
        return outcome;
    }

    double dt = state.dt > 0.0 ? state.dt : ctl.dt0;
    const double slack = ctl.accept_slack_rel * (1.0 + std::abs(state.energy));
    std::vector<double> delta(mass.size(), 0.0);
    std::vector<double> b(mass.size());
    ScalarField ext_scratch = state.w;

    while (true) {
        for (std::size_t i = 0; i < b.size(); ++i) b[i] = dt * mass[i] * rhs.values[i];

        VecApply apply = [&](const std::vector<double>& in, std::vector<double>& out) {
            std::vector<double> kv;
            ws.apply_stiffness(in, kv, &ext_scratch);
            out.resize(in.size());
            for (std::size_t i = 0; i < out.size(); ++i)
                out[i] = mass[i] * in[i] + dt * kv[i];
        };
        VecApply precond = geo.is_flat() ? ws.make_preconditioner(mass, dt) : VecApply{};

        SolveReport rep =
            conjugate_gradient_raw(apply, b, delta, ctl.cg_tol, ctl.cg_max_iter, precond);
        outcome.cg_iterations += rep.iterations;
        outcome.cg_residual = rep.final_residual;

        bool reject = false;
        BoundaryField v_next(geo.grid(), Face::both);
        ScalarField w_next(geo.grid());
        double e_next = 0.0, ext_residual = 0.0;
        if (!rep.converged || rep.nan_detected) {
            reject = true;
        } else {
            double min_arg = 1.0;
            for (double d : delta) min_arg = std::min(min_arg, 1.0 + 3.0 * d);
            if (min_arg <= 0.05) {
                reject = true;
            } else {
                v_next = state.v;
                for (std::size_t i = 0; i < delta.size(); ++i)
                    v_next.values[i] += (1.0 / 3.0) * std::log1p(3.0 * delta[i]);
                auto [w_new, erep] = extend(v_next, geo, 1e-11, &state.w);
                if (!erep.converged && erep.final_residual > 1e-8) {
                    reject = true;
                } else {
                    w_next = std::move(w_new);
                    ext_residual = interior_p4_residual(w_next, geo);
                    try {
                        e_next = energy_ts(w_next, ws.s_profile(), geo).total;
                    } catch (const ConformalOverflow&) {
                        outcome.fatal = RunStatus::diverged;
                        return outcome;
                    }
                    if (!(e_next <= state.energy + slack)) reject = true;
                }
            }
        }

        if (!reject) {
            state.v = std::move(v_next);
            state.w = std::move(w_next);
            state.extension_residual = ext_residual;
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
        for (double& d : delta) d *= 0.5;
    }
}

TRunResult run_tflow(const TFlowSetup& setup) {
    if (!setup.geo) throw std::invalid_argument("run_tflow: geometry required");
    const BackgroundGeometry& geo = *setup.geo;
    const Grid& g = geo.grid();

    TFlowWorkspace ws(geo, setup.s_profile, setup.controls);
    TRunResult result;

    BoundaryFlowState state;
    state.v = setup.initial_v.values.empty() ? BoundaryField(g, Face::both) : setup.initial_v;
    require_same_grid(state.v.grid, g, "run_tflow initial data");
    if (state.v.face != Face::both)
        throw std::invalid_argument("run_tflow: initial data must cover both faces");
    state.dt = setup.controls.dt0;

    if (setup.check_hypotheses) {
        LinearOperator op = p43_operator(geo, BoundaryConditionSet::both());
        LanczosResult lr = lanczos_extremes(op, geo, 30, 0x9e3779b9ULL, false);
        if (lr.min_ritz < -1e-8 * std::max(1.0, lr.max_ritz)) {
            result.status = RunStatus::solver_failure;
            result.message = "background fails the nonnegativity hypothesis";
            result.final_state = std::move(state);
            return result;
        }
    }

    {
        auto [w0, rep0] = extend(state.v, geo, 1e-11);
        if (!rep0.converged && rep0.final_residual > 1e-8)
            throw std::runtime_error("run_tflow: initial extension failed");
        state.w = std::move(w0);
        state.extension_residual = interior_p4_residual(state.w, geo);
    }

    auto fill_record = [&](const BoundaryFlowState& st, const StepOutcome* oc) {
        DiagnosticsRecord rec;
        rec.step = st.step_index;
        rec.t = st.t;
        rec.dt = 0.0;
        rec.energy = st.energy;
        std::vector<double> mass = boundary_mass(st.v, geo);
        BoundaryField p3 = boundary_p3_of_extension(st.w, geo);
        std::vector<double> em3 = conformal_weight(st.v.values, -3.0);
        const auto& t0v = geo.t0().values;
        double area = 0.0, t_int = 0.0, s_int = 0.0;
        std::vector<double> t(mass.size());
        for (std::size_t i = 0; i < mass.size(); ++i) {
            t[i] = em3[i] * (p3.values[i] + t0v[i]);
            area += mass[i];
            t_int += t[i] * mass[i];
            s_int += ws.s_profile().values[i] * mass[i];
        }
        rec.measure = area;
        rec.mean = t_int / area;
        rec.target_ratio = (t_int / area) / (s_int / area);
        double x = 0.0;
        for (std::size_t i = 0; i < mass.size(); ++i) {
            const double d = t[i] - rec.target_ratio * ws.s_profile().values[i];
            x += d * d * mass[i];
        }
        rec.x_t = x;
        rec.kappa = kappa_invariants(st.w, geo).total;
        rec.cg_iterations = oc ? oc->cg_iterations : 0;
        rec.residual = st.extension_residual;
        rec.max_u = *std::max_element(st.v.values.begin(), st.v.values.end());
        rec.min_u = *std::min_element(st.v.values.begin(), st.v.values.end());
        return rec;
    };

    try {
        state.energy = energy_ts(state.w, ws.s_profile(), geo).total;
    } catch (const ConformalOverflow& e) {
        result.status = RunStatus::diverged;
        result.message = e.what();
        result.final_state = std::move(state);
        return result;
    }

    DiagnosticsRecord rec0 = fill_record(state, nullptr);
    state.diagnostics = rec0;
    result.initial_area = rec0.measure;
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
        StepOutcome oc = tflow_step(state, ws);
        if (oc.fatal) {
            result.status = *oc.fatal;
            break;
        }
        DiagnosticsRecord rec = fill_record(state, &oc);
        rec.dt = state.t - result.records.back().t;
        state.diagnostics = rec;
        result.records.push_back(rec);
        if (setup.sink) setup.sink->emit(rec);
        if (setup.snapshot_hook && setup.snapshot_every > 0 &&
            state.step_index % setup.snapshot_every == 0) {
            FlowState fs;
            fs.u = state.w;
            fs.t = state.t;
            fs.dt = state.dt;
            fs.step_index = state.step_index;
            fs.energy = state.energy;
            setup.snapshot_hook(fs);
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

}  // namespace qtflow
