#include "qtflow/functionals.hpp"

#include <cmath>

namespace qtflow {

namespace {

double linear_term(const ScalarField& u, const BackgroundGeometry& geo) {
    const auto& w = geo.quad_volume_weight();
    const auto& q0 = geo.q0().values;
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += q0[i] * u.values[i] * w[i];
    return 4.0 * s;
}

bool normal_derivative_suspicious(const ScalarField& u, const BackgroundGeometry& geo) {
    BoundaryField nd = normal_derivative(u, geo);
    const double scale = 1.0 + max_abs(u.values);
    // Loose tripwire: admissible fields carry O(h^2..h^3) one-sided leakage,
    // blatantly non-Neumann data carries O(1).
    return max_abs(nd.values) > 0.05 * scale;
}

}  // namespace

EnergyBreakdown energy_qf(const ScalarField& u, const ScalarField& f_profile,
                          const BackgroundGeometry& geo) {
    require_same_grid(u.grid, geo.grid(), "energy_qf");
    require_same_grid(f_profile.grid, geo.grid(), "energy_qf");
    for (double f : f_profile.values)
        if (!(f > 0.0)) throw std::invalid_argument("energy_qf: F must be positive");

    EnergyBreakdown e;
    e.quadratic = p43_bilinear(u, u, geo);
    e.linear = linear_term(u, geo);
    e.coefficient = geo.background_kappa();

    const auto& w = geo.quad_volume_weight();
    std::vector<double> e4u = conformal_weight(u.values, 4.0);
    double integral = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) integral += f_profile.values[i] * e4u[i] * w[i];
    e.log_term = std::log(integral);
    e.total = e.quadratic + e.linear - e.coefficient * e.log_term;
    e.bc_warning = normal_derivative_suspicious(u, geo);
    return e;
}

EnergyBreakdown energy_ts(const ScalarField& u, const BoundaryField& s_profile,
                          const BackgroundGeometry& geo) {
    require_same_grid(u.grid, geo.grid(), "energy_ts");
    require_same_grid(s_profile.grid, geo.grid(), "energy_ts");
    if (s_profile.face != Face::both)
        throw std::invalid_argument("energy_ts: S must cover both faces");
    for (double s : s_profile.values)
        if (!(s > 0.0)) throw std::invalid_argument("energy_ts: S must be positive");

    EnergyBreakdown e;
    e.quadratic = p43_bilinear(u, u, geo);
    e.linear = linear_term(u, geo);
    e.coefficient = (4.0 / 3.0) * geo.background_kappa();

    const auto& aw = geo.quad_area_weight();
    BoundaryField tr = boundary_trace(u);
    std::vector<double> e3u = conformal_weight(tr.values, 3.0);
    double integral = 0.0;
    for (std::size_t i = 0; i < aw.size(); ++i)
        integral += s_profile.values[i] * e3u[i] * aw[i];
    e.log_term = std::log(integral);
    e.total = e.quadratic + e.linear - e.coefficient * e.log_term;
    e.bc_warning = normal_derivative_suspicious(u, geo);
    return e;
}

double mt_ratio(const ScalarField& u, const BackgroundGeometry& geo, double alpha) {
    require_same_grid(u.grid, geo.grid(), "mt_ratio");
    const double quad = p43_bilinear(u, u, geo);
    if (!(quad > 0.0))
        throw std::invalid_argument("mt_ratio: <P^{4,3}u,u> must be positive (u nonconstant)");

    const auto& w = geo.quad_volume_weight();
    double vol0 = 0.0, mean = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        vol0 += w[i];
        mean += u.values[i] * w[i];
    }
    mean /= vol0;

    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double d = u.values[i] - mean;
        s += std::exp(alpha * d * d / quad) * w[i];
    }
    return s;
}

double trace_mt_ratio(const ScalarField& u, const BackgroundGeometry& geo, double alpha) {
    require_same_grid(u.grid, geo.grid(), "trace_mt_ratio");
    const double quad = p43_bilinear(u, u, geo);
    if (!(quad > 0.0))
        throw std::invalid_argument("trace_mt_ratio: <P^{4,3}u,u> must be positive");

    const auto& aw = geo.quad_area_weight();
    BoundaryField tr = boundary_trace(u);
    double area0 = 0.0, mean = 0.0;
    for (std::size_t i = 0; i < aw.size(); ++i) {
        area0 += aw[i];
        mean += tr.values[i] * aw[i];
    }
    mean /= area0;

    double s = 0.0;
    for (std::size_t i = 0; i < aw.size(); ++i) {
        const double d = tr.values[i] - mean;
        s += std::exp(alpha * d * d / quad) * aw[i];
    }
    return s;
}

}  // namespace qtflow
