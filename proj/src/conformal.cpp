#include "qtflow/conformal.hpp"

#include <cmath>

namespace qtflow {

std::vector<double> conformal_weight(const std::vector<double>& u, double exponent) {
    const double limit = 700.0;
    double m = 0.0;
    for (double x : u) m = std::max(m, std::abs(x));
    if (std::abs(exponent) * m > limit)
        throw ConformalOverflow("conformal factor out of range: " +
                                std::to_string(std::abs(exponent)) + " * max|u| = " +
                                std::to_string(std::abs(exponent) * m) + " > 700");
    std::vector<double> out(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = std::exp(exponent * u[i]);
    return out;
}

ScalarField q_curvature(const ScalarField& u, const BackgroundGeometry& geo) {
    require_same_grid(u.grid, geo.grid(), "q_curvature");
    std::vector<double> em4u = conformal_weight(u.values, -4.0);
    ScalarField p4u = paneitz_p4(u, geo, BoundaryConditionSet::both());
    const auto& q0 = geo.q0().values;
    ScalarField out(geo.grid());
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = 0.5 * em4u[i] * (p4u.values[i] + 2.0 * q0[i]);
    return out;
}

namespace {

std::vector<double> boundary_conformal_weight(const ScalarField& u, double exponent) {
    BoundaryField tr = boundary_trace(u);
    return conformal_weight(tr.values, exponent);
}

}  // namespace

BoundaryField t_curvature(const ScalarField& u, const BackgroundGeometry& geo) {
    require_same_grid(u.grid, geo.grid(), "t_curvature");
    std::vector<double> em3u = boundary_conformal_weight(u, -3.0);
    BoundaryField p3u = chang_qing_p3(u, geo);
    const auto& t0 = geo.t0().values;
    BoundaryField out(geo.grid(), Face::both);
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = em3u[i] * (p3u.values[i] + t0[i]);
    return out;
}

BoundaryField mean_curvature(const ScalarField& u, const BackgroundGeometry& geo) {
    require_same_grid(u.grid, geo.grid(), "mean_curvature");
    std::vector<double> emu = boundary_conformal_weight(u, -1.0);
    BoundaryField nd = normal_derivative(u, geo);
    const auto& h0 = geo.h0().values;
    BoundaryField out(geo.grid(), Face::both);
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = emu[i] * (nd.values[i] + h0[i]);
    return out;
}

ConformalCurvatures conformal_curvatures(const ScalarField& u, const BackgroundGeometry& geo) {
    ConformalCurvatures c;
    c.q = q_curvature(u, geo);
    c.t = t_curvature(u, geo);
    c.h = mean_curvature(u, geo);
    ScalarField e4u(geo.grid());
    e4u.values = conformal_weight(u.values, 4.0);
    c.volume = integrate_volume(e4u, geo);
    BoundaryField e3u(geo.grid(), Face::both);
    e3u.values = boundary_conformal_weight(u, 3.0);
    c.boundary_area = integrate_boundary(e3u, geo);
    return c;
}

EvolvingMeans evolving_means(const ScalarField& u, const BackgroundGeometry& geo,
                             const ScalarField& f_profile, const BoundaryField& s_profile) {
    require_same_grid(u.grid, geo.grid(), "evolving_means");
    for (double f : f_profile.values)
        if (!(f > 0.0)) throw std::invalid_argument("evolving_means: F must be positive");
    for (double s : s_profile.values)
        if (!(s > 0.0)) throw std::invalid_argument("evolving_means: S must be positive");

    EvolvingMeans m;
    const auto& w = geo.quad_volume_weight();
    std::vector<double> e4u = conformal_weight(u.values, 4.0);
    ScalarField q = q_curvature(u, geo);
    double vol = 0.0, q_int = 0.0, f_int = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double dw = e4u[i] * w[i];
        vol += dw;
        q_int += q.values[i] * dw;
        f_int += f_profile.values[i] * dw;
    }
    m.volume = vol;
    m.q_bar = q_int / vol;
    m.f_bar = f_int / vol;

    const auto& aw = geo.quad_area_weight();
    std::vector<double> e3u = boundary_conformal_weight(u, 3.0);
    BoundaryField t = t_curvature(u, geo);
    double area = 0.0, t_int = 0.0, s_int = 0.0;
    for (std::size_t i = 0; i < aw.size(); ++i) {
        const double da = e3u[i] * aw[i];
        area += da;
        t_int += t.values[i] * da;
        s_int += s_profile.values[i] * da;
    }
    m.area = area;
    m.t_bar = t_int / area;
    m.s_bar = s_int / area;
    return m;
}

KappaInvariants kappa_invariants(const ScalarField& u, const BackgroundGeometry& geo) {
    require_same_grid(u.grid, geo.grid(), "kappa_invariants");
    KappaInvariants k;
    const auto& w = geo.quad_volume_weight();
    std::vector<double> e4u = conformal_weight(u.values, 4.0);
    ScalarField q = q_curvature(u, geo);
    for (std::size_t i = 0; i < w.size(); ++i) k.p4 += q.values[i] * e4u[i] * w[i];

    const auto& aw = geo.quad_area_weight();
    std::vector<double> e3u = boundary_conformal_weight(u, 3.0);
    BoundaryField t = t_curvature(u, geo);
    for (std::size_t i = 0; i < aw.size(); ++i) k.p3 += t.values[i] * e3u[i] * aw[i];

    k.total = k.p4 + k.p3;
    return k;
}

}  // namespace qtflow
