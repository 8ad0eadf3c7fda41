#include <cmath>

#include "doctest.h"
#include "qtflow/functionals.hpp"
#include "qtflow/qflow.hpp"
#include "qtflow/rng.hpp"

using namespace qtflow;

namespace {

ScalarField bc_mode(const Grid& g, int k, int m, double amp) {
    return ScalarField::sample(g, [&](double x1, double, double, double x4) {
        return amp * std::cos(2.0 * M_PI * k * x1 / g.L1) * std::cos(M_PI * m * x4);
    });
}

}  // namespace

TEST_CASE("energy_qf: flat trivial values and the eigenmode quadratic term") {
    Grid g = build_grid(8, 8, 8, 9, 1, 1, 1);
    BackgroundGeometry geo = flat_background(g);
    ScalarField one(g, 1.0);

    EnergyBreakdown e0 = energy_qf(ScalarField(g), one, geo);
    CHECK(e0.quadratic == 0.0);
    CHECK(e0.linear == 0.0);
    CHECK(e0.coefficient == 0.0);
    CHECK(e0.total == 0.0);
    CHECK_FALSE(e0.bc_warning);

    EnergyBreakdown ec = energy_qf(ScalarField(g, 0.4), one, geo);
    CHECK(ec.total == doctest::Approx(0.0).epsilon(1e-14));

    const double eps = 0.01;
    ScalarField u = bc_mode(g, 1, 1, eps);
    const double lam = periodic_mode_eigenvalue(1, g.n1, g.h1, g.L1);
    const double mu = reflected_mode_eigenvalue(1, g.n4, g.h4);
    const double km = (lam + mu) * (lam + mu);
    // |mode|^2 in the dV0 norm is Vol/4 for k,m >= 1
    EnergyBreakdown em = energy_qf(u, one, geo);
    CHECK(em.quadratic == doctest::Approx(eps * eps * km * 0.25).epsilon(1e-11));
    CHECK(em.total == doctest::Approx(em.quadratic).epsilon(1e-12));

    ScalarField bad(g, 0.0);
    CHECK_THROWS_AS(energy_qf(u, bad, geo), std::invalid_argument);
}

TEST_CASE("energy_qf is invariant under constant shifts when kappa = 0") {
    Grid g = build_grid(6, 5, 4, 6, 1, 1, 1);
    BackgroundGeometry geo = flat_background(g);
    ScalarField one(g, 1.0);
    ScalarField u = bc_mode(g, 1, 1, 0.05);
    EnergyBreakdown e1 = energy_qf(u, one, geo);
    for (auto& x : u.values) x += 0.77;
    EnergyBreakdown e2 = energy_qf(u, one, geo);
    CHECK(e2.total == doctest::Approx(e1.total).epsilon(1e-12));
}

TEST_CASE("energy_qf flags blatantly non-Neumann data") {
    Grid g = build_grid(5, 4, 4, 6, 1, 1, 1);
    BackgroundGeometry geo = flat_background(g);
    ScalarField linear = ScalarField::sample(g, [](double, double, double, double x4) {
        return x4;
    });
    EnergyBreakdown e = energy_qf(linear, ScalarField(g, 1.0), geo);
    CHECK(e.bc_warning);
}

TEST_CASE("energy_ts: trivial values and the synthetic closed form on constants") {
    Grid g = build_grid(6, 5, 4, 6, 1, 1, 1);
    BackgroundGeometry flat = flat_background(g);
    BoundaryField sone(g, Face::both, 1.0);

    CHECK(energy_ts(ScalarField(g), sone, flat).total == 0.0);
    CHECK(energy_ts(ScalarField(g, 0.3), sone, flat).total ==
          doctest::Approx(0.0).epsilon(1e-13));

    // constant Q0 = q: kappa = q Vol0; u = c constant, S = 1:
    // total = 4 c kappa_P4 - 4/3 kappa (3c + log area0)
    const double q0 = 0.8, c = 0.21;
    SyntheticFields f = SyntheticFields::zeros(g);
    f.q0 = ScalarField(g, q0);
    BackgroundGeometry syn = synthetic_background(g, f);
    const double vol0 = 1.0, area0 = 2.0;
    const double kappa = q0 * vol0;
    EnergyBreakdown e = energy_ts(ScalarField(g, c), sone, syn);
    const double expect = 4.0 * c * kappa - (4.0 / 3.0) * kappa * (3.0 * c + std::log(area0));
    CHECK(e.total == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("energy_qf directional derivative matches the curvature pairing") {
    Grid g = build_grid(6, 6, 6, 7, 1, 1, 1);
    BackgroundGeometry geo = flat_background(g);
    ScalarField f_profile = ScalarField::sample(g, [](double x1, double, double, double) {
        return 1.0 + 0.3 * std::cos(2.0 * M_PI * x1);
    });
    ScalarField u = bc_mode(g, 1, 1, 0.08);
    ScalarField phi = bc_mode(g, 2, 2, 1.0);

    // analytic: 4 int (Q - (Qbar/Fbar) F) phi dV_g
    ScalarField q = q_curvature(u, geo);
    std::vector<double> e4u = conformal_weight(u.values, 4.0);
    const auto& w = geo.quad_volume_weight();
    double vol = 0.0, qint = 0.0, fint = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double m = e4u[i] * w[i];
        vol += m;
        qint += q.values[i] * m;
        fint += f_profile.values[i] * m;
    }
    const double ratio = (qint / vol) / (fint / vol);
    double analytic = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i)
        analytic += 4.0 * (q.values[i] - ratio * f_profile.values[i]) * phi.values[i] *
                    e4u[i] * w[i];

    const double eps = 1e-5;
    ScalarField up = u, um = u;
    for (std::size_t i = 0; i < u.values.size(); ++i) {
        up.values[i] += eps * phi.values[i];
        um.values[i] -= eps * phi.values[i];
    }
    const double fd = (energy_qf(up, f_profile, geo).total -
                       energy_qf(um, f_profile, geo).total) / (2.0 * eps);
    CHECK(fd == doctest::Approx(analytic).epsilon(1e-6));
}

TEST_CASE("mt_ratio: alpha = 0 value, monotonicity, constant rejection") {
    Grid g = build_grid(6, 5, 4, 6, 1, 1, 1);
    BackgroundGeometry geo = flat_background(g);
    ScalarField u = bc_mode(g, 1, 1, 0.3);

    const double vol0 = 1.0;
    CHECK(mt_ratio(u, geo, 0.0) == doctest::Approx(vol0).epsilon(1e-13));
    const double r1 = mt_ratio(u, geo, 10.0);
    const double r2 = mt_ratio(u, geo, 20.0);
    CHECK(r1 >= vol0);
    CHECK(r2 >= r1);

    CHECK_THROWS_AS(mt_ratio(ScalarField(g, 1.0), geo, 1.0), std::invalid_argument);
}

TEST_CASE("trace_mt_ratio: area at alpha = 0 and monotonicity") {
    Grid g = build_grid(6, 5, 4, 6, 1, 1, 1);
    BackgroundGeometry geo = flat_background(g);
    ScalarField u = bc_mode(g, 1, 0, 0.3);
    const double area0 = 2.0;
    CHECK(trace_mt_ratio(u, geo, 0.0) == doctest::Approx(area0).epsilon(1e-13));
    CHECK(trace_mt_ratio(u, geo, 5.0) >= area0);
    CHECK(trace_mt_ratio(u, geo, 10.0) >= trace_mt_ratio(u, geo, 5.0));
    CHECK_THROWS_AS(trace_mt_ratio(ScalarField(g, -2.0), geo, 1.0), std::invalid_argument);
}
