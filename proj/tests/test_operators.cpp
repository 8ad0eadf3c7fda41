#include <cmath>

#include "doctest.h"
#include "qtflow/operators.hpp"
#include "qtflow/rng.hpp"
#include "qtflow/solvers.hpp"

using namespace qtflow;

namespace {

// Random superposition over the exact reflected-BC mode dictionary.
ScalarField random_bc_field(const Grid& g, unsigned long long seed, int kmax = 2, int mmax = 2) {
    SplitMix64 rng(seed);
    ScalarField u(g);
    for (int k1 = 0; k1 <= kmax; ++k1)
        for (int k2 = 0; k2 <= kmax; ++k2)
            for (int k3 = 0; k3 <= kmax; ++k3)
                for (int m = 0; m <= mmax; ++m) {
                    const double c = rng.symmetric();
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
    return u;
}

ScalarField separable_mode(const Grid& g, int k, int m) {
    return ScalarField::sample(g, [&](double x1, double, double, double x4) {
        return std::cos(2.0 * M_PI * k * x1 / g.L1) * std::cos(M_PI * m * x4);
    });
}

}  // namespace

TEST_CASE("laplacian: constants, periodic and reflected eigenmodes") {
    Grid g = build_grid(8, 8, 8, 9, 1, 1, 1);
    BackgroundGeometry geo = flat_background(g);

    ScalarField c(g, 3.7);
    CHECK(max_abs(laplacian(c, geo, BoundaryConditionSet::both()).values) == 0.0);
    CHECK(max_abs(laplacian(c, geo, BoundaryConditionSet::none()).values) == 0.0);

    ScalarField mode1 = separable_mode(g, 1, 0);
    const double lam = periodic_mode_eigenvalue(1, g.n1, g.h1, g.L1);
    ScalarField lap1 = laplacian(mode1, geo, BoundaryConditionSet::both());
    for (std::size_t i = 0; i < lap1.values.size(); ++i)
        CHECK(lap1.values[i] == doctest::Approx(-lam * mode1.values[i]).epsilon(1e-11));

    ScalarField mode4 = separable_mode(g, 0, 1);
    const double mu = reflected_mode_eigenvalue(1, g.n4, g.h4);
    ScalarField lap4 = laplacian(mode4, geo, BoundaryConditionSet::both());
    for (std::size_t i = 0; i < lap4.values.size(); ++i)
        CHECK(lap4.values[i] == doctest::Approx(-mu * mode4.values[i]).epsilon(1e-11));
}

TEST_CASE("laplacian is linear") {
    Grid g = build_grid(5, 4, 4, 5, 1, 1, 1);
    BackgroundGeometry geo = flat_background(g);
    SplitMix64 rng(11);
    ScalarField u(g), v(g);
    for (auto& x : u.values) x = rng.symmetric();
    for (auto& x : v.values) x = rng.symmetric();
    const double a = 1.3, b = -0.7;
    ScalarField combo(g);
    for (std::size_t i = 0; i < combo.values.size(); ++i)
        combo.values[i] = a * u.values[i] + b * v.values[i];
    ScalarField l1 = laplacian(combo, geo, BoundaryConditionSet::both());
    ScalarField lu = laplacian(u, geo, BoundaryConditionSet::both());
    ScalarField lv = laplacian(v, geo, BoundaryConditionSet::both());
    for (std::size_t i = 0; i < l1.values.size(); ++i)
        CHECK(l1.values[i] ==
              doctest::Approx(a * lu.values[i] + b * lv.values[i]).epsilon(1e-11));
}

TEST_CASE("boundary_laplacian: constants and face modes") {
    Grid g = build_grid(8, 8, 8, 9, 1, 1, 1);
    BackgroundGeometry geo = flat_background(g);
    BoundaryField c(g, Face::both, 2.0);
    CHECK(max_abs(boundary_laplacian(c, geo).values) == 0.0);

    BoundaryField v = BoundaryField::sample(
        g, Face::both, [](double x1, double, double) { return std::cos(2.0 * M_PI * x1); });
    const double lam = periodic_mode_eigenvalue(1, g.n1, g.h1, g.L1);
    BoundaryField lv = boundary_laplacian(v, geo);
    for (std::size_t i = 0; i < lv.values.size(); ++i)
        CHECK(lv.values[i] == doctest::Approx(-lam * v.values[i]).epsilon(1e-11));
}

TEST_CASE("normal_derivative: one-sided formulas exact on quadratics") {
    Grid g = build_grid(4, 4, 4, 9, 1, 1, 1);
    BackgroundGeometry geo = flat_background(g);

    ScalarField c(g, -5.0);
    CHECK(max_abs(normal_derivative(c, geo).values) == 0.0);

    ScalarField linear = ScalarField::sample(g, [](double, double, double, double x4) {
        return x4;
    });
    BoundaryField nd = normal_derivative(linear, geo);
    CHECK(nd.at(Face::upper, 1, 2, 3) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(nd.at(Face::lower, 1, 2, 3) == doctest::Approx(-1.0).epsilon(1e-12));

    ScalarField quad = ScalarField::sample(g, [](double, double, double, double x4) {
        return x4 * x4;
    });
    BoundaryField ndq = normal_derivative(quad, geo);
    CHECK(ndq.at(Face::upper, 0, 0, 0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(std::abs(ndq.at(Face::lower, 0, 0, 0)) < 1e-12);
}

TEST_CASE("paneitz_p4 flat: kernel and mode eigenvalues") {
    Grid g = build_grid(8, 8, 8, 9, 1, 1, 1);
    BackgroundGeometry geo = flat_background(g);

    ScalarField c(g, 0.9);
    CHECK(max_abs(paneitz_p4(c, geo, BoundaryConditionSet::both()).values) == 0.0);

    ScalarField mode = separable_mode(g, 1, 0);
    const double lam = periodic_mode_eigenvalue(1, g.n1, g.h1, g.L1);
    ScalarField p4 = paneitz_p4(mode, geo, BoundaryConditionSet::both());
    for (std::size_t i = 0; i < p4.values.size(); ++i)
        CHECK(p4.values[i] == doctest::Approx(lam * lam * mode.values[i]).epsilon(1e-10));
}

TEST_CASE("paneitz_p4 flat reduction: equals laplacian of laplacian field-wise") {
    Grid g = build_grid(6, 5, 4, 6, 1, 1, 1);
    BackgroundGeometry geo = flat_background(g);
    ScalarField u = random_bc_field(g, 23);
    ScalarField p4 = paneitz_p4(u, geo, BoundaryConditionSet::both());
    ScalarField ll = laplacian(laplacian(u, geo, BoundaryConditionSet{true, false}), geo,
                               BoundaryConditionSet{true, false});
    for (std::size_t i = 0; i < p4.values.size(); ++i)
        CHECK(p4.values[i] == ll.values[i]);
}

TEST_CASE("paneitz_p4 synthetic: constant R shifts the mode eigenvalue") {
    Grid g = build_grid(8, 4, 4, 5, 1, 1, 1);
    const double r = 1.7;
    SyntheticFields f = SyntheticFields::zeros(g);
    f.scalar_curvature = ScalarField(g, r);
    BackgroundGeometry geo = synthetic_background(g, f);

    ScalarField mode = separable_mode(g, 1, 0);
    const double lam = periodic_mode_eigenvalue(1, g.n1, g.h1, g.L1);
    const double expect = lam * lam - (2.0 / 3.0) * r * lam;
    ScalarField p4 = paneitz_p4(mode, geo, BoundaryConditionSet::both());
    for (std::size_t i = 0; i < p4.values.size(); ++i)
        CHECK(p4.values[i] == doctest::Approx(expect * mode.values[i]).epsilon(1e-9));
}

TEST_CASE("chang_qing_p3: kernel, x4 modes and the cubic probe") {
    Grid g = build_grid(4, 4, 4, 9, 1, 1, 1);
    BackgroundGeometry geo = flat_background(g);

    ScalarField c(g, 4.2);
    CHECK(max_abs(chang_qing_p3(c, geo).values) == 0.0);

    // cos(pi x4): every face value must match the 1D oracle below, a literal
    // transcription of the stencils onto the mode profile.  The tangential
    // term vanishes because the normal derivative is constant on each face.
    ScalarField mode = separable_mode(g, 0, 1);
    const int n4 = g.n4;
    const double h = g.h4;
    std::vector<double> prof(n4), lap1(n4);
    for (int j = 0; j < n4; ++j) prof[j] = std::cos(M_PI * j * h);
    const double ih2 = 1.0 / (h * h);
    for (int j = 1; j < n4 - 1; ++j)
        lap1[j] = (prof[j + 1] - 2.0 * prof[j] + prof[j - 1]) * ih2;
    lap1[0] = (2.0 * (prof[0] - prof[1]) - 3.0 * (prof[1] - prof[2]) + (prof[2] - prof[3])) * ih2;
    lap1[n4 - 1] = (2.0 * (prof[n4 - 1] - prof[n4 - 2]) - 3.0 * (prof[n4 - 2] - prof[n4 - 3]) +
                    (prof[n4 - 3] - prof[n4 - 4])) * ih2;
    // interior-shifted outward derivative of lap1, then the inward flip
    const double out_up = -(5.0 * (lap1[n4 - 3] - lap1[n4 - 2]) +
                            3.0 * (lap1[n4 - 3] - lap1[n4 - 4])) / (2.0 * h);
    const double out_lo = -(5.0 * (lap1[2] - lap1[1]) + 3.0 * (lap1[2] - lap1[3])) / (2.0 * h);
    const double expect_up = 0.5 * (-out_up);
    const double expect_lo = 0.5 * (-out_lo);
    BoundaryField p3 = chang_qing_p3(mode, geo);
    CHECK(p3.at(Face::upper, 1, 2, 3) == doctest::Approx(expect_up).epsilon(1e-12));
    CHECK(p3.at(Face::lower, 3, 0, 1) == doctest::Approx(expect_lo).epsilon(1e-12));
    // the discrete mode satisfies both boundary conditions up to O(h^3)
    const double mu = reflected_mode_eigenvalue(1, g.n4, g.h4);
    CHECK(max_abs(p3.values) < 2.0 * mu * std::pow(M_PI, 4) * h * h * h);

    // u = x4^3: Delta u = 6 x4 exactly; the inward normal derivative of it
    // is -6 at x4=1 and +6 at x4=0, so P3 = -3 resp. +3.
    ScalarField cubic = ScalarField::sample(g, [](double, double, double, double x4) {
        return x4 * x4 * x4;
    });
    BoundaryField p3c = chang_qing_p3(cubic, geo);
    CHECK(p3c.at(Face::upper, 2, 1, 0) == doctest::Approx(-3.0).epsilon(1e-10));
    CHECK(p3c.at(Face::lower, 2, 1, 0) == doctest::Approx(3.0).epsilon(1e-10));
}

TEST_CASE("p43_bilinear: kernel, mode value, symmetry") {
    Grid g = build_grid(8, 8, 8, 9, 1, 1, 1);
    BackgroundGeometry geo = flat_background(g);

    ScalarField c(g, 1.1);
    ScalarField v = random_bc_field(g, 5);
    CHECK(std::abs(p43_bilinear(c, v, geo)) < 1e-12);

    ScalarField mode = separable_mode(g, 1, 0);
    const double lam = periodic_mode_eigenvalue(1, g.n1, g.h1, g.L1);
    CHECK(p43_bilinear(mode, mode, geo) ==
          doctest::Approx(lam * lam * 0.5).epsilon(1e-12));

    ScalarField u = random_bc_field(g, 6);
    const double buv = p43_bilinear(u, v, geo);
    const double bvu = p43_bilinear(v, u, geo);
    CHECK(std::abs(buv - bvu) <= 1e-12 * std::max(1.0, std::abs(buv)));
}

TEST_CASE("p43_operator: requires both flags, kernel, eigenvalue, adjointness") {
    Grid g = build_grid(8, 8, 8, 9, 1, 1, 1);
    BackgroundGeometry geo = flat_background(g);
    CHECK_THROWS_AS(p43_operator(geo, BoundaryConditionSet{true, false}), std::invalid_argument);
    LinearOperator op = p43_operator(geo, BoundaryConditionSet::both());

    ScalarField one(g, 1.0);
    CHECK(max_abs(op.apply(one).values) <= 1e-12);

    ScalarField mode = separable_mode(g, 1, 1);
    const double lam = periodic_mode_eigenvalue(1, g.n1, g.h1, g.L1);
    const double mu = reflected_mode_eigenvalue(1, g.n4, g.h4);
    const double expect = (lam + mu) * (lam + mu);
    ScalarField res = op.apply(mode);
    for (std::size_t i = 0; i < res.values.size(); ++i)
        CHECK(res.values[i] == doctest::Approx(expect * mode.values[i]).epsilon(1e-8));

    ScalarField u = random_bc_field(g, 31);
    ScalarField v = random_bc_field(g, 32);
    const double a1 = inner_volume(op.apply(u), v, geo);
    const double a2 = inner_volume(u, op.apply(v), geo);
    CHECK(std::abs(a1 - a2) <= 1e-10 * l2_norm_volume(u, geo) * l2_norm_volume(v, geo));

    const double b = p43_bilinear(u, v, geo);
    CHECK(std::abs(b - a1) <= 1e-8 * std::abs(b));
}

TEST_CASE("p43_operator nonnegativity and the synthetic Galerkin realization") {
    Grid g = build_grid(6, 6, 6, 7, 1, 1, 1);
    BackgroundGeometry geo = flat_background(g);
    LinearOperator op = p43_operator(geo, BoundaryConditionSet::both());
    LanczosResult lr = lanczos_extremes(op, geo, 40, 99, false);
    CHECK(lr.min_ritz >= -1e-8 * lr.max_ritz);
    LanczosResult lr2 = lanczos_extremes(op, geo, 40, 99, true);
    CHECK(lr2.min_ritz > 0.0);

    SyntheticFields f = SyntheticFields::zeros(g);
    f.scalar_curvature = ScalarField::sample(g, [](double x1, double, double, double) {
        return 0.4 + 0.2 * std::cos(2.0 * M_PI * x1);
    });
    f.ricci[0] = ScalarField(g, 0.1);
    f.ricci[1 * 4 + 2] = ScalarField(g, 0.05);
    f.ricci[2 * 4 + 1] = ScalarField(g, 0.05);
    f.second_form[0] = BoundaryField(g, Face::both, 0.02);
    BackgroundGeometry syn = synthetic_background(g, f);
    LinearOperator sop = p43_operator(syn, BoundaryConditionSet::both());
    ScalarField u = random_bc_field(g, 41);
    ScalarField v = random_bc_field(g, 42);
    const double a1 = inner_volume(sop.apply(u), v, syn);
    const double a2 = inner_volume(u, sop.apply(v), syn);
    CHECK(std::abs(a1 - a2) <= 1e-9 * l2_norm_volume(u, syn) * l2_norm_volume(v, syn));
    const double b = p43_bilinear(u, v, syn);
    CHECK(std::abs(b - a1) <= 1e-8 * std::max(1.0, std::abs(b)));
}

TEST_CASE("operator consistency: mode eigenvalue converges at second order") {
    // two-grid check here; the acceptance suite runs the full three-grid sweep
    double errs[2];
    int idx = 0;
    for (int n : {8, 12}) {
        Grid g = build_grid(n, n, n, n + 1, 1, 1, 1);
        BackgroundGeometry geo = flat_background(g);
        ScalarField mode = separable_mode(g, 1, 1);
        LinearOperator op = p43_operator(geo, BoundaryConditionSet::both());
        ScalarField res = op.apply(mode);
        const double rayleigh = inner_volume(res, mode, geo) / inner_volume(mode, mode, geo);
        const double continuum = std::pow(4.0 * M_PI * M_PI + M_PI * M_PI, 2);
        errs[idx++] = std::abs(rayleigh - continuum);
    }
    const double order = std::log(errs[0] / errs[1]) / std::log(12.0 / 8.0);
    CHECK(order >= 1.8);
}

TEST_CASE("paneitz_p4 synthetic: off-diagonal Ric cross term on a tangential mode") {
    // Ric_12 = c couples the x1 and x2 gradients; on u = cos(2 pi x1) cos(2 pi x2)
    // the two corner-stencil terms add up to -4 c s1 s2 sin sin with the
    // centered first-difference symbols s_a = sin(2 pi h_a / L_a) / h_a.
    Grid g = build_grid(8, 8, 4, 5, 1, 1, 1);
    const double c = 0.6;
    SyntheticFields f = SyntheticFields::zeros(g);
    f.ricci[0 * 4 + 1] = ScalarField(g, c);
    f.ricci[1 * 4 + 0] = ScalarField(g, c);
    BackgroundGeometry geo = synthetic_background(g, f);
    BackgroundGeometry flat = flat_background(g);

    ScalarField u = ScalarField::sample(g, [](double x1, double x2, double, double) {
        return std::cos(2.0 * M_PI * x1) * std::cos(2.0 * M_PI * x2);
    });
    ScalarField p4 = paneitz_p4(u, geo, BoundaryConditionSet::both());
    ScalarField ll = paneitz_p4(u, flat, BoundaryConditionSet::both());
    const double s1 = std::sin(2.0 * M_PI * g.h1) / g.h1;
    const double s2 = std::sin(2.0 * M_PI * g.h2) / g.h2;
    std::size_t idx = 0;
    for (int i1 = 0; i1 < g.n1; ++i1)
        for (int i2 = 0; i2 < g.n2; ++i2)
            for (int i3 = 0; i3 < g.n3; ++i3)
                for (int i4 = 0; i4 < g.n4; ++i4, ++idx) {
                    const double expect =
                        -4.0 * c * s1 * s2 * std::sin(2.0 * M_PI * g.x1(i1)) *
                        std::sin(2.0 * M_PI * g.x2(i2));
                    CHECK(std::abs(p4.values[idx] - ll.values[idx] - expect) <= 1e-9);
                }
}

TEST_CASE("chang_qing_p3 synthetic terms against manufactured fields") {
    Grid g = build_grid(8, 8, 4, 9, 1, 1, 1);
    const double lam = periodic_mode_eigenvalue(1, g.n1, g.h1, g.L1);
    const double s1 = std::sin(2.0 * M_PI * g.h1) / g.h1;

    // tangential trace cos(2 pi x1), independent of x4: the normal-derivative
    // terms vanish identically and only the tangential curvature terms act
    ScalarField u = ScalarField::sample(g, [](double x1, double, double, double) {
        return std::cos(2.0 * M_PI * x1);
    });

    SUBCASE("-(4/3) H Delta_hat u with constant H") {
        const double h0 = 0.7;
        SyntheticFields f = SyntheticFields::zeros(g);
        f.h0 = BoundaryField(g, Face::both, h0);
        BackgroundGeometry geo = synthetic_background(g, f);
        BoundaryField p3 = chang_qing_p3(u, geo);
        for (int i1 = 0; i1 < g.n1; ++i1) {
            const double expect = -(4.0 / 3.0) * h0 * (-lam) * std::cos(2.0 * M_PI * g.x1(i1));
            CHECK(p3.at(Face::upper, i1, 2, 1) == doctest::Approx(expect).epsilon(1e-11));
            CHECK(p3.at(Face::lower, i1, 0, 3) == doctest::Approx(expect).epsilon(1e-11));
        }
    }

    SUBCASE("L_11 second-derivative term with constant L") {
        const double l11 = -0.3;
        SyntheticFields f = SyntheticFields::zeros(g);
        f.second_form[0] = BoundaryField(g, Face::both, l11);
        BackgroundGeometry geo = synthetic_background(g, f);
        BoundaryField p3 = chang_qing_p3(u, geo);
        for (int i1 = 0; i1 < g.n1; ++i1) {
            const double expect = l11 * (-lam) * std::cos(2.0 * M_PI * g.x1(i1));
            CHECK(p3.at(Face::upper, i1, 1, 1) == doctest::Approx(expect).epsilon(1e-11));
        }
    }

    SUBCASE("H terms with cosine H: curvature Laplacian plus gradient coupling") {
        SyntheticFields f = SyntheticFields::zeros(g);
        f.h0 = BoundaryField::sample(g, Face::both, [&](double x1, double, double) {
            return std::cos(2.0 * M_PI * x1 / g.L1);
        });
        BackgroundGeometry geo = synthetic_background(g, f);
        BoundaryField p3 = chang_qing_p3(u, geo);
        for (int i1 = 0; i1 < g.n1; ++i1) {
            // -(4/3) H Delta_hat u and (2/3) grad H . grad u both act; the
            // gradients are centered differences of cosines
            const double x = g.x1(i1);
            const double cosx = std::cos(2.0 * M_PI * x);
            const double sinx = std::sin(2.0 * M_PI * x);
            const double expect = -(4.0 / 3.0) * cosx * (-lam * cosx) +
                                  (2.0 / 3.0) * (s1 * sinx) * (s1 * sinx);
            CHECK(p3.at(Face::upper, i1, 3, 2) == doctest::Approx(expect).epsilon(1e-10));
        }
    }

    SUBCASE("(F - R/3) normal-derivative term with linear u") {
        // u = x4 has inward normal derivative +1 at x4=0 and -1 at x4=1,
        // exactly captured by the one-sided stencil
        ScalarField lin = ScalarField::sample(g, [](double, double, double, double x4) {
            return x4;
        });
        const double fc = 0.9, r = 0.6;
        SyntheticFields f = SyntheticFields::zeros(g);
        f.f_curv = BoundaryField(g, Face::both, fc);
        f.scalar_curvature = ScalarField(g, r);
        BackgroundGeometry geo = synthetic_background(g, f);
        BoundaryField p3 = chang_qing_p3(lin, geo);
        // the 1/2 d(Delta u)/dnu term vanishes (Delta of a linear is zero)
        CHECK(p3.at(Face::lower, 1, 1, 1) == doctest::Approx((fc - r / 3.0) * 1.0).epsilon(1e-10));
        CHECK(p3.at(Face::upper, 1, 1, 1) == doctest::Approx((fc - r / 3.0) * -1.0).epsilon(1e-10));
    }
}

TEST_CASE("anisotropic side lengths: eigenvalues follow the physical spacing") {
    Grid g = build_grid(6, 4, 4, 5, 2.0, 1.0, 1.0);
    BackgroundGeometry geo = flat_background(g);
    CHECK(g.h1 == doctest::Approx(1.0 / 3.0));
    ScalarField mode = ScalarField::sample(g, [&](double x1, double, double, double) {
        return std::cos(2.0 * M_PI * x1 / g.L1);
    });
    const double lam = periodic_mode_eigenvalue(1, g.n1, g.h1, g.L1);
    CHECK(lam == doctest::Approx((2.0 / (g.h1 * g.h1)) * (1.0 - std::cos(M_PI / 3.0))));
    ScalarField lap = laplacian(mode, geo, BoundaryConditionSet::both());
    for (std::size_t i = 0; i < lap.values.size(); ++i)
        CHECK(lap.values[i] == doctest::Approx(-lam * mode.values[i]).epsilon(1e-11));
    // total volume respects the lengths
    CHECK(integrate_volume(ScalarField(g, 1.0), geo) == doctest::Approx(2.0).epsilon(1e-13));
}
