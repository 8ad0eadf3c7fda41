#include "qtflow/background.hpp"

#include <cmath>
#include <stdexcept>

namespace qtflow {

SyntheticFields SyntheticFields::zeros(const Grid& g) {
    SyntheticFields f;
    f.scalar_curvature = ScalarField(g);
    for (auto& r : f.ricci) r = ScalarField(g);
    f.q0 = ScalarField(g);
    f.h0 = BoundaryField(g, Face::both);
    f.t0 = BoundaryField(g, Face::both);
    for (auto& l : f.second_form) l = BoundaryField(g, Face::both);
    f.f_curv = BoundaryField(g, Face::both);
    f.volume_weight = ScalarField(g, g.h1 * g.h2 * g.h3 * g.h4);
    f.area_weight = BoundaryField(g, Face::both, g.h1 * g.h2 * g.h3);
    return f;
}

void BackgroundGeometry::finalize() {
    // Quadrature weights: stored density times the x4 trapezoid factor.
    quad_vol_ = volume_weight_.values;
    const Grid& g = grid_;
    for (int i1 = 0; i1 < g.n1; ++i1)
        for (int i2 = 0; i2 < g.n2; ++i2)
            for (int i3 = 0; i3 < g.n3; ++i3) {
                quad_vol_[g.index(i1, i2, i3, 0)] *= 0.5;
                quad_vol_[g.index(i1, i2, i3, g.n4 - 1)] *= 0.5;
            }
    // kappa of the background: u = 0 makes Q = Q0 and T = T0 exactly.
    double k = 0.0;
    for (std::size_t i = 0; i < quad_vol_.size(); ++i) k += q0_.values[i] * quad_vol_[i];
    for (std::size_t i = 0; i < t0_.values.size(); ++i)
        k += t0_.values[i] * area_weight_.values[i];
    kappa0_ = k;
}

BackgroundGeometry BackgroundGeometry::flat(const Grid& grid) {
    BackgroundGeometry geo;
    geo.grid_ = grid;
    geo.kind_ = BackgroundKind::flat;
    SyntheticFields z = SyntheticFields::zeros(grid);
    geo.r_ = std::move(z.scalar_curvature);
    for (int i = 0; i < 16; ++i) geo.ric_[i] = std::move(z.ricci[i]);
    geo.q0_ = std::move(z.q0);
    geo.h0_ = std::move(z.h0);
    geo.t0_ = std::move(z.t0);
    for (int i = 0; i < 9; ++i) geo.l_[i] = std::move(z.second_form[i]);
    geo.f_curv_ = std::move(z.f_curv);
    geo.volume_weight_ = std::move(z.volume_weight);
    geo.area_weight_ = std::move(z.area_weight);
    geo.finalize();
    return geo;
}

BackgroundGeometry BackgroundGeometry::synthetic(const Grid& grid, const SyntheticFields& f) {
    auto check_grid = [&](const Grid& g, const char* name) {
        if (!(g == grid))
            throw std::invalid_argument(std::string("synthetic field on wrong grid: ") + name);
    };
    check_grid(f.scalar_curvature.grid, "R");
    check_grid(f.q0.grid, "Q0");
    check_grid(f.volume_weight.grid, "volume_weight");
    for (const auto& r : f.ricci) check_grid(r.grid, "Ric");
    for (const auto& l : f.second_form) check_grid(l.grid, "L");

    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) {
            const auto& a = f.ricci[i * 4 + j].values;
            const auto& b = f.ricci[j * 4 + i].values;
            if (a != b)
                throw std::invalid_argument("synthetic Ric is not symmetric (components " +
                                            std::to_string(i) + "," + std::to_string(j) + ")");
        }
    for (int a = 0; a < 3; ++a)
        for (int b = a + 1; b < 3; ++b)
            if (f.second_form[a * 3 + b].values != f.second_form[b * 3 + a].values)
                throw std::invalid_argument("synthetic L is not symmetric (components " +
                                            std::to_string(a) + "," + std::to_string(b) + ")");

    for (double w : f.volume_weight.values)
        if (!(w > 0.0)) throw std::invalid_argument("synthetic volume_weight must be positive");
    for (double w : f.area_weight.values)
        if (!(w > 0.0)) throw std::invalid_argument("synthetic area_weight must be positive");

    auto finite = [](const std::vector<double>& v, const char* name) {
        if (!all_finite(v))
            throw std::invalid_argument(std::string("synthetic field not finite: ") + name);
    };
    finite(f.scalar_curvature.values, "R");
    finite(f.q0.values, "Q0");
    finite(f.h0.values, "H0");
    finite(f.t0.values, "T0");
    finite(f.f_curv.values, "F_curv");

    BackgroundGeometry geo;
    geo.grid_ = grid;
    geo.kind_ = BackgroundKind::synthetic;
    geo.r_ = f.scalar_curvature;
    for (int i = 0; i < 16; ++i) geo.ric_[i] = f.ricci[i];
    geo.q0_ = f.q0;
    geo.h0_ = f.h0;
    geo.t0_ = f.t0;
    for (int i = 0; i < 9; ++i) geo.l_[i] = f.second_form[i];
    geo.f_curv_ = f.f_curv;
    geo.volume_weight_ = f.volume_weight;
    geo.area_weight_ = f.area_weight;
    geo.finalize();
    return geo;
}

BackgroundGeometry flat_background(const Grid& grid) { return BackgroundGeometry::flat(grid); }

BackgroundGeometry synthetic_background(const Grid& grid, const SyntheticFields& fields) {
    return BackgroundGeometry::synthetic(grid, fields);
}

double integrate_volume(const ScalarField& f, const BackgroundGeometry& geo) {
    require_same_grid(f.grid, geo.grid(), "integrate_volume");
    const auto& w = geo.quad_volume_weight();
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += f.values[i] * w[i];
    return s;
}

double integrate_boundary(const BoundaryField& f, const BackgroundGeometry& geo) {
    require_same_grid(f.grid, geo.grid(), "integrate_boundary");
    const auto& aw = geo.area_weight().values;
    const std::size_t fp = geo.grid().face_points();
    double s = 0.0;
    if (f.face == Face::both) {
        for (std::size_t i = 0; i < 2 * fp; ++i) s += f.values[i] * aw[i];
    } else {
        const std::size_t off = f.face == Face::upper ? fp : 0;
        for (std::size_t i = 0; i < fp; ++i) s += f.values[i] * aw[off + i];
    }
    return s;
}

double inner_volume(const ScalarField& a, const ScalarField& b, const BackgroundGeometry& geo) {
    require_same_grid(a.grid, geo.grid(), "inner_volume");
    require_same_grid(b.grid, geo.grid(), "inner_volume");
    const auto& w = geo.quad_volume_weight();
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += a.values[i] * b.values[i] * w[i];
    return s;
}

double l2_norm_volume(const ScalarField& a, const BackgroundGeometry& geo) {
    return std::sqrt(inner_volume(a, a, geo));
}

}  // namespace qtflow
