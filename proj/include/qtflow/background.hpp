#pragma once

#include <array>
#include <vector>

#include "qtflow/field.hpp"

namespace qtflow {

enum class BackgroundKind { flat, synthetic };

// Full field set for a synthetic (formal) background.  The artifact treats
// the supplied fields as defining the background verbatim; it does not check
// that they arise from an actual metric.  Symmetry of ric and second_form is
// validated, geometric consistency is the caller's responsibility.
struct SyntheticFields {
    ScalarField scalar_curvature;             // R
    std::array<ScalarField, 16> ricci;        // Ric_{ij}, row-major 4x4
    ScalarField q0;                           // Q-curvature of g0
    BoundaryField h0;                         // mean curvature
    BoundaryField t0;                         // T-curvature
    std::array<BoundaryField, 9> second_form; // L_{ab}, row-major 3x3
    BoundaryField f_curv;                     // F = R^a_{nan}, user supplied
    ScalarField volume_weight;                // dV0 density per cell
    BoundaryField area_weight;                // dS0 density per boundary cell

    static SyntheticFields zeros(const Grid& g);
};

// Fixed background geometry data for g0.  All fields live on one grid; the
// flat kind has every curvature field identically zero (totally geodesic
// boundary) and product-measure weights.
class BackgroundGeometry {
public:
    static BackgroundGeometry flat(const Grid& grid);
    static BackgroundGeometry synthetic(const Grid& grid, const SyntheticFields& fields);

    const Grid& grid() const { return grid_; }
    BackgroundKind kind() const { return kind_; }
    bool is_flat() const { return kind_ == BackgroundKind::flat; }

    const ScalarField& scalar_curvature() const { return r_; }
    const ScalarField& ricci(int i, int j) const { return ric_[i * 4 + j]; }
    const ScalarField& q0() const { return q0_; }
    const BoundaryField& h0() const { return h0_; }
    const BoundaryField& t0() const { return t0_; }
    const BoundaryField& second_form(int a, int b) const { return l_[a * 3 + b]; }
    const BoundaryField& f_curv() const { return f_curv_; }
    const ScalarField& volume_weight() const { return volume_weight_; }
    const BoundaryField& area_weight() const { return area_weight_; }

    // Per-point quadrature weights with the x4 trapezoid factor folded in.
    // These are what every integral and inner product below actually uses.
    const std::vector<double>& quad_volume_weight() const { return quad_vol_; }
    const std::vector<double>& quad_area_weight() const { return area_weight_.values; }

    // kappa_{(P4,P3)} of the background itself (u = 0).
    double background_kappa() const { return kappa0_; }

private:
    BackgroundGeometry() = default;
    void finalize();

    Grid grid_;
    BackgroundKind kind_ = BackgroundKind::flat;
    ScalarField r_, q0_, volume_weight_;
    std::array<ScalarField, 16> ric_;
    BoundaryField h0_, t0_, f_curv_, area_weight_;
    std::array<BoundaryField, 9> l_;
    std::vector<double> quad_vol_;
    double kappa0_ = 0.0;
};

BackgroundGeometry flat_background(const Grid& grid);
BackgroundGeometry synthetic_background(const Grid& grid, const SyntheticFields& fields);

// Integral of f against dV_{g0}; trapezoidal in x4, exact periodic sums in
// x1..x3.  Deterministic summation order.
double integrate_volume(const ScalarField& f, const BackgroundGeometry& geo);

// Integral of f against dS_{g0} over the face(s) the field covers.
double integrate_boundary(const BoundaryField& f, const BackgroundGeometry& geo);

// Weighted inner products / norms used throughout the flow modules.
double inner_volume(const ScalarField& a, const ScalarField& b, const BackgroundGeometry& geo);
double l2_norm_volume(const ScalarField& a, const BackgroundGeometry& geo);

}  // namespace qtflow
