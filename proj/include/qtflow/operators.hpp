#pragma once

#include <functional>
#include <string>

#include "qtflow/background.hpp"

namespace qtflow {

// Boundary conditions enforced by ghost-cell reflection.  The flow modules
// always set both flags: neumann_zero reflects u across the faces, p3_zero
// reflects the intermediate Laplacian (on a flat background the condition
// P3 u = 0 reduces to an even reflection of Delta u).
struct BoundaryConditionSet {
    bool neumann_zero = false;
    bool p3_zero = false;

    static BoundaryConditionSet none() { return {}; }
    static BoundaryConditionSet both() { return {true, true}; }
};

// Discrete Laplacian: 9-point second-order stencil, periodic wrap in x1..x3.
// At the x4 faces, ghost values come from even reflection when
// bc.neumann_zero is set, otherwise a one-sided second-order formula is used.
ScalarField laplacian(const ScalarField& u, const BackgroundGeometry& geo,
                      BoundaryConditionSet bc);

// 7-point periodic Laplacian of the induced metric on each boundary 3-torus.
BoundaryField boundary_laplacian(const BoundaryField& v, const BackgroundGeometry& geo);

// Outward normal derivative on both faces, one-sided second-order:
// at x4=1 (3u_N - 4u_{N-1} + u_{N-2})/(2 h4), mirrored with opposite sign
// at x4=0.
BoundaryField normal_derivative(const ScalarField& u, const BackgroundGeometry& geo);

// Paneitz operator P4 u = Delta^2 u + div((2/3 R g - 2 Ric) du).  On a flat
// background this is exactly laplacian(laplacian(u)) with the ghost rules
// selected by bc; on synthetic backgrounds the divergence term is added in
// flux form (diagonal part) plus 4-point corner stencils (cross terms).
ScalarField paneitz_p4(const ScalarField& u, const BackgroundGeometry& geo,
                       BoundaryConditionSet bc);

// Chang-Qing boundary operator
//   P3 u = 1/2 d(Delta u)/dnu + Delta_hat(du/dnu) - 4/3 H Delta_hat u
//          + L_ab grad_hat_a grad_hat_b u + 2/3 grad_hat H . grad_hat u
//          + (F - R/3) du/dnu,
// with nu the inward normal.  The inward orientation is forced by the
// dissipativity of the boundary flow and the sign of the P^{4,3} pairing;
// see the T-flow module.  No boundary condition is enforced here: the
// interior Laplacian uses one-sided differences at the faces.
BoundaryField chang_qing_p3(const ScalarField& u, const BackgroundGeometry& geo);

// The P^{4,3} bilinear form
//   B(u,v) = int Du Dv dV + 2/3 int R grad u . grad v dV
//            - 2 int Ric(grad u, grad v) dV - 2 int_bdry L(grad^ u, grad^ v) dS,
// discretized with the reflected Laplacian and reflected centered gradients
// (the admissible space carries du/dn = 0).  Symmetric by construction.
double p43_bilinear(const ScalarField& u, const ScalarField& v,
                    const BackgroundGeometry& geo);

// Matrix-free linear operator.
struct LinearOperator {
    std::function<ScalarField(const ScalarField&)> apply;
    std::string domain;
};

// Self-adjoint nonnegative realization of P^{4,3} on BC-constrained fields:
// <op(u), v>_{L2(dV0)} agrees with p43_bilinear(u, v) for BC-satisfying
// pairs.  Flat: laplacian o laplacian with both reflections.  Synthetic: the
// Galerkin operator of the bilinear form in the dV0 inner product.
LinearOperator p43_operator(const BackgroundGeometry& geo, BoundaryConditionSet bc);

// Exact discrete eigenvalues of the 1D stencils, used by tests and by the
// modal preconditioners: periodic lambda_k = (2/h^2)(1 - cos(2 pi k h / L)),
// reflected mu_m = (2/h^2)(1 - cos(pi m h)).
double periodic_mode_eigenvalue(int k, int n, double h, double L);
double reflected_mode_eigenvalue(int m, int n4, double h4);

}  // namespace qtflow
