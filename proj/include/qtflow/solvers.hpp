#pragma once

#include <functional>
#include <vector>

#include "qtflow/operators.hpp"

namespace qtflow {

struct SolveReport {
    int iterations = 0;
    double final_residual = 0.0;  // relative l2 residual
    bool converged = false;
    bool nan_detected = false;
    std::vector<double> residual_history;  // relative l2 residual per iteration
    std::vector<double> energy_history;    // CG quadratic 1/2 x'Ax - b'x per iteration
};

using VecApply = std::function<void(const std::vector<double>&, std::vector<double>&)>;

// Preconditioned conjugate gradient on raw vectors.  `apply` must be
// symmetric positive-definite; `precond`, when given, symmetric positive
// definite as well (defaults to identity).  Aborts immediately when a NaN
// shows up in the iterates.
SolveReport conjugate_gradient_raw(const VecApply& apply, const std::vector<double>& rhs,
                                   std::vector<double>& x, double tol, int max_iter,
                                   const VecApply& precond = nullptr);

// ScalarField-level wrapper over conjugate_gradient_raw for a LinearOperator.
std::pair<ScalarField, SolveReport> conjugate_gradient(const LinearOperator& op,
                                                       const ScalarField& rhs, double tol,
                                                       int max_iter, const ScalarField& guess);

// Jacobi preconditioner from a diagonal vector.
VecApply jacobi_preconditioner(std::vector<double> diagonal);

// Constrained biharmonic extension (the T-flow extension problem):
//   P4 w = 0 in the interior,  w = dirichlet on both faces,  dw/dn = 0
// (reflection).  Boundary values are eliminated into the right-hand side and
// the interior SPD system is solved by CG; on flat backgrounds a modal
// decomposition of the interior operator serves as preconditioner, making the
// solve all but direct.
std::pair<ScalarField, SolveReport> solve_constrained_biharmonic(
    const BoundaryField& dirichlet, const BackgroundGeometry& geo, double tol,
    int max_iter = 2000, const ScalarField* warm_start = nullptr);

// L2(dV0) norm of P4 w over interior points; the extension quality measure.
double interior_p4_residual(const ScalarField& w, const BackgroundGeometry& geo);

// Lanczos estimates of the extreme eigenvalues of an M-self-adjoint operator
// in the dV0 inner product.  Deterministic for a fixed seed.
struct LanczosResult {
    double min_ritz = 0.0;
    double max_ritz = 0.0;
    int iterations = 0;
};
LanczosResult lanczos_extremes(const LinearOperator& op, const BackgroundGeometry& geo,
                               int iterations, unsigned long long seed,
                               bool deflate_constants = false);

}  // namespace qtflow
