#pragma once

#include <stdexcept>

#include "qtflow/operators.hpp"

namespace qtflow {

// Thrown when a conformal factor exceeds the double-exponential range
// (4 max|u| > 700); the flows report this as divergence, not a crash.
struct ConformalOverflow : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConformalCurvatures {
    ScalarField q;
    BoundaryField t;
    BoundaryField h;
    double volume = 0.0;
    double boundary_area = 0.0;
};

// Q of g_u = e^{2u} g0:  Q = 1/2 e^{-4u} (P4 u + 2 Q0), with both boundary
// conditions enforced in P4.
ScalarField q_curvature(const ScalarField& u, const BackgroundGeometry& geo);

// T of g_u:  T = e^{-3u|bdry} (P3 u + T0).
BoundaryField t_curvature(const ScalarField& u, const BackgroundGeometry& geo);

// H of g_u:  H = e^{-u|bdry} (du/dn + H0), outward normal.
BoundaryField mean_curvature(const ScalarField& u, const BackgroundGeometry& geo);

ConformalCurvatures conformal_curvatures(const ScalarField& u, const BackgroundGeometry& geo);

// Means with respect to the evolving measure: Q-bar and F-bar against
// e^{4u} dV0, T-bar and S-bar against e^{3u} dS0.
struct EvolvingMeans {
    double q_bar = 0.0;
    double f_bar = 0.0;
    double t_bar = 0.0;
    double s_bar = 0.0;
    double volume = 0.0;
    double area = 0.0;
};

EvolvingMeans evolving_means(const ScalarField& u, const BackgroundGeometry& geo,
                             const ScalarField& f_profile, const BoundaryField& s_profile);

struct KappaInvariants {
    double p4 = 0.0;
    double p3 = 0.0;
    double total = 0.0;
};

// kappa_{P4} = int Q dV_g,  kappa_{P3} = int T dS_g,  kappa = sum.
// Conformally invariant up to discretization error.
KappaInvariants kappa_invariants(const ScalarField& u, const BackgroundGeometry& geo);

// e^{c u} guarded against overflow; used by everything above.
std::vector<double> conformal_weight(const std::vector<double>& u, double exponent);

}  // namespace qtflow
