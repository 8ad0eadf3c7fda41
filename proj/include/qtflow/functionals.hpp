#pragma once

#include "qtflow/conformal.hpp"

namespace qtflow {

struct EnergyBreakdown {
    double quadratic = 0.0;   // <P^{4,3} u, u>
    double linear = 0.0;      // 4 int Q0 u dV0
    double log_term = 0.0;    // log of the constrained integral
    double coefficient = 0.0; // kappa (Q-flow) or 4/3 kappa (T-flow)
    double total = 0.0;       // quadratic + linear - coefficient * log_term
    bool bc_warning = false;  // normal derivative visibly nonzero
};

// II_{Q,F}(u) = <P^{4,3}u,u> + 4 int Q0 u dV0 - kappa log int F e^{4u} dV0.
// F must be positive.  A warning flag is raised (not an error) when the
// one-sided normal derivative of u is large relative to max|u|.
EnergyBreakdown energy_qf(const ScalarField& u, const ScalarField& f_profile,
                          const BackgroundGeometry& geo);

// II_{T,S}(u) = <P^{4,3}u,u> + 4 int Q0 u dV0
//               - 4/3 kappa log int_bdry S e^{3u} dS0.
// The log term is the boundary integral; the interior variant that appears
// once in the source material is unreachable since S lives on the boundary.
EnergyBreakdown energy_ts(const ScalarField& u, const BoundaryField& s_profile,
                          const BackgroundGeometry& geo);

// Moser-Trudinger diagnostic ratio
//   int exp(alpha (u - u_bar_{g0})^2 / <P^{4,3}u,u>) dV0.
// Reported only; never asserted against the sharp constants.
double mt_ratio(const ScalarField& u, const BackgroundGeometry& geo, double alpha);

// Trace analogue with the boundary mean and dS0.
double trace_mt_ratio(const ScalarField& u, const BackgroundGeometry& geo, double alpha);

}  // namespace qtflow
