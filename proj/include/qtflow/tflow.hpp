#pragma once

#include "qtflow/qflow.hpp"

namespace qtflow {

// Biharmonic extension of boundary data (Q stays zero in the interior):
//   P4 w = 0 in M,  w = v on both faces,  dw/dn = 0.
// Requires a flat background or a synthetic one with Q0 == 0.
std::pair<ScalarField, SolveReport> extend(const BoundaryField& v,
                                           const BackgroundGeometry& geo, double tol,
                                           const ScalarField* warm_start = nullptr);

// The boundary realization of P3 on extensions, defined through the discrete
// P^{4,3} identity: for fields w with P4 w = 0 at interior points,
//   B(w, phi) = sum_bdry a * (P3_bdry w) * phi,   P3_bdry w = qw/(2 a) * (P4 w)|_bdry
// with qw the trapezoid volume weight of the face points.  This is the
// operator whose symmetry and sign the boundary flow relies on; it agrees
// with chang_qing_p3 on extensions up to discretization error.
BoundaryField boundary_p3_of_extension(const ScalarField& w, const BackgroundGeometry& geo);

// A v = -e^{-3 u_current} P3(extension of v); symmetric negative-semidefinite
// in the dS0 inner product at u_current = 0.
BoundaryField operator_A(const BoundaryField& v, const BoundaryField& u_current,
                         const BackgroundGeometry& geo, double tol = 1e-11);

struct BoundaryFlowState {
    BoundaryField v;       // boundary trace of the conformal factor
    ScalarField w;         // cached extension of v
    double extension_residual = 0.0;
    double t = 0.0;
    double dt = 0.0;
    long step_index = 0;
    double energy = 0.0;
    DiagnosticsRecord diagnostics;
};

// dv/dt = -(e^{-3v}(P3 v + T0) - (Tbar/Sbar) S), with P3 evaluated through
// the cached extension.
BoundaryField tflow_rhs(const BoundaryFlowState& state, const BackgroundGeometry& geo,
                        const BoundaryField& s_profile);

class TFlowWorkspace {
public:
    TFlowWorkspace(const BackgroundGeometry& geo, const BoundaryField& s_profile,
                   const StepControls& controls);

    const BackgroundGeometry& geo() const { return *geo_; }
    const BoundaryField& s_profile() const { return s_; }
    const StepControls& controls() const { return controls_; }

    // K v = P3(extend(v)) as an l2-symmetric positive-semidefinite matrix
    // action (one extension solve per application).
    void apply_stiffness(const std::vector<double>& v, std::vector<double>& kv,
                         ScalarField* extension_scratch = nullptr) const;

    // Modal 2x2 preconditioner for (M3 + dt K); flat backgrounds only.
    VecApply make_preconditioner(const std::vector<double>& mass_diag, double dt) const;

private:
    void build_modal_tables();

    const BackgroundGeometry* geo_;
    BoundaryField s_;
    StepControls controls_;
    // per tangential mode: 2x2 stiffness in the modal basis
    std::vector<std::array<double, 3>> khat_;  // (k00, k01, k11)
    std::array<AxisBasis, 3> tangential_;
    mutable ScalarField extension_cache_;
};

StepOutcome tflow_step(BoundaryFlowState& state, TFlowWorkspace& ws);

struct TFlowSetup {
    const BackgroundGeometry* geo = nullptr;
    BoundaryField initial_v;    // face = both
    BoundaryField s_profile;    // positive, face = both
    StepControls controls;
    bool check_hypotheses = true;
    CsvSink* sink = nullptr;
    SnapshotHook snapshot_hook;  // receives a FlowState carrying the extension
    long snapshot_every = 0;
};

struct TRunResult {
    RunStatus status = RunStatus::budget_exhausted;
    BoundaryFlowState final_state;
    std::vector<DiagnosticsRecord> records;
    double initial_area = 0.0;
    double final_x = 0.0;
    std::string message;
};

TRunResult run_tflow(const TFlowSetup& setup);

// x_T(t) = int (T - (Tbar/Sbar) S)^2 dS_g for the current state.
double tflow_x(const BoundaryFlowState& state, const BackgroundGeometry& geo,
               const BoundaryField& s_profile);

}  // namespace qtflow
