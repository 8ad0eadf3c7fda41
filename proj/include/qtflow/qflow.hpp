#pragma once

#include <functional>
#include <optional>

#include "qtflow/diagnostics.hpp"
#include "qtflow/functionals.hpp"
#include "qtflow/solvers.hpp"
#include "qtflow/spectral.hpp"

namespace qtflow {

enum class RunStatus {
    converged,        // x(t) <= x_tol
    budget_exhausted, // max_steps hit
    diverged,         // conformal overflow
    stuck,            // dt underflow
    solver_failure,
};

const char* run_status_name(RunStatus s);

enum class PrecondKind { spectral, jacobi, none };

struct StepControls {
    double dt0 = 1e-3;
    double dt_min = 1e-12;
    double dt_max = 1e-2;
    double dt_growth = 1.1;
    double x_tol = 1e-8;
    long max_steps = 100000;
    double cg_tol = 1e-9;
    int cg_max_iter = 10000;
    PrecondKind precond = PrecondKind::spectral;
    // Step acceptance: energy may not rise by more than this slack.
    double accept_slack_rel = 1e-10;
};

struct FlowState {
    ScalarField u;
    double t = 0.0;
    double dt = 0.0;
    long step_index = 0;
    double energy = 0.0;
    DiagnosticsRecord diagnostics;
};

// Right-hand side of the interior flow:
//   du/dt = -1/2 (e^{-4u}(P4 u + 2 Q0) - 2 (Qbar/Fbar) F)
//         = -(Q_{g_u} - (Qbar/Fbar) F).
ScalarField qflow_rhs(const ScalarField& u, const BackgroundGeometry& geo,
                      const ScalarField& f_profile);

// Shared per-run context (modal preconditioner etc.).
class QFlowWorkspace {
public:
    QFlowWorkspace(const BackgroundGeometry& geo, const ScalarField& f_profile,
                   const StepControls& controls);

    const BackgroundGeometry& geo() const { return *geo_; }
    const ScalarField& f_profile() const { return f_; }
    const StepControls& controls() const { return controls_; }
    const LinearOperator& p43() const { return op_; }
    ModalTransformPtr modal() const { return modal_; }

private:
    const BackgroundGeometry* geo_;
    ScalarField f_;
    StepControls controls_;
    LinearOperator op_;
    ModalTransformPtr modal_;
};

struct StepOutcome {
    bool accepted = false;
    std::optional<RunStatus> fatal;  // set when the flow cannot continue
    int cg_iterations = 0;
    double cg_residual = 0.0;
    int retries = 0;
};

// One semi-implicit step with energy-acceptance and dt halving.  The linear
// system is (M_n + dt/2 B) delta = dt M_n rhs(u_n) with M_n the evolving
// mass e^{4u} dV0 and B the P^{4,3} form matrix; the update applies delta
// multiplicatively to the conformal volume density, which conserves the
// discrete volume to solver tolerance.
StepOutcome qflow_step(FlowState& state, QFlowWorkspace& ws);

struct RunResult {
    RunStatus status = RunStatus::budget_exhausted;
    FlowState final_state;
    std::vector<DiagnosticsRecord> records;
    double initial_measure = 0.0;
    double final_x = 0.0;
    // largest <P^{4,3}u,u> + ubar^2 seen along the run (boundedness monitor)
    double max_h2_norm = 0.0;
    std::string message;
};

using SnapshotHook = std::function<void(const FlowState&)>;

struct QFlowSetup {
    const BackgroundGeometry* geo = nullptr;
    ScalarField initial_u;   // must satisfy the BCs; default zero
    ScalarField f_profile;   // positive
    StepControls controls;
    bool check_hypotheses = true;
    CsvSink* sink = nullptr;           // optional
    SnapshotHook snapshot_hook;        // optional
    long snapshot_every = 0;
};

// Iterates until x(t) <= x_tol or a terminal condition.  Emits one record
// per accepted step (plus the initial state as step 0).
RunResult run_qflow(const QFlowSetup& setup);

// Cross-check of the Q-curvature evolution law between two consecutive
// accepted states (small dt): finite-difference time derivative of
// w = Q - (Qbar/Fbar) F against
//   4 w Q - 1/2 e^{-4u} P4 w - 4 (Qbar/Fbar) F mean_g[(F/Fbar) w],
// evaluated at the earlier state.  Returns the relative L2(dV_g) residual.
// Requires dt <= 1e-3.
double q_evolution_check(const FlowState& before, const FlowState& after,
                         const BackgroundGeometry& geo, const ScalarField& f_profile);

// x(t) = int (Q - (Qbar/Fbar) F)^2 dV_g.
double qflow_x(const ScalarField& u, const BackgroundGeometry& geo,
               const ScalarField& f_profile);

}  // namespace qtflow
