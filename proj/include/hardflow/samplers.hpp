#pragma once

#include "hardflow/common.hpp"
#include "hardflow/constraints.hpp"
#include "hardflow/scheduler.hpp"
#include "hardflow/step_solver.hpp"
#include "hardflow/velocity.hpp"

#include <optional>
#include <string>
#include <vector>

namespace hardflow {

enum class SamplerMethod {
    Nominal,
    HardFlow,
    Posthoc,
    ProjectionAll,
    ProjectionLate,
    ProjectionRelaxed,
    GradientGuidance,
};

std::string sampler_method_name(SamplerMethod m);
SamplerMethod parse_sampler_method(const std::string& name);
std::vector<std::string> sampler_method_names();

struct SamplerConfig {
    TimeGrid grid = TimeGrid::uniform(50);
    double lambda_oc = 1.0;
    SamplerMethod method = SamplerMethod::HardFlow;
    /// Subproblems (and late projections) run only for steps i >= activation * N.
    double activation = 0.5;
    SolverConfig solver;
    /// Seed each step's solver with the previous step's solution.
    bool warm_start = true;
    /// Projection-relaxed: augmented Lagrangian outer iterations per step.
    int relaxed_iterations = 2;
    /// Gradient guidance: x_{i+1} = xbar_{i+1} - eta dt grad, with constraint penalty weight.
    double guidance_step = 0.1;
    double guidance_penalty = 100.0;
    /// Keep per-step states and solver records; off for large batches.
    bool record_trajectory = true;

    void validate() const;
};

/// One subproblem solved at step i (HardFlow) or one projection (baselines).
struct StepRecord {
    int step = 0;
    /// Euler prediction x̄_{i+1}.
    Vec predicted;
    /// Posterior-mean anchor x̄_N (HardFlow only; empty otherwise).
    Vec anchor;
    /// Posterior noise estimate at x̄_{i+1} (HardFlow only).
    Vec noise;
    SolverResult solver;
};

struct SampleRun {
    SamplerMethod method = SamplerMethod::Nominal;
    Vec x0;
    /// x_0 .. x_N when recorded, else {x_0, x_N}.
    std::vector<Vec> states;
    /// Controls u_i = (x_{i+1} - x̄_{i+1}) / dt_i, always N entries.
    std::vector<Vec> controls;
    std::vector<StepRecord> steps;
    FeasibilityReport terminal_report;
    double cost = 0.0;
    /// C(x_N) + lambda_oc * sum_i 0.5 ||u_i||^2 dt_i
    double objective = 0.0;
    /// Steps whose solver did not converge (the final step is never among them for HardFlow).
    int unconverged_steps = 0;
    /// False when the last projection / subproblem did not converge.
    bool final_converged = true;
    double wall_time = 0.0;

    const Vec& terminal() const { return states.back(); }
};

SampleRun sample_nominal(const VelocityField& field, const Scheduler& sched, const TimeGrid& grid, const Vec& x0,
                         bool record_trajectory = true);

/// Receding-horizon sampler. Throws SolverFailure when the final-step subproblem does not converge.
SampleRun sample_hardflow(const VelocityField& field, const Scheduler& sched, const Vec& x0, const CostFn& cost,
                          const ConstraintSet& constraints, const SamplerConfig& cfg);

/// Nominal run followed by one projection of the terminal point.
SampleRun sample_posthoc(const VelocityField& field, const Scheduler& sched, const Vec& x0,
                         const ConstraintSet& constraints, const SamplerConfig& cfg);

/// Euler step then projection at every step (late: steps i >= N / 2).
SampleRun sample_projection_all(const VelocityField& field, const Scheduler& sched, const Vec& x0,
                                const ConstraintSet& constraints, const SamplerConfig& cfg);
SampleRun sample_projection_late(const VelocityField& field, const Scheduler& sched, const Vec& x0,
                                 const ConstraintSet& constraints, const SamplerConfig& cfg);

/// Euler step then `relaxed_iterations` augmented Lagrangian outer iterations; the
/// multiplier and penalty state carries over between steps.
SampleRun sample_projection_relaxed(const VelocityField& field, const Scheduler& sched, const Vec& x0,
                                    const ConstraintSet& constraints, const SamplerConfig& cfg);

/// Euler step minus eta * grad_x Ĉ(M_{t_i}(x)) at x_i, with Ĉ = C + penalty * sum max(0, h)^2.
/// Requires the field's input VJP.
SampleRun sample_gradient_guidance(const VelocityField& field, const Scheduler& sched, const Vec& x0,
                                   const CostFn& cost, const ConstraintSet& constraints, const SamplerConfig& cfg);

/// The guidance direction grad_x Ĉ(M_t(x)).
Vec guidance_gradient(const VelocityField& field, const Scheduler& sched, double t, const Vec& x, const CostFn& cost,
                      const ConstraintSet& constraints, double penalty);

/// Dispatches on cfg.method.
SampleRun sample(const VelocityField& field, const Scheduler& sched, const Vec& x0, const CostFn& cost,
                 const ConstraintSet& constraints, const SamplerConfig& cfg);

/// Outcome of one sample inside a batch.
struct BatchItem {
    std::optional<SampleRun> run;
    /// Set when the sampler threw (e.g. SolverFailure).
    std::string error;
};

/// Runs `sample` for every x0 on up to `threads` workers (0 = hardware concurrency).
/// Results are indexed like `x0s`, independent of scheduling.
std::vector<BatchItem> sample_batch(const VelocityField& field, const Scheduler& sched, const std::vector<Vec>& x0s,
                                    const CostFn& cost, const ConstraintSet& constraints, const SamplerConfig& cfg,
                                    int threads = 0);

/// C(x_N) + lambda_oc * sum_i 0.5 ||u_i||^2 dt_i
double control_objective(const CostFn& cost, const Vec& terminal, const std::vector<Vec>& controls,
                         const TimeGrid& grid, double lambda_oc);

} // namespace hardflow
