#pragma once

#include "hardflow/common.hpp"
#include "hardflow/constraints.hpp"
#include "hardflow/optim.hpp"

#include <optional>
#include <string>
#include <vector>

namespace hardflow {

enum class SolverMethod { Auto, ClosedForm, ProjectedGradient, AugmentedLagrangian };

std::string solver_method_name(SolverMethod m);
SolverMethod parse_solver_method(const std::string& name);

struct SolverConfig {
    /// Auto picks the closed form when it applies, else the augmented Lagrangian.
    SolverMethod method = SolverMethod::Auto;
    int max_outer = 2000;
    /// Inner iterations between multiplier/penalty updates.
    int update_period = 8;
    double penalty_init = 100.0;
    double penalty_growth = 10.0;
    /// Outer iterations between penalty-growth checks.
    int penalty_window = 3;
    double feas_tol = 1e-9;
    double stat_tol = 1e-7;
    /// Projected gradient budget.
    int max_iterations = 20000;
    /// Initial projected-gradient step; 0 selects 1 / (weight + cost curvature).
    double step_size = 0.0;

    void validate() const;
    AlSettings al_settings() const;
};

/// Largest dimension for which the augmented Lagrangian uses dense Newton inner steps.
inline constexpr int kDenseNewtonLimit = 400;

/// min C(x) + (weight / 2) ||x - anchor||^2  s.t.  h(x) <= 0
struct SubproblemInstance {
    const Vec& anchor;
    double weight;
    const CostFn& cost;
    const ConstraintSet& constraints;
    std::optional<Vec> warm_start = std::nullopt;

    double objective(const Vec& x) const;
    Vec gradient(const Vec& x) const;
    void validate() const;
};

struct SolverResult {
    Vec solution;
    double objective = 0.0;
    /// max_i h_i(solution); 0 when there are no constraints.
    double residual = 0.0;
    int iterations = 0;
    bool converged = false;
    /// ||grad C + w (x - anchor) + sum mu_i grad h_i|| (projected-gradient: gradient-mapping norm).
    double stationarity = 0.0;
    double complementarity = 0.0;
    Vec multipliers;
    SolverMethod method = SolverMethod::Auto;
    /// Objective after each accepted projected-gradient step.
    std::vector<double> objective_trace;
};

/// True when the cost is a diagonal quadratic and the constraints are empty,
/// one halfspace, or boxes only.
bool closed_form_applicable(const SubproblemInstance& inst);
/// True for empty sets, one halfspace, boxes only, or one coordinate-selector ball obstacle.
bool projection_available(const ConstraintSet& cs);
/// Euclidean projection onto {h <= 0} for the sets accepted by projection_available.
Vec project(const ConstraintSet& cs, const Vec& x);

SolverResult solve_closed_form(const SubproblemInstance& inst);
SolverResult solve_aug_lagrangian(const SubproblemInstance& inst, const SolverConfig& cfg, AlState* state = nullptr);
SolverResult solve_projected_gradient(const SubproblemInstance& inst, const SolverConfig& cfg);

/// Dispatches on cfg.method.
SolverResult solve_subproblem(const SubproblemInstance& inst, const SolverConfig& cfg);

} // namespace hardflow
