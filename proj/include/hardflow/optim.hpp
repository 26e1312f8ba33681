#pragma once

#include "hardflow/common.hpp"

#include <deque>
#include <functional>

namespace hardflow {

/// Value and (optionally) gradient of a smooth objective.
using Objective = std::function<double(const Vec& x, Vec* grad)>;

/// Limited-memory BFGS with Armijo backtracking. Keeps its curvature memory
/// between calls to `run`, so callers can interleave it with outer updates.
class Lbfgs {
public:
    explicit Lbfgs(int memory = 10) : memory_(memory) {}

    struct Outcome {
        double value = 0.0;
        double grad_norm = 0.0;
        int iterations = 0;
        bool stalled = false;
    };

    /// At most `max_iter` iterations; stops early when ||grad|| <= grad_tol.
    Outcome run(const Objective& f, Vec& x, int max_iter, double grad_tol);
    void reset() { s_.clear(), y_.clear(); }

private:
    Vec direction(const Vec& g) const;

    int memory_;
    std::deque<Vec> s_, y_;
};

/// min f(x) s.t. c_i(x) <= 0 for i < num_constraints.
struct NlpProblem {
    int dim = 0;
    Objective objective;
    int num_constraints = 0;
    std::function<Vec(const Vec&)> constraints;
    /// (x, w) -> sum_i w_i grad c_i(x)
    std::function<Vec(const Vec&, const Vec&)> constraint_vjp;
    /// Optional second-order data. With both set the inner solver takes
    /// Gauss-Newton steps on the penalty term instead of L-BFGS steps.
    std::function<Mat(const Vec&)> objective_hessian;
    std::function<Mat(const Vec&)> constraint_jacobian;
};

struct AlSettings {
    int max_outer = 2000;
    /// Inner quasi-Newton iterations between multiplier updates.
    int update_period = 8;
    double penalty_init = 10.0;
    double penalty_growth = 10.0;
    double penalty_max = 1e12;
    /// Outer iterations between penalty checks; the penalty grows when the
    /// violation has not dropped by 4x since the previous check.
    int penalty_window = 10;
    double feas_tol = 1e-9;
    double stat_tol = 1e-7;
    double compl_tol = 1e-7;
    int memory = 10;
    /// Optional per-outer-iteration observer (outer, violation, stationarity, penalty).
    std::function<void(int, double, double, double)> trace;
};

/// Multiplier/penalty state; callers may persist it across solves.
struct AlState {
    Vec multipliers;
    double penalty = 0.0;
};

struct AlOutcome {
    Vec x;
    double objective = 0.0;
    double residual = 0.0;  // max(0, max_i c_i(x))
    double stationarity = 0.0;
    double complementarity = 0.0;
    int outer_iterations = 0;
    int inner_iterations = 0;
    bool converged = false;
    Vec multipliers;
};

/// Inequality augmented Lagrangian (PHR form) with multiplier update
/// lambda <- max(0, lambda + rho c(x)). Returns the best iterate by
/// (feasibility, objective) when the budget runs out.
AlOutcome augmented_lagrangian(const NlpProblem& problem, const Vec& x0, const AlSettings& settings,
                               AlState* state = nullptr);

} // namespace hardflow
