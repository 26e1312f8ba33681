#pragma once

#include "hardflow/common.hpp"
#include "hardflow/constraints.hpp"
#include "hardflow/samplers.hpp"
#include "hardflow/scheduler.hpp"
#include "hardflow/velocity.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace hardflow {

// ---------------------------------------------------------------- full horizon

struct FullHorizonOptions {
    /// Zero start, steering start, then random starts up to this total.
    int starts = 8;
    std::uint64_t seed = 0;
    double random_scale = 1.0;
    int max_outer = 1000;
    double feas_tol = 1e-9;
    double stat_tol = 1e-8;
    /// Guard on the number of decision variables d * N.
    int max_variables = 64;
};

struct FullHorizonSolution {
    std::vector<Vec> controls;
    std::vector<Vec> states;
    /// C(x_N) + lambda_oc * sum_j 0.5 ||u_j||^2 dt_j
    double objective = 0.0;
    double residual = 0.0;
    bool converged = false;
    int starts_run = 0;
    int starts_converged = 0;
};

/// States x_0..x_N of x_{j+1} = x_j + (v(t_j, x_j) + u_j) dt_j.
std::vector<Vec> rollout(const VelocityField& field, const TimeGrid& grid, const Vec& x0, const std::vector<Vec>& controls);

/// Direct transcription over all controls with a terminal constraint, solved by
/// multi-start augmented Lagrangian. Needs the field's input VJP.
FullHorizonSolution solve_full_horizon(const VelocityField& field, const TimeGrid& grid, const Vec& x0,
                                       const CostFn& cost, const ConstraintSet& constraints, double lambda_oc,
                                       const FullHorizonOptions& opts = {});

// ---------------------------------------------------------- fixed-point inverse

struct FixedPointReport {
    Vec target;
    std::vector<Vec> iterates;
    /// Last observed ratio ||x^(k+1) - x^(k)|| / ||x^(k) - x^(k-1)||.
    double contraction = 0.0;
    /// Largest observed ratio.
    double max_contraction = 0.0;
    Vec solution;
    /// ||x^(1) - x*||
    double one_step_error = 0.0;
    /// ||M_t(x*) - y||
    double mean_residual = 0.0;
    int iterations = 0;
    bool converged = false;
    bool diverged = false;
};

struct FixedPointOptions {
    double tol = 1e-10;
    int max_iter = 10000;
    bool keep_iterates = true;
};

/// Solves M_t(x) = y by iterating x <- alpha_t y + beta_t N_t(x) from x_init.
FixedPointReport invert_posterior_mean(const VelocityField& field, const Scheduler& sched, double t, const Vec& y,
                                       const Vec& x_init, const FixedPointOptions& opts = {});

// --------------------------------------------------------- one-step inversion bound

struct BoundOptions {
    double safety = 1.5;
    int lipschitz_samples = 200;
    /// Use this Lipschitz constant for N_t instead of estimating it.
    std::optional<double> lipschitz;
    std::uint64_t seed = 0;
};

struct BoundProbe {
    Vec y;
    double gap = 0.0;    // |exact-inverse objective - one-step objective|
    double bound = 0.0;  // right-hand side
    bool holds = false;
};

struct BoundReport {
    double t = 0.0;
    double dt = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    double lipschitz = 0.0;
    /// |beta| * lipschitz (safety included)
    double r = 0.0;
    bool applicable = false;
    bool holds = false;
    double max_ratio = 0.0;
    std::vector<BoundProbe> probes;
};

/// Local Lipschitz estimate of N_t: max of directional central differences at
/// `samples` points drawn uniformly in the ball of `radius` around `center`.
double estimate_noise_lipschitz(const VelocityField& field, const Scheduler& sched, double t, const Vec& center,
                                double radius, int samples, std::uint64_t seed);

/// Compares the gap between the exact-inverse and one-step subproblem objectives to
/// lambda/(2 dt) * r(2-r)/(1-r)^2 * alpha^2 ||y - ybar||^2 at each probe y.
BoundReport check_theorem3_bound(const VelocityField& field, const Scheduler& sched, double t_next, double dt,
                                 double lambda_oc, const Vec& x_pred, const std::vector<Vec>& probes,
                                 const BoundOptions& opts = {});

// ------------------------------------------------------------- consistency error

struct ConsistencyReport {
    int steps = 0;
    /// max over probes of ||M_{t_{i+1}}(x + v dt) - M_{t_i}(x)||, per step.
    std::vector<double> errors;
    double mean() const;
};

/// Probes at step i are the nominal-sampler states reached from `starts`.
ConsistencyReport measure_consistency_error(const VelocityField& field, const Scheduler& sched, const TimeGrid& grid,
                                            const std::vector<Vec>& starts);

// --------------------------------------------------------------- energy distance

/// sqrt(2 E|X-Y| - E|X-X'| - E|Y-Y'|) with V-statistic (all-pairs) means.
double energy_distance(const std::vector<Vec>& a, const std::vector<Vec>& b);

struct EnergyInterval {
    double estimate = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    std::vector<double> replicates;
};

/// Percentile bootstrap interval resampling both sets independently.
EnergyInterval energy_distance_bootstrap(const std::vector<Vec>& a, const std::vector<Vec>& b, int replicates,
                                         std::uint64_t seed, double level = 0.95, int threads = 0);

// ----------------------------------------------------- receding-horizon variants

/// State-space recursion: at active steps minimise C(M(x)) + lambda/(2 dt) ||x - xbar||^2
/// subject to h(M(x)) <= 0 directly over x_{i+1}.
SampleRun sample_receding_state(const VelocityField& field, const Scheduler& sched, const Vec& x0, const CostFn& cost,
                                const ConstraintSet& constraints, const SamplerConfig& cfg);

/// Terminal-space recursion with the exact inverse: minimise
/// C(y) + lambda/(2 dt) ||M^{-1}(y) - xbar||^2 subject to h(y) <= 0.
SampleRun sample_receding_inverse(const VelocityField& field, const Scheduler& sched, const Vec& x0, const CostFn& cost,
                                  const ConstraintSet& constraints, const SamplerConfig& cfg);

} // namespace hardflow
