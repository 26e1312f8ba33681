#pragma once

#include "hardflow/common.hpp"
#include "hardflow/constraints.hpp"
#include "hardflow/scheduler.hpp"
#include "hardflow/velocity.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace hardflow {

/// A desk-scale benchmark problem: data source, analytic field, cost and constraints.
///
///  gauss2d       standard normal in R^2; variants "halfspace" (x_1 <= -1) and "ball"
///                (keep out of the unit disc around (0.5, 0.5)).
///  planar-traj   H = 12 trajectory of a point tracking a desired position,
///                x = (s_0, a_0, ..., s_11, a_11) with s = (p, p_des), a = p_des velocity.
///                Linear dynamics, two circular obstacles on p, s_0 pinned, cost
///                ||p_11 - goal||^2.
///  mini-burgers  u and f on a 6 x 16 grid, Burgers residual with nu in [0, 0.02],
///                time-varying bounds on |u|, u_0 and u_T pinned, cost sum f^2.
struct TaskSpec {
    std::string name;
    std::string variant;
    std::uint64_t seed = 0;
    int dim = 0;
    Scheduler sched = linear_scheduler();
    /// Source N(mu0, sigma0^2 I) and the (fitted) isotropic Gaussian data model.
    GaussianFieldSpec gaussian;
    ConstraintSet constraints;
    /// Equality-type dynamics block alone, for the dynamics-residual column.
    std::optional<ConstraintSet> dynamics;
    CostFn cost = CostFn::zero(0);
    int default_steps = 50;
    double default_lambda = 1.0;
    int default_samples = 1000;
    std::vector<std::string> metrics;
    /// One draw from the data distribution (X_1).
    std::function<Vec(std::mt19937_64&)> draw_data;

    Vec draw_source(std::mt19937_64& rng) const;
    PairSampler pairs() const;
    FieldPtr analytic_field() const;
};

std::vector<std::string> task_names();
/// Variant "" selects the task default. Throws ConfigError for unknown names.
TaskSpec make_task(const std::string& name, const std::string& variant = "", std::uint64_t seed = 0);

/// Initial points x0_k drawn from the source with rng seeded by mix_seed(seed, k).
std::vector<Vec> draw_sources(const TaskSpec& task, int count, std::uint64_t seed);

/// Data draws kept only when feasible (residual <= 1e-6); at most max_draws attempts.
std::vector<Vec> rejection_reference(const TaskSpec& task, int count, std::uint64_t seed, int max_draws = 2000000);

/// Fits mean and a single isotropic standard deviation to data draws.
GaussianFieldSpec fit_isotropic_gaussian(const std::vector<Vec>& data);

// Planar-traj layout helpers.
inline constexpr int kPlanarHorizon = 12;
inline constexpr int kPlanarStateDim = 4;
inline constexpr int kPlanarActionDim = 2;
inline int planar_position_index(int step) { return step * (kPlanarStateDim + kPlanarActionDim); }

} // namespace hardflow
