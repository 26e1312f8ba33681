#pragma once

#include "hardflow/common.hpp"

#include <functional>
#include <string>
#include <vector>

namespace hardflow {

/// Affine conditional path X_t = alpha(t) X_1 + beta(t) X_0.
///
/// Schedulers are built through the named factories or `make_scheduler`,
/// both of which run `validate()`: boundary values alpha(0)=0, alpha(1)=1,
/// beta(0)=1, beta(1)=0 and agreement of the supplied derivatives with
/// centered finite differences.
struct Scheduler {
    std::string name;
    std::function<double(double)> alpha;
    std::function<double(double)> beta;
    std::function<double(double)> alpha_dot;
    std::function<double(double)> beta_dot;

    /// Throws ConfigError when the boundary or derivative checks fail.
    void validate() const;
};

Scheduler linear_scheduler();
/// alpha = sin^2(pi t / 2), beta = 1 - alpha. Lambda vanishes at t = 0 and t = 1.
Scheduler cosine_scheduler();
/// alpha = sin(pi t / 2), beta = cos(pi t / 2). Lambda = -pi/2 everywhere.
Scheduler trig_scheduler();

/// Looks a scheduler up by name ("linear", "cosine", "trig").
Scheduler make_scheduler(const std::string& name);
std::vector<std::string> scheduler_names();

inline constexpr double kLambdaThreshold = 1e-12;

/// alpha(t) beta'(t) - alpha'(t) beta(t); throws DegenerateSchedulerError if |.| < 1e-12.
double lambda_of(const Scheduler& sched, double t);

/// Posterior terminal estimate E[X_1 | X_t = x] from the velocity at x.
/// Returns x unchanged when beta(t) == 0.
Vec posterior_mean(const Scheduler& sched, double t, const Vec& x, const Vec& v);

/// Posterior source estimate E[X_0 | X_t = x]. Returns x unchanged when alpha(t) == 0.
Vec posterior_noise(const Scheduler& sched, double t, const Vec& x, const Vec& v);

/// Strictly increasing knots 0 = t_0 < ... < t_N = 1.
class TimeGrid {
public:
    explicit TimeGrid(std::vector<double> knots);

    static TimeGrid uniform(int steps);

    int steps() const { return static_cast<int>(knots_.size()) - 1; }
    double t(int j) const { return knots_[static_cast<std::size_t>(j)]; }
    double dt(int j) const { return knots_[static_cast<std::size_t>(j) + 1] - knots_[static_cast<std::size_t>(j)]; }
    const std::vector<double>& knots() const { return knots_; }

private:
    std::vector<double> knots_;
};

} // namespace hardflow
