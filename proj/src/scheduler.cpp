#include "hardflow/scheduler.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace hardflow {

namespace {

constexpr double kBoundaryTol = 1e-12;
constexpr double kDerivativeTol = 1e-6;
constexpr int kDerivativeProbes = 101;

double central_difference(const std::function<double(double)>& f, double t)
{
    constexpr double h = 1e-5;
    return (f(t + h) - f(t - h)) / (2.0 * h);
}

} // namespace

void Scheduler::validate() const
{
    if (!alpha || !beta || !alpha_dot || !beta_dot) {
        throw ConfigError("scheduler '" + name + "' is missing a component function");
    }
    const bool boundary_ok = std::abs(alpha(0.0)) <= kBoundaryTol && std::abs(alpha(1.0) - 1.0) <= kBoundaryTol &&
                             std::abs(beta(0.0) - 1.0) <= kBoundaryTol && std::abs(beta(1.0)) <= kBoundaryTol;
    if (!boundary_ok) {
        throw ConfigError("scheduler '" + name + "' violates alpha(0)=0, alpha(1)=1, beta(0)=1, beta(1)=0");
    }
    for (int k = 0; k < kDerivativeProbes; ++k) {
        const double t = static_cast<double>(k) / (kDerivativeProbes - 1);
        const double da = std::abs(central_difference(alpha, t) - alpha_dot(t));
        const double db = std::abs(central_difference(beta, t) - beta_dot(t));
        if (da > kDerivativeTol || db > kDerivativeTol) {
            std::ostringstream os;
            os << "scheduler '" << name << "' derivative mismatch at t=" << t << " (|d alpha|=" << da
               << ", |d beta|=" << db << ")";
            throw ConfigError(os.str());
        }
    }
}

Scheduler linear_scheduler()
{
    Scheduler s{"linear",
                [](double t) { return t; },
                [](double t) { return 1.0 - t; },
                [](double) { return 1.0; },
                [](double) { return -1.0; }};
    s.validate();
    return s;
}

Scheduler cosine_scheduler()
{
    using std::numbers::pi;
    Scheduler s{"cosine",
                [](double t) {
                    const double sn = std::sin(pi * t / 2.0);
                    return sn * sn;
                },
                [](double t) {
                    const double c = std::cos(pi * t / 2.0);
                    return c * c;
                },
                [](double t) { return 0.5 * pi * std::sin(pi * t); },
                [](double t) { return -0.5 * pi * std::sin(pi * t); }};
    s.validate();
    return s;
}

Scheduler trig_scheduler()
{
    using std::numbers::pi;
    Scheduler s{"trig",
                [](double t) { return t == 1.0 ? 1.0 : std::sin(pi * t / 2.0); },
                // cos(pi/2) rounds to 6e-17; pin the boundary exactly.
                [](double t) { return t == 1.0 ? 0.0 : std::cos(pi * t / 2.0); },
                [](double t) { return 0.5 * pi * std::cos(pi * t / 2.0); },
                [](double t) { return -0.5 * pi * std::sin(pi * t / 2.0); }};
    s.validate();
    return s;
}

std::vector<std::string> scheduler_names() { return {"linear", "cosine", "trig"}; }

Scheduler make_scheduler(const std::string& name)
{
    if (name == "linear") return linear_scheduler();
    if (name == "cosine") return cosine_scheduler();
    if (name == "trig") return trig_scheduler();
    throw ConfigError("unknown scheduler '" + name + "'");
}

double lambda_of(const Scheduler& sched, double t)
{
    const double lam = sched.alpha(t) * sched.beta_dot(t) - sched.alpha_dot(t) * sched.beta(t);
    if (!(std::abs(lam) >= kLambdaThreshold)) {
        std::ostringstream os;
        os << "scheduler '" << sched.name << "' is degenerate at t=" << t << " (Lambda=" << lam << ")";
        throw DegenerateSchedulerError(os.str());
    }
    return lam;
}

Vec posterior_mean(const Scheduler& sched, double t, const Vec& x, const Vec& v)
{
    const double b = sched.beta(t);
    if (b == 0.0) return x;
    const double lam = lambda_of(sched, t);
    return (sched.beta_dot(t) * x - b * v) / lam;
}

Vec posterior_noise(const Scheduler& sched, double t, const Vec& x, const Vec& v)
{
    const double a = sched.alpha(t);
    if (a == 0.0) return x;
    const double lam = lambda_of(sched, t);
    return (-sched.alpha_dot(t) * x + a * v) / lam;
}

TimeGrid::TimeGrid(std::vector<double> knots) : knots_(std::move(knots))
{
    if (knots_.size() < 2) throw ConfigError("time grid needs at least two knots");
    if (knots_.front() != 0.0 || knots_.back() != 1.0) throw ConfigError("time grid must start at 0 and end at 1");
    for (std::size_t j = 0; j + 1 < knots_.size(); ++j) {
        if (!(knots_[j + 1] > knots_[j])) throw ConfigError("time grid knots must be strictly increasing");
    }
}

TimeGrid TimeGrid::uniform(int steps)
{
    if (steps < 1) throw ConfigError("time grid needs at least one step");
    std::vector<double> k(static_cast<std::size_t>(steps) + 1);
    for (int j = 0; j <= steps; ++j) k[static_cast<std::size_t>(j)] = static_cast<double>(j) / steps;
    k.back() = 1.0;
    return TimeGrid(std::move(k));
}

} // namespace hardflow
