#include "hardflow/tasks.hpp"

#include <cmath>
#include <numbers>

namespace hardflow {

namespace {

constexpr double kPi = std::numbers::pi;

Vec normal_vec(int d, std::mt19937_64& rng, double sigma = 1.0)
{
    std::normal_distribution<double> normal(0.0, sigma);
    Vec v(d);
    for (int k = 0; k < d; ++k) v(k) = normal(rng);
    return v;
}

constexpr int kFitDraws = 4000;

void fit_field(TaskSpec& task)
{
    std::mt19937_64 rng(mix_seed(task.seed, 0xD47A));
    std::vector<Vec> data;
    data.reserve(kFitDraws);
    for (int k = 0; k < kFitDraws; ++k) data.push_back(task.draw_data(rng));
    task.gaussian = fit_isotropic_gaussian(data);
}

// ------------------------------------------------------------------ gauss2d

TaskSpec gauss2d(const std::string& variant, std::uint64_t seed)
{
    TaskSpec task;
    task.name = "gauss2d";
    task.variant = variant.empty() ? "halfspace" : variant;
    task.seed = seed;
    task.dim = 2;
    task.gaussian = GaussianFieldSpec{Vec::Zero(2), Vec::Zero(2), 1.0, 1.0};
    if (task.variant == "halfspace") {
        task.constraints = make_halfspace(Vec::Unit(2, 0), -1.0);
    } else if (task.variant == "ball") {
        task.constraints = make_ball_obstacle(2, {0, 1}, Vec::Constant(2, 0.5), 1.0);
    } else {
        throw ConfigError("gauss2d variants are 'halfspace' and 'ball', got '" + variant + "'");
    }
    task.cost = CostFn::zero(2);
    task.default_steps = 50;
    task.default_samples = 1000;
    task.metrics = {"safety_rate", "mean_residual", "mean_cost", "energy_distance"};
    task.draw_data = [](std::mt19937_64& rng) { return normal_vec(2, rng); };
    return task;
}

// -------------------------------------------------------------- planar-traj

constexpr double kPlanarDt = 0.1;
constexpr double kPlanarGain = 0.35;

Mat planar_a()
{
    Mat a = Mat::Zero(4, 4);
    a.block(0, 0, 2, 2) = (1.0 - kPlanarGain) * Mat::Identity(2, 2);
    a.block(0, 2, 2, 2) = kPlanarGain * Mat::Identity(2, 2);
    a.block(2, 2, 2, 2) = Mat::Identity(2, 2);
    return a;
}

Mat planar_b()
{
    Mat b = Mat::Zero(4, 2);
    b.block(2, 0, 2, 2) = kPlanarDt * Mat::Identity(2, 2);
    return b;
}

/// Desired position runs to a randomly offset via-point and then to the goal.
Vec planar_expert(std::mt19937_64& rng)
{
    const int h = kPlanarHorizon, stride = kPlanarStateDim + kPlanarActionDim;
    std::normal_distribution<double> normal;
    const Eigen::Vector2d goal(1.0, 1.0);
    const Eigen::Vector2d side(1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0));
    const Eigen::Vector2d via = Eigen::Vector2d(0.5, 0.5) + 0.2 * normal(rng) * side;

    std::vector<Eigen::Vector2d> des(static_cast<std::size_t>(h));
    const int half = (h - 1) / 2;
    for (int i = 0; i < h; ++i) {
        if (i <= half) des[static_cast<std::size_t>(i)] = via * (static_cast<double>(i) / half);
        else des[static_cast<std::size_t>(i)] = via + (goal - via) * (static_cast<double>(i - half) / (h - 1 - half));
    }
    const Mat A = planar_a(), B = planar_b();
    Vec x = Vec::Zero(h * stride);
    Vec s = Vec::Zero(4);
    for (int i = 0; i < h; ++i) {
        x.segment(i * stride, 4) = s;
        Eigen::Vector2d a = Eigen::Vector2d::Zero();
        if (i + 1 < h) {
            a = (des[static_cast<std::size_t>(i) + 1] - s.segment(2, 2)) / kPlanarDt;
            a += 0.05 * Eigen::Vector2d(normal(rng), normal(rng));
        }
        x.segment(i * stride + 4, 2) = a;
        s = A * s + B * a;
    }
    return x;
}

TaskSpec planar_traj(const std::string& variant, std::uint64_t seed)
{
    if (!variant.empty() && variant != "default") throw ConfigError("planar-traj has no variant '" + variant + "'");
    TaskSpec task;
    task.name = "planar-traj";
    task.variant = "default";
    task.seed = seed;
    const int h = kPlanarHorizon, stride = kPlanarStateDim + kPlanarActionDim;
    task.dim = h * stride;

    ConstraintSet dyn = make_linear_dynamics(planar_a(), planar_b(), Vec::Zero(4), h, 4, 2);
    task.dynamics = dyn;
    ConstraintSet cs(task.dim);
    cs.append(dyn);
    const double inf = std::numeric_limits<double>::infinity();
    Vec lo = Vec::Constant(task.dim, -inf), hi = Vec::Constant(task.dim, inf);
    lo.head(4).setZero();
    hi.head(4).setZero();
    cs.add(Box{lo, hi});
    for (int i = 1; i < h; ++i) {
        const int p = planar_position_index(i);
        cs.append(make_ball_obstacle(task.dim, {p, p + 1}, Eigen::Vector2d(0.45, 0.45), 0.1));
        cs.append(make_ball_obstacle(task.dim, {p, p + 1}, Eigen::Vector2d(0.8, 0.55), 0.08));
    }
    task.constraints = cs;

    Vec target = Vec::Zero(task.dim), weights = Vec::Zero(task.dim);
    const int last = planar_position_index(h - 1);
    target.segment(last, 2) = Eigen::Vector2d(1.0, 1.0);
    weights.segment(last, 2).setOnes();
    task.cost = CostFn::quadratic(target, weights);
    task.default_steps = 10;
    task.default_samples = 200;
    task.metrics = {"safety_rate", "mean_residual", "mean_cost", "energy_distance", "dynamics_residual", "path_length"};
    task.draw_data = planar_expert;
    fit_field(task);
    return task;
}

// ------------------------------------------------------------- mini-burgers

constexpr int kBurgersM = 6;
constexpr int kBurgersN = 16;
constexpr double kBurgersDt = 1.0 / (kBurgersM - 1);
constexpr double kBurgersDs = 1.0 / (kBurgersN + 1);
constexpr double kBurgersNuData = 0.01;

double mode(int k, int j) { return std::sin(k * kPi * (j + 1) * kBurgersDs); }

Vec burgers_initial()
{
    Vec u(kBurgersN);
    for (int j = 0; j < kBurgersN; ++j) u(j) = 0.5 * mode(1, j) + 0.2 * mode(2, j);
    return u;
}

Vec burgers_terminal()
{
    Vec u(kBurgersN);
    for (int j = 0; j < kBurgersN; ++j) u(j) = -0.3 * mode(1, j) + 0.25 * mode(3, j);
    return u;
}

/// Interpolates the pinned boundary states with a random bump and backs out f at nu = 0.01.
Vec burgers_data(std::mt19937_64& rng)
{
    const int m = kBurgersM, n = kBurgersN;
    std::normal_distribution<double> normal;
    const double c1 = 0.5 * normal(rng), c2 = 0.4 * normal(rng), c3 = 0.3 * normal(rng);
    const Vec u0 = burgers_initial(), ut = burgers_terminal();
    Vec x = Vec::Zero(2 * m * n);
    for (int k = 0; k < m; ++k) {
        const double t = k * kBurgersDt;
        for (int j = 0; j < n; ++j) {
            const double bump = c1 * mode(1, j) + c2 * mode(2, j) + c3 * mode(3, j);
            x(burgers_u_index(n, k, j)) = (1.0 - t) * u0(j) + t * ut(j) + t * (1.0 - t) * bump;
        }
    }
    for (int k = 0; k + 1 < m; ++k) {
        for (int j = 0; j < n; ++j) {
            const double uc = x(burgers_u_index(n, k, j));
            const double ul = j > 0 ? x(burgers_u_index(n, k, j - 1)) : 0.0;
            const double ur = j + 1 < n ? x(burgers_u_index(n, k, j + 1)) : 0.0;
            const double un = x(burgers_u_index(n, k + 1, j));
            const double adv = uc * (ur - ul) / (2.0 * kBurgersDs);
            const double lap = (ur - 2.0 * uc + ul) / (kBurgersDs * kBurgersDs);
            x(burgers_f_index(m, n, k, j)) = (un - uc) / kBurgersDt + adv - kBurgersNuData * lap;
        }
    }
    return x;
}

TaskSpec mini_burgers(const std::string& variant, std::uint64_t seed)
{
    if (!variant.empty() && variant != "default") throw ConfigError("mini-burgers has no variant '" + variant + "'");
    TaskSpec task;
    task.name = "mini-burgers";
    task.variant = "default";
    task.seed = seed;
    const int m = kBurgersM, n = kBurgersN;
    task.dim = 2 * m * n;

    ConstraintSet dyn = make_burgers_dynamics(m, n, 0.0, 0.02, kBurgersDt, kBurgersDs);
    task.dynamics = dyn;
    ConstraintSet cs(task.dim);
    cs.append(dyn);
    cs.append(make_state_bounds_burgers(m, n));
    const double inf = std::numeric_limits<double>::infinity();
    Vec lo = Vec::Constant(task.dim, -inf), hi = Vec::Constant(task.dim, inf);
    const Vec u0 = burgers_initial(), ut = burgers_terminal();
    for (int j = 0; j < n; ++j) {
        lo(burgers_u_index(n, 0, j)) = hi(burgers_u_index(n, 0, j)) = u0(j);
        lo(burgers_u_index(n, m - 1, j)) = hi(burgers_u_index(n, m - 1, j)) = ut(j);
    }
    cs.add(Box{lo, hi});
    task.constraints = cs;

    std::vector<int> controls;
    for (int k = 0; k < m; ++k)
        for (int j = 0; j < n; ++j) controls.push_back(burgers_f_index(m, n, k, j));
    task.cost = CostFn::control_energy(task.dim, controls, 1.0);
    task.default_steps = 10;
    task.default_samples = 50;
    task.metrics = {"safety_rate", "mean_residual", "mean_cost", "energy_distance", "dynamics_residual"};
    task.draw_data = burgers_data;
    fit_field(task);
    return task;
}

} // namespace

Vec TaskSpec::draw_source(std::mt19937_64& rng) const
{
    return gaussian.mu0 + normal_vec(dim, rng, gaussian.sigma0);
}

PairSampler TaskSpec::pairs() const
{
    auto data = draw_data;
    const GaussianFieldSpec g = gaussian;
    const int d = dim;
    return [data, g, d](std::mt19937_64& rng) {
        Vec x0 = g.mu0 + normal_vec(d, rng, g.sigma0);
        Vec x1 = data(rng);
        return std::make_pair(std::move(x0), std::move(x1));
    };
}

FieldPtr TaskSpec::analytic_field() const { return std::make_shared<GaussianField>(gaussian, sched); }

std::vector<std::string> task_names() { return {"gauss2d", "planar-traj", "mini-burgers"}; }

TaskSpec make_task(const std::string& name, const std::string& variant, std::uint64_t seed)
{
    if (name == "gauss2d") return gauss2d(variant, seed);
    if (name == "planar-traj") return planar_traj(variant, seed);
    if (name == "mini-burgers") return mini_burgers(variant, seed);
    throw ConfigError("unknown task '" + name + "'");
}

std::vector<Vec> draw_sources(const TaskSpec& task, int count, std::uint64_t seed)
{
    std::vector<Vec> out;
    out.reserve(static_cast<std::size_t>(std::max(count, 0)));
    for (int k = 0; k < count; ++k) {
        std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(k)));
        out.push_back(task.draw_source(rng));
    }
    return out;
}

std::vector<Vec> rejection_reference(const TaskSpec& task, int count, std::uint64_t seed, int max_draws)
{
    std::mt19937_64 rng(mix_seed(seed, 0x4EF));
    std::vector<Vec> out;
    for (int k = 0; k < max_draws && static_cast<int>(out.size()) < count; ++k) {
        Vec x = task.draw_data(rng);
        if (residual(task.constraints, x).residual <= kDefaultFeasibilityTol) out.push_back(std::move(x));
    }
    return out;
}

GaussianFieldSpec fit_isotropic_gaussian(const std::vector<Vec>& data)
{
    if (data.size() < 2) throw ConfigError("need at least two draws to fit a Gaussian");
    const auto d = data.front().size();
    Vec mean = Vec::Zero(d);
    for (const Vec& x : data) mean += x;
    mean /= static_cast<double>(data.size());
    double var = 0.0;
    for (const Vec& x : data) var += (x - mean).squaredNorm();
    var /= static_cast<double>(data.size() - 1) * static_cast<double>(d);
    GaussianFieldSpec g{Vec::Zero(d), mean, 1.0, std::sqrt(var)};
    g.validate();
    return g;
}

} // namespace hardflow
