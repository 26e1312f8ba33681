#include "doctest.h"
#include "support.hpp"

#include "hardflow/tasks.hpp"
#include "hardflow/verification.hpp"

#include <Eigen/SVD>

using namespace hardflow;
using testing::vec;

namespace {

Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x, double h = 1e-6)
{
    const Vec f0 = f(x);
    Mat j(f0.size(), x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        Vec xp = x, xm = x;
        xp(k) += h;
        xm(k) -= h;
        j.col(k) = (f(xp) - f(xm)) / (2 * h);
    }
    return j;
}

Vec mean_map(const VelocityField& f, const Scheduler& s, double t, const Vec& x)
{
    return posterior_mean(s, t, x, f.eval(t, x));
}

} // namespace

TEST_CASE("rollout applies controlled Euler steps")
{
    const ConstantField f(vec({1.0}));
    const TimeGrid grid = TimeGrid::uniform(4);
    const auto xs = rollout(f, grid, vec({0.0}), {vec({1.0}), vec({0.0}), vec({-2.0}), vec({0.0})});
    REQUIRE(xs.size() == 5);
    CHECK(xs[4](0) == doctest::Approx(1.0 + 0.25 - 0.5));
    CHECK_THROWS(rollout(f, grid, vec({0.0}), {vec({1.0})}));
}

TEST_CASE("full-horizon oracle on trivial problems")
{
    const TimeGrid grid = TimeGrid::uniform(4);
    SUBCASE("feasible nominal end needs no control")
    {
        const ConstantField f(vec({0.5, 0.5}));
        const auto sol = solve_full_horizon(f, grid, vec({0.0, 0.0}), CostFn::zero(2), ConstraintSet(2), 1.0);
        CHECK(sol.converged);
        CHECK(sol.objective == doctest::Approx(0.0).epsilon(1e-8));
        for (const Vec& u : sol.controls) CHECK(u.norm() <= 1e-5);
    }
    SUBCASE("single integrator pushed back onto a halfspace")
    {
        const ConstantField f(vec({1.0}));
        for (double lam : {0.5, 2.0}) {
            const auto sol =
                solve_full_horizon(f, grid, vec({0.0}), CostFn::zero(1), make_halfspace(vec({1.0}), 0.0), lam);
            CHECK(sol.converged);
            CHECK(sol.objective == doctest::Approx(lam / 2).epsilon(1e-5));
            for (const Vec& u : sol.controls) CHECK(u(0) == doctest::Approx(-1.0).epsilon(1e-4));
            CHECK(sol.residual <= 1e-8);
        }
    }
    SUBCASE("variable guard")
    {
        const ConstantField f(Vec::Zero(20));
        FullHorizonOptions fo;
        fo.max_variables = 64;
        CHECK_THROWS(solve_full_horizon(f, TimeGrid::uniform(8), Vec::Zero(20), CostFn::zero(20), ConstraintSet(20), 1.0, fo));
    }
}

TEST_CASE("fixed-point inverse of the posterior mean")
{
    SUBCASE("t = 1 converges at once")
    {
        const GaussianField f({Vec::Zero(2), vec({1.0, -1.0}), 1.0, 0.5}, linear_scheduler());
        const Vec y = vec({0.3, 0.8});
        const auto rep = invert_posterior_mean(f, linear_scheduler(), 1.0, y, vec({5.0, 5.0}));
        CHECK(rep.converged);
        CHECK((rep.solution - y).norm() <= 1e-12);
        CHECK(rep.one_step_error <= 1e-12);
    }
    SUBCASE("linear field matches a direct solve")
    {
        Mat a(2, 2);
        a << 0.4, -0.3, 0.2, 0.1;
        const Vec b = vec({0.5, -0.2});
        const LinearField f(a, b);
        const double t = 0.8;
        const Vec y = vec({1.0, 2.0});
        // M(x) = x + (1 - t)(A x + b)
        const Vec direct = (Mat::Identity(2, 2) + (1 - t) * a).lu().solve(y - (1 - t) * b);
        const auto rep = invert_posterior_mean(f, linear_scheduler(), t, y, Vec::Zero(2));
        CHECK(rep.converged);
        CHECK((rep.solution - direct).norm() <= 1e-8);
        CHECK(rep.mean_residual <= 1e-8);
        CHECK(rep.max_contraction < 1.0);
    }
    SUBCASE("Gaussian one-step error within the contraction bound")
    {
        const Scheduler s = linear_scheduler();
        const GaussianField f({Vec::Zero(2), vec({2.0, -1.0}), 1.0, 0.6}, s);
        const double t = 0.9;
        const Vec y = vec({1.5, -0.5});
        const Vec x0 = vec({1.0, 0.0});
        const auto rep = invert_posterior_mean(f, s, t, y, x0);
        REQUIRE(rep.converged);
        // the map is affine here so its Jacobian is exact
        const Mat jm = fd_jacobian([&](const Vec& x) { return mean_map(f, s, t, x); }, x0);
        const Vec direct = x0 + jm.lu().solve(y - mean_map(f, s, t, x0));
        CHECK((rep.solution - direct).norm() <= 1e-6);
        const Mat jn = fd_jacobian([&](const Vec& x) { return posterior_noise(s, t, x, f.eval(t, x)); }, x0);
        const double r = std::abs(s.beta(t)) * jn.jacobiSvd().singularValues()(0);
        REQUIRE(r < 1.0);
        CHECK(rep.one_step_error <= r * (x0 - rep.solution).norm() + 1e-9);
        CHECK(rep.contraction <= r + 1e-6);
    }
}

TEST_CASE("noise Lipschitz estimate on a linear field")
{
    Mat a(2, 2);
    a << 1.0, 0.5, -0.5, 2.0;
    const LinearField f(a);
    const Scheduler s = linear_scheduler();
    const double t = 0.7;
    const Mat jn = fd_jacobian([&](const Vec& x) { return posterior_noise(s, t, x, f.eval(t, x)); }, Vec::Zero(2));
    const double exact = jn.jacobiSvd().singularValues()(0);
    const double est = estimate_noise_lipschitz(f, s, t, Vec::Zero(2), 1.0, 400, 3);
    CHECK(est <= exact * (1 + 1e-5));
    CHECK(est >= 0.95 * exact);
}

TEST_CASE("one-step inversion bound on a linear field")
{
    Mat a(2, 2);
    a << -0.6, 0.3, 0.2, 0.4;
    const LinearField f(a, vec({0.1, 0.0}));
    const Scheduler s = linear_scheduler();
    const double t_next = 0.9, dt = 0.02;
    const Mat jn = fd_jacobian([&](const Vec& x) { return posterior_noise(s, t_next, x, f.eval(t_next, x)); },
                               Vec::Zero(2));
    BoundOptions bo;
    bo.safety = 1.0;
    bo.lipschitz = jn.jacobiSvd().singularValues()(0);
    const Vec x_pred = vec({0.2, -0.3});
    std::mt19937_64 rng(11);
    std::vector<Vec> probes;
    for (int k = 0; k < 30; ++k) probes.push_back(mean_map(f, s, t_next, x_pred) + testing::normal_vec(rng, 2, 0.5));
    const auto rep = check_theorem3_bound(f, s, t_next, dt, 1.0, x_pred, probes, bo);
    CHECK(rep.applicable);
    CHECK(rep.holds);
    CHECK(rep.r == doctest::Approx(0.1 * *bo.lipschitz));
    CHECK(rep.probes.size() == 30);
    CHECK(rep.max_ratio <= 1.0);
}

TEST_CASE("consistency error")
{
    const Scheduler s = linear_scheduler();
    std::mt19937_64 rng(4);
    std::vector<Vec> starts;
    for (int k = 0; k < 50; ++k) starts.push_back(testing::normal_vec(rng, 2));
    SUBCASE("straight paths are exactly consistent")
    {
        const ConstantField f(vec({1.0, -2.0}));
        const auto rep = measure_consistency_error(f, s, TimeGrid::uniform(20), starts);
        CHECK(rep.steps == 20);
        for (double e : rep.errors) CHECK(e <= 1e-9);
    }
    SUBCASE("Gaussian field error is first order in the step")
    {
        const GaussianField f({Vec::Zero(2), vec({3.0, 0.0}), 1.0, 0.3}, s);
        const double coarse = measure_consistency_error(f, s, TimeGrid::uniform(50), starts).mean();
        const double fine = measure_consistency_error(f, s, TimeGrid::uniform(100), starts).mean();
        CHECK(coarse > 0.0);
        const double ratio = fine / coarse;
        CHECK(ratio >= 0.4);
        CHECK(ratio <= 0.6);
    }
}

TEST_CASE("energy distance")
{
    std::mt19937_64 rng(8);
    std::vector<Vec> a, b, c;
    for (int k = 0; k < 300; ++k) {
        a.push_back(testing::normal_vec(rng, 1));
        b.push_back(testing::normal_vec(rng, 1));
        c.push_back(testing::normal_vec(rng, 1) + vec({3.0}));
    }
    CHECK(energy_distance(a, a) == doctest::Approx(0.0));
    CHECK(energy_distance({vec({0.0, 0.0})}, {vec({2.0, 0.0})}) == doctest::Approx(2.0));
    CHECK(energy_distance(a, c) == doctest::Approx(energy_distance(c, a)));
    CHECK(energy_distance(a, c) > 10 * energy_distance(a, b));

    // independent V-statistic
    double xy = 0, xx = 0, yy = 0;
    for (const Vec& x : a)
        for (const Vec& y : c) xy += (x - y).norm();
    for (const Vec& x : a)
        for (const Vec& y : a) xx += (x - y).norm();
    for (const Vec& x : c)
        for (const Vec& y : c) yy += (x - y).norm();
    const double n = 300.0;
    CHECK(energy_distance(a, c) == doctest::Approx(std::sqrt(2 * xy / (n * n) - xx / (n * n) - yy / (n * n))));
    CHECK_THROWS(energy_distance({}, a));
}

TEST_CASE("energy distance bootstrap")
{
    std::mt19937_64 rng(9);
    std::vector<Vec> a, b;
    for (int k = 0; k < 200; ++k) {
        a.push_back(testing::normal_vec(rng, 2));
        b.push_back(testing::normal_vec(rng, 2) + vec({1.0, 0.0}));
    }
    const auto one = energy_distance_bootstrap(a, b, 100, 5, 0.95, 1);
    const auto many = energy_distance_bootstrap(a, b, 100, 5, 0.95, 3);
    CHECK(one.estimate == doctest::Approx(energy_distance(a, b)));
    CHECK(one.replicates.size() == 100);
    CHECK(one.lo <= one.estimate);
    CHECK(one.hi >= one.lo);
    CHECK(one.lo > 0.0);
    CHECK(one.replicates == many.replicates);
    CHECK(energy_distance_bootstrap(a, b, 100, 6, 0.95, 1).replicates != one.replicates);
}

TEST_CASE("receding-horizon variants stay feasible")
{
    const TaskSpec task = make_task("gauss2d", "ball");
    const FieldPtr f = task.analytic_field();
    SamplerConfig cfg;
    cfg.grid = TimeGrid::uniform(20);
    for (const Vec& x0 : draw_sources(task, 5, 12)) {
        const SampleRun st = sample_receding_state(*f, task.sched, x0, task.cost, task.constraints, cfg);
        const SampleRun inv = sample_receding_inverse(*f, task.sched, x0, task.cost, task.constraints, cfg);
        CHECK(st.terminal_report.residual <= 1e-6);
        CHECK(inv.terminal_report.residual <= 1e-6);
    }
}
