#include "doctest.h"
#include "support.hpp"

#include "hardflow/scheduler.hpp"
#include "hardflow/velocity.hpp"

#include <cmath>
#include <numbers>

using namespace hardflow;
using testing::vec;

TEST_CASE("linear lambda is -1 everywhere")
{
    const Scheduler s = linear_scheduler();
    CHECK(lambda_of(s, 0.5) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(lambda_of(s, 0.0) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(lambda_of(s, 1.0) == doctest::Approx(-1.0).epsilon(1e-15));
}

TEST_CASE("cosine lambda at 0.3 matches a finite-difference oracle")
{
    // oracle uses only alpha(t) = sin^2(pi t / 2), beta = 1 - alpha, no supplied derivatives
    auto a = [](double t) { return std::pow(std::sin(std::numbers::pi * t / 2), 2); };
    const double t = 0.3, h = 1e-6;
    const double ad = (a(t + h) - a(t - h)) / (2 * h);
    const double oracle = a(t) * (-ad) - ad * (1 - a(t));
    const double got = lambda_of(cosine_scheduler(), t);
    CHECK(std::abs(got - oracle) < 1e-8);
    CHECK(std::abs(got - -1.2708009230788149) < 1e-12);
}

TEST_CASE("cosine lambda degenerates at the endpoints")
{
    CHECK_THROWS_AS(lambda_of(cosine_scheduler(), 0.0), DegenerateSchedulerError);
    CHECK_THROWS_AS(lambda_of(cosine_scheduler(), 1.0), DegenerateSchedulerError);
}

TEST_CASE("registered schedulers satisfy boundary and derivative checks")
{
    for (const auto& name : scheduler_names()) {
        CAPTURE(name);
        const Scheduler s = make_scheduler(name);
        CHECK(std::abs(s.alpha(0.0)) <= 1e-12);
        CHECK(std::abs(s.alpha(1.0) - 1.0) <= 1e-12);
        CHECK(std::abs(s.beta(0.0) - 1.0) <= 1e-12);
        CHECK(std::abs(s.beta(1.0)) <= 1e-12);
        const double h = 1e-6;
        for (int k = 0; k <= 100; ++k) {
            const double t = k / 100.0;
            // the closed forms extend smoothly past [0, 1], so the endpoints stay centered too
            CHECK(std::abs((s.alpha(t + h) - s.alpha(t - h)) / (2 * h) - s.alpha_dot(t)) < 1e-6);
            CHECK(std::abs((s.beta(t + h) - s.beta(t - h)) / (2 * h) - s.beta_dot(t)) < 1e-6);
        }
    }
    CHECK_THROWS_AS(make_scheduler("sigmoid"), ConfigError);
}

TEST_CASE("validate rejects a scheduler with wrong derivatives")
{
    Scheduler s = linear_scheduler();
    s.alpha_dot = [](double) { return 2.0; };
    CHECK_THROWS_AS(s.validate(), ConfigError);
    Scheduler b = linear_scheduler();
    b.beta = [](double t) { return 1.0 - t + 0.1; };
    CHECK_THROWS_AS(b.validate(), ConfigError);
}

TEST_CASE("linear posterior operators have the substituted forms")
{
    std::mt19937_64 rng(3);
    const Scheduler s = linear_scheduler();
    for (int k = 0; k < 20; ++k) {
        const double t = std::uniform_real_distribution<double>(0, 1)(rng);
        const Vec x = testing::normal_vec(rng, 3), v = testing::normal_vec(rng, 3);
        CHECK((posterior_mean(s, t, x, v) - (x + (1 - t) * v)).norm() < 1e-12);
        CHECK((posterior_noise(s, t, x, v) - (x - t * v)).norm() < 1e-12);
    }
}

TEST_CASE("boundary cases return x exactly")
{
    const Vec x = vec({0.3, -1.7}), v = vec({5.0, 2.0});
    for (const auto& name : {"linear", "trig"}) {
        const Scheduler s = make_scheduler(name);
        CHECK(posterior_mean(s, 1.0, x, v) == x);
        CHECK(posterior_noise(s, 0.0, x, v) == x);
    }
}

TEST_CASE("identity alpha M + beta N = x")
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.01, 0.99);
    for (const auto& name : scheduler_names()) {
        const Scheduler s = make_scheduler(name);
        for (int k = 0; k < 500; ++k) {
            const double t = u(rng);
            const Vec x = testing::normal_vec(rng, 4, 3.0), v = testing::normal_vec(rng, 4, 3.0);
            const Vec back = s.alpha(t) * posterior_mean(s, t, x, v) + s.beta(t) * posterior_noise(s, t, x, v);
            CHECK((back - x).norm() <= 1e-9);
        }
    }
}

namespace {

// closed-form conditioning for independent isotropic endpoints
struct Conditioning {
    Vec m1, m0;
};

Conditioning condition(const GaussianFieldSpec& g, double a, double b, const Vec& x)
{
    const double s2 = a * a * g.sigma1 * g.sigma1 + b * b * g.sigma0 * g.sigma0;
    const Vec resid = x - a * g.mu1 - b * g.mu0;
    return {g.mu1 + (a * g.sigma1 * g.sigma1 / s2) * resid, g.mu0 + (b * g.sigma0 * g.sigma0 / s2) * resid};
}

} // namespace

TEST_CASE("posterior operators on the Gaussian field match closed-form conditioning")
{
    GaussianFieldSpec g{vec({0.5, -1.0}), vec({2.0, 1.0}), 1.0, 0.7};
    const Scheduler s = linear_scheduler();
    const GaussianField f(g, s);
    const Vec x = vec({1.0, 0.0});
    const double t = 0.5;
    const Conditioning c = condition(g, s.alpha(t), s.beta(t), x);
    const Vec v = f.eval(t, x);
    CHECK((posterior_mean(s, t, x, v) - c.m1).norm() < 1e-12);
    CHECK((posterior_noise(s, t, x, v) - c.m0).norm() < 1e-12);
}

TEST_CASE("posterior mean agrees with importance-weighted Monte Carlo")
{
    // E[X_1 | X_t = x] ~ sum_k w_k X1_k / sum_k w_k, w_k = N(x; a X1_k + b mu0, b^2 s0^2 I)
    GaussianFieldSpec g{vec({0.0, 0.0}), vec({1.0, -0.5}), 1.0, 0.8};
    const Scheduler s = linear_scheduler();
    const GaussianField f(g, s);
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> ut(0.2, 0.8);
    const int draws = 1000000;
    std::vector<Vec> x1(draws);
    for (auto& p : x1) p = g.mu1 + testing::normal_vec(rng, 2, g.sigma1);
    int within = 0;
    for (int probe = 0; probe < 20; ++probe) {
        const double t = ut(rng);
        const double a = s.alpha(t), b = s.beta(t);
        const Vec x = a * g.mu1 + testing::normal_vec(rng, 2, 1.0);
        double sw = 0.0;
        Vec swx = Vec::Zero(2);
        std::vector<double> w(draws);
        for (int k = 0; k < draws; ++k) {
            const Vec r = x - a * x1[k] - b * g.mu0;
            w[k] = std::exp(-r.squaredNorm() / (2 * b * b * g.sigma0 * g.sigma0));
            sw += w[k];
            swx += w[k] * x1[k];
        }
        const Vec est = swx / sw;
        Vec var = Vec::Zero(2);
        for (int k = 0; k < draws; ++k) var += (w[k] / sw) * (w[k] / sw) * (x1[k] - est).cwiseAbs2();
        const Vec se = var.cwiseSqrt();
        const Vec m = posterior_mean(s, t, x, f.eval(t, x));
        bool ok = true;
        for (int i = 0; i < 2; ++i) ok = ok && std::abs(m(i) - est(i)) <= 3 * se(i);
        within += ok;
        CAPTURE(t);
        CHECK(ok);
    }
    CHECK(within == 20);
}

TEST_CASE("time grids")
{
    const TimeGrid g = TimeGrid::uniform(7);
    double total = 0.0;
    for (int j = 0; j < g.steps(); ++j) {
        CHECK(g.dt(j) > 0);
        total += g.dt(j);
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
    CHECK(g.t(0) == 0.0);
    CHECK(g.t(7) == 1.0);
    const TimeGrid custom({0.0, 0.1, 0.5, 1.0});
    CHECK(custom.steps() == 3);
    CHECK(custom.dt(1) == doctest::Approx(0.4));
    CHECK_THROWS_AS(TimeGrid({0.0, 0.5, 0.5, 1.0}), ConfigError);
    CHECK_THROWS_AS(TimeGrid({0.1, 1.0}), ConfigError);
    CHECK_THROWS_AS(TimeGrid::uniform(0), ConfigError);
}
