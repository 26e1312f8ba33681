#include "doctest.h"
#include "support.hpp"

#include "hardflow/step_solver.hpp"

#include <limits>

using namespace hardflow;
using testing::vec;

namespace {

SolverConfig with_method(SolverMethod m)
{
    SolverConfig c;
    c.method = m;
    return c;
}

// KKT stationarity from the reported multipliers, recomputed here rather than trusted
double kkt_stationarity(const SubproblemInstance& inst, const SolverResult& r)
{
    Vec g = inst.cost.gradient(r.solution) + inst.weight * (r.solution - inst.anchor);
    if (!inst.constraints.empty()) g += inst.constraints.weighted_gradient(r.solution, r.multipliers);
    return g.norm();
}

} // namespace

TEST_CASE("closed form examples")
{
    const CostFn zero = CostFn::zero(2);
    const ConstraintSet half = make_halfspace(vec({1.0, 0.0}), 1.0);
    const Vec far = vec({2.0, 0.0});
    const SolverResult r = solve_closed_form({far, 1.0, zero, half});
    CHECK((r.solution - vec({1.0, 0.0})).norm() < 1e-15);
    CHECK(r.converged);

    const Vec inside = vec({0.2, 5.0});
    CHECK(solve_closed_form({inside, 3.0, zero, half}).solution == inside);

    const ConstraintSet box = make_box(vec({-1.0, -1.0}), vec({1.0, 1.0}));
    const Vec out = vec({3.0, -0.5});
    CHECK((solve_closed_form({out, 1.0, zero, box}).solution - vec({1.0, -0.5})).norm() < 1e-15);

    // general halfspace: xbar - ((a.xbar - b) / |a|^2) a
    const Vec a = vec({1.0, 2.0});
    const ConstraintSet tilted = make_halfspace(a, 0.5);
    const Vec p = vec({2.0, 2.0});
    const Vec expect = p - ((a.dot(p) - 0.5) / a.squaredNorm()) * a;
    CHECK((solve_closed_form({p, 1.0, zero, tilted}).solution - expect).norm() < 1e-14);
}

TEST_CASE("closed form refuses structures it cannot solve")
{
    const CostFn zero = CostFn::zero(2);
    const ConstraintSet ball = make_ball_obstacle(2, {0, 1}, vec({0.0, 0.0}), 1.0);
    const Vec y = vec({0.1, 0.0});
    CHECK_THROWS_AS(solve_closed_form({y, 1.0, zero, ball}), UnsupportedStructureError);
    ConstraintSet two = make_halfspace(vec({1.0, 0.0}), 1.0);
    two.append(make_halfspace(vec({0.0, 1.0}), 1.0));
    CHECK_THROWS_AS(solve_closed_form({y, 1.0, zero, two}), UnsupportedStructureError);
    const CostFn path = CostFn::path_length(2, {{0}, {1}});
    CHECK_THROWS_AS(solve_closed_form({y, 1.0, path, make_halfspace(vec({1.0, 0.0}), 0.0)}), UnsupportedStructureError);
}

TEST_CASE("augmented Lagrangian examples")
{
    const SolverConfig cfg = with_method(SolverMethod::AugmentedLagrangian);
    const CostFn zero = CostFn::zero(2);

    const Vec far = vec({2.0, 0.0});
    const ConstraintSet half = make_halfspace(vec({1.0, 0.0}), 1.0);
    const SolverResult h = solve_aug_lagrangian({far, 1.0, zero, half}, cfg);
    CHECK(h.converged);
    CHECK((h.solution - vec({1.0, 0.0})).norm() < 1e-6);

    // anchor inside the keep-out disc: answer is the radial projection onto the circle
    const ConstraintSet ball = make_ball_obstacle(2, {0, 1}, vec({1.0, -1.0}), 0.8);
    const Vec in = vec({1.3, -0.6});
    const Vec radial = vec({1.0, -1.0}) + 0.8 * (in - vec({1.0, -1.0})).normalized();
    const SolverResult b = solve_aug_lagrangian({in, 2.0, zero, ball}, cfg);
    CHECK(b.converged);
    CHECK((b.solution - radial).norm() < 1e-5);

    // unconstrained |x - g|^2 + (w/2)|x - xbar|^2 -> (w xbar + 2 g) / (w + 2)
    const Vec g = vec({-1.0, 3.0}), xbar = vec({2.0, 0.5});
    const double w = 1.7;
    const CostFn quad = CostFn::quadratic(g, Vec::Ones(2));
    const SolverResult q = solve_aug_lagrangian({xbar, w, quad, ConstraintSet(2)}, cfg);
    CHECK((q.solution - (w * xbar + 2 * g) / (w + 2)).norm() < 1e-8);
}

TEST_CASE("projected gradient mirrors the augmented Lagrangian examples")
{
    const SolverConfig pg = with_method(SolverMethod::ProjectedGradient);
    const SolverConfig al = with_method(SolverMethod::AugmentedLagrangian);
    const CostFn quad = CostFn::quadratic(vec({-1.0, 3.0}), Vec::Ones(2));
    const CostFn zero = CostFn::zero(2);
    struct Case {
        Vec anchor;
        const CostFn* cost;
        ConstraintSet cs;
    };
    const std::vector<Case> cases = {
        {vec({2.0, 0.0}), &zero, make_halfspace(vec({1.0, 0.0}), 1.0)},
        {vec({1.3, -0.6}), &zero, make_ball_obstacle(2, {0, 1}, vec({1.0, -1.0}), 0.8)},
        {vec({2.0, 0.5}), &quad, ConstraintSet(2)},
        {vec({2.0, 0.5}), &quad, make_box(vec({-0.5, -0.5}), vec({0.5, 0.5}))},
    };
    for (const Case& c : cases) {
        const SubproblemInstance inst{c.anchor, 1.7, *c.cost, c.cs};
        const SolverResult a = solve_projected_gradient(inst, pg);
        const SolverResult b = solve_aug_lagrangian(inst, al);
        CHECK(a.converged);
        CHECK(std::abs(a.objective - b.objective) <= 1e-4 * std::max(1.0, std::abs(b.objective)));
        CHECK((a.solution - b.solution).norm() < 1e-4);
        CHECK(a.residual <= 1e-12);
        for (std::size_t k = 1; k < a.objective_trace.size(); ++k) CHECK(a.objective_trace[k] <= a.objective_trace[k - 1] + 1e-12);
    }
}

TEST_CASE("projected gradient needs an exact projection")
{
    ConstraintSet eq(2);
    eq.add(AffineEquality{vec({1.0, 1.0}), 0.0});
    const CostFn zero = CostFn::zero(2);
    const Vec y = vec({1.0, 1.0});
    CHECK_THROWS_AS(solve_projected_gradient({y, 1.0, zero, eq}, SolverConfig{}), UnsupportedStructureError);
    CHECK_FALSE(projection_available(eq));
    CHECK(projection_available(make_box(vec({0.0}), vec({1.0}))));
}

TEST_CASE("cross-solver agreement and KKT on random instances")
{
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.1, 3.0);
    int compared = 0;
    for (int k = 0; k < 50; ++k) {
        const int d = 2 + k % 4;
        const Vec anchor = testing::normal_vec(rng, d, 2.0);
        const Vec target = testing::normal_vec(rng, d, 2.0);
        Vec weights(d);
        for (int i = 0; i < d; ++i) weights(i) = u(rng);
        const CostFn cost = CostFn::quadratic(target, weights);
        ConstraintSet cs = k % 2 == 0 ? make_halfspace(testing::normal_vec(rng, d), std::normal_distribution<double>()(rng))
                                      : make_box(-Vec::Constant(d, u(rng)), Vec::Constant(d, u(rng)));
        const SubproblemInstance inst{anchor, u(rng), cost, cs};
        REQUIRE(closed_form_applicable(inst));
        const SolverResult cf = solve_closed_form(inst);
        const SolverResult al = solve_aug_lagrangian(inst, with_method(SolverMethod::AugmentedLagrangian));
        const SolverResult pg = solve_projected_gradient(inst, with_method(SolverMethod::ProjectedGradient));
        CAPTURE(k);
        CHECK(al.converged);
        CHECK(pg.converged);
        const double scale = std::max(1.0, std::abs(cf.objective));
        CHECK(std::abs(al.objective - cf.objective) <= 1e-4 * scale);
        CHECK(std::abs(pg.objective - cf.objective) <= 1e-4 * scale);

        CHECK(kkt_stationarity(inst, al) <= 1e-3);
        CHECK(al.stationarity <= 1e-3);
        const Vec h = cs.values(al.solution);
        for (int i = 0; i < cs.size(); ++i) {
            CHECK(al.multipliers(i) >= 0.0);
            CHECK(std::abs(al.multipliers(i) * h(i)) <= 1e-4);
        }
        ++compared;
    }
    CHECK(compared == 50);
}

TEST_CASE("large weights pull the solution onto the Euclidean projection")
{
    const CostFn cost = CostFn::quadratic(vec({-3.0, 2.0}), vec({1.0, 1.0}));
    const ConstraintSet half = make_halfspace(vec({1.0, 1.0}), 0.0);
    const Vec anchor = vec({2.0, 1.0});
    const Vec proj = project(half, anchor);
    double prev = std::numeric_limits<double>::infinity();
    for (double w : {1.0, 1e2, 1e4, 1e6}) {
        const SolverResult r = solve_subproblem({anchor, w, cost, half}, SolverConfig{});
        const double dist = (r.solution - proj).norm();
        CAPTURE(w);
        CHECK(dist < prev);
        prev = dist;
    }
    CHECK(prev < 1e-4);
}

TEST_CASE("budget exhaustion is reported, never claimed feasible")
{
    SolverConfig cfg = with_method(SolverMethod::AugmentedLagrangian);
    cfg.max_outer = 1;
    cfg.update_period = 1;
    cfg.penalty_init = 1e-3;
    const CostFn cost = CostFn::quadratic(vec({5.0, 5.0}), vec({10.0, 10.0}));
    const Vec anchor = vec({0.1, 0.1});
    const SolverResult r = solve_aug_lagrangian({anchor, 1.0, cost, make_halfspace(vec({1.0, 1.0}), -1.0)}, cfg);
    CHECK_FALSE(r.converged);
    CHECK(r.solution.allFinite());
}

TEST_CASE("warm starts do not change converged answers")
{
    const CostFn zero = CostFn::zero(3);
    const ConstraintSet ball = make_ball_obstacle(3, {0, 2}, vec({0.0, 0.0}), 1.0);
    const Vec anchor = vec({0.2, 5.0, 0.1});
    const SolverConfig cfg = with_method(SolverMethod::AugmentedLagrangian);
    const SolverResult cold = solve_aug_lagrangian({anchor, 1.0, zero, ball}, cfg);
    const SolverResult warm = solve_aug_lagrangian({anchor, 1.0, zero, ball, vec({0.9, 4.0, 0.3})}, cfg);
    CHECK(cold.converged);
    CHECK(warm.converged);
    CHECK((cold.solution - warm.solution).norm() < 1e-6);
}

TEST_CASE("non-finite cost aborts the augmented Lagrangian")
{
    const CostFn bad = CostFn::custom(2, [](const Vec&) { return std::numeric_limits<double>::quiet_NaN(); },
                                      [](const Vec&) -> Vec { return Vec::Constant(2, std::numeric_limits<double>::quiet_NaN()); });
    const Vec anchor = vec({1.0, 1.0});
    CHECK_THROWS_AS(solve_aug_lagrangian({anchor, 1.0, bad, make_halfspace(vec({1.0, 0.0}), 0.0)},
                                         with_method(SolverMethod::AugmentedLagrangian)),
                    NumericalError);
}

TEST_CASE("instance and config validation")
{
    const CostFn zero = CostFn::zero(2);
    const ConstraintSet cs(2);
    const Vec a = vec({0.0, 0.0});
    CHECK_THROWS_AS(solve_subproblem({a, 0.0, zero, cs}, SolverConfig{}), ConfigError);
    const Vec nan = vec({std::numeric_limits<double>::quiet_NaN(), 0.0});
    CHECK_THROWS_AS(solve_subproblem({nan, 1.0, zero, cs}, SolverConfig{}), NumericalError);
    const Vec three = vec({0.0, 0.0, 0.0});
    CHECK_THROWS_AS(solve_subproblem({three, 1.0, zero, cs}, SolverConfig{}), DimensionError);
    SolverConfig bad;
    bad.penalty_growth = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK(parse_solver_method(solver_method_name(SolverMethod::ProjectedGradient)) == SolverMethod::ProjectedGradient);
    CHECK_THROWS_AS(parse_solver_method("ipopt"), ConfigError);
}

TEST_CASE("auto dispatch picks the closed form when it applies")
{
    const CostFn zero = CostFn::zero(2);
    const ConstraintSet half = make_halfspace(vec({1.0, 0.0}), 1.0);
    const Vec far = vec({2.0, 0.0});
    CHECK(solve_subproblem({far, 1.0, zero, half}, SolverConfig{}).method == SolverMethod::ClosedForm);
    const ConstraintSet ball = make_ball_obstacle(2, {0, 1}, vec({0.0, 0.0}), 1.0);
    CHECK(solve_subproblem({far, 1.0, zero, ball}, SolverConfig{}).method == SolverMethod::AugmentedLagrangian);
}
