#include "hardflow/samplers.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <sstream>
#include <thread>

namespace hardflow {

std::string sampler_method_name(SamplerMethod m)
{
    switch (m) {
    case SamplerMethod::Nominal: return "nominal";
    case SamplerMethod::HardFlow: return "hardflow";
    case SamplerMethod::Posthoc: return "posthoc-projection";
    case SamplerMethod::ProjectionAll: return "projection-all";
    case SamplerMethod::ProjectionLate: return "projection-late";
    case SamplerMethod::ProjectionRelaxed: return "projection-relaxed";
    case SamplerMethod::GradientGuidance: return "gradient-guidance";
    }
    return "unknown";
}

std::vector<std::string> sampler_method_names()
{
    return {"nominal", "hardflow", "posthoc-projection", "projection-all", "projection-late", "projection-relaxed",
            "gradient-guidance"};
}

SamplerMethod parse_sampler_method(const std::string& name)
{
    for (SamplerMethod m : {SamplerMethod::Nominal, SamplerMethod::HardFlow, SamplerMethod::Posthoc,
                            SamplerMethod::ProjectionAll, SamplerMethod::ProjectionLate,
                            SamplerMethod::ProjectionRelaxed, SamplerMethod::GradientGuidance}) {
        if (sampler_method_name(m) == name) return m;
    }
    if (name == "posthoc") return SamplerMethod::Posthoc;
    throw ConfigError("unknown sampler method '" + name + "'");
}

void SamplerConfig::validate() const
{
    if (!(lambda_oc > 0.0) || !std::isfinite(lambda_oc)) throw ConfigError("lambda_oc must be positive and finite");
    if (!(activation >= 0.0 && activation <= 1.0)) throw ConfigError("activation fraction must lie in [0, 1]");
    if (relaxed_iterations < 0) throw ConfigError("relaxed iteration count must be non-negative");
    if (guidance_step < 0.0 || guidance_penalty < 0.0) throw ConfigError("guidance step and penalty must be non-negative");
    solver.validate();
}

namespace {

using Clock = std::chrono::steady_clock;

void check_state(const Vec& x, int step, const char* what)
{
    if (!x.allFinite()) {
        std::ostringstream os;
        os << what << " became non-finite at step " << step;
        throw NumericalError(os.str());
    }
}

void check_inputs(const VelocityField& field, const Vec& x0, const ConstraintSet* cs, const CostFn* cost)
{
    if (x0.size() != field.dim()) throw DimensionError("initial point does not match the field dimension");
    if (!x0.allFinite()) throw NumericalError("initial point is not finite");
    if (cs != nullptr && cs->dim() != field.dim()) throw DimensionError("constraint set does not match the field dimension");
    if (cost != nullptr && cost->dim() != field.dim()) throw DimensionError("cost does not match the field dimension");
}

/// Shared bookkeeping for step-by-step samplers.
class RunBuilder {
public:
    RunBuilder(SamplerMethod method, const Vec& x0, int steps, bool record) : record_(record), start_(Clock::now())
    {
        run_.method = method;
        run_.x0 = x0;
        run_.states.push_back(x0);
        run_.controls.reserve(static_cast<std::size_t>(steps));
        current_ = x0;
    }

    const Vec& current() const { return current_; }

    void advance(Vec next, const Vec& predicted, double dt)
    {
        run_.controls.push_back((next - predicted) / dt);
        current_ = std::move(next);
        if (record_) run_.states.push_back(current_);
    }

    void record_step(StepRecord rec)
    {
        if (!rec.solver.converged) ++run_.unconverged_steps;
        if (record_) run_.steps.push_back(std::move(rec));
    }

    SampleRun finish(const CostFn* cost, const ConstraintSet* cs, const TimeGrid& grid, double lambda_oc)
    {
        if (!record_) run_.states.push_back(current_);
        if (cost != nullptr) run_.cost = cost->value(current_);
        if (cs != nullptr) run_.terminal_report = residual(*cs, current_);
        run_.objective = run_.cost;
        for (int i = 0; i < grid.steps(); ++i) {
            run_.objective += lambda_oc * 0.5 * run_.controls[static_cast<std::size_t>(i)].squaredNorm() * grid.dt(i);
        }
        run_.wall_time = std::chrono::duration<double>(Clock::now() - start_).count();
        return std::move(run_);
    }

    SampleRun& run() { return run_; }

private:
    bool record_;
    Clock::time_point start_;
    SampleRun run_;
    Vec current_;
};

bool step_active(int i, int steps, double activation) { return static_cast<double>(i) >= activation * steps; }

/// Projection of `point` onto {h <= 0} through the step solver (zero cost, unit weight).
SolverResult project_point(const Vec& point, const ConstraintSet& cs, const SolverConfig& solver,
                           const std::optional<Vec>& warm)
{
    const CostFn zero = CostFn::zero(static_cast<int>(point.size()));
    SubproblemInstance inst{point, 1.0, zero, cs, warm};
    return solve_subproblem(inst, solver);
}

SampleRun projection_sampler(SamplerMethod method, const VelocityField& field, const Vec& x0,
                             const ConstraintSet& cs, const SamplerConfig& cfg, int first_projected)
{
    cfg.validate();
    check_inputs(field, x0, &cs, nullptr);
    const TimeGrid& grid = cfg.grid;
    const int n = grid.steps();
    RunBuilder b(method, x0, n, cfg.record_trajectory);
    std::optional<Vec> warm;
    for (int i = 0; i < n; ++i) {
        const Vec x = b.current();
        const Vec predicted = x + field.eval(grid.t(i), x) * grid.dt(i);
        check_state(predicted, i, "Euler prediction");
        if (cs.empty() || i < first_projected) {
            b.advance(predicted, predicted, grid.dt(i));
            continue;
        }
        StepRecord rec;
        rec.step = i;
        rec.predicted = predicted;
        rec.solver = project_point(predicted, cs, cfg.solver, cfg.warm_start ? warm : std::nullopt);
        check_state(rec.solver.solution, i, "projected state");
        if (i == n - 1) b.run().final_converged = rec.solver.converged;
        warm = rec.solver.solution;
        b.advance(rec.solver.solution, predicted, grid.dt(i));
        b.record_step(std::move(rec));
    }
    return b.finish(nullptr, &cs, grid, cfg.lambda_oc);
}

} // namespace

double control_objective(const CostFn& cost, const Vec& terminal, const std::vector<Vec>& controls,
                         const TimeGrid& grid, double lambda_oc)
{
    if (static_cast<int>(controls.size()) != grid.steps()) throw DimensionError("one control per grid step expected");
    double j = cost.value(terminal);
    for (int i = 0; i < grid.steps(); ++i) j += lambda_oc * 0.5 * controls[static_cast<std::size_t>(i)].squaredNorm() * grid.dt(i);
    return j;
}

SampleRun sample_nominal(const VelocityField& field, const Scheduler&, const TimeGrid& grid, const Vec& x0,
                         bool record_trajectory)
{
    check_inputs(field, x0, nullptr, nullptr);
    RunBuilder b(SamplerMethod::Nominal, x0, grid.steps(), record_trajectory);
    for (int i = 0; i < grid.steps(); ++i) {
        const Vec& x = b.current();
        Vec next = x + field.eval(grid.t(i), x) * grid.dt(i);
        check_state(next, i, "nominal state");
        const Vec copy = next;
        b.advance(std::move(next), copy, grid.dt(i));
    }
    return b.finish(nullptr, nullptr, grid, 1.0);
}

SampleRun sample_hardflow(const VelocityField& field, const Scheduler& sched, const Vec& x0, const CostFn& cost,
                          const ConstraintSet& constraints, const SamplerConfig& cfg)
{
    cfg.validate();
    check_inputs(field, x0, &constraints, &cost);
    const TimeGrid& grid = cfg.grid;
    const int n = grid.steps();
    RunBuilder b(SamplerMethod::HardFlow, x0, n, cfg.record_trajectory);
    std::optional<Vec> warm;

    for (int i = 0; i < n; ++i) {
        const Vec x = b.current();
        const double dt = grid.dt(i);
        const Vec predicted = x + field.eval(grid.t(i), x) * dt;
        check_state(predicted, i, "Euler prediction");
        if (!step_active(i, n, cfg.activation)) {
            b.advance(predicted, predicted, dt);
            continue;
        }

        const double t1 = grid.t(i + 1);
        const double a1 = sched.alpha(t1);
        const double b1 = sched.beta(t1);
        const Vec v1 = field.eval(t1, predicted);

        StepRecord rec;
        rec.step = i;
        rec.predicted = predicted;
        rec.anchor = posterior_mean(sched, t1, predicted, v1);
        rec.noise = b1 == 0.0 ? Vec::Zero(predicted.size()) : posterior_noise(sched, t1, predicted, v1);
        check_state(rec.anchor, i, "posterior mean");

        const double weight = cfg.lambda_oc * a1 * a1 / dt;
        SubproblemInstance inst{rec.anchor, weight, cost, constraints, cfg.warm_start ? warm : std::nullopt};
        rec.solver = solve_subproblem(inst, cfg.solver);
        check_state(rec.solver.solution, i, "subproblem solution");

        if (i == n - 1 && !rec.solver.converged) {
            std::ostringstream os;
            os << "final-step subproblem did not converge (residual " << rec.solver.residual << ", stationarity "
               << rec.solver.stationarity << ", method " << solver_method_name(rec.solver.method) << ")";
            throw SolverFailure(os.str());
        }
        warm = rec.solver.solution;
        Vec next = b1 == 0.0 ? Vec(a1 * rec.solver.solution) : Vec(a1 * rec.solver.solution + b1 * rec.noise);
        b.advance(std::move(next), predicted, dt);
        b.record_step(std::move(rec));
    }
    return b.finish(&cost, &constraints, grid, cfg.lambda_oc);
}

SampleRun sample_posthoc(const VelocityField& field, const Scheduler& sched, const Vec& x0,
                         const ConstraintSet& constraints, const SamplerConfig& cfg)
{
    cfg.validate();
    check_inputs(field, x0, &constraints, nullptr);
    SampleRun run = sample_nominal(field, sched, cfg.grid, x0, cfg.record_trajectory);
    run.method = SamplerMethod::Posthoc;
    const auto start = Clock::now();
    if (!constraints.empty()) {
        const Vec nominal_end = run.states.back();
        StepRecord rec;
        rec.step = cfg.grid.steps() - 1;
        rec.predicted = nominal_end;
        rec.solver = project_point(nominal_end, constraints, cfg.solver, std::nullopt);
        check_state(rec.solver.solution, rec.step, "projected terminal");
        run.final_converged = rec.solver.converged;
        if (!rec.solver.converged) ++run.unconverged_steps;
        run.states.back() = rec.solver.solution;
        run.controls.back() = (rec.solver.solution - nominal_end) / cfg.grid.dt(rec.step);
        if (cfg.record_trajectory) run.steps.push_back(std::move(rec));
    }
    run.terminal_report = residual(constraints, run.states.back());
    run.objective = control_objective(CostFn::zero(field.dim()), run.states.back(), run.controls, cfg.grid,
                                      cfg.lambda_oc);
    run.wall_time += std::chrono::duration<double>(Clock::now() - start).count();
    return run;
}

SampleRun sample_projection_all(const VelocityField& field, const Scheduler&, const Vec& x0,
                                const ConstraintSet& constraints, const SamplerConfig& cfg)
{
    return projection_sampler(SamplerMethod::ProjectionAll, field, x0, constraints, cfg, 0);
}

SampleRun sample_projection_late(const VelocityField& field, const Scheduler&, const Vec& x0,
                                 const ConstraintSet& constraints, const SamplerConfig& cfg)
{
    const int n = cfg.grid.steps();
    return projection_sampler(SamplerMethod::ProjectionLate, field, x0, constraints, cfg, (n + 1) / 2);
}

SampleRun sample_projection_relaxed(const VelocityField& field, const Scheduler&, const Vec& x0,
                                    const ConstraintSet& constraints, const SamplerConfig& cfg)
{
    cfg.validate();
    check_inputs(field, x0, &constraints, nullptr);
    const TimeGrid& grid = cfg.grid;
    const int n = grid.steps();
    RunBuilder b(SamplerMethod::ProjectionRelaxed, x0, n, cfg.record_trajectory);
    AlState state;
    AlSettings settings = cfg.solver.al_settings();
    settings.max_outer = cfg.relaxed_iterations;

    for (int i = 0; i < n; ++i) {
        const Vec x = b.current();
        const Vec predicted = x + field.eval(grid.t(i), x) * grid.dt(i);
        check_state(predicted, i, "Euler prediction");
        if (constraints.empty() || cfg.relaxed_iterations == 0) {
            b.advance(predicted, predicted, grid.dt(i));
            continue;
        }
        NlpProblem nlp;
        nlp.dim = static_cast<int>(predicted.size());
        nlp.objective = [&predicted](const Vec& z, Vec* grad) {
            if (grad != nullptr) *grad = z - predicted;
            return 0.5 * (z - predicted).squaredNorm();
        };
        nlp.num_constraints = constraints.size();
        nlp.constraints = [&constraints](const Vec& z) { return constraints.values(z); };
        nlp.constraint_vjp = [&constraints](const Vec& z, const Vec& w) { return constraints.weighted_gradient(z, w); };
        const AlOutcome al = augmented_lagrangian(nlp, predicted, settings, &state);
        check_state(al.x, i, "relaxed state");

        StepRecord rec;
        rec.step = i;
        rec.predicted = predicted;
        rec.solver.solution = al.x;
        rec.solver.objective = al.objective;
        rec.solver.residual = constraints.values(al.x).maxCoeff();
        rec.solver.iterations = al.inner_iterations;
        rec.solver.converged = al.converged;
        rec.solver.stationarity = al.stationarity;
        rec.solver.complementarity = al.complementarity;
        rec.solver.multipliers = al.multipliers;
        rec.solver.method = SolverMethod::AugmentedLagrangian;
        if (i == n - 1) b.run().final_converged = al.converged;
        b.advance(al.x, predicted, grid.dt(i));
        b.record_step(std::move(rec));
    }
    return b.finish(nullptr, &constraints, grid, cfg.lambda_oc);
}

Vec guidance_gradient(const VelocityField& field, const Scheduler& sched, double t, const Vec& x, const CostFn& cost,
                      const ConstraintSet& constraints, double penalty)
{
    const Vec v = field.eval(t, x);
    const Vec m = posterior_mean(sched, t, x, v);
    Vec g = cost.gradient(m);
    if (!constraints.empty() && penalty > 0.0) {
        const Vec h = constraints.values(m);
        g += constraints.weighted_gradient(m, 2.0 * penalty * h.cwiseMax(0.0));
    }
    const double b = sched.beta(t);
    if (b == 0.0) return g;
    // M(x) = (beta_dot x - beta v(x)) / Lambda, so J_M^T g = (beta_dot g - beta J_v^T g) / Lambda.
    return (sched.beta_dot(t) * g - b * hardflow::input_vjp(field, t, x, g)) / lambda_of(sched, t);
}

SampleRun sample_gradient_guidance(const VelocityField& field, const Scheduler& sched, const Vec& x0,
                                   const CostFn& cost, const ConstraintSet& constraints, const SamplerConfig& cfg)
{
    cfg.validate();
    check_inputs(field, x0, &constraints, &cost);
    if (cfg.guidance_step > 0.0 && !field.has_input_vjp()) {
        throw CapabilityError("gradient guidance needs a field with input VJP");
    }
    const TimeGrid& grid = cfg.grid;
    const int n = grid.steps();
    RunBuilder b(SamplerMethod::GradientGuidance, x0, n, cfg.record_trajectory);
    for (int i = 0; i < n; ++i) {
        const Vec x = b.current();
        const Vec predicted = x + field.eval(grid.t(i), x) * grid.dt(i);
        check_state(predicted, i, "Euler prediction");
        if (cfg.guidance_step == 0.0) {
            b.advance(predicted, predicted, grid.dt(i));
            continue;
        }
        Vec next = predicted - cfg.guidance_step * grid.dt(i) *
                                   guidance_gradient(field, sched, grid.t(i), x, cost, constraints, cfg.guidance_penalty);
        check_state(next, i, "guided state");
        b.advance(std::move(next), predicted, grid.dt(i));
    }
    return b.finish(&cost, &constraints, grid, cfg.lambda_oc);
}

SampleRun sample(const VelocityField& field, const Scheduler& sched, const Vec& x0, const CostFn& cost,
                 const ConstraintSet& constraints, const SamplerConfig& cfg)
{
    SampleRun run;
    switch (cfg.method) {
    case SamplerMethod::Nominal:
        cfg.validate();
        run = sample_nominal(field, sched, cfg.grid, x0, cfg.record_trajectory);
        break;
    case SamplerMethod::HardFlow: return sample_hardflow(field, sched, x0, cost, constraints, cfg);
    case SamplerMethod::Posthoc: run = sample_posthoc(field, sched, x0, constraints, cfg); break;
    case SamplerMethod::ProjectionAll: run = sample_projection_all(field, sched, x0, constraints, cfg); break;
    case SamplerMethod::ProjectionLate: run = sample_projection_late(field, sched, x0, constraints, cfg); break;
    case SamplerMethod::ProjectionRelaxed: run = sample_projection_relaxed(field, sched, x0, constraints, cfg); break;
    case SamplerMethod::GradientGuidance: return sample_gradient_guidance(field, sched, x0, cost, constraints, cfg);
    }
    // Report every method against the same cost and constraints.
    run.cost = cost.value(run.terminal());
    run.terminal_report = residual(constraints, run.terminal());
    run.objective = control_objective(cost, run.terminal(), run.controls, cfg.grid, cfg.lambda_oc);
    return run;
}

std::vector<BatchItem> sample_batch(const VelocityField& field, const Scheduler& sched, const std::vector<Vec>& x0s,
                                    const CostFn& cost, const ConstraintSet& constraints, const SamplerConfig& cfg,
                                    int threads)
{
    cfg.validate();
    std::vector<BatchItem> out(x0s.size());
    if (x0s.empty()) return out;
    int workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
    workers = std::clamp(workers, 1, static_cast<int>(x0s.size()));

    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        for (std::size_t k = next++; k < x0s.size(); k = next++) {
            try {
                out[k].run = sample(field, sched, x0s[k], cost, constraints, cfg);
            } catch (const Error& e) {
                out[k].error = e.what();
            }
        }
    };
    if (workers == 1) {
        work();
        return out;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
    return out;
}

} // namespace hardflow
