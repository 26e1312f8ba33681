#include "hardflow/verification.hpp"

#include "hardflow/optim.hpp"
#include "hardflow/step_solver.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <thread>

namespace hardflow {

// ---------------------------------------------------------------- full horizon

std::vector<Vec> rollout(const VelocityField& field, const TimeGrid& grid, const Vec& x0, const std::vector<Vec>& controls)
{
    if (static_cast<int>(controls.size()) != grid.steps()) throw DimensionError("one control per grid step expected");
    std::vector<Vec> xs;
    xs.reserve(controls.size() + 1);
    xs.push_back(x0);
    for (int j = 0; j < grid.steps(); ++j) {
        const Vec& x = xs.back();
        xs.push_back(x + (field.eval(grid.t(j), x) + controls[static_cast<std::size_t>(j)]) * grid.dt(j));
    }
    return xs;
}

namespace {

std::vector<Vec> unflatten(const Vec& u, int n, int d)
{
    std::vector<Vec> out(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(j)] = u.segment(j * d, d);
    return out;
}

Vec flatten(const std::vector<Vec>& us)
{
    const auto d = us.empty() ? 0 : us.front().size();
    Vec u(static_cast<Eigen::Index>(us.size()) * d);
    for (std::size_t j = 0; j < us.size(); ++j) u.segment(static_cast<Eigen::Index>(j) * d, d) = us[j];
    return u;
}

/// Caches the last rollout so objective and constraints share it.
class Transcription {
public:
    Transcription(const VelocityField& field, const TimeGrid& grid, const Vec& x0)
        : field_(field), grid_(grid), x0_(x0), d_(static_cast<int>(x0.size()))
    {
    }

    const std::vector<Vec>& states(const Vec& u)
    {
        if (cached_u_.size() != u.size() || cached_u_ != u) {
            cached_u_ = u;
            states_ = rollout(field_, grid_, x0_, unflatten(u, grid_.steps(), d_));
        }
        return states_;
    }

    /// Gradient w.r.t. u of a terminal function with gradient p_N at x_N.
    Vec backprop(const Vec& u, const Vec& terminal_grad)
    {
        const auto& xs = states(u);
        Vec grad(u.size());
        Vec p = terminal_grad;
        for (int j = grid_.steps() - 1; j >= 0; --j) {
            const double dt = grid_.dt(j);
            grad.segment(j * d_, d_) = dt * p;
            p += dt * field_.input_vjp(grid_.t(j), xs[static_cast<std::size_t>(j)], p);
        }
        return grad;
    }

private:
    const VelocityField& field_;
    const TimeGrid& grid_;
    Vec x0_;
    int d_;
    Vec cached_u_;
    std::vector<Vec> states_;
};

} // namespace

FullHorizonSolution solve_full_horizon(const VelocityField& field, const TimeGrid& grid, const Vec& x0,
                                       const CostFn& cost, const ConstraintSet& constraints, double lambda_oc,
                                       const FullHorizonOptions& opts)
{
    const int d = field.dim();
    const int n = grid.steps();
    if (x0.size() != d) throw DimensionError("initial point does not match the field dimension");
    if (d * n > opts.max_variables) throw ConfigError("full-horizon oracle limited to d * N <= " + std::to_string(opts.max_variables));
    if (!field.has_input_vjp()) throw CapabilityError("full-horizon oracle needs the field's input VJP");
    if (!(lambda_oc > 0.0)) throw ConfigError("lambda_oc must be positive");
    if (opts.starts < 1) throw ConfigError("at least one start is required");

    auto tr = std::make_shared<Transcription>(field, grid, x0);
    Vec dt_weights(d * n);
    for (int j = 0; j < n; ++j) dt_weights.segment(j * d, d).setConstant(lambda_oc * grid.dt(j));

    NlpProblem nlp;
    nlp.dim = d * n;
    nlp.objective = [&, tr](const Vec& u, Vec* grad) {
        const Vec& xn = tr->states(u).back();
        if (grad != nullptr) *grad = tr->backprop(u, cost.gradient(xn)) + dt_weights.cwiseProduct(u);
        return cost.value(xn) + 0.5 * u.cwiseProduct(dt_weights).dot(u);
    };
    nlp.num_constraints = constraints.size();
    nlp.constraints = [&, tr](const Vec& u) { return constraints.values(tr->states(u).back()); };
    nlp.constraint_vjp = [&, tr](const Vec& u, const Vec& w) {
        return tr->backprop(u, constraints.weighted_gradient(tr->states(u).back(), w));
    };

    AlSettings settings;
    settings.max_outer = opts.max_outer;
    settings.feas_tol = opts.feas_tol;
    settings.stat_tol = opts.stat_tol;
    settings.compl_tol = opts.stat_tol;

    // Starts: zero, constant steering toward a feasible point near the nominal end, random.
    std::vector<Vec> starts;
    starts.push_back(Vec::Zero(d * n));
    if (opts.starts > 1) {
        const Vec nominal_end = rollout(field, grid, x0, std::vector<Vec>(static_cast<std::size_t>(n), Vec::Zero(d))).back();
        Vec target = nominal_end;
        if (!constraints.empty()) {
            if (projection_available(constraints)) {
                target = project(constraints, nominal_end);
            } else {
                const CostFn zero = CostFn::zero(d);
                SubproblemInstance inst{nominal_end, 1.0, zero, constraints};
                target = solve_aug_lagrangian(inst, SolverConfig{}).solution;
            }
        }
        starts.push_back(flatten(std::vector<Vec>(static_cast<std::size_t>(n), target - nominal_end)));
    }
    std::mt19937_64 rng(mix_seed(opts.seed, 0xF0));
    std::normal_distribution<double> normal(0.0, opts.random_scale);
    while (static_cast<int>(starts.size()) < opts.starts) {
        Vec u(d * n);
        for (Eigen::Index k = 0; k < u.size(); ++k) u(k) = normal(rng);
        starts.push_back(u);
    }

    FullHorizonSolution best;
    best.objective = std::numeric_limits<double>::infinity();
    best.residual = std::numeric_limits<double>::infinity();
    bool have = false;
    for (const Vec& s : starts) {
        AlOutcome al;
        try {
            al = augmented_lagrangian(nlp, s, settings);
        } catch (const NumericalError&) {
            ++best.starts_run;
            continue;
        }
        ++best.starts_run;
        if (al.converged) ++best.starts_converged;
        const auto key_new = std::make_pair(std::max(al.residual, opts.feas_tol), al.objective);
        const auto key_old = std::make_pair(std::max(best.residual, opts.feas_tol), best.objective);
        if (!have || key_new < key_old) {
            have = true;
            best.controls = unflatten(al.x, n, d);
            best.objective = al.objective;
            best.residual = al.residual;
            best.converged = al.converged;
        }
    }
    if (!have) throw NumericalError("every full-horizon start diverged");
    best.states = rollout(field, grid, x0, best.controls);
    best.objective = control_objective(cost, best.states.back(), best.controls, grid, lambda_oc);
    best.residual = constraints.empty() ? 0.0 : constraints.values(best.states.back()).maxCoeff();
    return best;
}

// ---------------------------------------------------------- fixed-point inverse

FixedPointReport invert_posterior_mean(const VelocityField& field, const Scheduler& sched, double t, const Vec& y,
                                       const Vec& x_init, const FixedPointOptions& opts)
{
    if (y.size() != field.dim() || x_init.size() != field.dim()) throw DimensionError("inversion point dimension mismatch");
    FixedPointReport rep;
    rep.target = y;
    const double a = sched.alpha(t);
    const double b = sched.beta(t);

    auto step = [&](const Vec& x) -> Vec {
        if (b == 0.0) return a * y;
        return a * y + b * posterior_noise(sched, t, x, field.eval(t, x));
    };

    Vec x = x_init;
    if (opts.keep_iterates) rep.iterates.push_back(x);
    double prev_diff = -1.0;
    Vec first;
    for (int k = 0; k < opts.max_iter; ++k) {
        Vec nx = step(x);
        if (!nx.allFinite()) {
            rep.diverged = true;
            break;
        }
        if (k == 0) first = nx;
        const double diff = (nx - x).norm();
        if (prev_diff > 0.0) {
            rep.contraction = diff / prev_diff;
            rep.max_contraction = std::max(rep.max_contraction, rep.contraction);
        }
        x = std::move(nx);
        ++rep.iterations;
        if (opts.keep_iterates) rep.iterates.push_back(x);
        if (diff <= opts.tol * std::max(1.0, x.norm())) {
            rep.converged = true;
            break;
        }
        if (prev_diff > 0.0 && diff > 1e8 * prev_diff) {
            rep.diverged = true;
            break;
        }
        prev_diff = diff;
    }
    if (!rep.converged && rep.contraction >= 1.0) rep.diverged = true;
    rep.solution = x;
    if (first.size() == 0) first = x;
    rep.one_step_error = (first - x).norm();
    if (x.allFinite()) rep.mean_residual = (posterior_mean(sched, t, x, field.eval(t, x)) - y).norm();
    else rep.mean_residual = std::numeric_limits<double>::infinity();
    return rep;
}

// --------------------------------------------------------- one-step inversion bound

double estimate_noise_lipschitz(const VelocityField& field, const Scheduler& sched, double t, const Vec& center,
                                double radius, int samples, std::uint64_t seed)
{
    const int d = field.dim();
    std::mt19937_64 rng(mix_seed(seed, 0x11));
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    auto unit = [&]() {
        Vec u(d);
        for (int k = 0; k < d; ++k) u(k) = normal(rng);
        return Vec(u / u.norm());
    };
    auto noise = [&](const Vec& x) { return posterior_noise(sched, t, x, field.eval(t, x)); };
    const double h = 1e-5;
    double best = 0.0;
    for (int s = 0; s < samples; ++s) {
        const Vec p = center + radius * std::pow(unif(rng), 1.0 / d) * unit();
        const Vec e = unit();
        best = std::max(best, (noise(p + h * e) - noise(p - h * e)).norm() / (2.0 * h));
    }
    return best;
}

BoundReport check_theorem3_bound(const VelocityField& field, const Scheduler& sched, double t_next, double dt,
                                 double lambda_oc, const Vec& x_pred, const std::vector<Vec>& probes,
                                 const BoundOptions& opts)
{
    BoundReport rep;
    rep.t = t_next;
    rep.dt = dt;
    rep.alpha = sched.alpha(t_next);
    rep.beta = sched.beta(t_next);
    const double scale = lambda_oc / (2.0 * dt);
    const Vec v_pred = field.eval(t_next, x_pred);
    const Vec ybar = posterior_mean(sched, t_next, x_pred, v_pred);
    const Vec nbar = rep.beta == 0.0 ? Vec::Zero(x_pred.size()) : posterior_noise(sched, t_next, x_pred, v_pred);

    struct Pending {
        Vec one_step;
        Vec exact;
        bool ok;
    };
    std::vector<Pending> pending;
    double radius = 1e-3;
    FixedPointOptions fp;
    fp.keep_iterates = false;
    fp.tol = 1e-13;
    for (const Vec& y : probes) {
        const Vec one = rep.alpha * y + rep.beta * nbar;
        const auto inv = invert_posterior_mean(field, sched, t_next, y, x_pred, fp);
        pending.push_back({one, inv.solution, inv.converged});
        radius = std::max({radius, (one - x_pred).norm(), inv.converged ? (inv.solution - x_pred).norm() : 0.0});
    }

    rep.lipschitz = opts.lipschitz ? *opts.lipschitz
                                   : estimate_noise_lipschitz(field, sched, t_next, x_pred, 1.05 * radius,
                                                              opts.lipschitz_samples, opts.seed);
    const double safety = opts.lipschitz ? 1.0 : opts.safety;
    rep.r = std::abs(rep.beta) * rep.lipschitz * safety;
    rep.applicable = rep.r < 1.0 && std::all_of(pending.begin(), pending.end(), [](const Pending& p) { return p.ok; });
    rep.holds = rep.applicable;
    if (!rep.applicable) return rep;

    const double factor = rep.r * (2.0 - rep.r) / ((1.0 - rep.r) * (1.0 - rep.r));
    for (std::size_t k = 0; k < probes.size(); ++k) {
        BoundProbe pr;
        pr.y = probes[k];
        const double q5 = (pending[k].exact - x_pred).squaredNorm();
        const double q6 = (pending[k].one_step - x_pred).squaredNorm();
        pr.gap = scale * std::abs(q5 - q6);
        pr.bound = scale * factor * rep.alpha * rep.alpha * (probes[k] - ybar).squaredNorm();
        // Rounding slack for the difference of two nearly equal squared norms.
        const double slack = 1e-12 * scale * (q5 + q6) + 1e-300;
        pr.holds = pr.gap <= pr.bound + slack;
        if (pr.bound > 0.0) rep.max_ratio = std::max(rep.max_ratio, pr.gap / pr.bound);
        rep.holds = rep.holds && pr.holds;
        rep.probes.push_back(std::move(pr));
    }
    return rep;
}

// ------------------------------------------------------------- consistency error

double ConsistencyReport::mean() const
{
    if (errors.empty()) return 0.0;
    return std::accumulate(errors.begin(), errors.end(), 0.0) / static_cast<double>(errors.size());
}

ConsistencyReport measure_consistency_error(const VelocityField& field, const Scheduler& sched, const TimeGrid& grid,
                                            const std::vector<Vec>& starts)
{
    ConsistencyReport rep;
    rep.steps = grid.steps();
    rep.errors.assign(static_cast<std::size_t>(grid.steps()), 0.0);
    for (const Vec& x0 : starts) {
        Vec x = x0;
        Vec v = field.eval(grid.t(0), x);
        Vec m = posterior_mean(sched, grid.t(0), x, v);
        for (int i = 0; i < grid.steps(); ++i) {
            const Vec next = x + v * grid.dt(i);
            const Vec v_next = field.eval(grid.t(i + 1), next);
            const Vec m_next = posterior_mean(sched, grid.t(i + 1), next, v_next);
            auto& e = rep.errors[static_cast<std::size_t>(i)];
            e = std::max(e, (m_next - m).norm());
            x = next;
            v = v_next;
            m = m_next;
        }
    }
    return rep;
}

// --------------------------------------------------------------- energy distance

namespace {

/// Row-major n x d copy for tight distance loops.
struct Points {
    std::vector<double> data;
    int n = 0;
    int d = 0;

    explicit Points(const std::vector<Vec>& pts)
    {
        n = static_cast<int>(pts.size());
        d = n > 0 ? static_cast<int>(pts.front().size()) : 0;
        data.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(d));
        for (int i = 0; i < n; ++i) {
            if (pts[static_cast<std::size_t>(i)].size() != d) throw DimensionError("energy distance: ragged sample set");
            for (int k = 0; k < d; ++k) data[static_cast<std::size_t>(i * d + k)] = pts[static_cast<std::size_t>(i)](k);
        }
    }

    const double* row(int i) const { return data.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(d); }
};

inline double dist(const double* a, const double* b, int d)
{
    double s = 0.0;
    for (int k = 0; k < d; ++k) {
        const double z = a[k] - b[k];
        s += z * z;
    }
    return std::sqrt(s);
}

/// Weighted all-pairs mean distance; idx/w list the points with nonzero weight.
double cross_mean(const Points& a, const std::vector<int>& ia, const std::vector<double>& wa, const Points& b,
                  const std::vector<int>& ib, const std::vector<double>& wb)
{
    double total = 0.0, wsum_a = 0.0, wsum_b = 0.0;
    for (double w : wa) wsum_a += w;
    for (double w : wb) wsum_b += w;
    for (std::size_t i = 0; i < ia.size(); ++i) {
        const double* p = a.row(ia[i]);
        double row = 0.0;
        for (std::size_t j = 0; j < ib.size(); ++j) row += wb[j] * dist(p, b.row(ib[j]), a.d);
        total += wa[i] * row;
    }
    return total / (wsum_a * wsum_b);
}

double self_mean(const Points& a, const std::vector<int>& ia, const std::vector<double>& wa)
{
    double total = 0.0, wsum = 0.0;
    for (double w : wa) wsum += w;
    for (std::size_t i = 0; i < ia.size(); ++i) {
        const double* p = a.row(ia[i]);
        double row = 0.0;
        for (std::size_t j = i + 1; j < ia.size(); ++j) row += wa[j] * dist(p, a.row(ia[j]), a.d);
        total += wa[i] * row;
    }
    return 2.0 * total / (wsum * wsum);
}

double energy_from(const Points& a, const std::vector<int>& ia, const std::vector<double>& wa, const Points& b,
                   const std::vector<int>& ib, const std::vector<double>& wb)
{
    const double e2 = 2.0 * cross_mean(a, ia, wa, b, ib, wb) - self_mean(a, ia, wa) - self_mean(b, ib, wb);
    return std::sqrt(std::max(0.0, e2));
}

void all_indices(int n, std::vector<int>& idx, std::vector<double>& w)
{
    idx.resize(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    w.assign(static_cast<std::size_t>(n), 1.0);
}

void resample(int n, std::mt19937_64& rng, std::vector<int>& idx, std::vector<double>& w)
{
    std::vector<int> counts(static_cast<std::size_t>(n), 0);
    std::uniform_int_distribution<int> pick(0, n - 1);
    for (int k = 0; k < n; ++k) ++counts[static_cast<std::size_t>(pick(rng))];
    idx.clear();
    w.clear();
    for (int i = 0; i < n; ++i) {
        if (counts[static_cast<std::size_t>(i)] > 0) {
            idx.push_back(i);
            w.push_back(counts[static_cast<std::size_t>(i)]);
        }
    }
}

double quantile(std::vector<double> v, double q)
{
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

} // namespace

double energy_distance(const std::vector<Vec>& a, const std::vector<Vec>& b)
{
    if (a.empty() || b.empty()) throw ConfigError("energy distance needs two non-empty sample sets");
    const Points pa(a), pb(b);
    if (pa.d != pb.d) throw DimensionError("energy distance: sample sets differ in dimension");
    std::vector<int> ia, ib;
    std::vector<double> wa, wb;
    all_indices(pa.n, ia, wa);
    all_indices(pb.n, ib, wb);
    return energy_from(pa, ia, wa, pb, ib, wb);
}

EnergyInterval energy_distance_bootstrap(const std::vector<Vec>& a, const std::vector<Vec>& b, int replicates,
                                         std::uint64_t seed, double level, int threads)
{
    if (replicates < 2) throw ConfigError("bootstrap needs at least two replicates");
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must lie in (0, 1)");
    EnergyInterval out;
    out.estimate = energy_distance(a, b);
    const Points pa(a), pb(b);
    out.replicates.assign(static_cast<std::size_t>(replicates), 0.0);

    std::atomic<int> next{0};
    auto work = [&]() {
        std::vector<int> ia, ib;
        std::vector<double> wa, wb;
        for (int r = next++; r < replicates; r = next++) {
            std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(r)));
            resample(pa.n, rng, ia, wa);
            resample(pb.n, rng, ib, wb);
            out.replicates[static_cast<std::size_t>(r)] = energy_from(pa, ia, wa, pb, ib, wb);
        }
    };
    int workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
    workers = std::clamp(workers, 1, replicates);
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    out.lo = quantile(out.replicates, 0.5 * (1.0 - level));
    out.hi = quantile(out.replicates, 1.0 - 0.5 * (1.0 - level));
    return out;
}

// ----------------------------------------------------- receding-horizon variants

namespace {

/// J_M(x)^T g for M_t(x) = (beta_dot x - beta v(x)) / Lambda.
Vec mean_vjp(const VelocityField& field, const Scheduler& sched, double t, const Vec& x, const Vec& g)
{
    const double b = sched.beta(t);
    if (b == 0.0) return g;
    return (sched.beta_dot(t) * g - b * hardflow::input_vjp(field, t, x, g)) / lambda_of(sched, t);
}

/// J_N(x)^T g for N_t(x) = (-alpha_dot x + alpha v(x)) / Lambda.
Vec noise_vjp(const VelocityField& field, const Scheduler& sched, double t, const Vec& x, const Vec& g)
{
    return (-sched.alpha_dot(t) * g + sched.alpha(t) * hardflow::input_vjp(field, t, x, g)) / lambda_of(sched, t);
}

using StepSolve = std::function<Vec(int i, double t1, double weight, const Vec& predicted)>;

SampleRun receding(SamplerMethod tag, const VelocityField& field, const Vec& x0, const CostFn& cost,
                   const ConstraintSet& constraints, const SamplerConfig& cfg, const StepSolve& solve)
{
    cfg.validate();
    if (x0.size() != field.dim()) throw DimensionError("initial point does not match the field dimension");
    const TimeGrid& grid = cfg.grid;
    const int n = grid.steps();
    SampleRun run;
    run.method = tag;
    run.x0 = x0;
    run.states.push_back(x0);
    Vec x = x0;
    for (int i = 0; i < n; ++i) {
        const double dt = grid.dt(i);
        const Vec predicted = x + field.eval(grid.t(i), x) * dt;
        Vec next = predicted;
        if (static_cast<double>(i) >= cfg.activation * n) next = solve(i, grid.t(i + 1), cfg.lambda_oc / dt, predicted);
        if (!next.allFinite()) throw NumericalError("receding-horizon state became non-finite");
        run.controls.push_back((next - predicted) / dt);
        x = next;
        run.states.push_back(x);
    }
    run.cost = cost.value(x);
    run.terminal_report = residual(constraints, x);
    run.objective = control_objective(cost, x, run.controls, grid, cfg.lambda_oc);
    return run;
}

AlSettings tight_settings(const SamplerConfig& cfg)
{
    AlSettings s = cfg.solver.al_settings();
    s.stat_tol = std::min(s.stat_tol, 1e-9);
    s.compl_tol = s.stat_tol;
    s.feas_tol = std::min(s.feas_tol, 1e-11);
    s.max_outer = std::max(s.max_outer, 4000);
    return s;
}

} // namespace

SampleRun sample_receding_state(const VelocityField& field, const Scheduler& sched, const Vec& x0, const CostFn& cost,
                                const ConstraintSet& constraints, const SamplerConfig& cfg)
{
    if (!field.has_input_vjp()) throw CapabilityError("state-space recursion needs the field's input VJP");
    const AlSettings settings = tight_settings(cfg);
    auto solve = [&](int i, double t1, double weight, const Vec& predicted) -> Vec {
        auto mean_at = [&](const Vec& z) { return posterior_mean(sched, t1, z, field.eval(t1, z)); };
        NlpProblem nlp;
        nlp.dim = static_cast<int>(predicted.size());
        nlp.objective = [&](const Vec& z, Vec* grad) {
            const Vec m = mean_at(z);
            if (grad != nullptr) *grad = mean_vjp(field, sched, t1, z, cost.gradient(m)) + weight * (z - predicted);
            return cost.value(m) + 0.5 * weight * (z - predicted).squaredNorm();
        };
        nlp.num_constraints = constraints.size();
        nlp.constraints = [&](const Vec& z) { return constraints.values(mean_at(z)); };
        nlp.constraint_vjp = [&](const Vec& z, const Vec& w) {
            return mean_vjp(field, sched, t1, z, constraints.weighted_gradient(mean_at(z), w));
        };
        const AlOutcome al = augmented_lagrangian(nlp, predicted, settings);
        if (i == cfg.grid.steps() - 1 && !al.converged) throw SolverFailure("state-space recursion: final step did not converge");
        return al.x;
    };
    return receding(SamplerMethod::HardFlow, field, x0, cost, constraints, cfg, solve);
}

SampleRun sample_receding_inverse(const VelocityField& field, const Scheduler& sched, const Vec& x0, const CostFn& cost,
                                  const ConstraintSet& constraints, const SamplerConfig& cfg)
{
    if (!field.has_input_vjp()) throw CapabilityError("inverse recursion needs the field's input VJP");
    const AlSettings settings = tight_settings(cfg);
    FixedPointOptions fp;
    fp.tol = 1e-14;
    fp.keep_iterates = false;

    auto solve = [&](int i, double t1, double weight, const Vec& predicted) -> Vec {
        const double a = sched.alpha(t1);
        const double b = sched.beta(t1);
        Vec warm = predicted;
        auto inverse = [&](const Vec& y) -> Vec {
            const auto rep = invert_posterior_mean(field, sched, t1, y, warm, fp);
            if (!rep.converged) throw NumericalError("inverse recursion: fixed-point inversion did not converge");
            warm = rep.solution;
            return rep.solution;
        };
        NlpProblem nlp;
        nlp.dim = static_cast<int>(predicted.size());
        nlp.objective = [&](const Vec& y, Vec* grad) {
            const Vec xs = inverse(y);
            if (grad != nullptr) {
                // dx*/dy = a (I - b J_N)^{-1}; solve z = r + b J_N^T z by iteration.
                const Vec r = weight * (xs - predicted);
                Vec z = r;
                if (b != 0.0) {
                    for (int k = 0; k < 10000; ++k) {
                        const Vec nz = r + b * noise_vjp(field, sched, t1, xs, z);
                        const double change = (nz - z).norm();
                        z = nz;
                        if (change <= 1e-15 * std::max(1.0, z.norm())) break;
                    }
                }
                *grad = cost.gradient(y) + a * z;
            }
            return cost.value(y) + 0.5 * weight * (xs - predicted).squaredNorm();
        };
        nlp.num_constraints = constraints.size();
        nlp.constraints = [&](const Vec& y) { return constraints.values(y); };
        nlp.constraint_vjp = [&](const Vec& y, const Vec& w) { return constraints.weighted_gradient(y, w); };
        const Vec start = posterior_mean(sched, t1, predicted, field.eval(t1, predicted));
        const AlOutcome al = augmented_lagrangian(nlp, start, settings);
        if (i == cfg.grid.steps() - 1 && !al.converged) throw SolverFailure("inverse recursion: final step did not converge");
        warm = predicted;
        return inverse(al.x);
    };
    return receding(SamplerMethod::HardFlow, field, x0, cost, constraints, cfg, solve);
}

} // namespace hardflow
