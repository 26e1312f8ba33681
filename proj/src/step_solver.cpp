#include "hardflow/step_solver.hpp"

#include <cmath>
#include <limits>
#include <set>

namespace hardflow {

std::string solver_method_name(SolverMethod m)
{
    switch (m) {
    case SolverMethod::Auto: return "auto";
    case SolverMethod::ClosedForm: return "closed-form";
    case SolverMethod::ProjectedGradient: return "projected-gradient";
    case SolverMethod::AugmentedLagrangian: return "augmented-lagrangian";
    }
    return "unknown";
}

SolverMethod parse_solver_method(const std::string& name)
{
    if (name == "auto") return SolverMethod::Auto;
    if (name == "closed-form") return SolverMethod::ClosedForm;
    if (name == "projected-gradient") return SolverMethod::ProjectedGradient;
    if (name == "augmented-lagrangian") return SolverMethod::AugmentedLagrangian;
    throw ConfigError("unknown solver method '" + name + "'");
}

void SolverConfig::validate() const
{
    if (max_outer <= 0 || update_period <= 0 || max_iterations <= 0 || penalty_window <= 0) throw ConfigError("solver budgets must be positive");
    if (!(penalty_init > 0.0)) throw ConfigError("initial penalty must be positive");
    if (!(penalty_growth > 1.0)) throw ConfigError("penalty growth factor must exceed 1");
    if (!(feas_tol > 0.0) || !(stat_tol > 0.0)) throw ConfigError("solver tolerances must be positive");
    if (step_size < 0.0) throw ConfigError("step size must be non-negative");
}

AlSettings SolverConfig::al_settings() const
{
    AlSettings s;
    s.max_outer = max_outer;
    s.update_period = update_period;
    s.penalty_init = penalty_init;
    s.penalty_growth = penalty_growth;
    s.penalty_window = penalty_window;
    s.feas_tol = feas_tol;
    s.stat_tol = stat_tol;
    s.compl_tol = stat_tol;
    return s;
}

double SubproblemInstance::objective(const Vec& x) const
{
    return cost.value(x) + 0.5 * weight * (x - anchor).squaredNorm();
}

Vec SubproblemInstance::gradient(const Vec& x) const { return cost.gradient(x) + weight * (x - anchor); }

void SubproblemInstance::validate() const
{
    if (!(weight > 0.0) || !std::isfinite(weight)) throw ConfigError("subproblem weight must be positive and finite");
    if (!anchor.allFinite()) throw NumericalError("subproblem anchor is not finite");
    if (cost.dim() != anchor.size() || constraints.dim() != anchor.size()) {
        throw DimensionError("subproblem cost/constraints do not match the anchor dimension");
    }
    if (warm_start && warm_start->size() != anchor.size()) throw DimensionError("warm start has the wrong dimension");
}

namespace {

double max_residual(const ConstraintSet& cs, const Vec& x)
{
    if (cs.empty()) return 0.0;
    return cs.values(x).maxCoeff();
}

bool only_boxes(const ConstraintSet& cs)
{
    if (cs.blocks().empty()) return false;
    for (const auto& b : cs.blocks()) {
        if (!std::holds_alternative<Box>(b)) return false;
    }
    return true;
}

bool single_halfspace(const ConstraintSet& cs)
{
    return cs.blocks().size() == 1 && std::holds_alternative<Halfspace>(cs.blocks().front());
}

/// Selector rows are distinct unit coordinate vectors.
bool coordinate_ball(const ConstraintSet& cs)
{
    if (cs.blocks().size() != 1 || !std::holds_alternative<BallObstacle>(cs.blocks().front())) return false;
    const auto& o = std::get<BallObstacle>(cs.blocks().front());
    std::set<Eigen::Index> used;
    for (Eigen::Index r = 0; r < o.selector.rows(); ++r) {
        Eigen::Index col = 0;
        const double maxv = o.selector.row(r).maxCoeff(&col);
        if (maxv != 1.0 || o.selector.row(r).cwiseAbs().sum() != 1.0 || !used.insert(col).second) return false;
    }
    return true;
}

std::pair<Vec, Vec> merged_box(const ConstraintSet& cs)
{
    const double inf = std::numeric_limits<double>::infinity();
    Vec lo = Vec::Constant(cs.dim(), -inf), hi = Vec::Constant(cs.dim(), inf);
    for (const auto& b : cs.blocks()) {
        const auto& box = std::get<Box>(b);
        lo = lo.cwiseMax(box.lo);
        hi = hi.cwiseMin(box.hi);
    }
    if ((lo.array() > hi.array()).any()) throw UnsupportedStructureError("box constraints have an empty intersection");
    return {lo, hi};
}

/// Multipliers for box components given per-coordinate forces (positive pushes down from hi).
Vec box_multipliers(const ConstraintSet& cs, const Vec& upper_force, const Vec& lower_force)
{
    Vec mu = Vec::Zero(cs.size());
    std::vector<bool> upper_done(static_cast<std::size_t>(cs.dim()), false), lower_done(upper_done);
    int offset = 0;
    for (const auto& b : cs.blocks()) {
        const auto& box = std::get<Box>(b);
        for (Eigen::Index k = 0; k < box.hi.size(); ++k) {
            const auto uk = static_cast<std::size_t>(k);
            if (std::isfinite(box.hi(k))) {
                if (!upper_done[uk] && upper_force(k) > 0.0) {
                    mu(offset) = upper_force(k);
                    upper_done[uk] = true;
                }
                ++offset;
            }
            if (std::isfinite(box.lo(k))) {
                if (!lower_done[uk] && lower_force(k) > 0.0) {
                    mu(offset) = lower_force(k);
                    lower_done[uk] = true;
                }
                ++offset;
            }
        }
    }
    return mu;
}

void finish(SolverResult& r, const SubproblemInstance& inst)
{
    r.objective = inst.objective(r.solution);
    r.residual = max_residual(inst.constraints, r.solution);
}

} // namespace

bool closed_form_applicable(const SubproblemInstance& inst)
{
    if (!inst.cost.is_diagonal_quadratic()) return false;
    const auto& cs = inst.constraints;
    return cs.blocks().empty() || single_halfspace(cs) || only_boxes(cs);
}

bool projection_available(const ConstraintSet& cs)
{
    return cs.blocks().empty() || single_halfspace(cs) || only_boxes(cs) || coordinate_ball(cs);
}

Vec project(const ConstraintSet& cs, const Vec& x)
{
    if (x.size() != cs.dim()) throw DimensionError("projection argument has the wrong dimension");
    if (cs.blocks().empty()) return x;
    if (single_halfspace(cs)) {
        const auto& h = std::get<Halfspace>(cs.blocks().front());
        const double viol = h.a.dot(x) - h.b;
        if (viol <= 0.0) return x;
        return x - (viol / h.a.squaredNorm()) * h.a;
    }
    if (only_boxes(cs)) {
        const auto [lo, hi] = merged_box(cs);
        return x.cwiseMax(lo).cwiseMin(hi);
    }
    if (coordinate_ball(cs)) {
        const auto& o = std::get<BallObstacle>(cs.blocks().front());
        Vec diff = o.selector * x - o.center;
        const double dist = diff.norm();
        if (dist >= o.radius) return x;
        if (dist < 1e-12) {
            diff.setZero();
            diff(0) = 1.0;
        } else {
            diff /= dist;
        }
        // Selector rows are unit vectors, so S^T S acts as a coordinate mask.
        const Vec target = o.center + o.radius * diff;
        return x + o.selector.transpose() * (target - o.selector * x);
    }
    throw UnsupportedStructureError("no exact Euclidean projection for this constraint set");
}

SolverResult solve_closed_form(const SubproblemInstance& inst)
{
    inst.validate();
    if (!closed_form_applicable(inst)) {
        throw UnsupportedStructureError(
            "closed form needs a zero/diagonal-quadratic cost and a single halfspace or box constraints");
    }
    const auto& cs = inst.constraints;
    const Vec& q = inst.cost.quadratic_weights();
    const Vec curvature = (q.array() + 0.5 * inst.weight).matrix();  // objective = sum_k curvature_k (x_k - z_k)^2 + const
    const Vec z = inst.cost.kind() == CostKind::Zero
                      ? inst.anchor
                      : Vec(((q.cwiseProduct(inst.cost.quadratic_target()) + 0.5 * inst.weight * inst.anchor).array() /
                             curvature.array())
                                .matrix());

    SolverResult r;
    r.method = SolverMethod::ClosedForm;
    r.converged = true;
    r.multipliers = Vec::Zero(cs.size());
    if (cs.blocks().empty()) {
        r.solution = z;
    } else if (single_halfspace(cs)) {
        const auto& h = std::get<Halfspace>(cs.blocks().front());
        const double viol = h.a.dot(z) - h.b;
        if (viol <= 0.0) {
            r.solution = z;
        } else {
            const Vec scaled = (h.a.array() / curvature.array()).matrix();
            const double theta = viol / h.a.dot(scaled);
            r.solution = z - theta * scaled;
            r.multipliers(0) = 2.0 * theta;
        }
    } else {
        const auto [lo, hi] = merged_box(cs);
        r.solution = z.cwiseMax(lo).cwiseMin(hi);
        const Vec upper = (2.0 * curvature.array() * (z - hi).array().max(0.0)).matrix();
        const Vec lower = (2.0 * curvature.array() * (lo - z).array().max(0.0)).matrix();
        r.multipliers = box_multipliers(cs, upper, lower);
    }
    finish(r, inst);
    Vec kkt = inst.gradient(r.solution);
    if (!cs.empty()) kkt += cs.weighted_gradient(r.solution, r.multipliers);
    r.stationarity = kkt.norm();
    return r;
}

SolverResult solve_aug_lagrangian(const SubproblemInstance& inst, const SolverConfig& cfg, AlState* state)
{
    inst.validate();
    cfg.validate();
    const auto& cs = inst.constraints;
    NlpProblem nlp;
    nlp.dim = static_cast<int>(inst.anchor.size());
    nlp.objective = [&inst](const Vec& x, Vec* grad) {
        if (grad != nullptr) *grad = inst.gradient(x);
        return inst.objective(x);
    };
    nlp.num_constraints = cs.size();
    nlp.constraints = [&cs](const Vec& x) { return cs.values(x); };
    nlp.constraint_vjp = [&cs](const Vec& x, const Vec& w) { return cs.weighted_gradient(x, w); };
    if (auto hc = inst.cost.hessian(); hc && nlp.dim <= kDenseNewtonLimit) {
        hc->diagonal().array() += inst.weight;
        nlp.objective_hessian = [h = *hc](const Vec&) { return h; };
        nlp.constraint_jacobian = [&cs](const Vec& x) { return cs.jacobian(x); };
    }

    const Vec start = inst.warm_start ? *inst.warm_start : inst.anchor;
    const AlOutcome al = augmented_lagrangian(nlp, start, cfg.al_settings(), state);

    SolverResult r;
    r.method = SolverMethod::AugmentedLagrangian;
    r.solution = al.x;
    r.iterations = al.inner_iterations;
    r.converged = al.converged;
    r.stationarity = al.stationarity;
    r.complementarity = al.complementarity;
    r.multipliers = al.multipliers;
    finish(r, inst);
    return r;
}

SolverResult solve_projected_gradient(const SubproblemInstance& inst, const SolverConfig& cfg)
{
    inst.validate();
    cfg.validate();
    if (!projection_available(inst.constraints)) {
        throw UnsupportedStructureError("projected gradient needs a halfspace, box or single ball-obstacle set");
    }
    const auto& cs = inst.constraints;

    double step = cfg.step_size;
    if (step == 0.0) {
        double curvature = inst.weight;
        if (inst.cost.is_diagonal_quadratic() && inst.cost.quadratic_weights().size() > 0) {
            curvature += 2.0 * inst.cost.quadratic_weights().maxCoeff();
        }
        step = 1.0 / curvature;
    }

    SolverResult r;
    r.method = SolverMethod::ProjectedGradient;
    Vec x = project(cs, inst.warm_start ? *inst.warm_start : inst.anchor);
    double fx = inst.objective(x);
    r.objective_trace.push_back(fx);

    for (int it = 0; it < cfg.max_iterations; ++it) {
        const Vec g = inst.gradient(x);
        Vec x_new;
        double f_new = 0.0;
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            x_new = project(cs, x - step * g);
            f_new = inst.objective(x_new);
            const Vec d = x_new - x;
            if (f_new <= fx + g.dot(d) + d.squaredNorm() / (2.0 * step) && f_new <= fx) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        ++r.iterations;
        if (!accepted) break;
        const double mapping = (x_new - x).norm() / step;
        x = std::move(x_new);
        fx = f_new;
        r.objective_trace.push_back(fx);
        r.stationarity = mapping;
        if (mapping <= cfg.stat_tol) {
            r.converged = true;
            break;
        }
        step *= 1.25;
    }
    if (!x.allFinite()) throw NumericalError("projected gradient iterate became non-finite");
    r.solution = x;
    finish(r, inst);
    if (r.residual > cfg.feas_tol) r.converged = false;
    return r;
}

SolverResult solve_subproblem(const SubproblemInstance& inst, const SolverConfig& cfg)
{
    switch (cfg.method) {
    case SolverMethod::Auto:
        if (closed_form_applicable(inst)) return solve_closed_form(inst);
        return solve_aug_lagrangian(inst, cfg);
    case SolverMethod::ClosedForm: return solve_closed_form(inst);
    case SolverMethod::ProjectedGradient: return solve_projected_gradient(inst, cfg);
    case SolverMethod::AugmentedLagrangian: return solve_aug_lagrangian(inst, cfg);
    }
    throw ConfigError("unknown solver method");
}

} // namespace hardflow
