#include "hardflow/optim.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

namespace hardflow {

Vec Lbfgs::direction(const Vec& g) const
{
    // Two-loop recursion.
    Vec q = -g;
    const std::size_t k = s_.size();
    std::vector<double> alpha(k), rho(k);
    for (std::size_t i = k; i-- > 0;) {
        rho[i] = 1.0 / y_[i].dot(s_[i]);
        alpha[i] = rho[i] * s_[i].dot(q);
        q -= alpha[i] * y_[i];
    }
    if (k > 0) q *= s_.back().dot(y_.back()) / y_.back().squaredNorm();
    for (std::size_t i = 0; i < k; ++i) {
        const double beta = rho[i] * y_[i].dot(q);
        q += (alpha[i] - beta) * s_[i];
    }
    return q;
}

Lbfgs::Outcome Lbfgs::run(const Objective& f, Vec& x, int max_iter, double grad_tol)
{
    Outcome out;
    Vec g(x.size());
    double fx = f(x, &g);
    if (!std::isfinite(fx) || !g.allFinite()) throw NumericalError("non-finite objective at the starting point");

    for (int it = 0; it < max_iter; ++it) {
        const double gn = g.norm();
        if (gn <= grad_tol) break;

        Vec d = direction(g);
        double slope = g.dot(d);
        if (!(slope < 0.0) || !d.allFinite()) {
            reset();
            d = -g;
            slope = -gn * gn;
        }
        double step = s_.empty() ? std::min(1.0, 1.0 / gn) : 1.0;

        Vec x_new(x.size()), g_new(x.size());
        double f_new = 0.0;
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            x_new = x + step * d;
            f_new = f(x_new, &g_new);
            if (std::isfinite(f_new) && f_new <= fx + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            if (!s_.empty()) {
                // Memory may be stale after an outer update; retry from steepest descent.
                reset();
                continue;
            }
            out.stalled = true;
            break;
        }
        if (!g_new.allFinite()) throw NumericalError("non-finite gradient during line search");

        const Vec s = x_new - x;
        const Vec y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            s_.push_back(s);
            y_.push_back(y);
            if (static_cast<int>(s_.size()) > memory_) {
                s_.pop_front();
                y_.pop_front();
            }
        }
        x = std::move(x_new);
        g = std::move(g_new);
        fx = f_new;
        ++out.iterations;
    }
    out.value = fx;
    out.grad_norm = g.norm();
    return out;
}

namespace {

struct BestIterate {
    Vec x;
    double key_feas = std::numeric_limits<double>::infinity();
    double objective = std::numeric_limits<double>::infinity();
    double residual = std::numeric_limits<double>::infinity();
    double stationarity = 0.0;
    double complementarity = 0.0;
    Vec multipliers;

    void offer(const Vec& cand, double feas_tol, double obj, double res, double stat, double compl_, const Vec& mult)
    {
        const double key = std::max(res, feas_tol);
        if (key < key_feas || (key == key_feas && obj < objective)) {
            x = cand;
            key_feas = key;
            objective = obj;
            residual = res;
            stationarity = stat;
            complementarity = compl_;
            multipliers = mult;
        }
    }
};

} // namespace

namespace {

struct InnerOutcome {
    int iterations = 0;
};

// Damped Newton on the PHR Lagrangian with the constraint curvature dropped:
// H = hess f + rho * J_A^T J_A over the currently active rows.
InnerOutcome newton_inner(const NlpProblem& problem, const Objective& lagrangian, const Vec& lambda, double rho,
                          Vec& x, int max_iter, double grad_tol)
{
    InnerOutcome res;
    const int n = problem.dim;
    Vec g(n);
    double value = lagrangian(x, &g);
    for (int it = 0; it < max_iter; ++it) {
        if (!(g.norm() > grad_tol)) break;
        Mat H = problem.objective_hessian(x);
        if (problem.num_constraints > 0) {
            const Vec c = problem.constraints(x);
            const Mat J = problem.constraint_jacobian(x);
            std::vector<int> active;
            for (int i = 0; i < problem.num_constraints; ++i) {
                if (lambda(i) + rho * c(i) > 0.0) active.push_back(i);
            }
            if (!active.empty()) {
                const Mat JA = J(active, Eigen::all);
                H.noalias() += rho * JA.transpose() * JA;
            }
        }
        const double reg = 1e-12 * std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
        H.diagonal().array() += reg;
        Eigen::LDLT<Mat> ldlt(H);
        Vec d = -ldlt.solve(g);
        double slope = g.dot(d);
        if (ldlt.info() != Eigen::Success || !d.allFinite() || slope >= 0.0) {
            d = -g;
            slope = -g.squaredNorm();
        }
        double step = 1.0;
        bool accepted = false;
        Vec trial(n), gt(n);
        for (int ls = 0; ls < 50; ++ls) {
            trial = x + step * d;
            const double vt = lagrangian(trial, &gt);
            if (std::isfinite(vt) && vt <= value + 1e-4 * step * slope) {
                x = trial;
                value = vt;
                g = gt;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        ++res.iterations;
        if (!accepted) break;
    }
    return res;
}

} // namespace

AlOutcome augmented_lagrangian(const NlpProblem& problem, const Vec& x0, const AlSettings& settings, AlState* state)
{
    if (x0.size() != problem.dim) throw DimensionError("augmented Lagrangian start has the wrong dimension");
    const int m = problem.num_constraints;

    Vec lambda = Vec::Zero(m);
    double rho = settings.penalty_init;
    if (state != nullptr) {
        if (state->multipliers.size() == m) lambda = state->multipliers;
        if (state->penalty > 0.0) rho = state->penalty;
    }

    AlOutcome out;
    Vec x = x0;
    Lbfgs lbfgs(settings.memory);
    BestIterate best;
    double prev_feas = std::numeric_limits<double>::infinity();
    const bool second_order =
        static_cast<bool>(problem.objective_hessian) && (m == 0 || static_cast<bool>(problem.constraint_jacobian));

    auto lagrangian = [&](const Vec& z, Vec* grad) {
        double value = problem.objective(z, grad);
        if (m == 0) return value;
        const Vec c = problem.constraints(z);
        Vec weights(m);
        for (int i = 0; i < m; ++i) {
            const double shifted = lambda(i) + rho * c(i);
            weights(i) = std::max(0.0, shifted);
            value += (weights(i) * weights(i) - lambda(i) * lambda(i)) / (2.0 * rho);
        }
        if (grad != nullptr) *grad += problem.constraint_vjp(z, weights);
        return value;
    };

    for (int outer = 1; outer <= settings.max_outer; ++outer) {
        if (second_order) {
            out.inner_iterations +=
                newton_inner(problem, lagrangian, lambda, rho, x, settings.update_period, 0.1 * settings.stat_tol)
                    .iterations;
        } else {
            out.inner_iterations += lbfgs.run(lagrangian, x, settings.update_period, 0.1 * settings.stat_tol).iterations;
        }
        out.outer_iterations = outer;
        if (!x.allFinite()) {
            std::ostringstream os;
            os << "augmented Lagrangian iterate became non-finite at outer iteration " << outer << " (penalty " << rho
               << ")";
            throw NumericalError(os.str());
        }

        Vec grad(problem.dim);
        const double obj = problem.objective(x, &grad);
        double feas = 0.0, compl_ = 0.0;
        Vec mu = Vec::Zero(m);
        if (m > 0) {
            const Vec c = problem.constraints(x);
            for (int i = 0; i < m; ++i) {
                mu(i) = std::max(0.0, lambda(i) + rho * c(i));
                feas = std::max(feas, c(i));
                compl_ = std::max(compl_, std::abs(mu(i) * c(i)));
            }
            grad += problem.constraint_vjp(x, mu);
        }
        const double stat = grad.norm();
        best.offer(x, settings.feas_tol, obj, feas, stat, compl_, mu);
        if (settings.trace) settings.trace(outer, feas, stat, rho);

        if (feas <= settings.feas_tol && stat <= settings.stat_tol && compl_ <= settings.compl_tol) {
            out.x = x;
            out.objective = obj;
            out.residual = feas;
            out.stationarity = stat;
            out.complementarity = compl_;
            out.multipliers = mu;
            out.converged = true;
            lambda = mu;
            break;
        }

        lambda = mu;
        if (outer % settings.penalty_window == 0) {
            if (feas > settings.feas_tol && feas > 0.25 * prev_feas && rho < settings.penalty_max) {
                rho = std::min(rho * settings.penalty_growth, settings.penalty_max);
                lbfgs.reset();
            }
            prev_feas = feas;
        }
    }

    if (!out.converged) {
        out.x = best.x;
        out.objective = best.objective;
        out.residual = best.residual;
        out.stationarity = best.stationarity;
        out.complementarity = best.complementarity;
        out.multipliers = best.multipliers;
    }
    if (state != nullptr) {
        state->multipliers = lambda;
        state->penalty = rho;
    }
    return out;
}

} // namespace hardflow
