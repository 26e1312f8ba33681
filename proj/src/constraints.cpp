#include "hardflow/constraints.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace hardflow {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

int box_components(const Box& b)
{
    int n = 0;
    for (Eigen::Index k = 0; k < b.hi.size(); ++k) {
        if (std::isfinite(b.hi(k))) ++n;
        if (std::isfinite(b.lo(k))) ++n;
    }
    return n;
}

int component_count(const ConstraintBlock& block)
{
    return std::visit(overloaded{
                          [](const Halfspace&) { return 1; },
                          [](const Box& b) { return box_components(b); },
                          [](const BallObstacle&) { return 1; },
                          [](const AffineEquality&) { return 2; },
                          [](const LinearDynamics& d) { return 2 * (d.horizon - 1) * d.state_dim(); },
                          [](const BurgersDynamics& d) { return 2 * (d.m - 1) * d.n; },
                          [](const CustomConstraint& c) { return c.count; },
                      },
                      block);
}

/// S x - c, nudged off the exact center so the gradient direction is defined.
Vec ball_offset(const BallObstacle& o, const Vec& x)
{
    Vec diff = o.selector * x - o.center;
    if (diff.norm() < 1e-12) diff(0) += 1e-9;
    return diff;
}

struct BurgersStencil {
    double r_lo;  // residual with nu_min
    double r_hi;  // residual with nu_max
    double adv_grad_center, adv_grad_left, adv_grad_right;
    double lap_center, lap_side;
};

BurgersStencil burgers_stencil(const BurgersDynamics& d, const Vec& x, int k, int j)
{
    const int n = d.n;
    const double uc = x(burgers_u_index(n, k, j));
    const double ul = j > 0 ? x(burgers_u_index(n, k, j - 1)) : 0.0;
    const double ur = j + 1 < n ? x(burgers_u_index(n, k, j + 1)) : 0.0;
    const double un = x(burgers_u_index(n, k + 1, j));
    const double f = x(burgers_f_index(d.m, n, k, j));

    const double adv = uc * (ur - ul) / (2.0 * d.ds);
    const double lap = (ur - 2.0 * uc + ul) / (d.ds * d.ds);
    const double base = un - uc + d.dt * adv - d.dt * f;

    BurgersStencil s{};
    s.r_lo = base - d.dt * d.nu_min * lap;
    s.r_hi = base - d.dt * d.nu_max * lap;
    s.adv_grad_center = d.dt * (ur - ul) / (2.0 * d.ds);
    s.adv_grad_left = -d.dt * uc / (2.0 * d.ds);
    s.adv_grad_right = d.dt * uc / (2.0 * d.ds);
    s.lap_center = -2.0 * d.dt / (d.ds * d.ds);
    s.lap_side = d.dt / (d.ds * d.ds);
    return s;
}

/// Adds w * dR(nu)/dx for the residual R(nu) at grid point (k, j).
void burgers_accumulate(const BurgersDynamics& d, const BurgersStencil& s, int k, int j, double nu, double w, Vec& g)
{
    const int n = d.n;
    g(burgers_u_index(n, k + 1, j)) += w;
    g(burgers_u_index(n, k, j)) += w * (-1.0 + s.adv_grad_center - nu * s.lap_center);
    if (j > 0) g(burgers_u_index(n, k, j - 1)) += w * (s.adv_grad_left - nu * s.lap_side);
    if (j + 1 < n) g(burgers_u_index(n, k, j + 1)) += w * (s.adv_grad_right - nu * s.lap_side);
    g(burgers_f_index(d.m, n, k, j)) += w * (-d.dt);
}

void block_values(const ConstraintBlock& block, const Vec& x, Eigen::Ref<Vec> out)
{
    std::visit(overloaded{
                   [&](const Halfspace& h) { out(0) = h.a.dot(x) - h.b; },
                   [&](const Box& b) {
                       int i = 0;
                       for (Eigen::Index k = 0; k < b.hi.size(); ++k) {
                           if (std::isfinite(b.hi(k))) out(i++) = x(k) - b.hi(k);
                           if (std::isfinite(b.lo(k))) out(i++) = b.lo(k) - x(k);
                       }
                   },
                   [&](const BallObstacle& o) { out(0) = o.radius - ball_offset(o, x).norm(); },
                   [&](const AffineEquality& e) {
                       const double g = e.a.dot(x) - e.b;
                       out(0) = g;
                       out(1) = -g;
                   },
                   [&](const LinearDynamics& d) {
                       const int ns = d.state_dim(), na = d.action_dim(), stride = ns + na;
                       for (int i = 0; i + 1 < d.horizon; ++i) {
                           const Vec s = x.segment(i * stride, ns);
                           const Vec a = x.segment(i * stride + ns, na);
                           const Vec g = x.segment((i + 1) * stride, ns) - (d.A * s + d.B * a + d.c);
                           for (int r = 0; r < ns; ++r) {
                               out(2 * (i * ns + r)) = g(r);
                               out(2 * (i * ns + r) + 1) = -g(r);
                           }
                       }
                   },
                   [&](const BurgersDynamics& d) {
                       for (int k = 0; k + 1 < d.m; ++k) {
                           for (int j = 0; j < d.n; ++j) {
                               const BurgersStencil s = burgers_stencil(d, x, k, j);
                               const int c = 2 * (k * d.n + j);
                               out(c) = std::min(s.r_lo, s.r_hi);
                               out(c + 1) = -std::max(s.r_lo, s.r_hi);
                           }
                       }
                   },
                   [&](const CustomConstraint& c) { out = c.value(x); },
               },
               block);
}

void block_weighted_gradient(const ConstraintBlock& block, const Vec& x, const Eigen::Ref<const Vec>& w, Vec& g)
{
    std::visit(overloaded{
                   [&](const Halfspace& h) { g += w(0) * h.a; },
                   [&](const Box& b) {
                       int i = 0;
                       for (Eigen::Index k = 0; k < b.hi.size(); ++k) {
                           if (std::isfinite(b.hi(k))) g(k) += w(i++);
                           if (std::isfinite(b.lo(k))) g(k) -= w(i++);
                       }
                   },
                   [&](const BallObstacle& o) {
                       const Vec diff = ball_offset(o, x);
                       g -= w(0) * (o.selector.transpose() * diff) / diff.norm();
                   },
                   [&](const AffineEquality& e) { g += (w(0) - w(1)) * e.a; },
                   [&](const LinearDynamics& d) {
                       const int ns = d.state_dim(), na = d.action_dim(), stride = ns + na;
                       for (int i = 0; i + 1 < d.horizon; ++i) {
                           Vec coeff(ns);
                           for (int r = 0; r < ns; ++r) coeff(r) = w(2 * (i * ns + r)) - w(2 * (i * ns + r) + 1);
                           g.segment((i + 1) * stride, ns) += coeff;
                           g.segment(i * stride, ns) -= d.A.transpose() * coeff;
                           g.segment(i * stride + ns, na) -= d.B.transpose() * coeff;
                       }
                   },
                   [&](const BurgersDynamics& d) {
                       for (int k = 0; k + 1 < d.m; ++k) {
                           for (int j = 0; j < d.n; ++j) {
                               const int c = 2 * (k * d.n + j);
                               if (w(c) == 0.0 && w(c + 1) == 0.0) continue;
                               const BurgersStencil s = burgers_stencil(d, x, k, j);
                               const bool lo_is_min = s.r_lo <= s.r_hi;
                               const double nu_min_branch = lo_is_min ? d.nu_min : d.nu_max;
                               const double nu_max_branch = lo_is_min ? d.nu_max : d.nu_min;
                               burgers_accumulate(d, s, k, j, nu_min_branch, w(c), g);
                               burgers_accumulate(d, s, k, j, nu_max_branch, -w(c + 1), g);
                           }
                       }
                   },
                   [&](const CustomConstraint& c) { g += c.weighted_gradient(x, w); },
               },
               block);
}

} // namespace

std::string block_kind(const ConstraintBlock& block)
{
    return std::visit(overloaded{
                          [](const Halfspace&) { return std::string("halfspace"); },
                          [](const Box&) { return std::string("box"); },
                          [](const BallObstacle&) { return std::string("ball_obstacle"); },
                          [](const AffineEquality&) { return std::string("affine_equality"); },
                          [](const LinearDynamics&) { return std::string("linear_dynamics"); },
                          [](const BurgersDynamics&) { return std::string("burgers_dynamics"); },
                          [](const CustomConstraint& c) { return c.label; },
                      },
                      block);
}

int ConstraintSet::size() const { return offsets_.empty() ? 0 : offsets_.back(); }

ConstraintSet& ConstraintSet::add(ConstraintBlock block)
{
    std::visit(overloaded{
                   [&](const Halfspace& h) {
                       if (h.a.size() != dim_) throw DimensionError("halfspace normal has the wrong dimension");
                   },
                   [&](const Box& b) {
                       if (b.lo.size() != dim_ || b.hi.size() != dim_) throw DimensionError("box bounds have the wrong dimension");
                       if ((b.lo.array() > b.hi.array()).any()) throw ConfigError("box has lo > hi");
                   },
                   [&](const BallObstacle& o) {
                       if (o.selector.cols() != dim_ || o.selector.rows() != o.center.size() || o.center.size() == 0) {
                           throw DimensionError("ball obstacle selector/center dimensions are inconsistent");
                       }
                       if (!(o.radius > 0.0)) throw ConfigError("ball obstacle radius must be positive");
                   },
                   [&](const AffineEquality& e) {
                       if (e.a.size() != dim_) throw DimensionError("equality normal has the wrong dimension");
                   },
                   [&](const LinearDynamics& d) {
                       const int ns = d.state_dim(), na = d.action_dim();
                       if (d.A.cols() != ns || d.B.rows() != ns || d.c.size() != ns || ns == 0 || na == 0 ||
                           d.horizon < 2 || d.horizon * (ns + na) != dim_) {
                           throw DimensionError("linear dynamics dimensions are inconsistent");
                       }
                   },
                   [&](const BurgersDynamics& d) {
                       if (d.m < 2 || d.n < 3) throw ConfigError("Burgers grid too small (need m >= 2, n >= 3)");
                       if (2 * d.m * d.n != dim_) throw DimensionError("Burgers grid does not match the sample dimension");
                       if (!(d.nu_min >= 0.0) || !(d.nu_max >= d.nu_min)) throw ConfigError("need 0 <= nu_min <= nu_max");
                       if (!(d.dt > 0.0) || !(d.ds > 0.0)) throw ConfigError("Burgers steps must be positive");
                   },
                   [&](const CustomConstraint& c) {
                       if (c.count < 0 || !c.value || !c.weighted_gradient) throw ConfigError("incomplete custom constraint");
                   },
               },
               block);
    const int count = component_count(block);
    offsets_.push_back(size() + count);
    blocks_.push_back(std::move(block));
    return *this;
}

ConstraintSet& ConstraintSet::append(const ConstraintSet& other)
{
    if (other.dim_ != dim_) throw DimensionError("cannot merge constraint sets of different dimension");
    for (const auto& b : other.blocks_) add(b);
    return *this;
}

Vec ConstraintSet::values(const Vec& x) const
{
    if (x.size() != dim_) throw DimensionError("constraint argument has the wrong dimension");
    Vec out(size());
    int start = 0;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const int count = offsets_[b] - start;
        if (count > 0) block_values(blocks_[b], x, out.segment(start, count));
        start = offsets_[b];
    }
    return out;
}

Vec ConstraintSet::weighted_gradient(const Vec& x, const Vec& w) const
{
    if (x.size() != dim_ || w.size() != size()) throw DimensionError("weighted gradient arguments have the wrong size");
    Vec g = Vec::Zero(dim_);
    int start = 0;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const int count = offsets_[b] - start;
        if (count > 0) {
            const auto wb = w.segment(start, count);
            if (!wb.isZero(0.0)) block_weighted_gradient(blocks_[b], x, wb, g);
        }
        start = offsets_[b];
    }
    return g;
}

Vec ConstraintSet::component_gradient(const Vec& x, int i) const
{
    Vec w = Vec::Zero(size());
    w(i) = 1.0;
    return weighted_gradient(x, w);
}

Mat ConstraintSet::jacobian(const Vec& x) const
{
    Mat J(size(), x.size());
    Vec w = Vec::Zero(size());
    for (int i = 0; i < size(); ++i) {
        w(i) = 1.0;
        J.row(i) = weighted_gradient(x, w).transpose();
        w(i) = 0.0;
    }
    return J;
}

FeasibilityReport residual(const ConstraintSet& cs, const Vec& x, double tol)
{
    FeasibilityReport rep;
    rep.tolerance = tol;
    if (cs.empty()) return rep;
    const Vec h = cs.values(x);
    rep.residual = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < h.size(); ++i) {
        if (!std::isfinite(h(i))) {
            rep.nonfinite.push_back(static_cast<int>(i));
            rep.violated.push_back(static_cast<int>(i));
            rep.residual = std::numeric_limits<double>::infinity();
            continue;
        }
        rep.residual = std::max(rep.residual, h(i));
        if (h(i) > tol) rep.violated.push_back(static_cast<int>(i));
    }
    return rep;
}

ConstraintSet make_halfspace(const Vec& a, double b)
{
    ConstraintSet cs(static_cast<int>(a.size()));
    cs.add(Halfspace{a, b});
    return cs;
}

ConstraintSet make_box(const Vec& lo, const Vec& hi)
{
    ConstraintSet cs(static_cast<int>(lo.size()));
    cs.add(Box{lo, hi});
    return cs;
}

ConstraintSet make_ball_obstacle(int dim, const std::vector<int>& indices, const Vec& center, double radius)
{
    Mat s = Mat::Zero(static_cast<Eigen::Index>(indices.size()), dim);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] < 0 || indices[r] >= dim) throw DimensionError("ball obstacle index out of range");
        s(static_cast<Eigen::Index>(r), indices[r]) = 1.0;
    }
    ConstraintSet cs(dim);
    cs.add(BallObstacle{s, center, radius});
    return cs;
}

ConstraintSet make_linear_dynamics(const Mat& A, const Mat& B, const Vec& c, int horizon, int state_dim, int action_dim)
{
    if (A.rows() != state_dim || A.cols() != state_dim || B.rows() != state_dim || B.cols() != action_dim ||
        c.size() != state_dim) {
        throw DimensionError("linear dynamics matrices do not match the declared state/action dimensions");
    }
    if (horizon < 2) throw DimensionError("linear dynamics need a horizon of at least 2");
    ConstraintSet cs(horizon * (state_dim + action_dim));
    cs.add(LinearDynamics{A, B, c, horizon});
    return cs;
}

ConstraintSet make_burgers_dynamics(int m, int n, double nu_min, double nu_max, double dt, double ds)
{
    if (m < 2 || n < 3) throw ConfigError("Burgers grid too small (need m >= 2, n >= 3)");
    ConstraintSet cs(2 * m * n);
    cs.add(BurgersDynamics{m, n, nu_min, nu_max, dt, ds});
    return cs;
}

double burgers_state_bound(double t) { return 0.8 * (2.0 * t * t - 2.0 * t + 1.0); }

ConstraintSet make_state_bounds_burgers(int m, int n)
{
    if (m < 2 || n < 1) throw ConfigError("Burgers grid too small");
    const int dim = 2 * m * n;
    const double inf = std::numeric_limits<double>::infinity();
    Vec lo = Vec::Constant(dim, -inf), hi = Vec::Constant(dim, inf);
    for (int k = 0; k < m; ++k) {
        const double bound = burgers_state_bound(static_cast<double>(k) / (m - 1));
        for (int j = 0; j < n; ++j) {
            lo(burgers_u_index(n, k, j)) = -bound;
            hi(burgers_u_index(n, k, j)) = bound;
        }
    }
    return make_box(lo, hi);
}

// ---------------------------------------------------------------------------

std::string cost_kind_name(CostKind k)
{
    switch (k) {
    case CostKind::Zero: return "zero";
    case CostKind::QuadraticToTarget: return "quadratic";
    case CostKind::PathLength: return "path_length";
    case CostKind::ControlEnergy: return "control_energy";
    case CostKind::Custom: return "custom";
    }
    return "unknown";
}

CostFn CostFn::zero(int dim)
{
    CostFn c;
    c.kind_ = CostKind::Zero;
    c.dim_ = dim;
    c.weights_ = Vec::Zero(dim);
    c.target_ = Vec::Zero(dim);
    return c;
}

CostFn CostFn::quadratic(const Vec& target, const Vec& weights)
{
    if (target.size() != weights.size()) throw DimensionError("quadratic cost target/weights size mismatch");
    if ((weights.array() < 0.0).any()) throw ConfigError("quadratic cost weights must be non-negative");
    CostFn c;
    c.kind_ = CostKind::QuadraticToTarget;
    c.dim_ = static_cast<int>(target.size());
    c.weights_ = weights;
    c.target_ = target;
    return c;
}

CostFn CostFn::control_energy(int dim, const std::vector<int>& indices, double scale)
{
    if (!(scale > 0.0)) throw ConfigError("control energy scale must be positive");
    CostFn c = zero(dim);
    c.kind_ = CostKind::ControlEnergy;
    c.scale_ = scale;
    for (int i : indices) {
        if (i < 0 || i >= dim) throw DimensionError("control energy index out of range");
        c.weights_(i) = scale;
    }
    return c;
}

CostFn CostFn::path_length(int dim, std::vector<std::vector<int>> points, double scale)
{
    if (points.size() < 2) throw ConfigError("path length needs at least two points");
    for (const auto& p : points) {
        if (p.size() != points.front().size()) throw DimensionError("path points must share a dimension");
        for (int i : p) {
            if (i < 0 || i >= dim) throw DimensionError("path point index out of range");
        }
    }
    CostFn c;
    c.kind_ = CostKind::PathLength;
    c.dim_ = dim;
    c.points_ = std::move(points);
    c.scale_ = scale;
    return c;
}

CostFn CostFn::custom(int dim, std::function<double(const Vec&)> value, std::function<Vec(const Vec&)> gradient)
{
    CostFn c;
    c.kind_ = CostKind::Custom;
    c.dim_ = dim;
    c.custom_value_ = std::move(value);
    c.custom_gradient_ = std::move(gradient);
    return c;
}

bool CostFn::is_diagonal_quadratic() const
{
    return kind_ == CostKind::Zero || kind_ == CostKind::QuadraticToTarget || kind_ == CostKind::ControlEnergy;
}

std::optional<Mat> CostFn::hessian() const
{
    switch (kind_) {
    case CostKind::Zero: return Mat::Zero(dim_, dim_);
    case CostKind::QuadraticToTarget:
    case CostKind::ControlEnergy: return Mat((2.0 * weights_).asDiagonal());
    case CostKind::PathLength: {
        Mat h = Mat::Zero(dim_, dim_);
        for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
            for (std::size_t k = 0; k < points_[i].size(); ++k) {
                const int a = points_[i][k], b = points_[i + 1][k];
                h(a, a) += 2.0 * scale_;
                h(b, b) += 2.0 * scale_;
                h(a, b) -= 2.0 * scale_;
                h(b, a) -= 2.0 * scale_;
            }
        }
        return h;
    }
    default: return std::nullopt;
    }
}

double CostFn::value(const Vec& x) const
{
    if (x.size() != dim_) throw DimensionError("cost argument has the wrong dimension");
    switch (kind_) {
    case CostKind::Zero: return 0.0;
    case CostKind::QuadraticToTarget:
    case CostKind::ControlEnergy: return weights_.dot((x - target_).cwiseAbs2());
    case CostKind::PathLength: {
        double total = 0.0;
        for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
            for (std::size_t k = 0; k < points_[i].size(); ++k) {
                const double d = x(points_[i + 1][k]) - x(points_[i][k]);
                total += d * d;
            }
        }
        return scale_ * total;
    }
    case CostKind::Custom: return custom_value_(x);
    }
    return 0.0;
}

Vec CostFn::gradient(const Vec& x) const
{
    if (x.size() != dim_) throw DimensionError("cost argument has the wrong dimension");
    switch (kind_) {
    case CostKind::Zero: return Vec::Zero(dim_);
    case CostKind::QuadraticToTarget:
    case CostKind::ControlEnergy: return 2.0 * weights_.cwiseProduct(x - target_);
    case CostKind::PathLength: {
        Vec g = Vec::Zero(dim_);
        for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
            for (std::size_t k = 0; k < points_[i].size(); ++k) {
                const double d = 2.0 * scale_ * (x(points_[i + 1][k]) - x(points_[i][k]));
                g(points_[i + 1][k]) += d;
                g(points_[i][k]) -= d;
            }
        }
        return g;
    }
    case CostKind::Custom: return custom_gradient_(x);
    }
    return Vec::Zero(dim_);
}

} // namespace hardflow
