#pragma once

#include "hardflow/common.hpp"

#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace hardflow {

/// a^T x <= b
struct Halfspace {
    Vec a;
    double b = 0.0;
};

/// lo <= x <= hi coordinatewise; infinite bounds produce no component.
struct Box {
    Vec lo;
    Vec hi;
};

/// Keep-out region: radius - ||S x - center|| <= 0.
struct BallObstacle {
    Mat selector;
    Vec center;
    double radius = 0.0;
};

/// a^T x = b, stored as the pair (a^T x - b <= 0, b - a^T x <= 0).
struct AffineEquality {
    Vec a;
    double b = 0.0;
};

/// s_{i+1} = A s_i + B a_i + c over x = (s_0, a_0, ..., s_{H-1}, a_{H-1}).
struct LinearDynamics {
    Mat A;
    Mat B;
    Vec c;
    int horizon = 0;

    int state_dim() const { return static_cast<int>(A.rows()); }
    int action_dim() const { return static_cast<int>(B.cols()); }
};

/// Forward-Euler / central-difference Burgers residual with viscosity in [nu_min, nu_max].
///
/// Sample layout is x = (u, f), each an m x n row-major grid (time-major).
/// The n spatial nodes are interior; u = 0 is imposed at ghost nodes on both ends.
struct BurgersDynamics {
    int m = 0;
    int n = 0;
    double nu_min = 0.0;
    double nu_max = 0.0;
    double dt = 0.0;
    double ds = 0.0;
};

/// User-supplied differentiable components (not serializable).
struct CustomConstraint {
    int count = 0;
    std::function<Vec(const Vec&)> value;
    /// (x, w) -> sum_i w_i grad h_i(x)
    std::function<Vec(const Vec&, const Vec&)> weighted_gradient;
    std::string label = "custom";
};

using ConstraintBlock =
    std::variant<Halfspace, Box, BallObstacle, AffineEquality, LinearDynamics, BurgersDynamics, CustomConstraint>;

std::string block_kind(const ConstraintBlock& block);

/// Componentwise hard constraints h(x) <= 0 on R^dim, made of typed blocks.
class ConstraintSet {
public:
    explicit ConstraintSet(int dim = 0) : dim_(dim) {}

    int dim() const { return dim_; }
    /// Total number of scalar components.
    int size() const;
    bool empty() const { return size() == 0; }

    ConstraintSet& add(ConstraintBlock block);
    ConstraintSet& append(const ConstraintSet& other);

    const std::vector<ConstraintBlock>& blocks() const { return blocks_; }

    Vec values(const Vec& x) const;
    /// sum_i w_i grad h_i(x); w has size() entries.
    Vec weighted_gradient(const Vec& x, const Vec& w) const;
    /// Dense size() x dim Jacobian of values(x).
    Mat jacobian(const Vec& x) const;
    /// Gradient of component i (dense, for checks and tests).
    Vec component_gradient(const Vec& x, int i) const;

private:
    int dim_;
    std::vector<ConstraintBlock> blocks_;
    std::vector<int> offsets_;
};

inline constexpr double kDefaultFeasibilityTol = 1e-6;

struct FeasibilityReport {
    /// max_i h_i(x); 0 for an empty set, +inf if any component is non-finite.
    double residual = 0.0;
    std::vector<int> violated;
    std::vector<int> nonfinite;
    double tolerance = kDefaultFeasibilityTol;

    bool feasible() const { return violated.empty(); }
};

FeasibilityReport residual(const ConstraintSet& cs, const Vec& x, double tol = kDefaultFeasibilityTol);

ConstraintSet make_halfspace(const Vec& a, double b);
ConstraintSet make_box(const Vec& lo, const Vec& hi);
ConstraintSet make_ball_obstacle(int dim, const std::vector<int>& indices, const Vec& center, double radius);

ConstraintSet make_linear_dynamics(const Mat& A, const Mat& B, const Vec& c, int horizon, int state_dim, int action_dim);

ConstraintSet make_burgers_dynamics(int m, int n, double nu_min, double nu_max, double dt, double ds);
/// |u(t_k, s_j)| <= burgers_state_bound(t_k) with t_k = k / (m - 1).
ConstraintSet make_state_bounds_burgers(int m, int n);
double burgers_state_bound(double t);
inline int burgers_u_index(int n, int k, int j) { return k * n + j; }
inline int burgers_f_index(int m, int n, int k, int j) { return m * n + k * n + j; }

// ---------------------------------------------------------------------------

enum class CostKind { Zero, QuadraticToTarget, PathLength, ControlEnergy, Custom };

std::string cost_kind_name(CostKind k);

/// Scalar cost C(x) with gradient.
class CostFn {
public:
    static CostFn zero(int dim);
    /// sum_k q_k (x_k - g_k)^2
    static CostFn quadratic(const Vec& target, const Vec& weights);
    /// scale * sum_{k in indices} x_k^2
    static CostFn control_energy(int dim, const std::vector<int>& indices, double scale = 1.0);
    /// scale * sum_i ||p_{i+1} - p_i||^2 with p_i = x[points[i]]
    static CostFn path_length(int dim, std::vector<std::vector<int>> points, double scale = 1.0);
    static CostFn custom(int dim, std::function<double(const Vec&)> value, std::function<Vec(const Vec&)> gradient);

    CostKind kind() const { return kind_; }
    int dim() const { return dim_; }
    double value(const Vec& x) const;
    Vec gradient(const Vec& x) const;
    /// Constant Hessian; empty for custom costs.
    std::optional<Mat> hessian() const;

    /// Zero, quadratic-to-target and control-energy costs are diagonal quadratics.
    bool is_diagonal_quadratic() const;
    const Vec& quadratic_weights() const { return weights_; }
    const Vec& quadratic_target() const { return target_; }

    const std::vector<std::vector<int>>& path_points() const { return points_; }
    double scale() const { return scale_; }

private:
    CostKind kind_ = CostKind::Zero;
    int dim_ = 0;
    Vec weights_;
    Vec target_;
    std::vector<std::vector<int>> points_;
    double scale_ = 1.0;
    std::function<double(const Vec&)> custom_value_;
    std::function<Vec(const Vec&)> custom_gradient_;
};

} // namespace hardflow
