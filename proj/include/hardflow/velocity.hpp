#pragma once

#include "hardflow/common.hpp"
#include "hardflow/scheduler.hpp"

#include <functional>
#include <iosfwd>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace hardflow {

/// A time-dependent velocity field v_t(x) on R^d.
///
/// Implementations are immutable after construction, so a single instance
/// may be shared by concurrent samplers.
class VelocityField {
public:
    virtual ~VelocityField() = default;

    virtual int dim() const = 0;
    virtual Vec eval(double t, const Vec& x) const = 0;

    virtual bool has_input_vjp() const { return false; }
    /// w^T dv/dx at (t, x). Throws CapabilityError unless overridden.
    virtual Vec input_vjp(double t, const Vec& x, const Vec& w) const;
};

using FieldPtr = std::shared_ptr<const VelocityField>;

/// Free-function form of VelocityField::input_vjp with a capability check.
Vec input_vjp(const VelocityField& field, double t, const Vec& x, const Vec& w);

class ConstantField final : public VelocityField {
public:
    explicit ConstantField(Vec c) : c_(std::move(c)) {}
    int dim() const override { return static_cast<int>(c_.size()); }
    Vec eval(double, const Vec&) const override { return c_; }
    bool has_input_vjp() const override { return true; }
    Vec input_vjp(double, const Vec&, const Vec& w) const override { return Vec::Zero(w.size()); }

private:
    Vec c_;
};

/// v(t, x) = A x + b, time independent.
class LinearField final : public VelocityField {
public:
    LinearField(Mat a, Vec b);
    explicit LinearField(Mat a) : LinearField(a, Vec::Zero(a.rows())) {}
    int dim() const override { return static_cast<int>(b_.size()); }
    Vec eval(double, const Vec& x) const override { return a_ * x + b_; }
    bool has_input_vjp() const override { return true; }
    Vec input_vjp(double, const Vec&, const Vec& w) const override { return a_.transpose() * w; }
    const Mat& matrix() const { return a_; }

private:
    Mat a_;
    Vec b_;
};

/// Isotropic Gaussian endpoints X_0 ~ N(mu0, sigma0^2 I), X_1 ~ N(mu1, sigma1^2 I), independent.
struct GaussianFieldSpec {
    Vec mu0;
    Vec mu1;
    double sigma0 = 1.0;
    double sigma1 = 1.0;

    void validate() const;
};

/// Exact marginal velocity of the affine path between independent Gaussian endpoints.
class GaussianField final : public VelocityField {
public:
    GaussianField(GaussianFieldSpec spec, Scheduler sched);

    int dim() const override { return static_cast<int>(spec_.mu0.size()); }
    Vec eval(double t, const Vec& x) const override;
    bool has_input_vjp() const override { return true; }
    Vec input_vjp(double t, const Vec& x, const Vec& w) const override;

    /// E[X_1 | X_t = x] by Gaussian conditioning.
    Vec conditional_mean_x1(double t, const Vec& x) const;
    /// E[X_0 | X_t = x] by Gaussian conditioning.
    Vec conditional_mean_x0(double t, const Vec& x) const;
    /// The velocity is (gain) * x + offset; gain is the scalar returned here.
    double jacobian_scale(double t) const;

    const GaussianFieldSpec& spec() const { return spec_; }
    const Scheduler& scheduler() const { return sched_; }

private:
    GaussianFieldSpec spec_;
    Scheduler sched_;
};

/// Equivalent to `GaussianField(spec, sched).eval(t, x)`.
Vec gaussian_velocity(const GaussianFieldSpec& spec, const Scheduler& sched, double t, const Vec& x);

enum class Activation { Tanh, Silu };
std::string activation_name(Activation a);
Activation parse_activation(const std::string& name);

/// Feedforward network [x, t] -> v with two hidden layers.
class MlpField final : public VelocityField {
public:
    struct Layers {
        Mat w1, w2, w3;
        Vec b1, b2, b3;
    };

    MlpField(int dim, std::vector<int> hidden, Activation act, Layers layers);

    /// Glorot-uniform weights, zero biases; parameters are rounded to float32.
    static MlpField initialize(int dim, std::vector<int> hidden, Activation act, std::mt19937_64& rng);

    int dim() const override { return dim_; }
    Vec eval(double t, const Vec& x) const override;
    bool has_input_vjp() const override { return true; }
    Vec input_vjp(double t, const Vec& x, const Vec& w) const override;

    const std::vector<int>& hidden() const { return hidden_; }
    Activation activation() const { return act_; }
    const Layers& layers() const { return layers_; }

    std::size_t num_weights() const;
    /// W1, b1, W2, b2, W3, b3; matrices row-major.
    std::vector<float> flat_weights() const;
    static MlpField from_flat(int dim, std::vector<int> hidden, Activation act, const std::vector<float>& w);

private:
    int dim_;
    std::vector<int> hidden_;
    Activation act_;
    Layers layers_;
};

struct TrainConfig {
    std::vector<int> hidden{64, 64};
    Activation activation = Activation::Silu;
    int steps = 4000;
    int batch_size = 256;
    double learning_rate = 5e-3;
    std::uint64_t seed = 0;
    /// Running-average loss is recorded every `log_every` steps.
    int log_every = 100;

    void validate() const;
};

/// Draws one endpoint pair (X_0, X_1).
using PairSampler = std::function<std::pair<Vec, Vec>(std::mt19937_64&)>;

struct TrainLog {
    std::vector<int> steps;
    std::vector<double> running_loss;
    double initial_heldout_loss = 0.0;
    double final_heldout_loss = 0.0;
};

struct TrainResult {
    std::shared_ptr<MlpField> field;
    TrainLog log;
};

/// Conditional flow matching with Adam. Throws NumericalError on a non-finite loss.
TrainResult cfm_train(const PairSampler& data, int dim, const Scheduler& sched, const TrainConfig& cfg);

/// Mean CFM loss of `field` on the given batch of (t, x0, x1) triples.
double cfm_loss(const VelocityField& field, const Scheduler& sched, const std::vector<double>& ts,
                const std::vector<Vec>& x0, const std::vector<Vec>& x1);

struct CheckpointMeta {
    std::string scheduler = "linear";
    std::uint64_t seed = 0;
};

/// Binary checkpoint: "HFCK", u32 LE header length, JSON header, float32 LE weights.
void save_checkpoint(std::ostream& out, const MlpField& field, const CheckpointMeta& meta);
void save_checkpoint(const std::string& path, const MlpField& field, const CheckpointMeta& meta);

struct LoadedCheckpoint {
    std::shared_ptr<MlpField> field;
    CheckpointMeta meta;
    std::string header_json;
};

LoadedCheckpoint load_checkpoint(std::istream& in);
LoadedCheckpoint load_checkpoint(const std::string& path);

} // namespace hardflow
