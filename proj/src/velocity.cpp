#include "hardflow/velocity.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace hardflow {

Vec VelocityField::input_vjp(double, const Vec&, const Vec&) const
{
    throw CapabilityError("velocity field does not provide input vector-Jacobian products");
}

Vec input_vjp(const VelocityField& field, double t, const Vec& x, const Vec& w)
{
    if (!field.has_input_vjp()) {
        throw CapabilityError("velocity field does not provide input vector-Jacobian products");
    }
    return field.input_vjp(t, x, w);
}

LinearField::LinearField(Mat a, Vec b) : a_(std::move(a)), b_(std::move(b))
{
    if (a_.rows() != a_.cols() || a_.rows() != b_.size()) throw DimensionError("linear field needs square A matching b");
}

// ---------------------------------------------------------------------------
// Gaussian oracle field

void GaussianFieldSpec::validate() const
{
    if (mu0.size() == 0 || mu0.size() != mu1.size()) throw DimensionError("Gaussian field means must share a dimension");
    if (!(sigma0 > 0.0) || !(sigma1 > 0.0)) throw ConfigError("Gaussian field standard deviations must be positive");
}

GaussianField::GaussianField(GaussianFieldSpec spec, Scheduler sched) : spec_(std::move(spec)), sched_(std::move(sched))
{
    spec_.validate();
}

Vec GaussianField::conditional_mean_x1(double t, const Vec& x) const
{
    const double a = sched_.alpha(t), b = sched_.beta(t);
    const double s1 = spec_.sigma1 * spec_.sigma1, s0 = spec_.sigma0 * spec_.sigma0;
    const double var = a * a * s1 + b * b * s0;
    const Vec mean = a * spec_.mu1 + b * spec_.mu0;
    return spec_.mu1 + (a * s1 / var) * (x - mean);
}

Vec GaussianField::conditional_mean_x0(double t, const Vec& x) const
{
    const double a = sched_.alpha(t), b = sched_.beta(t);
    const double s1 = spec_.sigma1 * spec_.sigma1, s0 = spec_.sigma0 * spec_.sigma0;
    const double var = a * a * s1 + b * b * s0;
    const Vec mean = a * spec_.mu1 + b * spec_.mu0;
    return spec_.mu0 + (b * s0 / var) * (x - mean);
}

Vec GaussianField::eval(double t, const Vec& x) const
{
    return sched_.alpha_dot(t) * conditional_mean_x1(t, x) + sched_.beta_dot(t) * conditional_mean_x0(t, x);
}

double GaussianField::jacobian_scale(double t) const
{
    const double a = sched_.alpha(t), b = sched_.beta(t);
    const double s1 = spec_.sigma1 * spec_.sigma1, s0 = spec_.sigma0 * spec_.sigma0;
    const double var = a * a * s1 + b * b * s0;
    return (sched_.alpha_dot(t) * a * s1 + sched_.beta_dot(t) * b * s0) / var;
}

Vec GaussianField::input_vjp(double t, const Vec&, const Vec& w) const { return jacobian_scale(t) * w; }

Vec gaussian_velocity(const GaussianFieldSpec& spec, const Scheduler& sched, double t, const Vec& x)
{
    return GaussianField(spec, sched).eval(t, x);
}

// ---------------------------------------------------------------------------
// MLP field

std::string activation_name(Activation a) { return a == Activation::Tanh ? "tanh" : "silu"; }

Activation parse_activation(const std::string& name)
{
    if (name == "tanh") return Activation::Tanh;
    if (name == "silu") return Activation::Silu;
    throw ConfigError("unknown activation '" + name + "'");
}

namespace {

template <typename Derived>
Mat activate(Activation act, const Eigen::MatrixBase<Derived>& z)
{
    if (act == Activation::Tanh) return z.array().tanh().matrix();
    return (z.array() / (1.0 + (-z.array()).exp())).matrix();
}

template <typename Derived>
Mat activate_grad(Activation act, const Eigen::MatrixBase<Derived>& z)
{
    if (act == Activation::Tanh) return (1.0 - z.array().tanh().square()).matrix();
    const auto sig = 1.0 / (1.0 + (-z.array()).exp());
    return (sig * (1.0 + z.array() * (1.0 - sig))).matrix();
}

double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

void round_layers(MlpField::Layers& l)
{
    for (Mat* m : {&l.w1, &l.w2, &l.w3}) m->noalias() = m->unaryExpr(&round_f32);
    for (Vec* b : {&l.b1, &l.b2, &l.b3}) *b = b->unaryExpr(&round_f32);
}

void check_hidden(const std::vector<int>& hidden)
{
    if (hidden.size() != 2) throw ConfigError("MLP field needs exactly two hidden layers");
    for (int h : hidden) {
        if (h <= 0 || h > 128) throw ConfigError("hidden widths must lie in [1, 128]");
    }
}

struct Forward {
    Mat input, z1, h1, z2, h2, out;
};

Forward forward(const MlpField::Layers& l, Activation act, Mat input)
{
    Forward f;
    f.input = std::move(input);
    f.z1 = (l.w1 * f.input).colwise() + l.b1;
    f.h1 = activate(act, f.z1);
    f.z2 = (l.w2 * f.h1).colwise() + l.b2;
    f.h2 = activate(act, f.z2);
    f.out = (l.w3 * f.h2).colwise() + l.b3;
    return f;
}

Mat make_input(double t, const Vec& x)
{
    Mat in(x.size() + 1, 1);
    in.topRows(x.size()) = x;
    in(x.size(), 0) = t;
    return in;
}

} // namespace

MlpField::MlpField(int dim, std::vector<int> hidden, Activation act, Layers layers)
    : dim_(dim), hidden_(std::move(hidden)), act_(act), layers_(std::move(layers))
{
    check_hidden(hidden_);
    const int h1 = hidden_[0], h2 = hidden_[1];
    const bool ok = layers_.w1.rows() == h1 && layers_.w1.cols() == dim + 1 && layers_.b1.size() == h1 &&
                    layers_.w2.rows() == h2 && layers_.w2.cols() == h1 && layers_.b2.size() == h2 &&
                    layers_.w3.rows() == dim && layers_.w3.cols() == h2 && layers_.b3.size() == dim;
    if (!ok) throw DimensionError("MLP layer shapes do not match the declared architecture");
}

MlpField MlpField::initialize(int dim, std::vector<int> hidden, Activation act, std::mt19937_64& rng)
{
    check_hidden(hidden);
    if (dim <= 0) throw DimensionError("MLP dimension must be positive");
    auto glorot = [&rng](int rows, int cols) {
        const double limit = std::sqrt(6.0 / (rows + cols));
        std::uniform_real_distribution<double> u(-limit, limit);
        Mat m(rows, cols);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) m(r, c) = u(rng);
        return m;
    };
    Layers l;
    l.w1 = glorot(hidden[0], dim + 1);
    l.w2 = glorot(hidden[1], hidden[0]);
    l.w3 = glorot(dim, hidden[1]);
    l.b1 = Vec::Zero(hidden[0]);
    l.b2 = Vec::Zero(hidden[1]);
    l.b3 = Vec::Zero(dim);
    round_layers(l);
    return MlpField(dim, std::move(hidden), act, std::move(l));
}

Vec MlpField::eval(double t, const Vec& x) const
{
    if (x.size() != dim_) throw DimensionError("MLP input has the wrong dimension");
    return forward(layers_, act_, make_input(t, x)).out.col(0);
}

Vec MlpField::input_vjp(double t, const Vec& x, const Vec& w) const
{
    if (x.size() != dim_ || w.size() != dim_) throw DimensionError("MLP VJP arguments have the wrong dimension");
    const Forward f = forward(layers_, act_, make_input(t, x));
    const Vec g_z2 = (layers_.w3.transpose() * w).cwiseProduct(activate_grad(act_, f.z2).col(0));
    const Vec g_z1 = (layers_.w2.transpose() * g_z2).cwiseProduct(activate_grad(act_, f.z1).col(0));
    return (layers_.w1.transpose() * g_z1).head(dim_);
}

std::size_t MlpField::num_weights() const
{
    const auto& l = layers_;
    return static_cast<std::size_t>(l.w1.size() + l.b1.size() + l.w2.size() + l.b2.size() + l.w3.size() + l.b3.size());
}

std::vector<float> MlpField::flat_weights() const
{
    std::vector<float> out;
    out.reserve(num_weights());
    auto push_mat = [&out](const Mat& m) {
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(static_cast<float>(m(r, c)));
    };
    auto push_vec = [&out](const Vec& v) {
        for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(static_cast<float>(v(i)));
    };
    push_mat(layers_.w1);
    push_vec(layers_.b1);
    push_mat(layers_.w2);
    push_vec(layers_.b2);
    push_mat(layers_.w3);
    push_vec(layers_.b3);
    return out;
}

MlpField MlpField::from_flat(int dim, std::vector<int> hidden, Activation act, const std::vector<float>& w)
{
    check_hidden(hidden);
    const int h1 = hidden[0], h2 = hidden[1];
    const std::size_t expected = static_cast<std::size_t>(h1 * (dim + 1) + h1 + h2 * h1 + h2 + dim * h2 + dim);
    if (w.size() != expected) throw DimensionError("weight block size does not match the architecture");
    std::size_t pos = 0;
    auto take_mat = [&](int rows, int cols) {
        Mat m(rows, cols);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) m(r, c) = w[pos++];
        return m;
    };
    auto take_vec = [&](int n) {
        Vec v(n);
        for (int i = 0; i < n; ++i) v(i) = w[pos++];
        return v;
    };
    Layers l;
    l.w1 = take_mat(h1, dim + 1);
    l.b1 = take_vec(h1);
    l.w2 = take_mat(h2, h1);
    l.b2 = take_vec(h2);
    l.w3 = take_mat(dim, h2);
    l.b3 = take_vec(dim);
    return MlpField(dim, std::move(hidden), act, std::move(l));
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const
{
    check_hidden(hidden);
    if (steps < 0) throw ConfigError("training steps must be non-negative");
    if (batch_size <= 0) throw ConfigError("batch size must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (log_every <= 0) throw ConfigError("log interval must be positive");
}

double cfm_loss(const VelocityField& field, const Scheduler& sched, const std::vector<double>& ts,
                const std::vector<Vec>& x0, const std::vector<Vec>& x1)
{
    if (ts.size() != x0.size() || ts.size() != x1.size() || ts.empty()) {
        throw DimensionError("CFM loss batch components must be non-empty and equally sized");
    }
    double total = 0.0;
    for (std::size_t k = 0; k < ts.size(); ++k) {
        const double t = ts[k];
        const Vec xt = sched.alpha(t) * x1[k] + sched.beta(t) * x0[k];
        const Vec target = sched.alpha_dot(t) * x1[k] + sched.beta_dot(t) * x0[k];
        total += (field.eval(t, xt) - target).squaredNorm();
    }
    return total / static_cast<double>(ts.size());
}

namespace {

struct AdamState {
    MlpField::Layers m, v;
    int step = 0;
};

MlpField::Layers zeros_like(const MlpField::Layers& l)
{
    MlpField::Layers z;
    z.w1 = Mat::Zero(l.w1.rows(), l.w1.cols());
    z.w2 = Mat::Zero(l.w2.rows(), l.w2.cols());
    z.w3 = Mat::Zero(l.w3.rows(), l.w3.cols());
    z.b1 = Vec::Zero(l.b1.size());
    z.b2 = Vec::Zero(l.b2.size());
    z.b3 = Vec::Zero(l.b3.size());
    return z;
}

template <typename P>
void adam_update(P& param, const P& grad, P& m, P& v, double lr, int step)
{
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(b1, step), c2 = 1.0 - std::pow(b2, step);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

struct Batch {
    Mat input;  // (d+1) x B
    Mat target; // d x B
};

Batch draw_batch(const PairSampler& data, int dim, const Scheduler& sched, int size, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Batch b{Mat(dim + 1, size), Mat(dim, size)};
    for (int k = 0; k < size; ++k) {
        auto [x0, x1] = data(rng);
        if (x0.size() != dim || x1.size() != dim) throw DimensionError("training pair has the wrong dimension");
        const double t = unif(rng);
        b.input.col(k).head(dim) = sched.alpha(t) * x1 + sched.beta(t) * x0;
        b.input(dim, k) = t;
        b.target.col(k) = sched.alpha_dot(t) * x1 + sched.beta_dot(t) * x0;
    }
    return b;
}

double batch_loss(const MlpField::Layers& l, Activation act, const Batch& b)
{
    const Forward f = forward(l, act, b.input);
    return (f.out - b.target).squaredNorm() / static_cast<double>(b.input.cols());
}

} // namespace

TrainResult cfm_train(const PairSampler& data, int dim, const Scheduler& sched, const TrainConfig& cfg)
{
    cfg.validate();
    std::mt19937_64 init_rng(mix_seed(cfg.seed, 0));
    std::mt19937_64 data_rng(mix_seed(cfg.seed, 1));
    std::mt19937_64 heldout_rng(mix_seed(cfg.seed, 2));

    MlpField init = MlpField::initialize(dim, cfg.hidden, cfg.activation, init_rng);
    MlpField::Layers p = init.layers();
    const Activation act = cfg.activation;
    const Batch heldout = draw_batch(data, dim, sched, 2048, heldout_rng);

    TrainResult result;
    result.log.initial_heldout_loss = batch_loss(p, act, heldout);

    AdamState adam{zeros_like(p), zeros_like(p), 0};
    double window = 0.0;
    int window_count = 0;
    for (int step = 1; step <= cfg.steps; ++step) {
        const Batch b = draw_batch(data, dim, sched, cfg.batch_size, data_rng);
        const double inv_b = 1.0 / static_cast<double>(cfg.batch_size);
        const Forward f = forward(p, act, b.input);
        const Mat diff = f.out - b.target;
        const double loss = diff.squaredNorm() * inv_b;
        if (!std::isfinite(loss)) {
            std::ostringstream os;
            os << "non-finite CFM loss at step " << step << " (lr=" << cfg.learning_rate << ", batch=" << cfg.batch_size
               << ")";
            throw NumericalError(os.str());
        }

        const Mat g_out = 2.0 * inv_b * diff;
        MlpField::Layers g;
        g.w3 = g_out * f.h2.transpose();
        g.b3 = g_out.rowwise().sum();
        const Mat g_z2 = (p.w3.transpose() * g_out).cwiseProduct(activate_grad(act, f.z2));
        g.w2 = g_z2 * f.h1.transpose();
        g.b2 = g_z2.rowwise().sum();
        const Mat g_z1 = (p.w2.transpose() * g_z2).cwiseProduct(activate_grad(act, f.z1));
        g.w1 = g_z1 * f.input.transpose();
        g.b1 = g_z1.rowwise().sum();

        // Cosine decay to 10% of the base rate.
        const double progress = static_cast<double>(step - 1) / std::max(1, cfg.steps - 1);
        const double lr = cfg.learning_rate * (0.1 + 0.45 * (1.0 + std::cos(3.14159265358979323846 * progress)));
        ++adam.step;
        adam_update(p.w1, g.w1, adam.m.w1, adam.v.w1, lr, adam.step);
        adam_update(p.b1, g.b1, adam.m.b1, adam.v.b1, lr, adam.step);
        adam_update(p.w2, g.w2, adam.m.w2, adam.v.w2, lr, adam.step);
        adam_update(p.b2, g.b2, adam.m.b2, adam.v.b2, lr, adam.step);
        adam_update(p.w3, g.w3, adam.m.w3, adam.v.w3, lr, adam.step);
        adam_update(p.b3, g.b3, adam.m.b3, adam.v.b3, lr, adam.step);

        window += loss;
        ++window_count;
        if (step % cfg.log_every == 0 || step == cfg.steps) {
            result.log.steps.push_back(step);
            result.log.running_loss.push_back(window / window_count);
            window = 0.0;
            window_count = 0;
        }
    }

    round_layers(p);
    result.field = std::make_shared<MlpField>(dim, cfg.hidden, act, std::move(p));
    result.log.final_heldout_loss = batch_loss(result.field->layers(), act, heldout);
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr std::array<char, 4> kMagic{'H', 'F', 'C', 'K'};
constexpr int kFormatVersion = 1;

void write_u32_le(std::ostream& out, std::uint32_t v)
{
    const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b.data(), 4);
}

std::uint32_t read_u32_le(std::istream& in)
{
    std::array<unsigned char, 4> b{};
    in.read(reinterpret_cast<char*>(b.data()), 4);
    if (!in) throw ConfigError("checkpoint truncated");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

} // namespace

void save_checkpoint(std::ostream& out, const MlpField& field, const CheckpointMeta& meta)
{
    nlohmann::ordered_json header;
    header["format"] = "hardflow-checkpoint";
    header["format_version"] = kFormatVersion;
    header["architecture"] = {{"type", "mlp"},
                              {"input_dim", field.dim() + 1},
                              {"hidden", field.hidden()},
                              {"output_dim", field.dim()},
                              {"activation", activation_name(field.activation())}};
    header["scheduler"] = meta.scheduler;
    header["dim"] = field.dim();
    header["seed"] = meta.seed;
    header["num_weights"] = field.num_weights();
    header["dtype"] = "float32-le";
    const std::string text = header.dump();

    out.write(kMagic.data(), kMagic.size());
    write_u32_le(out, static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (float w : field.flat_weights()) write_u32_le(out, std::bit_cast<std::uint32_t>(w));
    if (!out) throw ConfigError("failed to write checkpoint");
}

void save_checkpoint(const std::string& path, const MlpField& field, const CheckpointMeta& meta)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open checkpoint for writing: " + path);
    save_checkpoint(out, field, meta);
}

LoadedCheckpoint load_checkpoint(std::istream& in)
{
    std::array<char, 4> magic{};
    in.read(magic.data(), 4);
    if (!in || magic != kMagic) throw ConfigError("not a hardflow checkpoint (bad magic)");
    const std::uint32_t header_len = read_u32_le(in);
    std::string text(header_len, '\0');
    in.read(text.data(), header_len);
    if (!in) throw ConfigError("checkpoint header truncated");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("checkpoint header is not valid JSON: ") + e.what());
    }

    LoadedCheckpoint loaded;
    try {
        if (header.at("format") != "hardflow-checkpoint") throw ConfigError("unexpected checkpoint format tag");
        if (header.at("format_version").get<int>() != kFormatVersion) {
            throw ConfigError("unsupported checkpoint format version");
        }
        const auto& arch = header.at("architecture");
        const int dim = header.at("dim").get<int>();
        if (arch.at("input_dim").get<int>() != dim + 1 || arch.at("output_dim").get<int>() != dim) {
            throw ConfigError("checkpoint architecture does not match its dimension");
        }
        auto hidden = arch.at("hidden").get<std::vector<int>>();
        const Activation act = parse_activation(arch.at("activation").get<std::string>());
        const auto count = header.at("num_weights").get<std::size_t>();

        std::vector<float> weights(count);
        for (auto& w : weights) w = std::bit_cast<float>(read_u32_le(in));
        if (in.peek() != std::char_traits<char>::eof()) throw ConfigError("checkpoint has trailing bytes");

        loaded.field = std::make_shared<MlpField>(MlpField::from_flat(dim, std::move(hidden), act, weights));
        loaded.meta.scheduler = header.at("scheduler").get<std::string>();
        loaded.meta.seed = header.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("checkpoint header is missing fields: ") + e.what());
    } catch (const DimensionError& e) {
        throw ConfigError(std::string("checkpoint weights do not match header: ") + e.what());
    }
    loaded.header_json = text;
    return loaded;
}

LoadedCheckpoint load_checkpoint(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open checkpoint: " + path);
    return load_checkpoint(in);
}

} // namespace hardflow
