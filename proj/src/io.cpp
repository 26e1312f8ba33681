#include "hardflow/io.hpp"

#include <charconv>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace hardflow {

namespace {

const Json& require(const Json& j, const char* key)
{
    if (!j.is_object() || !j.contains(key)) throw ConfigError(std::string("missing key '") + key + "'");
    return j.at(key);
}

double number(const Json& j, const char* key)
{
    const Json& v = require(j, key);
    if (!v.is_number()) throw ConfigError(std::string("key '") + key + "' must be a number");
    return v.get<double>();
}

int integer(const Json& j, const char* key)
{
    const Json& v = require(j, key);
    if (!v.is_number_integer()) throw ConfigError(std::string("key '") + key + "' must be an integer");
    return v.get<int>();
}

Json bound_to_json(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

Vec bounds_from_json(const Json& j, double missing)
{
    if (!j.is_array()) throw ConfigError("box bounds must be arrays");
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (j[i].is_null()) v(static_cast<Eigen::Index>(i)) = missing;
        else if (j[i].is_number()) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
        else throw ConfigError("box bounds must be numbers or null");
    }
    return v;
}

struct BlockWriter {
    Json operator()(const Halfspace& b) const { return {{"kind", "halfspace"}, {"a", vec_to_json(b.a)}, {"b", b.b}}; }
    Json operator()(const Box& b) const
    {
        Json lo = Json::array(), hi = Json::array();
        for (Eigen::Index i = 0; i < b.lo.size(); ++i) {
            lo.push_back(bound_to_json(b.lo(i)));
            hi.push_back(bound_to_json(b.hi(i)));
        }
        return {{"kind", "box"}, {"lo", lo}, {"hi", hi}};
    }
    Json operator()(const BallObstacle& b) const
    {
        return {{"kind", "ball-obstacle"},
                {"selector", mat_to_json(b.selector)},
                {"center", vec_to_json(b.center)},
                {"radius", b.radius}};
    }
    Json operator()(const AffineEquality& b) const
    {
        return {{"kind", "affine-equality"}, {"a", vec_to_json(b.a)}, {"b", b.b}};
    }
    Json operator()(const LinearDynamics& b) const
    {
        return {{"kind", "linear-dynamics"},
                {"A", mat_to_json(b.A)},
                {"B", mat_to_json(b.B)},
                {"c", vec_to_json(b.c)},
                {"horizon", b.horizon}};
    }
    Json operator()(const BurgersDynamics& b) const
    {
        return {{"kind", "burgers-dynamics"}, {"m", b.m},   {"n", b.n},   {"nu_min", b.nu_min},
                {"nu_max", b.nu_max},         {"dt", b.dt}, {"ds", b.ds}};
    }
    Json operator()(const CustomConstraint& b) const
    {
        throw ConfigError("constraint block '" + b.label + "' is custom and cannot be serialized");
    }
};

ConstraintBlock block_from_json(const Json& j)
{
    const std::string kind = require(j, "kind").get<std::string>();
    if (kind == "halfspace") return Halfspace{vec_from_json(require(j, "a")), number(j, "b")};
    if (kind == "box") {
        const double inf = std::numeric_limits<double>::infinity();
        return Box{bounds_from_json(require(j, "lo"), -inf), bounds_from_json(require(j, "hi"), inf)};
    }
    if (kind == "ball-obstacle") {
        return BallObstacle{mat_from_json(require(j, "selector")), vec_from_json(require(j, "center")),
                            number(j, "radius")};
    }
    if (kind == "affine-equality") return AffineEquality{vec_from_json(require(j, "a")), number(j, "b")};
    if (kind == "linear-dynamics") {
        return LinearDynamics{mat_from_json(require(j, "A")), mat_from_json(require(j, "B")),
                              vec_from_json(require(j, "c")), integer(j, "horizon")};
    }
    if (kind == "burgers-dynamics") {
        return BurgersDynamics{integer(j, "m"),      integer(j, "n"),  number(j, "nu_min"),
                               number(j, "nu_max"), number(j, "dt"), number(j, "ds")};
    }
    throw ConfigError("unknown constraint kind '" + kind + "'");
}

} // namespace

Json vec_to_json(const Vec& v)
{
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Vec vec_from_json(const Json& j)
{
    if (!j.is_array()) throw ConfigError("expected an array of numbers");
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw ConfigError("expected an array of numbers");
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

Json mat_to_json(const Mat& m)
{
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vec_to_json(m.row(r).transpose()));
    return rows;
}

Mat mat_from_json(const Json& j)
{
    if (!j.is_array()) throw ConfigError("expected an array of rows");
    if (j.empty()) return Mat(0, 0);
    const Vec first = vec_from_json(j[0]);
    Mat m(static_cast<Eigen::Index>(j.size()), first.size());
    for (std::size_t r = 0; r < j.size(); ++r) {
        const Vec row = vec_from_json(j[r]);
        if (row.size() != first.size()) throw ConfigError("matrix rows differ in length");
        m.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    return m;
}

Json constraints_to_json(const ConstraintSet& cs)
{
    Json blocks = Json::array();
    for (const auto& b : cs.blocks()) blocks.push_back(std::visit(BlockWriter{}, b));
    return {{"version", kFormatVersion}, {"dim", cs.dim()}, {"blocks", blocks}};
}

ConstraintSet constraints_from_json(const Json& j)
{
    const int dim = integer(j, "dim");
    if (dim <= 0) throw ConfigError("constraint set dimension must be positive");
    const Json& blocks = require(j, "blocks");
    if (!blocks.is_array()) throw ConfigError("'blocks' must be an array");
    ConstraintSet cs(dim);
    for (const auto& b : blocks) cs.add(block_from_json(b));
    return cs;
}

Json cost_to_json(const CostFn& cost)
{
    Json j = {{"kind", cost_kind_name(cost.kind())}, {"dim", cost.dim()}};
    switch (cost.kind()) {
    case CostKind::Zero: break;
    case CostKind::QuadraticToTarget:
        j["target"] = vec_to_json(cost.quadratic_target());
        j["weights"] = vec_to_json(cost.quadratic_weights());
        break;
    case CostKind::ControlEnergy: {
        Json idx = Json::array();
        for (Eigen::Index i = 0; i < cost.quadratic_weights().size(); ++i) {
            if (cost.quadratic_weights()(i) != 0.0) idx.push_back(i);
        }
        j["indices"] = idx;
        j["scale"] = cost.scale();
        break;
    }
    case CostKind::PathLength:
        j["points"] = cost.path_points();
        j["scale"] = cost.scale();
        break;
    case CostKind::Custom: throw ConfigError("custom costs cannot be serialized");
    }
    return j;
}

CostFn cost_from_json(const Json& j)
{
    const std::string kind = require(j, "kind").get<std::string>();
    const int dim = integer(j, "dim");
    if (kind == cost_kind_name(CostKind::Zero)) return CostFn::zero(dim);
    if (kind == cost_kind_name(CostKind::QuadraticToTarget)) {
        CostFn c = CostFn::quadratic(vec_from_json(require(j, "target")), vec_from_json(require(j, "weights")));
        if (c.dim() != dim) throw DimensionError("quadratic cost does not match its declared dimension");
        return c;
    }
    if (kind == cost_kind_name(CostKind::ControlEnergy)) {
        return CostFn::control_energy(dim, require(j, "indices").get<std::vector<int>>(), number(j, "scale"));
    }
    if (kind == cost_kind_name(CostKind::PathLength)) {
        return CostFn::path_length(dim, require(j, "points").get<std::vector<std::vector<int>>>(), number(j, "scale"));
    }
    throw ConfigError("unknown or non-serializable cost kind '" + kind + "'");
}

std::string format_double(double x)
{
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields)
{
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        out << csv_field(fields[i]);
    }
    out << "\r\n";
}

Json run_record(const SampleRun& run, const std::string& config_hash, std::uint64_t seed, int index)
{
    Json j;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["index"] = index;
    j["method"] = sampler_method_name(run.method);
    j["ok"] = true;
    j["terminal"] = vec_to_json(run.terminal());
    j["residual"] = run.terminal_report.residual;
    j["feasible"] = run.terminal_report.residual <= kDefaultFeasibilityTol;
    j["cost"] = run.cost;
    j["objective"] = run.objective;
    j["unconverged_steps"] = run.unconverged_steps;
    j["final_converged"] = run.final_converged;
    return j;
}

void write_text_file(const std::string& path, const std::string& text)
{
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw Error("failed writing '" + path + "'");
}

std::string read_text_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string json_hash(const Json& j)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
    return buf;
}

std::string file_hash(const std::string& path)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(read_text_file(path))));
    return buf;
}

} // namespace hardflow
