#include "hardflow/config.hpp"

#include "hardflow/io.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace hardflow {

namespace {

namespace pt = boost::property_tree;
namespace fs = std::filesystem;

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what)
{
    throw ConfigError("config key '" + key + "': expected " + what + ", got '" + value + "'");
}

double to_double(const std::string& key, const std::string& v)
{
    std::size_t pos = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &pos);
    } catch (const std::exception&) {
        bad_value(key, v, "a number");
    }
    if (pos != v.size()) bad_value(key, v, "a number");
    return x;
}

long long to_int(const std::string& key, const std::string& v)
{
    std::size_t pos = 0;
    long long x = 0;
    try {
        x = std::stoll(v, &pos);
    } catch (const std::exception&) {
        bad_value(key, v, "an integer");
    }
    if (pos != v.size()) bad_value(key, v, "an integer");
    return x;
}

int to_int32(const std::string& key, const std::string& v)
{
    const long long x = to_int(key, v);
    if (x < -2147483647LL || x > 2147483647LL) bad_value(key, v, "a 32-bit integer");
    return static_cast<int>(x);
}

std::uint64_t to_seed(const std::string& key, const std::string& v)
{
    const long long x = to_int(key, v);
    if (x < 0) bad_value(key, v, "a non-negative integer");
    return static_cast<std::uint64_t>(x);
}

bool to_bool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    bad_value(key, v, "a boolean");
}

using Setter = std::function<void(AppConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters()
{
    static const std::map<std::string, Setter> table = {
        {"task.name", [](AppConfig& c, auto&, auto& v) { c.task = v; }},
        {"task.variant", [](AppConfig& c, auto&, auto& v) { c.variant = v; }},
        {"task.seed", [](AppConfig& c, auto& k, auto& v) { c.seed = to_seed(k, v); }},
        {"task.constraints", [](AppConfig& c, auto&, auto& v) { c.constraints_file = v; }},
        {"task.cost", [](AppConfig& c, auto&, auto& v) { c.cost_file = v; }},
        {"model.checkpoint", [](AppConfig& c, auto&, auto& v) { c.checkpoint = v; }},
        {"sampler.method", [](AppConfig& c, auto&, auto& v) { c.method = v; }},
        {"sampler.steps", [](AppConfig& c, auto& k, auto& v) { c.steps = to_int32(k, v); }},
        {"sampler.lambda_oc", [](AppConfig& c, auto& k, auto& v) { c.lambda_oc = to_double(k, v); }},
        {"sampler.num", [](AppConfig& c, auto& k, auto& v) { c.num = to_int32(k, v); }},
        {"sampler.activation", [](AppConfig& c, auto& k, auto& v) { c.activation = to_double(k, v); }},
        {"sampler.warm_start", [](AppConfig& c, auto& k, auto& v) { c.warm_start = to_bool(k, v); }},
        {"sampler.relaxed_iterations", [](AppConfig& c, auto& k, auto& v) { c.relaxed_iterations = to_int32(k, v); }},
        {"sampler.guidance_step", [](AppConfig& c, auto& k, auto& v) { c.guidance_step = to_double(k, v); }},
        {"sampler.guidance_penalty", [](AppConfig& c, auto& k, auto& v) { c.guidance_penalty = to_double(k, v); }},
        {"sampler.threads", [](AppConfig& c, auto& k, auto& v) { c.threads = to_int32(k, v); }},
        {"solver.method", [](AppConfig& c, auto&, auto& v) { c.solver.method = parse_solver_method(v); }},
        {"solver.max_outer", [](AppConfig& c, auto& k, auto& v) { c.solver.max_outer = to_int32(k, v); }},
        {"solver.update_period", [](AppConfig& c, auto& k, auto& v) { c.solver.update_period = to_int32(k, v); }},
        {"solver.penalty_init", [](AppConfig& c, auto& k, auto& v) { c.solver.penalty_init = to_double(k, v); }},
        {"solver.penalty_growth", [](AppConfig& c, auto& k, auto& v) { c.solver.penalty_growth = to_double(k, v); }},
        {"solver.penalty_window", [](AppConfig& c, auto& k, auto& v) { c.solver.penalty_window = to_int32(k, v); }},
        {"solver.feas_tol", [](AppConfig& c, auto& k, auto& v) { c.solver.feas_tol = to_double(k, v); }},
        {"solver.stat_tol", [](AppConfig& c, auto& k, auto& v) { c.solver.stat_tol = to_double(k, v); }},
        {"solver.max_iterations", [](AppConfig& c, auto& k, auto& v) { c.solver.max_iterations = to_int32(k, v); }},
        {"solver.step_size", [](AppConfig& c, auto& k, auto& v) { c.solver.step_size = to_double(k, v); }},
        {"train.hidden",
         [](AppConfig& c, auto& k, auto& v) {
             c.train.hidden.clear();
             for (const auto& w : split_list(v)) c.train.hidden.push_back(to_int32(k, w));
         }},
        {"train.activation", [](AppConfig& c, auto&, auto& v) { c.train.activation = parse_activation(v); }},
        {"train.steps", [](AppConfig& c, auto& k, auto& v) { c.train.steps = to_int32(k, v); }},
        {"train.batch_size", [](AppConfig& c, auto& k, auto& v) { c.train.batch_size = to_int32(k, v); }},
        {"train.learning_rate", [](AppConfig& c, auto& k, auto& v) { c.train.learning_rate = to_double(k, v); }},
        {"train.seed", [](AppConfig& c, auto& k, auto& v) { c.train.seed = to_seed(k, v); }},
        {"train.log_every", [](AppConfig& c, auto& k, auto& v) { c.train.log_every = to_int32(k, v); }},
        {"train.out", [](AppConfig& c, auto&, auto& v) { c.train_out = v; }},
        {"bench.methods", [](AppConfig& c, auto&, auto& v) { c.bench_methods = split_list(v); }},
        {"bench.bootstrap", [](AppConfig& c, auto& k, auto& v) { c.bootstrap = to_int32(k, v); }},
        {"bench.assertions", [](AppConfig& c, auto& k, auto& v) { c.assertions = to_bool(k, v); }},
        {"output.dir", [](AppConfig& c, auto&, auto& v) { c.out_dir = v; }},
    };
    return table;
}

} // namespace

std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

void AppConfig::validate() const
{
    if (steps && *steps <= 0) throw ConfigError("sampler.steps must be positive");
    if (num && *num < 0) throw ConfigError("sampler.num must be non-negative");
    if (threads < 0) throw ConfigError("sampler.threads must be non-negative");
    if (bootstrap < 2) throw ConfigError("bench.bootstrap needs at least two replicates");
    parse_sampler_method(method);
    for (const auto& m : bench_methods) parse_sampler_method(m);
    solver.validate();
    train.validate();
}

AppConfig parse_config(const std::string& text)
{
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    AppConfig cfg;
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) throw ConfigError("config key '" + section + "' is outside a section");
        static const std::set<std::string> known = {"task", "model", "sampler", "solver", "train", "bench", "output"};
        if (!known.count(section)) throw ConfigError("unknown config section '" + section + "'");
        for (const auto& [key, value] : body) {
            const std::string full = section + "." + key;
            const auto it = setters().find(full);
            if (it == setters().end()) throw ConfigError("unknown config key '" + full + "'");
            it->second(cfg, full, trim(value.data()));
        }
    }
    cfg.validate();
    return cfg;
}

AppConfig load_config(const std::string& path)
{
    AppConfig cfg = parse_config(read_text_file(path));
    // relative file references are taken from the config's own directory
    const fs::path base = fs::path(path).parent_path();
    for (std::string* f : {&cfg.constraints_file, &cfg.cost_file}) {
        if (!f->empty() && fs::path(*f).is_relative()) *f = (base / *f).lexically_normal().string();
    }
    return cfg;
}

std::string resolve_out_dir(const std::string& configured)
{
    const char* env = std::getenv("HARDFLOW_OUT_DIR");
    if (env != nullptr && *env != '\0') return env;
    return configured;
}

TaskSpec resolve_task(const AppConfig& cfg)
{
    TaskSpec task = make_task(cfg.task, cfg.variant, cfg.seed);
    if (!cfg.constraints_file.empty()) {
        ConstraintSet cs = constraints_from_json(Json::parse(read_text_file(cfg.constraints_file), nullptr, true, true));
        if (cs.dim() != task.dim) throw DimensionError("constraints file does not match the task dimension");
        task.constraints = std::move(cs);
        task.variant = "custom";
    }
    if (!cfg.cost_file.empty()) {
        CostFn cost = cost_from_json(Json::parse(read_text_file(cfg.cost_file), nullptr, true, true));
        if (cost.dim() != task.dim) throw DimensionError("cost file does not match the task dimension");
        task.cost = std::move(cost);
    }
    return task;
}

SamplerConfig resolve_sampler(const AppConfig& cfg, const TaskSpec& task)
{
    SamplerConfig s;
    s.grid = TimeGrid::uniform(cfg.steps.value_or(task.default_steps));
    s.lambda_oc = cfg.lambda_oc.value_or(task.default_lambda);
    s.method = parse_sampler_method(cfg.method);
    s.activation = cfg.activation;
    s.solver = cfg.solver;
    s.warm_start = cfg.warm_start;
    s.relaxed_iterations = cfg.relaxed_iterations;
    s.guidance_step = cfg.guidance_step;
    s.guidance_penalty = cfg.guidance_penalty;
    s.record_trajectory = false;
    s.validate();
    return s;
}

int resolve_num(const AppConfig& cfg, const TaskSpec& task) { return cfg.num.value_or(task.default_samples); }

std::string config_fingerprint(const AppConfig& cfg, const TaskSpec& task)
{
    const SamplerConfig s = resolve_sampler(cfg, task);
    Json j;
    j["task"] = {{"name", task.name}, {"variant", task.variant}, {"seed", task.seed}};
    j["constraints"] = constraints_to_json(task.constraints);
    j["cost"] = cost_to_json(task.cost);
    // by content, so the same weights in another directory hash the same
    j["model"] = cfg.checkpoint.empty() ? Json("analytic") : Json("hfck:" + file_hash(cfg.checkpoint));
    j["sampler"] = {{"method", sampler_method_name(s.method)},
                    {"steps", s.grid.steps()},
                    {"lambda_oc", s.lambda_oc},
                    {"activation", s.activation},
                    {"warm_start", s.warm_start},
                    {"relaxed_iterations", s.relaxed_iterations},
                    {"guidance_step", s.guidance_step},
                    {"guidance_penalty", s.guidance_penalty}};
    const SolverConfig& v = s.solver;
    j["solver"] = {{"method", solver_method_name(v.method)}, {"max_outer", v.max_outer},
                   {"update_period", v.update_period},       {"penalty_init", v.penalty_init},
                   {"penalty_growth", v.penalty_growth},     {"penalty_window", v.penalty_window},
                   {"feas_tol", v.feas_tol},                 {"stat_tol", v.stat_tol},
                   {"max_iterations", v.max_iterations},     {"step_size", v.step_size}};
    return j.dump();
}

} // namespace hardflow
