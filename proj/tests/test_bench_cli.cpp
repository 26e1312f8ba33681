#include "doctest.h"
#include "support.hpp"

#include "hardflow/bench.hpp"
#include "hardflow/config.hpp"
#include "hardflow/io.hpp"
#include "hardflow/schema.hpp"

#include <cstdlib>
#include <filesystem>
#include <sstream>

using namespace hardflow;
using testing::vec;
namespace fs = std::filesystem;

namespace {

const std::string kSchemas = HARDFLOW_SCHEMA_DIR;

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("hardflow_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

} // namespace

TEST_CASE("number formatting round-trips")
{
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n;
    for (int k = 0; k < 1000; ++k) {
        const double x = n(rng) * std::pow(10.0, k % 20 - 10);
        CHECK(std::stod(format_double(x)) == x);
    }
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(std::nan("")) == "nan");
    CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
}

TEST_CASE("CSV quoting")
{
    CHECK(csv_field("plain") == "plain");
    CHECK(csv_field("a,b") == "\"a,b\"");
    CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CHECK(csv_field("two\nlines") == "\"two\nlines\"");
    std::ostringstream out;
    write_csv_row(out, {"x", "y,z", ""});
    CHECK(out.str() == "x,\"y,z\",\r\n");
}

TEST_CASE("constraint and cost JSON round-trips")
{
    ConstraintSet cs(3);
    cs.append(make_halfspace(vec({1.0, -1.0, 0.5}), 0.2));
    cs.append(make_ball_obstacle(3, {0, 2}, Eigen::Vector2d(0.1, 0.2), 0.5));
    const double inf = std::numeric_limits<double>::infinity();
    cs.add(Box{vec({-1.0, -inf, 0.0}), vec({inf, 2.0, 0.0})});
    const ConstraintSet back = constraints_from_json(Json::parse(constraints_to_json(cs).dump()));
    CHECK(validate_schema(load_schema(kSchemas, "constraints"), constraints_to_json(cs)).empty());
    std::mt19937_64 rng(2);
    for (int k = 0; k < 50; ++k) {
        const Vec x = testing::normal_vec(rng, 3, 2.0);
        CHECK((cs.values(x) - back.values(x)).norm() == 0.0);
    }
    const CostFn q = CostFn::quadratic(vec({1.0, 2.0, 3.0}), vec({0.5, 0.0, 2.0}));
    const CostFn qb = cost_from_json(cost_to_json(q));
    CHECK(validate_schema(load_schema(kSchemas, "cost"), cost_to_json(q)).empty());
    const Vec x = vec({0.3, -0.2, 4.0});
    CHECK(qb.value(x) == q.value(x));
    CHECK_THROWS_AS(constraints_from_json(Json::parse(R"({"dim": 2, "blocks": [{"kind": "wormhole"}]})")), ConfigError);
}

TEST_CASE("json hash is stable and key-order independent")
{
    const Json a = Json::parse(R"({"a": 1, "b": [1, 2]})");
    const Json b = Json::parse(R"({"b": [1, 2], "a": 1})");
    CHECK(json_hash(a) == json_hash(b));
    CHECK(json_hash(a).size() == 16);
    CHECK(json_hash(a) != json_hash(Json::parse(R"({"a": 2, "b": [1, 2]})")));
}

TEST_CASE("schema validator")
{
    const Json schema = Json::parse(R"({
        "type": "object",
        "required": ["n", "tags"],
        "additionalProperties": false,
        "properties": {
            "n": {"type": "integer", "minimum": 0},
            "x": {"type": ["number", "null"], "exclusiveMinimum": 0},
            "tags": {"type": "array", "items": {"enum": ["a", "b"]}, "minItems": 1},
            "name": {"type": "string", "minLength": 2}
        }})");
    CHECK(validate_schema(schema, Json::parse(R"({"n": 3, "tags": ["a"], "x": null})")).empty());
    CHECK(validate_schema(schema, Json::parse(R"({"n": 3, "tags": ["a"], "x": 0.5, "name": "ok"})")).empty());
    CHECK_FALSE(validate_schema(schema, Json::parse(R"({"tags": ["a"]})")).empty());
    CHECK_FALSE(validate_schema(schema, Json::parse(R"({"n": -1, "tags": ["a"]})")).empty());
    CHECK_FALSE(validate_schema(schema, Json::parse(R"({"n": 1.5, "tags": ["a"]})")).empty());
    CHECK_FALSE(validate_schema(schema, Json::parse(R"({"n": 1, "tags": []})")).empty());
    CHECK_FALSE(validate_schema(schema, Json::parse(R"({"n": 1, "tags": ["c"]})")).empty());
    CHECK_FALSE(validate_schema(schema, Json::parse(R"({"n": 1, "tags": ["a"], "x": 0})")).empty());
    CHECK_FALSE(validate_schema(schema, Json::parse(R"({"n": 1, "tags": ["a"], "extra": 1})")).empty());
    CHECK_FALSE(validate_schema(schema, Json::parse(R"({"n": 1, "tags": ["a"], "name": "x"})")).empty());
    CHECK_THROWS(load_schema(kSchemas, "no_such_thing"));
}

TEST_CASE("config parsing")
{
    const AppConfig cfg = parse_config(R"(
; comment
[task]
name = planar-traj
seed = 7
[sampler]
method = projection-late
steps = 12
lambda_oc = 0.5
[solver]
feas_tol = 1e-8
[bench]
methods = nominal, hardflow
)");
    CHECK(cfg.task == "planar-traj");
    CHECK(cfg.seed == 7);
    CHECK(cfg.steps == 12);
    CHECK(*cfg.lambda_oc == 0.5);
    CHECK(cfg.solver.feas_tol == 1e-8);
    CHECK(cfg.bench_methods == std::vector<std::string>{"nominal", "hardflow"});
    const TaskSpec task = resolve_task(cfg);
    CHECK(task.dim == 72);
    const SamplerConfig sc = resolve_sampler(cfg, task);
    CHECK(sc.grid.steps() == 12);
    CHECK(sc.method == SamplerMethod::ProjectionLate);
    CHECK(resolve_num(cfg, task) == task.default_samples);

    CHECK_THROWS_AS(parse_config("[task]\ncolour = red\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[nonsense]\nx = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[sampler]\nsteps = many\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[sampler]\nsteps = 0\n"), ConfigError);
    CHECK_THROWS_AS(resolve_task(parse_config("[task]\nname = mnist\n")), ConfigError);
    CHECK(split_list(" a, b ,c,, ") == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("shipped configs load and files resolve next to them")
{
    for (const char* name : {"gauss2d", "gauss2d_train", "gauss2d_custom", "planar", "burgers"}) {
        CAPTURE(name);
        const AppConfig cfg = load_config(std::string(HARDFLOW_CONFIG_DIR) + "/" + name + ".ini");
        CHECK_NOTHROW(resolve_task(cfg));
    }
    const AppConfig custom = load_config(std::string(HARDFLOW_CONFIG_DIR) + "/gauss2d_custom.ini");
    const TaskSpec task = resolve_task(custom);
    CHECK(task.variant == "custom");
    CHECK(residual(task.constraints, vec({-2.0, 0.0})).feasible());
    CHECK_FALSE(residual(task.constraints, vec({1.0, 1.0})).feasible());
    CHECK_THROWS_AS(load_config("/nonexistent/config.ini"), ConfigError);
}

TEST_CASE("fingerprint tracks effective settings")
{
    AppConfig a = parse_config("[task]\nname = gauss2d\n");
    AppConfig b = a;
    const TaskSpec ta = resolve_task(a);
    CHECK(config_fingerprint(a, ta) == config_fingerprint(b, ta));
    b.lambda_oc = 3.0;
    CHECK(config_fingerprint(a, ta) != config_fingerprint(b, ta));

    // the model enters by content, not by path
    const fs::path dir = scratch("fingerprint");
    std::mt19937_64 rng(1);
    const MlpField net = MlpField::initialize(2, {8, 8}, Activation::Tanh, rng);
    save_checkpoint((dir / "one.hfck").string(), net, CheckpointMeta{"linear", 0});
    fs::create_directories(dir / "elsewhere");
    fs::copy_file(dir / "one.hfck", dir / "elsewhere" / "one.hfck");
    AppConfig c1 = a, c2 = a;
    c1.checkpoint = (dir / "one.hfck").string();
    c2.checkpoint = (dir / "elsewhere" / "one.hfck").string();
    CHECK(config_fingerprint(c1, ta) == config_fingerprint(c2, ta));
    CHECK(config_fingerprint(c1, ta) != config_fingerprint(a, ta));
    fs::remove_all(dir);
}

TEST_CASE("box statistics")
{
    const BoxStats s = box_stats({5.0, 1.0, 3.0, 2.0, 4.0});
    CHECK(s.n == 5);
    CHECK(s.median == 3.0);
    CHECK(s.q1 == 2.0);
    CHECK(s.q3 == 4.0);
    CHECK(s.whisker_lo == 1.0);
    CHECK(s.whisker_hi == 5.0);
    // 100 is beyond q3 + 1.5 IQR
    const BoxStats o = box_stats({1.0, 2.0, 3.0, 4.0, 100.0});
    CHECK(o.max == 100.0);
    CHECK(o.whisker_hi == 4.0);
    const BoxStats even = box_stats({1.0, 2.0, 3.0, 4.0});
    CHECK(even.median == 2.5);
    CHECK(even.q1 == doctest::Approx(1.75));
    CHECK(box_stats({}).n == 0);
}

TEST_CASE("planar dynamics and path length")
{
    const TaskSpec task = make_task("planar-traj");
    REQUIRE(task.dynamics.has_value());
    // independent rollout: p <- 0.65 p + 0.35 q, q <- q + 0.1 a
    std::mt19937_64 rng(3);
    Vec x = Vec::Zero(task.dim);
    Eigen::Vector2d p = Eigen::Vector2d::Zero(), q = Eigen::Vector2d::Zero();
    double length = 0.0;
    for (int i = 0; i < kPlanarHorizon; ++i) {
        const int o = planar_position_index(i);
        x.segment<2>(o) = p;
        x.segment<2>(o + 2) = q;
        const Vec a = testing::normal_vec(rng, 2);
        x.segment<2>(o + 4) = a;
        const Eigen::Vector2d np = 0.65 * p + 0.35 * q;
        if (i + 1 < kPlanarHorizon) length += (np - p).norm();
        p = np;
        q = q + 0.1 * a;
    }
    CHECK(residual(*task.dynamics, x).residual <= 1e-12);
    CHECK(planar_path_length(x) == doctest::Approx(length).epsilon(1e-12));
    x(planar_position_index(5)) += 0.1;
    CHECK(residual(*task.dynamics, x).residual >= 0.05);
    for (int k = 0; k < 20; ++k) CHECK(residual(*task.dynamics, task.draw_data(rng)).residual <= 1e-12);
}

TEST_CASE("small bench run, assertions and outputs")
{
    const TaskSpec task = make_task("gauss2d", "halfspace");
    const FieldPtr f = task.analytic_field();
    BenchOptions opts;
    opts.methods = {SamplerMethod::Nominal, SamplerMethod::HardFlow, SamplerMethod::Posthoc};
    opts.num = 60;
    opts.bootstrap = 20;
    opts.sampler.grid = TimeGrid::uniform(20);
    opts.config_hash = "0123456789abcdef";
    const BenchReport rep = run_bench(task, *f, opts);
    REQUIRE(rep.rows.size() == 3);
    CHECK(rep.rows[1].method == "hardflow");
    CHECK(rep.rows[1].safety_rate == 1.0);
    CHECK(rep.rows[1].failures == 0);
    CHECK(rep.rows[2].safety_rate == 1.0);
    CHECK(rep.rows[0].safety_rate < 0.5);
    CHECK(is_hard_feasibility_method(SamplerMethod::HardFlow));
    CHECK_FALSE(is_hard_feasibility_method(SamplerMethod::Nominal));
    for (const BenchRow& row : rep.rows) {
        REQUIRE(row.energy.has_value());
        CHECK(row.energy->lo <= row.energy->hi);
    }
    bool safety_assert = false;
    for (const BenchAssertion& a : bench_assertions(rep))
        if (a.name.find("safety") != std::string::npos) safety_assert = a.passed;
    CHECK(safety_assert);

    const Json doc = bench_to_json(rep);
    const auto errors = validate_schema(load_schema(kSchemas, "bench_report"), doc);
    for (const auto& e : errors) MESSAGE(e);
    CHECK(errors.empty());

    // same options give the same document
    CHECK(bench_to_json(run_bench(task, *f, opts)).dump() == doc.dump());

    const fs::path dir = scratch("bench");
    write_bench_outputs(rep, dir.string());
    for (const char* file : {"bench.json", "bench.csv", "bench_samples.csv", "bench_box.csv", "bench_timing.csv"})
        CHECK(fs::exists(dir / file));
    CHECK(Json::parse(read_text_file((dir / "bench.json").string())) == doc);
    fs::remove_all(dir);
}

TEST_CASE("run records validate")
{
    const TaskSpec task = make_task("gauss2d", "ball");
    const FieldPtr f = task.analytic_field();
    SamplerConfig cfg;
    cfg.grid = TimeGrid::uniform(10);
    const SampleRun run = sample_hardflow(*f, task.sched, vec({0.5, 0.5}), task.cost, task.constraints, cfg);
    const Json rec = run_record(run, "0123456789abcdef", 4, 0);
    const auto errors = validate_schema(load_schema(kSchemas, "sample_record"), rec);
    for (const auto& e : errors) MESSAGE(e);
    CHECK(errors.empty());
}
