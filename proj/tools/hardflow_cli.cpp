// hardflow: train, sample, bench and verify from the command line.
//
// Exit codes: 0 success, 1 check failure (or runtime failure), 2 usage/config error.

#include "hardflow/bench.hpp"
#include "hardflow/checks.hpp"
#include "hardflow/config.hpp"
#include "hardflow/io.hpp"
#include "hardflow/samplers.hpp"
#include "hardflow/tasks.hpp"
#include "hardflow/velocity.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <optional>
#include <sstream>

using namespace hardflow;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheck = 1;
constexpr int kExitUsage = 2;

struct CommonFlags {
    std::string config;
    std::optional<std::string> task, variant, checkpoint, out;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
};

void add_common(CLI::App* cmd, CommonFlags& f)
{
    cmd->add_option("--config", f.config, "INI configuration file");
    cmd->add_option("--task", f.task, "gauss2d, planar-traj or mini-burgers");
    cmd->add_option("--variant", f.variant, "task variant (gauss2d: halfspace, ball)");
    cmd->add_option("--checkpoint", f.checkpoint, "trained field; default is the task's analytic field");
    cmd->add_option("--seed", f.seed, "seed for source draws and resampling");
    cmd->add_option("--out", f.out, "output directory (HARDFLOW_OUT_DIR overrides)");
    cmd->add_option("--threads", f.threads, "worker threads (0 = hardware concurrency)");
}

AppConfig base_config(const CommonFlags& f)
{
    AppConfig cfg = f.config.empty() ? AppConfig{} : load_config(f.config);
    if (f.task) cfg.task = *f.task;
    if (f.variant) cfg.variant = *f.variant;
    if (f.checkpoint) cfg.checkpoint = *f.checkpoint;
    if (f.seed) cfg.seed = *f.seed;
    if (f.out) cfg.out_dir = *f.out;
    if (f.threads) cfg.threads = *f.threads;
    return cfg;
}

FieldPtr load_field(const AppConfig& cfg, const TaskSpec& task)
{
    if (cfg.checkpoint.empty()) return task.analytic_field();
    const LoadedCheckpoint ck = load_checkpoint(cfg.checkpoint);
    if (ck.field->dim() != task.dim) {
        throw DimensionError("checkpoint dimension " + std::to_string(ck.field->dim()) + " does not match task '" +
                             task.name + "' (" + std::to_string(task.dim) + ")");
    }
    if (ck.meta.scheduler != task.sched.name) {
        throw ConfigError("checkpoint was trained with scheduler '" + ck.meta.scheduler + "', task uses '" +
                          task.sched.name + "'");
    }
    return ck.field;
}

// ------------------------------------------------------------------ train

int run_train(const CommonFlags& f, std::optional<int> steps, std::optional<std::uint64_t> train_seed)
{
    AppConfig cfg = base_config(f);
    if (steps) cfg.train.steps = *steps;
    if (train_seed) cfg.train.seed = *train_seed;
    cfg.validate();
    const TaskSpec task = resolve_task(cfg);
    const std::string dir = resolve_out_dir(cfg.out_dir);

    const TrainResult res = cfm_train(task.pairs(), task.dim, task.sched, cfg.train);
    const std::string ck_path = dir + "/" + cfg.train_out;
    write_text_file(ck_path, "");
    save_checkpoint(ck_path, *res.field, CheckpointMeta{task.sched.name, cfg.train.seed});

    Json hidden = cfg.train.hidden;
    Json log = {{"version", kFormatVersion},
                {"task", task.name},
                {"dim", task.dim},
                {"scheduler", task.sched.name},
                {"seed", cfg.train.seed},
                {"config",
                 {{"hidden", hidden},
                  {"activation", activation_name(cfg.train.activation)},
                  {"steps", cfg.train.steps},
                  {"batch_size", cfg.train.batch_size},
                  {"learning_rate", cfg.train.learning_rate}}},
                {"steps", res.log.steps},
                {"running_loss", res.log.running_loss},
                {"initial_heldout_loss", res.log.initial_heldout_loss},
                {"final_heldout_loss", res.log.final_heldout_loss},
                {"checkpoint", cfg.train_out}};
    write_text_file(dir + "/train_log.json", log.dump(2) + "\n");
    std::cout << "trained " << task.name << " field: held-out CFM loss " << res.log.initial_heldout_loss << " -> "
              << res.log.final_heldout_loss << "\ncheckpoint: " << ck_path << "\n";
    return kExitOk;
}

// ------------------------------------------------------------------ sample

struct SamplerFlags {
    std::optional<std::string> method;
    std::optional<double> lambda_oc, activation;
    std::optional<int> steps, num;
};

void add_sampler_flags(CLI::App* cmd, SamplerFlags& s)
{
    cmd->add_option("--lambda-oc", s.lambda_oc, "control weight lambda_oc > 0");
    cmd->add_option("--steps", s.steps, "Euler steps N");
    cmd->add_option("--activation", s.activation, "activation fraction phi in [0, 1]");
    cmd->add_option("--num", s.num, "number of samples");
}

void apply_sampler_flags(AppConfig& cfg, const SamplerFlags& s)
{
    if (s.method) cfg.method = *s.method;
    if (s.lambda_oc) cfg.lambda_oc = *s.lambda_oc;
    if (s.activation) cfg.activation = *s.activation;
    if (s.steps) cfg.steps = *s.steps;
    if (s.num) cfg.num = *s.num;
}

int run_sample(const CommonFlags& f, const SamplerFlags& s)
{
    AppConfig cfg = base_config(f);
    apply_sampler_flags(cfg, s);
    cfg.validate();
    const TaskSpec task = resolve_task(cfg);
    const SamplerConfig scfg = resolve_sampler(cfg, task);
    const int num = resolve_num(cfg, task);
    const FieldPtr field = load_field(cfg, task);
    const std::string dir = resolve_out_dir(cfg.out_dir);
    const std::string hash = json_hash(Json::parse(config_fingerprint(cfg, task)));

    const auto x0s = draw_sources(task, num, cfg.seed);
    const auto items = sample_batch(*field, task.sched, x0s, task.cost, task.constraints, scfg, cfg.threads);

    std::ostringstream jsonl, csv, timing;
    std::vector<std::string> header = {"index", "ok", "residual", "feasible", "cost", "objective"};
    for (int k = 0; k < task.dim; ++k) header.push_back("x" + std::to_string(k));
    write_csv_row(csv, header);
    write_csv_row(timing, {"index", "wall_time_s"});

    int failures = 0, feasible = 0;
    double sum_res = 0.0, sum_cost = 0.0, sum_obj = 0.0;
    for (std::size_t k = 0; k < items.size(); ++k) {
        const int idx = static_cast<int>(k);
        if (!items[k].run) {
            ++failures;
            Json rec = {{"config_hash", hash}, {"seed", cfg.seed}, {"index", idx},
                        {"method", sampler_method_name(scfg.method)}, {"ok", false}, {"error", items[k].error}};
            jsonl << rec.dump() << "\n";
            std::vector<std::string> row = {std::to_string(idx), "0", "", "0", "", ""};
            row.resize(header.size());
            write_csv_row(csv, row);
            continue;
        }
        const SampleRun& run = *items[k].run;
        Json rec = run_record(run, hash, cfg.seed, idx);
        jsonl << rec.dump() << "\n";
        const bool ok = run.terminal_report.residual <= kDefaultFeasibilityTol;
        if (ok) ++feasible;
        sum_res += std::max(0.0, run.terminal_report.residual);
        sum_cost += run.cost;
        sum_obj += run.objective;
        std::vector<std::string> row = {std::to_string(idx), "1", format_double(run.terminal_report.residual),
                                        ok ? "1" : "0", format_double(run.cost), format_double(run.objective)};
        for (int d = 0; d < task.dim; ++d) row.push_back(format_double(run.terminal()(d)));
        write_csv_row(csv, row);
        write_csv_row(timing, {std::to_string(idx), format_double(run.wall_time)});
    }
    const int ran = num - failures;
    auto mean = [&](double sum) { return ran > 0 ? Json(sum / ran) : Json(nullptr); };
    Json summary = {{"version", kFormatVersion},
                    {"config_hash", hash},
                    {"task", task.name},
                    {"variant", task.variant},
                    {"method", sampler_method_name(scfg.method)},
                    {"seed", cfg.seed},
                    {"steps", scfg.grid.steps()},
                    {"lambda_oc", scfg.lambda_oc},
                    {"activation", scfg.activation},
                    {"model", cfg.checkpoint.empty() ? "analytic" : "checkpoint"},
                    {"samples", num},
                    {"failures", failures},
                    {"feasible", feasible},
                    {"safety_rate", num > 0 ? Json(static_cast<double>(feasible) / num) : Json(nullptr)},
                    {"mean_residual", mean(sum_res)},
                    {"mean_cost", mean(sum_cost)},
                    {"mean_objective", mean(sum_obj)}};
    write_text_file(dir + "/samples.jsonl", jsonl.str());
    write_text_file(dir + "/samples.csv", csv.str());
    write_text_file(dir + "/summary.json", summary.dump(2) + "\n");
    write_text_file(dir + "/timing.csv", timing.str());
    std::cout << sampler_method_name(scfg.method) << " on " << task.name
              << (task.variant.empty() ? "" : "/" + task.variant) << ": " << feasible << "/" << num << " feasible, "
              << failures << " failed\noutputs: " << dir << "\n";
    return kExitOk;
}

// ------------------------------------------------------------------ bench

int run_bench_cmd(const CommonFlags& f, const SamplerFlags& s, const std::optional<std::string>& methods,
                  std::optional<int> bootstrap, bool no_assert)
{
    AppConfig cfg = base_config(f);
    apply_sampler_flags(cfg, s);
    if (methods) cfg.bench_methods = split_list(*methods);
    if (bootstrap) cfg.bootstrap = *bootstrap;
    if (no_assert) cfg.assertions = false;
    cfg.validate();
    const TaskSpec task = resolve_task(cfg);
    const FieldPtr field = load_field(cfg, task);

    BenchOptions bo;
    const auto names = cfg.bench_methods.empty() ? sampler_method_names() : cfg.bench_methods;
    for (const auto& m : names) bo.methods.push_back(parse_sampler_method(m));
    bo.num = resolve_num(cfg, task);
    bo.seed = cfg.seed;
    bo.sampler = resolve_sampler(cfg, task);
    bo.bootstrap = cfg.bootstrap;
    bo.threads = cfg.threads;
    bo.assertions = cfg.assertions;
    bo.config_hash = json_hash(Json::parse(config_fingerprint(cfg, task)));

    const BenchReport rep = run_bench(task, *field, bo);
    const std::string dir = resolve_out_dir(cfg.out_dir);
    write_bench_outputs(rep, dir);

    std::cout << "task " << task.name << (task.variant.empty() ? "" : "/" + task.variant) << ", " << bo.num
              << " samples, reference " << rep.reference_size << "\n";
    for (const auto& r : rep.rows) {
        std::cout << "  " << r.method << ": safety " << r.safety_rate << ", failures " << r.failures << ", cost "
                  << r.mean_cost;
        if (r.energy) std::cout << ", energy " << r.energy->estimate << " [" << r.energy->lo << ", " << r.energy->hi << "]";
        std::cout << "\n";
    }
    for (const auto& a : rep.assertions) {
        std::cout << (a.passed ? "PASS " : "FAIL ") << a.name << ": " << a.detail << "\n";
    }
    return rep.all_passed() ? kExitOk : kExitCheck;
}

// ------------------------------------------------------------------ verify

int run_verify(const CommonFlags& f, const std::string& suite, double t_min, double t_max, int reduce,
               std::optional<int> bootstrap)
{
    if (!is_suite(suite)) throw ConfigError("unknown suite '" + suite + "'");
    AppConfig cfg = base_config(f);
    if (bootstrap) cfg.bootstrap = *bootstrap;
    cfg.validate();
    if (reduce < 1) throw ConfigError("--reduce must be at least 1");
    if (!(t_min <= t_max)) throw ConfigError("--t-min must not exceed --t-max");

    CheckOptions opts;
    opts.seed = cfg.seed;
    opts.t_min = t_min;
    opts.t_max = t_max;
    opts.reduce = reduce;
    opts.threads = cfg.threads;
    opts.bootstrap = cfg.bootstrap;
    if (!cfg.checkpoint.empty()) {
        const TaskSpec task = make_task("gauss2d", "halfspace", cfg.seed);
        opts.field = load_field(cfg, task);
        opts.field_label = "checkpoint";
    }
    const auto results = run_suite(suite, opts);
    const Json report = verify_report(suite, opts, results);
    const std::string dir = resolve_out_dir(cfg.out_dir);
    write_text_file(dir + "/verify.json", report.dump(2) + "\n");

    std::ostringstream timing;
    write_csv_row(timing, {"check", "label", "seconds"});
    for (const auto& r : results) {
        for (const auto& [label, sec] : r.timing) write_csv_row(timing, {r.name, label, format_double(sec)});
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
    }
    write_text_file(dir + "/verify_timing.csv", timing.str());
    return report["passed"].get<bool>() ? kExitOk : kExitCheck;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Hard-constrained sampling for flow-matching models"};
    app.require_subcommand(1);

    CommonFlags train_f, sample_f, bench_f, verify_f;
    SamplerFlags sample_s, bench_s;

    auto* train = app.add_subcommand("train", "train a velocity field by conditional flow matching");
    add_common(train, train_f);
    std::optional<int> train_steps;
    std::optional<std::uint64_t> train_seed;
    train->add_option("--train-steps", train_steps, "optimizer steps");
    train->add_option("--train-seed", train_seed, "seed for initialization and batches");

    auto* sample = app.add_subcommand("sample", "draw samples with one method");
    add_common(sample, sample_f);
    add_sampler_flags(sample, sample_s);
    sample->add_option("--method", sample_s.method, "sampler method");

    auto* bench = app.add_subcommand("bench", "compare methods on one task");
    add_common(bench, bench_f);
    add_sampler_flags(bench, bench_s);
    std::optional<std::string> bench_methods;
    std::optional<int> bench_bootstrap;
    bool no_assert = false;
    bench->add_option("--methods", bench_methods, "comma-separated methods (default: all)");
    bench->add_option("--bootstrap", bench_bootstrap, "bootstrap replicates for energy-distance intervals");
    bench->add_flag("--no-assert", no_assert, "skip the built-in assertions");

    auto* verify = app.add_subcommand("verify", "run verification checks");
    add_common(verify, verify_f);
    std::string suite = "all";
    double t_min = 0.8, t_max = 1.0;
    int reduce = 1;
    std::optional<int> verify_bootstrap;
    verify->add_option("--suite", suite, "identity, feasibility, nominal, theorem1, theorem3, equivalence, "
                                         "consistency, shift, solver or all");
    verify->add_option("--t-min", t_min, "lower end of the inversion-bound t-window");
    verify->add_option("--t-max", t_max, "upper end of the inversion-bound t-window");
    verify->add_option("--reduce", reduce, "divide sample counts by this factor");
    verify->add_option("--bootstrap", verify_bootstrap, "bootstrap replicates for the shift check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*train) return run_train(train_f, train_steps, train_seed);
        if (*sample) return run_sample(sample_f, sample_s);
        if (*bench) return run_bench_cmd(bench_f, bench_s, bench_methods, bench_bootstrap, no_assert);
        if (*verify) return run_verify(verify_f, suite, t_min, t_max, reduce, verify_bootstrap);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DimensionError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCheck;
    }
    return kExitUsage;
}
