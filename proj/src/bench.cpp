#include "hardflow/bench.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace hardflow {

namespace {

double mean_of(const std::vector<double>& v)
{
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double interp_quantile(const std::vector<double>& sorted, double q)
{
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

Json optional_number(const std::optional<double>& x) { return x ? Json(*x) : Json(nullptr); }

std::string opt_text(const std::optional<double>& x) { return x ? format_double(*x) : ""; }

const BenchRow* find_row(const BenchReport& r, SamplerMethod m)
{
    for (const auto& row : r.rows) {
        if (row.method == sampler_method_name(m)) return &row;
    }
    return nullptr;
}

} // namespace

bool is_hard_feasibility_method(SamplerMethod m)
{
    return m == SamplerMethod::HardFlow || m == SamplerMethod::Posthoc || m == SamplerMethod::ProjectionAll ||
           m == SamplerMethod::ProjectionLate;
}

double planar_path_length(const Vec& x)
{
    double total = 0.0;
    for (int i = 0; i + 1 < kPlanarHorizon; ++i) {
        const int a = planar_position_index(i), b = planar_position_index(i + 1);
        total += (x.segment<2>(b) - x.segment<2>(a)).norm();
    }
    return total;
}

bool BenchReport::all_passed() const
{
    return std::all_of(assertions.begin(), assertions.end(), [](const BenchAssertion& a) { return a.passed; });
}

BoxStats box_stats(std::vector<double> values)
{
    BoxStats b;
    values.erase(std::remove_if(values.begin(), values.end(), [](double x) { return !std::isfinite(x); }),
                 values.end());
    b.n = static_cast<int>(values.size());
    if (values.empty()) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        b.min = b.whisker_lo = b.q1 = b.median = b.q3 = b.whisker_hi = b.max = nan;
        return b;
    }
    std::sort(values.begin(), values.end());
    b.min = values.front();
    b.max = values.back();
    b.q1 = interp_quantile(values, 0.25);
    b.median = interp_quantile(values, 0.5);
    b.q3 = interp_quantile(values, 0.75);
    const double iqr = b.q3 - b.q1;
    const double lo_fence = b.q1 - 1.5 * iqr, hi_fence = b.q3 + 1.5 * iqr;
    b.whisker_lo = *std::lower_bound(values.begin(), values.end(), lo_fence);
    b.whisker_hi = *(std::upper_bound(values.begin(), values.end(), hi_fence) - 1);
    return b;
}

BenchReport run_bench(const TaskSpec& task, const VelocityField& field, const BenchOptions& opts)
{
    if (opts.num < 0) throw ConfigError("bench sample count must be non-negative");
    if (opts.methods.empty()) throw ConfigError("bench needs at least one method");
    BenchReport report;
    report.task = task.name;
    report.variant = task.variant;
    report.seed = opts.seed;
    report.config_hash = opts.config_hash;

    const std::vector<Vec> x0s = draw_sources(task, opts.num, opts.seed);
    const int ref_count = opts.reference > 0 ? opts.reference : opts.num;
    const std::vector<Vec> reference =
        ref_count > 0 ? rejection_reference(task, ref_count, mix_seed(opts.seed, 0x5EF)) : std::vector<Vec>{};
    report.reference_size = static_cast<int>(reference.size());
    const bool has_path = task.name == "planar-traj";

    for (SamplerMethod method : opts.methods) {
        SamplerConfig cfg = opts.sampler;
        cfg.method = method;
        cfg.record_trajectory = false;
        const auto items = sample_batch(field, task.sched, x0s, task.cost, task.constraints, cfg, opts.threads);

        BenchRow row;
        row.method = sampler_method_name(method);
        row.samples = opts.num;
        std::vector<double> residuals, costs, objectives, paths, times;
        std::vector<Vec> terminals;
        int safe = 0;
        for (std::size_t k = 0; k < items.size(); ++k) {
            BenchSample s;
            s.index = static_cast<int>(k);
            if (!items[k].run) {
                s.error = items[k].error;
                ++row.failures;
                row.per_sample.push_back(s);
                continue;
            }
            const SampleRun& run = *items[k].run;
            s.ok = true;
            s.residual = run.terminal_report.residual;
            s.cost = run.cost;
            s.objective = run.objective;
            s.wall_time = run.wall_time;
            if (task.dynamics) {
                s.dynamics_residual = std::max(0.0, residual(*task.dynamics, run.terminal()).residual);
                row.max_dynamics_residual = std::max(row.max_dynamics_residual.value_or(0.0), *s.dynamics_residual);
            }
            if (has_path) {
                s.path_length = planar_path_length(run.terminal());
                paths.push_back(*s.path_length);
            }
            if (s.residual <= kDefaultFeasibilityTol) ++safe;
            residuals.push_back(std::max(0.0, s.residual));
            costs.push_back(s.cost);
            objectives.push_back(s.objective);
            times.push_back(s.wall_time);
            terminals.push_back(run.terminal());
            row.per_sample.push_back(std::move(s));
        }
        row.safety_rate = opts.num > 0 ? static_cast<double>(safe) / opts.num : 0.0;
        row.mean_residual = mean_of(residuals);
        row.mean_cost = mean_of(costs);
        row.mean_objective = mean_of(objectives);
        row.mean_time = mean_of(times);
        if (has_path) row.mean_path_length = mean_of(paths);
        if (terminals.size() >= 2 && reference.size() >= 2) {
            row.energy = energy_distance_bootstrap(terminals, reference, opts.bootstrap,
                                                   mix_seed(opts.seed, fnv1a64(row.method)), 0.95, opts.threads);
        }
        report.rows.push_back(std::move(row));
    }
    if (opts.assertions) report.assertions = bench_assertions(report);
    return report;
}

std::vector<BenchAssertion> bench_assertions(const BenchReport& report)
{
    std::vector<BenchAssertion> out;
    const BenchRow* hf = find_row(report, SamplerMethod::HardFlow);
    if (hf == nullptr || hf->samples == 0) return out;
    {
        BenchAssertion a{"hardflow_safety", hf->safety_rate == 1.0 && hf->failures == 0, ""};
        std::ostringstream d;
        d << "safety " << hf->safety_rate << ", failures " << hf->failures;
        a.detail = d.str();
        out.push_back(a);
    }
    if (hf->max_dynamics_residual) {
        BenchAssertion a{"hardflow_dynamics_residual", *hf->max_dynamics_residual <= kDefaultFeasibilityTol,
                         "max " + format_double(*hf->max_dynamics_residual)};
        out.push_back(a);
    }
    if (report.task == "gauss2d" && hf->energy) {
        BenchAssertion a{"hardflow_lowest_energy_distance", true, ""};
        std::ostringstream d;
        d << "hardflow " << hf->energy->estimate;
        for (const auto& row : report.rows) {
            if (&row == hf || !is_hard_feasibility_method(parse_sampler_method(row.method)) || !row.energy) continue;
            d << "; " << row.method << " " << row.energy->estimate;
            if (!(hf->energy->estimate < row.energy->estimate)) a.passed = false;
        }
        a.detail = d.str();
        out.push_back(a);
    }
    return out;
}

Json bench_to_json(const BenchReport& report)
{
    Json j;
    j["version"] = kFormatVersion;
    j["task"] = report.task;
    j["variant"] = report.variant;
    j["seed"] = report.seed;
    j["config_hash"] = report.config_hash;
    j["reference_size"] = report.reference_size;
    Json rows = Json::array();
    for (const auto& r : report.rows) {
        Json row = {{"method", r.method},
                    {"samples", r.samples},
                    {"failures", r.failures},
                    {"safety_rate", r.safety_rate},
                    {"mean_residual", optional_number(r.mean_residual)},
                    {"mean_cost", optional_number(r.mean_cost)},
                    {"mean_objective", optional_number(r.mean_objective)},
                    {"max_dynamics_residual", optional_number(r.max_dynamics_residual)},
                    {"mean_path_length", optional_number(r.mean_path_length)}};
        if (r.energy) {
            row["energy_distance"] = {{"estimate", r.energy->estimate}, {"lo", r.energy->lo}, {"hi", r.energy->hi}};
        } else {
            row["energy_distance"] = nullptr;
        }
        rows.push_back(row);
    }
    j["rows"] = rows;
    Json asserts = Json::array();
    for (const auto& a : report.assertions) asserts.push_back({{"name", a.name}, {"passed", a.passed}, {"detail", a.detail}});
    j["assertions"] = asserts;
    j["passed"] = report.all_passed();
    return j;
}

void write_bench_outputs(const BenchReport& report, const std::string& dir)
{
    write_text_file(dir + "/bench.json", bench_to_json(report).dump(2) + "\n");

    std::ostringstream csv;
    write_csv_row(csv, {"method", "samples", "failures", "safety_rate", "mean_residual", "mean_cost", "mean_objective",
                        "energy_distance", "energy_lo", "energy_hi", "max_dynamics_residual", "mean_path_length"});
    for (const auto& r : report.rows) {
        write_csv_row(csv, {r.method, std::to_string(r.samples), std::to_string(r.failures), format_double(r.safety_rate),
                            format_double(r.mean_residual), format_double(r.mean_cost), format_double(r.mean_objective),
                            r.energy ? format_double(r.energy->estimate) : "",
                            r.energy ? format_double(r.energy->lo) : "", r.energy ? format_double(r.energy->hi) : "",
                            opt_text(r.max_dynamics_residual), opt_text(r.mean_path_length)});
    }
    write_text_file(dir + "/bench.csv", csv.str());

    std::ostringstream samples;
    write_csv_row(samples, {"method", "index", "ok", "residual", "feasible", "cost", "objective", "dynamics_residual",
                            "path_length", "error"});
    for (const auto& r : report.rows) {
        for (const auto& s : r.per_sample) {
            write_csv_row(samples, {r.method, std::to_string(s.index), s.ok ? "1" : "0",
                                    s.ok ? format_double(s.residual) : "",
                                    s.ok && s.residual <= kDefaultFeasibilityTol ? "1" : "0",
                                    s.ok ? format_double(s.cost) : "", s.ok ? format_double(s.objective) : "",
                                    opt_text(s.dynamics_residual), opt_text(s.path_length), s.error});
        }
    }
    write_text_file(dir + "/bench_samples.csv", samples.str());

    std::ostringstream box;
    write_csv_row(box, {"method", "metric", "n", "min", "whisker_lo", "q1", "median", "q3", "whisker_hi", "max"});
    for (const auto& r : report.rows) {
        std::vector<std::pair<std::string, std::vector<double>>> metrics = {{"residual", {}}, {"cost", {}},
                                                                            {"objective", {}}};
        std::vector<double> dyn, path;
        for (const auto& s : r.per_sample) {
            if (!s.ok) continue;
            metrics[0].second.push_back(s.residual);
            metrics[1].second.push_back(s.cost);
            metrics[2].second.push_back(s.objective);
            if (s.dynamics_residual) dyn.push_back(*s.dynamics_residual);
            if (s.path_length) path.push_back(*s.path_length);
        }
        if (!dyn.empty()) metrics.emplace_back("dynamics_residual", dyn);
        if (!path.empty()) metrics.emplace_back("path_length", path);
        for (const auto& [name, values] : metrics) {
            const BoxStats b = box_stats(values);
            write_csv_row(box, {r.method, name, std::to_string(b.n), format_double(b.min), format_double(b.whisker_lo),
                                format_double(b.q1), format_double(b.median), format_double(b.q3),
                                format_double(b.whisker_hi), format_double(b.max)});
        }
    }
    write_text_file(dir + "/bench_box.csv", box.str());

    std::ostringstream timing;
    write_csv_row(timing, {"method", "mean_time_per_sample_s"});
    for (const auto& r : report.rows) write_csv_row(timing, {r.method, format_double(r.mean_time)});
    write_text_file(dir + "/bench_timing.csv", timing.str());
}

} // namespace hardflow
