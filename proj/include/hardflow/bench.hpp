#pragma once

#include "hardflow/io.hpp"
#include "hardflow/samplers.hpp"
#include "hardflow/tasks.hpp"
#include "hardflow/verification.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hardflow {

/// Methods whose outputs are feasible by construction when their last solve converges.
bool is_hard_feasibility_method(SamplerMethod m);

/// sum_i ||p_{i+1} - p_i|| over the planar-traj positions.
double planar_path_length(const Vec& x);

struct BenchSample {
    int index = 0;
    bool ok = false;
    std::string error;
    double residual = 0.0;
    double cost = 0.0;
    double objective = 0.0;
    std::optional<double> dynamics_residual;
    std::optional<double> path_length;
    double wall_time = 0.0;
};

struct BenchRow {
    std::string method;
    int samples = 0;
    int failures = 0;
    /// Fraction of all samples (failures included) with residual <= 1e-6.
    double safety_rate = 0.0;
    double mean_residual = 0.0;
    double mean_cost = 0.0;
    double mean_objective = 0.0;
    /// Energy distance of successful terminals to the feasible reference set.
    std::optional<EnergyInterval> energy;
    std::optional<double> max_dynamics_residual;
    std::optional<double> mean_path_length;
    double mean_time = 0.0;
    std::vector<BenchSample> per_sample;
};

struct BenchAssertion {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct BenchReport {
    std::string task;
    std::string variant;
    std::uint64_t seed = 0;
    std::string config_hash;
    int reference_size = 0;
    std::vector<BenchRow> rows;
    std::vector<BenchAssertion> assertions;

    bool all_passed() const;
};

struct BenchOptions {
    std::vector<SamplerMethod> methods;
    int num = 0;
    std::uint64_t seed = 0;
    SamplerConfig sampler;
    int bootstrap = 200;
    int threads = 1;
    /// Reference set size; 0 uses num.
    int reference = 0;
    bool assertions = true;
    std::string config_hash;
};

BenchReport run_bench(const TaskSpec& task, const VelocityField& field, const BenchOptions& opts);

/// Built-in checks: HardFlow safety 1.0 without failures; on gauss2d the lowest
/// energy distance among hard-feasibility methods; dynamics residual <= 1e-6 for HardFlow.
std::vector<BenchAssertion> bench_assertions(const BenchReport& report);

/// Timing-free report document.
Json bench_to_json(const BenchReport& report);

/// bench.json, bench.csv, bench_samples.csv, bench_box.csv (median, quartiles,
/// Tukey whiskers) and bench_timing.csv under `dir`.
void write_bench_outputs(const BenchReport& report, const std::string& dir);

struct BoxStats {
    int n = 0;
    double min = 0.0, whisker_lo = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, whisker_hi = 0.0, max = 0.0;
};

/// Linear-interpolation quartiles; whiskers are the extreme data within 1.5 IQR.
BoxStats box_stats(std::vector<double> values);

} // namespace hardflow
