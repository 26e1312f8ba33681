#pragma once

#include "hardflow/samplers.hpp"
#include "hardflow/step_solver.hpp"
#include "hardflow/tasks.hpp"
#include "hardflow/velocity.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hardflow {

/// Settings read from an INI file with sections [task], [model], [sampler],
/// [solver], [train], [bench] and [output]. Unknown sections or keys are errors.
struct AppConfig {
    // [task]
    std::string task = "gauss2d";
    std::string variant;
    std::uint64_t seed = 0;
    /// Optional JSON files replacing the task's constraints / cost.
    std::string constraints_file;
    std::string cost_file;

    // [model]
    /// Empty selects the task's analytic field.
    std::string checkpoint;

    // [sampler]
    std::string method = "hardflow";
    /// Unset values fall back to the task defaults.
    std::optional<int> steps;
    std::optional<double> lambda_oc;
    std::optional<int> num;
    double activation = 0.5;
    bool warm_start = true;
    int relaxed_iterations = 2;
    double guidance_step = 0.1;
    double guidance_penalty = 100.0;
    int threads = 1;

    // [solver]
    SolverConfig solver;

    // [train]
    TrainConfig train;
    std::string train_out = "model.hfck";

    // [bench]
    std::vector<std::string> bench_methods;
    int bootstrap = 200;
    bool assertions = true;

    // [output]
    std::string out_dir = "out";

    void validate() const;
};

/// Parses an INI file; throws ConfigError on malformed input.
AppConfig load_config(const std::string& path);
AppConfig parse_config(const std::string& text);

/// HARDFLOW_OUT_DIR overrides the configured directory when set and non-empty.
std::string resolve_out_dir(const std::string& configured);

/// Task from (name, variant, seed) with constraint/cost overrides applied.
TaskSpec resolve_task(const AppConfig& cfg);
SamplerConfig resolve_sampler(const AppConfig& cfg, const TaskSpec& task);
int resolve_num(const AppConfig& cfg, const TaskSpec& task);

/// Canonical JSON of the effective configuration; its hash tags output records.
std::string config_fingerprint(const AppConfig& cfg, const TaskSpec& task);

std::vector<std::string> split_list(const std::string& s);

} // namespace hardflow
