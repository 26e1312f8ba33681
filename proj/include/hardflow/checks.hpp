#pragma once

#include "hardflow/io.hpp"
#include "hardflow/velocity.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace hardflow {

struct CheckResult {
    std::string name;
    bool passed = false;
    Json metrics = Json::object();
    std::string detail;
    /// Wall-clock seconds by label; kept out of the verdict JSON.
    std::vector<std::pair<std::string, double>> timing;
};

struct CheckOptions {
    std::uint64_t seed = 0;
    /// Field on gauss2d's R^2; null selects the analytic Gaussian field.
    FieldPtr field;
    std::string field_label = "analytic";
    /// Active steps with t_{i+1} in [t_min, t_max] are probed by the inversion-bound check.
    double t_min = 0.8;
    double t_max = 1.0;
    /// Divides sample counts (1 = full size); the runtime limits are only asserted at full size.
    int reduce = 1;
    int threads = 1;
    int bootstrap = 200;
};

std::vector<std::string> suite_names();
bool is_suite(const std::string& name);

/// Runs one suite ("all" runs every suite). Throws ConfigError for unknown names.
std::vector<CheckResult> run_suite(const std::string& suite, const CheckOptions& opts);

CheckResult check_identity(const CheckOptions& opts);
CheckResult check_feasibility(const CheckOptions& opts);
CheckResult check_nominal_reduction(const CheckOptions& opts);
CheckResult check_theorem1(const CheckOptions& opts);
CheckResult check_theorem3(const CheckOptions& opts);
CheckResult check_equivalence(const CheckOptions& opts);
CheckResult check_consistency(const CheckOptions& opts);
CheckResult check_shift(const CheckOptions& opts);
CheckResult check_solver(const CheckOptions& opts);

Json check_to_json(const CheckResult& r);
Json verify_report(const std::string& suite, const CheckOptions& opts, const std::vector<CheckResult>& results);

} // namespace hardflow
