#pragma once

#include "hardflow/common.hpp"
#include "hardflow/constraints.hpp"
#include "hardflow/samplers.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace hardflow {

using Json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

Json vec_to_json(const Vec& v);
Vec vec_from_json(const Json& j);
Json mat_to_json(const Mat& m);
Mat mat_from_json(const Json& j);

/// {"dim": d, "blocks": [{"kind": ..., ...}, ...]}. Infinite box bounds are null.
/// Custom blocks are rejected with ConfigError.
Json constraints_to_json(const ConstraintSet& cs);
ConstraintSet constraints_from_json(const Json& j);

Json cost_to_json(const CostFn& cost);
CostFn cost_from_json(const Json& j);

/// Shortest round-trip text for a double; "nan", "inf", "-inf" for non-finite values.
std::string format_double(double x);

/// RFC-4180 field quoting.
std::string csv_field(const std::string& s);
void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);

/// One JSONL record per run: config hash, seed, terminal point, residual, cost, objective.
Json run_record(const SampleRun& run, const std::string& config_hash, std::uint64_t seed, int index);

/// Writes `text` to `path`, creating parent directories. Throws Error on failure.
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

/// 16 hex digits of FNV-1a over the canonical dump of `j`.
std::string json_hash(const Json& j);
/// Same digest over a file's bytes.
std::string file_hash(const std::string& path);

} // namespace hardflow
