#pragma once

#include "hardflow/io.hpp"

#include <string>
#include <vector>

namespace hardflow {

/// Validates `instance` against a JSON Schema subset: type, properties,
/// required, additionalProperties (boolean or schema), items, enum, const,
/// minimum, maximum, exclusiveMinimum, minItems, maxItems, minLength.
/// Returns one message per violation, prefixed with the JSON pointer.
std::vector<std::string> validate_schema(const Json& schema, const Json& instance);

/// Schema file `<dir>/<name>.schema.json`.
Json load_schema(const std::string& dir, const std::string& name);

} // namespace hardflow
