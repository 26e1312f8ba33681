#include "hardflow/schema.hpp"

namespace hardflow {

namespace {

bool has_type(const Json& v, const std::string& type)
{
    if (type == "object") return v.is_object();
    if (type == "array") return v.is_array();
    if (type == "string") return v.is_string();
    if (type == "boolean") return v.is_boolean();
    if (type == "null") return v.is_null();
    if (type == "number") return v.is_number();
    if (type == "integer") return v.is_number_integer() || (v.is_number_float() && v.get<double>() == static_cast<double>(static_cast<long long>(v.get<double>())));
    throw ConfigError("schema uses unknown type '" + type + "'");
}

void check(const Json& schema, const Json& v, const std::string& path, std::vector<std::string>& errors)
{
    if (schema.is_boolean()) {
        if (!schema.get<bool>()) errors.push_back(path + ": no value allowed here");
        return;
    }
    if (!schema.is_object()) throw ConfigError("schema node at '" + path + "' is not an object");

    if (schema.contains("type")) {
        const Json& t = schema["type"];
        bool ok = false;
        if (t.is_string()) ok = has_type(v, t.get<std::string>());
        else for (const auto& e : t) ok = ok || has_type(v, e.get<std::string>());
        if (!ok) {
            errors.push_back(path + ": expected type " + t.dump() + ", got " + v.type_name());
            return;
        }
    }
    if (schema.contains("enum")) {
        bool found = false;
        for (const auto& e : schema["enum"]) found = found || e == v;
        if (!found) errors.push_back(path + ": value " + v.dump() + " not in " + schema["enum"].dump());
    }
    if (schema.contains("const") && schema["const"] != v) {
        errors.push_back(path + ": expected constant " + schema["const"].dump());
    }
    if (v.is_number()) {
        const double x = v.get<double>();
        if (schema.contains("minimum") && x < schema["minimum"].get<double>()) {
            errors.push_back(path + ": " + v.dump() + " below minimum " + schema["minimum"].dump());
        }
        if (schema.contains("maximum") && x > schema["maximum"].get<double>()) {
            errors.push_back(path + ": " + v.dump() + " above maximum " + schema["maximum"].dump());
        }
        if (schema.contains("exclusiveMinimum") && !(x > schema["exclusiveMinimum"].get<double>())) {
            errors.push_back(path + ": " + v.dump() + " not above " + schema["exclusiveMinimum"].dump());
        }
    }
    if (v.is_string() && schema.contains("minLength") &&
        v.get<std::string>().size() < schema["minLength"].get<std::size_t>()) {
        errors.push_back(path + ": string shorter than " + schema["minLength"].dump());
    }
    if (v.is_array()) {
        if (schema.contains("minItems") && v.size() < schema["minItems"].get<std::size_t>()) {
            errors.push_back(path + ": fewer than " + schema["minItems"].dump() + " items");
        }
        if (schema.contains("maxItems") && v.size() > schema["maxItems"].get<std::size_t>()) {
            errors.push_back(path + ": more than " + schema["maxItems"].dump() + " items");
        }
        if (schema.contains("items")) {
            for (std::size_t i = 0; i < v.size(); ++i) check(schema["items"], v[i], path + "/" + std::to_string(i), errors);
        }
    }
    if (v.is_object()) {
        if (schema.contains("required")) {
            for (const auto& key : schema["required"]) {
                if (!v.contains(key.get<std::string>())) errors.push_back(path + ": missing required key " + key.dump());
            }
        }
        const Json props = schema.value("properties", Json::object());
        for (const auto& [key, child] : v.items()) {
            const std::string sub = path + "/" + key;
            if (props.contains(key)) {
                check(props[key], child, sub, errors);
            } else if (schema.contains("additionalProperties")) {
                check(schema["additionalProperties"], child, sub, errors);
            }
        }
    }
}

} // namespace

std::vector<std::string> validate_schema(const Json& schema, const Json& instance)
{
    std::vector<std::string> errors;
    check(schema, instance, "", errors);
    return errors;
}

Json load_schema(const std::string& dir, const std::string& name)
{
    return Json::parse(read_text_file(dir + "/" + name + ".schema.json"));
}

} // namespace hardflow
