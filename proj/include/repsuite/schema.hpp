#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "core.hpp"

namespace repsuite {

/// Validator for the JSON Schema keywords the published report and catalog
/// schemas use: type, enum, const, required, properties,
/// additionalProperties (boolean or schema), minProperties, items, minItems,
/// maxItems, minimum, maximum, oneOf, anyOf and local "#/definitions/..."
/// references. Unknown
/// keywords are ignored.
class SchemaValidator {
public:
    explicit SchemaValidator(json schema) : root_(std::move(schema)) {}

    std::vector<std::string> validate(const json &instance) const {
        std::vector<std::string> errors;
        check(root_, instance, "$", errors);
        return errors;
    }

private:
    const json &resolve(const json &schema) const {
        if (schema.is_object() && schema.contains("$ref")) {
            const auto ref = schema.at("$ref").get<std::string>();
            if (ref.rfind("#/", 0) != 0) {
                throw Error(ErrorKind::InvalidArgument, "only local schema references are supported: " + ref);
            }
            return resolve(root_.at(json::json_pointer(ref.substr(1))));
        }
        return schema;
    }

    static bool type_matches(const std::string &type, const json &v) {
        if (type == "object") {
            return v.is_object();
        }
        if (type == "array") {
            return v.is_array();
        }
        if (type == "string") {
            return v.is_string();
        }
        if (type == "integer") {
            return v.is_number_integer() || (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>());
        }
        if (type == "number") {
            return v.is_number();
        }
        if (type == "boolean") {
            return v.is_boolean();
        }
        if (type == "null") {
            return v.is_null();
        }
        return false;
    }

    void check(const json &raw_schema, const json &v, const std::string &path, std::vector<std::string> &errors) const {
        const json &schema = resolve(raw_schema);
        if (schema.is_boolean()) {
            if (!schema.get<bool>()) {
                errors.push_back(path + ": not allowed");
            }
            return;
        }
        for (const char *key : {"oneOf", "anyOf"}) {
            if (!schema.contains(key)) {
                continue;
            }
            std::size_t matches = 0;
            for (const auto &alt : schema.at(key)) {
                std::vector<std::string> sub;
                check(alt, v, path, sub);
                matches += sub.empty() ? 1 : 0;
            }
            const bool one = std::string_view(key) == "oneOf";
            if (one ? matches != 1 : matches == 0) {
                errors.push_back(path + ": " + std::to_string(matches) + " alternatives of " + key + " match");
            }
        }
        if (schema.contains("type")) {
            const auto &t = schema.at("type");
            bool ok = false;
            if (t.is_string()) {
                ok = type_matches(t.get<std::string>(), v);
            } else {
                for (const auto &alt : t) {
                    ok = ok || type_matches(alt.get<std::string>(), v);
                }
            }
            if (!ok) {
                errors.push_back(path + ": expected type " + t.dump() + ", got " + v.type_name());
                return;
            }
        }
        if (schema.contains("enum")) {
            bool ok = false;
            for (const auto &e : schema.at("enum")) {
                ok = ok || e == v;
            }
            if (!ok) {
                errors.push_back(path + ": value " + v.dump() + " not in enum");
            }
        }
        if (schema.contains("const") && schema.at("const") != v) {
            errors.push_back(path + ": expected " + schema.at("const").dump());
        }
        if (v.is_number()) {
            const double x = v.get<double>();
            if (schema.contains("minimum") && x < schema.at("minimum").get<double>()) {
                errors.push_back(path + ": " + v.dump() + " below minimum");
            }
            if (schema.contains("maximum") && x > schema.at("maximum").get<double>()) {
                errors.push_back(path + ": " + v.dump() + " above maximum");
            }
        }
        if (v.is_object()) {
            if (schema.contains("required")) {
                for (const auto &key : schema.at("required")) {
                    if (!v.contains(key.get<std::string>())) {
                        errors.push_back(path + ": missing required property '" + key.get<std::string>() + "'");
                    }
                }
            }
            if (schema.contains("minProperties") && v.size() < schema.at("minProperties").get<std::size_t>()) {
                errors.push_back(path + ": fewer than minProperties properties");
            }
            const json *props = schema.contains("properties") ? &schema.at("properties") : nullptr;
            for (const auto &[key, value] : v.items()) {
                if (props != nullptr && props->contains(key)) {
                    check(props->at(key), value, path + "." + key, errors);
                } else if (schema.contains("additionalProperties")) {
                    const auto &extra = schema.at("additionalProperties");
                    if (extra.is_boolean() && !extra.get<bool>()) {
                        errors.push_back(path + ": unexpected property '" + key + "'");
                    } else if (extra.is_object()) {
                        check(extra, value, path + "." + key, errors);
                    }
                }
            }
        }
        if (v.is_array()) {
            if (schema.contains("minItems") && v.size() < schema.at("minItems").get<std::size_t>()) {
                errors.push_back(path + ": fewer than minItems elements");
            }
            if (schema.contains("maxItems") && v.size() > schema.at("maxItems").get<std::size_t>()) {
                errors.push_back(path + ": more than maxItems elements");
            }
            if (schema.contains("items")) {
                for (std::size_t i = 0; i < v.size(); ++i) {
                    check(schema.at("items"), v[i], path + "[" + std::to_string(i) + "]", errors);
                }
            }
        }
    }

    json root_;
};

} // namespace repsuite
