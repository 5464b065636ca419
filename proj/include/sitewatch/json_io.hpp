#pragma once

#include <json.hpp>

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <type_traits>

#include "sitewatch/error.hpp"

namespace sitewatch {

// Insertion-ordered so documents serialize fields in declaration order.
using Json = nlohmann::ordered_json;

namespace detail {

template <class Err, class T>
T convert(const Json& j, const std::string& where) {
    if constexpr (std::is_same_v<T, bool>) {
        if (!j.is_boolean()) throw Err(where + ": expected boolean");
        return j.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
        if (!j.is_number_integer()) throw Err(where + ": expected integer");
        if constexpr (std::is_unsigned_v<T>) {
            if (j.is_number_unsigned()) return j.get<T>();
            if (j.get<long long>() < 0) throw Err(where + ": expected non-negative integer");
        }
        return j.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
        if (!j.is_number()) throw Err(where + ": expected number");
        return j.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
        if (!j.is_string()) throw Err(where + ": expected string");
        return j.get<std::string>();
    } else {
        try {
            return j.get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw Err(where + ": " + e.what());
        }
    }
}

}  // namespace detail

/// Reads one JSON object field by field and rejects keys nobody asked for.
/// Err is the exception raised on any mismatch, so each document family can
/// report its own error kind.
template <class Err>
class ObjectReader {
public:
    ObjectReader(const Json& j, std::string context) : json_(j), context_(std::move(context)) {
        if (!j.is_object()) throw Err(context_ + ": expected object");
    }

    bool has(std::string_view key) const { return json_.contains(key); }

    const Json& json(std::string_view key) {
        auto it = json_.find(key);
        if (it == json_.end()) throw Err(context_ + ": missing field '" + std::string(key) + "'");
        seen_.insert(std::string(key));
        return *it;
    }

    const Json* optional_json(std::string_view key) {
        auto it = json_.find(key);
        if (it == json_.end()) return nullptr;
        seen_.insert(std::string(key));
        if (it->is_null()) return nullptr;
        return &*it;
    }

    template <class T>
    T get(std::string_view key) {
        return detail::convert<Err, T>(json(key), where(key));
    }

    template <class T>
    std::optional<T> optional(std::string_view key) {
        const Json* j = optional_json(key);
        if (!j) return std::nullopt;
        return detail::convert<Err, T>(*j, where(key));
    }

    template <class T>
    T get_or(std::string_view key, T fallback) {
        return optional<T>(key).value_or(std::move(fallback));
    }

    double number_in(std::string_view key, double lo, double hi) {
        const double v = get<double>(key);
        check_range(key, v, lo, hi);
        return v;
    }

    void check_range(std::string_view key, double v, double lo, double hi) const {
        if (!(v >= lo && v <= hi))
            throw Err(where(key) + ": value " + Json(v).dump() + " outside [" + Json(lo).dump() +
                      ", " + Json(hi).dump() + "]");
    }

    /// Call after reading every known field.
    void finish() const {
        for (auto it = json_.begin(); it != json_.end(); ++it)
            if (!seen_.count(it.key())) throw Err(context_ + ": unknown field '" + it.key() + "'");
    }

    std::string where(std::string_view key) const { return context_ + "." + std::string(key); }
    const std::string& context() const { return context_; }

private:
    const Json& json_;
    std::string context_;
    std::set<std::string> seen_;
};

template <class Err>
const Json& expect_array(const Json& j, const std::string& where) {
    if (!j.is_array()) throw Err(where + ": expected array");
    return j;
}

}  // namespace sitewatch
