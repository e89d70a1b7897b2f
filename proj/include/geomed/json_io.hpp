#pragma once

// JSON emission with every floating-point value printed at 17 significant
// digits, so output round-trips and is byte-stable across runs.

#include "hilbert.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <string>

namespace geomed {

using Json = nlohmann::ordered_json;

inline std::string format_double(double v) {
    if (!std::isfinite(v)) return "null";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace detail {

inline void write_json(std::ostream& os, const Json& j, int indent, int depth) {
    const auto pad = [&](int dd) {
        if (indent > 0) os << '\n' << std::string(static_cast<std::size_t>(indent * dd), ' ');
    };
    switch (j.type()) {
    case Json::value_t::object: {
        if (j.empty()) {
            os << "{}";
            return;
        }
        os << '{';
        bool first = true;
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (!first) os << ',';
            first = false;
            pad(depth + 1);
            os << Json(it.key()).dump() << (indent > 0 ? ": " : ":");
            write_json(os, it.value(), indent, depth + 1);
        }
        pad(depth);
        os << '}';
        return;
    }
    case Json::value_t::array: {
        if (j.empty()) {
            os << "[]";
            return;
        }
        // Arrays of scalars stay on one line.
        bool flat = true;
        for (const auto& e : j) flat = flat && !e.is_structured();
        os << '[';
        bool first = true;
        for (const auto& e : j) {
            if (!first) os << (flat ? ", " : ",");
            first = false;
            if (!flat) pad(depth + 1);
            write_json(os, e, indent, depth + 1);
        }
        if (!flat) pad(depth);
        os << ']';
        return;
    }
    case Json::value_t::number_float:
        os << format_double(j.get<double>());
        return;
    default:
        os << j.dump();
    }
}

} // namespace detail

inline std::string to_json_text(const Json& j, int indent = 2) {
    std::ostringstream os;
    detail::write_json(os, j, indent, 0);
    os << '\n';
    return os.str();
}

inline Json to_json(const HilbertPoint& p) {
    Json a = Json::array();
    for (double v : p) a.push_back(v);
    return a;
}

} // namespace geomed
