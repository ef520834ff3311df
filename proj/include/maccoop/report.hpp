#pragma once

#include <cmath>
#include <cstdio>
#include <string>

#include <json.hpp>

namespace maccoop {

inline constexpr const char* kToolName = "maccoop";
inline constexpr const char* kToolVersion = "0.1.0";

/// Formats a double with 12 significant digits; non-finite values become null.
inline std::string format_number(double v) {
    if (!std::isfinite(v)) return "null";
    if (v == 0.0) return "0";  // folds -0
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

namespace detail {

inline void dump_canonical(const nlohmann::json& j, std::string& out, int indent, int depth) {
    const auto newline = [&](int d) {
        if (indent < 0) return;
        out += '\n';
        out.append(static_cast<std::size_t>(indent * d), ' ');
    };
    switch (j.type()) {
        case nlohmann::json::value_t::object: {
            if (j.empty()) {
                out += "{}";
                return;
            }
            out += '{';
            bool first = true;
            // nlohmann's default object type is an ordered std::map, so keys come out sorted.
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (!first) out += ',';
                first = false;
                newline(depth + 1);
                out += nlohmann::json(it.key()).dump();
                out += indent < 0 ? ":" : ": ";
                dump_canonical(it.value(), out, indent, depth + 1);
            }
            newline(depth);
            out += '}';
            return;
        }
        case nlohmann::json::value_t::array: {
            if (j.empty()) {
                out += "[]";
                return;
            }
            // Arrays of scalars stay on one line to keep matrices readable.
            bool scalars = true;
            for (const auto& e : j) scalars = scalars && !e.is_structured();
            out += '[';
            bool first = true;
            for (const auto& e : j) {
                if (!first) out += scalars && indent >= 0 ? ", " : ",";
                first = false;
                if (!scalars) newline(depth + 1);
                dump_canonical(e, out, indent, depth + 1);
            }
            if (!scalars) newline(depth);
            out += ']';
            return;
        }
        case nlohmann::json::value_t::number_float:
            out += format_number(j.get<double>());
            return;
        default:
            out += j.dump();
    }
}

}  // namespace detail

/// Canonical JSON: sorted keys, 12 significant digits for floats.
inline std::string canonical_json(const nlohmann::json& j, int indent = 2) {
    std::string out;
    detail::dump_canonical(j, out, indent, 0);
    out += '\n';
    return out;
}

}  // namespace maccoop
