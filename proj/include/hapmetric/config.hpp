#pragma once

// Flat TOML-style key/value files:
//
//     # comment
//     [section]          (accepted, ignored: keys are global)
//     key = value
//     name = "quoted value"
//
// Duplicate keys are an error, and callers list the keys they accept so
// typos are rejected instead of silently ignored.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include "hapmetric/error.hpp"

namespace hapmetric {

namespace detail {

inline std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

inline double parse_double(std::string_view text, const std::string& what) {
    const std::string t = trim(text);
    double value = 0.0;
    const auto* begin = t.data();
    const auto* end = t.data() + t.size();
    if (!t.empty() && *begin == '+') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (t.empty() || ec != std::errc() || ptr != end) {
        throw InvalidInput(what + ": cannot parse '" + t + "' as a number");
    }
    return value;
}

inline std::uint64_t parse_unsigned(std::string_view text, const std::string& what) {
    const std::string t = trim(text);
    std::uint64_t value = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
        throw InvalidInput(what + ": cannot parse '" + t + "' as a non-negative integer");
    }
    return value;
}

inline bool parse_bool(std::string_view text, const std::string& what) {
    const std::string t = trim(text);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw InvalidInput(what + ": cannot parse '" + t + "' as a boolean");
}

/// printf("%.*g") equivalent; 17 digits round-trips every double exactly.
inline std::string format_double(double value, int digits = 17) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, digits);
    return std::string(buf, res.ptr);
}

}  // namespace detail

class KeyValues {
public:
    KeyValues() = default;

    static KeyValues parse(std::istream& in, const std::string& source) {
        KeyValues kv;
        kv.source_ = source;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::string body = detail::trim(line);
            if (body.empty() || body.front() == '#') continue;
            if (body.front() == '[') {
                if (body.back() != ']') {
                    throw InvalidInput(source + ":" + std::to_string(line_no) + ": malformed section header");
                }
                continue;
            }
            const auto eq = body.find('=');
            if (eq == std::string::npos) {
                throw InvalidInput(source + ":" + std::to_string(line_no) + ": expected key = value");
            }
            std::string key = detail::trim(std::string_view(body).substr(0, eq));
            std::string value = detail::trim(std::string_view(body).substr(eq + 1));
            if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
                value = value.substr(1, value.size() - 2);
            } else if (const auto hash = value.find(" #"); hash != std::string::npos) {
                value = detail::trim(std::string_view(value).substr(0, hash));
            }
            if (key.empty()) {
                throw InvalidInput(source + ":" + std::to_string(line_no) + ": empty key");
            }
            if (!kv.values_.emplace(key, value).second) {
                throw InvalidInput(source + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
            }
        }
        return kv;
    }

    static KeyValues load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config file '" + path + "'");
        return parse(in, path);
    }

    /// Rejects any key not in `allowed`; keys starting with an allowed
    /// prefix ending in '.' (e.g. "class.") are accepted too.
    void require_known(const std::set<std::string>& allowed) const {
        for (const auto& [key, value] : values_) {
            if (allowed.count(key)) continue;
            const bool prefixed = std::any_of(allowed.begin(), allowed.end(), [&](const std::string& a) {
                return !a.empty() && a.back() == '.' && key.rfind(a, 0) == 0;
            });
            if (!prefixed) throw InvalidInput(source_ + ": unknown key '" + key + "'");
        }
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    const std::map<std::string, std::string>& entries() const { return values_; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }
    double get_double(const std::string& key, double fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : detail::parse_double(it->second, source_ + ": " + key);
    }
    std::uint64_t get_unsigned(const std::string& key, std::uint64_t fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : detail::parse_unsigned(it->second, source_ + ": " + key);
    }
    bool get_bool(const std::string& key, bool fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : detail::parse_bool(it->second, source_ + ": " + key);
    }

private:
    std::string source_;
    std::map<std::string, std::string> values_;
};

}  // namespace hapmetric
