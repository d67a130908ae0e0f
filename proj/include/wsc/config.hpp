#pragma once

// Plain-text configuration: one `key = value` per line, '#' starts a
// comment, dotted keys namespace the modules (agent.gamma, data.m, ...).
// Sources layer in order — preset file, then user config, then --set
// overrides — with later values winning per key.

#include <cctype>
#include <cstdlib>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "wsc/errors.hpp"
#include "wsc/io.hpp"

namespace wsc::cfg {

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline bool valid_key(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' &&
            c != '.' && c != '-')
            return false;
    return true;
}

} // namespace detail

struct Config {
    std::map<std::string, std::string> kv;

    bool has(const std::string& key) const { return kv.count(key) > 0; }

    void set(const std::string& key, const std::string& value) {
        if (!detail::valid_key(key))
            throw ConfigError("bad config key: '" + key + "'");
        kv[key] = value;
    }

    const std::string& str(const std::string& key) const {
        auto it = kv.find(key);
        if (it == kv.end())
            throw ConfigError("missing config key: " + key);
        return it->second;
    }
    std::string str(const std::string& key, const std::string& def) const {
        auto it = kv.find(key);
        return it == kv.end() ? def : it->second;
    }

    long geti(const std::string& key) const { return to_int(key, str(key)); }
    long geti(const std::string& key, long def) const {
        auto it = kv.find(key);
        return it == kv.end() ? def : to_int(key, it->second);
    }

    double getd(const std::string& key) const {
        return to_double(key, str(key));
    }
    double getd(const std::string& key, double def) const {
        auto it = kv.find(key);
        return it == kv.end() ? def : to_double(key, it->second);
    }

    bool getb(const std::string& key, bool def) const {
        auto it = kv.find(key);
        if (it == kv.end()) return def;
        const std::string& v = it->second;
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw ConfigError("config key " + key + ": expected true/false, got '" +
                          v + "'");
    }

    // comma-separated integer list (e.g. hidden layer sizes)
    std::vector<int> ints(const std::string& key,
                          const std::vector<int>& def) const {
        auto it = kv.find(key);
        if (it == kv.end()) return def;
        std::vector<int> out;
        std::stringstream ss(it->second);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            tok = detail::trim(tok);
            if (tok.empty()) continue;
            out.push_back(static_cast<int>(to_int(key, tok)));
        }
        return out;
    }

    // sorted `key = value` lines; parses back to an identical Config
    std::string dump() const {
        std::ostringstream out;
        for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
        return out.str();
    }

private:
    static long to_int(const std::string& key, const std::string& v) {
        char* end = nullptr;
        const long x = std::strtol(v.c_str(), &end, 10);
        if (end == v.c_str() || *end != '\0')
            throw ConfigError("config key " + key +
                              ": expected an integer, got '" + v + "'");
        return x;
    }
    static double to_double(const std::string& key, const std::string& v) {
        char* end = nullptr;
        const double x = std::strtod(v.c_str(), &end);
        if (end == v.c_str() || *end != '\0')
            throw ConfigError("config key " + key +
                              ": expected a number, got '" + v + "'");
        return x;
    }
};

inline void parse_into(Config& c, std::istream& in, const std::string& name) {
    std::string line;
    int ln = 0;
    while (std::getline(in, line)) {
        ++ln;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(name + ":" + std::to_string(ln) +
                              ": expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (!detail::valid_key(key))
            throw ConfigError(name + ":" + std::to_string(ln) +
                              ": bad key '" + key + "'");
        c.kv[key] = value;
    }
}

inline void merge_file(Config& c, const std::string& path) {
    std::istringstream in(io::read_file(path));
    parse_into(c, in, path);
}

inline Config load_config(const std::string& path) {
    Config c;
    merge_file(c, path);
    return c;
}

// --set key=value override from the command line
inline void apply_override(Config& c, const std::string& kv_text) {
    const size_t eq = kv_text.find('=');
    if (eq == std::string::npos)
        throw ConfigError("--set expects key=value, got '" + kv_text + "'");
    c.set(cfg::detail::trim(kv_text.substr(0, eq)),
          cfg::detail::trim(kv_text.substr(eq + 1)));
}

} // namespace wsc::cfg
