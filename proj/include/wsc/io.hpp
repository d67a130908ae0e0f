#pragma once

// Text IO building blocks shared by dataset files, checkpoints and manifests.
// Doubles are written as C hexfloats so that save/load round-trips are
// bit-exact on any platform.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "wsc/errors.hpp"

namespace wsc::io {

inline std::string dtoa_hex(double x) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%a", x);
    return buf;
}

inline double atod(const std::string& tok) {
    const char* s = tok.c_str();
    char* end = nullptr;
    double v = std::strtod(s, &end);
    if (end == s || *end != '\0')
        throw ConfigError("bad number: '" + tok + "'");
    return v;
}

// Whitespace-delimited token reader; istream>> does not accept hexfloats.
class TokenReader {
  public:
    explicit TokenReader(std::istream& in, std::string name = "<stream>")
        : in_(in), name_(std::move(name)) {}

    bool next(std::string& tok) {
        tok.clear();
        int c;
        while ((c = in_.get()) != EOF) {
            if (c == '\n') ++line_;
            if (!std::isspace(c)) break;
        }
        if (c == EOF) return false;
        do {
            tok.push_back(static_cast<char>(c));
            c = in_.get();
        } while (c != EOF && !std::isspace(c));
        if (c == '\n') ++line_;
        return true;
    }

    std::string expect_token(const char* what) {
        std::string tok;
        if (!next(tok)) fail(std::string("expected ") + what + ", got end of input");
        return tok;
    }

    void expect_literal(const std::string& lit) {
        std::string tok = expect_token(lit.c_str());
        if (tok != lit) fail("expected '" + lit + "', got '" + tok + "'");
    }

    double expect_double(const char* what = "number") {
        const std::string tok = expect_token(what);
        try {
            return atod(tok);
        } catch (const ConfigError&) {
            fail(std::string("expected ") + what + ", got '" + tok + "'");
        }
        return 0.0; // unreachable
    }

    long expect_int(const char* what = "integer") {
        const std::string tok = expect_token(what);
        char* end = nullptr;
        long v = std::strtol(tok.c_str(), &end, 10);
        if (end == tok.c_str() || *end != '\0')
            fail(std::string("expected ") + what + ", got '" + tok + "'");
        return v;
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(name_, line_, msg);
    }

    int line() const { return line_; }

  private:
    std::istream& in_;
    std::string name_;
    int line_ = 1;
};

inline void write_doubles(std::ostream& out, const std::vector<double>& xs,
                          int per_line = 8) {
    for (size_t i = 0; i < xs.size(); ++i) {
        out << dtoa_hex(xs[i]);
        out << (((i + 1) % per_line == 0 || i + 1 == xs.size()) ? '\n' : ' ');
    }
}

inline void read_doubles(TokenReader& tr, std::vector<double>& xs, size_t n,
                         const char* what = "value") {
    xs.resize(n);
    for (size_t i = 0; i < n; ++i) xs[i] = tr.expect_double(what);
}

// FNV-1a, used for input fingerprints in run manifests.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write file: " + path);
    out << content;
    if (!out) throw ConfigError("write failed: " + path);
}

} // namespace wsc::io
