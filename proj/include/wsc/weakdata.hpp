#pragma once

// Weakly-labeled rank-pairing datasets: generation from factor environments,
// label corruption, factor masking, and text serialization. Ground-truth
// factors ride along for evaluation only; trainers get a stripped view.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "wsc/errors.hpp"
#include "wsc/factorworld.hpp"
#include "wsc/io.hpp"
#include "wsc/mat.hpp"
#include "wsc/rng.hpp"

namespace wsc::data {

constexpr int8_t kUnlabeled = -1;

struct NoiseSpec {
    double flip_probability = 0.0;
    std::uint64_t seed = 0;
};

struct LabeledPair {
    int i = 0; // indices into the base observations, i < j
    int j = 0;
    std::vector<int8_t> y; // per factor: 0, 1, or kUnlabeled
};

struct WeakDataset {
    env::EnvConfig env;
    std::uint64_t seed = 0;
    double noise = 0.0;
    std::vector<std::uint8_t> mask; // which factors receive labels
    Mat factors; // M x K, evaluation-only ground truth
    Mat obs;     // M x D
    std::vector<LabeledPair> pairs;

    int m() const { return obs.rows; }
    int n_pairs() const { return static_cast<int>(pairs.size()); }
};

// What trainers are allowed to see: observations and labels, no factors.
struct TrainView {
    const Mat& obs;
    const std::vector<LabeledPair>& pairs;
    const std::vector<std::uint8_t>& mask;
};

inline TrainView training_view(const WeakDataset& d) {
    return TrainView{d.obs, d.pairs, d.mask};
}

inline std::vector<int8_t> rank_label(const std::vector<double>& f1,
                                      const std::vector<double>& f2,
                                      const std::vector<std::uint8_t>& mask) {
    if (f1.size() != f2.size() || f1.size() != mask.size())
        throw UsageError("rank_label: length mismatch");
    std::vector<int8_t> y(f1.size());
    for (size_t k = 0; k < f1.size(); ++k)
        y[k] = mask[k] ? (f1[k] < f2[k] ? 1 : 0) : kUnlabeled;
    return y;
}

inline WeakDataset generate_dataset(const env::EnvConfig& cfg, int m,
                                    long n_pairs,
                                    const std::vector<std::uint8_t>& mask,
                                    std::uint64_t seed) {
    const int k = cfg.factor_count();
    if (static_cast<int>(mask.size()) != k)
        throw UsageError("generate_dataset: mask length != factor count");
    if (m < 2) throw UsageError("generate_dataset: need M >= 2");
    const long max_pairs = static_cast<long>(m) * (m - 1) / 2;
    if (n_pairs < 1 || n_pairs > max_pairs)
        throw UsageError("generate_dataset: N_pairs outside [1, M(M-1)/2]");

    WeakDataset d;
    d.env = cfg;
    d.seed = seed;
    d.mask = mask;
    d.factors = Mat(m, k);
    d.obs = Mat(m, cfg.mixer.out_dim);

    Rng rng(derive_seed(seed, 0x64617461ull)); // "data"
    for (int r = 0; r < m; ++r) {
        std::vector<double> f = env::sample_feasible_factors(cfg, rng);
        std::vector<double> s = env::observe(f, cfg);
        std::copy(f.begin(), f.end(), d.factors.row(r));
        std::copy(s.begin(), s.end(), d.obs.row(r));
    }

    // distinct unordered pairs via a partial shuffle of all pair codes
    std::vector<std::uint32_t> codes;
    codes.reserve(max_pairs);
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
            codes.push_back(static_cast<std::uint32_t>(i) * m + j);
    for (long t = 0; t < n_pairs; ++t) {
        const size_t pick = t + rng.uniform_int(codes.size() - t);
        std::swap(codes[t], codes[pick]);
        const int i = static_cast<int>(codes[t] / m);
        const int j = static_cast<int>(codes[t] % m);
        LabeledPair p;
        p.i = i;
        p.j = j;
        p.y = rank_label(d.factors.row_vec(i), d.factors.row_vec(j), mask);
        d.pairs.push_back(std::move(p));
    }
    return d;
}

inline WeakDataset corrupt_labels(const WeakDataset& d, const NoiseSpec& noise) {
    if (noise.flip_probability < 0.0 || noise.flip_probability > 1.0)
        throw UsageError("corrupt_labels: flip probability outside [0,1]");
    WeakDataset out = d;
    out.noise = noise.flip_probability;
    Rng rng(derive_seed(noise.seed, 0x6e6f697365ull)); // "noise"
    for (auto& p : out.pairs)
        for (auto& y : p.y) {
            if (y == kUnlabeled) continue;
            if (rng.uniform() < noise.flip_probability) y = static_cast<int8_t>(1 - y);
        }
    return out;
}

// --- Serialization ---

inline void save_dataset(std::ostream& out, const WeakDataset& d) {
    out << "weakdata v1\n";
    out << "env " << d.env.name << ' ' << d.env.mixer.seed << ' '
        << d.env.mixer.out_dim << ' ' << io::dtoa_hex(d.env.mixer.scale) << '\n';
    out << "seed " << d.seed << '\n';
    out << "noise " << io::dtoa_hex(d.noise) << '\n';
    out << "mask ";
    for (auto b : d.mask) out << (b ? '1' : '0');
    out << '\n';
    out << "m " << d.m() << '\n';
    out << "n " << d.n_pairs() << '\n';
    for (int r = 0; r < d.m(); ++r) {
        out << "base";
        for (int c = 0; c < d.factors.cols; ++c)
            out << ' ' << io::dtoa_hex(d.factors.at(r, c));
        for (int c = 0; c < d.obs.cols; ++c)
            out << ' ' << io::dtoa_hex(d.obs.at(r, c));
        out << '\n';
    }
    for (const auto& p : d.pairs) {
        out << "pair " << p.i << ' ' << p.j << ' ';
        for (auto y : p.y)
            out << (y == kUnlabeled ? 'u' : (y ? '1' : '0'));
        out << '\n';
    }
    out << "end\n";
}

inline void save_dataset(const std::string& path, const WeakDataset& d) {
    std::ostringstream ss;
    save_dataset(ss, d);
    io::write_file(path, ss.str());
}

inline WeakDataset load_dataset(std::istream& in,
                                const std::string& name = "<dataset>") {
    io::TokenReader tr(in, name);
    tr.expect_literal("weakdata");
    tr.expect_literal("v1");

    WeakDataset d;
    tr.expect_literal("env");
    const std::string env_name = tr.expect_token("environment name");
    const std::uint64_t mixer_seed =
        static_cast<std::uint64_t>(tr.expect_int("mixer seed"));
    const int out_dim = static_cast<int>(tr.expect_int("mixer out_dim"));
    const double scale = tr.expect_double("mixer scale");
    try {
        d.env = env::make_env(env_name, mixer_seed, out_dim, scale);
    } catch (const ConfigError& e) {
        tr.fail(e.what());
    }
    const int k = d.env.factor_count();

    tr.expect_literal("seed");
    d.seed = static_cast<std::uint64_t>(tr.expect_int("seed"));
    tr.expect_literal("noise");
    d.noise = tr.expect_double("noise");
    tr.expect_literal("mask");
    const std::string mask_str = tr.expect_token("mask bits");
    if (static_cast<int>(mask_str.size()) != k)
        tr.fail("mask length does not match factor count");
    for (char c : mask_str) {
        if (c != '0' && c != '1') tr.fail("mask must be over {0,1}");
        d.mask.push_back(c == '1');
    }
    tr.expect_literal("m");
    const long m = tr.expect_int("M");
    if (m < 2) tr.fail("M must be at least 2");
    tr.expect_literal("n");
    const long n = tr.expect_int("N");
    if (n < 0) tr.fail("negative pair count");

    d.factors = Mat(static_cast<int>(m), k);
    d.obs = Mat(static_cast<int>(m), out_dim);
    for (long r = 0; r < m; ++r) {
        tr.expect_literal("base");
        for (int c = 0; c < k; ++c)
            d.factors.at(static_cast<int>(r), c) = tr.expect_double("factor");
        for (int c = 0; c < out_dim; ++c)
            d.obs.at(static_cast<int>(r), c) = tr.expect_double("observation");
    }
    for (long t = 0; t < n; ++t) {
        tr.expect_literal("pair");
        LabeledPair p;
        p.i = static_cast<int>(tr.expect_int("pair index i"));
        p.j = static_cast<int>(tr.expect_int("pair index j"));
        if (p.i < 0 || p.j < 0 || p.i >= m || p.j >= m || p.i >= p.j)
            tr.fail("pair indices out of order or out of range");
        const std::string ys = tr.expect_token("label string");
        if (static_cast<int>(ys.size()) != k)
            tr.fail("label string length does not match factor count");
        for (char c : ys) {
            if (c == 'u') p.y.push_back(kUnlabeled);
            else if (c == '0') p.y.push_back(0);
            else if (c == '1') p.y.push_back(1);
            else tr.fail("labels must be over {0,1,u}");
        }
        d.pairs.push_back(std::move(p));
    }
    tr.expect_literal("end");

    // reject duplicate unordered pairs
    std::vector<long> seen;
    seen.reserve(d.pairs.size());
    for (const auto& p : d.pairs) seen.push_back(static_cast<long>(p.i) * m + p.j);
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
        tr.fail("duplicate pair indices");
    return d;
}

inline WeakDataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open dataset: " + path);
    return load_dataset(in, path);
}

inline std::vector<std::uint8_t> full_mask(const env::EnvConfig& cfg) {
    return std::vector<std::uint8_t>(cfg.factor_count(), 1);
}

} // namespace wsc::data
