#pragma once

// Dense-network numerical core: MLPs with exact reverse-mode gradients,
// bias-corrected Adam, and optional spectral normalization. Everything is a
// value type; batches are Mat with one sample per row.

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "wsc/errors.hpp"
#include "wsc/io.hpp"
#include "wsc/mat.hpp"
#include "wsc/rng.hpp"

namespace wsc::nn {

enum class Act { identity, relu, leaky_relu, tanh_, sigmoid };

inline const char* act_name(Act a) {
    switch (a) {
        case Act::identity: return "identity";
        case Act::relu: return "relu";
        case Act::leaky_relu: return "leaky_relu";
        case Act::tanh_: return "tanh";
        case Act::sigmoid: return "sigmoid";
    }
    return "identity";
}

inline Act act_from_name(const std::string& s) {
    if (s == "identity") return Act::identity;
    if (s == "relu") return Act::relu;
    if (s == "leaky_relu") return Act::leaky_relu;
    if (s == "tanh") return Act::tanh_;
    if (s == "sigmoid") return Act::sigmoid;
    throw ConfigError("unknown activation: " + s);
}

constexpr double kLeakySlope = 0.2;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double softplus(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

// numerically stable binary cross-entropy on a logit; target in {0,1}
inline double bce_with_logit(double logit, double target) {
    return std::max(logit, 0.0) - target * logit +
           std::log1p(std::exp(-std::fabs(logit)));
}

inline double act_apply(Act a, double x) {
    switch (a) {
        case Act::identity: return x;
        case Act::relu: return x > 0.0 ? x : 0.0;
        case Act::leaky_relu: return x > 0.0 ? x : kLeakySlope * x;
        case Act::tanh_: return std::tanh(x);
        case Act::sigmoid: return 1.0 / (1.0 + std::exp(-x));
    }
    return x;
}

// derivative expressed through the post-activation value
inline double act_deriv(Act a, double y) {
    switch (a) {
        case Act::identity: return 1.0;
        case Act::relu: return y > 0.0 ? 1.0 : 0.0;
        case Act::leaky_relu: return y > 0.0 ? 1.0 : kLeakySlope;
        case Act::tanh_: return 1.0 - y * y;
        case Act::sigmoid: return y * (1.0 - y);
    }
    return 1.0;
}

struct Layer {
    int in = 0;
    int out = 0;
    std::vector<double> w; // out x in, row-major
    std::vector<double> b; // out
    Act act = Act::identity;
    bool spectral_norm = false;
    std::vector<double> sn_u, sn_v; // persistent power-iteration vectors
};

struct DenseNet {
    std::vector<Layer> layers;

    int input_dim() const { return layers.empty() ? 0 : layers.front().in; }
    int output_dim() const { return layers.empty() ? 0 : layers.back().out; }

    size_t param_count() const {
        size_t n = 0;
        for (const auto& l : layers) n += l.w.size() + l.b.size();
        return n;
    }
};

enum class OutputInit { scaled, zero };

// sizes = {in, h1, ..., out}; hidden layers share one activation.
inline DenseNet make_mlp(const std::vector<int>& sizes, Act hidden, Act output,
                         Rng& rng, OutputInit out_init = OutputInit::scaled) {
    if (sizes.size() < 2) throw UsageError("make_mlp: need at least two sizes");
    DenseNet net;
    for (size_t i = 0; i + 1 < sizes.size(); ++i) {
        Layer l;
        l.in = sizes[i];
        l.out = sizes[i + 1];
        if (l.in <= 0 || l.out <= 0) throw UsageError("make_mlp: nonpositive layer size");
        l.act = (i + 2 == sizes.size()) ? output : hidden;
        l.w.resize(static_cast<size_t>(l.out) * l.in);
        l.b.assign(l.out, 0.0);
        const bool last = (i + 2 == sizes.size());
        if (last && out_init == OutputInit::zero) {
            // zero head: useful for Q-networks (untrained net ties all actions)
        } else {
            // He for rectifiers, Glorot otherwise
            const Act a = l.act;
            const double scale = (a == Act::relu || a == Act::leaky_relu)
                                     ? std::sqrt(2.0 / l.in)
                                     : std::sqrt(1.0 / l.in);
            for (auto& x : l.w) x = scale * rng.normal();
        }
        net.layers.push_back(std::move(l));
    }
    return net;
}

// Post-activation values per layer, kept for the backward pass.
struct Cache {
    Mat input;
    std::vector<Mat> post;
};

inline Mat forward(const DenseNet& net, const Mat& x, Cache* cache = nullptr) {
    if (net.layers.empty()) throw UsageError("forward: empty net");
    if (x.cols != net.input_dim())
        throw UsageError("forward: input width " + std::to_string(x.cols) +
                         " != net input " + std::to_string(net.input_dim()));
    if (cache) {
        cache->input = x;
        cache->post.clear();
        cache->post.reserve(net.layers.size());
    }
    Mat cur = x;
    for (const auto& l : net.layers) {
        Mat next(cur.rows, l.out);
        for (int r = 0; r < cur.rows; ++r) {
            const double* xin = cur.row(r);
            double* y = next.row(r);
            for (int o = 0; o < l.out; ++o) {
                const double* wr = l.w.data() + static_cast<size_t>(o) * l.in;
                double s = l.b[o];
                for (int i = 0; i < l.in; ++i) s += wr[i] * xin[i];
                y[o] = act_apply(l.act, s);
            }
        }
        if (cache) cache->post.push_back(next);
        cur = std::move(next);
    }
    return cur;
}

struct Grads {
    std::vector<std::vector<double>> w, b;

    void init_like(const DenseNet& net) {
        w.resize(net.layers.size());
        b.resize(net.layers.size());
        for (size_t i = 0; i < net.layers.size(); ++i) {
            w[i].assign(net.layers[i].w.size(), 0.0);
            b[i].assign(net.layers[i].b.size(), 0.0);
        }
    }

    void zero() {
        for (auto& g : w) std::fill(g.begin(), g.end(), 0.0);
        for (auto& g : b) std::fill(g.begin(), g.end(), 0.0);
    }

    void scale(double s) {
        for (auto& g : w)
            for (auto& x : g) x *= s;
        for (auto& g : b)
            for (auto& x : g) x *= s;
    }
};

// Accumulates parameter gradients into `grads` and returns d(loss)/d(input).
inline Mat backward(const DenseNet& net, const Cache& cache, const Mat& dy_out,
                    Grads& grads) {
    const size_t nl = net.layers.size();
    if (cache.post.size() != nl)
        throw UsageError("backward: cache does not match net");
    if (dy_out.rows != cache.input.rows || dy_out.cols != net.output_dim())
        throw UsageError("backward: gradient shape mismatch");
    if (grads.w.size() != nl) grads.init_like(net);

    Mat dy = dy_out;
    for (size_t li = nl; li-- > 0;) {
        const Layer& l = net.layers[li];
        const Mat& post = cache.post[li];
        const Mat& xin = (li == 0) ? cache.input : cache.post[li - 1];
        // dz = dy * act'(post)
        Mat dz(dy.rows, l.out);
        for (int r = 0; r < dy.rows; ++r) {
            const double* yr = post.row(r);
            const double* dyr = dy.row(r);
            double* dzr = dz.row(r);
            for (int o = 0; o < l.out; ++o)
                dzr[o] = dyr[o] * act_deriv(l.act, yr[o]);
        }
        auto& gw = grads.w[li];
        auto& gb = grads.b[li];
        for (int r = 0; r < dz.rows; ++r) {
            const double* xr = xin.row(r);
            const double* dzr = dz.row(r);
            for (int o = 0; o < l.out; ++o) {
                const double g = dzr[o];
                if (g == 0.0) continue;
                double* gwr = gw.data() + static_cast<size_t>(o) * l.in;
                for (int i = 0; i < l.in; ++i) gwr[i] += g * xr[i];
                gb[o] += g;
            }
        }
        if (li == 0) {
            Mat dx(dz.rows, l.in);
            for (int r = 0; r < dz.rows; ++r) {
                const double* dzr = dz.row(r);
                double* dxr = dx.row(r);
                for (int o = 0; o < l.out; ++o) {
                    const double g = dzr[o];
                    if (g == 0.0) continue;
                    const double* wr = l.w.data() + static_cast<size_t>(o) * l.in;
                    for (int i = 0; i < l.in; ++i) dxr[i] += g * wr[i];
                }
            }
            return dx;
        }
        Mat dprev(dz.rows, l.in);
        for (int r = 0; r < dz.rows; ++r) {
            const double* dzr = dz.row(r);
            double* dpr = dprev.row(r);
            for (int o = 0; o < l.out; ++o) {
                const double g = dzr[o];
                if (g == 0.0) continue;
                const double* wr = l.w.data() + static_cast<size_t>(o) * l.in;
                for (int i = 0; i < l.in; ++i) dpr[i] += g * wr[i];
            }
        }
        dy = std::move(dprev);
    }
    return Mat(); // unreachable
}

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    Grads m, v;

    AdamState() = default;
    AdamState(const DenseNet& net, double lr_, double b1, double b2)
        : lr(lr_), beta1(b1), beta2(b2) {
        m.init_like(net);
        v.init_like(net);
    }
};

namespace detail {
inline void adam_update(double& p, double g, double& m, double& v,
                        const AdamState& s, double bc1, double bc2) {
    m = s.beta1 * m + (1.0 - s.beta1) * g;
    v = s.beta2 * v + (1.0 - s.beta2) * g * g;
    const double mhat = m / bc1;
    const double vhat = v / bc2;
    p -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
}
} // namespace detail

inline void adam_step(AdamState& state, DenseNet& net, const Grads& grads) {
    if (state.m.w.size() != net.layers.size()) {
        state.m.init_like(net);
        state.v.init_like(net);
    }
    for (size_t li = 0; li < net.layers.size(); ++li)
        for (double g : grads.w[li])
            if (!std::isfinite(g)) throw TrainingError("adam_step: NaN gradient");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, state.step);
    const double bc2 = 1.0 - std::pow(state.beta2, state.step);
    for (size_t li = 0; li < net.layers.size(); ++li) {
        Layer& l = net.layers[li];
        for (size_t i = 0; i < l.w.size(); ++i)
            detail::adam_update(l.w[i], grads.w[li][i], state.m.w[li][i],
                                state.v.w[li][i], state, bc1, bc2);
        for (size_t i = 0; i < l.b.size(); ++i)
            detail::adam_update(l.b[i], grads.b[li][i], state.m.b[li][i],
                                state.v.b[li][i], state, bc1, bc2);
        if (!all_finite(l.w) || !all_finite(l.b))
            throw TrainingError("adam_step: parameters diverged (non-finite)");
    }
}

// Divides the weight by a power-iteration estimate of its largest singular
// value. Left/right vectors persist across calls; zero matrices are left alone.
inline void spectral_normalize(Layer& l, int iterations = 3) {
    double norm = 0.0;
    for (double x : l.w) norm += x * x;
    if (norm == 0.0) return;

    if (static_cast<int>(l.sn_u.size()) != l.out) {
        l.sn_u.assign(l.out, 1.0 / std::sqrt(static_cast<double>(l.out)));
        l.sn_v.assign(l.in, 0.0);
    }
    auto normalize = [](std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x * x;
        s = std::sqrt(s);
        if (s > 0.0)
            for (double& x : v) x /= s;
        return s;
    };
    for (int it = 0; it < iterations; ++it) {
        // v = W^T u
        std::fill(l.sn_v.begin(), l.sn_v.end(), 0.0);
        for (int o = 0; o < l.out; ++o) {
            const double* wr = l.w.data() + static_cast<size_t>(o) * l.in;
            const double u = l.sn_u[o];
            for (int i = 0; i < l.in; ++i) l.sn_v[i] += wr[i] * u;
        }
        normalize(l.sn_v);
        // u = W v
        for (int o = 0; o < l.out; ++o) {
            const double* wr = l.w.data() + static_cast<size_t>(o) * l.in;
            double s = 0.0;
            for (int i = 0; i < l.in; ++i) s += wr[i] * l.sn_v[i];
            l.sn_u[o] = s;
        }
        normalize(l.sn_u);
    }
    double sigma = 0.0;
    for (int o = 0; o < l.out; ++o) {
        const double* wr = l.w.data() + static_cast<size_t>(o) * l.in;
        double s = 0.0;
        for (int i = 0; i < l.in; ++i) s += wr[i] * l.sn_v[i];
        sigma += l.sn_u[o] * s;
    }
    sigma = std::abs(sigma);
    if (sigma > 1e-12)
        for (double& x : l.w) x /= sigma;
}

inline void spectral_normalize(DenseNet& net, int iterations = 3) {
    for (auto& l : net.layers)
        if (l.spectral_norm) spectral_normalize(l, iterations);
}

// Pointers over every parameter, in a stable order. Used by gradient checks.
inline std::vector<double*> param_ptrs(DenseNet& net) {
    std::vector<double*> ps;
    ps.reserve(net.param_count());
    for (auto& l : net.layers) {
        for (auto& x : l.w) ps.push_back(&x);
        for (auto& x : l.b) ps.push_back(&x);
    }
    return ps;
}

// Gradient values in the same order as param_ptrs.
inline std::vector<double> grad_values(const Grads& g) {
    std::vector<double> out;
    for (size_t li = 0; li < g.w.size(); ++li) {
        out.insert(out.end(), g.w[li].begin(), g.w[li].end());
        out.insert(out.end(), g.b[li].begin(), g.b[li].end());
    }
    return out;
}

// --- Serialization (hexfloat text; round-trips bit-exactly) ---

inline void save_net(std::ostream& out, const DenseNet& net) {
    out << "net " << net.layers.size() << '\n';
    for (const auto& l : net.layers) {
        out << "layer " << l.in << ' ' << l.out << ' ' << act_name(l.act) << ' '
            << (l.spectral_norm ? 1 : 0) << '\n';
        io::write_doubles(out, l.w);
        io::write_doubles(out, l.b);
        out << "sn " << l.sn_u.size() << '\n';
        if (!l.sn_u.empty()) {
            io::write_doubles(out, l.sn_u);
            io::write_doubles(out, l.sn_v);
        }
    }
}

inline DenseNet load_net(io::TokenReader& tr) {
    tr.expect_literal("net");
    const long nl = tr.expect_int("layer count");
    if (nl < 0 || nl > 1000) tr.fail("implausible layer count");
    DenseNet net;
    for (long i = 0; i < nl; ++i) {
        tr.expect_literal("layer");
        Layer l;
        l.in = static_cast<int>(tr.expect_int("input width"));
        l.out = static_cast<int>(tr.expect_int("output width"));
        if (l.in <= 0 || l.out <= 0) tr.fail("nonpositive layer size");
        try {
            l.act = act_from_name(tr.expect_token("activation"));
        } catch (const ConfigError& e) {
            tr.fail(e.what());
        }
        l.spectral_norm = tr.expect_int("spectral flag") != 0;
        io::read_doubles(tr, l.w, static_cast<size_t>(l.out) * l.in, "weight");
        io::read_doubles(tr, l.b, static_cast<size_t>(l.out), "bias");
        tr.expect_literal("sn");
        const long snn = tr.expect_int("sn vector size");
        if (snn != 0) {
            if (snn != l.out) tr.fail("sn vector size does not match layer");
            io::read_doubles(tr, l.sn_u, static_cast<size_t>(l.out), "sn_u");
            io::read_doubles(tr, l.sn_v, static_cast<size_t>(l.in), "sn_v");
        }
        net.layers.push_back(std::move(l));
    }
    return net;
}

inline DenseNet load_net(std::istream& in, const std::string& name = "<net>") {
    io::TokenReader tr(in, name);
    return load_net(tr);
}

} // namespace wsc::nn
