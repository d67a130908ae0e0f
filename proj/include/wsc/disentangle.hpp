#pragma once

// Rank-pairing adversarial representation learning: encoder e, generator G
// and a pair discriminator D trained on weakly-labeled observation pairs.
// After training, the encoder's mean head is the representation; goal-space
// bounds come from the elementwise extrema of encoded dataset observations.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wsc/errors.hpp"
#include "wsc/io.hpp"
#include "wsc/mat.hpp"
#include "wsc/net.hpp"
#include "wsc/rng.hpp"
#include "wsc/weakdata.hpp"

namespace wsc::dis {

struct DisentangledModel {
    int k = 0;       // latent dimension = factor count
    int obs_dim = 0;
    nn::DenseNet encoder;   // obs -> 2K (mu, raw sigma)
    nn::DenseNet generator; // K -> obs, tanh output
    nn::DenseNet disc_body; // obs -> hidden
    nn::DenseNet head_u;    // hidden -> 1, unconditional realness
    nn::DenseNet head_c;    // hidden -> K, rank consistency
};

struct DisentangleHParams {
    int iterations = 20000;
    int batch = 64;
    double lr = 1e-3;
    double beta1 = 0.5;
    double beta2 = 0.999;
    std::vector<int> enc_hidden = {128, 128};
    std::vector<int> gen_hidden = {128, 128};
    std::vector<int> disc_hidden = {128, 128};
    bool spectral_norm = false;
    int log_interval = 100;
};

struct GoalSpaceBounds {
    std::vector<int> indices;
    std::vector<double> z_min, z_max;
};

constexpr double kSigmaFloor = 1e-4;

inline DisentangledModel make_model(int obs_dim, int k,
                                    const DisentangleHParams& hp, Rng& rng) {
    DisentangledModel m;
    m.k = k;
    m.obs_dim = obs_dim;

    std::vector<int> esz = {obs_dim};
    esz.insert(esz.end(), hp.enc_hidden.begin(), hp.enc_hidden.end());
    esz.push_back(2 * k);
    Rng er = rng.split(1);
    m.encoder = nn::make_mlp(esz, nn::Act::leaky_relu, nn::Act::identity, er);

    std::vector<int> gsz = {k};
    gsz.insert(gsz.end(), hp.gen_hidden.begin(), hp.gen_hidden.end());
    gsz.push_back(obs_dim);
    Rng gr = rng.split(2);
    m.generator = nn::make_mlp(gsz, nn::Act::leaky_relu, nn::Act::tanh_, gr);

    std::vector<int> dsz = {obs_dim};
    dsz.insert(dsz.end(), hp.disc_hidden.begin(), hp.disc_hidden.end());
    Rng dr = rng.split(3);
    m.disc_body = nn::make_mlp(dsz, nn::Act::leaky_relu, nn::Act::leaky_relu, dr);
    if (hp.spectral_norm)
        for (auto& l : m.disc_body.layers) l.spectral_norm = true;

    const int hidden = dsz.back();
    Rng ur = rng.split(4);
    m.head_u = nn::make_mlp({hidden, 1}, nn::Act::identity, nn::Act::identity, ur);
    Rng cr = rng.split(5);
    m.head_c = nn::make_mlp({hidden, k}, nn::Act::identity, nn::Act::identity, cr);
    return m;
}

// --- Discriminator ---

// Batched logits: logit = u(b(s1)) + u(b(s2)) + sum_k y_k (c(b(s1)) - c(b(s2)))_k
// with y per factor in {-1, +1} for labeled ranks and 0 for unlabeled.
struct DiscCaches {
    nn::Cache body1, body2, u1, u2, c1, c2;
    Mat h1, h2, cu1, cu2, cc1, cc2;
};

inline std::vector<double> discriminate_batch(const DisentangledModel& m,
                                              const Mat& s1, const Mat& s2,
                                              const Mat& y, DiscCaches* cc) {
    if (s1.rows != s2.rows || s1.rows != y.rows || s1.cols != m.obs_dim ||
        s2.cols != m.obs_dim || y.cols != m.k)
        throw UsageError("discriminate: dimension mismatch");
    DiscCaches local;
    DiscCaches& c = cc ? *cc : local;
    c.h1 = nn::forward(m.disc_body, s1, &c.body1);
    c.h2 = nn::forward(m.disc_body, s2, &c.body2);
    c.cu1 = nn::forward(m.head_u, c.h1, &c.u1);
    c.cu2 = nn::forward(m.head_u, c.h2, &c.u2);
    c.cc1 = nn::forward(m.head_c, c.h1, &c.c1);
    c.cc2 = nn::forward(m.head_c, c.h2, &c.c2);
    std::vector<double> logits(s1.rows);
    for (int r = 0; r < s1.rows; ++r) {
        double v = c.cu1.at(r, 0) + c.cu2.at(r, 0);
        for (int k = 0; k < m.k; ++k)
            v += y.at(r, k) * (c.cc1.at(r, k) - c.cc2.at(r, k));
        logits[r] = v;
    }
    return logits;
}

inline double discriminate(const DisentangledModel& m,
                           const std::vector<double>& s1,
                           const std::vector<double>& s2,
                           const std::vector<double>& y) {
    Mat m1 = Mat::from_row(s1), m2 = Mat::from_row(s2), my = Mat::from_row(y);
    return discriminate_batch(m, m1, m2, my, nullptr)[0];
}

struct DiscGrads {
    nn::Grads body, head_u, head_c;
    void init_like(const DisentangledModel& m) {
        body.init_like(m.disc_body);
        head_u.init_like(m.head_u);
        head_c.init_like(m.head_c);
    }
};

// Backpropagates dlogits through heads and body; returns d(loss)/d(s1), d(s2)
// when requested (needed by the generator loss).
inline void discriminate_backward(const DisentangledModel& m,
                                  const DiscCaches& c, const Mat& y,
                                  const std::vector<double>& dlogits,
                                  DiscGrads& g, Mat* ds1 = nullptr,
                                  Mat* ds2 = nullptr) {
    const int rows = static_cast<int>(dlogits.size());
    Mat du(rows, 1);
    Mat dc1(rows, m.k), dc2(rows, m.k);
    for (int r = 0; r < rows; ++r) {
        du.at(r, 0) = dlogits[r];
        for (int k = 0; k < m.k; ++k) {
            dc1.at(r, k) = dlogits[r] * y.at(r, k);
            dc2.at(r, k) = -dlogits[r] * y.at(r, k);
        }
    }
    Mat dh1 = nn::backward(m.head_u, c.u1, du, g.head_u);
    Mat dh2 = nn::backward(m.head_u, c.u2, du, g.head_u);
    Mat dh1c = nn::backward(m.head_c, c.c1, dc1, g.head_c);
    Mat dh2c = nn::backward(m.head_c, c.c2, dc2, g.head_c);
    for (size_t i = 0; i < dh1.a.size(); ++i) dh1.a[i] += dh1c.a[i];
    for (size_t i = 0; i < dh2.a.size(); ++i) dh2.a[i] += dh2c.a[i];
    Mat d1 = nn::backward(m.disc_body, c.body1, dh1, g.body);
    Mat d2 = nn::backward(m.disc_body, c.body2, dh2, g.body);
    if (ds1) *ds1 = std::move(d1);
    if (ds2) *ds2 = std::move(d2);
}

// --- Losses ---

struct PairBatch {
    Mat s1, s2; // observations
    Mat y;      // {-1, 0, +1} per factor
};

// 0.5 * BCE(real -> 1) + 0.5 * BCE(fake -> 0); gradients w.r.t. D only.
inline double disc_loss(const DisentangledModel& m, const PairBatch& real,
                        const PairBatch& fake, DiscGrads* grads = nullptr) {
    if (real.s1.rows == 0 || fake.s1.rows == 0)
        throw UsageError("disc_loss: empty batch");
    DiscCaches cr, cf;
    std::vector<double> lr = discriminate_batch(m, real.s1, real.s2, real.y, &cr);
    std::vector<double> lf = discriminate_batch(m, fake.s1, fake.s2, fake.y, &cf);
    double loss = 0.0;
    for (double v : lr) loss += 0.5 * nn::bce_with_logit(v, 1.0) / lr.size();
    for (double v : lf) loss += 0.5 * nn::bce_with_logit(v, 0.0) / lf.size();
    if (grads) {
        std::vector<double> dlr(lr.size()), dlf(lf.size());
        for (size_t i = 0; i < lr.size(); ++i)
            dlr[i] = 0.5 * (nn::sigmoid(lr[i]) - 1.0) / lr.size();
        for (size_t i = 0; i < lf.size(); ++i)
            dlf[i] = 0.5 * nn::sigmoid(lf[i]) / lf.size();
        discriminate_backward(m, cr, real.y, dlr, *grads);
        discriminate_backward(m, cf, fake.y, dlf, *grads);
    }
    return loss;
}

// Non-saturating generator loss: BCE(D(G(z1),G(z2),y_fake) -> 1), gradients
// w.r.t. G through a frozen discriminator.
inline double gen_loss(const DisentangledModel& m, const Mat& z1, const Mat& z2,
                       const Mat& yfake, nn::Grads* grads = nullptr) {
    if (z1.rows == 0 || z1.rows != z2.rows)
        throw UsageError("gen_loss: bad latent batch");
    nn::Cache g1, g2;
    Mat s1 = nn::forward(m.generator, z1, &g1);
    Mat s2 = nn::forward(m.generator, z2, &g2);
    DiscCaches dc;
    std::vector<double> logits = discriminate_batch(m, s1, s2, yfake, &dc);
    double loss = 0.0;
    for (double v : logits)
        loss += nn::bce_with_logit(v, 1.0) / logits.size();
    if (grads) {
        std::vector<double> dl(logits.size());
        for (size_t i = 0; i < logits.size(); ++i)
            dl[i] = (nn::sigmoid(logits[i]) - 1.0) / logits.size();
        DiscGrads scratch; // discriminator is frozen; these are discarded
        scratch.init_like(m);
        Mat ds1, ds2;
        discriminate_backward(m, dc, yfake, dl, scratch, &ds1, &ds2);
        nn::backward(m.generator, g1, ds1, *grads);
        nn::backward(m.generator, g2, ds2, *grads);
    }
    return loss;
}

inline void encoder_heads(const DisentangledModel& m, const Mat& out, int row,
                          std::vector<double>& mu, std::vector<double>& sigma,
                          std::vector<double>* raw = nullptr) {
    mu.resize(m.k);
    sigma.resize(m.k);
    if (raw) raw->resize(m.k);
    for (int k = 0; k < m.k; ++k) {
        mu[k] = out.at(row, k);
        const double rw = out.at(row, m.k + k);
        sigma[k] = nn::softplus(rw) + kSigmaFloor;
        if (raw) (*raw)[k] = rw;
    }
}

// Gaussian NLL of z under (mu, sigma) of the encoder applied to G(z); the
// generator is frozen. Mean over the batch; sums over latent dimensions.
inline double enc_loss(const DisentangledModel& m, const Mat& z,
                       nn::Grads* grads = nullptr) {
    if (z.rows == 0) throw UsageError("enc_loss: empty batch");
    Mat s = nn::forward(m.generator, z); // frozen, no cache
    nn::Cache ec;
    Mat out = nn::forward(m.encoder, s, &ec);
    const double b = z.rows;
    double loss = 0.0;
    Mat dout(out.rows, out.cols);
    std::vector<double> mu, sigma;
    for (int r = 0; r < z.rows; ++r) {
        encoder_heads(m, out, r, mu, sigma);
        for (int k = 0; k < m.k; ++k) {
            const double resid = z.at(r, k) - mu[k];
            loss += (std::log(sigma[k]) + 0.5 * std::log(2.0 * std::numbers::pi) +
                     0.5 * resid * resid / (sigma[k] * sigma[k])) /
                    b;
            if (grads) {
                // d/dmu and d/dsigma, sigma through softplus
                dout.at(r, k) = -resid / (sigma[k] * sigma[k]) / b;
                const double dsig =
                    (1.0 / sigma[k] -
                     resid * resid / (sigma[k] * sigma[k] * sigma[k])) /
                    b;
                dout.at(r, m.k + k) =
                    dsig * nn::sigmoid(out.at(r, m.k + k));
            }
        }
    }
    if (grads) nn::backward(m.encoder, ec, dout, *grads);
    return loss;
}

// --- Fake labels ---

// Fake pairs claim the rank structure their own latents exhibit, restricted
// to the factors the dataset labels; the discriminator then forces generated
// factor k to move with latent k.
inline Mat fake_labels(const Mat& z1, const Mat& z2,
                       const std::vector<std::uint8_t>& mask) {
    Mat y(z1.rows, z1.cols);
    for (int r = 0; r < z1.rows; ++r)
        for (int k = 0; k < z1.cols; ++k) {
            if (!mask[k]) continue; // unlabeled -> 0
            y.at(r, k) = z1.at(r, k) < z2.at(r, k) ? 1.0 : -1.0;
        }
    return y;
}

inline double label_to_pm1(int8_t y) {
    return y == data::kUnlabeled ? 0.0 : (y ? 1.0 : -1.0);
}

// --- Training ---

struct LossRow {
    int iteration = 0;
    double disc = 0.0, gen = 0.0, enc = 0.0;
};

inline void check_finite(double loss, const char* which, int iteration) {
    if (!std::isfinite(loss))
        throw TrainingError(std::string("train_disentangle: non-finite ") +
                            which + " loss at iteration " +
                            std::to_string(iteration));
}

struct DisentangleRun {
    DisentangledModel model;
    std::vector<LossRow> trace;
};

// trace_out, when given, receives each logged row as it lands, so callers
// keep the partial trace if training aborts on a non-finite loss
inline DisentangleRun train_disentangle(const data::TrainView& view,
                                        const DisentangleHParams& hp,
                                        std::uint64_t seed,
                                        std::vector<LossRow>* trace_out =
                                            nullptr) {
    if (view.obs.rows == 0 || view.pairs.empty())
        throw UsageError("train_disentangle: empty dataset");
    const int obs_dim = view.obs.cols;
    const int k = static_cast<int>(view.mask.size());

    Rng root(derive_seed(seed, 0x646973ull)); // "dis"
    Rng init_rng = root.split(1);
    Rng train_rng = root.split(2);

    DisentangleRun run;
    run.model = make_model(obs_dim, k, hp, init_rng);
    DisentangledModel& m = run.model;

    nn::AdamState opt_body(m.disc_body, hp.lr, hp.beta1, hp.beta2);
    nn::AdamState opt_u(m.head_u, hp.lr, hp.beta1, hp.beta2);
    nn::AdamState opt_c(m.head_c, hp.lr, hp.beta1, hp.beta2);
    nn::AdamState opt_gen(m.generator, hp.lr, hp.beta1, hp.beta2);
    nn::AdamState opt_enc(m.encoder, hp.lr, hp.beta1, hp.beta2);

    const int b = hp.batch;
    auto draw_z = [&](Mat& z) {
        for (auto& v : z.a) v = train_rng.normal();
    };
    auto draw_fake_pair = [&](PairBatch& fake) {
        Mat z1(b, k), z2(b, k);
        draw_z(z1);
        draw_z(z2);
        fake.y = fake_labels(z1, z2, view.mask);
        fake.s1 = nn::forward(m.generator, z1);
        fake.s2 = nn::forward(m.generator, z2);
    };

    for (int it = 0; it < hp.iterations; ++it) {
        // discriminator step
        PairBatch real;
        real.s1 = Mat(b, obs_dim);
        real.s2 = Mat(b, obs_dim);
        real.y = Mat(b, k);
        for (int r = 0; r < b; ++r) {
            const auto& p =
                view.pairs[train_rng.uniform_int(view.pairs.size())];
            for (int c = 0; c < obs_dim; ++c) {
                real.s1.at(r, c) = view.obs.at(p.i, c);
                real.s2.at(r, c) = view.obs.at(p.j, c);
            }
            for (int c = 0; c < k; ++c)
                real.y.at(r, c) = label_to_pm1(p.y[c]);
        }
        PairBatch fake;
        draw_fake_pair(fake);
        DiscGrads dg;
        dg.init_like(m);
        const double dl = disc_loss(m, real, fake, &dg);
        check_finite(dl, "discriminator", it);
        nn::adam_step(opt_body, m.disc_body, dg.body);
        nn::adam_step(opt_u, m.head_u, dg.head_u);
        nn::adam_step(opt_c, m.head_c, dg.head_c);
        if (hp.spectral_norm) nn::spectral_normalize(m.disc_body);

        // generator step
        Mat z1(b, k), z2(b, k);
        draw_z(z1);
        draw_z(z2);
        Mat yf = fake_labels(z1, z2, view.mask);
        nn::Grads gg;
        gg.init_like(m.generator);
        const double gl = gen_loss(m, z1, z2, yf, &gg);
        check_finite(gl, "generator", it);
        nn::adam_step(opt_gen, m.generator, gg);

        // encoder step
        Mat ze(b, k);
        draw_z(ze);
        nn::Grads eg;
        eg.init_like(m.encoder);
        const double el = enc_loss(m, ze, &eg);
        check_finite(el, "encoder", it);
        nn::adam_step(opt_enc, m.encoder, eg);
        if (hp.log_interval > 0 && (it + 1) % hp.log_interval == 0) {
            run.trace.push_back({it + 1, dl, gl, el});
            if (trace_out) trace_out->push_back(run.trace.back());
        }
    }
    return run;
}

// --- Encoding and goal bounds ---

inline std::vector<double> encode(const DisentangledModel& m,
                                  const std::vector<double>& s) {
    Mat out = nn::forward(m.encoder, Mat::from_row(s));
    std::vector<double> z(m.k);
    for (int k = 0; k < m.k; ++k) z[k] = out.at(0, k);
    return z;
}

inline Mat encode_batch(const DisentangledModel& m, const Mat& s) {
    Mat out = nn::forward(m.encoder, s);
    Mat z(s.rows, m.k);
    for (int r = 0; r < s.rows; ++r)
        for (int k = 0; k < m.k; ++k) z.at(r, k) = out.at(r, k);
    return z;
}

inline std::vector<double> restrict_to(const std::vector<double>& z,
                                       const std::vector<int>& idx) {
    std::vector<double> out;
    out.reserve(idx.size());
    for (int i : idx) {
        if (i < 0 || i >= static_cast<int>(z.size()))
            throw UsageError("restrict_to: index out of range");
        out.push_back(z[i]);
    }
    return out;
}

inline std::vector<double> encode_I(const DisentangledModel& m,
                                    const std::vector<double>& s,
                                    const std::vector<int>& idx) {
    return restrict_to(encode(m, s), idx);
}

inline GoalSpaceBounds compute_goal_bounds(const DisentangledModel& m,
                                           const Mat& base_obs,
                                           const std::vector<int>& idx) {
    if (base_obs.rows == 0)
        throw UsageError("compute_goal_bounds: empty dataset");
    GoalSpaceBounds b;
    b.indices = idx;
    b.z_min.assign(idx.size(), 1e300);
    b.z_max.assign(idx.size(), -1e300);
    Mat z = encode_batch(m, base_obs);
    for (int r = 0; r < z.rows; ++r)
        for (size_t t = 0; t < idx.size(); ++t) {
            const double v = z.at(r, idx[t]);
            b.z_min[t] = std::min(b.z_min[t], v);
            b.z_max[t] = std::max(b.z_max[t], v);
        }
    return b;
}

// --- Serialization ---

inline void save_model(std::ostream& out, const DisentangledModel& m) {
    out << "disentangled v1 " << m.k << ' ' << m.obs_dim << '\n';
    nn::save_net(out, m.encoder);
    nn::save_net(out, m.generator);
    nn::save_net(out, m.disc_body);
    nn::save_net(out, m.head_u);
    nn::save_net(out, m.head_c);
}

inline DisentangledModel load_model(std::istream& in,
                                    const std::string& name = "<model>") {
    io::TokenReader tr(in, name);
    tr.expect_literal("disentangled");
    tr.expect_literal("v1");
    DisentangledModel m;
    m.k = static_cast<int>(tr.expect_int("latent dim"));
    m.obs_dim = static_cast<int>(tr.expect_int("obs dim"));
    m.encoder = nn::load_net(tr);
    m.generator = nn::load_net(tr);
    m.disc_body = nn::load_net(tr);
    m.head_u = nn::load_net(tr);
    m.head_c = nn::load_net(tr);
    return m;
}

} // namespace wsc::dis
