#pragma once

// Beta-VAE over observations: the representation the relabeling baselines
// use in place of the rank-supervised encoder. Optionally carries a factor
// prediction head on the mean encoding (the "+pred" baseline).

#include <cstdint>
#include <string>
#include <vector>

#include "wsc/errors.hpp"
#include "wsc/io.hpp"
#include "wsc/mat.hpp"
#include "wsc/net.hpp"
#include "wsc/rng.hpp"

namespace wsc::vae {

constexpr double kSigmaFloor = 1e-4;

struct VaeModel {
    int latent = 0;  // L
    int obs_dim = 0;
    int k = 0;       // factor count when the prediction head exists, else 0
    double beta = 4.0;
    nn::DenseNet encoder; // obs -> 2L (mu, raw sigma)
    nn::DenseNet decoder; // L -> obs, tanh
    nn::DenseNet pred;    // mu -> K, only for the "+pred" variant
    bool has_pred() const { return !pred.layers.empty(); }
};

struct VaeHParams {
    int iterations = 2000; // ~1000 epochs over a 256-row set at batch 128
    int batch = 128;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double beta = 4.0; // KL coefficient
    int latent = 0;    // must be set by the caller
    std::vector<int> enc_hidden = {128, 128};
    std::vector<int> dec_hidden = {128, 128};
    bool pred_head = false;
    double aux_weight = 0.0; // the "+pred" variant trains with 1
    int log_interval = 100;
};

inline VaeModel make_vae(int obs_dim, int k_pred, const VaeHParams& hp,
                         Rng& rng) {
    if (hp.latent <= 0) throw UsageError("make_vae: latent dim must be set");
    VaeModel m;
    m.latent = hp.latent;
    m.obs_dim = obs_dim;
    m.k = k_pred;
    m.beta = hp.beta;

    std::vector<int> esz = {obs_dim};
    esz.insert(esz.end(), hp.enc_hidden.begin(), hp.enc_hidden.end());
    esz.push_back(2 * hp.latent);
    Rng er = rng.split(1);
    m.encoder = nn::make_mlp(esz, nn::Act::leaky_relu, nn::Act::identity, er);

    std::vector<int> dsz = {hp.latent};
    dsz.insert(dsz.end(), hp.dec_hidden.begin(), hp.dec_hidden.end());
    dsz.push_back(obs_dim);
    Rng dr = rng.split(2);
    m.decoder = nn::make_mlp(dsz, nn::Act::leaky_relu, nn::Act::tanh_, dr);

    if (k_pred > 0) {
        Rng pr = rng.split(3);
        m.pred = nn::make_mlp({hp.latent, k_pred}, nn::Act::identity,
                              nn::Act::identity, pr);
    }
    return m;
}

inline void vae_heads(const VaeModel& m, const Mat& out, int row,
                      std::vector<double>& mu, std::vector<double>& sigma) {
    mu.resize(m.latent);
    sigma.resize(m.latent);
    for (int l = 0; l < m.latent; ++l) {
        mu[l] = out.at(row, l);
        sigma[l] = nn::softplus(out.at(row, m.latent + l)) + kSigmaFloor;
    }
}

struct VaeGrads {
    nn::Grads enc, dec, pred;
    void init_like(const VaeModel& m) {
        enc.init_like(m.encoder);
        dec.init_like(m.decoder);
        if (m.has_pred()) pred.init_like(m.pred);
    }
};

struct VaeLossParts {
    double total = 0.0;
    double recon = 0.0; // mean over batch, summed over observation dims
    double kl = 0.0;    // mean over batch, summed over latent dims
};

// Reconstruction + beta * KL(N(mu, sigma^2) || N(0, I)) with the
// reparameterization z = mu + sigma * eps; eps is supplied by the caller so
// the loss is a deterministic function of the parameters.
inline VaeLossParts vae_loss(const VaeModel& m, const Mat& obs, const Mat& eps,
                             VaeGrads* grads = nullptr) {
    if (obs.rows == 0) throw UsageError("vae_loss: empty batch");
    if (eps.rows != obs.rows || eps.cols != m.latent)
        throw UsageError("vae_loss: eps shape mismatch");
    const double b = obs.rows;

    nn::Cache ec, dc;
    Mat out = nn::forward(m.encoder, obs, &ec);
    Mat z(obs.rows, m.latent);
    std::vector<double> mu, sigma;
    VaeLossParts parts;
    for (int r = 0; r < obs.rows; ++r) {
        vae_heads(m, out, r, mu, sigma);
        for (int l = 0; l < m.latent; ++l) {
            z.at(r, l) = mu[l] + sigma[l] * eps.at(r, l);
            parts.kl += (0.5 * (mu[l] * mu[l] + sigma[l] * sigma[l] - 1.0) -
                         std::log(sigma[l])) /
                        b;
        }
    }
    Mat rec = nn::forward(m.decoder, z, &dc);
    for (int r = 0; r < obs.rows; ++r)
        for (int c = 0; c < m.obs_dim; ++c) {
            const double d = rec.at(r, c) - obs.at(r, c);
            parts.recon += d * d / b;
        }
    parts.total = parts.recon + m.beta * parts.kl;

    if (grads) {
        Mat drec(rec.rows, rec.cols);
        for (int r = 0; r < obs.rows; ++r)
            for (int c = 0; c < m.obs_dim; ++c)
                drec.at(r, c) = 2.0 * (rec.at(r, c) - obs.at(r, c)) / b;
        Mat dz = nn::backward(m.decoder, dc, drec, grads->dec);

        Mat dout(out.rows, out.cols);
        for (int r = 0; r < obs.rows; ++r) {
            vae_heads(m, out, r, mu, sigma);
            for (int l = 0; l < m.latent; ++l) {
                // z and KL both touch mu; sigma flows through softplus
                const double dmu = dz.at(r, l) + m.beta * mu[l] / b;
                const double dsig = dz.at(r, l) * eps.at(r, l) +
                                    m.beta * (sigma[l] - 1.0 / sigma[l]) / b;
                dout.at(r, l) = dmu;
                dout.at(r, m.latent + l) =
                    dsig * nn::sigmoid(out.at(r, m.latent + l));
            }
        }
        nn::backward(m.encoder, ec, dout, grads->enc);
    }
    return parts;
}

// Mean squared error of the prediction head on the mean encoding against
// normalized factors; trains the head and the encoder. grad_scale lets the
// trainer fold in the auxiliary weight without a second gradient pass.
inline double aux_pred_loss(const VaeModel& m, const Mat& obs,
                            const Mat& factors, VaeGrads* grads = nullptr,
                            double grad_scale = 1.0) {
    if (!m.has_pred())
        throw UsageError("aux_pred_loss: model has no prediction head");
    if (factors.rows != obs.rows || factors.cols != m.k)
        throw UsageError("aux_pred_loss: factor batch shape mismatch");
    if (obs.rows == 0) throw UsageError("aux_pred_loss: empty batch");
    const double b = obs.rows;

    nn::Cache ec, pc;
    Mat out = nn::forward(m.encoder, obs, &ec);
    Mat mu(obs.rows, m.latent);
    for (int r = 0; r < obs.rows; ++r)
        for (int l = 0; l < m.latent; ++l) mu.at(r, l) = out.at(r, l);
    Mat p = nn::forward(m.pred, mu, &pc);

    double loss = 0.0;
    for (int r = 0; r < obs.rows; ++r)
        for (int c = 0; c < m.k; ++c) {
            const double d = p.at(r, c) - factors.at(r, c);
            loss += d * d / b;
        }

    if (grads) {
        Mat dp(p.rows, p.cols);
        for (int r = 0; r < obs.rows; ++r)
            for (int c = 0; c < m.k; ++c)
                dp.at(r, c) =
                    grad_scale * 2.0 * (p.at(r, c) - factors.at(r, c)) / b;
        Mat dmu = nn::backward(m.pred, pc, dp, grads->pred);
        Mat dout(out.rows, out.cols); // sigma head untouched by this loss
        for (int r = 0; r < obs.rows; ++r)
            for (int l = 0; l < m.latent; ++l)
                dout.at(r, l) = dmu.at(r, l);
        nn::backward(m.encoder, ec, dout, grads->enc);
    }
    return loss;
}

// --- Training ---

struct VaeLossRow {
    int iteration = 0;
    double total = 0.0, recon = 0.0, kl = 0.0, aux = 0.0;
};

struct VaeRun {
    VaeModel model;
    std::vector<VaeLossRow> trace;
};

// factors (normalized, one row per observation row) are required only when
// hp.pred_head is set; aux_weight scales the auxiliary term in the objective.
// trace_out, when given, receives each logged row as it lands, so callers
// keep the partial trace if training aborts on a non-finite loss.
inline VaeRun train_vae(const Mat& obs, const Mat* factors,
                        const VaeHParams& hp, std::uint64_t seed,
                        std::vector<VaeLossRow>* trace_out = nullptr) {
    if (obs.rows == 0) throw UsageError("train_vae: empty dataset");
    if (hp.pred_head &&
        (factors == nullptr || factors->rows != obs.rows || factors->cols == 0))
        throw UsageError("train_vae: prediction head needs factor labels");
    if (!hp.pred_head && hp.aux_weight != 0.0)
        throw UsageError("train_vae: aux weight without prediction head");

    Rng root(derive_seed(seed, 0x766165ull)); // "vae"
    Rng init_rng = root.split(1);
    Rng train_rng = root.split(2);

    VaeRun run;
    const int k_pred = hp.pred_head ? factors->cols : 0;
    run.model = make_vae(obs.cols, k_pred, hp, init_rng);
    VaeModel& m = run.model;

    nn::AdamState opt_enc(m.encoder, hp.lr, hp.beta1, hp.beta2);
    nn::AdamState opt_dec(m.decoder, hp.lr, hp.beta1, hp.beta2);
    nn::AdamState opt_pred = m.has_pred()
                                 ? nn::AdamState(m.pred, hp.lr, hp.beta1, hp.beta2)
                                 : nn::AdamState();

    const int b = hp.batch;
    Mat batch(b, obs.cols);
    Mat fbatch(b, k_pred);
    Mat eps(b, hp.latent);
    for (int it = 0; it < hp.iterations; ++it) {
        for (int r = 0; r < b; ++r) {
            const int src = static_cast<int>(train_rng.uniform_int(obs.rows));
            for (int c = 0; c < obs.cols; ++c)
                batch.at(r, c) = obs.at(src, c);
            for (int c = 0; c < k_pred; ++c)
                fbatch.at(r, c) = factors->at(src, c);
        }
        for (auto& v : eps.a) v = train_rng.normal();

        VaeGrads g;
        g.init_like(m);
        VaeLossParts parts = vae_loss(m, batch, eps, &g);
        double aux = 0.0;
        if (m.has_pred() && hp.aux_weight != 0.0)
            aux = aux_pred_loss(m, batch, fbatch, &g, hp.aux_weight);
        const double total = parts.total + hp.aux_weight * aux;
        if (!std::isfinite(total))
            throw TrainingError("train_vae: non-finite loss at iteration " +
                                std::to_string(it));
        nn::adam_step(opt_enc, m.encoder, g.enc);
        nn::adam_step(opt_dec, m.decoder, g.dec);
        if (m.has_pred() && hp.aux_weight != 0.0)
            nn::adam_step(opt_pred, m.pred, g.pred);
        if (hp.log_interval > 0 && (it + 1) % hp.log_interval == 0) {
            run.trace.push_back({it + 1, total, parts.recon, parts.kl, aux});
            if (trace_out) trace_out->push_back(run.trace.back());
        }
    }
    return run;
}

// --- Encoding ---

inline std::vector<double> encode_vae(const VaeModel& m,
                                      const std::vector<double>& s) {
    Mat out = nn::forward(m.encoder, Mat::from_row(s));
    std::vector<double> z(m.latent);
    for (int l = 0; l < m.latent; ++l) z[l] = out.at(0, l);
    return z;
}

inline Mat encode_vae_batch(const VaeModel& m, const Mat& s) {
    Mat out = nn::forward(m.encoder, s);
    Mat z(s.rows, m.latent);
    for (int r = 0; r < s.rows; ++r)
        for (int l = 0; l < m.latent; ++l) z.at(r, l) = out.at(r, l);
    return z;
}

// --- Serialization ---

inline void save_vae(std::ostream& out, const VaeModel& m) {
    out << "vae v1 " << m.latent << ' ' << m.obs_dim << ' ' << m.k << ' '
        << io::dtoa_hex(m.beta) << '\n';
    nn::save_net(out, m.encoder);
    nn::save_net(out, m.decoder);
    if (m.has_pred()) nn::save_net(out, m.pred);
}

inline VaeModel load_vae(std::istream& in, const std::string& name = "<vae>") {
    io::TokenReader tr(in, name);
    tr.expect_literal("vae");
    tr.expect_literal("v1");
    VaeModel m;
    m.latent = static_cast<int>(tr.expect_int("latent dim"));
    m.obs_dim = static_cast<int>(tr.expect_int("obs dim"));
    m.k = static_cast<int>(tr.expect_int("pred width"));
    m.beta = tr.expect_double("beta");
    m.encoder = nn::load_net(tr);
    m.decoder = nn::load_net(tr);
    if (m.k > 0) m.pred = nn::load_net(tr);
    return m;
}

} // namespace wsc::vae
