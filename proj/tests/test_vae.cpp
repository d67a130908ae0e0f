#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "helpers.hpp"
#include "wsc/factorworld.hpp"
#include "wsc/vae.hpp"

using namespace wsc;
using namespace wsc::vae;

namespace {

VaeHParams tiny_hp(int latent) {
    VaeHParams hp;
    hp.latent = latent;
    hp.enc_hidden = {8, 8};
    hp.dec_hidden = {8, 8};
    hp.batch = 6;
    hp.iterations = 0;
    return hp;
}

Mat random_mat(uint64_t seed, int r, int c, double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    Mat m(r, c);
    for (auto& v : m.a) v = rng.uniform(lo, hi);
    return m;
}

double sigma_raw(double sigma) {
    return std::log(std::exp(sigma - kSigmaFloor) - 1.0);
}

// single-layer encoder (mu = s when identity_mu, else mu = 0), constant
// sigma; single-layer zero decoder so reconstructions are tanh(0) = 0
VaeModel handcrafted_vae(int dim, double sigma, bool identity_mu) {
    VaeModel m;
    m.latent = dim;
    m.obs_dim = dim;
    m.beta = 4.0;
    nn::Layer enc;
    enc.in = dim;
    enc.out = 2 * dim;
    enc.w.assign(2 * dim * dim, 0.0);
    if (identity_mu)
        for (int i = 0; i < dim; ++i) enc.w[i * dim + i] = 1.0;
    enc.b.assign(2 * dim, 0.0);
    for (int i = 0; i < dim; ++i) enc.b[dim + i] = sigma_raw(sigma);
    enc.act = nn::Act::identity;
    m.encoder.layers = {enc};

    nn::Layer dec;
    dec.in = dim;
    dec.out = dim;
    dec.w.assign(dim * dim, 0.0);
    dec.b.assign(dim, 0.0);
    dec.act = nn::Act::tanh_;
    m.decoder.layers = {dec};
    return m;
}

void attach_identity_pred(VaeModel& m) {
    nn::Layer p;
    p.in = m.latent;
    p.out = m.latent;
    p.w.assign(m.latent * m.latent, 0.0);
    for (int i = 0; i < m.latent; ++i) p.w[i * m.latent + i] = 1.0;
    p.b.assign(m.latent, 0.0);
    p.act = nn::Act::identity;
    m.pred.layers = {p};
    m.k = m.latent;
}

} // namespace

TEST_CASE("standard-normal posterior has zero KL", "[vae]") {
    VaeModel m = handcrafted_vae(3, 1.0, true);
    Mat obs = random_mat(1, 5, 3);
    Mat eps = random_mat(2, 5, 3);
    VaeLossParts parts = vae_loss(m, Mat(5, 3), eps);
    REQUIRE(parts.kl == Catch::Approx(0.0).margin(1e-12));
    // nonzero mu costs KL
    VaeLossParts shifted = vae_loss(m, obs, eps);
    REQUIRE(shifted.kl > 0.0);
}

TEST_CASE("perfect reconstruction with unit posterior scores zero", "[vae]") {
    VaeModel m = handcrafted_vae(2, 1.0, false);
    Mat obs(4, 2); // all-zero observations; zero decoder reconstructs exactly
    Mat eps = random_mat(3, 4, 2);
    VaeLossParts parts = vae_loss(m, obs, eps);
    REQUIRE(parts.recon == 0.0);
    REQUIRE(parts.total == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("KL term is nonnegative for random models and inputs", "[vae]") {
    for (uint64_t seed = 5; seed < 25; ++seed) {
        Rng rng(seed);
        VaeModel m = make_vae(3, 0, tiny_hp(2), rng);
        Mat obs = random_mat(seed + 100, 7, 3);
        Mat eps = random_mat(seed + 200, 7, 2, -2.0, 2.0);
        REQUIRE(vae_loss(m, obs, eps).kl >= -1e-12);
    }
}

TEST_CASE("vae loss gradients match finite differences", "[vae]") {
    int checked = 0;
    for (uint64_t seed = 30; seed < 50 && checked < 5; ++seed) {
        Rng rng(seed);
        VaeModel m = make_vae(3, 0, tiny_hp(2), rng);
        Mat obs = random_mat(seed + 1, 5, 3);
        Mat eps = random_mat(seed + 2, 5, 2);

        // rectifier margins along the exact forward path of the loss
        nn::Cache ec, dc;
        Mat out = nn::forward(m.encoder, obs, &ec);
        Mat z(5, 2);
        std::vector<double> mu, sigma;
        for (int r = 0; r < 5; ++r) {
            vae_heads(m, out, r, mu, sigma);
            for (int l = 0; l < 2; ++l)
                z.at(r, l) = mu[l] + sigma[l] * eps.at(r, l);
        }
        nn::forward(m.decoder, z, &dc);
        const double margin =
            std::min(testutil::min_rectifier_margin(m.encoder, ec),
                     testutil::min_rectifier_margin(m.decoder, dc));
        if (margin < 1e-3) continue;

        VaeGrads g;
        g.init_like(m);
        vae_loss(m, obs, eps, &g);
        std::vector<double*> params;
        std::vector<double> analytic;
        for (auto* net : {&m.encoder, &m.decoder}) {
            auto ps = nn::param_ptrs(*net);
            params.insert(params.end(), ps.begin(), ps.end());
        }
        for (const auto* gr : {&g.enc, &g.dec}) {
            auto vs = nn::grad_values(*gr);
            analytic.insert(analytic.end(), vs.begin(), vs.end());
        }
        auto loss = [&] { return vae_loss(m, obs, eps).total; };
        REQUIRE(testutil::fd_worst_rel_error(loss, params, analytic) < 1e-4);
        ++checked;
    }
    REQUIRE(checked >= 4);
}

TEST_CASE("exact factor prediction zeroes the auxiliary term", "[vae]") {
    VaeModel m = handcrafted_vae(2, 1.0, true); // mu = s
    attach_identity_pred(m);                    // pred = mu
    Mat obs = random_mat(60, 6, 2);
    REQUIRE(aux_pred_loss(m, obs, obs) == 0.0);
}

TEST_CASE("zero prediction head scores the mean squared factor norm",
          "[vae]") {
    VaeModel m = handcrafted_vae(2, 1.0, true);
    attach_identity_pred(m);
    std::fill(m.pred.layers[0].w.begin(), m.pred.layers[0].w.end(), 0.0);
    Mat obs = random_mat(61, 4, 2);
    Mat f(4, 2);
    f.a = {0.5, -0.5, 1.0, 0.0, -1.0, 0.25, 0.0, 0.75};
    double want = 0.0;
    for (double v : f.a) want += v * v;
    want /= 4.0;
    REQUIRE(aux_pred_loss(m, obs, f) == Catch::Approx(want).margin(1e-12));
}

TEST_CASE("auxiliary gradients match finite differences", "[vae]") {
    int checked = 0;
    for (uint64_t seed = 70; seed < 90 && checked < 5; ++seed) {
        Rng rng(seed);
        VaeModel m = make_vae(3, 2, tiny_hp(2), rng);
        Mat obs = random_mat(seed + 1, 5, 3);
        Mat f = random_mat(seed + 2, 5, 2);

        nn::Cache ec;
        nn::forward(m.encoder, obs, &ec);
        if (testutil::min_rectifier_margin(m.encoder, ec) < 1e-3) continue;

        VaeGrads g;
        g.init_like(m);
        aux_pred_loss(m, obs, f, &g);
        std::vector<double*> params;
        std::vector<double> analytic;
        for (auto* net : {&m.encoder, &m.pred}) {
            auto ps = nn::param_ptrs(*net);
            params.insert(params.end(), ps.begin(), ps.end());
        }
        for (const auto* gr : {&g.enc, &g.pred}) {
            auto vs = nn::grad_values(*gr);
            analytic.insert(analytic.end(), vs.begin(), vs.end());
        }
        auto loss = [&] { return aux_pred_loss(m, obs, f); };
        REQUIRE(testutil::fd_worst_rel_error(loss, params, analytic) < 1e-4);
        ++checked;
    }
    REQUIRE(checked >= 4);
}

TEST_CASE("auxiliary loss rejects missing pieces", "[vae]") {
    Rng rng(91);
    VaeModel bare = make_vae(3, 0, tiny_hp(2), rng);
    Mat obs = random_mat(92, 4, 3);
    REQUIRE_THROWS_AS(aux_pred_loss(bare, obs, random_mat(93, 4, 2)),
                      UsageError);
    Rng rng2(94);
    VaeModel withp = make_vae(3, 2, tiny_hp(2), rng2);
    REQUIRE_THROWS_AS(aux_pred_loss(withp, obs, random_mat(95, 3, 2)),
                      UsageError);
    REQUIRE_THROWS_AS(aux_pred_loss(withp, obs, random_mat(96, 4, 3)),
                      UsageError);
}

TEST_CASE("zero iterations returns the initialized model", "[vae]") {
    Mat obs = random_mat(100, 16, 3);
    VaeHParams hp = tiny_hp(2);
    VaeRun a = train_vae(obs, nullptr, hp, 5);
    VaeRun b = train_vae(obs, nullptr, hp, 5);
    REQUIRE(a.trace.empty());
    REQUIRE(a.model.encoder.layers[0].w == b.model.encoder.layers[0].w);
    REQUIRE(a.model.decoder.layers[0].w == b.model.decoder.layers[0].w);
    REQUIRE_FALSE(a.model.has_pred());
}

TEST_CASE("training is bit-deterministic in the seed", "[vae]") {
    Mat obs = random_mat(101, 16, 3);
    VaeHParams hp = tiny_hp(2);
    hp.iterations = 10;
    hp.log_interval = 5;
    VaeRun a = train_vae(obs, nullptr, hp, 6);
    VaeRun b = train_vae(obs, nullptr, hp, 6);
    VaeRun c = train_vae(obs, nullptr, hp, 7);
    REQUIRE(a.model.encoder.layers[0].w == b.model.encoder.layers[0].w);
    REQUIRE(a.trace.size() == 2);
    REQUIRE(a.trace[1].total == b.trace[1].total);
    REQUIRE(a.model.encoder.layers[0].w != c.model.encoder.layers[0].w);
}

TEST_CASE("an idle prediction head leaves training untouched", "[vae]") {
    Mat obs = random_mat(102, 16, 3);
    Mat f = random_mat(103, 16, 2);
    VaeHParams plain = tiny_hp(2);
    plain.iterations = 8;
    plain.log_interval = 2;
    VaeHParams idle = plain;
    idle.pred_head = true;
    idle.aux_weight = 0.0;
    VaeRun a = train_vae(obs, nullptr, plain, 9);
    VaeRun b = train_vae(obs, &f, idle, 9);
    REQUIRE(b.model.has_pred());
    for (size_t li = 0; li < a.model.encoder.layers.size(); ++li)
        REQUIRE(a.model.encoder.layers[li].w == b.model.encoder.layers[li].w);
    REQUIRE(a.trace.size() == b.trace.size());
    for (size_t i = 0; i < a.trace.size(); ++i) {
        REQUIRE(a.trace[i].total == b.trace[i].total);
        REQUIRE(b.trace[i].aux == 0.0);
    }
    // a live auxiliary weight changes the encoder trajectory
    VaeHParams live = idle;
    live.aux_weight = 1.0;
    VaeRun c = train_vae(obs, &f, live, 9);
    REQUIRE(a.model.encoder.layers[0].w != c.model.encoder.layers[0].w);
}

TEST_CASE("constant data is reconstructed to within noise", "[vae]") {
    env::EnvConfig cfg = env::make_env("doorlights", 110, 4, 0.4);
    Rng rng(111);
    std::vector<double> f = env::sample_feasible_factors(cfg, rng);
    std::vector<double> s = env::observe(f, cfg);
    Mat obs(64, 4);
    for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 4; ++c) obs.at(r, c) = s[c];

    VaeHParams hp;
    hp.latent = 2;
    hp.enc_hidden = {32, 32};
    hp.dec_hidden = {32, 32};
    hp.batch = 32;
    hp.iterations = 1500;
    hp.log_interval = 1500;
    VaeRun run = train_vae(obs, nullptr, hp, 12);
    REQUIRE(run.trace.back().recon < 1e-3);
}

TEST_CASE("non-finite observations abort with the iteration index", "[vae]") {
    Mat obs = random_mat(120, 8, 3);
    obs.at(2, 1) = std::nan("");
    VaeHParams hp = tiny_hp(2);
    hp.iterations = 5;
    try {
        train_vae(obs, nullptr, hp, 13);
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        REQUIRE(std::string(e.what()).find("iteration") != std::string::npos);
    }
}

TEST_CASE("training rejects inconsistent configuration", "[vae]") {
    Mat obs = random_mat(130, 8, 3);
    VaeHParams hp = tiny_hp(2);
    REQUIRE_THROWS_AS(train_vae(Mat(), nullptr, hp, 1), UsageError);
    VaeHParams needs_f = hp;
    needs_f.pred_head = true;
    REQUIRE_THROWS_AS(train_vae(obs, nullptr, needs_f, 1), UsageError);
    VaeHParams orphan_w = hp;
    orphan_w.aux_weight = 1.0;
    REQUIRE_THROWS_AS(train_vae(obs, nullptr, orphan_w, 1), UsageError);
    VaeHParams no_latent = hp;
    no_latent.latent = 0;
    REQUIRE_THROWS_AS(train_vae(obs, nullptr, no_latent, 1), UsageError);
    Rng rng(131);
    Mat eps = random_mat(132, 8, 3); // wrong width
    VaeModel m = make_vae(3, 0, hp, rng);
    REQUIRE_THROWS_AS(vae_loss(m, obs, eps), UsageError);
}

TEST_CASE("encoding returns the mean head and is pure", "[vae]") {
    VaeModel m = handcrafted_vae(3, 0.5, true);
    std::vector<double> s = {0.2, -0.4, 0.9};
    REQUIRE(encode_vae(m, s) == s); // identity mu rows
    REQUIRE(encode_vae(m, s) == encode_vae(m, s));

    Rng rng(140);
    VaeModel r = make_vae(3, 0, tiny_hp(2), rng);
    Mat batch = random_mat(141, 5, 3);
    Mat zb = encode_vae_batch(r, batch);
    for (int row = 0; row < 5; ++row) {
        std::vector<double> zi = encode_vae(r, batch.row_vec(row));
        for (int c = 0; c < 2; ++c) REQUIRE(zb.at(row, c) == zi[c]);
    }
}

TEST_CASE("vae round-trips through its checkpoint format", "[vae]") {
    for (int k_pred : {0, 2}) {
        Rng rng(150 + k_pred);
        VaeHParams hp = tiny_hp(2);
        hp.beta = 7.25;
        VaeModel m = make_vae(3, k_pred, hp, rng);
        std::ostringstream out;
        save_vae(out, m);
        std::istringstream in(out.str());
        VaeModel back = load_vae(in, "ckpt");
        REQUIRE(back.latent == m.latent);
        REQUIRE(back.k == m.k);
        REQUIRE(back.beta == m.beta);
        REQUIRE(back.encoder.layers[1].w == m.encoder.layers[1].w);
        REQUIRE(back.has_pred() == m.has_pred());
        std::vector<double> s = {0.3, -0.2, 0.9};
        REQUIRE(encode_vae(back, s) == encode_vae(m, s));
    }
}
