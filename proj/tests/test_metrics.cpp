#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "wsc/metrics.hpp"

using namespace wsc;
using namespace wsc::metrics;

namespace {

// synthetic dataset where observations are an arbitrary known map of factors
data::WeakDataset synthetic_dataset(int m, uint64_t seed) {
    data::WeakDataset d;
    d.env = env::make_env("push1", 1);
    const int k = d.env.factor_count();
    d.mask = data::full_mask(d.env);
    d.factors = Mat(m, k);
    Rng rng(seed);
    for (auto& v : d.factors.a) v = rng.uniform(-1.0, 1.0);
    d.obs = d.factors; // identity observation map, D = K
    d.env.mixer = env::make_mixer(k, 1, k);
    return d;
}

} // namespace

TEST_CASE("pearson on exactly linear data", "[metrics]") {
    REQUIRE(pearson({1, 2, 3}, {2, 4, 6}) == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(pearson({1, 2, 3}, {-2, -4, -6}) ==
            Catch::Approx(-1.0).margin(1e-12));
}

TEST_CASE("pearson matches the covariance formula", "[metrics]") {
    Rng rng(5);
    std::vector<double> xs(100), ys(100);
    for (int i = 0; i < 100; ++i) {
        xs[i] = rng.normal();
        ys[i] = 0.3 * xs[i] + rng.normal();
    }
    // direct textbook recomputation
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    const double n = 100.0;
    for (int i = 0; i < 100; ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        syy += ys[i] * ys[i];
        sxy += xs[i] * ys[i];
    }
    const double want = (sxy - sx * sy / n) /
                        std::sqrt((sxx - sx * sx / n) * (syy - sy * sy / n));
    REQUIRE(pearson(xs, ys) == Catch::Approx(want).margin(1e-12));
}

TEST_CASE("pearson error contracts", "[metrics]") {
    REQUIRE_THROWS_AS(pearson({1, 1, 1}, {1, 2, 3}), UsageError);
    REQUIRE_THROWS_AS(pearson({1, 2, 3}, {5, 5, 5}), UsageError);
    REQUIRE_THROWS_AS(pearson({1}, {2}), UsageError);
    REQUIRE_THROWS_AS(pearson({1, 2}, {1, 2, 3}), UsageError);
    REQUIRE_FALSE(try_pearson({1, 1, 1}, {1, 2, 3}).has_value());
    REQUIRE(try_pearson({1, 2, 3}, {2, 4, 7}).has_value());
}

TEST_CASE("pearson of affine images is exactly plus-minus one", "[metrics]") {
    Rng rng(7);
    std::vector<double> xs(50);
    for (auto& v : xs) v = rng.normal();
    std::vector<double> up(50), down(50);
    for (int i = 0; i < 50; ++i) {
        up[i] = 2.5 * xs[i] + 1.0;
        down[i] = -0.3 * xs[i] + 4.0;
    }
    REQUIRE(pearson(xs, up) == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(pearson(xs, down) == Catch::Approx(-1.0).margin(1e-12));
}

TEST_CASE("identity encoder gives a perfect diagonal report", "[metrics]") {
    data::WeakDataset d = synthetic_dataset(64, 11);
    auto identity = [](const std::vector<double>& o) { return o; };
    CorrelationReport rep = disentanglement_report(identity, d, Pairing::diagonal);
    REQUIRE(rep.n_factors == 4);
    REQUIRE(rep.n_latent == 4);
    for (int k = 0; k < 4; ++k) {
        REQUIRE(rep.chosen_dim[k] == k);
        REQUIRE(rep.factor_r[k].has_value());
        REQUIRE(*rep.factor_r[k] == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("constant encoder flags every cell undefined", "[metrics]") {
    data::WeakDataset d = synthetic_dataset(32, 13);
    auto constant = [](const std::vector<double>&) {
        return std::vector<double>{1.0, 2.0, 3.0};
    };
    CorrelationReport rep = disentanglement_report(constant, d, Pairing::best_match);
    for (int k = 0; k < rep.n_factors; ++k) {
        for (int l = 0; l < rep.n_latent; ++l) REQUIRE_FALSE(rep.r[k][l]);
        REQUIRE(rep.chosen_dim[k] == -1);
        REQUIRE_FALSE(rep.factor_r[k]);
    }
}

TEST_CASE("report cells match a brute-force pearson loop", "[metrics]") {
    data::WeakDataset d = synthetic_dataset(48, 17);
    // fixed random linear encoder, 4 -> 3
    Rng rng(19);
    Mat w(3, 4);
    for (auto& v : w.a) v = rng.normal();
    auto enc = [&](const std::vector<double>& o) {
        std::vector<double> z(3, 0.0);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 4; ++c) z[r] += w.at(r, c) * o[c];
        return z;
    };
    CorrelationReport rep = disentanglement_report(enc, d, Pairing::best_match);
    REQUIRE(rep.n_latent == 3);
    for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 3; ++l) {
            std::vector<double> fcol, zcol;
            for (int r = 0; r < d.m(); ++r) {
                fcol.push_back(d.factors.at(r, k));
                zcol.push_back(enc(d.obs.row_vec(r))[l]);
            }
            REQUIRE(*rep.r[k][l] ==
                    Catch::Approx(pearson(fcol, zcol)).margin(1e-12));
        }
}

TEST_CASE("best-match pairing recovers a permuted encoder", "[metrics]") {
    data::WeakDataset d = synthetic_dataset(64, 23);
    const int perm[4] = {2, 0, 3, 1}; // factor k lives at latent perm[k]
    auto enc = [&](const std::vector<double>& o) {
        std::vector<double> z(4);
        for (int k = 0; k < 4; ++k) z[perm[k]] = o[k];
        return z;
    };
    CorrelationReport rep = disentanglement_report(enc, d, Pairing::best_match);
    for (int k = 0; k < 4; ++k) {
        REQUIRE(rep.chosen_dim[k] == perm[k]);
        REQUIRE(*rep.factor_r[k] == Catch::Approx(1.0).margin(1e-12));
    }
    // diagonal pairing must not silently substitute the argmax
    CorrelationReport diag = disentanglement_report(enc, d, Pairing::diagonal);
    for (int k = 0; k < 4; ++k) REQUIRE(diag.chosen_dim[k] == k);
}

TEST_CASE("correlation report serializes to csv", "[metrics]") {
    data::WeakDataset d = synthetic_dataset(16, 27);
    auto identity = [](const std::vector<double>& o) { return o; };
    CorrelationReport rep = disentanglement_report(identity, d, Pairing::diagonal);
    const std::string csv = to_csv(rep);
    REQUIRE(csv.find("factor,latent,r,defined,chosen") == 0);
    REQUIRE(csv.find("obj_x") != std::string::npos);
}

TEST_CASE("probe with a scripted exact controller reads r=1", "[metrics]") {
    // the scripted policy drives the probed factors exactly to the coords
    auto run = [](const std::vector<double>& coords) {
        std::vector<std::vector<double>> traj;
        traj.push_back({0.0, 0.0, 0.0, 0.0});
        traj.push_back({0.5, 0.5, coords[0], coords[1]});
        return traj;
    };
    ProbeReport rep = interpretability_probe({2, 3}, {{-1, 1}, {-1, 1}}, 5, run);
    REQUIRE(rep.trajectories.size() == 25);
    for (int a = 0; a < 2; ++a) {
        REQUIRE(rep.r[a].has_value());
        REQUIRE(*rep.r[a] == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("probe on a goal-ignoring noisy policy reads near zero", "[metrics]") {
    // final factors vary with an episode counter, never with the coords
    long counter = 0;
    auto run = [&](const std::vector<double>&) {
        Rng rng(1000 + counter++);
        std::vector<std::vector<double>> traj;
        traj.push_back({0.0, 0.0});
        traj.push_back({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
        return traj;
    };
    ProbeReport rep = interpretability_probe({0, 1}, {{-1, 1}, {-1, 1}}, 7, run);
    for (int a = 0; a < 2; ++a) {
        REQUIRE(rep.r[a].has_value());
        REQUIRE(std::fabs(*rep.r[a]) < 0.3);
    }
}

TEST_CASE("probe cell count is the full grid", "[metrics]") {
    auto run = [](const std::vector<double>& coords) {
        return std::vector<std::vector<double>>{{coords[0], coords[1]}};
    };
    ProbeReport rep = interpretability_probe({0, 1}, {{0, 1}, {0, 1}}, 2, run);
    REQUIRE(rep.trajectories.size() == 4);
}

TEST_CASE("degenerate probe axes are skipped with a flag", "[metrics]") {
    auto run = [](const std::vector<double>& coords) {
        return std::vector<std::vector<double>>{{coords[0], 0.7}};
    };
    ProbeReport rep = interpretability_probe({0, 1}, {{-1, 1}, {0.4, 0.4}}, 3, run);
    REQUIRE(rep.degenerate[1]);
    REQUIRE_FALSE(rep.r[1].has_value());
    REQUIRE(rep.degenerate.size() == 2);
    REQUIRE(rep.r[0].has_value());
    REQUIRE(*rep.r[0] == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(rep.trajectories.size() == 3); // grid only over the live axis
}

TEST_CASE("probe argument validation", "[metrics]") {
    auto run = [](const std::vector<double>&) {
        return std::vector<std::vector<double>>{{0.0}};
    };
    REQUIRE_THROWS_AS(interpretability_probe({}, {}, 3, run), UsageError);
    REQUIRE_THROWS_AS(interpretability_probe({0}, {{0, 1}}, 1, run), UsageError);
    REQUIRE_THROWS_AS(interpretability_probe({0}, {{0, 1}, {0, 1}}, 3, run),
                      UsageError);
}

TEST_CASE("probe trajectories export as csv", "[metrics]") {
    auto run = [](const std::vector<double>& coords) {
        return std::vector<std::vector<double>>{{0.0, 0.0},
                                                {coords[0], coords[0]}};
    };
    ProbeReport rep = interpretability_probe({0}, {{0, 1}}, 2, run);
    const std::string csv = probe_trajectories_csv(rep);
    REQUIRE(csv.find("episode,step,goal_coord0,factors") == 0);
    // 2 cells x 2 states each
    REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 5);
}

TEST_CASE("distance alignment of an identity representation is one", "[metrics]") {
    Rng rng(31);
    std::vector<double> true_d(40);
    for (auto& v : true_d) v = rng.uniform(0.0, 2.0);
    AlignmentReport rep = distance_alignment(true_d, true_d);
    REQUIRE(rep.r.has_value());
    REQUIRE(*rep.r == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(rep.n == 40);
}

TEST_CASE("distance alignment of a constant representation is undefined",
          "[metrics]") {
    std::vector<double> latent(10, 0.5);
    std::vector<double> truth = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    AlignmentReport rep = distance_alignment(latent, truth);
    REQUIRE_FALSE(rep.r.has_value());
}

TEST_CASE("distance alignment matches direct recomputation", "[metrics]") {
    Rng rng(33);
    std::vector<double> a(60), b(60);
    for (int i = 0; i < 60; ++i) {
        a[i] = rng.uniform(0.0, 1.0);
        b[i] = 0.5 * a[i] + 0.2 * rng.normal();
    }
    AlignmentReport rep = distance_alignment(a, b);
    REQUIRE(*rep.r == Catch::Approx(pearson(a, b)).margin(1e-12));
}

TEST_CASE("sweep summary over identical values has zero-width CI", "[metrics]") {
    std::vector<SweepRow> rows =
        sweep_summary({{"n=1024", "pearson", {0.9, 0.9, 0.9, 0.9, 0.9}}});
    REQUIRE(rows.size() == 1);
    REQUIRE(rows[0].mean == Catch::Approx(0.9));
    REQUIRE(rows[0].ci_half.has_value());
    REQUIRE(*rows[0].ci_half == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("sweep summary matches a hand-computed t-interval", "[metrics]") {
    // values 1..5: mean 3, sd sqrt(2.5); half-width = 2.776*sd/sqrt(5)
    std::vector<SweepRow> rows =
        sweep_summary({{"s", "m", {1, 2, 3, 4, 5}}});
    REQUIRE(rows[0].mean == Catch::Approx(3.0));
    const double want = 2.776 * std::sqrt(2.5) / std::sqrt(5.0);
    REQUIRE(*rows[0].ci_half == Catch::Approx(want).margin(1e-9));
}

TEST_CASE("single-seed sweeps omit the CI with a flag", "[metrics]") {
    std::vector<SweepRow> rows = sweep_summary({{"s", "m", {0.5}}});
    REQUIRE_FALSE(rows[0].ci_half.has_value());
    REQUIRE(rows[0].n_seeds == 1);
    const std::string csv = sweep_csv(rows);
    REQUIRE(csv.find(",nan,1,0") != std::string::npos);
}

TEST_CASE("sweep summary rejects empty input", "[metrics]") {
    REQUIRE_THROWS_AS(sweep_summary({}), UsageError);
    REQUIRE_THROWS_AS(sweep_summary({{"s", "m", {}}}), UsageError);
}
