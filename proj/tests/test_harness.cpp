#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#include "helpers.hpp"
#include "wsc/harness.hpp"

using namespace wsc;
namespace fs = std::filesystem;

// ---- fixtures ----

// tiny push1 pipeline settings that train in well under a second
static cfg::Config tiny_cfg() {
    cfg::Config c;
    c.set("env.name", "push1");
    c.set("data.m", "48");
    c.set("data.n_pairs", "128");
    c.set("dis.iterations", "150");
    c.set("dis.log_interval", "50");
    c.set("dis.enc_hidden", "16,16");
    c.set("dis.gen_hidden", "16,16");
    c.set("dis.disc_hidden", "16,16");
    c.set("vae.iterations", "100");
    c.set("vae.log_interval", "50");
    c.set("vae.enc_hidden", "16,16");
    c.set("vae.dec_hidden", "16,16");
    c.set("agent.episodes", "8");
    c.set("agent.grad_steps", "4");
    c.set("agent.batch", "16");
    c.set("agent.q_hidden", "8,8");
    c.set("agent.eval_every", "0");
    c.set("agent.eval_episodes", "3");
    return c;
}

static std::string slurp(const std::string& path) {
    return io::read_file(path);
}

static int count_lines(const std::string& text) {
    int n = 0;
    for (char ch : text)
        if (ch == '\n') ++n;
    return n;
}

// run the tiny pipeline up to a trained encoder, reusing one tree per tag
struct Pipeline {
    std::string root;
    cfg::Config c = tiny_cfg();
    std::string data, dis;

    explicit Pipeline(const std::string& tag) {
        root = testutil::fresh_tmpdir("harness_" + tag);
        harness::cmd_gen_data(c, 5, root + "/data");
        data = root + "/data/dataset.txt";
        c.set("in.data", data);
        harness::cmd_train_disentangle(c, 5, root + "/dis");
        dis = root + "/dis/model.txt";
        c.set("in.dis", dis);
    }
};

// ---- gen-data ----

TEST_CASE("gen-data is seed-deterministic and loadable", "[harness]") {
    const std::string root = testutil::fresh_tmpdir("harness_gen");
    cfg::Config c = tiny_cfg();
    harness::cmd_gen_data(c, 5, root + "/a");
    harness::cmd_gen_data(c, 5, root + "/b");
    harness::cmd_gen_data(c, 6, root + "/c");

    const std::string a = slurp(root + "/a/dataset.txt");
    CHECK(a == slurp(root + "/b/dataset.txt"));
    CHECK(a != slurp(root + "/c/dataset.txt"));

    data::WeakDataset ds = data::load_dataset(root + "/a/dataset.txt");
    CHECK(ds.m() == 48);
    CHECK(ds.n_pairs() == 128);
    CHECK(ds.noise == 0.0);

    const std::string man = slurp(root + "/a/manifest.txt");
    CHECK(man.find("manifest.seed = 5") != std::string::npos);
    CHECK(man.find("env.name = push1") != std::string::npos);
}

TEST_CASE("gen-data records label corruption", "[harness]") {
    const std::string root = testutil::fresh_tmpdir("harness_noise");
    cfg::Config c = tiny_cfg();
    harness::cmd_gen_data(c, 5, root + "/clean");
    c.set("data.noise", "0.4");
    harness::cmd_gen_data(c, 5, root + "/noisy");

    data::WeakDataset clean = data::load_dataset(root + "/clean/dataset.txt");
    data::WeakDataset noisy = data::load_dataset(root + "/noisy/dataset.txt");
    CHECK(noisy.noise == 0.4);
    int flipped = 0;
    for (int p = 0; p < clean.n_pairs(); ++p)
        for (size_t k = 0; k < clean.pairs[p].y.size(); ++k)
            if (clean.pairs[p].y[k] != noisy.pairs[p].y[k]) ++flipped;
    CHECK(flipped > 0); // same base states, some labels flipped
    CHECK(clean.obs.a == noisy.obs.a);
}

// ---- training commands ----

TEST_CASE("train-disentangle writes a checkpoint, trace, and manifest",
          "[harness]") {
    Pipeline p("dis");
    dis::DisentangledModel m = harness::load_dis_checkpoint(p.dis, 8);
    CHECK(m.k == 4);

    // one trace row per log interval, plus the header
    const std::string trace = slurp(p.root + "/dis/trace.csv");
    CHECK(count_lines(trace) == 1 + 150 / 50);

    // the manifest pins the exact input bytes
    const std::string man = slurp(p.root + "/dis/manifest.txt");
    std::ostringstream want;
    want << "manifest.hash.in.data = " << std::hex << std::setw(16)
         << std::setfill('0') << io::fnv1a(slurp(p.data));
    CHECK(man.find(want.str()) != std::string::npos);
}

TEST_CASE("training aborts still leave the trace file behind", "[harness]") {
    const std::string root = testutil::fresh_tmpdir("harness_abort");
    cfg::Config c = tiny_cfg();
    env::EnvConfig e = harness::env_from_config(c, 5);
    data::WeakDataset ds =
        data::generate_dataset(e, 48, 128, data::full_mask(e), 5);
    for (int r = 0; r < ds.obs.rows; ++r)
        ds.obs.at(r, 0) = std::nan(""); // every batch now hits a NaN
    data::save_dataset(root + "/dataset.txt", ds);

    c.set("in.data", root + "/dataset.txt");
    CHECK_THROWS_AS(harness::cmd_train_disentangle(c, 5, root + "/dis"),
                    TrainingError);
    CHECK(fs::exists(root + "/dis/trace.csv"));
    CHECK_THROWS_AS(harness::cmd_train_vae(c, 5, root + "/vae"),
                    TrainingError);
    CHECK(fs::exists(root + "/vae/trace.csv"));
}

TEST_CASE("train-vae writes a checkpoint with optional factor head",
          "[harness]") {
    Pipeline p("vae");
    harness::cmd_train_vae(p.c, 5, p.root + "/vae");
    vae::VaeModel m =
        harness::load_vae_checkpoint(p.root + "/vae/vae.txt", 8);
    CHECK(m.latent == 4 + 2); // auto: factor count + 2
    CHECK_FALSE(m.has_pred());
    CHECK(count_lines(slurp(p.root + "/vae/trace.csv")) == 1 + 100 / 50);

    p.c.set("vae.pred_head", "true");
    p.c.set("vae.aux_weight", "1");
    p.c.set("vae.latent", "3");
    harness::cmd_train_vae(p.c, 5, p.root + "/vae_pred");
    vae::VaeModel mp =
        harness::load_vae_checkpoint(p.root + "/vae_pred/vae.txt", 8);
    CHECK(mp.latent == 3);
    CHECK(mp.has_pred());
}

// ---- policy training / eval ----

TEST_CASE("train-policy produces a reloadable policy and run records",
          "[harness]") {
    Pipeline p("pol");
    p.c.set("agent.variant", "wsc");
    harness::cmd_train_policy(p.c, 5, p.root + "/pol");
    harness::cmd_train_policy(p.c, 5, p.root + "/pol2");

    // byte-identical rerun under the same seed
    CHECK(slurp(p.root + "/pol/policy.txt") ==
          slurp(p.root + "/pol2/policy.txt"));
    CHECK(slurp(p.root + "/pol/curve.csv") ==
          slurp(p.root + "/pol2/curve.csv"));

    CHECK(count_lines(slurp(p.root + "/pol/curve.csv")) == 1 + 8);
    CHECK(count_lines(slurp(p.root + "/pol/distances.csv")) == 1 + 3);

    std::istringstream in(slurp(p.root + "/pol/policy.txt"));
    rl::QPolicy pol = rl::load_policy(in);
    CHECK(pol.obs_dim == 8);
    CHECK(pol.goal_dim == 2); // relevant factors of push1

    p.c.set("in.policy", p.root + "/pol/policy.txt");
    p.c.set("eval.episodes", "4");
    harness::cmd_eval(p.c, 9, p.root + "/eval");
    CHECK(count_lines(slurp(p.root + "/eval/distances.csv")) == 1 + 4);

    p.c.set("eval.episodes", "0");
    CHECK_THROWS_AS(harness::cmd_eval(p.c, 9, p.root + "/eval0"),
                    UsageError);
}

TEST_CASE("checkpoint shape mismatches are rejected up front", "[harness]") {
    Pipeline p("mismatch");

    // dataset from a different world: observation widths disagree
    cfg::Config c2 = tiny_cfg();
    c2.set("env.name", "push2");
    harness::cmd_gen_data(c2, 5, p.root + "/data2");
    cfg::Config c = p.c;
    c.set("in.data", p.root + "/data2/dataset.txt");
    c.set("agent.variant", "wsc");
    CHECK_THROWS_AS(harness::cmd_train_policy(c, 5, p.root + "/bad"),
                    ConfigError);

    // policy trained against a 2-dim goal, evaluated with a 6-dim one
    p.c.set("agent.variant", "wsc");
    harness::cmd_train_policy(p.c, 5, p.root + "/pol");
    harness::cmd_train_vae(p.c, 5, p.root + "/vae");
    p.c.set("in.policy", p.root + "/pol/policy.txt");
    p.c.set("in.vae", p.root + "/vae/vae.txt");
    p.c.set("agent.variant", "her");
    p.c.set("eval.episodes", "2");
    CHECK_THROWS_AS(harness::cmd_eval(p.c, 9, p.root + "/eval"),
                    ConfigError);
}

// ---- analysis commands ----

TEST_CASE("probe sweeps the goal grid axis by axis", "[harness]") {
    Pipeline p("probe");
    p.c.set("agent.variant", "wsc");
    harness::cmd_train_policy(p.c, 5, p.root + "/pol");
    p.c.set("in.policy", p.root + "/pol/policy.txt");

    p.c.set("probe.grid_n", "2");
    harness::cmd_probe(p.c, 5, p.root + "/probe2");
    // 2 swept axes (object x/y) -> header + 2 rows
    CHECK(count_lines(slurp(p.root + "/probe2/probe.csv")) == 1 + 2);
    // 2x2 grid, each trajectory horizon+1 states long
    const std::string traj = slurp(p.root + "/probe2/probe_trajectories.csv");
    CHECK(count_lines(traj) == 1 + 4 * 51);

    p.c.set("probe.grid_n", "3");
    harness::cmd_probe(p.c, 5, p.root + "/probe3");
    CHECK(count_lines(slurp(p.root + "/probe3/probe_trajectories.csv")) ==
          1 + 9 * 51);
}

TEST_CASE("align reports one correlation per representation", "[harness]") {
    Pipeline p("align");
    p.c.set("agent.variant", "wsc");
    harness::cmd_train_policy(p.c, 5, p.root + "/pol");
    harness::cmd_train_vae(p.c, 5, p.root + "/vae");
    p.c.set("in.policy", p.root + "/pol/policy.txt");
    p.c.set("align.rollouts", "3");

    harness::cmd_align(p.c, 5, p.root + "/align1");
    CHECK(count_lines(slurp(p.root + "/align1/align.csv")) == 1 + 1);

    p.c.set("in.vae", p.root + "/vae/vae.txt");
    harness::cmd_align(p.c, 5, p.root + "/align2");
    CHECK(count_lines(slurp(p.root + "/align2/align.csv")) == 1 + 2);
    // scatter: one point per representation per step
    CHECK(count_lines(slurp(p.root + "/align2/scatter.csv")) ==
          1 + 2 * 3 * 50);

    cfg::Config c = p.c;
    c.kv.erase("in.dis");
    c.kv.erase("in.vae");
    CHECK_THROWS_AS(harness::cmd_align(c, 5, p.root + "/align3"),
                    ConfigError);
}

TEST_CASE("report emits the correlation matrix and a parsable summary",
          "[harness]") {
    Pipeline p("report");
    harness::cmd_report(p.c, 5, p.root + "/rep");

    const std::string csv = slurp(p.root + "/rep/report.csv");
    CHECK(csv.rfind("factor,latent,r,defined,chosen", 0) == 0);
    CHECK(count_lines(csv) == 1 + 4 * 4); // K x L grid

    cfg::Config sum = cfg::load_config(p.root + "/rep/summary.cfg");
    const double r = sum.getd("mean_relevant_abs_r");
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
    CHECK(sum.has("factor_r.obj_x"));
}

// ---- command line ----

static int run_cli(const std::string& args) {
    const std::string cmd = std::string(WSC_CLI_PATH) + " " + args +
                            " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

TEST_CASE("cli maps failures onto exit codes", "[harness][cli]") {
    const std::string root = testutil::fresh_tmpdir("harness_cli");
    // config errors -> 2
    CHECK(run_cli("gen-data --set env.name=nosuch --set data.m=8"
                  " --set data.n_pairs=8 --out " + root + "/x") == 2);
    CHECK(run_cli("train-disentangle --set in.data=" + root +
                  "/missing.txt --out " + root + "/x") == 2);
    // a good run -> 0
    CHECK(run_cli("gen-data --set env.name=door --set data.m=8"
                  " --set data.n_pairs=8 --seed 1 --out " + root + "/d") == 0);
    CHECK(fs::exists(root + "/d/dataset.txt"));
}

TEST_CASE("sweep fans out child runs and aggregates their reports",
          "[harness][cli][slow]") {
    const std::string root = testutil::fresh_tmpdir("harness_sweep");
    const std::string common =
        "sweep --set env.name=push1 --set data.m=32 --set data.n_pairs=64"
        " --set dis.iterations=60 --set dis.enc_hidden=8,8"
        " --set dis.gen_hidden=8,8 --set dis.disc_hidden=8,8"
        " --set sweep.seeds=0,1 ";

    REQUIRE(run_cli(common + "--set sweep.axis=n_labels"
                             " --set 'sweep.values=32 64'"
                             " --out " + root + "/ok") == 0);
    const std::string sweep = slurp(root + "/ok/sweep.csv");
    CHECK(count_lines(sweep) == 1 + 2); // one row per value
    CHECK(sweep.find("n_labels=32") != std::string::npos);
    CHECK(sweep.find("n_labels=64") != std::string::npos);
    // 2 values x 2 seeds x 3 stages, all clean
    const std::string status = slurp(root + "/ok/status.csv");
    CHECK(count_lines(status) == 1 + 12);
    CHECK(status.find(",1\n") == std::string::npos);
    CHECK(fs::exists(root + "/ok/runs/n_labels_32_s0/report/summary.cfg"));

    // a bad axis value fails its children but the sweep itself finishes
    REQUIRE(run_cli(common + "--set sweep.axis=mask"
                             " --set sweep.values=zz"
                             " --out " + root + "/bad") == 3);
    const std::string bstat = slurp(root + "/bad/status.csv");
    CHECK(bstat.find("zz,0,gen-data,2") != std::string::npos);
    CHECK_FALSE(fs::exists(root + "/bad/sweep.csv"));
}

TEST_CASE("cli presets layer in order", "[harness][cli]") {
    const std::string root = testutil::fresh_tmpdir("harness_preset");
    REQUIRE(run_cli("gen-data --preset paper/push1 --preset desk"
                    " --set data.m=16 --set data.n_pairs=32 --seed 2"
                    " --out " + root + "/g") == 0);
    cfg::Config man = cfg::load_config(root + "/g/manifest.txt");
    CHECK(man.geti("data.m") == 16);            // --set beats presets
    CHECK(man.geti("dis.iterations") == 5000);  // desk beats paper
    CHECK(man.getd("agent.p_goal") == 0.2);     // paper value survives
    CHECK(man.str("manifest.version") == harness::kVersion);
}
