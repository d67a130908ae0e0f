#pragma once

// Experiment orchestration: binds config files to the module types, runs the
// pipeline stages (data -> representations -> policy -> reports), and lays
// out result directories. Every stage writes a manifest with the resolved
// config, seed, code version, and input-file hashes, so any result is
// reproducible from its manifest alone.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "wsc/config.hpp"
#include "wsc/disentangle.hpp"
#include "wsc/errors.hpp"
#include "wsc/factorworld.hpp"
#include "wsc/gcrl.hpp"
#include "wsc/io.hpp"
#include "wsc/metrics.hpp"
#include "wsc/rng.hpp"
#include "wsc/vae.hpp"
#include "wsc/weakdata.hpp"

namespace wsc::harness {

constexpr const char* kVersion = "wsc 0.1.0";

// --- small helpers ---

namespace detail {

inline std::string num(double x) {
    std::ostringstream ss;
    ss << std::setprecision(17) << x;
    return ss.str();
}

inline std::string join_path(const std::string& dir, const std::string& leaf) {
    return (std::filesystem::path(dir) / leaf).string();
}

inline void ensure_dir(const std::string& dir) {
    std::filesystem::create_directories(dir);
}

inline std::string hash_hex(const std::string& bytes) {
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << io::fnv1a(bytes);
    return ss.str();
}

} // namespace detail

// named input files a stage consumed, recorded in its manifest
struct InputFile {
    std::string key;  // config key it came from (in.data, in.dis, ...)
    std::string path;
};

inline void write_manifest(const std::string& out_dir, const cfg::Config& c,
                           std::uint64_t seed,
                           const std::vector<InputFile>& inputs) {
    std::ostringstream m;
    m << "# reproducibility manifest: resolved config, seed, inputs\n";
    m << "manifest.version = " << kVersion << '\n';
    m << "manifest.seed = " << seed << '\n';
    for (const auto& in : inputs)
        m << "manifest.hash." << in.key << " = "
          << detail::hash_hex(io::read_file(in.path)) << '\n';
    m << c.dump();
    io::write_file(detail::join_path(out_dir, "manifest.txt"), m.str());
}

// --- config -> module types ---

inline env::EnvConfig env_from_config(const cfg::Config& c,
                                      std::uint64_t seed) {
    const std::string ms = c.str("env.mixer_seed", "seed");
    const std::uint64_t mixer_seed =
        ms == "seed" ? derive_seed(seed, 0x656e766dull) // "envm"
                     : static_cast<std::uint64_t>(c.geti("env.mixer_seed"));
    return env::make_env(c.str("env.name"), mixer_seed,
                         static_cast<int>(c.geti("env.obs_dim", 0)),
                         c.getd("env.obs_scale", 0.8));
}

// which factors carry rank labels: "all", "relevant", or a 0/1 string per
// factor ("110010")
inline std::vector<std::uint8_t> mask_from_config(const cfg::Config& c,
                                                  const env::EnvConfig& e) {
    const std::string s = c.str("data.mask", "all");
    if (s == "all") return data::full_mask(e);
    if (s == "relevant") {
        std::vector<std::uint8_t> m(e.factor_count(), 0);
        for (int k : e.relevant_indices()) m[k] = 1;
        return m;
    }
    if (static_cast<int>(s.size()) != e.factor_count())
        throw ConfigError("data.mask: need one 0/1 per factor, got '" + s +
                          "'");
    std::vector<std::uint8_t> m(s.size());
    for (size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '0' && s[i] != '1')
            throw ConfigError("data.mask: need one 0/1 per factor, got '" + s +
                              "'");
        m[i] = s[i] == '1';
    }
    return m;
}

// user-specified factor indices I: "relevant" or a comma-separated list
inline std::vector<int> indices_from_config(const cfg::Config& c,
                                            const env::EnvConfig& e) {
    const std::string s = c.str("goal.indices", "relevant");
    if (s == "relevant") return e.relevant_indices();
    std::vector<int> idx = c.ints("goal.indices", {});
    for (int k : idx)
        if (k < 0 || k >= e.factor_count())
            throw ConfigError("goal.indices: factor index out of range");
    if (idx.empty()) throw ConfigError("goal.indices: empty list");
    return idx;
}

inline dis::DisentangleHParams dis_hp_from_config(const cfg::Config& c) {
    dis::DisentangleHParams hp;
    hp.iterations = static_cast<int>(c.geti("dis.iterations", hp.iterations));
    hp.batch = static_cast<int>(c.geti("dis.batch", hp.batch));
    hp.lr = c.getd("dis.lr", hp.lr);
    hp.beta1 = c.getd("dis.beta1", hp.beta1);
    hp.beta2 = c.getd("dis.beta2", hp.beta2);
    hp.spectral_norm = c.getb("dis.spectral_norm", hp.spectral_norm);
    hp.enc_hidden = c.ints("dis.enc_hidden", hp.enc_hidden);
    hp.gen_hidden = c.ints("dis.gen_hidden", hp.gen_hidden);
    hp.disc_hidden = c.ints("dis.disc_hidden", hp.disc_hidden);
    hp.log_interval =
        static_cast<int>(c.geti("dis.log_interval", hp.log_interval));
    return hp;
}

inline vae::VaeHParams vae_hp_from_config(const cfg::Config& c, int k) {
    vae::VaeHParams hp;
    hp.latent = static_cast<int>(c.geti("vae.latent", 0));
    if (hp.latent == 0) hp.latent = k + 2;
    hp.beta = c.getd("vae.beta", hp.beta);
    hp.iterations = static_cast<int>(c.geti("vae.iterations", hp.iterations));
    hp.batch = static_cast<int>(c.geti("vae.batch", hp.batch));
    hp.lr = c.getd("vae.lr", hp.lr);
    hp.beta1 = c.getd("vae.beta1", hp.beta1);
    hp.beta2 = c.getd("vae.beta2", hp.beta2);
    hp.enc_hidden = c.ints("vae.enc_hidden", hp.enc_hidden);
    hp.dec_hidden = c.ints("vae.dec_hidden", hp.dec_hidden);
    hp.pred_head = c.getb("vae.pred_head", false);
    hp.aux_weight = c.getd("vae.aux_weight", hp.aux_weight);
    hp.log_interval =
        static_cast<int>(c.geti("vae.log_interval", hp.log_interval));
    return hp;
}

inline rl::AgentConfig agent_from_config(const cfg::Config& c) {
    rl::AgentConfig a;
    a.variant = rl::variant_from_name(c.str("agent.variant", "wsc"));
    a.episodes = static_cast<int>(c.geti("agent.episodes", a.episodes));
    a.grad_steps = static_cast<int>(c.geti("agent.grad_steps", a.grad_steps));
    a.batch = static_cast<int>(c.geti("agent.batch", a.batch));
    a.gamma = c.getd("agent.gamma", a.gamma);
    a.lr = c.getd("agent.lr", a.lr);
    a.q_hidden = c.ints("agent.q_hidden", a.q_hidden);
    a.p_goal = c.getd("agent.p_goal", a.p_goal);
    a.future_frac = c.getd("agent.future_frac", a.future_frac);
    a.prior_frac = c.getd("agent.prior_frac", a.prior_frac);
    a.relabels = static_cast<int>(c.geti("agent.relabels", a.relabels));
    a.nstep = static_cast<int>(c.geti("agent.nstep", a.nstep));
    a.alpha_vae = c.getd("agent.alpha_vae", a.alpha_vae);
    a.alpha_skew = c.getd("agent.alpha_skew", a.alpha_skew);
    a.skew_k = static_cast<int>(c.geti("agent.skew_k", a.skew_k));
    a.skew_candidates =
        static_cast<int>(c.geti("agent.skew_candidates", a.skew_candidates));
    a.goal_buffer_frac =
        c.getd("agent.goal_buffer_frac", a.goal_buffer_frac);
    a.capacity = c.geti("agent.capacity", a.capacity);
    a.eps_start = c.getd("agent.eps_start", a.eps_start);
    a.eps_end = c.getd("agent.eps_end", a.eps_end);
    a.eps_frac = c.getd("agent.eps_frac", a.eps_frac);
    a.tau = c.getd("agent.tau", a.tau);
    a.eval_every = static_cast<int>(c.geti("agent.eval_every", a.eval_every));
    a.eval_episodes =
        static_cast<int>(c.geti("agent.eval_episodes", a.eval_episodes));
    return a;
}

// --- checkpoint loading with shape checks ---

inline dis::DisentangledModel load_dis_checkpoint(const std::string& path,
                                                  int obs_dim) {
    std::istringstream in(io::read_file(path));
    dis::DisentangledModel m = dis::load_model(in, path);
    if (m.obs_dim != obs_dim)
        throw ConfigError(path + ": observation size " +
                          std::to_string(m.obs_dim) +
                          " does not match the dataset's " +
                          std::to_string(obs_dim));
    return m;
}

inline vae::VaeModel load_vae_checkpoint(const std::string& path,
                                         int obs_dim) {
    std::istringstream in(io::read_file(path));
    vae::VaeModel m = vae::load_vae(in, path);
    if (m.obs_dim != obs_dim)
        throw ConfigError(path + ": observation size " +
                          std::to_string(m.obs_dim) +
                          " does not match the dataset's " +
                          std::to_string(obs_dim));
    return m;
}

// --- commands ---

inline void cmd_gen_data(const cfg::Config& c, std::uint64_t seed,
                         const std::string& out) {
    env::EnvConfig e = env_from_config(c, seed);
    const int m = static_cast<int>(c.geti("data.m"));
    const int n_pairs = static_cast<int>(c.geti("data.n_pairs"));
    const double noise = c.getd("data.noise", 0.0);
    data::WeakDataset ds =
        data::generate_dataset(e, m, n_pairs, mask_from_config(c, e), seed);
    if (noise > 0.0)
        ds = data::corrupt_labels(ds, data::NoiseSpec{noise, seed});
    detail::ensure_dir(out);
    data::save_dataset(detail::join_path(out, "dataset.txt"), ds);
    write_manifest(out, c, seed, {});
}

inline void cmd_train_disentangle(const cfg::Config& c, std::uint64_t seed,
                                  const std::string& out) {
    const std::string data_path = c.str("in.data");
    data::WeakDataset ds = data::load_dataset(data_path);
    dis::DisentangleHParams hp = dis_hp_from_config(c);
    detail::ensure_dir(out);

    std::vector<dis::LossRow> trace;
    auto flush_trace = [&] {
        std::ostringstream t;
        t << std::setprecision(17) << "iteration,disc,gen,enc\n";
        for (const auto& r : trace)
            t << r.iteration << ',' << r.disc << ',' << r.gen << ',' << r.enc
              << '\n';
        io::write_file(detail::join_path(out, "trace.csv"), t.str());
    };
    dis::DisentangleRun run;
    try {
        run = dis::train_disentangle(data::training_view(ds), hp, seed,
                                     &trace);
    } catch (const TrainingError&) {
        flush_trace(); // keep the partial trace on a mid-run abort
        throw;
    }
    flush_trace();
    std::ostringstream model;
    dis::save_model(model, run.model);
    io::write_file(detail::join_path(out, "model.txt"), model.str());
    write_manifest(out, c, seed, {{"in.data", data_path}});
}

inline void cmd_train_vae(const cfg::Config& c, std::uint64_t seed,
                          const std::string& out) {
    const std::string data_path = c.str("in.data");
    data::WeakDataset ds = data::load_dataset(data_path);
    vae::VaeHParams hp = vae_hp_from_config(c, ds.env.factor_count());
    detail::ensure_dir(out);

    // the auxiliary head regresses normalized factor values
    Mat norm_factors;
    const Mat* fptr = nullptr;
    if (hp.pred_head) {
        norm_factors = Mat(ds.m(), ds.env.factor_count());
        for (int r = 0; r < ds.m(); ++r) {
            auto n = env::normalize_factors(ds.env, ds.factors.row_vec(r));
            for (int k = 0; k < ds.env.factor_count(); ++k)
                norm_factors.at(r, k) = n[k];
        }
        fptr = &norm_factors;
    }

    std::vector<vae::VaeLossRow> trace;
    auto flush_trace = [&] {
        std::ostringstream t;
        t << std::setprecision(17) << "iteration,total,recon,kl,aux\n";
        for (const auto& r : trace)
            t << r.iteration << ',' << r.total << ',' << r.recon << ','
              << r.kl << ',' << r.aux << '\n';
        io::write_file(detail::join_path(out, "trace.csv"), t.str());
    };
    vae::VaeRun run;
    try {
        run = vae::train_vae(ds.obs, fptr, hp, seed, &trace);
    } catch (const TrainingError&) {
        flush_trace();
        throw;
    }
    flush_trace();
    std::ostringstream model;
    vae::save_vae(model, run.model);
    io::write_file(detail::join_path(out, "vae.txt"), model.str());
    write_manifest(out, c, seed, {{"in.data", data_path}});
}

// representation bundle a policy run needs, shared by train/eval/probe/align
struct LoadedRep {
    std::optional<dis::DisentangledModel> dis;
    std::optional<vae::VaeModel> vae;
    std::vector<int> indices;
    rl::Representation rep; // pointers into the optionals above
    std::vector<InputFile> inputs;
};

inline LoadedRep load_representation(const cfg::Config& c,
                                     const data::WeakDataset& ds,
                                     rl::Variant variant) {
    LoadedRep out;
    const bool needs_dis =
        variant == rl::Variant::WSC || variant == rl::Variant::SKEWFIT_DR;
    const bool needs_vae = variant != rl::Variant::WSC;
    if (needs_dis) {
        const std::string p = c.str("in.dis");
        out.dis = load_dis_checkpoint(p, ds.obs.cols);
        out.indices = indices_from_config(c, ds.env);
        for (int k : out.indices)
            if (k >= out.dis->k)
                throw ConfigError(
                    "goal.indices: index exceeds the encoder's factors");
        out.rep.dis = &*out.dis;
        out.rep.indices = out.indices;
        out.rep.bounds =
            dis::compute_goal_bounds(*out.dis, ds.obs, out.indices);
        out.inputs.push_back({"in.dis", p});
    }
    if (needs_vae) {
        const std::string p = c.str("in.vae");
        out.vae = load_vae_checkpoint(p, ds.obs.cols);
        out.rep.vae = &*out.vae;
        out.inputs.push_back({"in.vae", p});
    }
    return out;
}

inline void check_policy_shapes(const rl::QPolicy& pol,
                                const std::string& path, int obs_dim,
                                int goal_dim) {
    if (pol.obs_dim != obs_dim || pol.goal_dim != goal_dim)
        throw ConfigError(path + ": policy expects obs " +
                          std::to_string(pol.obs_dim) + " / goal " +
                          std::to_string(pol.goal_dim) + ", got obs " +
                          std::to_string(obs_dim) + " / goal " +
                          std::to_string(goal_dim));
}

inline std::string eval_stats_csv(const rl::EvalStats& st) {
    std::ostringstream s;
    s << std::setprecision(17)
      << "episodes,final_mean,final_median,final_ci_low,final_ci_high,"
         "min_mean,min_median\n"
      << st.episodes << ',' << st.final_mean << ',' << st.final_median << ','
      << st.final_ci_low << ',' << st.final_ci_high << ',' << st.min_mean
      << ',' << st.min_median << '\n';
    return s.str();
}

inline std::string eval_distances_csv(const rl::EvalStats& st) {
    std::ostringstream s;
    s << std::setprecision(17) << "episode,final_distance,min_distance\n";
    for (size_t i = 0; i < st.final_dists.size(); ++i)
        s << i << ',' << st.final_dists[i] << ',' << st.min_dists[i] << '\n';
    return s.str();
}

inline void cmd_train_policy(const cfg::Config& c, std::uint64_t seed,
                             const std::string& out) {
    const std::string data_path = c.str("in.data");
    data::WeakDataset ds = data::load_dataset(data_path);
    rl::AgentConfig a = agent_from_config(c);
    LoadedRep lr = load_representation(c, ds, a.variant);
    detail::ensure_dir(out);

    rl::TrainResult res = rl::train_policy(ds.env, lr.rep, a, seed);

    std::ostringstream pol;
    rl::save_policy(pol, res.policy);
    io::write_file(detail::join_path(out, "policy.txt"), pol.str());

    std::ostringstream curve;
    curve << std::setprecision(17)
          << "episode,epsilon,mean_q_loss,evaluated,eval_final_mean,"
             "eval_final_median,eval_final_ci_low,eval_final_ci_high,"
             "eval_min_mean\n";
    for (const auto& r : res.curve)
        curve << r.episode << ',' << r.epsilon << ',' << r.mean_q_loss << ','
              << (r.evaluated ? 1 : 0) << ',' << r.eval_final_mean << ','
              << r.eval_final_median << ',' << r.eval_final_ci_low << ','
              << r.eval_final_ci_high << ',' << r.eval_min_mean << '\n';
    io::write_file(detail::join_path(out, "curve.csv"), curve.str());

    io::write_file(detail::join_path(out, "eval.csv"),
                   eval_stats_csv(res.final_eval));
    io::write_file(detail::join_path(out, "distances.csv"),
                   eval_distances_csv(res.final_eval));

    std::vector<InputFile> inputs = {{"in.data", data_path}};
    inputs.insert(inputs.end(), lr.inputs.begin(), lr.inputs.end());
    write_manifest(out, c, seed, inputs);
}

inline void cmd_eval(const cfg::Config& c, std::uint64_t seed,
                     const std::string& out) {
    const std::string data_path = c.str("in.data");
    const std::string policy_path = c.str("in.policy");
    data::WeakDataset ds = data::load_dataset(data_path);
    const rl::Variant variant =
        rl::variant_from_name(c.str("agent.variant", "wsc"));
    LoadedRep lr = load_representation(c, ds, variant);
    std::istringstream pin(io::read_file(policy_path));
    rl::QPolicy pol = rl::load_policy(pin, policy_path);
    check_policy_shapes(
        pol, policy_path, ds.obs.cols,
        static_cast<int>(rl::goal_encode(lr.rep, variant,
                                         ds.obs.row_vec(0))
                             .size()));

    const int episodes = static_cast<int>(c.geti("eval.episodes", 100));
    Rng rng(derive_seed(seed, 0x6576616cull)); // "eval"
    auto enc = [&](const std::vector<double>& obs) {
        return rl::goal_encode(lr.rep, variant, obs);
    };
    rl::EvalStats st = rl::eval_policy(pol, ds.env, enc, episodes, rng);

    detail::ensure_dir(out);
    io::write_file(detail::join_path(out, "eval.csv"), eval_stats_csv(st));
    io::write_file(detail::join_path(out, "distances.csv"),
                   eval_distances_csv(st));
    std::vector<InputFile> inputs = {{"in.data", data_path},
                                     {"in.policy", policy_path}};
    inputs.insert(inputs.end(), lr.inputs.begin(), lr.inputs.end());
    write_manifest(out, c, seed, inputs);
}

// grid-sweep the latent goal and correlate each swept coordinate with the
// final state of a greedy rollout from a fixed start
inline metrics::ProbeReport run_probe(const cfg::Config& c,
                                      const data::WeakDataset& ds,
                                      const rl::QPolicy& pol,
                                      const LoadedRep& lr, rl::Variant variant,
                                      std::uint64_t seed) {
    const int grid_n = static_cast<int>(c.geti("probe.grid_n", 5));
    const std::vector<int> probed = indices_from_config(c, ds.env);

    // per-axis goal bounds and a routine writing axis coords into a full
    // goal vector
    std::vector<std::pair<double, double>> axis_bounds;
    std::vector<double> z_base;
    std::vector<int> axis_dim; // goal-vector slot per axis
    if (variant == rl::Variant::WSC) {
        if (lr.indices != probed)
            throw ConfigError("probe: goal.indices must match the policy's");
        z_base.assign(probed.size(), 0.0);
        for (size_t a = 0; a < probed.size(); ++a) {
            axis_bounds.push_back(
                {lr.rep.bounds.z_min[a], lr.rep.bounds.z_max[a]});
            axis_dim.push_back(static_cast<int>(a));
        }
    } else {
        // baseline: sweep the VAE dimension best correlated with each
        // probed factor, holding the others at their dataset mean
        auto enc = [&](const std::vector<double>& o) {
            return vae::encode_vae(*lr.vae, o);
        };
        metrics::CorrelationReport rep = metrics::disentanglement_report(
            enc, ds, metrics::Pairing::best_match);
        Mat z(ds.m(), lr.vae->latent);
        for (int r = 0; r < ds.m(); ++r) {
            auto zr = enc(ds.obs.row_vec(r));
            for (int l = 0; l < lr.vae->latent; ++l) z.at(r, l) = zr[l];
        }
        z_base.assign(lr.vae->latent, 0.0);
        for (int l = 0; l < z.cols; ++l) {
            for (int r = 0; r < z.rows; ++r) z_base[l] += z.at(r, l);
            z_base[l] /= z.rows;
        }
        for (int k : probed) {
            const int dim = rep.chosen_dim[k];
            if (dim < 0)
                throw TrainingError(
                    "probe: no usable latent dimension for factor " +
                    std::to_string(k));
            double lo = z.at(0, dim), hi = z.at(0, dim);
            for (int r = 1; r < z.rows; ++r) {
                lo = std::min(lo, z.at(r, dim));
                hi = std::max(hi, z.at(r, dim));
            }
            axis_bounds.push_back({lo, hi});
            axis_dim.push_back(dim);
        }
    }

    metrics::ProbeEpisodeFn run =
        [&](const std::vector<double>& coords) {
            Rng r(derive_seed(seed, 0x70726f62ull)); // "prob": fixed start
            env::EnvState st = env::reset(ds.env, r);
            std::vector<double> z_g = z_base;
            for (size_t a = 0; a < coords.size(); ++a)
                z_g[axis_dim[a]] = coords[a];
            std::vector<std::vector<double>> states = {st.factors};
            for (int t = 0; t < ds.env.horizon; ++t) {
                const int act = rl::greedy_action(
                    rl::q_values(pol.online, env::observe(st.factors, ds.env),
                                 z_g),
                    r);
                st = env::step(ds.env, std::move(st), act);
                states.push_back(st.factors);
            }
            return states;
        };
    return metrics::interpretability_probe(probed, axis_bounds, grid_n, run);
}

inline void cmd_probe(const cfg::Config& c, std::uint64_t seed,
                      const std::string& out) {
    const std::string data_path = c.str("in.data");
    const std::string policy_path = c.str("in.policy");
    data::WeakDataset ds = data::load_dataset(data_path);
    const rl::Variant variant =
        rl::variant_from_name(c.str("agent.variant", "wsc"));
    LoadedRep lr = load_representation(c, ds, variant);
    std::istringstream pin(io::read_file(policy_path));
    rl::QPolicy pol = rl::load_policy(pin, policy_path);
    check_policy_shapes(
        pol, policy_path, ds.obs.cols,
        static_cast<int>(rl::goal_encode(lr.rep, variant,
                                         ds.obs.row_vec(0))
                             .size()));

    metrics::ProbeReport rep = run_probe(c, ds, pol, lr, variant, seed);

    detail::ensure_dir(out);
    std::ostringstream s;
    s << std::setprecision(17) << "axis,factor,name,r,degenerate\n";
    for (size_t a = 0; a < rep.factor_idx.size(); ++a) {
        s << a << ',' << rep.factor_idx[a] << ','
          << ds.env.specs[rep.factor_idx[a]].name << ',';
        if (rep.r[a]) s << *rep.r[a];
        else s << "nan";
        s << ',' << (rep.degenerate[a] ? 1 : 0) << '\n';
    }
    io::write_file(detail::join_path(out, "probe.csv"), s.str());
    io::write_file(detail::join_path(out, "probe_trajectories.csv"),
                   metrics::probe_trajectories_csv(rep));
    std::vector<InputFile> inputs = {{"in.data", data_path},
                                     {"in.policy", policy_path}};
    inputs.insert(inputs.end(), lr.inputs.begin(), lr.inputs.end());
    write_manifest(out, c, seed, inputs);
}

inline void cmd_align(const cfg::Config& c, std::uint64_t seed,
                      const std::string& out) {
    const std::string data_path = c.str("in.data");
    const std::string policy_path = c.str("in.policy");
    data::WeakDataset ds = data::load_dataset(data_path);
    const rl::Variant variant =
        rl::variant_from_name(c.str("agent.variant", "wsc"));

    // load whichever representations are supplied; the policy's own comes
    // from the variant, the other is measured alongside
    std::vector<InputFile> inputs = {{"in.data", data_path},
                                     {"in.policy", policy_path}};
    std::optional<dis::DisentangledModel> dism;
    std::optional<vae::VaeModel> vaem;
    std::vector<int> indices;
    if (c.has("in.dis")) {
        dism = load_dis_checkpoint(c.str("in.dis"), ds.obs.cols);
        indices = indices_from_config(c, ds.env);
        inputs.push_back({"in.dis", c.str("in.dis")});
    }
    if (c.has("in.vae")) {
        vaem = load_vae_checkpoint(c.str("in.vae"), ds.obs.cols);
        inputs.push_back({"in.vae", c.str("in.vae")});
    }
    if (!dism && !vaem)
        throw ConfigError("align: need in.dis and/or in.vae");
    const bool act_dis = variant == rl::Variant::WSC;
    if (act_dis && !dism) throw ConfigError("align: variant needs in.dis");
    if (!act_dis && !vaem) throw ConfigError("align: variant needs in.vae");

    std::istringstream pin(io::read_file(policy_path));
    rl::QPolicy pol = rl::load_policy(pin, policy_path);
    const int rollouts = static_cast<int>(c.geti("align.rollouts", 30));
    if (rollouts <= 0) throw ConfigError("align.rollouts must be positive");

    Rng rng(derive_seed(seed, 0x616c676eull)); // "algn"
    std::vector<double> true_d, dis_d, vae_d;
    std::ostringstream scatter;
    scatter << std::setprecision(17)
            << "representation,episode,step,latent_distance,true_distance\n";
    for (int e = 0; e < rollouts; ++e) {
        auto f_goal = env::sample_feasible_factors(ds.env, rng);
        auto goal_obs = env::observe(f_goal, ds.env);
        std::vector<double> zg_act =
            act_dis ? dis::encode_I(*dism, goal_obs, indices)
                    : vae::encode_vae(*vaem, goal_obs);
        std::vector<double> zg_dis, zg_vae;
        if (dism) zg_dis = dis::encode_I(*dism, goal_obs, indices);
        if (vaem) zg_vae = vae::encode_vae(*vaem, goal_obs);

        env::EnvState st = env::reset(ds.env, rng);
        for (int t = 0; t < ds.env.horizon; ++t) {
            const int a = rl::greedy_action(
                rl::q_values(pol.online, env::observe(st.factors, ds.env),
                             zg_act),
                rng);
            st = env::step(ds.env, std::move(st), a);
            const auto obs = env::observe(st.factors, ds.env);
            const double td =
                env::true_goal_distance(ds.env, st.factors, f_goal);
            true_d.push_back(td);
            if (dism) {
                const double d =
                    std::sqrt(l2sq(dis::encode_I(*dism, obs, indices),
                                   zg_dis));
                dis_d.push_back(d);
                scatter << "disentangled," << e << ',' << t << ',' << d << ','
                        << td << '\n';
            }
            if (vaem) {
                const double d =
                    std::sqrt(l2sq(vae::encode_vae(*vaem, obs), zg_vae));
                vae_d.push_back(d);
                scatter << "vae," << e << ',' << t << ',' << d << ',' << td
                        << '\n';
            }
        }
    }

    detail::ensure_dir(out);
    std::ostringstream s;
    s << std::setprecision(17) << "representation,r,n\n";
    auto row = [&](const char* name, const std::vector<double>& ld) {
        metrics::AlignmentReport r = metrics::distance_alignment(ld, true_d);
        s << name << ',';
        if (r.r) s << *r.r;
        else s << "nan";
        s << ',' << r.n << '\n';
    };
    if (dism) row("disentangled", dis_d);
    if (vaem) row("vae", vae_d);
    io::write_file(detail::join_path(out, "align.csv"), s.str());
    io::write_file(detail::join_path(out, "scatter.csv"), scatter.str());
    write_manifest(out, c, seed, inputs);
}

// correlation report between true factors and a checkpoint's latents;
// emits a machine-readable summary for sweep aggregation
inline void cmd_report(const cfg::Config& c, std::uint64_t seed,
                       const std::string& out) {
    const std::string data_path = c.str("in.data");
    data::WeakDataset ds = data::load_dataset(data_path);
    std::vector<InputFile> inputs = {{"in.data", data_path}};

    metrics::CorrelationReport rep;
    if (c.has("in.dis")) {
        dis::DisentangledModel m =
            load_dis_checkpoint(c.str("in.dis"), ds.obs.cols);
        auto enc = [&](const std::vector<double>& o) {
            return dis::encode(m, o);
        };
        rep = metrics::disentanglement_report(enc, ds,
                                              metrics::Pairing::diagonal);
        inputs.push_back({"in.dis", c.str("in.dis")});
    } else {
        vae::VaeModel m = load_vae_checkpoint(c.str("in.vae"), ds.obs.cols);
        auto enc = [&](const std::vector<double>& o) {
            return vae::encode_vae(m, o);
        };
        rep = metrics::disentanglement_report(enc, ds,
                                              metrics::Pairing::best_match);
        inputs.push_back({"in.vae", c.str("in.vae")});
    }

    detail::ensure_dir(out);
    io::write_file(detail::join_path(out, "report.csv"),
                   metrics::to_csv(rep));
    std::ostringstream sum;
    auto mean_rel = rep.mean_abs_r(ds.env.relevant_indices());
    sum << "mean_relevant_abs_r = "
        << (mean_rel ? detail::num(*mean_rel) : "nan") << '\n';
    for (int k = 0; k < rep.n_factors; ++k)
        sum << "factor_r." << ds.env.specs[k].name << " = "
            << (rep.factor_r[k] ? detail::num(*rep.factor_r[k]) : "nan")
            << '\n';
    io::write_file(detail::join_path(out, "summary.cfg"), sum.str());
    write_manifest(out, c, seed, inputs);
}

// --- sweep ---

namespace detail {

inline std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream ss(s);
    std::vector<std::string> out;
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

inline std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char ch : s) {
        if (ch == '\'') out += "'\\''";
        else out += ch;
    }
    out += "'";
    return out;
}

inline std::string sanitize(const std::string& s) {
    std::string out;
    for (char ch : s)
        out += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' ||
                ch == '-')
                   ? ch
                   : '_';
    return out;
}

} // namespace detail

// Runs the data -> disentangle -> report pipeline per (value, seed) in
// child processes and aggregates the per-run summaries. A child failure is
// recorded and the sweep continues; any failure makes the final exit
// nonzero.
inline int cmd_sweep(const cfg::Config& c, std::uint64_t seed,
                     const std::string& out, const std::string& self_exe) {
    const std::string axis = c.str("sweep.axis");
    std::string axis_key;
    if (axis == "n_labels") axis_key = "data.n_pairs";
    else if (axis == "noise") axis_key = "data.noise";
    else if (axis == "mask") axis_key = "data.mask";
    else
        throw ConfigError("sweep.axis must be n_labels, noise, or mask");
    const std::vector<std::string> values =
        detail::split_ws(c.str("sweep.values"));
    if (values.empty()) throw ConfigError("sweep.values is empty");
    std::vector<int> seeds = c.ints("sweep.seeds", {0, 1, 2, 3, 4});
    if (seeds.empty()) throw ConfigError("sweep.seeds is empty");

    detail::ensure_dir(out);
    bool any_failure = false;
    std::ostringstream status;
    status << "value,seed,stage,exit_code\n";
    std::vector<metrics::SweepInput> agg;

    for (const auto& value : values) {
        metrics::SweepInput in;
        in.setting = axis + "=" + value;
        in.metric = "mean_relevant_abs_r";
        for (int s : seeds) {
            const std::string dir = detail::join_path(
                out, "runs/" + detail::sanitize(axis + "_" + value) + "_s" +
                         std::to_string(s));
            detail::ensure_dir(dir);

            cfg::Config child = c;
            child.set(axis_key, value);
            io::write_file(detail::join_path(dir, "run.cfg"), child.dump());

            const std::string cfg_arg =
                " --config " +
                detail::shell_quote(detail::join_path(dir, "run.cfg"));
            const std::string seed_arg = " --seed " + std::to_string(s);
            auto run_stage = [&](const std::string& stage,
                                 const std::string& extra,
                                 const std::string& stage_out) {
                const std::string cmd =
                    detail::shell_quote(self_exe) + " " + stage + cfg_arg +
                    extra + seed_arg + " --out " +
                    detail::shell_quote(stage_out);
                const int rc = std::system(cmd.c_str());
                const int code =
                    rc == -1 ? -1 : (WIFEXITED(rc) ? WEXITSTATUS(rc) : -2);
                status << value << ',' << s << ',' << stage << ',' << code
                       << '\n';
                return code == 0;
            };

            const std::string data_dir = detail::join_path(dir, "data");
            const std::string dis_dir = detail::join_path(dir, "dis");
            const std::string rep_dir = detail::join_path(dir, "report");
            const std::string data_file =
                detail::join_path(data_dir, "dataset.txt");
            bool ok = run_stage("gen-data", "", data_dir);
            if (ok)
                ok = run_stage("train-disentangle",
                               " --set in.data=" +
                                   detail::shell_quote(data_file),
                               dis_dir);
            if (ok)
                ok = run_stage(
                    "report",
                    " --set in.data=" + detail::shell_quote(data_file) +
                        " --set in.dis=" +
                        detail::shell_quote(
                            detail::join_path(dis_dir, "model.txt")),
                    rep_dir);
            if (ok) {
                cfg::Config sum = cfg::load_config(
                    detail::join_path(rep_dir, "summary.cfg"));
                in.values.push_back(sum.getd("mean_relevant_abs_r"));
            } else {
                any_failure = true;
            }
        }
        if (!in.values.empty()) agg.push_back(std::move(in));
    }

    io::write_file(detail::join_path(out, "status.csv"), status.str());
    if (!agg.empty())
        io::write_file(detail::join_path(out, "sweep.csv"),
                       metrics::sweep_csv(metrics::sweep_summary(agg)));
    write_manifest(out, c, seed, {});
    return any_failure ? 3 : 0;
}

} // namespace wsc::harness
