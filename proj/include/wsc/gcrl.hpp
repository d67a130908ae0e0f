#pragma once

// Goal-conditioned RL with hindsight relabeling. One module covers the
// rank-supervised agent and the relabeling baselines; they differ in where
// episode goals come from, how stored goals are rewritten, and which latent
// space the reward measures distance in.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "wsc/disentangle.hpp"
#include "wsc/errors.hpp"
#include "wsc/factorworld.hpp"
#include "wsc/io.hpp"
#include "wsc/mat.hpp"
#include "wsc/metrics.hpp"
#include "wsc/net.hpp"
#include "wsc/rng.hpp"
#include "wsc/vae.hpp"

namespace wsc::rl {

enum class Variant { WSC, HER, RIG, SKEWFIT, SKEWFIT_DR, SKEWFIT_PRED };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::WSC: return "wsc";
        case Variant::HER: return "her";
        case Variant::RIG: return "rig";
        case Variant::SKEWFIT: return "skewfit";
        case Variant::SKEWFIT_DR: return "skewfit-dr";
        case Variant::SKEWFIT_PRED: return "skewfit-pred";
    }
    return "?";
}

inline Variant variant_from_name(const std::string& s) {
    for (Variant v : {Variant::WSC, Variant::HER, Variant::RIG,
                      Variant::SKEWFIT, Variant::SKEWFIT_DR,
                      Variant::SKEWFIT_PRED})
        if (s == variant_name(v)) return v;
    throw ConfigError("unknown agent variant: " + s);
}

inline bool uses_skew(Variant v) {
    return v == Variant::SKEWFIT || v == Variant::SKEWFIT_DR ||
           v == Variant::SKEWFIT_PRED;
}

struct Transition {
    std::vector<double> s, sp; // observation, next observation
    int a = 0;
    std::vector<double> z_g;        // goal the policy conditions on
    std::vector<double> z_dis;      // second goal for the dual-reward variant
    std::vector<double> enc_sp;     // reward-space encoding of sp
    std::vector<double> enc_sp_dis; // dual-reward variant only
    std::vector<double> feat_s, feat_sp; // Q-network inputs for s and sp
    // multi-step lookahead, shared by every relabeled copy of this step:
    // encodings of the states after sp (flattened, one enc_sp-sized slot per
    // step) and the features the target bootstraps from. Empty = 1-step.
    std::vector<double> tail_encs;
    std::vector<double> tail_encs_dis;
    std::vector<double> feat_boot;
    bool done = false;
    long episode = 0;
    int step = 0;
};

struct ReplayBuffer {
    long capacity = 100000;
    std::vector<Transition> data;
    long total = 0; // pushed ever; oldest live id = total - size()

    explicit ReplayBuffer(long cap = 100000) : capacity(cap) {
        if (cap <= 0) throw UsageError("replay capacity must be positive");
    }
    long size() const {
        return std::min<long>(total, capacity);
    }
    bool empty() const { return total == 0; }
    void push(Transition t) {
        if (static_cast<long>(data.size()) < capacity)
            data.push_back(std::move(t));
        else
            data[static_cast<size_t>(total % capacity)] = std::move(t);
        ++total;
    }
    // i in [0, size()), 0 = oldest live transition
    const Transition& at_live(long i) const {
        if (i < 0 || i >= size())
            throw UsageError("replay index out of range");
        return data[static_cast<size_t>((total - size() + i) % capacity)];
    }
};

// --- Agent configuration ---

struct AgentConfig {
    Variant variant = Variant::WSC;
    int episodes = 200;
    int grad_steps = 50; // per episode
    int batch = 128;
    double gamma = 0.99;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    std::vector<int> q_hidden = {128, 128};
    // relabeling mixture (per stored copy); remainder keeps the episode goal
    double p_goal = 0.2;      // uniform-bounds share (rank-supervised agent)
    double future_frac = 0.2; // future-state share (every variant)
    double prior_frac = 0.5;  // prior/skew share (RIG and SkewFit variants)
    int relabels = 1;         // stored relabeled copies per transition (J)
    int nstep = 1;            // lookahead steps folded into each target
    double alpha_vae = 1.0;   // weight of the VAE distance in the dual reward
    double alpha_skew = -1.0; // density exponent for skewed goal sampling
    int skew_k = 10;          // kNN rank for the density estimate
    int skew_candidates = 512;
    double goal_buffer_frac = 0.5; // episode goals drawn from replay encodings
    long capacity = 100000;
    double eps_start = 1.0;
    double eps_end = 0.05;
    double eps_frac = 1.0 / 3.0; // anneal over this fraction of episodes
    double tau = 0.005;          // target-network update rate
    int eval_every = 20;         // episodes between evaluations (0 = never)
    int eval_episodes = 10;

    void validate() const {
        for (double p : {p_goal, future_frac, prior_frac, goal_buffer_frac,
                         eps_start, eps_end, eps_frac})
            if (!(p >= 0.0 && p <= 1.0))
                throw ConfigError("agent probabilities must be in [0,1]");
        if (variant == Variant::WSC && p_goal + future_frac > 1.0 + 1e-12)
            throw ConfigError("p_goal + future_frac exceeds 1");
        if (variant != Variant::WSC && prior_frac + future_frac > 1.0 + 1e-12)
            throw ConfigError("prior_frac + future_frac exceeds 1");
        if (episodes < 0 || grad_steps < 0 || batch <= 0 || relabels < 0 ||
            capacity <= 0 || eval_episodes <= 0 || skew_k <= 0 ||
            skew_candidates <= 0 || nstep < 1)
            throw ConfigError("agent counts must be positive");
        if (!(gamma >= 0.0 && gamma < 1.0))
            throw ConfigError("discount must be in [0,1)");
    }
};

// Which latent spaces a run uses; the trainer checks the variant gets what
// it needs and nothing it must not touch.
struct Representation {
    const dis::DisentangledModel* dis = nullptr;
    std::vector<int> indices;   // user-chosen factor indices I
    dis::GoalSpaceBounds bounds;
    const vae::VaeModel* vae = nullptr;
};

inline void check_representation(const Representation& rep, Variant v) {
    const bool needs_dis = v == Variant::WSC || v == Variant::SKEWFIT_DR;
    const bool needs_vae = v != Variant::WSC;
    if (needs_dis && (rep.dis == nullptr || rep.indices.empty()))
        throw UsageError("variant needs the rank-supervised encoder and "
                         "factor indices");
    if (v == Variant::WSC &&
        rep.bounds.z_min.size() != rep.indices.size())
        throw UsageError("goal bounds do not match the factor indices");
    if (needs_vae && rep.vae == nullptr)
        throw UsageError("variant needs the VAE representation");
}

// --- Goal samplers ---

inline std::vector<double> sample_goal_wsc(const dis::GoalSpaceBounds& b,
                                           Rng& rng) {
    std::vector<double> z(b.z_min.size());
    for (size_t i = 0; i < z.size(); ++i)
        z[i] = b.z_min[i] == b.z_max[i]
                   ? b.z_min[i]
                   : rng.uniform(b.z_min[i], b.z_max[i]);
    return z;
}

inline std::vector<double> sample_goal_prior(int dim, Rng& rng) {
    std::vector<double> z(dim);
    for (auto& v : z) v = rng.normal();
    return z;
}

// Categorical sampler over replay states, weighted against estimated
// density so rare states surface more often. Weights come from a kNN
// density estimate in VAE latent space over a candidate subsample; building
// one is the expensive part, so the trainer refreshes per episode and draws
// many times.
struct SkewSampler {
    Mat states;  // copies of the candidate next states (stable under pushes)
    Mat latents; // VAE mean encodings of those states
    std::vector<double> cum_weight; // cumulative, normalized

    bool ready() const { return states.rows > 0; }

    void build(const ReplayBuffer& buf, const vae::VaeModel& v,
               double alpha_skew, int k, int max_candidates, Rng& rng) {
        states = Mat();
        cum_weight.clear();
        if (buf.empty()) return;
        const int n = static_cast<int>(std::min<long>(buf.size(),
                                                      max_candidates));
        states = Mat(n, static_cast<int>(buf.at_live(0).sp.size()));
        for (int i = 0; i < n; ++i) {
            const auto& sp =
                buf.at_live(static_cast<long>(rng.uniform_int(buf.size()))).sp;
            for (size_t c = 0; c < sp.size(); ++c)
                states.at(i, static_cast<int>(c)) = sp[c];
        }
        latents = vae::encode_vae_batch(v, states);

        std::vector<double> logw(n, 0.0);
        if (alpha_skew != 0.0 && n > 1) {
            // density ~ k / (n * d_k^L)  =>  log w = -alpha * L * log d_k
            const int keff = std::min(k, n - 1);
            std::vector<double> d2(n - 1);
            bool degenerate = true;
            for (int i = 0; i < n; ++i) {
                int w = 0;
                for (int j = 0; j < n; ++j) {
                    if (j == i) continue;
                    d2[w++] = l2sq(latents.row(i), latents.row(j),
                                   latents.cols);
                }
                std::nth_element(d2.begin(), d2.begin() + (keff - 1), d2.end());
                const double dk = std::sqrt(d2[keff - 1]);
                if (dk > 0.0) {
                    logw[i] = -alpha_skew * latents.cols * std::log(dk);
                    degenerate = false;
                } else {
                    logw[i] = -1e300; // zero weight unless everything ties
                }
            }
            if (degenerate) std::fill(logw.begin(), logw.end(), 0.0);
        }
        const double top = *std::max_element(logw.begin(), logw.end());
        double run = 0.0;
        cum_weight.resize(n);
        for (int i = 0; i < n; ++i) {
            run += std::exp(logw[i] - top);
            cum_weight[i] = run;
        }
        for (auto& c : cum_weight) c /= run;
        cum_weight.back() = 1.0;
    }

    // returns position within the candidate set
    int draw(Rng& rng) const {
        if (!ready()) throw UsageError("skew sampler is empty");
        const double u = rng.uniform();
        return static_cast<int>(
            std::lower_bound(cum_weight.begin(), cum_weight.end(), u) -
            cum_weight.begin());
    }
};

// One-shot form: build over the buffer and return the VAE encoding of the
// chosen state. Falls back to the prior when the buffer is empty.
inline std::vector<double> sample_goal_skew(const ReplayBuffer& buf,
                                            const vae::VaeModel& v,
                                            double alpha_skew, Rng& rng,
                                            int k = 10,
                                            int max_candidates = 512) {
    if (buf.empty()) return sample_goal_prior(v.latent, rng);
    SkewSampler s;
    s.build(buf, v, alpha_skew, k, max_candidates, rng);
    const int pick = s.draw(rng);
    return s.latents.row_vec(pick);
}

// --- Rewards ---

inline double reward_disentangled(const std::vector<double>& sp,
                                  const std::vector<double>& z_g,
                                  const dis::DisentangledModel& m,
                                  const std::vector<int>& idx) {
    return -l2sq(dis::encode_I(m, sp, idx), z_g);
}

inline double reward_vae(const std::vector<double>& sp,
                         const std::vector<double>& z_g,
                         const vae::VaeModel& v) {
    return -l2sq(vae::encode_vae(v, sp), z_g);
}

// Disentangled-space distance plus an unsquared VAE-space distance penalty.
inline double reward_dr(const std::vector<double>& sp,
                        const std::vector<double>& z_g_dis,
                        const std::vector<double>& z_g_vae,
                        const dis::DisentangledModel& m,
                        const std::vector<int>& idx, const vae::VaeModel& v,
                        double alpha_vae) {
    return reward_disentangled(sp, z_g_dis, m, idx) -
           alpha_vae * std::sqrt(l2sq(vae::encode_vae(v, sp), z_g_vae));
}

// Reward from a stored transition's cached next-state encodings; must agree
// with the raw-observation forms above (the encoders are frozen during RL).
inline double transition_reward(const Transition& t, Variant variant,
                                double alpha_vae) {
    if (variant == Variant::SKEWFIT_DR)
        return -l2sq(t.enc_sp_dis, t.z_dis) -
               alpha_vae * std::sqrt(l2sq(t.enc_sp, t.z_g));
    return -l2sq(t.enc_sp, t.z_g);
}

inline double l2sq_slot(const std::vector<double>& flat, int slot,
                        const std::vector<double>& ref) {
    const double* p = flat.data() + static_cast<size_t>(slot) * ref.size();
    double s = 0.0;
    for (size_t i = 0; i < ref.size(); ++i) {
        const double d = p[i] - ref[i];
        s += d * d;
    }
    return s;
}

// reward at lookahead offset i; i = 0 reads enc_sp, i >= 1 the stored tails
inline double lookahead_reward(const Transition& t, Variant variant,
                               double alpha_vae, int i) {
    if (i == 0) return transition_reward(t, variant, alpha_vae);
    if (variant == Variant::SKEWFIT_DR)
        return -l2sq_slot(t.tail_encs_dis, i - 1, t.z_dis) -
               alpha_vae * std::sqrt(l2sq_slot(t.tail_encs, i - 1, t.z_g));
    return -l2sq_slot(t.tail_encs, i - 1, t.z_g);
}

// --- Relabeling ---

// J copies of trajectory step t with rewritten goals: a fresh bounds draw
// with probability p_goal, otherwise the encoding of a strictly later next
// state (the step's own next state when t is last).
inline std::vector<Transition> relabel_batch(
    const std::vector<Transition>& traj, int t, int j_copies, double p_goal,
    const dis::GoalSpaceBounds& bounds, const dis::DisentangledModel& model,
    const std::vector<int>& idx, Rng& rng) {
    const int len = static_cast<int>(traj.size());
    if (t < 0 || t >= len) throw UsageError("relabel_batch: step out of range");
    std::vector<Transition> out;
    out.reserve(j_copies);
    for (int j = 0; j < j_copies; ++j) {
        Transition c = traj[t];
        if (rng.uniform() < p_goal) {
            c.z_g = sample_goal_wsc(bounds, rng);
        } else {
            const int tf =
                t + 1 < len
                    ? t + 1 + static_cast<int>(rng.uniform_int(len - t - 1))
                    : t;
            c.z_g = dis::encode_I(model, traj[tf].sp, idx);
        }
        out.push_back(std::move(c));
    }
    return out;
}

// --- Q policy ---

struct QPolicy {
    int obs_dim = 0;
    int goal_dim = 0;
    int actions = 0;
    nn::DenseNet online;
    nn::DenseNet target;
};

inline QPolicy make_policy(int obs_dim, int goal_dim, int actions,
                           const std::vector<int>& hidden, Rng& rng) {
    QPolicy p;
    p.obs_dim = obs_dim;
    p.goal_dim = goal_dim;
    p.actions = actions;
    std::vector<int> sz = {obs_dim + goal_dim};
    sz.insert(sz.end(), hidden.begin(), hidden.end());
    sz.push_back(actions);
    // zero-init output: a fresh policy is exactly indifferent, so greedy
    // action selection starts uniform random
    p.online = nn::make_mlp(sz, nn::Act::leaky_relu, nn::Act::identity, rng,
                            nn::OutputInit::zero);
    p.target = p.online;
    return p;
}

inline std::vector<double> q_values(const nn::DenseNet& net,
                                    const std::vector<double>& s,
                                    const std::vector<double>& z_g) {
    std::vector<double> in;
    in.reserve(s.size() + z_g.size());
    in.insert(in.end(), s.begin(), s.end());
    in.insert(in.end(), z_g.begin(), z_g.end());
    return nn::forward(net, Mat::from_row(in)).row_vec(0);
}

// argmax with random tie-breaking; draws from rng only on a tie, so adding
// a constant to every value never changes the outcome
inline int greedy_action(const std::vector<double>& q, Rng& rng) {
    if (q.empty()) throw UsageError("greedy_action: no action values");
    double best = q[0];
    int ties = 1;
    for (size_t a = 1; a < q.size(); ++a) {
        if (q[a] > best) {
            best = q[a];
            ties = 1;
        } else if (q[a] == best) {
            ++ties;
        }
    }
    if (ties == 1)
        return static_cast<int>(std::max_element(q.begin(), q.end()) -
                                q.begin());
    int pick = static_cast<int>(rng.uniform_int(ties));
    for (size_t a = 0; a < q.size(); ++a)
        if (q[a] == best && pick-- == 0) return static_cast<int>(a);
    throw TrainingError("greedy_action: tie scan failed");
}

// Mean squared TD regression against fixed targets, differentiated w.r.t.
// the online network only.
inline double q_loss(const nn::DenseNet& net, const Mat& inputs,
                     const std::vector<int>& actions,
                     const std::vector<double>& targets,
                     nn::Grads* grads = nullptr) {
    if (inputs.rows == 0) throw UsageError("q_loss: empty batch");
    if (static_cast<int>(actions.size()) != inputs.rows ||
        targets.size() != actions.size())
        throw UsageError("q_loss: batch size mismatch");
    nn::Cache cache;
    Mat q = nn::forward(net, inputs, &cache);
    const double b = inputs.rows;
    double loss = 0.0;
    Mat dq(q.rows, q.cols);
    for (int r = 0; r < inputs.rows; ++r) {
        const int a = actions[r];
        if (a < 0 || a >= q.cols) throw UsageError("q_loss: bad action index");
        const double d = q.at(r, a) - targets[r];
        loss += d * d / b;
        dq.at(r, a) = 2.0 * d / b;
    }
    if (grads) nn::backward(net, cache, dq, *grads);
    return loss;
}

inline void soft_update(nn::DenseNet& target, const nn::DenseNet& online,
                        double tau) {
    for (size_t li = 0; li < target.layers.size(); ++li) {
        auto& t = target.layers[li];
        const auto& o = online.layers[li];
        for (size_t i = 0; i < t.w.size(); ++i)
            t.w[i] += tau * (o.w[i] - t.w[i]);
        for (size_t i = 0; i < t.b.size(); ++i)
            t.b[i] += tau * (o.b[i] - t.b[i]);
    }
}

// --- Evaluation ---

struct EvalStats {
    int episodes = 0;
    double final_mean = 0.0, final_median = 0.0;
    double final_ci_low = 0.0, final_ci_high = 0.0;
    double min_mean = 0.0, min_median = 0.0;
    std::vector<double> final_dists, min_dists;
};

namespace detail {
inline double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}
} // namespace detail

inline EvalStats summarize_eval(const std::vector<double>& finals,
                                const std::vector<double>& mins) {
    EvalStats st;
    st.episodes = static_cast<int>(finals.size());
    st.final_dists = finals;
    st.min_dists = mins;
    double fsum = 0.0, msum = 0.0;
    for (double v : finals) fsum += v;
    for (double v : mins) msum += v;
    st.final_mean = fsum / st.episodes;
    st.min_mean = msum / st.episodes;
    st.final_median = detail::median_of(finals);
    st.min_median = detail::median_of(mins);
    if (st.episodes > 1) {
        double ss = 0.0;
        for (double v : finals) ss += (v - st.final_mean) * (v - st.final_mean);
        const double se = std::sqrt(ss / (st.episodes - 1) / st.episodes);
        const double hw = metrics::t_quantile_975(st.episodes - 1) * se;
        st.final_ci_low = st.final_mean - hw;
        st.final_ci_high = st.final_mean + hw;
    } else {
        st.final_ci_low = st.final_ci_high = st.final_mean;
    }
    return st;
}

using ActionFn = std::function<int(const std::vector<double>& obs,
                                   const std::vector<double>& z_g, Rng& rng)>;
// Step override for evaluation; receives the true goal factors so scripted
// reference controllers can be dropped in.
using StepFn = std::function<env::EnvState(const env::EnvConfig&,
                                           env::EnvState, int,
                                           const std::vector<double>&)>;

// Rollout loop shared by evaluation paths: sample feasible goal factors,
// encode the goal observation, act greedily, report true factor distances.
inline EvalStats eval_rollouts(
    const env::EnvConfig& cfg,
    const std::function<std::vector<double>(const std::vector<double>&)>& enc,
    const ActionFn& act, int episodes, Rng& rng,
    const StepFn& stepper = {}) {
    if (episodes <= 0) throw UsageError("eval: need at least one episode");
    std::vector<double> finals, mins;
    finals.reserve(episodes);
    mins.reserve(episodes);
    for (int e = 0; e < episodes; ++e) {
        std::vector<double> f_goal = env::sample_feasible_factors(cfg, rng);
        std::vector<double> z_g = enc(env::observe(f_goal, cfg));
        env::EnvState st = env::reset(cfg, rng);
        double best = env::true_goal_distance(cfg, st.factors, f_goal);
        for (int t = 0; t < cfg.horizon; ++t) {
            const int a = act(env::observe(st.factors, cfg), z_g, rng);
            st = stepper ? stepper(cfg, std::move(st), a, f_goal)
                         : env::step(cfg, std::move(st), a);
            best = std::min(best,
                            env::true_goal_distance(cfg, st.factors, f_goal));
        }
        finals.push_back(env::true_goal_distance(cfg, st.factors, f_goal));
        mins.push_back(best);
    }
    return summarize_eval(finals, mins);
}

using FeatureFn =
    std::function<std::vector<double>(const std::vector<double>&)>;

inline EvalStats eval_policy(
    const QPolicy& policy, const env::EnvConfig& cfg,
    const std::function<std::vector<double>(const std::vector<double>&)>& enc,
    const FeatureFn& feat, int episodes, Rng& rng) {
    ActionFn act = [&](const std::vector<double>& obs,
                       const std::vector<double>& z_g, Rng& r) {
        return greedy_action(q_values(policy.online, feat(obs), z_g), r);
    };
    return eval_rollouts(cfg, enc, act, episodes, rng);
}

// --- Training ---

struct CurveRow {
    int episode = 0;
    double epsilon = 0.0;
    double mean_q_loss = 0.0;
    bool evaluated = false;
    double eval_final_mean = 0.0;
    double eval_final_median = 0.0;
    double eval_final_ci_low = 0.0, eval_final_ci_high = 0.0;
    double eval_min_mean = 0.0;
};

struct RelabelCounts {
    long bounds = 0;  // fresh uniform-bounds goals
    long future = 0;  // future-state encodings
    long prior = 0;   // prior or skew draws
    long original = 0;
    long total() const { return bounds + future + prior + original; }
};

struct TrainResult {
    QPolicy policy;
    std::vector<CurveRow> curve;
    RelabelCounts relabels;
    EvalStats final_eval;
    ReplayBuffer buffer; // final replay contents, kept for inspection
};

inline std::vector<double> goal_encode(const Representation& rep, Variant v,
                                       const std::vector<double>& obs) {
    if (v == Variant::WSC) return dis::encode_I(*rep.dis, obs, rep.indices);
    return vae::encode_vae(*rep.vae, obs);
}

// State features the Q-network consumes. Every variant acts on its own
// latent view of the observation (the baselines' policies famously run on
// VAE encodings); raw mixed observations bury the control-relevant
// coordinates too deep for a small net to recover.
inline std::vector<double> policy_features(const Representation& rep,
                                           Variant v,
                                           const std::vector<double>& obs) {
    if (v == Variant::WSC) return dis::encode(*rep.dis, obs);
    return vae::encode_vae(*rep.vae, obs);
}

inline int policy_feature_dim(const Representation& rep, Variant v) {
    return v == Variant::WSC ? rep.dis->k : rep.vae->latent;
}

inline TrainResult train_policy(const env::EnvConfig& cfg,
                                const Representation& rep,
                                const AgentConfig& acfg, std::uint64_t seed) {
    acfg.validate();
    check_representation(rep, acfg.variant);
    const Variant var = acfg.variant;
    const bool dual = var == Variant::SKEWFIT_DR;
    const int feat_dim = policy_feature_dim(rep, var);
    const int goal_dim = var == Variant::WSC
                             ? static_cast<int>(rep.indices.size())
                             : rep.vae->latent;

    Rng root(derive_seed(seed, 0x6763726cull)); // "gcrl"
    Rng init_rng = root.split(1);
    Rng run_rng = root.split(2); // rollouts, goals, relabels, minibatches
    Rng eval_rng = root.split(3);

    TrainResult res;
    res.policy =
        make_policy(feat_dim, goal_dim, cfg.action_count, acfg.q_hidden,
                    init_rng);
    QPolicy& pol = res.policy;
    nn::AdamState opt(pol.online, acfg.lr, acfg.beta1, acfg.beta2);

    ReplayBuffer buf(acfg.capacity);
    SkewSampler skew;

    auto enc_goal = [&](const std::vector<double>& obs) {
        return goal_encode(rep, var, obs);
    };
    auto feat = [&](const std::vector<double>& obs) {
        return policy_features(rep, var, obs);
    };
    auto run_eval = [&] {
        return eval_policy(pol, cfg, enc_goal, feat, acfg.eval_episodes,
                           eval_rng);
    };

    const int anneal =
        std::max(1, static_cast<int>(acfg.episodes * acfg.eps_frac));
    for (int ep = 0; ep < acfg.episodes; ++ep) {
        const double eps =
            ep >= anneal
                ? acfg.eps_end
                : acfg.eps_start + (acfg.eps_end - acfg.eps_start) *
                                       (static_cast<double>(ep) / anneal);

        if (uses_skew(var) && !buf.empty())
            skew.build(buf, *rep.vae, acfg.alpha_skew, acfg.skew_k,
                       acfg.skew_candidates, run_rng);

        // episode goal
        std::vector<double> z_g, z_dis;
        switch (var) {
            case Variant::WSC:
                if (!buf.empty() &&
                    run_rng.uniform() < acfg.goal_buffer_frac) {
                    const auto& t =
                        buf.at_live(run_rng.uniform_int(buf.size()));
                    z_g = dis::encode_I(*rep.dis, t.sp, rep.indices);
                } else {
                    z_g = sample_goal_wsc(rep.bounds, run_rng);
                }
                break;
            case Variant::HER:
            case Variant::RIG:
                z_g = sample_goal_prior(rep.vae->latent, run_rng);
                break;
            default:
                if (skew.ready()) {
                    const int pick = skew.draw(run_rng);
                    z_g = skew.latents.row_vec(pick);
                    if (dual)
                        z_dis = dis::encode_I(*rep.dis,
                                              skew.states.row_vec(pick),
                                              rep.indices);
                } else {
                    z_g = sample_goal_prior(rep.vae->latent, run_rng);
                    if (dual)
                        z_dis.assign(rep.indices.size(), 0.0);
                }
        }

        // rollout
        std::vector<Transition> traj;
        traj.reserve(cfg.horizon);
        env::EnvState st = env::reset(cfg, run_rng);
        for (int t = 0; t < cfg.horizon; ++t) {
            Transition tr;
            tr.s = env::observe(st.factors, cfg);
            tr.feat_s = t == 0 ? feat(tr.s) : traj.back().feat_sp;
            if (run_rng.uniform() < eps)
                tr.a = static_cast<int>(run_rng.uniform_int(cfg.action_count));
            else
                tr.a = greedy_action(q_values(pol.online, tr.feat_s, z_g),
                                     run_rng);
            st = env::step(cfg, std::move(st), tr.a);
            tr.sp = env::observe(st.factors, cfg);
            tr.z_g = z_g;
            tr.z_dis = z_dis;
            tr.done = t + 1 == cfg.horizon;
            tr.episode = ep;
            tr.step = t;
            tr.feat_sp = feat(tr.sp);
            if (var == Variant::WSC) {
                tr.enc_sp.resize(rep.indices.size());
                for (size_t i = 0; i < rep.indices.size(); ++i)
                    tr.enc_sp[i] = tr.feat_sp[static_cast<size_t>(
                        rep.indices[i])];
            } else {
                tr.enc_sp = tr.feat_sp;
            }
            if (dual)
                tr.enc_sp_dis = dis::encode_I(*rep.dis, tr.sp, rep.indices);
            traj.push_back(std::move(tr));
        }

        // store originals plus J relabeled copies per step
        const int len = static_cast<int>(traj.size());
        for (int t = 0; t < len; ++t) {
            const int look = std::min(acfg.nstep, len - t);
            if (look > 1) {
                auto& tr = traj[t];
                for (int i = 1; i < look; ++i) {
                    tr.tail_encs.insert(tr.tail_encs.end(),
                                        traj[t + i].enc_sp.begin(),
                                        traj[t + i].enc_sp.end());
                    if (dual)
                        tr.tail_encs_dis.insert(tr.tail_encs_dis.end(),
                                                traj[t + i].enc_sp_dis.begin(),
                                                traj[t + i].enc_sp_dis.end());
                }
                tr.feat_boot = traj[t + look - 1].feat_sp;
            }
            buf.push(traj[t]);
            for (int j = 0; j < acfg.relabels; ++j) {
                Transition c = traj[t];
                const double u = run_rng.uniform();
                const double cut1 =
                    var == Variant::WSC ? acfg.p_goal
                    : var == Variant::HER ? 0.0
                                          : acfg.prior_frac;
                if (u < cut1) {
                    if (var == Variant::WSC) {
                        c.z_g = sample_goal_wsc(rep.bounds, run_rng);
                        ++res.relabels.bounds;
                    } else if (var == Variant::RIG) {
                        c.z_g = sample_goal_prior(rep.vae->latent, run_rng);
                        ++res.relabels.prior;
                    } else if (skew.ready()) {
                        const int pick = skew.draw(run_rng);
                        c.z_g = skew.latents.row_vec(pick);
                        if (dual)
                            c.z_dis = dis::encode_I(*rep.dis,
                                                    skew.states.row_vec(pick),
                                                    rep.indices);
                        ++res.relabels.prior;
                    } else {
                        c.z_g = sample_goal_prior(rep.vae->latent, run_rng);
                        ++res.relabels.prior;
                    }
                } else if (u < cut1 + acfg.future_frac) {
                    const int tf =
                        t + 1 < len
                            ? t + 1 + static_cast<int>(
                                          run_rng.uniform_int(len - t - 1))
                            : t;
                    if (var == Variant::WSC)
                        c.z_g = traj[tf].enc_sp;
                    else
                        c.z_g = vae::encode_vae(*rep.vae, traj[tf].sp);
                    if (dual) c.z_dis = traj[tf].enc_sp_dis;
                    ++res.relabels.future;
                } else {
                    ++res.relabels.original;
                }
                buf.push(std::move(c));
            }
        }

        // gradient steps
        double loss_sum = 0.0;
        int loss_n = 0;
        const int in_dim = feat_dim + goal_dim;
        for (int g = 0; g < acfg.grad_steps; ++g) {
            const int b = acfg.batch;
            Mat xs(b, in_dim), xps(b, in_dim);
            std::vector<int> acts(b);
            std::vector<double> base(b), disc(b);
            for (int r = 0; r < b; ++r) {
                const Transition& tr =
                    buf.at_live(run_rng.uniform_int(buf.size()));
                acts[r] = tr.a;
                // discounted reward sum over the stored lookahead; rewards
                // recomputed from the copy's own goal
                const int look =
                    1 + static_cast<int>(tr.tail_encs.size() / tr.z_g.size());
                double ret = 0.0, g = 1.0;
                for (int i = 0; i < look; ++i) {
                    ret += g * lookahead_reward(tr, var, acfg.alpha_vae, i);
                    g *= acfg.gamma;
                }
                base[r] = ret;
                disc[r] = g;
                const auto& fb =
                    tr.feat_boot.empty() ? tr.feat_sp : tr.feat_boot;
                for (int c = 0; c < feat_dim; ++c) {
                    xs.at(r, c) = tr.feat_s[c];
                    xps.at(r, c) = fb[c];
                }
                for (int c = 0; c < goal_dim; ++c) {
                    xs.at(r, feat_dim + c) = tr.z_g[c];
                    xps.at(r, feat_dim + c) = tr.z_g[c];
                }
            }
            // double-Q target: online picks the action, target scores it;
            // episodes end on a time limit, so bootstrap through the end
            Mat q_next_online = nn::forward(pol.online, xps);
            Mat q_next_target = nn::forward(pol.target, xps);
            std::vector<double> targets(b);
            for (int r = 0; r < b; ++r) {
                int best = 0;
                for (int a = 1; a < pol.actions; ++a)
                    if (q_next_online.at(r, a) > q_next_online.at(r, best))
                        best = a;
                targets[r] = base[r] + disc[r] * q_next_target.at(r, best);
            }
            nn::Grads grads;
            grads.init_like(pol.online);
            const double l = q_loss(pol.online, xs, acts, targets, &grads);
            if (!std::isfinite(l))
                throw TrainingError(
                    "train_policy: non-finite Q loss at episode " +
                    std::to_string(ep) + " step " + std::to_string(g));
            nn::adam_step(opt, pol.online, grads);
            soft_update(pol.target, pol.online, acfg.tau);
            loss_sum += l;
            ++loss_n;
        }

        CurveRow row;
        row.episode = ep + 1;
        row.epsilon = eps;
        row.mean_q_loss = loss_n ? loss_sum / loss_n : 0.0;
        if (acfg.eval_every > 0 && (ep + 1) % acfg.eval_every == 0) {
            EvalStats st = run_eval();
            row.evaluated = true;
            row.eval_final_mean = st.final_mean;
            row.eval_final_median = st.final_median;
            row.eval_final_ci_low = st.final_ci_low;
            row.eval_final_ci_high = st.final_ci_high;
            row.eval_min_mean = st.min_mean;
        }
        res.curve.push_back(row);
    }
    res.final_eval = run_eval();
    res.buffer = std::move(buf);
    return res;
}

// --- Serialization ---

inline void save_policy(std::ostream& out, const QPolicy& p) {
    out << "qpolicy v1 " << p.obs_dim << ' ' << p.goal_dim << ' ' << p.actions
        << '\n';
    nn::save_net(out, p.online);
    nn::save_net(out, p.target);
}

inline QPolicy load_policy(std::istream& in,
                           const std::string& name = "<policy>") {
    io::TokenReader tr(in, name);
    tr.expect_literal("qpolicy");
    tr.expect_literal("v1");
    QPolicy p;
    p.obs_dim = static_cast<int>(tr.expect_int("obs dim"));
    p.goal_dim = static_cast<int>(tr.expect_int("goal dim"));
    p.actions = static_cast<int>(tr.expect_int("action count"));
    p.online = nn::load_net(tr);
    p.target = nn::load_net(tr);
    return p;
}

} // namespace wsc::rl
