#pragma once

// Factor-based environments (Push-n, Pickup, Door) with feasibility
// correction, nuisance factors and a fixed smooth observation mixer standing
// in for an image renderer. All dynamics are deterministic value-type code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "wsc/errors.hpp"
#include "wsc/mat.hpp"
#include "wsc/rng.hpp"

namespace wsc::env {

struct FactorSpec {
    std::string name;
    double low = -1.0;
    double high = 1.0;
    bool relevant = false; // member of the user-specified index set
    bool nuisance = false; // uncontrollable, resampled at episode start
};

enum class Family { push, pickup, door };

// Observation function: s = tanh(scale * A * normalize(f)) with A having
// orthonormal columns. Injective on the factor box, smooth, and invertible
// only if you know A — a stand-in for an unknown renderer.
struct Mixer {
    std::uint64_t seed = 0;
    int out_dim = 0; // D
    double scale = 0.8;
    Mat a; // D x K, orthonormal columns
};

struct EnvConfig {
    std::string name;
    Family family = Family::push;
    int n_objects = 1; // push only
    std::vector<FactorSpec> specs;
    int horizon = 50;
    double step_size = 0.15;
    double contact_radius = 0.2;
    int action_count = 9;
    Mixer mixer;

    int factor_count() const { return static_cast<int>(specs.size()); }

    std::vector<int> relevant_indices() const {
        std::vector<int> idx;
        for (int k = 0; k < factor_count(); ++k)
            if (specs[k].relevant) idx.push_back(k);
        return idx;
    }
};

struct EnvState {
    std::vector<double> factors;
    int step_index = 0;
    bool gripped = false; // pickup only
};

// --- Mixer ---

inline Mixer make_mixer(int factor_count, std::uint64_t seed, int out_dim = 0,
                        double scale = 0.8) {
    if (out_dim == 0) out_dim = 2 * factor_count;
    if (out_dim < factor_count)
        throw ConfigError("mixer out_dim must be >= factor count");
    if (!(scale > 0.0 && scale < 1.0))
        throw ConfigError("mixer scale must be in (0,1)");
    Mixer m;
    m.seed = seed;
    m.out_dim = out_dim;
    m.scale = scale;
    m.a = Mat(out_dim, factor_count);
    Rng rng(derive_seed(seed, 0x6d69786572ull)); // "mixer"
    // Gram-Schmidt over Gaussian columns
    for (int k = 0; k < factor_count; ++k) {
        std::vector<double> col(out_dim);
        for (;;) {
            for (auto& v : col) v = rng.normal();
            for (int j = 0; j < k; ++j) {
                double dot = 0.0;
                for (int d = 0; d < out_dim; ++d) dot += col[d] * m.a.at(d, j);
                for (int d = 0; d < out_dim; ++d) col[d] -= dot * m.a.at(d, j);
            }
            double norm = 0.0;
            for (double v : col) norm += v * v;
            norm = std::sqrt(norm);
            if (norm > 1e-6) {
                for (int d = 0; d < out_dim; ++d) m.a.at(d, k) = col[d] / norm;
                break;
            }
        }
    }
    return m;
}

inline double normalize_factor(const FactorSpec& s, double v) {
    return 2.0 * (v - s.low) / (s.high - s.low) - 1.0;
}

inline std::vector<double> normalize_factors(const EnvConfig& cfg,
                                             const std::vector<double>& f) {
    std::vector<double> n(f.size());
    for (size_t k = 0; k < f.size(); ++k)
        n[k] = normalize_factor(cfg.specs[k], f[k]);
    return n;
}

inline std::vector<double> observe(const std::vector<double>& f,
                                   const EnvConfig& cfg) {
    const Mixer& m = cfg.mixer;
    if (static_cast<int>(f.size()) != cfg.factor_count() ||
        m.a.cols != cfg.factor_count())
        throw ConfigError("observe: factor/mixer dimension mismatch");
    std::vector<double> n = normalize_factors(cfg, f);
    std::vector<double> s(m.out_dim);
    for (int d = 0; d < m.out_dim; ++d) {
        double y = 0.0;
        for (int k = 0; k < m.a.cols; ++k) y += m.a.at(d, k) * n[k];
        s[d] = std::tanh(m.scale * y);
    }
    return s;
}

// --- Factor-layout helpers ---

inline int push_obj_x(int i) { return 2 + 2 * i; }
inline int push_obj_y(int i) { return 3 + 2 * i; }

constexpr int kPickupHandY = 0, kPickupHandZ = 1, kPickupObjY = 2, kPickupObjZ = 3;
constexpr double kGripFractionOfRadius = 0.5; // grip succeeds inside r/2
constexpr double kFallPerStep = 0.2;
constexpr double kDoorStep = 0.05;

// --- Feasibility ---

inline double obj_pair_dist(const std::vector<double>& f, int i, int j) {
    const double dx = f[push_obj_x(i)] - f[push_obj_x(j)];
    const double dy = f[push_obj_y(i)] - f[push_obj_y(j)];
    return std::sqrt(dx * dx + dy * dy);
}

inline void clip_to_bounds(const EnvConfig& cfg, std::vector<double>& f) {
    for (int k = 0; k < cfg.factor_count(); ++k)
        f[k] = std::clamp(f[k], cfg.specs[k].low, cfg.specs[k].high);
}

inline bool in_bounds(const EnvConfig& cfg, const std::vector<double>& f,
                      double tol = 1e-9) {
    for (int k = 0; k < cfg.factor_count(); ++k)
        if (f[k] < cfg.specs[k].low - tol || f[k] > cfg.specs[k].high + tol)
            return false;
    return true;
}

// The standing feasibility predicate preserved by step and project_feasible.
// (Pickup gravity acts gradually in step, so obj_z > 0 while ungripped is a
// legal transient; the static projection still snaps it to the ground.)
inline bool feasible(const EnvConfig& cfg, const std::vector<double>& f,
                     double tol = 1e-9) {
    if (!in_bounds(cfg, f, tol)) return false;
    if (cfg.family == Family::push) {
        for (int i = 0; i < cfg.n_objects; ++i)
            for (int j = i + 1; j < cfg.n_objects; ++j)
                if (obj_pair_dist(f, i, j) < 2.0 * cfg.contact_radius - tol)
                    return false;
    }
    return true;
}

namespace detail {

// Separate every overlapping object pair symmetrically along its separation
// axis; exact ties break toward lower index moving in -x. Iterates with bound
// clipping until stable.
inline void separate_push_objects(const EnvConfig& cfg, std::vector<double>& f) {
    const double min_d = 2.0 * cfg.contact_radius;
    for (int iter = 0; iter < 64; ++iter) {
        bool moved = false;
        for (int i = 0; i < cfg.n_objects; ++i) {
            for (int j = i + 1; j < cfg.n_objects; ++j) {
                const double d = obj_pair_dist(f, i, j);
                if (d >= min_d - 1e-12) continue;
                double ax, ay;
                if (d < 1e-12) {
                    ax = 1.0; // tie: push apart along x
                    ay = 0.0;
                } else {
                    ax = (f[push_obj_x(j)] - f[push_obj_x(i)]) / d;
                    ay = (f[push_obj_y(j)] - f[push_obj_y(i)]) / d;
                }
                const double shift = (min_d - d) / 2.0;
                f[push_obj_x(i)] -= shift * ax;
                f[push_obj_y(i)] -= shift * ay;
                f[push_obj_x(j)] += shift * ax;
                f[push_obj_y(j)] += shift * ay;
                moved = true;
            }
        }
        if (!moved) break;
        // keep objects in the box; clipping may reintroduce an overlap, so loop
        for (int i = 0; i < cfg.n_objects; ++i) {
            const int xi = push_obj_x(i), yi = push_obj_y(i);
            f[xi] = std::clamp(f[xi], cfg.specs[xi].low, cfg.specs[xi].high);
            f[yi] = std::clamp(f[yi], cfg.specs[yi].low, cfg.specs[yi].high);
        }
    }
}

} // namespace detail

inline std::vector<double> project_feasible(const EnvConfig& cfg,
                                            std::vector<double> f) {
    clip_to_bounds(cfg, f);
    switch (cfg.family) {
        case Family::push:
            detail::separate_push_objects(cfg, f);
            break;
        case Family::pickup: {
            // ungripped objects rest on the ground unless held at the gripper
            const bool at_hand = f[kPickupObjY] == f[kPickupHandY] &&
                                 f[kPickupObjZ] == f[kPickupHandZ];
            if (!at_hand) f[kPickupObjZ] = 0.0;
            break;
        }
        case Family::door:
            break;
    }
    return f;
}

inline std::vector<double> sample_feasible_factors(const EnvConfig& cfg, Rng& rng) {
    std::vector<double> f(cfg.factor_count());
    for (int k = 0; k < cfg.factor_count(); ++k)
        f[k] = rng.uniform(cfg.specs[k].low, cfg.specs[k].high);
    if (cfg.family == Family::pickup) {
        if (rng.uniform() < 0.8) {
            f[kPickupObjZ] = 0.0; // on the ground
        } else {
            f[kPickupObjY] = f[kPickupHandY]; // at the gripper
            f[kPickupObjZ] = f[kPickupHandZ];
        }
    }
    return project_feasible(cfg, std::move(f));
}

// --- Episode dynamics ---

inline EnvState reset(const EnvConfig& cfg, Rng& rng) {
    EnvState st;
    st.factors.assign(cfg.factor_count(), 0.0);
    switch (cfg.family) {
        case Family::push:
            st.factors[0] = 0.0; // hand
            st.factors[1] = 0.0;
            for (int i = 0; i < cfg.n_objects; ++i) {
                st.factors[push_obj_x(i)] =
                    (i - (cfg.n_objects - 1) / 2.0) * 0.6;
                st.factors[push_obj_y(i)] = 0.5;
            }
            break;
        case Family::pickup:
            st.factors[kPickupHandY] = 0.0;
            st.factors[kPickupHandZ] = 0.5;
            st.factors[kPickupObjY] = 0.4;
            st.factors[kPickupObjZ] = 0.0;
            break;
        case Family::door:
            st.factors[0] = 0.0;
            break;
    }
    for (int k = 0; k < cfg.factor_count(); ++k)
        if (cfg.specs[k].nuisance)
            st.factors[k] = rng.uniform(cfg.specs[k].low, cfg.specs[k].high);
    return st;
}

inline EnvState step(const EnvConfig& cfg, EnvState st, int action) {
    if (action < 0 || action >= cfg.action_count)
        throw UsageError("step: action out of range");
    if (st.step_index >= cfg.horizon)
        throw UsageError("step: episode already at horizon");
    std::vector<double>& f = st.factors;
    const double delta = cfg.step_size;
    const double r = cfg.contact_radius;

    switch (cfg.family) {
        case Family::push: {
            // 9 actions: (dx,dy) over {-δ,0,+δ}²; index = 3*(ix)+(iy)
            const int ix = action / 3, iy = action % 3;
            const double dx = (ix - 1) * delta, dy = (iy - 1) * delta;
            f[0] = std::clamp(f[0] + dx, cfg.specs[0].low, cfg.specs[0].high);
            f[1] = std::clamp(f[1] + dy, cfg.specs[1].low, cfg.specs[1].high);
            // contact: push intruding objects outward to distance exactly r
            for (int i = 0; i < cfg.n_objects; ++i) {
                const int xi = push_obj_x(i), yi = push_obj_y(i);
                const double ox = f[xi] - f[0], oy = f[yi] - f[1];
                const double d = std::sqrt(ox * ox + oy * oy);
                if (d >= r) continue;
                double ax = 1.0, ay = 0.0; // hand exactly on object: push +x
                if (d > 1e-12) {
                    ax = ox / d;
                    ay = oy / d;
                }
                f[xi] = f[0] + r * ax;
                f[yi] = f[1] + r * ay;
                f[xi] = std::clamp(f[xi], cfg.specs[xi].low, cfg.specs[xi].high);
                f[yi] = std::clamp(f[yi], cfg.specs[yi].low, cfg.specs[yi].high);
            }
            detail::separate_push_objects(cfg, f);
            break;
        }
        case Family::pickup: {
            // 5 actions: +y, -y, +z, -z, toggle grip
            double dy = 0.0, dz = 0.0;
            bool toggle = false;
            switch (action) {
                case 0: dy = delta; break;
                case 1: dy = -delta; break;
                case 2: dz = delta; break;
                case 3: dz = -delta; break;
                case 4: toggle = true; break;
            }
            f[kPickupHandY] = std::clamp(f[kPickupHandY] + dy,
                                         cfg.specs[kPickupHandY].low,
                                         cfg.specs[kPickupHandY].high);
            f[kPickupHandZ] = std::clamp(f[kPickupHandZ] + dz,
                                         cfg.specs[kPickupHandZ].low,
                                         cfg.specs[kPickupHandZ].high);
            if (toggle) {
                if (st.gripped) {
                    st.gripped = false;
                } else {
                    const double gy = f[kPickupObjY] - f[kPickupHandY];
                    const double gz = f[kPickupObjZ] - f[kPickupHandZ];
                    if (std::sqrt(gy * gy + gz * gz) < r * kGripFractionOfRadius) {
                        st.gripped = true;
                        f[kPickupObjY] = f[kPickupHandY];
                        f[kPickupObjZ] = f[kPickupHandZ];
                    }
                }
            }
            if (st.gripped) {
                f[kPickupObjY] = f[kPickupHandY];
                f[kPickupObjZ] = f[kPickupHandZ];
            } else {
                f[kPickupObjZ] -= std::min(f[kPickupObjZ], kFallPerStep);
            }
            break;
        }
        case Family::door: {
            // 3 actions: open, close, noop
            const double d =
                action == 0 ? kDoorStep : (action == 1 ? -kDoorStep : 0.0);
            f[0] = std::clamp(f[0] + d, cfg.specs[0].low, cfg.specs[0].high);
            break;
        }
    }
    st.step_index += 1;
    return st;
}

inline double true_goal_distance(const EnvConfig& cfg,
                                 const std::vector<double>& f,
                                 const std::vector<double>& f_goal) {
    if (f.size() != f_goal.size() ||
        static_cast<int>(f.size()) != cfg.factor_count())
        throw UsageError("true_goal_distance: factor size mismatch");
    double s = 0.0;
    for (int k : cfg.relevant_indices()) {
        const double d = f[k] - f_goal[k];
        s += d * d;
    }
    return std::sqrt(s);
}

// --- Environment catalog ---

inline EnvConfig make_env(const std::string& name, std::uint64_t mixer_seed,
                          int obs_dim = 0, double obs_scale = 0.8) {
    EnvConfig cfg;
    cfg.name = name;

    auto pos = [](const std::string& n, bool rel = false) {
        return FactorSpec{n, -1.0, 1.0, rel, false};
    };
    auto unit = [](const std::string& n, bool rel = false) {
        return FactorSpec{n, 0.0, 1.0, rel, false};
    };
    auto nuis = [](const std::string& n) {
        return FactorSpec{n, 0.0, 1.0, false, true};
    };

    auto push_base = [&](int n, bool lights) {
        cfg.family = Family::push;
        cfg.n_objects = n;
        cfg.action_count = 9;
        cfg.horizon = 50;
        cfg.specs = {pos("hand_x"), pos("hand_y")};
        if (n == 1) {
            cfg.specs.push_back(pos("obj_x", true));
            cfg.specs.push_back(pos("obj_y", true));
        } else {
            for (int i = 0; i < n; ++i) {
                const std::string b = "obj" + std::to_string(i + 1);
                cfg.specs.push_back(pos(b + "_x", i == 0));
                cfg.specs.push_back(pos(b + "_y", i == 0));
            }
        }
        if (lights) cfg.specs.push_back(nuis("light"));
    };
    auto pickup_base = [&](bool lights, bool colors) {
        cfg.family = Family::pickup;
        cfg.action_count = 5;
        cfg.horizon = 50;
        cfg.specs = {pos("hand_y"), unit("hand_z"), pos("obj_y", true),
                     unit("obj_z", true)};
        if (lights) cfg.specs.push_back(nuis("light"));
        if (colors) {
            cfg.specs.push_back(nuis("table_color"));
            cfg.specs.push_back(nuis("obj_color"));
        }
    };
    auto door_base = [&](bool lights) {
        cfg.family = Family::door;
        cfg.action_count = 3;
        cfg.horizon = 100;
        cfg.specs = {unit("door_angle", true)};
        if (lights) cfg.specs.push_back(nuis("light"));
    };

    if (name == "push1") push_base(1, false);
    else if (name == "push2") push_base(2, false);
    else if (name == "push3") push_base(3, false);
    else if (name == "pushlights1") push_base(1, true);
    else if (name == "pushlights2") push_base(2, true);
    else if (name == "pushlights3") push_base(3, true);
    else if (name == "pickup") pickup_base(false, false);
    else if (name == "pickuplights") pickup_base(true, false);
    else if (name == "pickupcolors") pickup_base(false, true);
    else if (name == "pickuplightscolors") pickup_base(true, true);
    else if (name == "door") door_base(false);
    else if (name == "doorlights") door_base(true);
    else throw ConfigError("unknown environment: " + name);

    cfg.mixer = make_mixer(cfg.factor_count(), mixer_seed, obs_dim, obs_scale);
    return cfg;
}

inline const std::vector<std::string>& env_names() {
    static const std::vector<std::string> names = {
        "push1", "push2", "push3", "pushlights1", "pushlights2", "pushlights3",
        "pickup", "pickuplights", "pickupcolors", "pickuplightscolors",
        "door", "doorlights"};
    return names;
}

} // namespace wsc::env
