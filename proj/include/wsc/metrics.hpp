#pragma once

// Quantitative probes: Pearson correlation reports for representations,
// interpretability probes for goal-conditioned policies, latent-vs-true
// distance alignment, and seed-sweep summaries with t-intervals.

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "wsc/errors.hpp"
#include "wsc/io.hpp"
#include "wsc/weakdata.hpp"

namespace wsc::metrics {

inline double pearson(const std::vector<double>& xs,
                      const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw UsageError("pearson: length mismatch");
    const size_t n = xs.size();
    if (n < 2) throw UsageError("pearson: need at least two points");
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double dx = xs[i] - mx, dy = ys[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw UsageError("pearson: correlation undefined for constant input");
    return sxy / std::sqrt(sxx * syy);
}

inline std::optional<double> try_pearson(const std::vector<double>& xs,
                                         const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw UsageError("pearson: length mismatch");
    if (xs.size() < 2) return std::nullopt;
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= xs.size();
    my /= ys.size();
    double sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return pearson(xs, ys);
}

// --- Correlation reports (factor x latent-dimension) ---

enum class Pairing { diagonal, best_match };

inline const char* pairing_name(Pairing p) {
    return p == Pairing::diagonal ? "diagonal" : "best_match";
}

struct CorrelationReport {
    Pairing pairing = Pairing::diagonal;
    std::vector<std::string> factor_names;
    int n_factors = 0;
    int n_latent = 0;
    std::vector<std::vector<std::optional<double>>> r; // [factor][latent]
    std::vector<int> chosen_dim;                       // per factor, -1 if none
    std::vector<std::optional<double>> factor_r;       // signed r at chosen dim

    std::optional<double> mean_abs_r(const std::vector<int>& factor_idx) const {
        double sum = 0.0;
        int n = 0;
        for (int k : factor_idx) {
            if (!factor_r[k]) return std::nullopt;
            sum += std::fabs(*factor_r[k]);
            ++n;
        }
        if (n == 0) return std::nullopt;
        return sum / n;
    }
};

using EncodeFn =
    std::function<std::vector<double>(const std::vector<double>& obs)>;

// Correlates every ground-truth factor with every latent dimension of the
// encoder. Diagonal pairing is for rank-aligned representations (factor k vs
// latent k); best_match picks the argmax-|r| dimension per factor.
inline CorrelationReport disentanglement_report(const EncodeFn& encode,
                                                const data::WeakDataset& d,
                                                Pairing pairing) {
    const int k = d.env.factor_count();
    const int m = d.m();
    if (m < 2) throw UsageError("disentanglement_report: need M >= 2");
    std::vector<double> z0 = encode(d.obs.row_vec(0));
    const int l = static_cast<int>(z0.size());
    Mat z(m, l);
    std::copy(z0.begin(), z0.end(), z.row(0));
    for (int r = 1; r < m; ++r) {
        std::vector<double> zr = encode(d.obs.row_vec(r));
        if (static_cast<int>(zr.size()) != l)
            throw UsageError("disentanglement_report: ragged encoder output");
        std::copy(zr.begin(), zr.end(), z.row(r));
    }

    CorrelationReport rep;
    rep.pairing = pairing;
    rep.n_factors = k;
    rep.n_latent = l;
    for (const auto& s : d.env.specs) rep.factor_names.push_back(s.name);
    rep.r.assign(k, std::vector<std::optional<double>>(l));
    rep.chosen_dim.assign(k, -1);
    rep.factor_r.assign(k, std::nullopt);

    std::vector<double> fcol(m), zcol(m);
    for (int fk = 0; fk < k; ++fk) {
        for (int r = 0; r < m; ++r) fcol[r] = d.factors.at(r, fk);
        for (int lz = 0; lz < l; ++lz) {
            for (int r = 0; r < m; ++r) zcol[r] = z.at(r, lz);
            rep.r[fk][lz] = try_pearson(fcol, zcol);
        }
        if (pairing == Pairing::diagonal) {
            if (fk < l && rep.r[fk][fk]) {
                rep.chosen_dim[fk] = fk;
                rep.factor_r[fk] = rep.r[fk][fk];
            }
        } else {
            double best = -1.0;
            for (int lz = 0; lz < l; ++lz)
                if (rep.r[fk][lz] && std::fabs(*rep.r[fk][lz]) > best) {
                    best = std::fabs(*rep.r[fk][lz]);
                    rep.chosen_dim[fk] = lz;
                    rep.factor_r[fk] = rep.r[fk][lz];
                }
        }
    }
    return rep;
}

inline std::string to_csv(const CorrelationReport& rep) {
    std::ostringstream out;
    out << "factor,latent,r,defined,chosen\n";
    for (int k = 0; k < rep.n_factors; ++k)
        for (int l = 0; l < rep.n_latent; ++l) {
            out << rep.factor_names[k] << ',' << l << ',';
            if (rep.r[k][l]) out << *rep.r[k][l];
            else out << "nan";
            out << ',' << (rep.r[k][l] ? 1 : 0) << ','
                << (rep.chosen_dim[k] == l ? 1 : 0) << '\n';
        }
    return out.str();
}

// --- Interpretability probe ---

// One probe rollout: the swept goal coordinates and the factor trajectory.
struct ProbeTrajectory {
    std::vector<double> coords;              // one value per swept axis
    std::vector<std::vector<double>> states; // factor vectors, reset..final
};

struct ProbeReport {
    std::vector<int> factor_idx;              // probed (relevant) factors
    std::vector<std::optional<double>> r;     // per axis; nullopt = skipped
    std::vector<bool> degenerate;             // axis skipped (empty range)
    std::vector<ProbeTrajectory> trajectories;
};

// run(coords) must reset the environment to its canonical start, build the
// goal from the axis coordinates, run the greedy policy to the horizon, and
// return the factor trajectory.
using ProbeEpisodeFn = std::function<std::vector<std::vector<double>>(
    const std::vector<double>& coords)>;

inline ProbeReport interpretability_probe(
    const std::vector<int>& factor_idx,
    const std::vector<std::pair<double, double>>& axis_bounds, int grid_n,
    const ProbeEpisodeFn& run) {
    const int n_axes = static_cast<int>(factor_idx.size());
    if (n_axes == 0) throw UsageError("interpretability_probe: no axes");
    if (axis_bounds.size() != factor_idx.size())
        throw UsageError("interpretability_probe: bounds/axes mismatch");
    if (grid_n < 2) throw UsageError("interpretability_probe: grid_n >= 2");

    ProbeReport rep;
    rep.factor_idx = factor_idx;
    rep.degenerate.assign(n_axes, false);
    for (int a = 0; a < n_axes; ++a)
        if (!(axis_bounds[a].second - axis_bounds[a].first > 1e-12))
            rep.degenerate[a] = true;

    std::vector<int> live;
    for (int a = 0; a < n_axes; ++a)
        if (!rep.degenerate[a]) live.push_back(a);

    long cells = 1;
    for (size_t i = 0; i < live.size(); ++i) cells *= grid_n;

    for (long cell = 0; cell < cells; ++cell) {
        std::vector<double> coords(n_axes);
        long rest = cell;
        for (int a = 0; a < n_axes; ++a) {
            const auto [lo, hi] = axis_bounds[a];
            if (rep.degenerate[a]) {
                coords[a] = 0.5 * (lo + hi);
                continue;
            }
            const long idx = rest % grid_n;
            rest /= grid_n;
            coords[a] = lo + (hi - lo) * idx / (grid_n - 1);
        }
        ProbeTrajectory t;
        t.coords = coords;
        t.states = run(coords);
        if (t.states.empty())
            throw UsageError("interpretability_probe: empty rollout");
        rep.trajectories.push_back(std::move(t));
    }

    rep.r.assign(n_axes, std::nullopt);
    for (int a = 0; a < n_axes; ++a) {
        if (rep.degenerate[a]) continue;
        std::vector<double> goal_coord, final_factor;
        for (const auto& t : rep.trajectories) {
            goal_coord.push_back(t.coords[a]);
            final_factor.push_back(t.states.back()[factor_idx[a]]);
        }
        rep.r[a] = try_pearson(goal_coord, final_factor);
    }
    return rep;
}

inline std::string probe_trajectories_csv(const ProbeReport& rep) {
    std::ostringstream out;
    out << "episode,step";
    for (size_t a = 0; a < rep.factor_idx.size(); ++a) out << ",goal_coord" << a;
    out << ",factors\n";
    for (size_t e = 0; e < rep.trajectories.size(); ++e) {
        const auto& t = rep.trajectories[e];
        for (size_t s = 0; s < t.states.size(); ++s) {
            out << e << ',' << s;
            for (double c : t.coords) out << ',' << c;
            out << ',';
            for (size_t k = 0; k < t.states[s].size(); ++k)
                out << (k ? ";" : "") << t.states[s][k];
            out << '\n';
        }
    }
    return out.str();
}

// --- Latent-vs-true distance alignment ---

struct AlignmentReport {
    std::optional<double> r;
    int n = 0;
};

inline AlignmentReport distance_alignment(const std::vector<double>& latent_dist,
                                          const std::vector<double>& true_dist) {
    if (latent_dist.size() != true_dist.size())
        throw UsageError("distance_alignment: length mismatch");
    AlignmentReport rep;
    rep.n = static_cast<int>(latent_dist.size());
    rep.r = try_pearson(latent_dist, true_dist);
    return rep;
}

// --- Seed-sweep summaries ---

struct SweepInput {
    std::string setting;
    std::string metric;
    std::vector<double> values; // one per seed
};

struct SweepRow {
    std::string setting;
    std::string metric;
    double mean = 0.0;
    std::optional<double> ci_half; // nullopt: single seed, CI omitted
    int n_seeds = 0;
};

// two-sided 95% Student-t quantiles by degrees of freedom
inline double t_quantile_975(int dof) {
    static const double table[] = {
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
        2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
        2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
    if (dof < 1) throw UsageError("t_quantile: dof must be >= 1");
    if (dof <= 30) return table[dof - 1];
    return 1.96;
}

inline std::vector<SweepRow> sweep_summary(const std::vector<SweepInput>& inputs) {
    if (inputs.empty()) throw UsageError("sweep_summary: no settings");
    std::vector<SweepRow> rows;
    for (const auto& in : inputs) {
        if (in.values.empty())
            throw UsageError("sweep_summary: empty value list for " + in.setting);
        SweepRow row;
        row.setting = in.setting;
        row.metric = in.metric;
        row.n_seeds = static_cast<int>(in.values.size());
        double sum = 0.0;
        for (double v : in.values) sum += v;
        row.mean = sum / row.n_seeds;
        if (row.n_seeds >= 2) {
            double ss = 0.0;
            for (double v : in.values) ss += (v - row.mean) * (v - row.mean);
            const double sd = std::sqrt(ss / (row.n_seeds - 1));
            row.ci_half = t_quantile_975(row.n_seeds - 1) * sd /
                          std::sqrt(static_cast<double>(row.n_seeds));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    out << "setting,metric,mean,ci_half,n_seeds,ci_defined\n";
    for (const auto& r : rows) {
        out << r.setting << ',' << r.metric << ',' << r.mean << ',';
        if (r.ci_half) out << *r.ci_half;
        else out << "nan";
        out << ',' << r.n_seeds << ',' << (r.ci_half ? 1 : 0) << '\n';
    }
    return out.str();
}

} // namespace wsc::metrics
