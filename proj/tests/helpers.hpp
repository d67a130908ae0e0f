#pragma once

// Shared oracles for the test suite. The finite-difference checker here is the
// ground truth that every analytic gradient in the library is held against.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "wsc/net.hpp"

namespace testutil {

// Central finite differences against analytic gradients.
// loss() must re-evaluate the scalar objective from current parameter values.
// Returns the worst relative error; callers assert it <= tol.
inline double fd_worst_rel_error(const std::function<double()>& loss,
                                 const std::vector<double*>& params,
                                 const std::vector<double>& analytic,
                                 double h = 1e-5) {
    double worst = 0.0;
    for (size_t i = 0; i < params.size(); ++i) {
        double& p = *params[i];
        const double saved = p;
        p = saved + h;
        const double lp = loss();
        p = saved - h;
        const double lm = loss();
        p = saved;
        const double fd = (lp - lm) / (2.0 * h);
        const double a = analytic[i];
        const double denom = std::max({std::fabs(fd), std::fabs(a), 1e-6});
        worst = std::max(worst, std::fabs(fd - a) / denom);
    }
    return worst;
}

// Smallest |pre-activation| over all rectifier units in a cached forward pass.
// Finite differences step across the kink when this is ~h, so FD-checked
// instances must keep a healthy margin (resample the seed if not).
inline double min_rectifier_margin(const wsc::nn::DenseNet& net,
                                   const wsc::nn::Cache& cache) {
    using wsc::nn::Act;
    double margin = 1e300;
    for (size_t li = 0; li < net.layers.size(); ++li) {
        const Act a = net.layers[li].act;
        if (a != Act::relu && a != Act::leaky_relu) continue;
        const wsc::Mat& post = cache.post[li];
        for (double y : post.a) {
            const double pre = (a == Act::leaky_relu && y < 0.0)
                                   ? y / wsc::nn::kLeakySlope
                                   : y;
            margin = std::min(margin, std::fabs(pre));
        }
    }
    return margin;
}

// Kolmogorov-Smirnov statistic against Uniform[0,1]. The 1% critical value
// for large n is about 1.628 / sqrt(n).
inline double ks_statistic_uniform01(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        const double lo = static_cast<double>(i) / n;
        const double hi = static_cast<double>(i + 1) / n;
        d = std::max({d, std::fabs(xs[i] - lo), std::fabs(xs[i] - hi)});
    }
    return d;
}

inline std::string fresh_tmpdir(const std::string& stem) {
    namespace fs = std::filesystem;
    fs::path base = fs::temp_directory_path() / ("wsc_test_" + stem);
    std::error_code ec;
    fs::remove_all(base, ec);
    fs::create_directories(base);
    return base.string();
}

} // namespace testutil
