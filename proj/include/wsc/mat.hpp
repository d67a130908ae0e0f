#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

#include "wsc/errors.hpp"

namespace wsc {

// Row-major dense matrix of doubles. Rows usually index batch samples.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }
    double* row(int r) { return a.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return a.data() + static_cast<size_t>(r) * cols; }

    static Mat from_row(const std::vector<double>& v) {
        Mat m(1, static_cast<int>(v.size()));
        m.a = v;
        return m;
    }

    std::vector<double> row_vec(int r) const {
        return std::vector<double>(row(r), row(r) + cols);
    }

    void fill(double v) { std::fill(a.begin(), a.end(), v); }
};

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline double l2sq(const double* x, const double* y, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        const double d = x[i] - y[i];
        s += d * d;
    }
    return s;
}

inline double l2sq(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw UsageError("l2sq: length mismatch");
    return l2sq(x.data(), y.data(), static_cast<int>(x.size()));
}

} // namespace wsc
