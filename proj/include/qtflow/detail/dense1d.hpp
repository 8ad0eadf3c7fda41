#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

// Small dense helpers shared by the modal preconditioners: the 1D reflected
// second-difference matrix, trapezoid weights, and an unblocked Cholesky.

namespace qtflow::detail {

inline std::vector<double> reflected_second_difference_matrix(int n4, double h4) {
    std::vector<double> s(static_cast<std::size_t>(n4) * n4, 0.0);
    const double ih2 = 1.0 / (h4 * h4);
    const int N = n4 - 1;
    s[0 * n4 + 0] = -2.0 * ih2;
    s[0 * n4 + 1] = 2.0 * ih2;
    s[static_cast<std::size_t>(N) * n4 + N] = -2.0 * ih2;
    s[static_cast<std::size_t>(N) * n4 + N - 1] = 2.0 * ih2;
    for (int j = 1; j < N; ++j) {
        s[static_cast<std::size_t>(j) * n4 + j - 1] = ih2;
        s[static_cast<std::size_t>(j) * n4 + j] = -2.0 * ih2;
        s[static_cast<std::size_t>(j) * n4 + j + 1] = ih2;
    }
    return s;
}

inline std::vector<double> trapezoid_weights(int n4, double h4) {
    std::vector<double> w(n4, h4);
    w.front() *= 0.5;
    w.back() *= 0.5;
    return w;
}

inline bool cholesky_factor(std::vector<double>& a, int n) {
    for (int k = 0; k < n; ++k) {
        double d = a[static_cast<std::size_t>(k) * n + k];
        for (int j = 0; j < k; ++j) {
            const double l = a[static_cast<std::size_t>(k) * n + j];
            d -= l * l;
        }
        if (!(d > 0.0)) return false;
        d = std::sqrt(d);
        a[static_cast<std::size_t>(k) * n + k] = d;
        for (int i = k + 1; i < n; ++i) {
            double v = a[static_cast<std::size_t>(i) * n + k];
            for (int j = 0; j < k; ++j)
                v -= a[static_cast<std::size_t>(i) * n + j] *
                     a[static_cast<std::size_t>(k) * n + j];
            a[static_cast<std::size_t>(i) * n + k] = v / d;
        }
    }
    return true;
}

inline void cholesky_solve(const std::vector<double>& l, int n, double* x) {
    for (int i = 0; i < n; ++i) {
        double v = x[i];
        for (int j = 0; j < i; ++j) v -= l[static_cast<std::size_t>(i) * n + j] * x[j];
        x[i] = v / l[static_cast<std::size_t>(i) * n + i];
    }
    for (int i = n - 1; i >= 0; --i) {
        double v = x[i];
        for (int j = i + 1; j < n; ++j) v -= l[static_cast<std::size_t>(j) * n + i] * x[j];
        x[i] = v / l[static_cast<std::size_t>(i) * n + i];
    }
}

// w4-weighted 1D biharmonic form pieces for one tangential eigenvalue rho:
// returns the full (S - rho I) matrix.
inline std::vector<double> shifted_operator(const std::vector<double>& s, int n4, double rho) {
    std::vector<double> d = s;
    for (int i = 0; i < n4; ++i) d[static_cast<std::size_t>(i) * n4 + i] -= rho;
    return d;
}

}  // namespace qtflow::detail
