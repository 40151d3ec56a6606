// Smooth plateau map: 1 on [0,1], 0 on [2, inf), built from the exponential
// transition bump chi(u) = h(2-u) / (h(2-u) + h(u-1)) with h(t) = e^{-1/t}.
// Derivatives of all orders are computed analytically (no differencing).
#ifndef STABFOL_PLATEAU_HPP
#define STABFOL_PLATEAU_HPP

#include <array>
#include <cmath>
#include <vector>

#include "stabfol/common.hpp"

namespace stabfol {

namespace detail {

// h^{(k)}(t) = e^{-1/t} Q_k(1/t) with Q_0 = 1 and Q_{k+1} = w^2 (Q_k - Q_k').
inline const std::vector<double>& h_poly(int k) {
    static std::vector<std::vector<double>> cache = {{1.0}};
    while (static_cast<int>(cache.size()) <= k) {
        const auto& Qk = cache.back();
        std::vector<double> next(Qk.size() + 2, 0.0);
        for (std::size_t i = 0; i < Qk.size(); ++i) {
            next[i + 2] += Qk[i];
            if (i + 1 < Qk.size()) next[i + 2] -= (i + 1) * Qk[i + 1];
        }
        cache.push_back(std::move(next));
    }
    return cache[k];
}

inline double h_derivative(double t, int k) {
    if (t <= 0.0) return 0.0;
    const double w = 1.0 / t;
    const auto& Q = h_poly(k);
    double acc = 0.0;
    for (std::size_t i = Q.size(); i-- > 0;) acc = acc * w + Q[i];
    return std::exp(-w) * acc;
}

inline double binomial(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

} // namespace detail

// Values chi(u), chi'(u), ..., chi^{(k_max)}(u). Finite everywhere, identically
// (1, 0, ...) on [0,1] and (0, 0, ...) on [2, inf).
inline std::vector<double> plateau_jet(double u, int k_max) {
    if (u < 0.0) throw std::invalid_argument("plateau_jet: u must be >= 0");
    std::vector<double> jet(k_max + 1, 0.0);
    if (u <= 1.0) {
        jet[0] = 1.0;
        return jet;
    }
    if (u >= 2.0) return jet;

    std::vector<double> a(k_max + 1), b(k_max + 1), D(k_max + 1);
    for (int k = 0; k <= k_max; ++k) {
        a[k] = (k % 2 == 0 ? 1.0 : -1.0) * detail::h_derivative(2.0 - u, k);
        b[k] = detail::h_derivative(u - 1.0, k);
        D[k] = a[k] + b[k];
    }
    // chi * D = a, solved order by order.
    for (int k = 0; k <= k_max; ++k) {
        double s = a[k];
        for (int j = 1; j <= k; ++j) s -= detail::binomial(k, j) * jet[k - j] * D[j];
        jet[k] = s / D[0];
    }
    return jet;
}

// max(1, sup |chi^{(k)}|), sampled densely on the transition interval with
// local refinement around the maximizer. Deterministic.
inline double plateau_derivative_sup(int k) {
    if (k == 0) return 1.0;
    static constexpr int kMaxOrder = 12;
    static const std::array<double, kMaxOrder + 1> table = [] {
        std::array<double, kMaxOrder + 1> sup{};
        sup[0] = 1.0;
        const double step = 1e-4;
        std::array<double, kMaxOrder + 1> best_u{};
        for (double u = 1.0; u <= 2.0 + 1e-12; u += step) {
            auto jet = plateau_jet(std::min(u, 2.0), kMaxOrder);
            for (int j = 1; j <= kMaxOrder; ++j) {
                if (std::abs(jet[j]) > sup[j]) {
                    sup[j] = std::abs(jet[j]);
                    best_u[j] = u;
                }
            }
        }
        for (int j = 1; j <= kMaxOrder; ++j) {
            double lo = std::max(1.0, best_u[j] - 2 * step);
            double hi = std::min(2.0, best_u[j] + 2 * step);
            for (int it = 0; it < 60; ++it) {
                double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
                double f1 = std::abs(plateau_jet(m1, j)[j]);
                double f2 = std::abs(plateau_jet(m2, j)[j]);
                if (f1 < f2) lo = m1; else hi = m2;
            }
            sup[j] = std::max({sup[j], std::abs(plateau_jet(0.5 * (lo + hi), j)[j]), 1.0});
        }
        return sup;
    }();
    if (k <= kMaxOrder) return table[k];
    throw std::invalid_argument("plateau_derivative_sup: order beyond precomputed table");
}

} // namespace stabfol

#endif
