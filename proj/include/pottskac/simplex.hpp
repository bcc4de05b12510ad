#pragma once

// Density vectors on the unit simplex S_Q: the Q-vector of color fractions
// attached to a lattice site, a coarse cube, or a mean-field state.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace pottskac {

using Simplex = std::vector<double>;

inline Simplex uniform_simplex(int Q) {
    return Simplex(static_cast<std::size_t>(Q), 1.0 / Q);
}

// vertex e_q: all mass on color q (0-based)
inline Simplex vertex_simplex(int Q, int q) {
    Simplex v(static_cast<std::size_t>(Q), 0.0);
    v[static_cast<std::size_t>(q)] = 1.0;
    return v;
}

inline bool is_simplex(const Simplex& v, double tol = 1e-12) {
    double s = 0.0;
    for (double x : v) {
        if (!(x >= -tol)) return false;
        s += x;
    }
    return std::abs(s - 1.0) <= tol * static_cast<double>(v.size() + 1);
}

inline double dot(const Simplex& a, const Simplex& b) {
    double s = 0.0;
    for (std::size_t q = 0; q < a.size(); ++q) s += a[q] * b[q];
    return s;
}

inline double sup_dist(const Simplex& a, const Simplex& b) {
    double m = 0.0;
    for (std::size_t q = 0; q < a.size(); ++q)
        m = std::max(m, std::abs(a[q] - b[q]));
    return m;
}

inline double l1_dist(const Simplex& a, const Simplex& b) {
    double s = 0.0;
    for (std::size_t q = 0; q < a.size(); ++q) s += std::abs(a[q] - b[q]);
    return s;
}

inline double l2_dist_sq(const Simplex& a, const Simplex& b) {
    double s = 0.0;
    for (std::size_t q = 0; q < a.size(); ++q) {
        const double d = a[q] - b[q];
        s += d * d;
    }
    return s;
}

// sum_q v_q ln v_q with the 0 ln 0 = 0 convention
inline double xlogx_sum(const Simplex& v) {
    double s = 0.0;
    for (double x : v)
        if (x > 0.0) s += x * std::log(x);
    return s;
}

// relative entropy sum_q a_q ln(a_q/b_q); requires b_q > 0 wherever a_q > 0
inline double kl_divergence(const Simplex& a, const Simplex& b) {
    double s = 0.0;
    for (std::size_t q = 0; q < a.size(); ++q) {
        if (a[q] > 0.0) {
            if (!(b[q] > 0.0))
                throw std::domain_error("kl_divergence: zero reference mass");
            s += a[q] * std::log(a[q] / b[q]);
        }
    }
    return s;
}

} // namespace pottskac
