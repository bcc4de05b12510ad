#pragma once

// Mean-field Potts theory in closed form: free energy density phi, its
// gradient, the softmax response map g and its Jacobian, the ordered branch
// (rho_A, rho_B), the thresholds beta_0 < beta_c^mf < Q, and the free-energy
// difference between the ordered and disordered states.

#include <cmath>
#include <optional>
#include <stdexcept>

#include "simplex.hpp"

namespace pottskac {

struct MeanFieldParams {
    int Q;
    double beta;
    // Q = 2 has a continuous transition and sits outside the theorems; it is
    // allowed only when explicitly requested (oracle cross-checks).
    bool allow_off_theorem_q = false;

    MeanFieldParams(int Q_, double beta_, bool allow_q2 = false)
        : Q(Q_), beta(beta_), allow_off_theorem_q(allow_q2) {
        if (!(beta > 0.0)) throw std::invalid_argument("MeanFieldParams: beta must be > 0");
        if (Q < 2 || (Q == 2 && !allow_off_theorem_q))
            throw std::invalid_argument("MeanFieldParams: Q must be >= 3 (Q=2 needs the off-theorem flag)");
    }
};

// phi^mf(v) = -1/2 sum v_q^2 + (1/beta) sum v_q ln v_q, with 0 ln 0 = 0
inline double phi_mf(const Simplex& v, const MeanFieldParams& p) {
    double quad = 0.0;
    for (double x : v) quad += x * x;
    return -0.5 * quad + xlogx_sum(v) / p.beta;
}

// true derivative of phi; the constant offset in the printed constrained form
// is immaterial on the simplex tangent, see grad_phi_shifted below
inline Simplex grad_phi(const Simplex& v, const MeanFieldParams& p) {
    Simplex g(v.size());
    for (std::size_t q = 0; q < v.size(); ++q) {
        if (!(v[q] >= 1e-12))
            throw std::domain_error("grad_phi: component at simplex boundary");
        g[q] = -v[q] + (std::log(v[q]) + 1.0) / p.beta;
    }
    return g;
}

// shifted variant 1 - v_q + (1/beta)(ln v_q + 1): differs from grad_phi by a
// constant, hence has the same projection onto the simplex tangent
inline Simplex grad_phi_shifted(const Simplex& v, const MeanFieldParams& p) {
    Simplex g = grad_phi(v, p);
    for (double& x : g) x += 1.0;
    return g;
}

// g_q(v) = exp(beta v_q) / sum_p exp(beta v_p), stabilized by max-shift
inline Simplex g_map(const Simplex& v, const MeanFieldParams& p) {
    double m = v[0];
    for (double x : v) m = std::max(m, x);
    Simplex out(v.size());
    double z = 0.0;
    for (std::size_t q = 0; q < v.size(); ++q) {
        out[q] = std::exp(p.beta * (v[q] - m));
        z += out[q];
    }
    for (double& x : out) x /= z;
    return out;
}

// Jacobian of g: d g_q / d v_q' = beta g_q (delta_{qq'} - g_q')
inline std::vector<Simplex> g_jacobian(const Simplex& v, const MeanFieldParams& p) {
    const Simplex g = g_map(v, p);
    std::vector<Simplex> J(v.size(), Simplex(v.size()));
    for (std::size_t q = 0; q < v.size(); ++q)
        for (std::size_t r = 0; r < v.size(); ++r)
            J[q][r] = p.beta * g[q] * ((q == r ? 1.0 : 0.0) - g[r]);
    return J;
}

struct OrderedPair {
    double rho_A;
    double rho_B;

    Simplex as_simplex(int Q, int majority_color) const {
        Simplex v(static_cast<std::size_t>(Q), rho_B);
        v[static_cast<std::size_t>(majority_color)] = rho_A;
        return v;
    }
};

namespace detail {

// beta_tilde(rho_A): the inverse temperature at which (rho_A, rho_B) solves
// the ordered mean-field equation, with rho_B = (1-rho_A)/(Q-1)
inline double beta_tilde(double rho_A, int Q) {
    const double rho_B = (1.0 - rho_A) / (Q - 1);
    return (std::log(rho_A) - std::log(rho_B)) / (rho_A - rho_B);
}

// sign of beta_tilde's derivative: proportional to 1/(rho_A rho_B) - Q beta_tilde
inline double beta_tilde_slope_bracket(double rho_A, int Q) {
    const double rho_B = (1.0 - rho_A) / (Q - 1);
    return 1.0 / (rho_A * rho_B) - Q * beta_tilde(rho_A, Q);
}

} // namespace detail

// (beta_0, beta_c^mf): onset of the ordered branch and the first-order
// transition point 2(Q-1)/(Q-2) ln(Q-1)
inline std::pair<double, double> beta_thresholds(int Q) {
    if (Q < 3) throw std::invalid_argument("beta_thresholds: requires Q >= 3");
    const double beta_c = 2.0 * (Q - 1) / static_cast<double>(Q - 2) * std::log(static_cast<double>(Q - 1));
    // rho_0 = unique zero of the slope bracket in (1/Q, 1); beta_tilde is
    // strictly convex there so the bracket changes sign exactly once
    double lo = 1.0 / Q + 1e-12, hi = 1.0 - 1e-12;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (detail::beta_tilde_slope_bracket(mid, Q) < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    const double rho0 = 0.5 * (lo + hi);
    const double beta0 = detail::beta_tilde(rho0, Q);
    return {beta0, beta_c};
}

// stable ordered branch: the solution of beta_tilde(rho_A) = beta with
// rho_A in (rho_0, 1); none below beta_0
inline std::optional<OrderedPair> ordered_solution(const MeanFieldParams& p) {
    if (p.Q < 3) return std::nullopt;
    const auto [beta0, beta_c] = beta_thresholds(p.Q);
    (void)beta_c;
    if (!(p.beta > beta0)) return std::nullopt;
    // recover rho_0 as the bracket zero, then bisect beta_tilde = beta above it
    double lo = 1.0 / p.Q + 1e-12, hi = 1.0 - 1e-12;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (detail::beta_tilde_slope_bracket(mid, p.Q) < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    double a = 0.5 * (lo + hi);  // rho_0: beta_tilde increasing to the right
    double b = 1.0 - 1e-15;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (a + b);
        if (detail::beta_tilde(mid, p.Q) < p.beta)
            a = mid;
        else
            b = mid;
    }
    const double rho_A = 0.5 * (a + b);
    const double rho_B = (1.0 - rho_A) / (p.Q - 1);
    return OrderedPair{rho_A, rho_B};
}

// ordered free energy in closed form: -1/2 Q rho_A rho_B + ln(rho_A rho_B)/(2 beta)
inline double phi_ordered_closed_form(const OrderedPair& r, const MeanFieldParams& p) {
    return -0.5 * p.Q * r.rho_A * r.rho_B + std::log(r.rho_A * r.rho_B) / (2.0 * p.beta);
}

inline double phi_disordered_closed_form(const MeanFieldParams& p) {
    return -0.5 / p.Q - std::log(static_cast<double>(p.Q)) / p.beta;
}

// Delta phi = phi(ordered) - phi(disordered) and the slope d(beta Delta phi)/d beta
// = -(1 - Q rho_A)^2 / (2 Q (Q-1)); Delta phi vanishes at beta_c where
// Q^2 rho_A rho_B = 1
struct DeltaPhi {
    double value;
    double beta_weighted_slope;  // d(beta Delta phi)/d beta
    double slope;                // d(Delta phi)/d beta
};

inline std::optional<DeltaPhi> delta_phi_and_slope(const MeanFieldParams& p) {
    const auto ord = ordered_solution(p);
    if (!ord) return std::nullopt;
    const double prod = ord->rho_A * ord->rho_B;
    const double QQprod = p.Q * p.Q * prod;
    const double value = (1.0 - QQprod) / (2.0 * p.Q) + std::log(QQprod) / (2.0 * p.beta);
    const double t = 1.0 - p.Q * ord->rho_A;
    const double bw_slope = -t * t / (2.0 * p.Q * (p.Q - 1));
    return DeltaPhi{value, bw_slope, (bw_slope - value) / p.beta};
}

// d(phi_ord - phi_dis)/d beta at beta_c: -(Q-2)^2 / (2 Q (Q-1) beta_c)
inline double coexistence_slope(int Q) {
    const double beta_c = beta_thresholds(Q).second;
    return -static_cast<double>(Q - 2) * (Q - 2) / (2.0 * Q * (Q - 1) * beta_c);
}

enum class MinimizerKind { disordered_only, coexisting, ordered_only };

// Local minimizers of phi^mf and which of them are global.  For
// beta_0 < beta < Q there are Q+1 local minimizers (the uniform state and the
// Q permutations of the ordered pair); the global ones follow the sign of
// Delta phi with a 1e-12 coexistence window at beta_c.
struct MinimizerSet {
    int Q = 0;
    double beta = 0.0;
    MinimizerKind kind = MinimizerKind::disordered_only;
    std::optional<Simplex> disordered;
    std::optional<OrderedPair> ordered;
    bool disordered_is_global = false;
    bool ordered_is_global = false;
    double beta0 = 0.0;
    double beta_c = 0.0;

    std::vector<Simplex> ordered_vectors() const {
        std::vector<Simplex> out;
        if (ordered)
            for (int q = 0; q < Q; ++q) out.push_back(ordered->as_simplex(Q, q));
        return out;
    }

    std::vector<Simplex> local_minimizers() const {
        std::vector<Simplex> out;
        if (disordered) out.push_back(*disordered);
        auto ov = ordered_vectors();
        out.insert(out.end(), ov.begin(), ov.end());
        return out;
    }

    std::vector<Simplex> global_minimizers() const {
        std::vector<Simplex> out;
        if (disordered && disordered_is_global) out.push_back(*disordered);
        if (ordered && ordered_is_global) {
            auto ov = ordered_vectors();
            out.insert(out.end(), ov.begin(), ov.end());
        }
        return out;
    }
};

inline MinimizerSet minimizer_set(const MeanFieldParams& p) {
    MinimizerSet s;
    s.Q = p.Q;
    s.beta = p.beta;
    if (p.Q == 2) {
        // off-theorem: continuous transition at beta = 2, no first-order labels
        s.beta0 = 2.0;
        s.beta_c = 2.0;
        if (p.beta < 2.0) {
            s.kind = MinimizerKind::disordered_only;
            s.disordered = uniform_simplex(2);
            s.disordered_is_global = true;
        } else {
            s.kind = MinimizerKind::ordered_only;
            // symmetric pair rho_A + rho_B = 1 solving the Q=2 equation; the
            // branch touches the uniform state exactly at beta = 2
            double root = 0.5;
            if (p.beta > 2.0) {
                double a = 0.5, b = 1.0 - 1e-15;
                for (int it = 0; it < 200; ++it) {
                    const double mid = 0.5 * (a + b);
                    const double f = std::log(mid / (1.0 - mid)) - p.beta * (2.0 * mid - 1.0);
                    (f < 0.0 ? a : b) = mid;
                }
                root = 0.5 * (a + b);
            }
            s.ordered = OrderedPair{root, 1.0 - root};
            s.ordered_is_global = true;
        }
        return s;
    }
    const auto [beta0, beta_c] = beta_thresholds(p.Q);
    s.beta0 = beta0;
    s.beta_c = beta_c;
    const bool have_disordered = p.beta < p.Q;
    s.ordered = ordered_solution(p);
    if (have_disordered) s.disordered = uniform_simplex(p.Q);

    if (!s.ordered) {
        s.kind = MinimizerKind::disordered_only;
        s.disordered_is_global = true;
        return s;
    }
    if (!have_disordered) {
        s.kind = MinimizerKind::ordered_only;
        s.ordered_is_global = true;
        return s;
    }
    s.kind = MinimizerKind::coexisting;
    const auto dp = delta_phi_and_slope(p);
    if (std::abs(dp->value) <= 1e-12) {
        s.disordered_is_global = true;
        s.ordered_is_global = true;
    } else if (dp->value > 0.0) {
        s.disordered_is_global = true;  // ordered branch lies higher
    } else {
        s.ordered_is_global = true;
    }
    return s;
}

} // namespace pottskac
