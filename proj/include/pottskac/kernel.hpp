#pragma once

// Kac interaction J_gamma(x,y) = gamma^d J(gamma(x-y)) with the quartic bump
// base density J(r) = C_d (1-|r|^2)^2 on the unit ball.  Holds the lattice
// normalization sum, the displacement table, and the Lipschitz constants the
// coarse-graining error budgets are built from.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "geometry.hpp"

namespace pottskac {

namespace detail {

// 16-point Gauss-Legendre nodes/weights on [0,1]
inline const double* gl16_nodes() {
    static const double n[16] = {
        0.0052995325041750337, 0.0277124884633837046, 0.0671843988060841224,
        0.1222977958224984868, 0.1910618777986781147, 0.2709916111713863151,
        0.3591982246103705422, 0.4524937450811812866, 0.5475062549188187134,
        0.6408017753896294578, 0.7290083888286136849, 0.8089381222013218853,
        0.8777022041775015132, 0.9328156011939158776, 0.9722875115366162954,
        0.9947004674958249663};
    return n;
}
inline const double* gl16_weights() {
    static const double w[16] = {
        0.0135762297058770482, 0.0311267619693239469, 0.0475792558412463928,
        0.0623144856277669384, 0.0747979944082883680, 0.0845782596975012679,
        0.0913017075224617918, 0.0947253052275342510, 0.0947253052275342510,
        0.0913017075224617918, 0.0845782596975012679, 0.0747979944082883680,
        0.0623144856277669384, 0.0475792558412463928, 0.0311267619693239469,
        0.0135762297058770482};
    return w;
}

// integral of f over [0,1], composite 16-point Gauss-Legendre on `panels`
// equal panels; exact to ~1e-15 for the smooth radial profiles used here
template <typename F>
double integrate01(F&& f, int panels = 32) {
    const double* xs = gl16_nodes();
    const double* ws = gl16_weights();
    double total = 0.0;
    const double h = 1.0 / panels;
    for (int p = 0; p < panels; ++p) {
        const double a = p * h;
        double s = 0.0;
        for (int i = 0; i < 16; ++i) s += ws[i] * f(a + h * xs[i]);
        total += s * h;
    }
    return total;
}

} // namespace detail

class KacKernel {
public:
    KacKernel(double gamma, int dim) : gamma_(gamma), dim_(dim) {
        if (!(gamma > 0.0 && gamma < 1.0))
            throw std::invalid_argument("KacKernel: gamma must lie in (0,1)");
        if (dim < 1 || dim > 3)
            throw std::invalid_argument("KacKernel: dim must be 1..3");
        cd_norm_ = normalization_constant(dim);
        // |J'|(r) = C_d 4 r (1-r^2) peaks at r = 1/sqrt(3)
        grad_sup_ = cd_norm_ * 8.0 / (3.0 * std::sqrt(3.0));
        sup_ = cd_norm_;
        build_table();
    }

    double gamma() const { return gamma_; }
    int dim() const { return dim_; }

    // base density at radius r
    double base_density(double r) const {
        if (r >= 1.0) return 0.0;
        const double t = 1.0 - r * r;
        return cd_norm_ * t * t;
    }

    double base_sup() const { return sup_; }          // ||J||_inf
    double base_grad_sup() const { return grad_sup_; } // ||grad J||_inf

    // c_d = 2 * 3^d * sqrt(d) * ||grad J||_inf, the coarse-graining constant
    double cd_constant() const {
        double pow3 = 1.0;
        for (int k = 0; k < dim_; ++k) pow3 *= 3.0;
        return 2.0 * pow3 * std::sqrt(static_cast<double>(dim_)) * grad_sup_;
    }

    // J_gamma(x,y); zero beyond Euclidean distance 1/gamma
    double evaluate(const Site& x, const Site& y) const {
        return gamma_pow_d_ * base_density(gamma_ * euclid_norm(x, y));
    }

    // 𝔍_gamma = sum over j in Z^d of J_gamma(0,j), j = 0 included
    double lattice_normalization() const { return lattice_norm_; }

    // interaction range in sites: evaluate() vanishes past this sup distance
    int range() const { return range_; }

    // displacement table: all (dv, J) with J > 0, deterministic (sorted) order
    struct Displacement {
        Site dv;
        double value;
    };
    const std::vector<Displacement>& displacements() const { return table_; }

    // Eq. B.10 average of J_gamma(x, .) over the scale-ell cube with the given
    // corner.  The coarse bound needs ell within the interaction range.
    double coarse_average(const Site& x, const Site& cube_corner, int ell) const {
        if (static_cast<double>(ell) > 1.0 / gamma_)
            throw std::invalid_argument(
                "coarse_average: cube scale exceeds interaction range 1/gamma");
        const Box cube = cube_box(cube_corner, CubePartition(ell, dim_));
        double s = 0.0;
        for (const Site& y : cube.sites()) s += evaluate(x, y);
        return s / static_cast<double>(cube.volume());
    }

    // normalization C_d of the quartic bump; closed form for d = 2, quadrature
    // for the rest (checked against closed forms in the tests)
    static double normalization_constant(int dim) {
        if (dim == 2) return 3.0 / std::acos(-1.0);
        const double pi = std::acos(-1.0);
        double mass;
        if (dim == 1) {
            mass = 2.0 * detail::integrate01([](double r) {
                const double t = 1.0 - r * r;
                return t * t;
            });
        } else {
            mass = 4.0 * pi * detail::integrate01([](double r) {
                const double t = 1.0 - r * r;
                return r * r * t * t;
            });
        }
        return 1.0 / mass;
    }

private:
    void build_table() {
        gamma_pow_d_ = 1.0;
        for (int k = 0; k < dim_; ++k) gamma_pow_d_ *= gamma_;
        range_ = static_cast<int>(std::floor(1.0 / gamma_));
        const int R = range_;
        const std::int64_t per_dim = 2ll * R + 1;
        std::int64_t cells = 1;
        for (int k = 0; k < dim_; ++k) cells *= per_dim;
        if (cells > 20'000'000)
            throw std::invalid_argument("KacKernel: displacement table too large");
        const Site origin{0, 0, 0};
        for (int a = -R; a <= R; ++a)
            for (int b = (dim_ > 1 ? -R : 0); b <= (dim_ > 1 ? R : 0); ++b)
                for (int c = (dim_ > 2 ? -R : 0); c <= (dim_ > 2 ? R : 0); ++c) {
                    const Site dv{a, b, c};
                    const double v = evaluate(origin, dv);
                    if (v > 0.0) table_.push_back({dv, v});
                }
        std::sort(table_.begin(), table_.end(),
                  [](const Displacement& l, const Displacement& r) {
                      return l.dv < r.dv;
                  });
        lattice_norm_ = 0.0;
        for (const Displacement& t : table_) lattice_norm_ += t.value;
    }

    double gamma_;
    int dim_;
    double cd_norm_ = 0.0;
    double grad_sup_ = 0.0;
    double sup_ = 0.0;
    double gamma_pow_d_ = 1.0;
    double lattice_norm_ = 0.0;
    int range_ = 0;
    std::vector<Displacement> table_;
};

} // namespace pottskac
