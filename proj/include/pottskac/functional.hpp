#pragma once

// Coarse-grained free energy on cube profiles: lattice energy/entropy sums,
// the excess decomposition around the mean-field density, enumeration-based
// two-sided bounds linking partition functions to the functional, a damped
// relaxation minimizer, and boundary surface corrections.

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "coarse.hpp"
#include "geometry.hpp"
#include "kernel.hpp"
#include "meanfield.hpp"
#include "potts.hpp"
#include "simplex.hpp"

namespace pottskac {

// Region, kernel and frozen boundary assembled once for functional work.
// Boundary values are per-site simplexes; coverage of the full interaction
// collar is mandatory, periodic and free boundaries are not represented here.
class FunctionalContext {
public:
    FunctionalContext(KacKernel kernel, double beta, int Q, Region lambda, BoundaryProfile boundary,
                      int ell)
        : kernel_(std::move(kernel)), beta_(beta), Q_(Q), ell_(ell), lambda_(std::move(lambda)),
          boundary_(std::move(boundary)) {
        if (Q_ < 2) throw std::invalid_argument("FunctionalContext: Q must be >= 2");
        if (!(beta_ > 0.0)) throw std::invalid_argument("FunctionalContext: beta must be positive");
        if (ell_ < 2) throw std::invalid_argument("FunctionalContext: ell must exceed 1");
        if (!(ell_ * kernel_.gamma() < 1.0))
            throw std::invalid_argument("FunctionalContext: ell must stay below the kernel range");
        if (boundary_.is_periodic())
            throw std::invalid_argument("FunctionalContext: periodic boundaries not supported");
        if (boundary_.Q() != Q_) throw std::invalid_argument("FunctionalContext: boundary Q mismatch");
        if (lambda_.empty()) throw std::invalid_argument("FunctionalContext: empty region");

        const auto& sites = lambda_.sites();
        const std::size_t n = sites.size();
        const CubePartition part(ell_, lambda_.dim());

        for (const Site& s : sites) cube_corners_.push_back(cube_of(s, part));
        std::sort(cube_corners_.begin(), cube_corners_.end());
        cube_corners_.erase(std::unique(cube_corners_.begin(), cube_corners_.end()),
                            cube_corners_.end());
        cells_ = 1;
        for (int k = 0; k < lambda_.dim(); ++k) cells_ *= ell_;
        if (static_cast<std::int64_t>(n) != static_cast<std::int64_t>(cube_corners_.size()) * cells_)
            throw std::invalid_argument("FunctionalContext: region is not a union of full ell-cubes");

        cube_of_site_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const Site c = cube_of(sites[i], part);
            const auto it = std::lower_bound(cube_corners_.begin(), cube_corners_.end(), c);
            cube_of_site_[i] = static_cast<std::size_t>(it - cube_corners_.begin());
        }

        // in-region neighbor lists (i != j) and frozen collar contributions
        neighbors_.resize(n);
        cross_.resize(n);
        fields_.assign(n, Simplex(static_cast<std::size_t>(Q_), 0.0));
        for (std::size_t i = 0; i < n; ++i) {
            const Site& x = sites[i];
            for (const auto& disp : kernel_.displacements()) {
                if (disp.dv == Site{0, 0, 0}) continue;
                const Site y{x[0] + disp.dv[0], x[1] + disp.dv[1], x[2] + disp.dv[2]};
                if (lambda_.contains(y)) {
                    neighbors_[i].push_back({lambda_.index_of(y), disp.value});
                } else {
                    if (!boundary_.covers(y))
                        throw std::invalid_argument(
                            "FunctionalContext: boundary collar does not cover site (" +
                            std::to_string(y[0]) + "," + std::to_string(y[1]) + "," +
                            std::to_string(y[2]) + ")");
                    cross_.at(i).push_back({y, disp.value});
                    cross_kernel_sum_ += disp.value;
                    const Simplex& s = boundary_.at(y);
                    for (int q = 0; q < Q_; ++q)
                        fields_[i][static_cast<std::size_t>(q)] +=
                            disp.value * s[static_cast<std::size_t>(q)];
                }
            }
        }

        // cube-pair weights W(c,c') = sum over i in c, j in c', i != j of
        // J(i,j), and per-cube sums of the frozen boundary fields
        cube_weights_.assign(cube_corners_.size(),
                             std::vector<double>(cube_corners_.size(), 0.0));
        cube_fields_.assign(cube_corners_.size(), Simplex(static_cast<std::size_t>(Q_), 0.0));
        for (std::size_t i = 0; i < n; ++i) {
            for (const auto& [j, w] : neighbors_[i])
                cube_weights_[cube_of_site_[i]][cube_of_site_[j]] += w;
            for (int q = 0; q < Q_; ++q)
                cube_fields_[cube_of_site_[i]][static_cast<std::size_t>(q)] +=
                    fields_[i][static_cast<std::size_t>(q)];
        }
    }

    const KacKernel& kernel() const { return kernel_; }
    double beta() const { return beta_; }
    int Q() const { return Q_; }
    int ell() const { return ell_; }
    const Region& region() const { return lambda_; }
    const BoundaryProfile& boundary() const { return boundary_; }
    const std::vector<Site>& cube_corners() const { return cube_corners_; }
    std::size_t n_cubes() const { return cube_corners_.size(); }
    std::size_t n_sites() const { return lambda_.size(); }
    double cell_volume() const { return static_cast<double>(cells_); }
    std::int64_t cells() const { return cells_; }
    std::size_t cube_of_site(std::size_t i) const { return cube_of_site_[i]; }
    const std::vector<std::vector<double>>& cube_weights() const { return cube_weights_; }
    const std::vector<Simplex>& cube_fields() const { return cube_fields_; }
    double cross_kernel_sum() const { return cross_kernel_sum_; }

    void check_profile(const CoarseProfile& prof) const {
        if (prof.ell != ell_ || prof.dim != lambda_.dim() || prof.corners != cube_corners_)
            throw std::invalid_argument("FunctionalContext: profile grid mismatch");
        for (const Simplex& v : prof.values)
            if (v.size() != static_cast<std::size_t>(Q_) || !is_simplex(v, 1e-9))
                throw std::invalid_argument("FunctionalContext: profile value off the simplex");
    }

    CoarseProfile constant_profile(const Simplex& v) const {
        CoarseProfile prof;
        prof.ell = ell_;
        prof.dim = lambda_.dim();
        prof.corners = cube_corners_;
        prof.values.assign(cube_corners_.size(), v);
        check_profile(prof);
        return prof;
    }

    // spin energy under the same neighbor structure:
    // H = -1/2 sum_{i != j} J [c_i = c_j] - sum_i h_i[c_i]
    double config_energy(const std::vector<int>& colors) const {
        detail::Kahan pair_sum, field_sum;
        for (std::size_t i = 0; i < colors.size(); ++i) {
            const int ci = colors[i];
            for (const auto& [j, w] : neighbors_[i])
                if (colors[j] == ci) pair_sum.add(w);
            field_sum.add(fields_[i][static_cast<std::size_t>(ci)]);
        }
        return -0.5 * pair_sum.sum - field_sum.sum;
    }

    const std::vector<std::pair<std::size_t, double>>& neighbor_list(std::size_t i) const {
        return neighbors_[i];
    }
    // collar sites interacting with site i, with kernel values
    const std::vector<std::pair<Site, double>>& cross_list(std::size_t i) const {
        return cross_[i];
    }

private:
    KacKernel kernel_;
    double beta_;
    int Q_;
    int ell_;
    Region lambda_;
    BoundaryProfile boundary_;
    std::vector<Site> cube_corners_;
    std::vector<std::size_t> cube_of_site_;
    std::int64_t cells_ = 1;
    std::vector<std::vector<std::pair<std::size_t, double>>> neighbors_;
    std::vector<std::vector<std::pair<Site, double>>> cross_;
    std::vector<Simplex> fields_;
    std::vector<std::vector<double>> cube_weights_;
    std::vector<Simplex> cube_fields_;
    double cross_kernel_sum_ = 0.0;
};

// entropy functional I = -sum_sites rho ln rho (cube-constant profiles)
inline double entropy_I(const FunctionalContext& ctx, const CoarseProfile& prof) {
    ctx.check_profile(prof);
    detail::Kahan s;
    for (const Simplex& v : prof.values) s.add(xlogx_sum(v));
    return -ctx.cell_volume() * s.sum;
}

// energy V = -1/2 sum_{i != j} J <rho_i, rho_j> - sum over boundary-crossing
// pairs of J <rho_i, s_j>, evaluated through the exact cube-pair weights
inline double energy_V(const FunctionalContext& ctx, const CoarseProfile& prof) {
    ctx.check_profile(prof);
    const auto& W = ctx.cube_weights();
    detail::Kahan pair_sum, field_sum;
    for (std::size_t c = 0; c < ctx.n_cubes(); ++c) {
        for (std::size_t c2 = 0; c2 < ctx.n_cubes(); ++c2)
            if (W[c][c2] != 0.0) pair_sum.add(W[c][c2] * dot(prof.values[c], prof.values[c2]));
        field_sum.add(dot(prof.values[c], ctx.cube_fields()[c]));
    }
    return -0.5 * pair_sum.sum - field_sum.sum;
}

// F = V - I / beta
inline double free_energy(const FunctionalContext& ctx, const CoarseProfile& prof) {
    return energy_V(ctx, prof) - entropy_I(ctx, prof) / ctx.beta();
}

struct EnergyReport {
    double free_energy = 0.0;
    double kernel_budget = 0.0;  // bound on the cube-averaging error, 0 on the exact path
    bool cube_averaged = false;
};

// above the site threshold the in-region pair sum replaces each source site
// by its cube's center and uses the cube-averaged kernel; the budget bounds
// the substitution error through the kernel's gradient
inline EnergyReport free_energy_report(const FunctionalContext& ctx, const CoarseProfile& prof,
                                       std::size_t site_threshold = 4096) {
    EnergyReport rep;
    if (ctx.n_sites() <= site_threshold) {
        rep.free_energy = free_energy(ctx, prof);
        return rep;
    }
    ctx.check_profile(prof);
    rep.cube_averaged = true;
    const int ell = ctx.ell();
    const int d = ctx.region().dim();
    const double cells = ctx.cell_volume();
    const CubePartition part(ell, d);

    // same-cube pair sum (i != j inside one cube), identical for every cube
    double diag = 0.0;
    {
        const auto cs = cube_box(ctx.cube_corners()[0], part).sites();
        for (std::size_t a = 0; a < cs.size(); ++a)
            for (std::size_t b = 0; b < cs.size(); ++b)
                if (a != b) diag += ctx.kernel().evaluate(cs[a], cs[b]);
    }

    detail::Kahan pair_sum, field_sum;
    const auto& corners = ctx.cube_corners();
    for (std::size_t c = 0; c < corners.size(); ++c) {
        Site rep_site = corners[c];
        for (int k = 0; k < d; ++k) rep_site[k] += ell / 2;
        for (std::size_t c2 = 0; c2 < corners.size(); ++c2) {
            if (c == c2) {
                pair_sum.add(diag * dot(prof.values[c], prof.values[c]));
                continue;
            }
            const double avg = ctx.kernel().coarse_average(rep_site, corners[c2], ell);
            if (avg != 0.0) pair_sum.add(cells * cells * avg * dot(prof.values[c], prof.values[c2]));
        }
        field_sum.add(dot(prof.values[c], ctx.cube_fields()[c]));
    }
    rep.free_energy = -0.5 * pair_sum.sum - field_sum.sum - entropy_I(ctx, prof) / ctx.beta();

    // per-pair substitution error <= sqrt(d) ||grad J|| gamma^{d+1} ell inside
    // the doubled range; pairs outside it are exact zeros on both routes
    const double gamma = ctx.kernel().gamma();
    const double per_pair = std::sqrt(static_cast<double>(d)) * ctx.kernel().base_grad_sup() *
                            std::pow(gamma, static_cast<double>(d) + 1.0) *
                            static_cast<double>(ell);
    double shell = 1.0;
    for (int k = 0; k < d; ++k) shell *= 4.0 / gamma + 1.0;
    rep.kernel_budget = 0.5 * static_cast<double>(ctx.n_sites()) * shell * per_pair;
    return rep;
}

// the free energy split around the local mean-field density:
//   F = bulk + interaction + boundary - boundary_self - normalization_defect
// where bulk sums phi^mf over sites, the penalties are the quadratic kernel
// forms, boundary_self is the collar's own quadratic weight, and the defect
// accounts for the lattice kernel mass being J_hat - J(0) instead of 1
struct ExcessParts {
    double bulk = 0.0;
    double interaction = 0.0;
    double boundary = 0.0;
    double boundary_self = 0.0;
    double normalization_defect = 0.0;

    double recombined() const {
        return bulk + interaction + boundary - boundary_self - normalization_defect;
    }
};

inline ExcessParts excess_decomposition(const FunctionalContext& ctx, const CoarseProfile& prof) {
    ctx.check_profile(prof);
    const MeanFieldParams mf(ctx.Q(), ctx.beta(), true);
    ExcessParts parts;
    detail::Kahan bulk, inter, bdry, bdry_self, norms;
    for (std::size_t c = 0; c < ctx.n_cubes(); ++c) {
        bulk.add(phi_mf(prof.values[c], mf));
        norms.add(dot(prof.values[c], prof.values[c]));
    }
    parts.bulk = ctx.cell_volume() * bulk.sum;

    for (std::size_t i = 0; i < ctx.n_sites(); ++i) {
        const Simplex& vi = prof.values[ctx.cube_of_site(i)];
        for (const auto& [j, w] : ctx.neighbor_list(i))
            inter.add(w * l2_dist_sq(vi, prof.values[ctx.cube_of_site(j)]));
        for (const auto& [y, w] : ctx.cross_list(i)) {
            const Simplex& s = ctx.boundary().at(y);
            bdry.add(w * l2_dist_sq(vi, s));
            bdry_self.add(w * dot(s, s));
        }
    }
    parts.interaction = 0.25 * inter.sum;
    parts.boundary = 0.5 * bdry.sum;
    parts.boundary_self = 0.5 * bdry_self.sum;

    const double j0 = ctx.kernel().evaluate(Site{0, 0, 0}, Site{0, 0, 0});
    parts.normalization_defect =
        0.5 * (ctx.kernel().lattice_normalization() - j0 - 1.0) * ctx.cell_volume() * norms.sum;
    return parts;
}

// interpolated local free energy density between the one-body coupling to a
// reference phase (u = 0) and the full quadratic self-coupling (u = 1)
inline double phi_u(const Simplex& v, double u, const Simplex& rho_ref, double beta) {
    return -0.5 * u * dot(v, v) - (1.0 - u) * dot(v, rho_ref) + xlogx_sum(v) / beta;
}

namespace detail {

// damped fixed-point relaxation of one simplex under
// v <- softmax(beta (u v + (1-u) rho_ref)); descends phi_u
inline Simplex phi_u_fixed_point(Simplex v, double u, const Simplex& rho_ref, double beta,
                                 double tol = 1e-13, int max_iter = 20000) {
    const std::size_t Q = v.size();
    double h = 0.5;
    double f = phi_u(v, u, rho_ref, beta);
    for (int it = 0; it < max_iter; ++it) {
        Simplex g(Q);
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t q = 0; q < Q; ++q) {
            g[q] = u * v[q] + (1.0 - u) * rho_ref[q];
            m = std::max(m, g[q]);
        }
        double z = 0.0;
        for (std::size_t q = 0; q < Q; ++q) {
            g[q] = std::exp(beta * (g[q] - m));
            z += g[q];
        }
        double res = 0.0;
        for (std::size_t q = 0; q < Q; ++q) {
            g[q] /= z;
            res = std::max(res, std::abs(g[q] - v[q]));
        }
        if (res < tol) return v;
        Simplex next(Q);
        for (std::size_t q = 0; q < Q; ++q) next[q] = (1.0 - h) * v[q] + h * g[q];
        const double fn = phi_u(next, u, rho_ref, beta);
        if (fn > f + 1e-14) {
            h *= 0.5;
            continue;
        }
        v = std::move(next);
        f = fn;
    }
    return v;
}

} // namespace detail

// inf of phi_u over the simplex, relaxed from every vertex, the uniform
// point and the reference (the local minima live near these seeds)
inline double phi_u_min(int Q, double beta, double u, const Simplex& rho_ref) {
    std::vector<Simplex> seeds;
    for (int q = 0; q < Q; ++q) {
        Simplex v = vertex_simplex(Q, q);
        // pull vertices strictly inside so the entropy gradient exists
        for (double& x : v) x = 0.98 * x + 0.02 / Q;
        seeds.push_back(std::move(v));
    }
    seeds.push_back(uniform_simplex(Q));
    seeds.push_back(rho_ref);
    double best = std::numeric_limits<double>::infinity();
    for (const Simplex& s : seeds) {
        const Simplex v = detail::phi_u_fixed_point(s, u, rho_ref, beta);
        best = std::min(best, phi_u(v, u, rho_ref, beta));
    }
    return best;
}

// per-cube effective excess phi_u(rho_c) - inf phi_u; nonnegative up to
// solver slack
inline std::vector<double> effective_excess(const FunctionalContext& ctx, const CoarseProfile& prof,
                                            double u, const Simplex& rho_ref) {
    ctx.check_profile(prof);
    const double inf = phi_u_min(ctx.Q(), ctx.beta(), u, rho_ref);
    std::vector<double> out;
    out.reserve(prof.values.size());
    for (const Simplex& v : prof.values) out.push_back(phi_u(v, u, rho_ref, ctx.beta()) - inf);
    return out;
}

// surface correction (beta/2) |rho|^2 sum over region-to-collar pairs of J;
// an empty collar gives 0
inline double surface_correction(const KacKernel& kernel, double beta, const Region& lambda,
                                 const Region& collar, const Simplex& rho) {
    detail::Kahan s;
    for (const Site& x : lambda.sites())
        for (const auto& disp : kernel.displacements()) {
            if (disp.dv == Site{0, 0, 0}) continue;
            const Site y{x[0] + disp.dv[0], x[1] + disp.dv[1], x[2] + disp.dv[2]};
            if (!lambda.contains(y) && collar.contains(y)) s.add(disp.value);
        }
    return 0.5 * beta * dot(rho, rho) * s.sum;
}

inline double surface_correction(const FunctionalContext& ctx, const Simplex& rho) {
    return 0.5 * ctx.beta() * dot(rho, rho) * ctx.cross_kernel_sum();
}

// ---- enumeration bounds ---------------------------------------------------

struct LpClassRow {
    std::vector<std::int64_t> counts;  // per cube, Q color counts concatenated
    std::uint64_t configurations = 0;
    double log_z = 0.0;         // log sum of Boltzmann weights in the class
    double free_energy = 0.0;   // F at the class profile
    double entropy = 0.0;       // I at the class profile
    double stirling_gap = 0.0;  // | ln(configurations) - I |
    bool selected = false;      // class belongs to the requested set
};

struct LpLowerRow {
    double log_z_class = 0.0;
    double free_energy = 0.0;  // F at the probe profile, before rounding
    double slack = 0.0;        // log_z + beta F + budget; nonnegative when the bound holds
    bool ok = false;
};

struct LpReport {
    double c_const = 0.0;
    double epsilon = 0.0;
    double budget = 0.0;  // beta c epsilon |Lambda|
    std::uint64_t total_configurations = 0;
    std::vector<LpClassRow> classes;
    double log_z_selected = 0.0;  // ln Z restricted to the requested class set
    double inf_free_energy = 0.0;
    double upper_slack = 0.0;  // budget - (log_z + beta inf F); nonnegative when the bound holds
    bool upper_ok = false;
    double stirling_budget = 0.0;  // d Q |Lambda| ln(ell) / ell^d
    bool stirling_ok = false;
    std::vector<LpLowerRow> lower;
    bool lower_ok = true;
};

namespace detail {

inline std::vector<std::int64_t> class_key(const FunctionalContext& ctx,
                                           const CoarseProfile& prof) {
    ctx.check_profile(prof);
    std::vector<std::int64_t> key(ctx.n_cubes() * static_cast<std::size_t>(ctx.Q()));
    for (std::size_t c = 0; c < ctx.n_cubes(); ++c)
        for (int q = 0; q < ctx.Q(); ++q) {
            const double x = prof.values[c][static_cast<std::size_t>(q)] * ctx.cell_volume();
            const std::int64_t n = std::llround(x);
            if (std::abs(x - static_cast<double>(n)) > 1e-6)
                throw std::invalid_argument(
                    "lp_verify: class profile is not rational on the ell-grid");
            key[c * static_cast<std::size_t>(ctx.Q()) + static_cast<std::size_t>(q)] = n;
        }
    return key;
}

} // namespace detail

// every coarse class on the context's grid: per cube, all color counts
// summing to ell^d
inline std::vector<CoarseProfile> all_class_profiles(const FunctionalContext& ctx,
                                                     std::size_t cap = 1'000'000) {
    const int Q = ctx.Q();
    const std::int64_t cells = ctx.cells();
    std::vector<Simplex> cube_values;
    std::vector<std::int64_t> counts(static_cast<std::size_t>(Q), 0);
    std::function<void(int, std::int64_t)> rec = [&](int q, std::int64_t left) {
        if (q == Q - 1) {
            counts[static_cast<std::size_t>(q)] = left;
            Simplex v(static_cast<std::size_t>(Q));
            for (int k = 0; k < Q; ++k)
                v[static_cast<std::size_t>(k)] =
                    static_cast<double>(counts[static_cast<std::size_t>(k)]) /
                    static_cast<double>(cells);
            cube_values.push_back(std::move(v));
            return;
        }
        for (std::int64_t m = 0; m <= left; ++m) {
            counts[static_cast<std::size_t>(q)] = m;
            rec(q + 1, left - m);
        }
    };
    rec(0, cells);

    double total = 1.0;
    for (std::size_t c = 0; c < ctx.n_cubes(); ++c) total *= static_cast<double>(cube_values.size());
    if (total > static_cast<double>(cap))
        throw std::invalid_argument("all_class_profiles: " + std::to_string(total) +
                                    " classes exceed the cap " + std::to_string(cap));

    std::vector<CoarseProfile> out;
    CoarseProfile prof;
    prof.ell = ctx.ell();
    prof.dim = ctx.region().dim();
    prof.corners = ctx.cube_corners();
    prof.values.assign(ctx.n_cubes(), cube_values.front());
    std::vector<std::size_t> idx(ctx.n_cubes(), 0);
    while (true) {
        for (std::size_t c = 0; c < ctx.n_cubes(); ++c) prof.values[c] = cube_values[idx[c]];
        out.push_back(prof);
        std::size_t k = ctx.n_cubes();
        bool done = true;
        while (k > 0) {
            --k;
            if (++idx[k] < cube_values.size()) {
                done = false;
                break;
            }
            idx[k] = 0;
        }
        if (done) break;
    }
    return out;
}

// exhaustive check of the two-sided enumeration bounds:
//   ln Z({class in A}) + beta inf_A F <= beta c eps |Lambda|
//   ln Z(class of [rho]) + beta F(rho) >= -beta c eps |Lambda|   (probes rho)
// with c = max(c_d, 2Qd/beta), eps = gamma ell + ln(ell)/ell^d, plus the
// per-class multinomial bound | ln #class - I | <= d Q |Lambda| ln(ell)/ell^d
inline LpReport lp_verify(const FunctionalContext& ctx,
                          const std::vector<CoarseProfile>& class_set,
                          const std::vector<CoarseProfile>& probes = {},
                          std::uint64_t cap = 20'000'000) {
    if (class_set.empty()) throw std::invalid_argument("lp_verify: empty class set");
    const std::size_t n = ctx.n_sites();
    const int Q = ctx.Q();
    double total = 1.0;
    for (std::size_t i = 0; i < n; ++i) total *= static_cast<double>(Q);
    if (total > static_cast<double>(cap))
        throw std::invalid_argument("lp_verify: enumeration needs " + std::to_string(total) +
                                    " terms, cap is " + std::to_string(cap));

    const double d = static_cast<double>(ctx.region().dim());
    const double ell = static_cast<double>(ctx.ell());
    const double vol = static_cast<double>(n);

    LpReport rep;
    rep.c_const = std::max(ctx.kernel().cd_constant(), 2.0 * Q * d / ctx.beta());
    rep.epsilon = ctx.kernel().gamma() * ell + std::log(ell) / ctx.cell_volume();
    rep.budget = ctx.beta() * rep.c_const * rep.epsilon * vol;
    rep.stirling_budget = d * Q * vol * std::log(ell) / ctx.cell_volume();

    std::set<std::vector<std::int64_t>> selected_keys;
    double inf_f = std::numeric_limits<double>::infinity();
    for (const CoarseProfile& prof : class_set) {
        selected_keys.insert(detail::class_key(ctx, prof));
        inf_f = std::min(inf_f, free_energy(ctx, prof));
    }
    rep.inf_free_energy = inf_f;

    // enumerate all configurations, grouped by the per-cube color counts
    struct Accum {
        std::uint64_t count = 0;
        detail::LogAccumulator z;
    };
    std::map<std::vector<std::int64_t>, Accum> classes;
    std::vector<int> colors(n, 0);
    std::vector<std::int64_t> key(ctx.n_cubes() * static_cast<std::size_t>(Q));
    while (true) {
        rep.total_configurations += 1;
        std::fill(key.begin(), key.end(), 0);
        for (std::size_t i = 0; i < n; ++i)
            key[ctx.cube_of_site(i) * static_cast<std::size_t>(Q) +
                static_cast<std::size_t>(colors[i])] += 1;
        Accum& acc = classes[key];
        acc.count += 1;
        acc.z.add(-ctx.beta() * ctx.config_energy(colors));
        std::size_t k = n;
        bool done = true;
        while (k > 0) {
            --k;
            if (++colors[k] < Q) {
                done = false;
                break;
            }
            colors[k] = 0;
        }
        if (done) break;
    }

    detail::LogAccumulator z_sel;
    rep.stirling_ok = true;
    for (const auto& [counts, acc] : classes) {
        CoarseProfile prof;
        prof.ell = ctx.ell();
        prof.dim = ctx.region().dim();
        prof.corners = ctx.cube_corners();
        prof.values.resize(ctx.n_cubes());
        for (std::size_t c = 0; c < ctx.n_cubes(); ++c) {
            Simplex v(static_cast<std::size_t>(Q));
            for (int q = 0; q < Q; ++q)
                v[static_cast<std::size_t>(q)] =
                    static_cast<double>(
                        counts[c * static_cast<std::size_t>(Q) + static_cast<std::size_t>(q)]) /
                    ctx.cell_volume();
            prof.values[c] = std::move(v);
        }
        LpClassRow row;
        row.counts = counts;
        row.configurations = acc.count;
        row.log_z = acc.z.log();
        row.free_energy = free_energy(ctx, prof);
        row.entropy = entropy_I(ctx, prof);
        row.stirling_gap = std::abs(std::log(static_cast<double>(acc.count)) - row.entropy);
        if (row.stirling_gap > rep.stirling_budget) rep.stirling_ok = false;
        row.selected = selected_keys.count(counts) > 0;
        if (row.selected) z_sel.add(row.log_z);
        rep.classes.push_back(std::move(row));
    }
    rep.log_z_selected = z_sel.log();
    rep.upper_slack = rep.budget - (rep.log_z_selected + ctx.beta() * rep.inf_free_energy);
    rep.upper_ok = rep.upper_slack >= 0.0;

    for (const CoarseProfile& probe : probes) {
        const std::vector<std::int64_t> k2 = detail::class_key(ctx, round_profile(probe));
        const auto it = classes.find(k2);
        LpLowerRow row;
        row.log_z_class =
            (it == classes.end()) ? -std::numeric_limits<double>::infinity() : it->second.z.log();
        row.free_energy = free_energy(ctx, probe);
        row.slack = row.log_z_class + ctx.beta() * row.free_energy + rep.budget;
        row.ok = row.slack >= 0.0;
        if (!row.ok) rep.lower_ok = false;
        rep.lower.push_back(row);
    }
    return rep;
}

// ---- relaxation dynamics ---------------------------------------------------

// interpolated free energy driving the relaxation; equals free_energy at u = 1
inline double free_energy_u(const FunctionalContext& ctx, const CoarseProfile& prof, double u,
                            const Simplex& rho_ref) {
    ctx.check_profile(prof);
    const auto& W = ctx.cube_weights();
    detail::Kahan one_body, pair_sum, field_sum;
    for (std::size_t c = 0; c < ctx.n_cubes(); ++c) {
        one_body.add(-(1.0 - u) * dot(prof.values[c], rho_ref) +
                     xlogx_sum(prof.values[c]) / ctx.beta());
        for (std::size_t c2 = 0; c2 < ctx.n_cubes(); ++c2)
            if (W[c][c2] != 0.0) pair_sum.add(W[c][c2] * dot(prof.values[c], prof.values[c2]));
        field_sum.add(dot(prof.values[c], ctx.cube_fields()[c]));
    }
    return ctx.cell_volume() * one_body.sum + u * (-0.5 * pair_sum.sum - field_sum.sum);
}

// per-cube relaxation map: softmax(beta Lbar_c) with the interaction field
// averaged over the cube, Lbar_c = (1-u) rho_ref + (u/ell^d)(sum W rho + H_c);
// fixed points are exactly the stationary profiles of free_energy_u
inline CoarseProfile relaxation_target(const FunctionalContext& ctx, const CoarseProfile& prof,
                                       double u, const Simplex& rho_ref) {
    ctx.check_profile(prof);
    if (u < 0.0 || u > 1.0)
        throw std::invalid_argument("relaxation_target: u must lie in [0,1]");
    if (rho_ref.size() != static_cast<std::size_t>(ctx.Q()))
        throw std::invalid_argument("relaxation_target: reference size mismatch");
    const std::size_t nc = ctx.n_cubes();
    const std::size_t Q = static_cast<std::size_t>(ctx.Q());
    const auto& W = ctx.cube_weights();
    const double inv_cells = 1.0 / ctx.cell_volume();

    CoarseProfile out = prof;
    for (std::size_t c = 0; c < nc; ++c) {
        Simplex field(Q, 0.0);
        for (std::size_t c2 = 0; c2 < nc; ++c2) {
            if (W[c][c2] == 0.0) continue;
            for (std::size_t q = 0; q < Q; ++q) field[q] += W[c][c2] * prof.values[c2][q];
        }
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t q = 0; q < Q; ++q) {
            field[q] = (1.0 - u) * rho_ref[q] +
                       u * inv_cells * (field[q] + ctx.cube_fields()[c][q]);
            m = std::max(m, field[q]);
        }
        double z = 0.0;
        for (std::size_t q = 0; q < Q; ++q) {
            field[q] = std::exp(ctx.beta() * (field[q] - m));
            z += field[q];
        }
        for (double& x : field) x /= z;
        out.values[c] = std::move(field);
    }
    return out;
}

struct TraceRow {
    std::size_t iter = 0;
    double free_energy = 0.0;
    double residual = 0.0;
};

inline void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace) {
    os << "iter,free_energy,residual\n";
    for (const TraceRow& r : trace)
        os << r.iter << "," << r.free_energy << "," << r.residual << "\n";
}

struct DynamicsState {
    CoarseProfile profile;
    double u = 1.0;
    Simplex rho_ref;
    double step_size = 0.0;
    std::size_t iterations = 0;
    double free_energy = 0.0;
    double residual = 0.0;
    double floor_bound = 0.0;  // guaranteed lower bound on converged components
    std::vector<TraceRow> trace;
};

// damped Jacobi relaxation rho <- (1-h) rho + h relaxation_target(rho); the
// free-energy trace is non-increasing (h halves on any increase, at most 20
// times), iteration stops when sup |rho - target| < tol
inline DynamicsState dynamics_minimize(const FunctionalContext& ctx, const CoarseProfile& start,
                                       double u, const Simplex& rho_ref, double tol = 1e-10,
                                       double h0 = 0.5, std::size_t max_iter = 100000) {
    DynamicsState st;
    st.profile = start;
    st.u = u;
    st.rho_ref = rho_ref;
    st.step_size = h0;

    const std::size_t nc = ctx.n_cubes();
    const std::size_t Q = static_cast<std::size_t>(ctx.Q());
    double f = free_energy_u(ctx, st.profile, u, rho_ref);
    st.trace.push_back({0, f, 0.0});

    // the relaxation field per component stays within [0, max(1, Jhat - J(0))]
    const double j0 = ctx.kernel().evaluate(Site{0, 0, 0}, Site{0, 0, 0});
    const double field_bound = std::max(1.0, ctx.kernel().lattice_normalization() - j0);
    st.floor_bound = std::exp(-ctx.beta() * field_bound) / static_cast<double>(ctx.Q());

    auto residual_against = [&](const CoarseProfile& target) {
        double r = 0.0;
        for (std::size_t c = 0; c < nc; ++c)
            r = std::max(r, sup_dist(st.profile.values[c], target.values[c]));
        return r;
    };

    for (std::size_t it = 1; it <= max_iter; ++it) {
        const CoarseProfile target = relaxation_target(ctx, st.profile, u, rho_ref);
        const double residual = residual_against(target);
        st.trace.back().residual = residual;
        if (residual < tol) {
            st.iterations = it - 1;
            st.residual = residual;
            st.free_energy = f;
            return st;
        }

        int halvings = 0;
        while (true) {
            CoarseProfile next = st.profile;
            for (std::size_t c = 0; c < nc; ++c)
                for (std::size_t q = 0; q < Q; ++q)
                    next.values[c][q] = (1.0 - st.step_size) * st.profile.values[c][q] +
                                        st.step_size * target.values[c][q];
            const double fn = free_energy_u(ctx, next, u, rho_ref);
            if (fn <= f + 1e-12) {
                st.profile = std::move(next);
                f = fn;
                break;
            }
            st.step_size *= 0.5;
            if (++halvings > 20)
                throw std::runtime_error(
                    "dynamics_minimize: free energy keeps increasing after 20 step halvings");
        }
        st.trace.push_back({it, f, 0.0});
    }
    st.trace.back().residual =
        residual_against(relaxation_target(ctx, st.profile, u, rho_ref));
    throw std::runtime_error("dynamics_minimize: no convergence within " +
                             std::to_string(max_iter) + " iterations (residual " +
                             std::to_string(st.trace.back().residual) + ")");
}

} // namespace pottskac
