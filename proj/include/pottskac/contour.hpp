#pragma once

// Contours: extraction from Theta fields (support, collar decomposition,
// exterior/interior classification), weights as ratios of constrained
// enumeration sums, the Peierls constant, and the finite-window identity
// rewriting a partition sum over contour families.

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "coarse.hpp"
#include "geometry.hpp"
#include "kernel.hpp"
#include "potts.hpp"
#include "simplex.hpp"

namespace pottskac {

struct Contour {
    std::vector<Site> support;      // sorted l+ cube corners, one *-component of {Theta = 0}
    LabelField eta_frozen;          // eta on the support's l- cubes
    std::int64_t n_cubes = 0;       // cube count of the support
    std::int64_t volume = 0;        // site count
    int exterior_label = 0;         // the p of a p-contour
    std::vector<Site> collar;       // outer cube ring A, sorted
    std::vector<int> collar_labels;             // aligned Theta labels, all nonzero
    std::vector<Site> exterior_collar;          // A cap Ext, sorted
    std::vector<std::vector<Site>> interiors;   // bounded complement components
    std::vector<int> interior_labels;           // one label per interior
};

inline bool same_shape(const Contour& a, const Contour& b) {
    return a.support == b.support && a.eta_frozen.corners == b.eta_frozen.corners &&
           a.eta_frozen.labels == b.eta_frozen.labels;
}

// A support whose exterior collar shows two different phase labels separates
// phases instead of floating in one; `reject` raises on sight, `mark` leaves
// exterior_label = 0 for the caller to filter.
enum class InterfacePolicy { reject, mark };

// Maximal *-connected components of {Theta = 0} with their collars, exterior
// labels and interiors.  The field's outermost cube ring (incomplete 3^d
// neighborhoods) plays the role of infinity: zeros there are rejected, and
// complement components touching it are exterior.
inline std::vector<Contour> extract_contours(const LabelField& theta, const LabelField& eta,
                                             const ScaleTriple& scales,
                                             InterfacePolicy policy = InterfacePolicy::reject) {
    if (theta.ell != scales.ell_plus)
        throw std::invalid_argument("extract_contours: theta field is not at scale l+");
    if (eta.ell != scales.ell_minus)
        throw std::invalid_argument("extract_contours: eta field is not at scale l-");
    const int lp = scales.ell_plus;
    const int lm = scales.ell_minus;
    const int d = theta.dim;
    const CubePartition part(lp, d);

    const auto& corners = theta.corners;
    auto in_domain = [&](const Site& c) {
        const auto it = std::lower_bound(corners.begin(), corners.end(), c);
        return it != corners.end() && *it == c;
    };
    auto neighbors_of = [&](const Site& c) {
        std::vector<Site> out;
        for (int a = -1; a <= 1; ++a)
            for (int b = (d > 1 ? -1 : 0); b <= (d > 1 ? 1 : 0); ++b)
                for (int e = (d > 2 ? -1 : 0); e <= (d > 2 ? 1 : 0); ++e) {
                    if (a == 0 && b == 0 && e == 0) continue;
                    out.push_back(Site{c[0] + a * lp, c[1] + b * lp, c[2] + e * lp});
                }
        return out;
    };

    // ring = cubes whose full 3^d neighborhood is not available
    std::vector<bool> on_ring(corners.size(), false);
    for (std::size_t i = 0; i < corners.size(); ++i)
        for (const Site& nb : neighbors_of(corners[i]))
            if (!in_domain(nb)) {
                on_ring[i] = true;
                break;
            }

    std::vector<Site> zeros;
    for (std::size_t i = 0; i < corners.size(); ++i)
        if (theta.labels[i] == 0) {
            if (on_ring[i])
                throw std::invalid_argument("extract_contours: contour touches the observation window");
            zeros.push_back(corners[i]);
        }

    std::vector<Contour> out;
    for (const std::vector<Site>& sp : star_components(zeros, part)) {
        Contour g;
        g.support = sp;
        g.n_cubes = static_cast<std::int64_t>(sp.size());
        std::int64_t cube_sites = 1;
        for (int k = 0; k < d; ++k) cube_sites *= lp;
        g.volume = g.n_cubes * cube_sites;

        auto in_support = [&](const Site& c) {
            const auto it = std::lower_bound(sp.begin(), sp.end(), c);
            return it != sp.end() && *it == c;
        };

        // collar: domain cubes adjacent to the support
        for (std::size_t i = 0; i < corners.size(); ++i) {
            if (in_support(corners[i])) continue;
            bool adj = false;
            for (const Site& nb : neighbors_of(corners[i]))
                if (in_support(nb)) {
                    adj = true;
                    break;
                }
            if (!adj) continue;
            if (theta.labels[i] == 0)
                throw std::logic_error("extract_contours: zero label on a collar cube "
                                       "(support was not a maximal component)");
            g.collar.push_back(corners[i]);
            g.collar_labels.push_back(theta.labels[i]);
        }

        // complement components: exterior reaches the ring, the rest are interiors
        std::vector<Site> complement;
        for (std::size_t i = 0; i < corners.size(); ++i)
            if (!in_support(corners[i])) complement.push_back(corners[i]);
        std::vector<Site> exterior;
        for (const std::vector<Site>& comp : star_components(complement, part)) {
            bool touches_ring = false;
            for (const Site& c : comp) {
                const auto it = std::lower_bound(corners.begin(), corners.end(), c);
                if (on_ring[static_cast<std::size_t>(it - corners.begin())]) {
                    touches_ring = true;
                    break;
                }
            }
            if (touches_ring) {
                exterior.insert(exterior.end(), comp.begin(), comp.end());
            } else {
                g.interiors.push_back(comp);
            }
        }
        std::sort(exterior.begin(), exterior.end());

        // classification from the exterior part of the collar
        int ext_label = 0;
        bool mixed = false;
        for (std::size_t i = 0; i < g.collar.size(); ++i) {
            const auto it = std::lower_bound(exterior.begin(), exterior.end(), g.collar[i]);
            if (it == exterior.end() || *it != g.collar[i]) continue;
            g.exterior_collar.push_back(g.collar[i]);
            if (ext_label == 0) {
                ext_label = g.collar_labels[i];
            } else if (ext_label != g.collar_labels[i]) {
                if (policy == InterfacePolicy::reject)
                    throw std::invalid_argument(
                        "extract_contours: interface contour (mixed exterior collar labels) "
                        "has no single-phase classification");
                mixed = true;
            }
        }
        if (ext_label == 0)
            throw std::logic_error("extract_contours: support has no exterior collar");
        g.exterior_label = mixed ? 0 : ext_label;

        // one label per interior, read off its collar cubes
        for (const std::vector<Site>& comp : g.interiors) {
            int lab = 0;
            for (std::size_t i = 0; i < g.collar.size(); ++i) {
                const auto it = std::lower_bound(comp.begin(), comp.end(), g.collar[i]);
                if (it == comp.end() || *it != g.collar[i]) continue;
                if (lab == 0) {
                    lab = g.collar_labels[i];
                } else if (lab != g.collar_labels[i]) {
                    throw std::logic_error("extract_contours: interior with mixed collar labels");
                }
            }
            if (lab == 0) throw std::logic_error("extract_contours: interior without collar cubes");
            g.interior_labels.push_back(lab);
        }

        // freeze eta on the support
        g.eta_frozen.ell = lm;
        g.eta_frozen.dim = d;
        const int ratio = lp / lm;
        for (const Site& c : sp)
            for (int i = 0; i < ratio; ++i)
                for (int j = 0; j < (d > 1 ? ratio : 1); ++j)
                    for (int k = 0; k < (d > 2 ? ratio : 1); ++k) {
                        const Site sub{c[0] + i * lm, c[1] + j * lm, c[2] + k * lm};
                        const auto lab = eta.label_at(sub);
                        if (!lab)
                            throw std::invalid_argument(
                                "extract_contours: eta field missing cube at corner (" +
                                std::to_string(sub[0]) + "," + std::to_string(sub[1]) + "," +
                                std::to_string(sub[2]) + ")");
                        g.eta_frozen.corners.push_back(sub);
                        g.eta_frozen.labels.push_back(*lab);
                    }
        // corners were appended cube by cube; restore sorted order
        {
            std::vector<std::size_t> order(g.eta_frozen.corners.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return g.eta_frozen.corners[a] < g.eta_frozen.corners[b];
            });
            std::vector<Site> cs;
            std::vector<int> ls;
            for (std::size_t i : order) {
                cs.push_back(g.eta_frozen.corners[i]);
                ls.push_back(g.eta_frozen.labels[i]);
            }
            g.eta_frozen.corners = std::move(cs);
            g.eta_frozen.labels = std::move(ls);
        }
        out.push_back(std::move(g));
    }
    return out;
}

// Peierls constant K = c_f gamma^{2a} l_-^d with c_f = (Q/beta - 1)/3^{d+1}.
// The alternative print (Q - beta_c)/3^{d+1} is exposed for comparison only.
inline double peierls_prefactor(int d, int Q, double beta) {
    if (!(beta > 0.0 && beta < Q))
        throw std::invalid_argument("peierls_prefactor: requires 0 < beta < Q");
    double p3 = 1.0;
    for (int k = 0; k <= d; ++k) p3 *= 3.0;
    return (static_cast<double>(Q) / beta - 1.0) / p3;
}

inline double peierls_prefactor_variant(int d, int Q) {
    const double beta_c = beta_thresholds(Q).second;
    double p3 = 1.0;
    for (int k = 0; k <= d; ++k) p3 *= 3.0;
    return (static_cast<double>(Q) - beta_c) / p3;
}

inline double peierls_constant(int d, int Q, double beta, double gamma, double a, int ell_minus) {
    const double cf = peierls_prefactor(d, Q, beta);
    double cells = 1.0;
    for (int k = 0; k < d; ++k) cells *= ell_minus;
    return cf * std::pow(gamma, 2.0 * a) * cells;
}

// composite eta/Theta fields for a window configuration against frozen
// boundary colors; Theta is computed where its full neighborhood is covered
// and carries the declared label on the remaining (outermost) cubes
struct CompositeFields {
    LabelField eta;
    LabelField theta;
};

inline CompositeFields composite_fields(const Region& window, const std::vector<int>& window_colors,
                                        const Region& bc_region, const std::vector<int>& bc_colors,
                                        int Q, const ScaleTriple& scales, const PhaseReferences& refs,
                                        const Accuracy& acc, int declared_label) {
    if (declared_label == 0)
        throw std::invalid_argument("composite_fields: declared ring label must be nonzero");
    const Region all = region_union(window, bc_region);
    std::vector<int> colors(all.size());
    const auto& wsites = window.sites();
    for (std::size_t i = 0; i < wsites.size(); ++i)
        colors[all.index_of(wsites[i])] = window_colors[i];
    const auto& bsites = bc_region.sites();
    for (std::size_t i = 0; i < bsites.size(); ++i)
        colors[all.index_of(bsites[i])] = bc_colors[i];

    CompositeFields f;
    f.eta = phase_indicator_eta(empirical_average(all, colors, Q, scales.ell_minus), refs, acc);

    // l+ cubes fully covered by the composite region
    const CubePartition part(scales.ell_plus, all.dim());
    std::vector<Site> domain;
    for (const Site& s : all.sites()) {
        const Site c = cube_of(s, part);
        if (domain.empty() || domain.back() != c) domain.push_back(c);
    }
    std::sort(domain.begin(), domain.end());
    domain.erase(std::unique(domain.begin(), domain.end()), domain.end());
    std::vector<Site> full;
    for (const Site& c : domain) {
        bool covered = true;
        for (const Site& s : cube_box(c, part).sites())
            if (!all.contains(s)) {
                covered = false;
                break;
            }
        if (covered) full.push_back(c);
    }

    // computable Theta targets: full cubes whose 3^d neighborhood is all full
    auto is_full = [&](const Site& c) {
        const auto it = std::lower_bound(full.begin(), full.end(), c);
        return it != full.end() && *it == c;
    };
    const int lp = scales.ell_plus;
    const int d = all.dim();
    std::vector<Site> computable, declared;
    for (const Site& c : full) {
        bool ok = true;
        for (int a = -1; a <= 1 && ok; ++a)
            for (int b = (d > 1 ? -1 : 0); b <= (d > 1 ? 1 : 0) && ok; ++b)
                for (int e = (d > 2 ? -1 : 0); e <= (d > 2 ? 1 : 0) && ok; ++e)
                    if (!is_full(Site{c[0] + a * lp, c[1] + b * lp, c[2] + e * lp})) ok = false;
        (ok ? computable : declared).push_back(c);
    }
    f.theta = phase_indicator_theta(f.eta, scales, computable);
    for (const Site& c : declared) {
        const auto it = std::lower_bound(f.theta.corners.begin(), f.theta.corners.end(), c);
        const auto at = static_cast<std::size_t>(it - f.theta.corners.begin());
        f.theta.corners.insert(it, c);
        f.theta.labels.insert(f.theta.labels.begin() + static_cast<std::ptrdiff_t>(at), declared_label);
    }
    return f;
}

struct WeightResult {
    double log_numerator = -std::numeric_limits<double>::infinity();
    double log_denominator = -std::numeric_limits<double>::infinity();
    double weight = 0.0;
    std::uint64_t numerator_count = 0;   // configurations satisfying the contour event
    std::uint64_t denominator_count = 0;  // configurations extending the pure phase
    bool numerator_empty = false;
};

struct CensusRow {
    int label = 0;
    std::int64_t n_cubes = 0;
    std::int64_t volume = 0;
    std::map<int, int> collar_label_counts;
    std::optional<double> weight;
};

inline std::vector<CensusRow> contour_census(const std::vector<Contour>& contours) {
    std::vector<CensusRow> rows;
    for (const Contour& g : contours) {
        CensusRow r;
        r.label = g.exterior_label;
        r.n_cubes = g.n_cubes;
        r.volume = g.volume;
        for (int lab : g.collar_labels) r.collar_label_counts[lab] += 1;
        rows.push_back(std::move(r));
    }
    return rows;
}

// A finite observation window with frozen boundary colors in the pure phase:
// the arena for contour admissibility, weights and the identity check.
class ContourLab {
public:
    ContourLab(int Q, double beta, KacKernel kernel, ScaleTriple scales, PhaseReferences refs,
               Accuracy acc, Region window, Region bc_region, std::vector<int> bc_colors,
               int boundary_label)
        : Q_(Q), beta_(beta), kernel_(std::move(kernel)), scales_(scales), refs_(std::move(refs)),
          acc_(acc), window_(std::move(window)), bc_region_(std::move(bc_region)),
          bc_colors_(std::move(bc_colors)), p_label_(boundary_label) {
        if (p_label_ < 1 || p_label_ > Q_)
            throw std::invalid_argument("ContourLab: boundary label must name an ordered phase");
        if (kernel_.range() > scales_.ell_plus)
            throw std::invalid_argument(
                "ContourLab: kernel range exceeds l+; the collar would not screen the weights");
        if (bc_colors_.size() != bc_region_.size())
            throw std::invalid_argument("ContourLab: boundary color vector size mismatch");
        // boundary must be a correct p-configuration on its own cubes
        for (int c : bc_colors_)
            if (c != p_label_ - 1)
                throw std::invalid_argument("ContourLab: boundary colors must sit in the pure phase");
        window_system_.emplace(window_, boundary_profile_for(window_), kernel_, Q_);
        build_block_tables();
    }

    const Region& window() const { return window_; }
    int boundary_label() const { return p_label_; }
    double beta() const { return beta_; }

    CompositeFields fields_for(const std::vector<int>& window_colors) const {
        return composite_fields(window_, window_colors, bc_region_, bc_colors_, Q_, scales_,
                                refs_, acc_, p_label_);
    }

    // contours of a window configuration; nullopt when a support leaves the
    // window (the configuration is then outside the identity's scope)
    std::optional<std::vector<Contour>> admitted_contours(const std::vector<int>& colors) const {
        const CompositeFields f = fields_for(colors);
        std::vector<Contour> gs = extract_contours(f.theta, f.eta, scales_, InterfacePolicy::mark);
        const CubePartition part(scales_.ell_plus, window_.dim());
        for (const Contour& g : gs) {
            for (const Site& c : g.support)
                for (const Site& s : cube_box(c, part).sites())
                    if (!window_.contains(s)) return std::nullopt;
            if (!g.interiors.empty())
                throw std::invalid_argument("ContourLab: instance outside identity-check scope "
                                            "(interior-bearing contour)");
            if (g.exterior_label != p_label_) return std::nullopt;
        }
        return gs;
    }

    // Eq.-3.17-style weight: both events measured on the support region under
    // the same conditional ensemble, enumerated exactly
    WeightResult contour_weight(const Contour& g, const std::vector<int>& background) const {
        if (!g.interiors.empty())
            throw std::invalid_argument("contour_weight: interior-bearing contours are out of scope");
        if (g.exterior_label != p_label_)
            throw std::invalid_argument("contour_weight: contour is not a p-contour for this boundary");

        const CubePartition part(scales_.ell_plus, window_.dim());
        std::vector<Site> rsites;
        for (const Site& c : g.support)
            for (const Site& s : cube_box(c, part).sites()) {
                if (!window_.contains(s))
                    throw std::invalid_argument("contour_weight: contour support leaves the window");
                rsites.push_back(s);
            }
        const Region rregion(window_.dim(), std::move(rsites));

        // conditional system on the support: boundary spins from the window
        // background and the frozen outer colors
        PottsSystem rsys(rregion, boundary_profile_within(rregion, background), kernel_, Q_);

        // per-block candidate lists from the frozen eta labels
        const CubePartition bpart(scales_.ell_minus, window_.dim());
        std::vector<std::vector<std::vector<int>>> block_choices;  // per block, list of color tuples
        std::vector<std::vector<std::size_t>> block_site_index;    // site indices into rregion order
        for (std::size_t bi = 0; bi < g.eta_frozen.corners.size(); ++bi) {
            const Site bc = g.eta_frozen.corners[bi];
            std::vector<std::size_t> idx;
            for (const Site& s : cube_box(bc, bpart).sites())
                idx.push_back(rsys.site_index(s));
            block_site_index.push_back(std::move(idx));
            block_choices.push_back(block_configs_for_label(g.eta_frozen.labels[bi]));
        }

        // enumeration size guard
        long double total = 1.0L;
        for (const auto& ch : block_choices) total *= static_cast<long double>(ch.size());
        if (total > 2e7L)
            throw std::invalid_argument("contour_weight: event enumeration needs " +
                                        std::to_string(static_cast<double>(total)) +
                                        " terms, cap is 20000000");

        WeightResult res;
        detail::LogAccumulator num;
        std::vector<int> sigma(rregion.size(), p_label_ - 1);

        // numerator: sum over configurations matching eta_G, with the full
        // event (collar Theta labels) verified on the composite field
        std::vector<std::size_t> pick(block_choices.size(), 0);
        while (true) {
            for (std::size_t b = 0; b < pick.size(); ++b) {
                const auto& cfg = block_choices[b][pick[b]];
                for (std::size_t k = 0; k < cfg.size(); ++k)
                    sigma[block_site_index[b][k]] = cfg[k];
            }
            if (event_holds(g, sigma, rregion, background)) {
                num.add(-beta_ * rsys.hamiltonian(sigma));
                res.numerator_count += 1;
            }
            std::size_t b = pick.size();
            bool done = true;
            while (b > 0) {
                --b;
                if (++pick[b] < block_choices[b].size()) {
                    done = false;
                    break;
                }
                pick[b] = 0;
            }
            if (done) break;
        }

        // denominator: the pure phase extends over support and collar.  Theta
        // there forces every support block to carry the boundary label, so the
        // candidate set per block is the pure-label alphabet.
        detail::LogAccumulator den;
        std::uint64_t den_count = 0;
        {
            const auto pure_choices = block_configs_for_label(p_label_);
            long double dtotal = 1.0L;
            for (std::size_t b = 0; b < block_site_index.size(); ++b)
                dtotal *= static_cast<long double>(pure_choices.size());
            if (dtotal > 2e7L)
                throw std::invalid_argument("contour_weight: pure-phase enumeration needs " +
                                            std::to_string(static_cast<double>(dtotal)) +
                                            " terms, cap is 20000000");
            std::vector<int> pure(rregion.size(), p_label_ - 1);
            std::vector<std::size_t> dpick(block_site_index.size(), 0);
            while (true) {
                for (std::size_t b = 0; b < dpick.size(); ++b) {
                    const auto& cfg = pure_choices[dpick[b]];
                    for (std::size_t k = 0; k < cfg.size(); ++k)
                        pure[block_site_index[b][k]] = cfg[k];
                }
                if (pure_phase_extends(pure, rregion, background)) {
                    den.add(-beta_ * rsys.hamiltonian(pure));
                    den_count += 1;
                }
                std::size_t b = dpick.size();
                bool done = true;
                while (b > 0) {
                    --b;
                    if (++dpick[b] < pure_choices.size()) {
                        done = false;
                        break;
                    }
                    dpick[b] = 0;
                }
                if (done) break;
            }
        }
        if (den_count == 0)
            throw std::runtime_error("contour_weight: pure-phase event is empty (ill-posed instance)");

        res.log_numerator = num.log();
        res.log_denominator = den.log();
        res.denominator_count = den_count;
        if (res.numerator_count == 0) {
            res.numerator_empty = true;
            res.weight = 0.0;
        } else {
            res.weight = std::exp(res.log_numerator - res.log_denominator);
        }
        return res;
    }

    struct IdentityResult {
        double lhs_log = 0.0;
        double rhs_log = 0.0;
        double residual = 0.0;
        std::uint64_t admitted = 0;
        std::uint64_t enumerated = 0;
        std::uint64_t backgrounds = 0;
        std::size_t inventory = 0;
        std::size_t families = 0;
    };

    // Both sides of the window identity: the admitted-configuration Boltzmann
    // sum versus the contour-family expansion with enumerated weights.
    // Optional pins freeze chosen window sites to colors (used when the free
    // space is otherwise too large; admissibility of the pinning is the
    // caller's lemma to establish).
    IdentityResult identity_check(
        std::uint64_t cap = 10'000'000,
        const std::vector<std::pair<std::size_t, int>>& pins = {}) const {
        const std::size_t n = window_.size();
        std::vector<int> colors(n, 0);
        std::vector<bool> pinned(n, false);
        for (const auto& [i, c] : pins) {
            colors[i] = c;
            pinned[i] = true;
        }
        std::vector<std::size_t> free_sites;
        for (std::size_t i = 0; i < n; ++i)
            if (!pinned[i]) free_sites.push_back(i);

        long double total = 1.0L;
        for (std::size_t i = 0; i < free_sites.size(); ++i) total *= Q_;
        if (total > static_cast<long double>(cap))
            throw std::invalid_argument("identity_check: enumeration needs " +
                                        std::to_string(static_cast<double>(total)) +
                                        " terms, cap is " + std::to_string(cap));

        IdentityResult res;
        detail::LogAccumulator lhs;
        std::vector<std::vector<int>> backgrounds;
        std::map<std::pair<std::vector<Site>, std::vector<int>>, Contour> inventory;

        while (true) {
            res.enumerated += 1;
            const auto gs = admitted_contours(colors);
            if (gs) {
                res.admitted += 1;
                lhs.add(-beta_ * window_system_->hamiltonian(colors));
                if (gs->empty()) {
                    backgrounds.push_back(colors);
                } else {
                    for (const Contour& g : *gs)
                        inventory.insert({{g.support, g.eta_frozen.labels}, g});
                }
            }
            std::size_t k = free_sites.size();
            bool done = true;
            while (k > 0) {
                --k;
                if (++colors[free_sites[k]] < Q_) {
                    done = false;
                    break;
                }
                colors[free_sites[k]] = 0;
            }
            if (done) break;
        }
        res.lhs_log = lhs.log();
        res.backgrounds = backgrounds.size();
        res.inventory = inventory.size();

        // compatible families: pairwise disjoint support-plus-collar footprints
        std::vector<const Contour*> items;
        for (const auto& [key, g] : inventory) items.push_back(&g);
        std::vector<std::vector<std::size_t>> families;
        std::vector<std::size_t> current;
        build_families(items, 0, current, families);
        res.families = families.size();

        detail::LogAccumulator rhs;
        for (const std::vector<int>& bg : backgrounds) {
            const double h = window_system_->hamiltonian(bg);
            for (const std::vector<std::size_t>& fam : families) {
                double logw = 0.0;
                bool zero = false;
                for (std::size_t gi : fam) {
                    const WeightResult w = contour_weight(*items[gi], bg);
                    if (w.numerator_empty) {
                        zero = true;
                        break;
                    }
                    logw += w.log_numerator - w.log_denominator;
                }
                if (!zero) rhs.add(-beta_ * h + logw);
            }
        }
        res.rhs_log = rhs.log();
        res.residual = std::abs(std::expm1(res.lhs_log - res.rhs_log));
        return res;
    }

private:
    static bool footprints_disjoint(const Contour& a, const Contour& b) {
        std::vector<Site> fa = a.support, fb = b.support;
        fa.insert(fa.end(), a.collar.begin(), a.collar.end());
        fb.insert(fb.end(), b.collar.begin(), b.collar.end());
        std::sort(fa.begin(), fa.end());
        std::sort(fb.begin(), fb.end());
        std::vector<Site> inter;
        std::set_intersection(fa.begin(), fa.end(), fb.begin(), fb.end(), std::back_inserter(inter));
        return inter.empty();
    }

    static void build_families(const std::vector<const Contour*>& items, std::size_t start,
                               std::vector<std::size_t>& current,
                               std::vector<std::vector<std::size_t>>& out) {
        out.push_back(current);
        for (std::size_t i = start; i < items.size(); ++i) {
            bool ok = true;
            for (std::size_t j : current)
                if (!footprints_disjoint(*items[i], *items[j])) {
                    ok = false;
                    break;
                }
            if (!ok) continue;
            current.push_back(i);
            build_families(items, i + 1, current, out);
            current.pop_back();
        }
    }

    // boundary profile for a subregion: frozen colors on every site within
    // kernel range, taken from the window background and the outer colors
    BoundaryProfile boundary_profile_within(const Region& sub,
                                            const std::vector<int>& background) const {
        const Region layer = boundary_layer(sub, kernel_.range(), LayerSide::outer);
        std::vector<int> cols;
        std::vector<Site> sites;
        for (const Site& s : layer.sites()) {
            if (window_.contains(s)) {
                sites.push_back(s);
                cols.push_back(background[window_.index_of(s)]);
            } else if (bc_region_.contains(s)) {
                sites.push_back(s);
                cols.push_back(bc_colors_[bc_region_.index_of(s)]);
            } else {
                throw std::invalid_argument("ContourLab: boundary region does not screen the window");
            }
        }
        return BoundaryProfile::custom_colors(Q_, Region(sub.dim(), std::move(sites)), cols);
    }

    BoundaryProfile boundary_profile_for(const Region& sub) const {
        const Region layer = boundary_layer(sub, kernel_.range(), LayerSide::outer);
        std::vector<int> cols;
        std::vector<Site> sites;
        for (const Site& s : layer.sites()) {
            if (!bc_region_.contains(s))
                throw std::invalid_argument("ContourLab: boundary region does not screen the window");
            sites.push_back(s);
            cols.push_back(bc_colors_[bc_region_.index_of(s)]);
        }
        return BoundaryProfile::custom_colors(Q_, Region(sub.dim(), std::move(sites)), cols);
    }

    // all block spin patterns carrying a given eta label
    std::vector<std::vector<int>> block_configs_for_label(int label) const {
        const auto it = block_table_.find(label);
        if (it == block_table_.end() || it->second.empty())
            throw std::invalid_argument("ContourLab: no block configuration carries label " +
                                        std::to_string(label));
        return it->second;
    }

    void build_block_tables() {
        int cells = 1;
        for (int k = 0; k < window_.dim(); ++k) cells *= scales_.ell_minus;
        long double total = 1.0L;
        for (int k = 0; k < cells; ++k) total *= Q_;
        if (total > 65536.0L)
            throw std::invalid_argument("ContourLab: block alphabet too large to tabulate");
        std::vector<int> cfg(static_cast<std::size_t>(cells), 0);
        while (true) {
            Simplex avg(static_cast<std::size_t>(Q_), 0.0);
            for (int c : cfg) avg[static_cast<std::size_t>(c)] += 1.0 / cells;
            int label = 0;
            int matches = 0;
            for (std::size_t q = 0; q < refs_.ordered.size(); ++q)
                if (sup_dist(avg, refs_.ordered[q]) < acc_.zeta) {
                    label = static_cast<int>(q) + 1;
                    ++matches;
                }
            if (sup_dist(avg, refs_.disordered) < acc_.zeta) {
                label = -1;
                ++matches;
            }
            if (matches > 1) throw std::logic_error("ContourLab: ambiguous block label");
            block_table_[label].push_back(cfg);
            std::size_t k = cfg.size();
            bool done = true;
            while (k > 0) {
                --k;
                if (++cfg[k] < Q_) {
                    done = false;
                    break;
                }
                cfg[k] = 0;
            }
            if (done) break;
        }
    }

    // event check on the composite field: eta matches the frozen labels on the
    // support, Theta matches the collar decomposition, exterior collar is pure
    bool event_holds(const Contour& g, const std::vector<int>& sigma, const Region& rregion,
                     const std::vector<int>& background) const {
        std::vector<int> colors = background;
        const auto& rs = rregion.sites();
        for (std::size_t i = 0; i < rs.size(); ++i)
            colors[window_.index_of(rs[i])] = sigma[i];
        const CompositeFields f = fields_for(colors);
        for (std::size_t i = 0; i < g.eta_frozen.corners.size(); ++i) {
            const auto lab = f.eta.label_at(g.eta_frozen.corners[i]);
            if (!lab || *lab != g.eta_frozen.labels[i]) return false;
        }
        for (std::size_t i = 0; i < g.collar.size(); ++i) {
            const auto lab = f.theta.label_at(g.collar[i]);
            if (!lab || *lab != g.collar_labels[i]) return false;
        }
        return true;
    }

    bool pure_phase_extends(const std::vector<int>& sigma, const Region& rregion,
                            const std::vector<int>& background) const {
        std::vector<int> colors = background;
        const auto& rs = rregion.sites();
        for (std::size_t i = 0; i < rs.size(); ++i)
            colors[window_.index_of(rs[i])] = sigma[i];
        const CompositeFields f = fields_for(colors);
        const CubePartition part(scales_.ell_plus, window_.dim());
        std::vector<Site> cubes;
        for (const Site& s : rregion.sites()) {
            const Site c = cube_of(s, part);
            if (cubes.empty() || cubes.back() != c) cubes.push_back(c);
        }
        std::sort(cubes.begin(), cubes.end());
        cubes.erase(std::unique(cubes.begin(), cubes.end()), cubes.end());
        // support cubes and the collar ring
        std::vector<Site> check = cubes;
        const int lp = scales_.ell_plus;
        const int d = window_.dim();
        for (const Site& c : cubes)
            for (int a = -1; a <= 1; ++a)
                for (int b = (d > 1 ? -1 : 0); b <= (d > 1 ? 1 : 0); ++b)
                    for (int e = (d > 2 ? -1 : 0); e <= (d > 2 ? 1 : 0); ++e)
                        check.push_back(Site{c[0] + a * lp, c[1] + b * lp, c[2] + e * lp});
        std::sort(check.begin(), check.end());
        check.erase(std::unique(check.begin(), check.end()), check.end());
        for (const Site& c : check) {
            const auto lab = f.theta.label_at(c);
            if (!lab) continue;  // outside the composite domain
            if (*lab != p_label_) return false;
        }
        return true;
    }

    int Q_;
    double beta_;
    KacKernel kernel_;
    ScaleTriple scales_;
    PhaseReferences refs_;
    Accuracy acc_;
    Region window_;
    Region bc_region_;
    std::vector<int> bc_colors_;
    int p_label_;
    std::optional<PottsSystem> window_system_;
    std::map<int, std::vector<std::vector<int>>> block_table_;
};

} // namespace pottskac
