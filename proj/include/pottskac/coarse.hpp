#pragma once

// Coarse graining: the three dyadic scales, empirical block averages, rounding
// onto the discrete simplex grid, and the phase indicator fields eta and Theta.

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "geometry.hpp"
#include "meanfield.hpp"
#include "simplex.hpp"

namespace pottskac {

namespace detail {

inline bool power_of_two(int x) { return x >= 1 && (x & (x - 1)) == 0; }

inline std::string site_str(const Site& s) {
    return "(" + std::to_string(s[0]) + "," + std::to_string(s[1]) + "," +
           std::to_string(s[2]) + ")";
}

} // namespace detail

// the three block scales; dyadic, each dividing the next
struct ScaleTriple {
    int ell0 = 1, ell_minus = 1, ell_plus = 1;
    bool asymptotic = false;
    double gamma = 0.0, alpha = 0.0;  // set when derived from gamma

    static ScaleTriple manual(int l0, int lm, int lp) {
        ScaleTriple s;
        s.ell0 = l0;
        s.ell_minus = lm;
        s.ell_plus = lp;
        s.validate(false);
        return s;
    }

    void validate(bool strict) const {
        if (!detail::power_of_two(ell0) || !detail::power_of_two(ell_minus) ||
            !detail::power_of_two(ell_plus))
            throw std::invalid_argument("ScaleTriple: scales must be powers of two");
        if (ell_minus % ell0 != 0 || ell_plus % ell_minus != 0)
            throw std::invalid_argument("ScaleTriple: each scale must divide the next");
        if (strict && !(ell0 < ell_minus && ell_minus < ell_plus))
            throw std::invalid_argument("ScaleTriple: l0 < l- < l+ violated");
    }
};

// dyadic scales from the interaction range: l0 = 2^floor(L/2),
// l_-+ = 2^floor((1 -+ alpha) L) with L = log2(1/gamma)
inline ScaleTriple scales_from_gamma(double gamma, double alpha, int d) {
    if (!(gamma > 0.0 && gamma < 1.0))
        throw std::invalid_argument("scales_from_gamma: gamma must be in (0,1)");
    if (!(alpha > 0.0))
        throw std::invalid_argument("scales_from_gamma: alpha must be positive");
    if (!(alpha < 1.0 / (16.0 * d)))
        throw std::invalid_argument("scales_from_gamma: alpha < 1/(16 d) violated");
    const double L = std::log2(1.0 / gamma);
    auto pow2floor = [](double e) {
        const int k = static_cast<int>(std::floor(e));
        if (k < 0 || k > 30)
            throw std::invalid_argument("scales_from_gamma: scale exponent out of range");
        return 1 << k;
    };
    ScaleTriple s;
    s.ell0 = pow2floor(0.5 * L);
    s.ell_minus = pow2floor((1.0 - alpha) * L);
    s.ell_plus = pow2floor((1.0 + alpha) * L);
    s.asymptotic = true;
    s.gamma = gamma;
    s.alpha = alpha;
    s.validate(true);
    return s;
}

// the labelled reference vectors the eta indicator compares block averages to:
// one per ordered phase plus the disordered one
struct PhaseReferences {
    std::vector<Simplex> ordered;  // ordered[q] tagged with label q+1
    Simplex disordered;

    static PhaseReferences from_minimizers(const MinimizerSet& ms) {
        if (!ms.disordered || ms.ordered_vectors().empty())
            throw std::invalid_argument("PhaseReferences: need both phases; use a beta with coexistence");
        PhaseReferences r;
        r.ordered = ms.ordered_vectors();
        r.disordered = *ms.disordered;
        return r;
    }

    // coexistence minimizers at the mean-field transition point
    static PhaseReferences mean_field(int Q) {
        const double beta_c = beta_thresholds(Q).second;
        return from_minimizers(minimizer_set(MeanFieldParams(Q, beta_c)));
    }

    // vertex family: e_q plus the uniform vector; resolvable at tiny block
    // scales where the mean-field family is not
    static PhaseReferences vertices(int Q) {
        PhaseReferences r;
        for (int q = 0; q < Q; ++q) r.ordered.push_back(vertex_simplex(Q, q));
        r.disordered = uniform_simplex(Q);
        return r;
    }

    int count() const { return static_cast<int>(ordered.size()) + 1; }

    // minimal pairwise sup-norm distance within the family
    double min_separation() const {
        double m = std::numeric_limits<double>::infinity();
        std::vector<const Simplex*> all;
        for (const Simplex& v : ordered) all.push_back(&v);
        all.push_back(&disordered);
        for (std::size_t i = 0; i < all.size(); ++i)
            for (std::size_t j = i + 1; j < all.size(); ++j)
                m = std::min(m, sup_dist(*all[i], *all[j]));
        return m;
    }
};

// accuracy radius for the eta indicator; must leave the reference vectors
// mutually resolvable (at most one within zeta of any block average)
struct Accuracy {
    double zeta = 0.0;
    bool asymptotic = false;
    double gamma = 0.0, a = 0.0;

    static Accuracy manual(double zeta, const PhaseReferences& refs) {
        Accuracy acc;
        acc.zeta = zeta;
        acc.validate(refs);
        return acc;
    }

    // zeta = gamma^a with the exponent constraints that keep the asymptotic
    // scale hierarchy consistent
    static Accuracy from_gamma(double gamma, double a, double alpha, int d,
                               const PhaseReferences& refs) {
        if (!(gamma > 0.0 && gamma < 1.0))
            throw std::invalid_argument("Accuracy: gamma must be in (0,1)");
        if (!(a > 0.0 && a < std::min(0.25, alpha / 2.0)))
            throw std::invalid_argument("Accuracy: a < min(1/4, alpha/2) violated");
        if (!(-d * (1.0 - alpha) + 2.0 * a < -2.0 * d * alpha))
            throw std::invalid_argument("Accuracy: -d(1-alpha) + 2a < -2 d alpha violated");
        Accuracy acc;
        acc.zeta = std::pow(gamma, a);
        acc.asymptotic = true;
        acc.gamma = gamma;
        acc.a = a;
        acc.validate(refs);
        return acc;
    }

    void validate(const PhaseReferences& refs) const {
        if (!(zeta > 0.0)) throw std::invalid_argument("Accuracy: zeta must be positive");
        const double half_sep = 0.5 * refs.min_separation();
        if (!(zeta < half_sep))
            throw std::invalid_argument(
                "Accuracy: zeta = " + std::to_string(zeta) +
                " not below half the minimal reference separation " +
                std::to_string(half_sep) + "; eta would be ill-defined");
    }
};

// piecewise-constant simplex-valued profile on an ell-cube partition
struct CoarseProfile {
    int ell = 1;
    int dim = 1;
    std::vector<Site> corners;   // sorted cube corners
    std::vector<Simplex> values;  // aligned with corners

    std::optional<std::size_t> index_of(const Site& corner) const {
        const auto it = std::lower_bound(corners.begin(), corners.end(), corner);
        if (it == corners.end() || *it != corner) return std::nullopt;
        return static_cast<std::size_t>(it - corners.begin());
    }

    const Simplex& value_at(const Site& corner) const {
        const auto i = index_of(corner);
        if (!i) throw std::out_of_range("CoarseProfile: no cube at corner " + detail::site_str(corner));
        return values[*i];
    }

    // the fine-lattice region covered by the cubes
    Region covered_region() const {
        std::vector<Site> sites;
        const CubePartition part(ell, dim);
        for (const Site& c : corners)
            for (const Site& s : cube_box(c, part).sites()) sites.push_back(s);
        return Region(dim, std::move(sites));
    }
};

// per-cube color frequencies of a spin configuration; the region must be a
// union of full ell-cubes
inline CoarseProfile empirical_average(const Region& region, const std::vector<int>& colors,
                                       int Q, int ell) {
    if (colors.size() != region.size())
        throw std::invalid_argument("empirical_average: color vector size mismatch");
    const CubePartition part(ell, region.dim());
    const double cells = std::pow(static_cast<double>(ell), region.dim());

    CoarseProfile prof;
    prof.ell = ell;
    prof.dim = region.dim();
    std::vector<std::int64_t> counts;  // per corner, flattened Q counts
    const auto& sites = region.sites();
    for (std::size_t i = 0; i < sites.size(); ++i) {
        const Site corner = cube_of(sites[i], part);
        auto idx = [&]() -> std::size_t {
            const auto it = std::lower_bound(prof.corners.begin(), prof.corners.end(), corner);
            const auto at = static_cast<std::size_t>(it - prof.corners.begin());
            if (it == prof.corners.end() || *it != corner) {
                prof.corners.insert(it, corner);
                counts.insert(counts.begin() + static_cast<std::ptrdiff_t>(at * Q), Q, 0);
            }
            return at;
        }();
        counts[idx * static_cast<std::size_t>(Q) + static_cast<std::size_t>(colors[i])] += 1;
    }
    prof.values.resize(prof.corners.size());
    for (std::size_t c = 0; c < prof.corners.size(); ++c) {
        std::int64_t tot = 0;
        Simplex v(static_cast<std::size_t>(Q));
        for (int q = 0; q < Q; ++q) {
            const auto n = counts[c * static_cast<std::size_t>(Q) + static_cast<std::size_t>(q)];
            tot += n;
            v[static_cast<std::size_t>(q)] = static_cast<double>(n) / cells;
        }
        if (tot != static_cast<std::int64_t>(cells))
            throw std::invalid_argument("empirical_average: region is not " + std::to_string(ell) +
                                        "-measurable at cube corner " + detail::site_str(prof.corners[c]));
        prof.values[c] = std::move(v);
    }
    return prof;
}

struct RoundingReport {
    int adjusted = 0;  // components moved by the sum repair
};

// nearest grid point in {m/cells : m integer >= 0, sum m = cells}: round half
// up per component, then largest-remainder repair of the total.  When no
// repair fires the result is the unique vector with componentwise error in
// (-1/(2 cells), 1/(2 cells)]; repaired components stay within 1/cells.
inline Simplex round_to_grid(const Simplex& rho, std::int64_t cells, RoundingReport* report = nullptr) {
    if (cells <= 0) throw std::invalid_argument("round_to_grid: cells must be positive");
    const std::size_t Q = rho.size();
    std::vector<std::int64_t> m(Q);
    std::vector<double> exact(Q);
    std::int64_t total = 0;
    for (std::size_t k = 0; k < Q; ++k) {
        exact[k] = static_cast<double>(cells) * rho[k];
        m[k] = static_cast<std::int64_t>(std::floor(exact[k] + 0.5));  // unique value in (x-1/2, x+1/2]
        if (m[k] < 0) m[k] = 0;
        total += m[k];
    }
    int adjusted = 0;
    while (total != cells) {
        // pick the component with the largest slack in the useful direction;
        // smallest index wins ties
        std::size_t best = Q;
        double best_slack = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < Q; ++k) {
            const double slack = (total > cells)
                                     ? static_cast<double>(m[k]) - exact[k]
                                     : exact[k] - static_cast<double>(m[k]);
            if (total > cells && m[k] == 0) continue;  // keep components nonnegative
            if (slack > best_slack) {
                best_slack = slack;
                best = k;
            }
        }
        if (best == Q) throw std::logic_error("round_to_grid: repair failed");
        m[best] += (total > cells) ? -1 : 1;
        total += (total > cells) ? -1 : 1;
        ++adjusted;
    }
    if (report) report->adjusted = adjusted;
    Simplex out(Q);
    for (std::size_t k = 0; k < Q; ++k)
        out[k] = static_cast<double>(m[k]) / static_cast<double>(cells);
    return out;
}

inline CoarseProfile round_profile(const CoarseProfile& prof, RoundingReport* report = nullptr) {
    std::int64_t cells = 1;
    for (int k = 0; k < prof.dim; ++k) cells *= prof.ell;
    CoarseProfile out = prof;
    int adjusted = 0;
    for (Simplex& v : out.values) {
        RoundingReport r;
        v = round_to_grid(v, cells, &r);
        adjusted += r.adjusted;
    }
    if (report) report->adjusted = adjusted;
    return out;
}

// label conventions: 1..Q ordered phase, -1 disordered, 0 undetermined
struct LabelField {
    int ell = 1;
    int dim = 1;
    std::vector<Site> corners;  // sorted
    std::vector<int> labels;    // aligned

    std::optional<int> label_at(const Site& corner) const {
        const auto it = std::lower_bound(corners.begin(), corners.end(), corner);
        if (it == corners.end() || *it != corner) return std::nullopt;
        return labels[static_cast<std::size_t>(it - corners.begin())];
    }
};

// eta: per block, the unique reference within zeta in sup norm, else 0.
// Uniqueness is guaranteed by the Accuracy invariant and asserted anyway.
inline LabelField phase_indicator_eta(const CoarseProfile& prof, const PhaseReferences& refs,
                                      const Accuracy& acc) {
    acc.validate(refs);
    LabelField f;
    f.ell = prof.ell;
    f.dim = prof.dim;
    f.corners = prof.corners;
    f.labels.reserve(prof.values.size());
    for (const Simplex& v : prof.values) {
        int label = 0;
        int matches = 0;
        for (std::size_t q = 0; q < refs.ordered.size(); ++q)
            if (sup_dist(v, refs.ordered[q]) < acc.zeta) {
                label = static_cast<int>(q) + 1;
                ++matches;
            }
        if (sup_dist(v, refs.disordered) < acc.zeta) {
            label = -1;
            ++matches;
        }
        if (matches > 1)
            throw std::logic_error("phase_indicator_eta: two references within zeta of one block");
        f.labels.push_back(label);
    }
    return f;
}

// Theta at scale l+: the label p on a cube iff eta is identically p on every
// l- cube of that cube and of all its *-adjacent l+ cubes (own cube included).
// Needs eta on the target plus a one-cube collar; a missing eta cube is an error.
inline LabelField phase_indicator_theta(const LabelField& eta, const ScaleTriple& scales,
                                        const std::vector<Site>& target_corners) {
    if (eta.ell != scales.ell_minus)
        throw std::invalid_argument("phase_indicator_theta: eta field is not at scale l-");
    const int lp = scales.ell_plus;
    const int lm = scales.ell_minus;
    const int ratio = lp / lm;
    const int d = eta.dim;

    LabelField out;
    out.ell = lp;
    out.dim = d;
    out.corners = target_corners;
    std::sort(out.corners.begin(), out.corners.end());
    out.labels.reserve(out.corners.size());

    for (const Site& corner : out.corners) {
        int common = 0;
        bool first = true;
        bool uniform = true;
        // scan the 3^d neighborhood of l+ cubes
        for (int a = -1; a <= 1 && uniform; ++a)
            for (int b = (d > 1 ? -1 : 0); b <= (d > 1 ? 1 : 0) && uniform; ++b)
                for (int c = (d > 2 ? -1 : 0); c <= (d > 2 ? 1 : 0) && uniform; ++c) {
                    const Site nb{corner[0] + a * lp, corner[1] + b * lp, corner[2] + c * lp};
                    // every l- cube inside this l+ cube
                    for (int i = 0; i < ratio && uniform; ++i)
                        for (int j = 0; j < (d > 1 ? ratio : 1) && uniform; ++j)
                            for (int k = 0; k < (d > 2 ? ratio : 1) && uniform; ++k) {
                                const Site sub{nb[0] + i * lm, nb[1] + j * lm, nb[2] + k * lm};
                                const auto lab = eta.label_at(sub);
                                if (!lab)
                                    throw std::invalid_argument(
                                        "phase_indicator_theta: eta field missing cube at corner " +
                                        detail::site_str(sub) + " required by the collar");
                                if (*lab == 0) {
                                    uniform = false;
                                } else if (first) {
                                    common = *lab;
                                    first = false;
                                } else if (*lab != common) {
                                    uniform = false;
                                }
                            }
                }
        out.labels.push_back(uniform ? common : 0);
    }
    return out;
}

// minimal sup-norm distance between the cube point sets of any two blocks
// carrying distinct nonzero labels; +inf when no such pair exists
inline double min_phase_separation(const LabelField& theta) {
    double best = std::numeric_limits<double>::infinity();
    const int span = theta.ell - 1;
    for (std::size_t i = 0; i < theta.corners.size(); ++i) {
        if (theta.labels[i] == 0) continue;
        for (std::size_t j = i + 1; j < theta.corners.size(); ++j) {
            if (theta.labels[j] == 0 || theta.labels[j] == theta.labels[i]) continue;
            double dist = 0.0;
            for (int k = 0; k < theta.dim; ++k) {
                const int lo_i = theta.corners[i][k], hi_i = lo_i + span;
                const int lo_j = theta.corners[j][k], hi_j = lo_j + span;
                const int gap = std::max({0, lo_j - hi_i, lo_i - hi_j});
                dist = std::max(dist, static_cast<double>(gap));
            }
            best = std::min(best, dist);
        }
    }
    return best;
}

} // namespace pottskac
