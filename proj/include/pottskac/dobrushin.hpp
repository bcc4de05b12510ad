#pragma once

// Single-site Vaserstein metric, good sets around a reference phase, and the
// Dobrushin influence matrix b(i,j) with row-sum contraction reports for the
// u-interpolated one-site conditionals.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "coarse.hpp"
#include "kernel.hpp"

namespace pottskac {

// half-L1 distance between two color measures; equals the off-diagonal mass
// of the optimal coupling, the one keeping min(mu1_q, mu2_q) on the diagonal
inline double vaserstein_site(const Simplex& mu1, const Simplex& mu2) {
    if (mu1.size() != mu2.size())
        throw std::invalid_argument("vaserstein_site: measure size mismatch");
    double s = 0.0;
    for (std::size_t q = 0; q < mu1.size(); ++q) s += std::abs(mu1[q] - mu2[q]);
    return 0.5 * s;
}

// cube-count separation entering the exponential tail: never below 3^d, never
// below the sup-norm distance measured in cubes of side l+
inline int cube_count_bound(const Site& i, const Site& j, int ell_plus, int dim) {
    int pow3 = 1;
    for (int k = 0; k < dim; ++k) pow3 *= 3;
    const int dist = sup_norm(i, j);
    return std::max(pow3, (dist + ell_plus - 1) / ell_plus);
}

// influence coefficient b(i,j): the pair-interaction term scaled by u plus an
// optional configuration-independent exponential tail; zero on the diagonal
inline double dobrushin_entry(const KacKernel& kernel, int Q, double u, double tail_rate,
                              int ell_plus, const Site& i, const Site& j,
                              bool include_tail) {
    if (i == j) return 0.0;
    double v = u * kernel.evaluate(i, j);
    if (include_tail) {
        int pow3 = 1;
        for (int k = 0; k < kernel.dim(); ++k) pow3 *= 3;
        const int n = cube_count_bound(i, j, ell_plus, kernel.dim());
        v += static_cast<double>(pow3) * std::exp(-0.5 * tail_rate * n);
    }
    return (1.0 - 1.0 / (2.0 * Q)) * v;
}

// influence matrix over one partition cube of side l-, with row sums taken
// over that cube; `contracts` records whether the sup row sum is below one
struct DobrushinMatrix {
    double gamma = 0.0, beta = 0.0, u = 0.0, tail_rate = 0.0;
    bool tail_included = false;
    int Q = 0, dim = 1, ell_minus = 1;
    std::vector<Site> sites;                   // cube sites, sorted
    std::vector<std::vector<double>> entries;  // entries[r][c] = b(sites[r], sites[c])
    std::vector<double> row_sums;
    double sup_row_sum = 0.0;
    bool contracts = false;
};

inline DobrushinMatrix dobrushin_matrix(const KacKernel& kernel, int Q, double beta,
                                        double u, double tail_rate,
                                        const ScaleTriple& scales,
                                        bool include_tail = false) {
    if (Q < 2) throw std::invalid_argument("dobrushin_matrix: Q must be at least 2");
    if (!(beta > 0.0))
        throw std::invalid_argument("dobrushin_matrix: beta must be positive");
    if (!(u >= 0.0 && u <= 1.0))
        throw std::invalid_argument("dobrushin_matrix: u must lie in [0,1]");
    if (!(tail_rate > 0.0))
        throw std::invalid_argument("dobrushin_matrix: tail rate must be positive");

    DobrushinMatrix m;
    m.gamma = kernel.gamma();
    m.beta = beta;
    m.u = u;
    m.tail_rate = tail_rate;
    m.tail_included = include_tail;
    m.Q = Q;
    m.dim = kernel.dim();
    m.ell_minus = scales.ell_minus;
    m.sites = cube_box(Site{0, 0, 0}, CubePartition(scales.ell_minus, kernel.dim())).sites();

    const std::size_t n = m.sites.size();
    m.entries.assign(n, std::vector<double>(n, 0.0));
    m.row_sums.assign(n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        double row = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            const double b = dobrushin_entry(kernel, Q, u, tail_rate, scales.ell_plus,
                                             m.sites[r], m.sites[c], include_tail);
            m.entries[r][c] = b;
            row += b;
        }
        m.row_sums[r] = row;
        m.sup_row_sum = std::max(m.sup_row_sum, row);
    }
    m.contracts = m.sup_row_sum < 1.0;
    return m;
}

// interpolation state of the one-site conditionals: at u = 1 the field is the
// pure pair interaction, at u = 0 the frozen reference density
struct InterpolatedField {
    double u = 1.0;
    int phase_label = 1;  // 1..Q an ordered color, -1 the disordered phase
    Simplex rho_ref;
};

inline InterpolatedField make_interpolated_field(double u, int phase_label,
                                                 const PhaseReferences& refs) {
    if (!(u >= 0.0 && u <= 1.0))
        throw std::invalid_argument("InterpolatedField: u must lie in [0,1]");
    const int Q = static_cast<int>(refs.ordered.size());
    if (phase_label != -1 && !(phase_label >= 1 && phase_label <= Q))
        throw std::invalid_argument("InterpolatedField: phase label must be 1..Q or -1");
    InterpolatedField f;
    f.u = u;
    f.phase_label = phase_label;
    f.rho_ref = phase_label > 0 ? refs.ordered[static_cast<std::size_t>(phase_label - 1)]
                                : refs.disordered;
    return f;
}

struct ContractionPair {
    double lhs = 0.0;  // Vaserstein distance of the two conditionals
    double rhs = 0.0;  // sum of b(i,j) over the differing sites
};

// bundles the kernel, the interpolated field, and the coarse phase machinery;
// all configuration arguments are color vectors aligned with a region
class DobrushinLab {
public:
    DobrushinLab(KacKernel kernel, int Q, double beta, InterpolatedField field,
                 ScaleTriple scales, PhaseReferences refs, Accuracy accuracy,
                 double tail_rate = 1.0, bool include_tail = false)
        : kernel_(std::move(kernel)),
          Q_(Q),
          beta_(beta),
          field_(std::move(field)),
          scales_(scales),
          refs_(std::move(refs)),
          accuracy_(accuracy),
          tail_rate_(tail_rate),
          include_tail_(include_tail) {
        if (Q_ < 2) throw std::invalid_argument("DobrushinLab: Q must be at least 2");
        if (!(beta_ > 0.0))
            throw std::invalid_argument("DobrushinLab: beta must be positive");
        if (!(tail_rate_ > 0.0))
            throw std::invalid_argument("DobrushinLab: tail rate must be positive");
        if (refs_.ordered.size() != static_cast<std::size_t>(Q_) ||
            refs_.disordered.size() != static_cast<std::size_t>(Q_) ||
            field_.rho_ref.size() != static_cast<std::size_t>(Q_))
            throw std::invalid_argument("DobrushinLab: reference vectors do not match Q");
    }

    const KacKernel& kernel() const { return kernel_; }
    int Q() const { return Q_; }
    double beta() const { return beta_; }
    const InterpolatedField& field() const { return field_; }
    const ScaleTriple& scales() const { return scales_; }
    const PhaseReferences& references() const { return refs_; }
    const Accuracy& accuracy() const { return accuracy_; }
    double tail_rate() const { return tail_rate_; }
    bool tail_included() const { return include_tail_; }

    // effective field k at the conditioned site: u times the pair interaction
    // with the surrounding colors plus (1-u) times the lattice-summed kernel
    // weight on the frozen reference; needs the kernel neighborhood in-region
    std::vector<double> effective_field(const Region& region, const std::vector<int>& colors,
                                        const Site& i) const {
        check_configuration(region, colors);
        if (!region.contains(i))
            throw std::invalid_argument("effective_field: conditioned site not in region");
        std::vector<double> k(static_cast<std::size_t>(Q_), 0.0);
        for (const KacKernel::Displacement& t : kernel_.displacements()) {
            if (t.dv == Site{0, 0, 0}) continue;
            Site j = i;
            for (int a = 0; a < 3; ++a) j[a] += t.dv[a];
            if (!region.contains(j))
                throw std::invalid_argument("effective_field: kernel neighborhood of site " +
                                            detail::site_str(i) +
                                            " is not covered by the region");
            k[static_cast<std::size_t>(colors[region.index_of(j)])] += field_.u * t.value;
        }
        const double ref_weight =
            (1.0 - field_.u) * (kernel_.lattice_normalization() - kernel_.evaluate(i, i));
        for (int q = 0; q < Q_; ++q)
            k[static_cast<std::size_t>(q)] += ref_weight * field_.rho_ref[static_cast<std::size_t>(q)];
        return k;
    }

    // Gibbs conditional of the color at i under the interpolated field
    Simplex conditional(const Region& region, const std::vector<int>& colors,
                        const Site& i) const {
        const std::vector<double> k = effective_field(region, colors, i);
        double m = k[0];
        for (double x : k) m = std::max(m, x);
        Simplex g(k.size());
        double z = 0.0;
        for (std::size_t q = 0; q < k.size(); ++q) {
            g[q] = std::exp(beta_ * (k[q] - m));
            z += g[q];
        }
        for (double& x : g) x /= z;
        return g;
    }

    // whether every l- block average carries the reference phase label
    bool in_phase_tube(const Region& region, const std::vector<int>& colors) const {
        check_configuration(region, colors);
        const CoarseProfile prof = empirical_average(region, colors, Q_, scales_.ell_minus);
        const LabelField eta = phase_indicator_eta(prof, refs_, accuracy_);
        for (int lab : eta.labels)
            if (lab != field_.phase_label) return false;
        return true;
    }

    // true when every recoloring of the conditioned site stays in the tube;
    // the outcome never depends on the current color at i
    bool good_set_membership(const Region& region, const std::vector<int>& colors,
                             const Site& i) const {
        check_configuration(region, colors);
        const std::size_t at = region.index_of(i);
        if (!in_phase_tube(region, colors))
            throw std::invalid_argument(
                "good_set_membership: configuration is outside the phase tube");
        std::vector<int> probe = colors;
        for (int q = 0; q < Q_; ++q) {
            probe[at] = q;
            if (!in_phase_tube(region, probe)) return false;
        }
        return true;
    }

    double coefficient(const Site& i, const Site& j) const {
        return dobrushin_entry(kernel_, Q_, field_.u, tail_rate_, scales_.ell_plus, i, j,
                               include_tail_);
    }

    DobrushinMatrix matrix() const {
        return dobrushin_matrix(kernel_, Q_, beta_, field_.u, tail_rate_, scales_,
                                include_tail_);
    }

    // Vaserstein distance of the two conditionals at i against the influence
    // bound summed over the differing sites; both configurations must agree
    // at i and lie in its good set
    ContractionPair contraction_check(const Region& region, const std::vector<int>& colors1,
                                      const std::vector<int>& colors2, const Site& i) const {
        check_configuration(region, colors1);
        check_configuration(region, colors2);
        const std::size_t at = region.index_of(i);
        if (colors1[at] != colors2[at])
            throw std::invalid_argument(
                "contraction_check: configurations must agree at the conditioned site");
        if (!good_set_membership(region, colors1, i) ||
            !good_set_membership(region, colors2, i))
            throw std::invalid_argument(
                "contraction_check: both configurations must lie in the good set of the "
                "conditioned site");
        ContractionPair out;
        out.lhs = vaserstein_site(conditional(region, colors1, i),
                                  conditional(region, colors2, i));
        const std::vector<Site>& sites = region.sites();
        for (std::size_t s = 0; s < sites.size(); ++s)
            if (colors1[s] != colors2[s]) out.rhs += coefficient(i, sites[s]);
        return out;
    }

private:
    void check_configuration(const Region& region, const std::vector<int>& colors) const {
        if (region.dim() != kernel_.dim())
            throw std::invalid_argument("DobrushinLab: region dimension mismatch");
        if (colors.size() != region.size())
            throw std::invalid_argument("DobrushinLab: color vector size mismatch");
        for (int c : colors)
            if (c < 0 || c >= Q_)
                throw std::invalid_argument("DobrushinLab: color out of range");
    }

    KacKernel kernel_;
    int Q_;
    double beta_;
    InterpolatedField field_;
    ScaleTriple scales_;
    PhaseReferences refs_;
    Accuracy accuracy_;
    double tail_rate_;
    bool include_tail_;
};

} // namespace pottskac
