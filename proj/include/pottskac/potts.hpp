#pragma once

// Lattice Potts-Kac model: spin configurations on a finite region, the
// Hamiltonian with simplex-valued boundary profiles, exact partition sums by
// enumeration, single-site conditionals, and a raster-order heat-bath sampler.

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "geometry.hpp"
#include "kernel.hpp"
#include "rng.hpp"
#include "simplex.hpp"

namespace pottskac {

// Boundary condition: a simplex-valued profile on a collar around the region,
// or the periodic tag (diagnostic only; rejected by the functional and
// contour layers, marked as such in run metadata).
class BoundaryProfile {
public:
    enum class Tag { ordered, disordered, custom, periodic };

    static BoundaryProfile ordered(int Q, int color, Region collar) {
        BoundaryProfile b(Tag::ordered, Q, std::move(collar));
        b.ordered_color_ = color;
        b.constant_ = vertex_simplex(Q, color);
        return b;
    }

    static BoundaryProfile disordered(int Q, Region collar) {
        BoundaryProfile b(Tag::disordered, Q, std::move(collar));
        b.constant_ = uniform_simplex(Q);
        return b;
    }

    static BoundaryProfile custom(int Q, Region collar, std::vector<Simplex> values) {
        if (values.size() != collar.size())
            throw std::invalid_argument("BoundaryProfile: one value per collar site required");
        for (const Simplex& v : values)
            if (v.size() != static_cast<std::size_t>(Q) || !is_simplex(v))
                throw std::invalid_argument("BoundaryProfile: value off the simplex");
        BoundaryProfile b(Tag::custom, Q, std::move(collar));
        b.values_ = std::move(values);
        return b;
    }

    // frozen spin colors on the collar, as vertex simplex values
    static BoundaryProfile custom_colors(int Q, Region collar, const std::vector<int>& colors) {
        std::vector<Simplex> vals;
        vals.reserve(colors.size());
        for (int c : colors) vals.push_back(vertex_simplex(Q, c));
        return custom(Q, std::move(collar), std::move(vals));
    }

    static BoundaryProfile periodic(int Q) {
        return BoundaryProfile(Tag::periodic, Q, Region(1, {}));
    }

    Tag tag() const { return tag_; }
    int Q() const { return Q_; }
    int ordered_color() const { return ordered_color_; }
    bool is_periodic() const { return tag_ == Tag::periodic; }
    const Region& collar() const { return collar_; }

    bool covers(const Site& s) const { return collar_.contains(s); }

    const Simplex& at(const Site& s) const {
        if (tag_ == Tag::custom) {
            const auto& sites = collar_.sites();
            const auto it = std::lower_bound(sites.begin(), sites.end(), s);
            if (it == sites.end() || *it != s)
                throw std::out_of_range("BoundaryProfile: site outside collar");
            return values_[static_cast<std::size_t>(it - sites.begin())];
        }
        if (!covers(s)) throw std::out_of_range("BoundaryProfile: site outside collar");
        return constant_;
    }

    const char* tag_name() const {
        switch (tag_) {
            case Tag::ordered: return "ordered";
            case Tag::disordered: return "disordered";
            case Tag::custom: return "custom";
            default: return "periodic";
        }
    }

private:
    BoundaryProfile(Tag t, int Q, Region collar)
        : tag_(t), Q_(Q), collar_(std::move(collar)) {
        if (Q < 2) throw std::invalid_argument("BoundaryProfile: Q must be >= 2");
    }

    Tag tag_;
    int Q_;
    int ordered_color_ = -1;
    Region collar_;
    Simplex constant_;
    std::vector<Simplex> values_;
};

struct SpinConfig {
    Region region;
    int Q = 0;
    std::vector<int> colors;  // one entry per region site, region-sorted order
};

namespace detail {

// Kahan-compensated accumulator; enumeration oracles need the pair sums to
// stay below 1e-12 relative error
struct Kahan {
    double sum = 0.0, c = 0.0;
    void add(double x) {
        const double y = x - c;
        const double t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
};

// streaming log-sum-exp with a running maximum
struct LogAccumulator {
    double max_exp = -std::numeric_limits<double>::infinity();
    Kahan scaled;
    std::uint64_t terms = 0;

    void add(double x) {
        if (x > max_exp) {
            if (terms > 0) {
                const double f = std::exp(max_exp - x);
                scaled.sum *= f;
                scaled.c *= f;
            }
            max_exp = x;
        }
        scaled.add(std::exp(x - max_exp));
        ++terms;
    }

    double log() const {
        if (terms == 0) return -std::numeric_limits<double>::infinity();
        return max_exp + std::log(scaled.sum);
    }
};

} // namespace detail

// Region + boundary + kernel assembled once: per-site interior neighbor lists
// and precomputed boundary fields h_i[q] = sum_{j in collar} J(i,j) s_j[q].
class PottsSystem {
public:
    PottsSystem(Region region, BoundaryProfile bc, const KacKernel& kernel, int Q)
        : region_(std::move(region)), bc_(std::move(bc)), Q_(Q), dim_(region_.dim()) {
        if (Q < 2) throw std::invalid_argument("PottsSystem: Q must be >= 2");
        if (bc_.Q() != Q) throw std::invalid_argument("PottsSystem: boundary Q mismatch");
        if (region_.empty()) throw std::invalid_argument("PottsSystem: empty region");
        const auto& sites = region_.sites();
        const std::size_t n = sites.size();

        Box bounds = region_.bounding_box();
        if (bc_.is_periodic()) {
            if (static_cast<std::int64_t>(n) != bounds.volume())
                throw std::invalid_argument("PottsSystem: periodic boundary needs a full box region");
            for (int k = 0; k < dim_; ++k)
                side_[k] = bounds.hi[k] - bounds.lo[k] + 1;
        }

        neighbors_.resize(n);
        fields_.assign(n, Simplex(static_cast<std::size_t>(Q), 0.0));
        for (std::size_t i = 0; i < n; ++i) {
            const Site& x = sites[i];
            for (const auto& disp : kernel.displacements()) {
                if (disp.dv == Site{0, 0, 0}) continue;
                Site y{x[0] + disp.dv[0], x[1] + disp.dv[1], x[2] + disp.dv[2]};
                if (bc_.is_periodic()) {
                    for (int k = 0; k < dim_; ++k) {
                        int w = (y[k] - bounds.lo[k]) % side_[k];
                        if (w < 0) w += side_[k];
                        y[k] = bounds.lo[k] + w;
                    }
                    if (y == x) continue;  // displacement wraps onto the site itself
                    neighbors_[i].push_back({site_index(y), disp.value});
                    continue;
                }
                if (region_.contains(y)) {
                    neighbors_[i].push_back({site_index(y), disp.value});
                } else {
                    if (!bc_.covers(y))
                        throw std::invalid_argument(
                            "PottsSystem: boundary collar does not cover site (" +
                            std::to_string(y[0]) + "," + std::to_string(y[1]) + "," +
                            std::to_string(y[2]) + ")");
                    const Simplex& s = bc_.at(y);
                    for (int q = 0; q < Q; ++q)
                        fields_[i][static_cast<std::size_t>(q)] += disp.value * s[static_cast<std::size_t>(q)];
                }
            }
        }
    }

    const Region& region() const { return region_; }
    const BoundaryProfile& boundary() const { return bc_; }
    int Q() const { return Q_; }
    std::size_t size() const { return region_.size(); }

    std::size_t site_index(const Site& s) const {
        const auto& sites = region_.sites();
        const auto it = std::lower_bound(sites.begin(), sites.end(), s);
        if (it == sites.end() || *it != s)
            throw std::out_of_range("PottsSystem: site not in region");
        return static_cast<std::size_t>(it - sites.begin());
    }

    // H = -1/2 sum_{i != j in Lambda} J(i,j) [c_i = c_j] - sum_i h_i[c_i];
    // the boundary term carries no 1/2 (each boundary pair counted once)
    double hamiltonian(const std::vector<int>& colors) const {
        check_colors(colors);
        detail::Kahan pair_sum, field_sum;
        for (std::size_t i = 0; i < colors.size(); ++i) {
            const int ci = colors[i];
            for (const auto& [j, w] : neighbors_[i])
                if (colors[j] == ci) pair_sum.add(w);
            field_sum.add(fields_[i][static_cast<std::size_t>(ci)]);
        }
        return -0.5 * pair_sum.sum - field_sum.sum;
    }

    // effective field at site i: k_i[q] = sum_nbr J [c_j = q] + h_i[q]
    Simplex local_field(const std::vector<int>& colors, std::size_t i) const {
        Simplex k = fields_[i];
        for (const auto& [j, w] : neighbors_[i])
            k[static_cast<std::size_t>(colors[j])] += w;
        return k;
    }

    // Gibbs conditional at site i given all other colors
    Simplex site_conditional(const std::vector<int>& colors, std::size_t i, double beta) const {
        const Simplex k = local_field(colors, i);
        double m = k[0];
        for (double x : k) m = std::max(m, x);
        Simplex p(k.size());
        double z = 0.0;
        for (std::size_t q = 0; q < k.size(); ++q) {
            p[q] = std::exp(beta * (k[q] - m));
            z += p[q];
        }
        for (double& x : p) x /= z;
        return p;
    }

    double energy_change(const std::vector<int>& colors, std::size_t i, int to) const {
        const int from = colors[i];
        if (from == to) return 0.0;
        double d = 0.0;
        for (const auto& [j, w] : neighbors_[i]) {
            if (colors[j] == to) d -= w;
            if (colors[j] == from) d += w;
        }
        d -= fields_[i][static_cast<std::size_t>(to)] - fields_[i][static_cast<std::size_t>(from)];
        return d;
    }

private:
    void check_colors(const std::vector<int>& colors) const {
        if (colors.size() != region_.size())
            throw std::invalid_argument("PottsSystem: color vector size mismatch");
    }

    Region region_;
    BoundaryProfile bc_;
    int Q_;
    int dim_;
    int side_[3] = {1, 1, 1};
    std::vector<std::vector<std::pair<std::size_t, double>>> neighbors_;
    std::vector<Simplex> fields_;
};

// log of the constrained partition sum, streamed with a running max-shift.
// The optional predicate restricts the enumeration; rejecting everything is
// an error rather than a silent -inf.
inline double exact_partition(
    const PottsSystem& sys, double beta,
    const std::function<bool(const std::vector<int>&)>& constraint = {},
    std::uint64_t cap = 10'000'000) {
    const std::size_t n = sys.size();
    const int Q = sys.Q();
    // Q^n with overflow guard
    long double total_ld = 1.0L;
    for (std::size_t i = 0; i < n; ++i) total_ld *= Q;
    if (total_ld > static_cast<long double>(cap))
        throw std::invalid_argument(
            "exact_partition: enumeration needs " + std::to_string(static_cast<double>(total_ld)) +
            " terms, cap is " + std::to_string(cap));

    std::vector<int> colors(n, 0);
    double max_exp = -std::numeric_limits<double>::infinity();
    detail::Kahan scaled_sum;
    std::uint64_t kept = 0;
    while (true) {
        if (!constraint || constraint(colors)) {
            const double x = -beta * sys.hamiltonian(colors);
            if (x > max_exp) {
                // rescale the running sum to the new maximum
                if (kept > 0) {
                    const double f = std::exp(max_exp - x);
                    scaled_sum.sum *= f;
                    scaled_sum.c *= f;
                }
                max_exp = x;
            }
            scaled_sum.add(std::exp(x - max_exp));
            ++kept;
        }
        // odometer over colors, last site fastest
        std::size_t k = n;
        while (k > 0) {
            --k;
            if (++colors[k] < Q) break;
            colors[k] = 0;
            if (k == 0) goto done;
        }
    }
done:
    if (kept == 0)
        throw std::runtime_error("exact_partition: constraint rejects every configuration");
    return max_exp + std::log(scaled_sum.sum);
}

struct TrajectoryPoint {
    std::int64_t sweep;
    double energy;
    std::vector<double> densities;
};

// Raster-order heat bath: each sweep resamples every site from its Gibbs
// conditional in region-sorted order.  Energy is tracked incrementally and
// re-derived from scratch at the end (drift beyond 1e-8 would indicate a
// bookkeeping bug; the final point always carries the recomputed value).
inline std::vector<TrajectoryPoint>
heat_bath_run(const PottsSystem& sys, std::vector<int>& colors, double beta,
              std::int64_t sweeps, Rng& rng, std::int64_t record_every = 1) {
    const std::size_t n = sys.size();
    const int Q = sys.Q();
    double energy = sys.hamiltonian(colors);
    std::vector<TrajectoryPoint> traj;
    auto densities = [&] {
        std::vector<double> d(static_cast<std::size_t>(Q), 0.0);
        for (int c : colors) d[static_cast<std::size_t>(c)] += 1.0;
        for (double& x : d) x /= static_cast<double>(n);
        return d;
    };
    traj.push_back({0, energy, densities()});
    for (std::int64_t s = 1; s <= sweeps; ++s) {
        for (std::size_t i = 0; i < n; ++i) {
            const Simplex p = sys.site_conditional(colors, i, beta);
            const double u = rng.next_double();
            double acc = 0.0;
            int pick = Q - 1;
            for (int q = 0; q < Q; ++q) {
                acc += p[static_cast<std::size_t>(q)];
                if (u < acc) {
                    pick = q;
                    break;
                }
            }
            energy += sys.energy_change(colors, i, pick);
            colors[i] = pick;
        }
        if (s % record_every == 0 || s == sweeps)
            traj.push_back({s, energy, densities()});
    }
    const double fresh = sys.hamiltonian(colors);
    if (std::abs(fresh - energy) > 1e-6 * std::max(1.0, std::abs(fresh)))
        throw std::logic_error("heat_bath_run: incremental energy drifted from recomputation");
    traj.back().energy = fresh;
    return traj;
}

} // namespace pottskac
