#pragma once
// Monte Carlo experiments on the lattice model: hysteresis branch pairs under
// matching boundary profiles, a pseudo-critical estimator bisecting the edges
// of the branch-separation window, and contour censuses over recorded
// trajectory snapshots.
//
// Chains sample at beta divided by the discrete pair mass sum_{j != 0} J(0,j),
// so the beta axis of every experiment is on the same scale as the mean-field
// and functional modules; the discretization defect of the kernel mass would
// otherwise shift the lattice transition by O(gamma^d) for no physical reason.

#include "contour.hpp"
#include "potts.hpp"
#include "version.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace pottskac {

// run identity attached to every experiment result; two results with equal
// provenance are bit-identical
struct Provenance {
    std::string version = library_version;
    std::uint64_t seed = 0;
    int L = 0;
    int dim = 0;
    int Q = 0;
    double gamma = 0.0;
    std::int64_t sweeps = 0;
};

// observation window: an L^d box, either wrapped on itself or surrounded by a
// frozen collar wide enough to cover every kernel displacement leaving the box
struct Lattice {
    KacKernel kernel;
    int L = 0;
    int dim = 0;
    int Q = 0;
    int boundary_label = 0;  // 1..Q ordered collar, -1 disordered collar, 0 periodic
    double beta_scale = 1.0; // reciprocal discrete pair mass, applied when sampling
    Region interior;
    PottsSystem system;
};

inline Lattice make_lattice(int L, int dim, int Q, double gamma, int boundary_label) {
    if (dim < 1 || dim > 3) throw std::invalid_argument("make_lattice: dim must be 1, 2, or 3");
    if (Q < 2) throw std::invalid_argument("make_lattice: Q must be >= 2");
    if (L < 8 || L % 8 != 0)
        throw std::invalid_argument("make_lattice: L must be a positive multiple of 8");
    if (boundary_label < -1 || boundary_label > Q)
        throw std::invalid_argument("make_lattice: boundary label must be -1, 0, or in 1..Q");
    KacKernel kernel(gamma, dim);
    if (2 * kernel.range() >= L)
        throw std::invalid_argument("make_lattice: window must exceed twice the kernel range");
    const Site origin = make_site(0);
    const double pair_mass = kernel.lattice_normalization() - kernel.evaluate(origin, origin);
    Site hi = make_site(L - 1, dim > 1 ? L - 1 : 0, dim > 2 ? L - 1 : 0);
    Region interior(dim, Box(dim, origin, hi).sites());
    BoundaryProfile bc = BoundaryProfile::periodic(Q);
    if (boundary_label != 0) {
        Region collar = boundary_layer(interior, kernel.range(), LayerSide::outer);
        bc = boundary_label == -1
                 ? BoundaryProfile::disordered(Q, std::move(collar))
                 : BoundaryProfile::ordered(Q, boundary_label - 1, std::move(collar));
    }
    PottsSystem system(interior, std::move(bc), kernel, Q);
    return Lattice{kernel,        L, dim, Q, boundary_label, 1.0 / pair_mass,
                   std::move(interior), std::move(system)};
}

// one sequential-heat-bath chain at fixed beta; burn-in is fixed at the first
// half of the run, and every recorded statistic past the raw series honors it
struct ChainRecord {
    Provenance provenance;
    double beta = 0.0;
    int start_label = 0;                       // 1..Q monochrome start, -1 uniform random
    std::vector<double> energy;                // per-site energy, index = sweep, entry 0 initial
    std::vector<double> max_density;           // dominant color fraction, same indexing
    std::vector<std::vector<int>> snapshots;   // last-half interior configurations
    std::vector<std::int64_t> snapshot_sweeps;
    std::vector<int> final_colors;
    double mean_energy = 0.0;                  // last-half average of the energy series
    double mean_max_density = 0.0;             // last-half average of the dominant fraction
    double accumulated_total = 0.0;            // incrementally tracked total energy
    double recomputed_total = 0.0;             // hamiltonian of the final state
};

// start_label 1..Q opens monochrome in that color; -1 opens from uniform
// random colors drawn from the chain's own stream; an explicit initial
// configuration overrides both
inline ChainRecord run_chain(const Lattice& lat, double beta, int start_label,
                             std::int64_t sweeps, std::uint64_t seed, std::uint64_t stream,
                             std::int64_t snapshot_every = 0,
                             const std::vector<int>* initial_colors = nullptr) {
    if (!(beta > 0.0)) throw std::invalid_argument("run_chain: beta must be > 0");
    if (sweeps < 2) throw std::invalid_argument("run_chain: need at least two sweeps");
    if (start_label != -1 && (start_label < 1 || start_label > lat.Q))
        throw std::invalid_argument("run_chain: start label must be -1 or in 1..Q");
    const PottsSystem& sys = lat.system;
    const std::size_t n = sys.size();
    const int Q = lat.Q;
    const double beta_sample = beta * lat.beta_scale;
    Rng rng(seed, stream);

    std::vector<int> colors(n);
    if (initial_colors) {
        if (initial_colors->size() != n)
            throw std::invalid_argument("run_chain: initial color vector size mismatch");
        for (int c : *initial_colors)
            if (c < 0 || c >= Q)
                throw std::invalid_argument("run_chain: initial color out of range");
        colors = *initial_colors;
    } else if (start_label >= 1) {
        std::fill(colors.begin(), colors.end(), start_label - 1);
    } else {
        for (int& c : colors) c = static_cast<int>(rng.uniform_int(static_cast<std::uint32_t>(Q)));
    }

    std::vector<std::int64_t> counts(static_cast<std::size_t>(Q), 0);
    for (int c : colors) ++counts[static_cast<std::size_t>(c)];
    auto dominant = [&] {
        return static_cast<double>(*std::max_element(counts.begin(), counts.end())) /
               static_cast<double>(n);
    };

    ChainRecord rec;
    rec.provenance = {library_version, seed, lat.L, lat.dim, Q, lat.kernel.gamma(), sweeps};
    rec.beta = beta;
    rec.start_label = start_label;
    rec.energy.reserve(static_cast<std::size_t>(sweeps) + 1);
    rec.max_density.reserve(static_cast<std::size_t>(sweeps) + 1);

    double total = sys.hamiltonian(colors);
    rec.energy.push_back(total / static_cast<double>(n));
    rec.max_density.push_back(dominant());

    const std::int64_t half = sweeps / 2;
    Simplex weights(static_cast<std::size_t>(Q), 0.0);
    for (std::int64_t s = 1; s <= sweeps; ++s) {
        for (std::size_t i = 0; i < n; ++i) {
            const Simplex k = sys.local_field(colors, i);
            double m = k[0];
            for (double x : k) m = std::max(m, x);
            double z = 0.0;
            for (int q = 0; q < Q; ++q) {
                weights[static_cast<std::size_t>(q)] =
                    std::exp(beta_sample * (k[static_cast<std::size_t>(q)] - m));
                z += weights[static_cast<std::size_t>(q)];
            }
            const double target = rng.next_double() * z;
            double acc = 0.0;
            int pick = Q - 1;
            for (int q = 0; q < Q; ++q) {
                acc += weights[static_cast<std::size_t>(q)];
                if (target < acc) {
                    pick = q;
                    break;
                }
            }
            const int old = colors[i];
            if (pick != old) {
                total -= k[static_cast<std::size_t>(pick)] - k[static_cast<std::size_t>(old)];
                --counts[static_cast<std::size_t>(old)];
                ++counts[static_cast<std::size_t>(pick)];
                colors[i] = pick;
            }
        }
        rec.energy.push_back(total / static_cast<double>(n));
        rec.max_density.push_back(dominant());
        if (snapshot_every > 0 && s > half && (s % snapshot_every == 0 || s == sweeps)) {
            rec.snapshots.push_back(colors);
            rec.snapshot_sweeps.push_back(s);
        }
    }

    double esum = 0.0, dsum = 0.0;
    for (std::int64_t s = half + 1; s <= sweeps; ++s) {
        esum += rec.energy[static_cast<std::size_t>(s)];
        dsum += rec.max_density[static_cast<std::size_t>(s)];
    }
    const double m = static_cast<double>(sweeps - half);
    rec.mean_energy = esum / m;
    rec.mean_max_density = dsum / m;
    rec.final_colors = std::move(colors);
    rec.accumulated_total = total;
    rec.recomputed_total = sys.hamiltonian(rec.final_colors);
    return rec;
}

struct HysteresisRow {
    double beta = 0.0;
    double ordered_density = 0.0;     // last-half mean dominant fraction, ordered branch
    double disordered_density = 0.0;  // same, disordered branch
    double ordered_energy = 0.0;      // last-half mean energy per site
    double disordered_energy = 0.0;
};

struct HysteresisScanResult {
    Provenance provenance;
    std::vector<HysteresisRow> rows;  // sorted by beta
    double max_gap = 0.0;             // largest ordered minus disordered density
    double max_gap_beta = 0.0;
};

// two branches per grid point: an ordered(1) start under an ordered(1) collar
// and a disordered start under a disordered collar; chain k at grid index i
// runs on stream 2i + k of the given seed
inline std::vector<std::pair<ChainRecord, ChainRecord>>
hysteresis_chains(int L, int dim, int Q, double gamma, std::vector<double> betas,
                  std::int64_t sweeps, std::uint64_t seed) {
    if (betas.empty()) throw std::invalid_argument("hysteresis_scan: empty beta grid");
    std::sort(betas.begin(), betas.end());
    const Lattice ordered = make_lattice(L, dim, Q, gamma, 1);
    const Lattice disordered = make_lattice(L, dim, Q, gamma, -1);
    std::vector<std::pair<ChainRecord, ChainRecord>> out;
    for (std::size_t i = 0; i < betas.size(); ++i)
        out.emplace_back(run_chain(ordered, betas[i], 1, sweeps, seed, 2 * i),
                         run_chain(disordered, betas[i], -1, sweeps, seed, 2 * i + 1));
    return out;
}

inline HysteresisScanResult hysteresis_scan(int L, int dim, int Q, double gamma,
                                            std::vector<double> betas, std::int64_t sweeps,
                                            std::uint64_t seed) {
    const auto pairs = hysteresis_chains(L, dim, Q, gamma, std::move(betas), sweeps, seed);
    HysteresisScanResult out;
    out.provenance = {library_version, seed, L, dim, Q, gamma, sweeps};
    out.max_gap = -std::numeric_limits<double>::infinity();
    for (const auto& [o, d] : pairs) {
        HysteresisRow row{o.beta, o.mean_max_density, d.mean_max_density, o.mean_energy,
                          d.mean_energy};
        if (row.ordered_density - row.disordered_density > out.max_gap) {
            out.max_gap = row.ordered_density - row.disordered_density;
            out.max_gap_beta = row.beta;
        }
        out.rows.push_back(row);
    }
    return out;
}

// one evaluated chain inside the pseudo-critical scan
struct ProbePoint {
    double beta = 0.0;
    int start_label = 0;          // +1 ordered branch, -1 disordered branch
    double mean_density = 0.0;    // last-half mean dominant fraction
    double mean_energy = 0.0;     // last-half mean energy per site
    bool ends_ordered = false;    // majority of last-half density samples above 1/2
    bool robust = false;          // classification stable under block bootstrap
};

struct PseudoBetaC {
    Provenance provenance;
    double estimate = 0.0;
    double melt_edge = 0.0;          // ordered-start survival onset
    double freeze_edge = 0.0;        // disordered-start decay onset
    double window_lo = 0.0;          // bootstrap-robust bracket around the estimate
    double window_hi = 0.0;
    std::vector<ProbePoint> probes;  // sorted by beta, then start label
};

namespace detail {

// equal-weight phase classifier: the dominant-color density of the deep
// disordered phase stays below 1/Q + (1 - 1/Q)/2 = 1/2 and every ordered
// phase past the transition sits above it, uniformly in Q
inline bool ends_ordered(const std::vector<double>& density_samples) {
    std::size_t above = 0;
    for (double x : density_samples) above += x > 0.5;
    return 2 * above >= density_samples.size();
}

// whole-block resample truncated to the original length, preserving
// short-range autocorrelation within blocks
inline std::vector<double> block_resample(const std::vector<double>& series, Rng& rng) {
    const std::size_t n = series.size();
    const std::size_t b = std::max<std::size_t>(1, n / 20);
    std::vector<double> out;
    out.reserve(n + b);
    while (out.size() < n) {
        const std::size_t start = rng.uniform_int(static_cast<std::uint32_t>(n - b + 1));
        out.insert(out.end(), series.begin() + static_cast<std::ptrdiff_t>(start),
                   series.begin() + static_cast<std::ptrdiff_t>(start + b));
    }
    out.resize(n);
    return out;
}

} // namespace detail

// Pseudo-critical estimator on the same collar-pinned branch pair as
// hysteresis_scan.  Two bisections bracket the branch-gap window: the melt
// edge is the lowest beta where the ordered-collar monochrome branch keeps
// its order for the full run, the freeze edge the lowest beta where the
// disordered-collar random branch orders.  The estimate is the midpoint of
// the two edges.  Phase calls use the equal-weight rule of
// detail::ends_ordered on the last-half density series; the bootstrap window
// brackets the estimate between the highest branch probe that robustly melts
// and the lowest that robustly freezes.
inline PseudoBetaC pseudo_beta_c(int L, int dim, int Q, double gamma, std::uint64_t seed,
                                 std::int64_t sweeps = 10000, double beta_lo = 2.4,
                                 double beta_hi = 3.4, int bisection_steps = 6,
                                 int bootstrap_replicates = 200) {
    if (!(beta_lo > 0.0 && beta_lo < beta_hi))
        throw std::invalid_argument("pseudo_beta_c: need 0 < beta_lo < beta_hi");
    if (bisection_steps < 1 || bootstrap_replicates < 1)
        throw std::invalid_argument("pseudo_beta_c: steps and replicates must be positive");
    const Lattice ordered_window = make_lattice(L, dim, Q, gamma, 1);
    const Lattice disordered_window = make_lattice(L, dim, Q, gamma, -1);

    struct Sample {
        double beta = 0.0;
        int start_label = 0;
        std::vector<double> density;  // last-half samples
        double mean_density = 0.0;
        double mean_energy = 0.0;
        bool ordered = false;
    };
    std::uint64_t next_stream = 0;
    auto eval = [&](double beta, int start_label) {
        const Lattice& window = start_label == 1 ? ordered_window : disordered_window;
        const ChainRecord c = run_chain(window, beta, start_label, sweeps, seed, next_stream++);
        Sample s;
        s.beta = beta;
        s.start_label = start_label;
        const std::size_t half = static_cast<std::size_t>(sweeps / 2);
        s.density.assign(c.max_density.begin() + static_cast<std::ptrdiff_t>(half + 1),
                         c.max_density.end());
        s.mean_density = c.mean_max_density;
        s.mean_energy = c.mean_energy;
        s.ordered = detail::ends_ordered(s.density);
        return s;
    };

    std::vector<Sample> samples;
    samples.push_back(eval(beta_lo, 1));
    if (samples.back().ordered)
        throw std::runtime_error(
            "pseudo_beta_c: no crossing found in the scanned interval [" +
            std::to_string(beta_lo) + ", " + std::to_string(beta_hi) +
            "]: the ordered branch retains order at the lower endpoint (dominant fraction = " +
            std::to_string(samples.back().mean_density) + ")");
    samples.push_back(eval(beta_hi, -1));
    if (!samples.back().ordered)
        throw std::runtime_error(
            "pseudo_beta_c: no crossing found in the scanned interval [" +
            std::to_string(beta_lo) + ", " + std::to_string(beta_hi) +
            "]: the disordered branch never orders by the upper endpoint (dominant fraction = " +
            std::to_string(samples.back().mean_density) + ")");

    // melt edge: ordered branch, bracket [melted, kept]
    double lo = beta_lo, hi = beta_hi;
    for (int step = 0; step < bisection_steps; ++step) {
        const double mid = 0.5 * (lo + hi);
        Sample s = eval(mid, 1);
        (s.ordered ? hi : lo) = mid;
        samples.push_back(std::move(s));
    }
    const double melt_edge = 0.5 * (lo + hi);

    // freeze edge: disordered branch, bracket [stays disordered, orders]
    lo = beta_lo;
    hi = beta_hi;
    for (int step = 0; step < bisection_steps; ++step) {
        const double mid = 0.5 * (lo + hi);
        Sample s = eval(mid, -1);
        (s.ordered ? hi : lo) = mid;
        samples.push_back(std::move(s));
    }
    const double freeze_edge = 0.5 * (lo + hi);

    PseudoBetaC out;
    out.provenance = {library_version, seed, L, dim, Q, gamma, sweeps};
    out.melt_edge = melt_edge;
    out.freeze_edge = freeze_edge;
    out.estimate = 0.5 * (melt_edge + freeze_edge);

    Rng boot(seed, 1000003);
    std::sort(samples.begin(), samples.end(), [](const Sample& a, const Sample& b) {
        return a.beta != b.beta ? a.beta < b.beta : a.start_label < b.start_label;
    });
    for (const Sample& s : samples) {
        ProbePoint pt;
        pt.beta = s.beta;
        pt.start_label = s.start_label;
        pt.mean_density = s.mean_density;
        pt.mean_energy = s.mean_energy;
        pt.ends_ordered = s.ordered;
        pt.robust = true;
        for (int r = 0; r < bootstrap_replicates && pt.robust; ++r)
            if (detail::ends_ordered(detail::block_resample(s.density, boot)) != s.ordered)
                pt.robust = false;
        out.probes.push_back(pt);
    }
    // conservative bracket: bisection resolution plus bootstrap uncertainty
    out.window_lo = beta_lo;
    out.window_hi = beta_hi;
    for (const ProbePoint& pt : out.probes) {
        if (pt.start_label == 1 && pt.robust && !pt.ends_ordered)
            out.window_lo = std::max(out.window_lo, pt.beta);
        if (pt.start_label == -1 && pt.robust && pt.ends_ordered)
            out.window_hi = std::min(out.window_hi, pt.beta);
    }
    out.window_lo = std::min(out.window_lo, out.estimate);
    out.window_hi = std::max(out.window_hi, out.estimate);
    return out;
}

struct SnapshotCensus {
    Provenance provenance;
    std::int64_t snapshot_count = 0;
    std::int64_t contour_count = 0;
    std::map<std::int64_t, std::int64_t> size_histogram;  // contour cube count -> occurrences
    double theta_zero_fraction = 0.0;  // snapshot-averaged share of unstabilized cubes
};

// per-snapshot contour extraction against the chain's own boundary phase; the
// window ring outside the computable core carries the collar label
inline SnapshotCensus contour_census(const Lattice& lat, const ChainRecord& chain,
                                     const ScaleTriple& scales, const PhaseReferences& refs,
                                     const Accuracy& acc) {
    if (lat.boundary_label == 0)
        throw std::invalid_argument("contour_census: needs a collar window with a declared phase");
    if (chain.snapshots.empty())
        throw std::invalid_argument("contour_census: chain carries no snapshots");
    if (lat.L % scales.ell_plus != 0)
        throw std::invalid_argument("contour_census: window side must be a multiple of l+");

    SnapshotCensus out;
    out.provenance = chain.provenance;
    out.snapshot_count = static_cast<std::int64_t>(chain.snapshots.size());
    const Region no_bc(lat.dim, {});
    std::int64_t zero_cubes = 0, total_cubes = 0;
    for (const auto& snap : chain.snapshots) {
        const CompositeFields f = composite_fields(lat.interior, snap, no_bc, {}, lat.Q, scales,
                                                   refs, acc, lat.boundary_label);
        for (int label : f.theta.labels) {
            zero_cubes += label == 0;
            ++total_cubes;
        }
        for (const Contour& c : extract_contours(f.theta, f.eta, scales, InterfacePolicy::mark)) {
            ++out.contour_count;
            ++out.size_histogram[c.n_cubes];
        }
    }
    out.theta_zero_fraction = static_cast<double>(zero_cubes) / static_cast<double>(total_cubes);
    return out;
}

} // namespace pottskac
