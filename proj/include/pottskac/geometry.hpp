#pragma once

// Finite lattice regions on Z^d (d = 1..3), the cube partitions D^ell, sup-norm
// boundary layers, and *-connectivity.  Everything is an explicit finite set;
// complements are only ever taken inside a caller-supplied bounding box.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <vector>

namespace pottskac {

// Lattice site; components beyond the active dimension stay zero.
using Site = std::array<int, 3>;

inline Site make_site(int x, int y = 0, int z = 0) { return {x, y, z}; }

// sup-norm distance, the contour metric ("dist(x,y) = sup_k |x_k - y_k|")
inline int sup_norm(const Site& a, const Site& b) {
    int m = 0;
    for (int k = 0; k < 3; ++k)
        m = std::max(m, std::abs(a[k] - b[k]));
    return m;
}

inline double euclid_norm(const Site& a, const Site& b) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return std::sqrt(s);
}

// Axis-aligned box of sites, inclusive corners.
struct Box {
    int dim = 1;
    Site lo{0, 0, 0};
    Site hi{0, 0, 0};

    Box() = default;
    Box(int d, Site lo_, Site hi_) : dim(d), lo(lo_), hi(hi_) {
        if (d < 1 || d > 3) throw std::invalid_argument("Box: dim must be 1..3");
        for (int k = 0; k < d; ++k)
            if (lo[k] > hi[k]) throw std::invalid_argument("Box: lo > hi");
        for (int k = d; k < 3; ++k) {
            lo[k] = 0;
            hi[k] = 0;
        }
    }

    bool contains(const Site& x) const {
        for (int k = 0; k < dim; ++k)
            if (x[k] < lo[k] || x[k] > hi[k]) return false;
        return true;
    }

    std::int64_t volume() const {
        std::int64_t v = 1;
        for (int k = 0; k < dim; ++k)
            v *= static_cast<std::int64_t>(hi[k] - lo[k] + 1);
        return v;
    }

    std::vector<Site> sites() const {
        std::vector<Site> out;
        out.reserve(static_cast<std::size_t>(volume()));
        Site x = lo;
        for (int a = lo[0]; a <= hi[0]; ++a)
            for (int b = (dim > 1 ? lo[1] : 0); b <= (dim > 1 ? hi[1] : 0); ++b)
                for (int c = (dim > 2 ? lo[2] : 0); c <= (dim > 2 ? hi[2] : 0); ++c) {
                    x = {a, b, c};
                    out.push_back(x);
                }
        return out;
    }
};

// Explicit finite site set, kept sorted for deterministic iteration.
class Region {
public:
    Region() = default;

    Region(int d, std::vector<Site> sites) : dim_(d), sites_(std::move(sites)) {
        if (d < 1 || d > 3) throw std::invalid_argument("Region: dim must be 1..3");
        std::sort(sites_.begin(), sites_.end());
        sites_.erase(std::unique(sites_.begin(), sites_.end()), sites_.end());
    }

    static Region from_box(const Box& b) { return Region(b.dim, b.sites()); }

    int dim() const { return dim_; }
    bool empty() const { return sites_.empty(); }
    std::size_t size() const { return sites_.size(); }
    const std::vector<Site>& sites() const { return sites_; }

    bool contains(const Site& x) const {
        return std::binary_search(sites_.begin(), sites_.end(), x);
    }

    // position of x in the sorted site order; throws when absent
    std::size_t index_of(const Site& x) const {
        const auto it = std::lower_bound(sites_.begin(), sites_.end(), x);
        if (it == sites_.end() || *it != x)
            throw std::out_of_range("Region: site not in region");
        return static_cast<std::size_t>(it - sites_.begin());
    }

    // smallest enclosing box; requires nonempty
    Box bounding_box() const {
        if (sites_.empty()) throw std::logic_error("Region: bounding_box of empty set");
        Site lo = sites_.front(), hi = sites_.front();
        for (const Site& s : sites_)
            for (int k = 0; k < dim_; ++k) {
                lo[k] = std::min(lo[k], s[k]);
                hi[k] = std::max(hi[k], s[k]);
            }
        return Box(dim_, lo, hi);
    }

private:
    int dim_ = 1;
    std::vector<Site> sites_;
};

// Partition of Z^d into cubes of side ell anchored at the origin.  Cube
// identifiers are corner coordinates (floor-division semantics, so negative
// sites land in the cube whose corner is below them).
struct CubePartition {
    int ell = 1;
    int dim = 1;

    CubePartition(int ell_, int dim_) : ell(ell_), dim(dim_) {
        if (ell < 1) throw std::invalid_argument("CubePartition: ell must be positive");
        if (dim < 1 || dim > 3) throw std::invalid_argument("CubePartition: dim must be 1..3");
    }
};

inline int floor_div(int a, int b) {
    int q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

// corner of C_x^ell, the partition cube containing x
inline Site cube_of(const Site& x, const CubePartition& part) {
    Site c{0, 0, 0};
    for (int k = 0; k < part.dim; ++k)
        c[k] = floor_div(x[k], part.ell) * part.ell;
    return c;
}

inline Box cube_box(const Site& corner, const CubePartition& part) {
    Site hi = corner;
    for (int k = 0; k < part.dim; ++k)
        hi[k] = corner[k] + part.ell - 1;
    return Box(part.dim, corner, hi);
}

enum class LayerSide { inner, outer };

// delta_in^r[B] = {x in B : dist(x, B^c) <= r},
// delta_out^r[B] = {x in B^c : dist(x, B) <= r}, sup-norm dist.
// r = 0 gives the empty set: distinct integer sites are at distance >= 1.
inline Region boundary_layer(const Region& B, int r, LayerSide side) {
    if (B.empty() || r <= 0) return Region(B.dim(), {});
    std::vector<Site> out;
    const int d = B.dim();
    auto ball_scan = [&](const Site& x, auto&& pred) {
        for (int a = -r; a <= r; ++a)
            for (int b = (d > 1 ? -r : 0); b <= (d > 1 ? r : 0); ++b)
                for (int c = (d > 2 ? -r : 0); c <= (d > 2 ? r : 0); ++c) {
                    if (a == 0 && b == 0 && c == 0) continue;
                    if (pred(Site{x[0] + a, x[1] + b, x[2] + c})) return true;
                }
        return false;
    };
    if (side == LayerSide::inner) {
        for (const Site& x : B.sites())
            if (ball_scan(x, [&](const Site& y) { return !B.contains(y); }))
                out.push_back(x);
    } else {
        // collect candidates from the r-ball around each member site
        for (const Site& x : B.sites())
            for (int a = -r; a <= r; ++a)
                for (int b = (d > 1 ? -r : 0); b <= (d > 1 ? r : 0); ++b)
                    for (int c = (d > 2 ? -r : 0); c <= (d > 2 ? r : 0); ++c) {
                        const Site y{x[0] + a, x[1] + b, x[2] + c};
                        if (!B.contains(y)) out.push_back(y);
                    }
    }
    return Region(d, std::move(out));
}

inline Region region_union(const Region& a, const Region& b) {
    std::vector<Site> s = a.sites();
    s.insert(s.end(), b.sites().begin(), b.sites().end());
    return Region(a.dim(), std::move(s));
}

inline Region region_difference(const Region& a, const Region& b) {
    std::vector<Site> s;
    for (const Site& x : a.sites())
        if (!b.contains(x)) s.push_back(x);
    return Region(a.dim(), std::move(s));
}

inline Region region_intersection(const Region& a, const Region& b) {
    std::vector<Site> s;
    for (const Site& x : a.sites())
        if (b.contains(x)) s.push_back(x);
    return Region(a.dim(), std::move(s));
}

// complement taken inside an explicit bounding box (no infinite sets)
inline Region complement_within(const Region& a, const Box& bounds) {
    std::vector<Site> s;
    for (const Site& x : Region::from_box(bounds).sites())
        if (!a.contains(x)) s.push_back(x);
    return Region(a.dim(), std::move(s));
}

// Connectivity convention for components of cube sets.  The contour analysis
// uses *-connectivity (closures intersect: sup-norm-adjacent corners); the
// nearest-neighbor variant is kept as an explicit switch.
enum class Connectivity { star, nearest_neighbor };

inline bool cubes_adjacent(const Site& a, const Site& b, int ell, int d,
                           Connectivity conn) {
    int sup = 0, l1 = 0;
    for (int k = 0; k < d; ++k) {
        const int step = std::abs(a[k] - b[k]) / ell;
        sup = std::max(sup, step);
        l1 += step;
    }
    if (conn == Connectivity::star) return sup == 1;
    return l1 == 1;
}

// Maximal connected components of a set of cube identifiers, ordered by
// lexicographically smallest corner.
inline std::vector<std::vector<Site>>
star_components(const std::vector<Site>& cubes, const CubePartition& part,
                Connectivity conn = Connectivity::star) {
    std::vector<Site> sorted = cubes;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

    std::vector<bool> seen(sorted.size(), false);
    std::vector<std::vector<Site>> comps;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (seen[i]) continue;
        std::vector<Site> comp;
        std::vector<std::size_t> stack{i};
        seen[i] = true;
        while (!stack.empty()) {
            const std::size_t j = stack.back();
            stack.pop_back();
            comp.push_back(sorted[j]);
            for (std::size_t k = 0; k < sorted.size(); ++k)
                if (!seen[k] &&
                    cubes_adjacent(sorted[j], sorted[k], part.ell, part.dim, conn)) {
                    seen[k] = true;
                    stack.push_back(k);
                }
        }
        std::sort(comp.begin(), comp.end());
        comps.push_back(std::move(comp));
    }
    // components come out ordered by smallest member because the seeds scan
    // the sorted cube list
    return comps;
}

} // namespace pottskac
