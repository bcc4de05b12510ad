// Free-energy functional: oracle comparisons for the lattice sums, the excess
// recombination identity, enumeration-based two-sided bounds, relaxation
// dynamics, and surface corrections.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "pottskac/functional.hpp"

using namespace pottskac;

namespace {

// d=1 desk instance: |Lambda| = 8, ell = 2, Q = 3, gamma = 0.2 (range 5)
struct Desk {
    int Q = 3;
    KacKernel kernel{0.2, 1};
    Region lambda = Region::from_box(Box(1, make_site(0), make_site(7)));
    Region collar = boundary_layer(lambda, 5, LayerSide::outer);

    FunctionalContext make(double beta, BoundaryProfile bc) const {
        return FunctionalContext(kernel, beta, Q, lambda, std::move(bc), 2);
    }
    FunctionalContext ordered(double beta, int color = 0) const {
        return make(beta, BoundaryProfile::ordered(Q, color, collar));
    }
    FunctionalContext disordered(double beta) const {
        return make(beta, BoundaryProfile::disordered(Q, collar));
    }
};

CoarseProfile profile_from(const FunctionalContext& ctx, std::vector<Simplex> values) {
    CoarseProfile p;
    p.ell = ctx.ell();
    p.dim = ctx.region().dim();
    p.corners = ctx.cube_corners();
    p.values = std::move(values);
    return p;
}

// four assorted off-reference cube values for the desk grid
CoarseProfile mixed_profile(const FunctionalContext& ctx) {
    return profile_from(ctx, {Simplex{0.6, 0.2, 0.2}, Simplex{0.25, 0.5, 0.25},
                              Simplex{1.0 / 3, 1.0 / 3, 1.0 / 3}, Simplex{0.1, 0.2, 0.7}});
}

// direct per-site double loop over kernel evaluations, no cube tables
double naive_free_energy(const FunctionalContext& ctx, const CoarseProfile& prof) {
    const auto& sites = ctx.region().sites();
    double pair = 0.0, field = 0.0, xlx = 0.0;
    for (std::size_t i = 0; i < sites.size(); ++i) {
        const Simplex& vi = prof.values[ctx.cube_of_site(i)];
        for (std::size_t j = 0; j < sites.size(); ++j) {
            if (i == j) continue;
            pair += ctx.kernel().evaluate(sites[i], sites[j]) *
                    dot(vi, prof.values[ctx.cube_of_site(j)]);
        }
        for (const Site& y : ctx.boundary().collar().sites())
            field += ctx.kernel().evaluate(sites[i], y) * dot(vi, ctx.boundary().at(y));
        xlx += xlogx_sum(vi);
    }
    return -0.5 * pair - field + xlx / ctx.beta();
}

void require_monotone(const std::vector<TraceRow>& trace) {
    for (std::size_t k = 1; k < trace.size(); ++k)
        REQUIRE(trace[k].free_energy <= trace[k - 1].free_energy + 1e-12);
}

} // namespace

TEST_CASE("free energy matches a per-site double-loop oracle") {
    const Desk desk;
    const auto ctx = desk.ordered(2.0);

    const CoarseProfile mixed = mixed_profile(ctx);
    CHECK(free_energy(ctx, mixed) == Catch::Approx(naive_free_energy(ctx, mixed)).margin(1e-10));

    const CoarseProfile flat = ctx.constant_profile(Simplex{0.5, 0.3, 0.2});
    CHECK(free_energy(ctx, flat) == Catch::Approx(naive_free_energy(ctx, flat)).margin(1e-10));

    // energy and entropy recombine into F
    CHECK(free_energy(ctx, mixed) ==
          Catch::Approx(energy_V(ctx, mixed) - entropy_I(ctx, mixed) / ctx.beta()).margin(1e-12));
}

TEST_CASE("constant profile in its own phase reduces to bulk phi minus surface") {
    const Desk desk;
    const auto ctx = desk.ordered(2.0, 0);
    const Simplex e0 = vertex_simplex(3, 0);
    const CoarseProfile flat = ctx.constant_profile(e0);

    const double f = free_energy(ctx, flat);
    CHECK(f == Catch::Approx(naive_free_energy(ctx, flat)).margin(1e-10));

    // F(const rho | rho) = |Lambda| phi^mf(rho) - R^mf/beta - lattice defect
    const double phi = phi_mf(e0, MeanFieldParams(3, 2.0));
    const double surface = surface_correction(ctx, e0) / ctx.beta();
    const double j0 = ctx.kernel().evaluate(make_site(0), make_site(0));
    const double defect = 0.5 * (ctx.kernel().lattice_normalization() - j0 - 1.0) *
                          static_cast<double>(ctx.n_sites()) * dot(e0, e0);
    CHECK(f + surface + defect ==
          Catch::Approx(static_cast<double>(ctx.n_sites()) * phi).margin(1e-10));
    CHECK(phi == Catch::Approx(-0.5).margin(1e-15));
}

TEST_CASE("entropy of the uniform profile is volume times ln Q") {
    const Desk desk;
    const auto ctx = desk.disordered(2.0);
    const CoarseProfile uni = ctx.constant_profile(uniform_simplex(3));
    CHECK(entropy_I(ctx, uni) == Catch::Approx(8.0 * std::log(3.0)).margin(1e-12));
}

TEST_CASE("free energy is covariant under color permutations") {
    const Desk desk;
    const std::vector<int> collar_colors = {0, 1, 2, 0, 1, 2, 0, 1, 2, 0};
    REQUIRE(desk.collar.size() == collar_colors.size());

    const auto ctx = desk.make(2.0, BoundaryProfile::custom_colors(3, desk.collar, collar_colors));
    const CoarseProfile prof = mixed_profile(ctx);

    // swap colors 0 <-> 2 everywhere
    auto pi = [](const Simplex& v) { return Simplex{v[2], v[1], v[0]}; };
    std::vector<int> collar_pi;
    for (int c : collar_colors) collar_pi.push_back(c == 0 ? 2 : (c == 2 ? 0 : c));
    const auto ctx_pi = desk.make(2.0, BoundaryProfile::custom_colors(3, desk.collar, collar_pi));
    std::vector<Simplex> vals_pi;
    for (const Simplex& v : prof.values) vals_pi.push_back(pi(v));
    const CoarseProfile prof_pi = profile_from(ctx_pi, std::move(vals_pi));

    CHECK(free_energy(ctx_pi, prof_pi) == Catch::Approx(free_energy(ctx, prof)).margin(1e-12));
}

TEST_CASE("excess decomposition recombines into the free energy") {
    const Desk desk;

    SECTION("mixed profile, ordered boundary") {
        const auto ctx = desk.ordered(2.0);
        const CoarseProfile prof = mixed_profile(ctx);
        const ExcessParts parts = excess_decomposition(ctx, prof);
        CHECK(parts.recombined() == Catch::Approx(free_energy(ctx, prof)).epsilon(1e-10));
        CHECK(parts.interaction >= 0.0);
        CHECK(parts.boundary >= 0.0);
    }

    SECTION("mixed profile, site-dependent boundary") {
        std::vector<Simplex> bc_vals;
        for (std::size_t k = 0; k < desk.collar.size(); ++k) {
            const double t = 0.05 * static_cast<double>(k);
            bc_vals.push_back(Simplex{0.2 + t / 2, 0.5 - t, 0.3 + t / 2});
        }
        const auto ctx = desk.make(2.4, BoundaryProfile::custom(3, desk.collar, bc_vals));
        const CoarseProfile prof = mixed_profile(ctx);
        const ExcessParts parts = excess_decomposition(ctx, prof);
        CHECK(parts.recombined() == Catch::Approx(free_energy(ctx, prof)).epsilon(1e-10));
    }

    SECTION("constant profile with matching boundary has zero penalties") {
        const Simplex v{0.5, 0.3, 0.2};
        const auto ctx = desk.make(
            2.0, BoundaryProfile::custom(3, desk.collar,
                                         std::vector<Simplex>(desk.collar.size(), v)));
        const ExcessParts parts = excess_decomposition(ctx, ctx.constant_profile(v));
        CHECK(parts.interaction == 0.0);
        CHECK(parts.boundary == 0.0);
    }
}

TEST_CASE("effective excess is nonnegative and vanishes at the minimizer") {
    const Desk desk;
    const double beta_c = beta_thresholds(3).second;
    const Simplex rho_ord = ordered_solution(MeanFieldParams(3, beta_c))->as_simplex(3, 0);
    const auto ctx = desk.make(
        beta_c, BoundaryProfile::custom(3, desk.collar,
                                        std::vector<Simplex>(desk.collar.size(), rho_ord)));

    for (const double u : {0.5, 1.0}) {
        for (const double x : effective_excess(ctx, mixed_profile(ctx), u, rho_ord))
            CHECK(x >= -1e-12);
    }
    // at u = 1 the local density is phi^mf; its minimum is attained at rho_ord
    for (const double x : effective_excess(ctx, ctx.constant_profile(rho_ord), 1.0, rho_ord))
        CHECK(std::abs(x) < 1e-10);
}

TEST_CASE("cube-averaged evaluation stays within its kernel budget") {
    const Desk desk;
    const auto ctx = desk.ordered(2.0);
    const CoarseProfile prof = mixed_profile(ctx);

    const EnergyReport exact = free_energy_report(ctx, prof);
    CHECK_FALSE(exact.cube_averaged);
    CHECK(exact.kernel_budget == 0.0);
    CHECK(exact.free_energy == free_energy(ctx, prof));

    const EnergyReport avg = free_energy_report(ctx, prof, 0);
    CHECK(avg.cube_averaged);
    CHECK(avg.kernel_budget > 0.0);
    CHECK(std::abs(avg.free_energy - free_energy(ctx, prof)) <= avg.kernel_budget);
}

TEST_CASE("enumeration bounds hold over all classes on the desk instance") {
    const Desk desk;
    const auto ctx = desk.ordered(2.0);

    const std::vector<CoarseProfile> all = all_class_profiles(ctx);
    REQUIRE(all.size() == 1296);  // 6 compositions per cube, 4 cubes

    const std::vector<CoarseProfile> probes = {
        ctx.constant_profile(uniform_simplex(3)),
        ctx.constant_profile(Simplex{0.7, 0.2, 0.1}),
        mixed_profile(ctx),
    };
    const LpReport rep = lp_verify(ctx, all, probes);

    CHECK(rep.total_configurations == 6561);
    CHECK(rep.classes.size() == 1296);  // every class is realized
    for (const LpClassRow& row : rep.classes) CHECK(row.selected);
    CHECK(rep.upper_ok);
    CHECK(rep.stirling_ok);
    REQUIRE(rep.lower.size() == probes.size());
    CHECK(rep.lower_ok);
    CHECK(rep.upper_slack >= 0.0);

    // with every class selected, ln Z must match a direct enumeration that
    // knows nothing about classes
    PottsSystem sys(desk.lambda, BoundaryProfile::ordered(3, 0, desk.collar), desk.kernel, 3);
    detail::LogAccumulator z;
    std::vector<int> colors(8, 0);
    while (true) {
        z.add(-2.0 * sys.hamiltonian(colors));
        std::size_t k = colors.size();
        bool done = true;
        while (k > 0) {
            --k;
            if (++colors[k] < 3) {
                done = false;
                break;
            }
            colors[k] = 0;
        }
        if (done) break;
    }
    CHECK(rep.log_z_selected == Catch::Approx(z.log()).margin(1e-9));

    // the context's energy uses the same convention as the spin system
    CHECK(ctx.config_energy(std::vector<int>(8, 1)) ==
          Catch::Approx(sys.hamiltonian(std::vector<int>(8, 1))).margin(1e-12));
    const std::vector<int> probe_cfg = {0, 1, 2, 2, 1, 0, 1, 2};
    CHECK(ctx.config_energy(probe_cfg) ==
          Catch::Approx(sys.hamiltonian(probe_cfg)).margin(1e-12));
}

TEST_CASE("single monochrome class: ln Z equals minus beta H") {
    const Desk desk;
    const auto ctx = desk.ordered(2.0);

    const LpReport rep = lp_verify(ctx, {ctx.constant_profile(vertex_simplex(3, 0))});
    CHECK(rep.upper_ok);

    std::size_t selected = 0;
    for (const LpClassRow& row : rep.classes)
        if (row.selected) {
            ++selected;
            CHECK(row.configurations == 1);
            CHECK(row.log_z ==
                  Catch::Approx(-2.0 * ctx.config_energy(std::vector<int>(8, 0))).margin(1e-12));
        }
    CHECK(selected == 1);
}

TEST_CASE("multinomial count bound at the four-cell cube") {
    // d=2 single 2x2 cube, so one class has counts (2,1,1)
    const KacKernel kernel(0.2, 2);
    const Region lambda = Region::from_box(Box(2, make_site(0, 0), make_site(1, 1)));
    const Region collar = boundary_layer(lambda, 5, LayerSide::outer);
    const FunctionalContext ctx(kernel, 1.0, 3, lambda, BoundaryProfile::disordered(3, collar), 2);

    const LpReport rep = lp_verify(ctx, all_class_profiles(ctx));
    CHECK(rep.total_configurations == 81);
    CHECK(rep.classes.size() == 15);
    CHECK(rep.stirling_ok);

    bool found = false;
    for (const LpClassRow& row : rep.classes) {
        if (row.counts != std::vector<std::int64_t>{2, 1, 1}) continue;
        found = true;
        CHECK(row.configurations == 12);  // 4!/(2!1!1!)
        CHECK(row.entropy == Catch::Approx(4.0 * 1.0397207708399179).margin(1e-10));
        CHECK(row.stirling_gap == Catch::Approx(1.6739764335716712).margin(1e-10));
        CHECK(row.stirling_gap <= 3.0 * std::log(2.0));
    }
    CHECK(found);
}

TEST_CASE("enumeration bounds hold across temperature and boundary phase") {
    const Desk desk;
    const double beta_c = beta_thresholds(3).second;
    const double beta = GENERATE_COPY(beta_c - 0.2, beta_c + 0.2);
    const bool use_ordered = GENERATE(true, false);

    const auto ctx = use_ordered ? desk.ordered(beta) : desk.disordered(beta);
    const std::vector<CoarseProfile> probes = {
        ctx.constant_profile(uniform_simplex(3)),
        ctx.constant_profile(Simplex{0.7, 0.2, 0.1}),
    };
    const LpReport rep = lp_verify(ctx, all_class_profiles(ctx), probes);
    CHECK(rep.upper_ok);
    CHECK(rep.lower_ok);
    CHECK(rep.stirling_ok);
}

TEST_CASE("lp_verify rejects bad inputs") {
    const Desk desk;
    const auto ctx = desk.ordered(2.0);

    CHECK_THROWS_WITH(lp_verify(ctx, {}), Catch::Matchers::ContainsSubstring("empty class set"));
    CHECK_THROWS_WITH(
        lp_verify(ctx, {ctx.constant_profile(uniform_simplex(3))}, {}, 1000),
        Catch::Matchers::ContainsSubstring("cap"));
    // 0.3 of an ell = 2 cell is not an integer count
    CHECK_THROWS_WITH(lp_verify(ctx, {ctx.constant_profile(Simplex{0.3, 0.3, 0.4})}),
                      Catch::Matchers::ContainsSubstring("not rational"));
}

TEST_CASE("relaxation starts already converged at exact fixed points") {
    const Desk desk;

    SECTION("uniform profile with disordered boundary, any u") {
        const auto ctx = desk.disordered(2.0);
        const CoarseProfile uni = ctx.constant_profile(uniform_simplex(3));
        const DynamicsState st = dynamics_minimize(ctx, uni, 0.37, uniform_simplex(3));
        CHECK(st.iterations == 0);
        CHECK(st.residual < 1e-10);
        for (const Simplex& v : st.profile.values)
            CHECK(sup_dist(v, uniform_simplex(3)) < 1e-14);
    }

    SECTION("mean-field minimizer reference at u = 0") {
        const auto ctx = desk.ordered(3.0);
        const Simplex rho = ordered_solution(MeanFieldParams(3, 3.0))->as_simplex(3, 0);
        const DynamicsState st =
            dynamics_minimize(ctx, ctx.constant_profile(rho), 0.0, rho, 1e-8);
        CHECK(st.iterations == 0);
        CHECK(st.residual < 1e-8);
    }
}

TEST_CASE("u = 0 relaxation reaches the closed-form softmax from any start") {
    const Desk desk;
    const auto ctx = desk.ordered(2.0);
    const Simplex ref{0.5, 0.3, 0.2};

    const DynamicsState st = dynamics_minimize(ctx, mixed_profile(ctx), 0.0, ref);
    CHECK(st.iterations > 0);
    require_monotone(st.trace);

    const Simplex closed = g_map(ref, MeanFieldParams(3, 2.0));
    for (const Simplex& v : st.profile.values) CHECK(sup_dist(v, closed) < 1e-9);
}

TEST_CASE("one-body free energy difference is the KL divergence") {
    const Desk desk;
    const auto ctx = desk.ordered(2.0);
    const Simplex ref{0.5, 0.3, 0.2};
    const CoarseProfile prof = mixed_profile(ctx);

    // u = 0: the relaxation target is profile-independent
    const CoarseProfile star = relaxation_target(ctx, prof, 0.0, ref);
    for (const Simplex& v : star.values)
        CHECK(sup_dist(v, g_map(ref, MeanFieldParams(3, 2.0))) < 1e-13);

    const double lhs = free_energy_u(ctx, prof, 0.0, ref) - free_energy_u(ctx, star, 0.0, ref);
    double kl = 0.0;
    for (std::size_t c = 0; c < prof.values.size(); ++c)
        kl += kl_divergence(prof.values[c], star.values[c]);
    CHECK(lhs == Catch::Approx(ctx.cell_volume() * kl / ctx.beta()).margin(1e-12));

    // Pinsker lower bound per cube
    for (std::size_t c = 0; c < prof.values.size(); ++c) {
        const double l1 = l1_dist(prof.values[c], star.values[c]);
        CHECK(kl_divergence(prof.values[c], star.values[c]) >= 0.5 * l1 * l1 - 1e-15);
    }
}

TEST_CASE("interacting free energy difference adds the quadratic remainder") {
    const Desk desk;
    const auto ctx = desk.ordered(2.3);
    const double u = 1.0;
    const Simplex ref = uniform_simplex(3);
    const CoarseProfile prof = mixed_profile(ctx);
    const CoarseProfile star = relaxation_target(ctx, prof, u, ref);

    const double lhs = free_energy_u(ctx, prof, u, ref) - free_energy_u(ctx, star, u, ref);

    double kl = 0.0;
    for (std::size_t c = 0; c < prof.values.size(); ++c)
        kl += kl_divergence(prof.values[c], star.values[c]);
    double quad = 0.0;
    const auto& W = ctx.cube_weights();
    for (std::size_t c = 0; c < ctx.n_cubes(); ++c)
        for (std::size_t c2 = 0; c2 < ctx.n_cubes(); ++c2) {
            if (W[c][c2] == 0.0) continue;
            Simplex da(3), db(3);
            for (std::size_t q = 0; q < 3; ++q) {
                da[q] = star.values[c][q] - prof.values[c][q];
                db[q] = star.values[c2][q] - prof.values[c2][q];
            }
            quad += W[c][c2] * dot(da, db);
        }
    CHECK(lhs == Catch::Approx(ctx.cell_volume() * kl / ctx.beta() + 0.5 * u * quad).margin(1e-10));
}

TEST_CASE("relaxation at coexistence stays in the ordered tube and is unique") {
    // fine kernel: at gamma = 0.04 the excluded self-pair costs under 1% of
    // the interaction mass, and the frozen collar carries most of each site's
    // field, so the minimizer is pinned near the reference phase
    const KacKernel fine(0.04, 1);
    const Region lambda = Region::from_box(Box(1, make_site(0), make_site(7)));
    const Region collar = boundary_layer(lambda, 25, LayerSide::outer);
    const double beta_c = beta_thresholds(3).second;
    const Simplex rho = ordered_solution(MeanFieldParams(3, beta_c))->as_simplex(3, 0);
    const FunctionalContext ctx(
        fine, beta_c, 3, lambda,
        BoundaryProfile::custom(3, collar, std::vector<Simplex>(collar.size(), rho)), 2);

    auto perturb = [&](double a, double b) {
        std::vector<Simplex> vals;
        for (int c = 0; c < 4; ++c) {
            const double t = (c % 2 == 0) ? a : b;
            Simplex v(3);
            for (std::size_t q = 0; q < 3; ++q) v[q] = (1.0 - t) * rho[q] + t / 3.0;
            vals.push_back(std::move(v));
        }
        return profile_from(ctx, std::move(vals));
    };

    const DynamicsState one = dynamics_minimize(ctx, perturb(0.08, 0.02), 1.0, rho);
    const DynamicsState two = dynamics_minimize(ctx, perturb(0.01, 0.09), 1.0, rho);
    require_monotone(one.trace);
    require_monotone(two.trace);

    for (const Simplex& v : one.profile.values) CHECK(sup_dist(v, rho) < 0.1);
    for (std::size_t c = 0; c < 4; ++c)
        CHECK(sup_dist(one.profile.values[c], two.profile.values[c]) < 1e-9);

    // converged components respect the softmax floor
    CHECK(one.floor_bound > 0.0);
    const double lemma_floor = 1.0 / (3.0 * std::exp(beta_c));
    for (const Simplex& v : one.profile.values)
        for (const double x : v) {
            CHECK(x >= one.floor_bound - 1e-10);
            CHECK(x >= lemma_floor - 1e-10);
        }

    // at u = 1 the driving functional is the free energy itself
    CHECK(free_energy_u(ctx, one.profile, 1.0, rho) ==
          Catch::Approx(free_energy(ctx, one.profile)).margin(1e-12));
}

TEST_CASE("relaxation reports non-convergence and rejects bad parameters") {
    const Desk desk;
    const auto ctx = desk.ordered(2.0);

    CHECK_THROWS_WITH(
        dynamics_minimize(ctx, mixed_profile(ctx), 1.0, uniform_simplex(3), 1e-10, 0.5, 2),
        Catch::Matchers::ContainsSubstring("no convergence"));
    CHECK_THROWS_AS(dynamics_minimize(ctx, mixed_profile(ctx), 1.5, uniform_simplex(3)),
                    std::invalid_argument);
    CHECK_THROWS_AS(dynamics_minimize(ctx, mixed_profile(ctx), 1.0, Simplex{0.5, 0.5}),
                    std::invalid_argument);
}

TEST_CASE("trace rows serialize as CSV") {
    const Desk desk;
    const auto ctx = desk.ordered(2.0);
    const DynamicsState st =
        dynamics_minimize(ctx, mixed_profile(ctx), 0.0, Simplex{0.5, 0.3, 0.2});

    std::ostringstream os;
    write_trace_csv(os, st.trace);
    std::istringstream is(os.str());
    std::string line;
    REQUIRE(std::getline(is, line));
    CHECK(line == "iter,free_energy,residual");
    std::size_t rows = 0;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == st.trace.size());
}

TEST_CASE("surface correction fixtures") {
    const Desk desk;
    const double beta_c = beta_thresholds(3).second;
    const Simplex rho_ord = ordered_solution(MeanFieldParams(3, beta_c))->as_simplex(3, 0);
    const Simplex rho_dis = uniform_simplex(3);

    SECTION("ordered-to-disordered ratio at coexistence is 3/2") {
        // |rho_ord|^2 = (2/3)^2 + 2 (1/6)^2 = 1/2 against |rho_dis|^2 = 1/3
        CHECK(dot(rho_ord, rho_ord) == Catch::Approx(0.5).margin(1e-12));
        const double s_ord =
            surface_correction(desk.kernel, beta_c, desk.lambda, desk.collar, rho_ord);
        const double s_dis =
            surface_correction(desk.kernel, beta_c, desk.lambda, desk.collar, rho_dis);
        CHECK(s_ord / s_dis == Catch::Approx(1.5).margin(1e-9));
        CHECK(s_ord > 0.0);
    }

    SECTION("context wrapper agrees with the standalone sum") {
        const auto ctx = desk.make(
            beta_c, BoundaryProfile::custom(3, desk.collar,
                                            std::vector<Simplex>(desk.collar.size(), rho_ord)));
        CHECK(surface_correction(ctx, rho_ord) ==
              Catch::Approx(surface_correction(desk.kernel, beta_c, desk.lambda, desk.collar,
                                               rho_ord))
                  .margin(1e-12));
    }

    SECTION("empty or out-of-range collars contribute nothing") {
        CHECK(surface_correction(desk.kernel, beta_c, desk.lambda, Region(1, {}), rho_ord) == 0.0);
        const Region far = Region::from_box(Box(1, make_site(20), make_site(24)));
        CHECK(surface_correction(desk.kernel, beta_c, desk.lambda, far, rho_ord) == 0.0);
    }

    SECTION("additivity over a split fails by exactly the inter-block term") {
        const Region left = Region::from_box(Box(1, make_site(0), make_site(3)));
        const Region right = Region::from_box(Box(1, make_site(4), make_site(7)));
        const double whole =
            surface_correction(desk.kernel, beta_c, desk.lambda, desk.collar, rho_ord);
        const double split =
            surface_correction(desk.kernel, beta_c, left, region_union(desk.collar, right),
                               rho_ord) +
            surface_correction(desk.kernel, beta_c, right, region_union(desk.collar, left),
                               rho_ord);

        double inter = 0.0;  // both orientations of the left-right pairs
        for (const Site& x : left.sites())
            for (const Site& y : right.sites()) inter += desk.kernel.evaluate(x, y);
        CHECK(split - whole ==
              Catch::Approx(beta_c * dot(rho_ord, rho_ord) * inter).margin(1e-12));
    }

    SECTION("scales with the boundary area and the interaction range") {
        // d=1: two endpoints regardless of length, so the sum saturates
        auto d1 = [&](int n, const KacKernel& k, int width) {
            const Region lam = Region::from_box(Box(1, make_site(0), make_site(n - 1)));
            return surface_correction(k, 1.0, lam, boundary_layer(lam, width, LayerSide::outer),
                                      rho_dis);
        };
        const double s8 = d1(8, desk.kernel, 5);
        CHECK(d1(16, desk.kernel, 5) == Catch::Approx(s8).margin(1e-12));
        CHECK(d1(32, desk.kernel, 5) == Catch::Approx(s8).margin(1e-12));

        // halving gamma doubles the range and roughly doubles the sum
        const KacKernel fine(0.1, 1);
        CHECK(d1(32, fine, 10) / s8 > 1.8);
        CHECK(d1(32, fine, 10) / s8 < 2.2);

        // d=2: doubling the side roughly doubles the perimeter sum
        const KacKernel k2(0.25, 2);
        auto d2 = [&](int n) {
            const Region lam = Region::from_box(Box(2, make_site(0, 0), make_site(n - 1, n - 1)));
            return surface_correction(k2, 1.0, lam, boundary_layer(lam, 4, LayerSide::outer),
                                      rho_dis);
        };
        const double ratio = d2(16) / d2(8);
        CHECK(ratio > 1.5);
        CHECK(ratio < 2.1);
    }
}

TEST_CASE("context construction rejects ill-posed setups") {
    const Desk desk;

    // scale must be at least 2 and stay below the interaction range
    CHECK_THROWS_AS(FunctionalContext(desk.kernel, 2.0, 3, desk.lambda,
                                      BoundaryProfile::ordered(3, 0, desk.collar), 1),
                    std::invalid_argument);
    CHECK_THROWS_WITH(FunctionalContext(desk.kernel, 2.0, 3, desk.lambda,
                                        BoundaryProfile::ordered(3, 0, desk.collar), 5),
                      Catch::Matchers::ContainsSubstring("kernel range"));

    // region must be a union of full cubes
    const Region seven = Region::from_box(Box(1, make_site(0), make_site(6)));
    CHECK_THROWS_WITH(FunctionalContext(desk.kernel, 2.0, 3, seven,
                                        BoundaryProfile::ordered(3, 0, desk.collar), 2),
                      Catch::Matchers::ContainsSubstring("full ell-cubes"));

    // collar must cover the whole interaction range
    const Region thin = boundary_layer(desk.lambda, 2, LayerSide::outer);
    CHECK_THROWS_WITH(FunctionalContext(desk.kernel, 2.0, 3, desk.lambda,
                                        BoundaryProfile::ordered(3, 0, thin), 2),
                      Catch::Matchers::ContainsSubstring("does not cover"));

    CHECK_THROWS_WITH(FunctionalContext(desk.kernel, 2.0, 3, desk.lambda,
                                        BoundaryProfile::periodic(3), 2),
                      Catch::Matchers::ContainsSubstring("periodic"));

    // profile grids and values are validated on use
    const auto ctx = desk.ordered(2.0);
    CoarseProfile bad = mixed_profile(ctx);
    bad.corners.pop_back();
    bad.values.pop_back();
    CHECK_THROWS_WITH(free_energy(ctx, bad),
                      Catch::Matchers::ContainsSubstring("grid mismatch"));
    CoarseProfile off = mixed_profile(ctx);
    off.values[1] = Simplex{0.6, 0.6, -0.2};
    CHECK_THROWS_WITH(free_energy(ctx, off),
                      Catch::Matchers::ContainsSubstring("off the simplex"));
}
