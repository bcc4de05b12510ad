#include <catch2/catch_amalgamated.hpp>

#include <pottskac/meanfield.hpp>
#include <pottskac/rng.hpp>

#include <algorithm>
#include <cmath>

using namespace pottskac;

namespace {

Simplex random_interior_simplex(Rng& rng, int Q) {
    Simplex v(static_cast<std::size_t>(Q));
    double s = 0.0;
    for (auto& x : v) {
        x = 0.05 + rng.next_double();
        s += x;
    }
    for (auto& x : v) x /= s;
    return v;
}

} // namespace

TEST_CASE("free energy density closed values") {
    MeanFieldParams p(3, 3.0);
    CHECK(phi_mf(uniform_simplex(3), p) ==
          Catch::Approx(-1.0 / 6.0 - std::log(3.0) / 3.0).epsilon(1e-14));
    CHECK(phi_mf(vertex_simplex(3, 1), p) == Catch::Approx(-0.5).margin(1e-15));

    Rng rng(11, 0);
    for (int t = 0; t < 50; ++t) {
        Simplex v = random_interior_simplex(rng, 4);
        Simplex w = v;
        std::rotate(w.begin(), w.begin() + 1 + t % 3, w.end());
        MeanFieldParams p4(4, 1.7);
        CHECK(phi_mf(v, p4) == Catch::Approx(phi_mf(w, p4)).margin(1e-15));
    }
}

TEST_CASE("gradient matches finite differences and stationarity") {
    Rng rng(21, 0);
    MeanFieldParams p(3, 2.5);
    for (int t = 0; t < 100; ++t) {
        const Simplex v = random_interior_simplex(rng, 3);
        const Simplex g = grad_phi(v, p);
        const double h = 1e-6;
        for (std::size_t q = 0; q < 3; ++q) {
            Simplex vp = v, vm = v;
            vp[q] += h;
            vm[q] -= h;
            const double fd = (phi_mf(vp, p) - phi_mf(vm, p)) / (2.0 * h);
            CHECK(g[q] == Catch::Approx(fd).epsilon(1e-6).margin(1e-8));
        }
    }

    CHECK_THROWS_AS(grad_phi({1.0, 0.0, 0.0}, p), std::domain_error);

    // projected gradient vanishes at the ordered minimizer
    const double beta_c = beta_thresholds(3).second;
    MeanFieldParams pc(3, beta_c);
    const auto ord = ordered_solution(pc);
    REQUIRE(ord.has_value());
    const Simplex m = ord->as_simplex(3, 0);
    const Simplex g = grad_phi(m, pc);
    const double mean = (g[0] + g[1] + g[2]) / 3.0;
    for (double gq : g) CHECK(std::abs(gq - mean) < 1e-9);
    // the shifted variant differs by exactly one in every component
    const Simplex gs = grad_phi_shifted(m, pc);
    for (std::size_t q = 0; q < 3; ++q)
        CHECK(gs[q] - g[q] == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("g map fixed points and Jacobian") {
    MeanFieldParams p(3, 2.5);
    const Simplex u = uniform_simplex(3);
    CHECK(sup_dist(g_map(u, p), u) < 1e-15);

    const double beta_c = beta_thresholds(3).second;
    MeanFieldParams pc(3, beta_c);
    const Simplex m = ordered_solution(pc)->as_simplex(3, 2);
    CHECK(sup_dist(g_map(m, pc), m) < 1e-10);

    Rng rng(31, 0);
    for (int t = 0; t < 20; ++t) {
        const Simplex v = random_interior_simplex(rng, 3);
        const auto J = g_jacobian(v, p);
        const double h = 1e-6;
        for (std::size_t r = 0; r < 3; ++r) {
            Simplex vp = v, vm = v;
            vp[r] += h;
            vm[r] -= h;
            const Simplex gp = g_map(vp, p), gm = g_map(vm, p);
            for (std::size_t q = 0; q < 3; ++q) {
                const double fd = (gp[q] - gm[q]) / (2.0 * h);
                CHECK(J[q][r] == Catch::Approx(fd).epsilon(1e-6).margin(1e-8));
            }
        }
    }
}

TEST_CASE("thresholds in closed form") {
    const auto [b0_3, bc_3] = beta_thresholds(3);
    CHECK(bc_3 == Catch::Approx(4.0 * std::log(2.0)).epsilon(1e-14));
    CHECK(b0_3 < bc_3);
    CHECK(bc_3 < 3.0);

    const auto [b0_5, bc_5] = beta_thresholds(5);
    CHECK(bc_5 == Catch::Approx(8.0 / 3.0 * std::log(4.0)).epsilon(1e-14));
    CHECK(b0_5 < bc_5);
    CHECK(bc_5 < 5.0);

    const auto [b0_10, bc_10] = beta_thresholds(10);
    CHECK(bc_10 == Catch::Approx(2.25 * std::log(9.0)).epsilon(1e-14));
    CHECK(bc_10 == Catch::Approx(4.943755299006494).epsilon(1e-12));
    CHECK(b0_10 < bc_10);
    CHECK(bc_10 < 10.0);

    CHECK_THROWS_AS(beta_thresholds(2), std::invalid_argument);

    // two closed forms for the same stability product at beta_c:
    // Q beta_c rho_A rho_B = beta_c / Q = ln(Q-1)/sinh(ln(Q-1)) < 1
    for (int Q : {3, 5, 10}) {
        const double bc = beta_thresholds(Q).second;
        const double lnq = std::log(static_cast<double>(Q - 1));
        CHECK(bc / Q == Catch::Approx(lnq / std::sinh(lnq)).epsilon(1e-13));
        CHECK(bc / Q < 1.0);
    }
}

TEST_CASE("ordered branch") {
    const double beta_c = beta_thresholds(3).second;
    const auto at_bc = ordered_solution(MeanFieldParams(3, beta_c));
    REQUIRE(at_bc.has_value());
    CHECK(at_bc->rho_A == Catch::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(at_bc->rho_B == Catch::Approx(1.0 / 6.0).epsilon(1e-12));

    const double beta0 = beta_thresholds(3).first;
    CHECK_FALSE(ordered_solution(MeanFieldParams(3, beta0 - 0.01)).has_value());

    // residuals of the defining equations at an off-critical point
    const auto ord = ordered_solution(MeanFieldParams(3, 3.0));
    REQUIRE(ord.has_value());
    CHECK(std::abs(std::log(ord->rho_A / ord->rho_B) - 3.0 * (ord->rho_A - ord->rho_B)) < 1e-10);
    CHECK(std::abs(ord->rho_A + 2.0 * ord->rho_B - 1.0) < 1e-12);
    CHECK(3.0 * 3.0 * ord->rho_A * ord->rho_B < 1.0);  // stability

    // closed-form ordered free energy agrees with direct evaluation
    MeanFieldParams p3(3, 3.0);
    CHECK(phi_ordered_closed_form(*ord, p3) ==
          Catch::Approx(phi_mf(ord->as_simplex(3, 0), p3)).epsilon(1e-12));
    CHECK(phi_disordered_closed_form(p3) ==
          Catch::Approx(phi_mf(uniform_simplex(3), p3)).epsilon(1e-14));
}

TEST_CASE("minimizer structure across the thresholds") {
    const auto [beta0, beta_c] = beta_thresholds(3);

    const auto low = minimizer_set(MeanFieldParams(3, 2.0));
    CHECK((2.0 <= beta0) == (low.kind == MinimizerKind::disordered_only));
    CHECK(low.disordered_is_global);

    const auto high = minimizer_set(MeanFieldParams(3, 5.0));
    CHECK(high.kind == MinimizerKind::ordered_only);
    CHECK(high.ordered_is_global);
    CHECK_FALSE(high.disordered.has_value());

    const auto crit = minimizer_set(MeanFieldParams(3, beta_c));
    CHECK(crit.kind == MinimizerKind::coexisting);
    CHECK(crit.global_minimizers().size() == 4);  // Q + 1 at coexistence
    const auto dp = delta_phi_and_slope(MeanFieldParams(3, beta_c));
    REQUIRE(dp.has_value());
    CHECK(std::abs(dp->value) < 1e-10);

    // off coexistence the global label follows the sign of Delta phi; note
    // the ordered branch only exists above beta_0 ~ beta_c - 0.027 at Q=3
    const auto below = minimizer_set(MeanFieldParams(3, beta_c - 0.01));
    CHECK(below.kind == MinimizerKind::coexisting);
    CHECK(below.disordered_is_global);
    CHECK_FALSE(below.ordered_is_global);
    const auto above = minimizer_set(MeanFieldParams(3, beta_c + 0.05));
    CHECK(above.ordered_is_global);
    CHECK_FALSE(above.disordered_is_global);
}

TEST_CASE("free energy difference and its slope") {
    const double beta_c = beta_thresholds(3).second;
    const auto dp = delta_phi_and_slope(MeanFieldParams(3, beta_c));
    REQUIRE(dp.has_value());
    CHECK(std::abs(dp->value) < 1e-12);
    // at beta_c: d(phi_ord - phi_dis)/d beta = -(Q-2)^2/(2Q(Q-1) beta_c)
    CHECK(dp->slope == Catch::Approx(-1.0 / (12.0 * 4.0 * std::log(2.0))).epsilon(1e-10));
    CHECK(coexistence_slope(3) == Catch::Approx(-0.0300561466851867).epsilon(1e-12));

    // beta-weighted difference decreases strictly in beta
    const double beta0 = beta_thresholds(3).first;
    double prev = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 40; ++i) {
        const double beta = beta0 + 0.05 + (3.0 - beta0 - 0.1) * i / 40.0;
        const auto d = delta_phi_and_slope(MeanFieldParams(3, beta));
        REQUIRE(d.has_value());
        const double bw = beta * d->value;
        CHECK(bw < prev);
        prev = bw;
        CHECK(d->beta_weighted_slope < 0.0);
    }

    CHECK_FALSE(delta_phi_and_slope(MeanFieldParams(3, beta0 - 0.05)).has_value());
}

TEST_CASE("every minimizer is a fixed point of g across the window") {
    const auto [beta0, beta_c] = beta_thresholds(3);
    (void)beta_c;
    for (int i = 0; i < 50; ++i) {
        const double beta = beta0 + (3.0 - beta0 - 1e-6) * (i + 0.5) / 50.0;
        MeanFieldParams p(3, beta);
        const auto ms = minimizer_set(p);
        for (const Simplex& m : ms.local_minimizers())
            CHECK(sup_dist(g_map(m, p), m) < 1e-10);
    }
}

TEST_CASE("contraction of g near the minimizers") {
    const double beta_c = beta_thresholds(3).second;
    MeanFieldParams p(3, beta_c);
    const auto ms = minimizer_set(p);
    const double radius = 1.0 / (4.0 * beta_c * beta_c * 9.0);
    const double bound = 1.0 - 1.0 / (2.0 * 3.0);
    Rng rng(77, 0);
    for (const Simplex& m : ms.local_minimizers()) {
        for (int t = 0; t < 1000; ++t) {
            Simplex v = m;
            // random perturbation inside the contraction ball, kept on the simplex
            double shift = 0.0;
            for (std::size_t q = 0; q + 1 < v.size(); ++q) {
                const double d = radius * (2.0 * rng.next_double() - 1.0);
                v[q] += d;
                shift += d;
            }
            v.back() -= shift;
            double worst = 0.0;
            for (const auto& row : g_jacobian(v, p))
                for (double x : row) worst = std::max(worst, std::abs(x));
            CHECK(worst <= bound);
        }
    }
}

TEST_CASE("grid scan locates the global minimum") {
    const double beta_c = beta_thresholds(3).second;
    for (double beta : {beta_c - 0.3, beta_c, beta_c + 0.3}) {
        MeanFieldParams p(3, beta);
        const auto ms = minimizer_set(p);
        double reported = std::numeric_limits<double>::infinity();
        for (const Simplex& m : ms.global_minimizers())
            reported = std::min(reported, phi_mf(m, p));
        double scanned = std::numeric_limits<double>::infinity();
        const int n = 100;
        for (int a = 0; a <= n; ++a)
            for (int b = 0; b <= n - a; ++b) {
                const Simplex v = {a / 100.0, b / 100.0, (n - a - b) / 100.0};
                scanned = std::min(scanned, phi_mf(v, p));
            }
        CHECK(scanned >= reported - 1e-12);  // grid can never undercut the true minimum
        CHECK(scanned - reported < 1e-4);
    }
}

TEST_CASE("minimizer separation at coexistence") {
    const double beta_c = beta_thresholds(3).second;
    const auto ms = minimizer_set(MeanFieldParams(3, beta_c));
    const auto all = ms.global_minimizers();
    REQUIRE(all.size() == 4);
    double min_sep = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < all.size(); ++i)
        for (std::size_t j = i + 1; j < all.size(); ++j)
            min_sep = std::min(min_sep, sup_dist(all[i], all[j]));
    // ordered-disordered: max(rho_A - 1/Q, 1/Q - rho_B) = 1/3 at Q = 3;
    // ordered-ordered: rho_A - rho_B = 1/2; the minimum over pairs is 1/3
    CHECK(min_sep == Catch::Approx(1.0 / 3.0).epsilon(1e-10));
}

TEST_CASE("gap growth away from the minimizers at coexistence") {
    const double beta_c = beta_thresholds(3).second;
    MeanFieldParams p(3, beta_c);
    const auto ms = minimizer_set(p);
    const auto minimizers = ms.global_minimizers();
    const double phi_min = phi_mf(minimizers.front(), p);
    for (double zeta : {0.02, 0.05, 0.1}) {
        double gap = std::numeric_limits<double>::infinity();
        const int n = 100;
        for (int a = 0; a <= n; ++a)
            for (int b = 0; b <= n - a; ++b) {
                const Simplex v = {a / 100.0, b / 100.0, (n - a - b) / 100.0};
                bool far = true;
                for (const Simplex& m : minimizers)
                    far = far && (sup_dist(v, m) >= zeta);
                if (far) gap = std::min(gap, phi_mf(v, p) - phi_min);
            }
        const double kappa = gap / (zeta * zeta);
        CHECK(kappa > 0.0);  // measured quadratic-gap coefficient stays positive
    }
}

TEST_CASE("Q=2 stays behind the off-theorem flag") {
    CHECK_THROWS_AS(MeanFieldParams(2, 1.5), std::invalid_argument);
    const auto ms = minimizer_set(MeanFieldParams(2, 2.5, true));
    CHECK(ms.kind == MinimizerKind::ordered_only);
    REQUIRE(ms.ordered.has_value());
    // Q=2 mean-field equation residual
    const double a = ms.ordered->rho_A;
    CHECK(std::abs(std::log(a / (1.0 - a)) - 2.5 * (2.0 * a - 1.0)) < 1e-12);
    const auto low = minimizer_set(MeanFieldParams(2, 1.5, true));
    CHECK(low.kind == MinimizerKind::disordered_only);
}
