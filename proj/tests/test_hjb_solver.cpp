#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <string>

#include "fundmm/hjb_solver.hpp"
#include "oracles.hpp"

using namespace fundmm;
using Catch::Approx;

namespace {

HJBParams base_params() {
    HJBParams p;
    p.ou_cash = {0.5, 0.0, 0.2};
    p.fill = {60.0, 2.0, 0.01};
    p.alpha = 0.01;
    p.phi = 0.005;
    return p;
}

GridSpec small_grid() {
    GridSpec g;
    g.horizon = 0.05;
    g.n_time = 40;
    g.q_min = -3;
    g.q_max = 3;
    g.dq = 1;
    g.f_min = -1.0;
    g.f_max = 1.0;
    g.n_f = 11;
    return g;
}

GridSpec collapsed(double f0, double qlim, std::int64_t n_time, double horizon) {
    GridSpec g;
    g.horizon = horizon;
    g.n_time = n_time;
    g.q_min = -qlim;
    g.q_max = qlim;
    g.dq = 1;
    g.f_min = g.f_max = f0;
    g.n_f = 1;
    return g;
}

}  // namespace

TEST_CASE("build_rates at the drift-free node", "[hjb][rates]") {
    GridSpec g = small_grid();
    const OUParams ou{0.5, 0.0, 0.2};
    const auto r = build_rates(g, ou);
    const double df = g.df();
    CHECK(r.up[5] == Approx(0.04 / (2.0 * df * df)).epsilon(1e-15));
    CHECK(r.down[5] == r.up[5]);
}

TEST_CASE("build_rates pure upwind drift", "[hjb][rates]") {
    GridSpec g = small_grid();
    const OUParams ou{0.7, 0.0, 0.0};
    const auto r = build_rates(g, ou);
    for (std::int64_t l = 0; l < 5; ++l) {
        CHECK(r.down[static_cast<std::size_t>(l)] == 0.0);
        CHECK(r.up[static_cast<std::size_t>(l)] == Approx(0.7 * (0.0 - g.f(l)) / g.df()).epsilon(1e-14));
    }
}

TEST_CASE("build_rates reproduce the drift on linear test functions", "[hjb][rates][property]") {
    GridSpec g = small_grid();
    g.f_min = -0.3;
    g.f_max = 0.5;
    g.n_f = 17;
    const OUParams ou{0.9, 0.05, 0.13};
    const auto r = build_rates(g, ou);
    for (std::int64_t l = 1; l + 1 < g.n_f; ++l) {
        const auto ul = static_cast<std::size_t>(l);
        const double applied = r.up[ul] * (g.f(l + 1) - g.f(l)) + r.down[ul] * (g.f(l - 1) - g.f(l));
        CHECK(applied == Approx(ou.kappa * (ou.theta - g.f(l))).margin(1e-12));
    }
    for (std::size_t l = 0; l < r.up.size(); ++l) {
        CHECK(r.up[l] >= 0.0);
        CHECK(r.down[l] >= 0.0);
    }
    CHECK(r.up.back() == 0.0);
    CHECK(r.down.front() == 0.0);
}

TEST_CASE("cfl_max_dt", "[hjb][cfl]") {
    SECTION("flat rates without fills") {
        GridSpec g = small_grid();
        const auto r = build_rates(g, {0.0, 0.0, 0.2});
        const double rr = 0.04 / (2.0 * g.df() * g.df());
        CHECK(cfl_max_dt(r, {0.0, 1.0, 0.0}) == Approx(1.0 / (2.0 * rr)).epsilon(1e-15));
    }
    SECTION("fills only") {
        GridSpec g = small_grid();
        const auto r = build_rates(g, {0.0, 0.0, 0.0});
        CHECK(cfl_max_dt(r, {3600.0, 1.0, 0.0}) == 1.0 / 7200.0);
    }
    SECTION("violating grid is refused with the bound") {
        GridSpec g = small_grid();
        g.n_time = 2;
        const auto p = base_params();
        const double bound = cfl_max_dt(build_rates(g, p.ou_cash), p.fill);
        try {
            solve(g, p);
            FAIL("expected a CFL violation");
        } catch (const CflViolation& e) {
            CHECK(e.bound() == bound);
            CHECK(e.requested_dt() == g.dt());
            CHECK(std::string(e.what()).find("max admissible") != std::string::npos);
        }
    }
}

TEST_CASE("optimal_offset", "[hjb][offset]") {
    const FillCurve fill{10.0, 4.0, 0.01};
    CHECK(optimal_offset(0.0, fill) == 0.25);
    CHECK(optimal_offset(0.25 - 0.01, fill) == Approx(0.01).margin(1e-17));
    const FillCurve floored{10.0, 2.0, 0.005};
    const double A = 10.0 / floored.k;
    CHECK(optimal_offset(A, floored) == floored.delta_min);
    const auto dense = oracle::dense_offset_search(A, floored, 5.0, 200000);
    CHECK(std::abs(dense.argmax - optimal_offset(A, floored)) <= dense.step);
}

TEST_CASE("hamiltonian", "[hjb][hamiltonian]") {
    const FillCurve fill{50.0, 2.0, 0.01};
    CHECK(hamiltonian(0.0, fill) == Approx(50.0 * std::exp(-1.0) / 2.0).epsilon(1e-15));

    SECTION("floored branch") {
        // Once the floor binds, delta_min + A >= 1/k, so H stays positive.
        const double A = 3.0;
        const double H = hamiltonian(A, fill);
        CHECK(optimal_offset(A, fill) == fill.delta_min);
        CHECK(H == Approx(50.0 * std::exp(-2.0 * 0.01) * (0.01 + A)).epsilon(1e-14));
        const auto dense = oracle::dense_offset_search(A, fill, 20.0, 400000);
        CHECK(H == Approx(dense.value).epsilon(1e-9));
    }
    SECTION("positive for every value difference") {
        for (double A = -20.0; A <= 20.0; A += 0.25) CHECK(hamiltonian(A, fill) > 0.0);
    }
    SECTION("dominates every admissible offset") {
        std::mt19937_64 gen(2);
        std::uniform_real_distribution<double> a(-2.0, 2.0);
        for (int i = 0; i < 50; ++i) {
            const double A = a(gen);
            const auto dense = oracle::dense_offset_search(A, fill, 10.0, 20000);
            CHECK(hamiltonian(A, fill) >= dense.value - 1e-12);
            CHECK(hamiltonian(A, fill) == Approx(dense.value).epsilon(1e-6));
        }
    }
    SECTION("non-decreasing in the value difference") {
        std::mt19937_64 gen(3);
        std::uniform_real_distribution<double> a(-3.0, 3.0);
        for (int i = 0; i < 100; ++i) {
            double x = a(gen), y = a(gen);
            if (x > y) std::swap(x, y);
            CHECK(hamiltonian(x, fill) <= hamiltonian(y, fill));
        }
    }
}

TEST_CASE("zero-funding risk-neutral limit away from the inventory limits", "[hjb][solve][as]") {
    // Boundary effects travel one inventory step per time step, so with fewer
    // steps than the distance from q = 0 to a limit the centre rows are exact.
    HJBParams p;
    p.ou_cash = {0.0, 0.0, 0.0};
    p.fill = {30.0, 0.8, 0.01};
    const auto g = collapsed(0.0, 12, 8, 0.1);
    const auto table = solve(g, p);
    for (std::int64_t i = 0; i <= g.n_time; ++i) {
        for (std::int64_t j = 10; j <= 14; ++j) {
            const auto qa = quote_lookup(table, g.t(i), g.q(j), 0.0);
            CHECK(std::abs(qa.bid_offset * p.fill.k - 1.0) <= 1e-10);
            CHECK(std::abs(qa.ask_offset * p.fill.k - 1.0) <= 1e-10);
            CHECK(table.at(i, j, 0) == table.at(i, 12, 0));
        }
    }
    const auto at0 = quote_lookup(table, 0.0, 0.0, 0.0);
    CHECK_FALSE(at0.bid_blocked);
    CHECK_FALSE(at0.ask_blocked);
}

TEST_CASE("zero-funding limit: the dropped side lowers boundary values", "[hjb][solve][as]") {
    HJBParams p;
    p.ou_cash = {0.0, 0.0, 0.0};
    p.fill = {30.0, 0.8, 0.01};
    const auto g = collapsed(0.0, 3, 64, 1.0);
    const auto table = solve(g, p);
    const auto nq = g.n_q();
    CHECK(table.at(0, 0, 0) < table.at(0, 1, 0));
    CHECK(table.at(0, nq - 1, 0) < table.at(0, nq - 2, 0));
    // next to q_min, selling towards the limit is quoted wider than 1/k
    const auto near_min = quote_lookup(table, 0.0, g.q(1), 0.0);
    CHECK(near_min.ask_offset > 1.0 / p.fill.k);
    const auto near_max = quote_lookup(table, 0.0, g.q(nq - 2), 0.0);
    CHECK(near_max.bid_offset > 1.0 / p.fill.k);
}

TEST_CASE("no-fill solve is the analytic quadratic", "[hjb][solve][analytic]") {
    HJBParams p;
    p.ou_cash = {0.0, 0.0, 0.0};
    p.fill = {0.0, 1.0, 0.0};
    p.alpha = 0.02;
    p.phi = 0.003;
    const double f0 = 0.37;
    const auto g = collapsed(f0, 5, 100, 8.0);
    const auto table = solve(g, p);
    for (std::int64_t i = 0; i <= g.n_time; ++i)
        for (std::int64_t j = 0; j < g.n_q(); ++j) {
            const double q = g.q(j), t = g.t(i);
            const double expect = -p.alpha * q * q - (g.horizon - t) * (q * f0 + p.phi * q * q);
            CHECK(std::abs(table.at(i, j, 0) - expect) <= 1e-9);
        }
}

TEST_CASE("solver matches a direct dynamic-programming recursion", "[hjb][solve][oracle]") {
    GridSpec g;
    g.horizon = 0.02;
    g.n_time = 8;
    g.q_min = -2;
    g.q_max = 2;
    g.dq = 1;
    g.f_min = -0.4;
    g.f_max = 0.4;
    g.n_f = 3;
    HJBParams p;
    p.ou_cash = {0.8, 0.05, 0.3};
    p.fill = {40.0, 1.5, 0.02};
    p.alpha = 0.03;
    p.phi = 0.01;
    const auto table = solve(g, p);
    const auto ref = oracle::hjb_bruteforce(g, p);
    for (std::int64_t i = 0; i <= g.n_time; ++i)
        for (std::int64_t j = 0; j < g.n_q(); ++j)
            for (std::int64_t l = 0; l < g.n_f; ++l) {
                const double expect = ref.at({static_cast<int>(i), g.q(j), g.f(l)});
                CHECK(std::abs(table.at(i, j, l) - expect) <= 1e-12);
            }
}

TEST_CASE("solver with a non-unit quote size matches the recursion", "[hjb][solve][oracle]") {
    GridSpec g;
    g.horizon = 0.01;
    g.n_time = 6;
    g.q_min = -1.0;
    g.q_max = 1.0;
    g.dq = 0.5;
    g.f_min = -0.2;
    g.f_max = 0.2;
    g.n_f = 5;
    HJBParams p;
    p.ou_cash = {0.3, -0.02, 0.1};
    p.fill = {25.0, 3.0, 0.0};
    p.alpha = 0.1;
    p.phi = 0.02;
    const auto table = solve(g, p);
    const auto ref = oracle::hjb_bruteforce(g, p);
    for (std::int64_t i = 0; i <= g.n_time; ++i)
        for (std::int64_t j = 0; j < g.n_q(); ++j)
            for (std::int64_t l = 0; l < g.n_f; ++l)
                CHECK(std::abs(table.at(i, j, l) - ref.at({static_cast<int>(i), g.q(j), g.f(l)})) <= 1e-12);
}

TEST_CASE("one backward step is monotone", "[hjb][monotone][property]") {
    GridSpec g = small_grid();
    const auto p = base_params();
    const auto rates = build_rates(g, p.ou_cash);
    const double dt = cfl_max_dt(rates, p.fill);
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0), gap(0.0, 0.5);
    const auto n = static_cast<std::size_t>(g.n_q() * g.n_f);
    int violations = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> V(n), U(n), Vo(n), Uo(n);
        for (std::size_t x = 0; x < n; ++x) {
            V[x] = u(gen);
            U[x] = V[x] + (trial % 4 == 0 ? 0.0 : gap(gen));
        }
        step_backward(g, p, rates, U, Uo, dt);
        step_backward(g, p, rates, V, Vo, dt);
        for (std::size_t x = 0; x < n; ++x)
            if (Uo[x] < Vo[x]) ++violations;
    }
    CHECK(violations == 0);
}

TEST_CASE("larger penalties never raise the value", "[hjb][solve][property]") {
    const auto g = small_grid();
    auto p = base_params();
    const auto a = solve(g, p);
    auto pa = p;
    pa.alpha *= 3.0;
    auto pp = p;
    pp.phi *= 3.0;
    const auto b = solve(g, pa), c = solve(g, pp);
    for (std::size_t x = 0; x < a.theta.size(); ++x) {
        CHECK(b.theta[x] <= a.theta[x]);
        CHECK(c.theta[x] <= a.theta[x]);
    }
}

TEST_CASE("funding skew and reflection symmetry", "[hjb][solve][symmetry]") {
    GridSpec g = small_grid();
    g.n_time = 200;
    g.horizon = 0.5;
    auto p = base_params();
    p.ou_cash.theta = 0.0;
    const auto table = solve(g, p);
    const auto nq = g.n_q(), nf = g.n_f;
    double worst = 0.0;
    for (std::int64_t i = 0; i <= g.n_time; ++i)
        for (std::int64_t j = 0; j < nq; ++j)
            for (std::int64_t l = 0; l < nf; ++l)
                worst = std::max(worst, std::abs(table.at(i, j, l) - table.at(i, nq - 1 - j, nf - 1 - l)));
    CHECK(worst <= 1e-10);

    for (double q : {1.0, 2.0}) {
        double prev = std::numeric_limits<double>::infinity();
        for (std::int64_t l = 0; l < nf; ++l) {
            const double ask = quote_lookup(table, 0.0, q, g.f(l)).ask_offset;
            CHECK(ask <= prev + 1e-15);
            prev = ask;
        }
    }
    // reflection swaps the two sides
    const auto a = quote_lookup(table, 0.1, 1.0, g.f(7));
    const auto b = quote_lookup(table, 0.1, -1.0, g.f(3));
    CHECK(a.ask_offset == Approx(b.bid_offset).margin(1e-10));
    CHECK(a.bid_offset == Approx(b.ask_offset).margin(1e-10));
}

TEST_CASE("grid refinement shows a converging trend", "[hjb][solve][refinement]") {
    auto p = base_params();
    GridSpec g = small_grid();
    g.horizon = 1.0;
    g.n_f = 9;
    g.n_time = 400;
    std::vector<double> probe;
    for (int level = 0; level < 4; ++level) {
        const auto t = solve(g, p);
        probe.push_back(interpolate_theta(t, 0.0, inventory_index(g, 1.0), 0.25));
        g.n_f = 2 * (g.n_f - 1) + 1;
        g.n_time *= 2;
    }
    const double d1 = std::abs(probe[1] - probe[0]);
    const double d2 = std::abs(probe[2] - probe[1]);
    const double d3 = std::abs(probe[3] - probe[2]);
    CHECK(d2 < d1);
    CHECK(d3 < d2);
}

TEST_CASE("terminal slice is exact", "[hjb][solve]") {
    const auto g = small_grid();
    const auto p = base_params();
    const auto table = solve(g, p);
    for (std::int64_t j = 0; j < g.n_q(); ++j)
        for (std::int64_t l = 0; l < g.n_f; ++l) CHECK(table.at(g.n_time, j, l) == -p.alpha * g.q(j) * g.q(j));
    for (double v : table.theta) CHECK(std::isfinite(v));
}

TEST_CASE("non-finite values abort with the offending node", "[hjb][solve]") {
    GridSpec g = small_grid();
    g.horizon = 1e5;
    g.n_time = 300;
    auto p = base_params();
    p.fill.lambda0 = 1e6;
    CHECK_THROWS_AS(solve(g, p, {.enforce_cfl = false}), SolverNaN);
}

TEST_CASE("quote_lookup", "[hjb][lookup]") {
    const auto g = small_grid();
    const auto p = base_params();
    const auto table = solve(g, p);
    CHECK(quote_lookup(table, 0.0, g.q_max, 0.0).bid_blocked);
    CHECK_FALSE(quote_lookup(table, 0.0, g.q_max, 0.0).ask_blocked);
    CHECK(quote_lookup(table, 0.0, g.q_min, 0.0).ask_blocked);
    CHECK_FALSE(quote_lookup(table, 0.0, g.q_min, 0.0).bid_blocked);
    CHECK_THROWS_AS(quote_lookup(table, 0.0, 0.5, 0.0), InvalidInput);
    CHECK_THROWS_AS(quote_lookup(table, 0.0, 4.0, 0.0), InvalidInput);
    CHECK_THROWS_AS(quote_lookup(table, -0.1, 0.0, 0.0), InvalidInput);
    CHECK_THROWS_AS(quote_lookup(table, g.horizon * 2, 0.0, 0.0), InvalidInput);

    SECTION("exact at grid nodes") {
        for (std::int64_t i : {std::int64_t{0}, std::int64_t{7}, g.n_time})
            for (std::int64_t j = 0; j < g.n_q(); ++j)
                for (std::int64_t l = 0; l < g.n_f; ++l)
                    CHECK(interpolate_theta(table, g.t(i), j, g.f(l)) == table.at(i, j, l));
        const auto q = quote_lookup(table, g.t(5), 1.0, g.f(2));
        const auto j = inventory_index(g, 1.0);
        const double A = (table.at(5, j - 1, 2) - table.at(5, j, 2)) / g.dq;
        const double B = (table.at(5, j + 1, 2) - table.at(5, j, 2)) / g.dq;
        CHECK(q.ask_offset == optimal_offset(A, p.fill));
        CHECK(q.bid_offset == optimal_offset(B, p.fill));
    }
    SECTION("funding is clamped") {
        CHECK(interpolate_theta(table, 0.0, 2, 50.0) == table.at(0, 2, g.n_f - 1));
        CHECK(interpolate_theta(table, 0.0, 2, -50.0) == table.at(0, 2, 0));
    }
    SECTION("bilinear midpoint") {
        const double t = 0.5 * (g.t(3) + g.t(4));
        const double f = 0.5 * (g.f(6) + g.f(7));
        const double expect = 0.25 * (table.at(3, 1, 6) + table.at(3, 1, 7) + table.at(4, 1, 6) + table.at(4, 1, 7));
        CHECK(interpolate_theta(table, t, 1, f) == Approx(expect).epsilon(1e-13));
    }
}

TEST_CASE("grid validation", "[hjb][grid]") {
    GridSpec g = small_grid();
    CHECK_NOTHROW(g.validate());
    auto bad = g;
    bad.n_f = 2;
    CHECK_THROWS_AS(bad.validate(), InvalidInput);
    bad = g;
    bad.q_min = 1;
    CHECK_THROWS_AS(bad.validate(), InvalidInput);
    bad = g;
    bad.dq = 0.7;
    CHECK_THROWS_AS(bad.validate(), InvalidInput);
    bad = g;
    bad.n_f = 1;
    CHECK_THROWS_AS(bad.validate(), InvalidInput);
    bad.f_max = bad.f_min;
    CHECK_NOTHROW(bad.validate());
    bad = g;
    bad.n_time = 0;
    CHECK_THROWS_AS(bad.validate(), InvalidInput);
    auto p = base_params();
    p.alpha = -1.0;
    CHECK_THROWS_AS(p.validate(), InvalidInput);
}

TEST_CASE("default funding bounds span five stationary SDs", "[hjb][grid]") {
    const OUParams ou{0.5, 0.1, 0.2};
    const auto [lo, hi] = default_funding_bounds(ou);
    CHECK(hi - 0.1 == Approx(5.0 * 0.2 / std::sqrt(1.0)).epsilon(1e-14));
    CHECK(0.1 - lo == Approx(hi - 0.1).epsilon(1e-14));
}
