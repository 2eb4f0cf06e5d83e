#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "orbitforge/newton.hpp"
#include "orbitforge/oracle.hpp"
#include "test_models.hpp"

#include <random>

using namespace orbitforge;

TEST_CASE("bvp oracle: flat window with V = 0 yields the straight segment") {
    const ManifoldModel flat(1, {ChartTopology::line()},
                             [](const Vec&) { return Mat(Mat::Identity(1, 1)); },
                             [](const Vec&) { return 0.0; });
    const TimeFactor tf = TimeFactor::power(1);
    Vec a(1), b(1);
    a[0] = -1.0;
    b[0] = 1.0;
    const auto sol = oracle::bvp_solve(flat, tf, 1.5, a, b, {}, {}, {401});
    CHECK(sol.converged);
    CHECK(sol.residual < 1e-10);
    // with V = 0 the solution in original time is the straight line in t
    for (size_t j = 0; j < sol.xi.size(); j += 50) {
        const double t = tf.t_of_xi(sol.xi[j]);
        const double T = tf.t_of_xi(1.5);
        const double expect = -1.0 + (t + T) / (2.0 * T) * 2.0;
        CHECK(sol.points[j][0] == doctest::Approx(expect).epsilon(1e-6));
    }
}

TEST_CASE("bvp oracle agrees with the FEM solver on a shared pendulum window") {
    const ManifoldModel m = testmodels::pendulum_circle();
    const TimeFactor tf = TimeFactor::power(1);
    auto grid = std::make_shared<WindowGrid>(build_grid(tf, 2.0, 320));
    Vec a(1), b(1);
    a[0] = M_PI;
    b[0] = 0.0;
    const SolveResult fem = solve_window(m, tf, straight_curve(grid, a, b), {});
    REQUIRE(fem.converged);

    // oracle at 4x the main resolution, seeded independently
    oracle::BvpOptions opts;
    opts.nodes = 4 * grid->node_count();
    const auto orc = oracle::bvp_solve(m, tf, 2.0, a, b, {}, {}, opts);
    CHECK(orc.converged);
    double sup = 0.0;
    for (int i = 0; i < fem.solution.node_count(); ++i) {
        const Vec o = orc.at(grid->nodes[i]);
        sup = std::max(sup, std::abs(o[0] - fem.solution.points[i][0]));
    }
    CHECK(sup < 1e-6);

    // the main solution interpolated in is accepted: Newton from it converges
    // immediately to the oracle's own tolerance
    std::vector<double> xi(grid->nodes.data(), grid->nodes.data() + grid->node_count());
    const auto seeded = oracle::bvp_solve(m, tf, 2.0, a, b, fem.solution.points, xi, opts);
    CHECK(seeded.converged);
    CHECK(seeded.residual < 1e-8);
}

TEST_CASE("fd_check: zero direction and report sanity") {
    const ManifoldModel m = testmodels::flat_line_double_well();
    const TimeFactor tf = TimeFactor::power(1);
    auto grid = std::make_shared<WindowGrid>(build_grid(tf, 1.0, 48));
    Vec a(1), b(1);
    a[0] = -1.0;
    b[0] = 1.0;
    std::mt19937 rng(2);
    const DiscreteCurve q = testmodels::random_curve(grid, a, b, rng);
    TangentField zero;
    zero.values.assign(q.node_count(), Vec::Zero(1));
    const auto rep = oracle::fd_check(m, tf, q, zero, zero, {0.1, 0.05});
    for (double g : rep.gradient_mismatch) CHECK(g < 1e-14);
    for (double h : rep.hessian_mismatch) CHECK(h < 1e-12);
}

TEST_CASE("oracle rejects non-convergent setups loudly") {
    // pathological: potential gradient blows up far from the well and the
    // iteration cap is tiny
    const ManifoldModel m = testmodels::pendulum_circle();
    const TimeFactor tf = TimeFactor::power(1);
    Vec a(1), b(1);
    a[0] = M_PI;
    b[0] = 0.0;
    oracle::BvpOptions opts;
    opts.max_iter = 0;
    CHECK_THROWS(oracle::bvp_solve(m, tf, 2.0, a, b, {}, {}, opts));
}
