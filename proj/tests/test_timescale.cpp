#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "orbitforge/timescale.hpp"

#include <cmath>
#include <vector>

using namespace orbitforge;

TEST_CASE("power factor closed forms (m = 2)") {
    const TimeFactor tf = TimeFactor::power(2);
    CHECK(tf.r(0.5) == doctest::Approx(1.0).epsilon(1e-14));   // (2 * 0.5)^{1/2}
    CHECK(tf.p(0.5) == doctest::Approx(1.0).epsilon(1e-14));   // (m/(m+2)) / xi
    CHECK(tf.alpha() == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
    CHECK(tf.sigma(-3.0) == 1.0);
    CHECK(tf.sigma(3.0) == 1.0);
}

TEST_CASE("power factor closed forms (m = 1)") {
    const TimeFactor tf = TimeFactor::power(1);
    CHECK(tf.r(2.0 / 3.0) == doctest::Approx(1.0).epsilon(1e-14));  // (3 xi / 2)^{1/3}
    CHECK(tf.sigma(-1.0) == -1.0);
    CHECK(tf.sigma(1.0) == 1.0);
    // p = r'/r checked against finite differences
    const double xi = 0.8, h = 1e-6;
    const double fd = (tf.r(xi + h) - tf.r(xi - h)) / (2.0 * h) / tf.r(xi);
    CHECK(tf.p(xi) == doctest::Approx(fd).epsilon(1e-7));
}

TEST_CASE("alpha limit and m validation") {
    CHECK_THROWS_AS(TimeFactor::power(0), std::invalid_argument);
    // alpha = ((m+2)/2)^{2/(m+2)} -> 1 as m -> infinity
    CHECK(TimeFactor::power(200).alpha() == doctest::Approx(1.0).epsilon(0.05));
    CHECK(TimeFactor::power(200).alpha() > 1.0);
}

TEST_CASE("weight integrals: exact antiderivatives for m = 2") {
    const TimeFactor tf = TimeFactor::power(2);
    // eta over [-2, 2]: 2 sqrt(2) sqrt(2) = 4
    const WeightIntegrals wi = tf.weight_integrals(-2.0, 2.0);
    CHECK(wi.int_r_inv == doctest::Approx(4.0).epsilon(1e-13));
    // int_0^1 r = (2/3) sqrt(2)
    const WeightIntegrals w2 = tf.weight_integrals(0.0, 1.0);
    CHECK(w2.int_r == doctest::Approx(2.0 * std::sqrt(2.0) / 3.0).epsilon(1e-13));
}

TEST_CASE("upsilon gap closed form and lower bound") {
    const TimeFactor tf = TimeFactor::power(2);
    CHECK(tf.upsilon_gap(1.0, 0.0).gap == doctest::Approx(0.0));

    // m=2, xi=2, h=sqrt(2): g(2) = 2, zeta = (2 - sqrt 2)^2 / 2
    const UpsilonResult r = tf.upsilon_gap(2.0, std::sqrt(2.0));
    CHECK(r.zeta == doctest::Approx((2.0 - std::sqrt(2.0)) * (2.0 - std::sqrt(2.0)) / 2.0)
                        .epsilon(1e-12));
    CHECK(r.gap == doctest::Approx(2.0 - r.zeta).epsilon(1e-12));

    // Upsilon(xi) >= h xi^{m/(m+2)} / alpha whenever xi >= (h/alpha)^{(m+2)/2}
    for (int i = 0; i < 100; ++i) {
        const double h = 0.1 + 0.03 * i;
        const double thresh = std::pow(h / tf.alpha(), 2.0);
        const double xi = thresh * (1.0 + 0.2 * i);
        const UpsilonResult u = tf.upsilon_gap(xi, h);
        if (u.no_solution) continue;
        CHECK(u.gap >= h / tf.alpha() * std::sqrt(xi) - 1e-10);
    }

    // no-solution signal
    CHECK(tf.upsilon_gap(0.1, 100.0).no_solution);
}

TEST_CASE("custom factor reproduces the power closed forms") {
    const TimeFactor ref = TimeFactor::power(2);
    const TimeFactor tf = TimeFactor::custom([](double t) { return t * t; },
                                             [](double t) { return 2.0 * t; },
                                             [](double) { return 2.0; }, 0.0, 30.0, 2048);
    for (double xi : {0.05, 0.3, 1.0, 2.5, -0.4, -1.7}) {
        CHECK(tf.r(xi) == doctest::Approx(ref.r(xi)).epsilon(1e-8));
        CHECK(tf.sigma(xi) == ref.sigma(xi));
        CHECK(tf.p(xi) == doctest::Approx(ref.p(xi)).epsilon(1e-6));
        CHECK(tf.g_signed(xi) == doctest::Approx(ref.g_signed(xi)).epsilon(1e-8));
        CHECK(tf.t_of_xi(xi) == doctest::Approx(ref.t_of_xi(xi)).epsilon(1e-8));
    }
    const WeightIntegrals a = tf.weight_integrals(-1.0, 2.0);
    const WeightIntegrals b = ref.weight_integrals(-1.0, 2.0);
    CHECK(a.int_r == doctest::Approx(b.int_r).epsilon(1e-8));
    CHECK(a.int_r_inv == doctest::Approx(b.int_r_inv).epsilon(1e-8));
    CHECK(a.reduced_accuracy);  // custom kind through 0 flags reduced accuracy
    CHECK(!b.reduced_accuracy);
    // xi(t) inverse
    CHECK(tf.xi_of_t(1.3) == doctest::Approx(ref.xi_of_t(1.3)).epsilon(1e-8));
}

TEST_CASE("g convexity signs hold at quadrature nodes") {
    for (int m : {1, 2, 3}) {
        const TimeFactor tf = TimeFactor::power(m);
        double prev_g = 0.0, prev_gp = 1e300;
        for (int i = 1; i <= 50; ++i) {
            const double xi = 0.1 * i;
            const double g = tf.g(xi);
            const double gp = 1.0 / tf.r(xi);
            CHECK(g > prev_g);    // g' > 0
            CHECK(gp < prev_gp);  // g'' < 0
            prev_g = g;
            prev_gp = gp;
        }
        // g''' > 0: second differences of g' increase
        const double h = 0.05;
        for (double xi : {0.5, 1.0, 2.0}) {
            const double gpp1 = (1.0 / tf.r(xi + h) - 1.0 / tf.r(xi - h)) / (2.0 * h);
            const double gpp2 =
                (1.0 / tf.r(xi + 2.0 * h) - 1.0 / tf.r(xi)) / (2.0 * h);
            CHECK(gpp2 > gpp1);  // g'' increasing = g''' > 0
        }
    }
}

TEST_CASE("p decreases on the positive axis") {
    for (int m : {1, 2, 5}) {
        const TimeFactor tf = TimeFactor::power(m);
        double prev = 1e300;
        for (int i = 1; i <= 40; ++i) {
            const double p = tf.p(0.05 * i);
            CHECK(p < prev);
            CHECK(p > 0.0);
            prev = p;
        }
    }
}

namespace {
std::vector<double> make_grid(double span, int n) {
    std::vector<double> g;
    for (int i = 0; i <= n; ++i) g.push_back(-span + 2.0 * span * i / n);
    return g;
}
}  // namespace

TEST_CASE("assumption validator: f = t passes") {
    const auto rep = validate_assumptions([](double t) { return t; },
                                          [](double) { return 1.0; },
                                          [](double) { return 0.0; }, make_grid(10.0, 2000));
    CHECK(rep.a1.passed);
    CHECK(rep.a2.passed);
    CHECK(rep.a3.passed);
    CHECK(!rep.a3_exemption_applied);  // 0 < 3/2 strictly everywhere
}

TEST_CASE("assumption validator: f = t^2 passes with the both-vanish exemption") {
    const auto rep = validate_assumptions([](double t) { return t * t; },
                                          [](double t) { return 2.0 * t; },
                                          [](double) { return 2.0; }, make_grid(10.0, 2001));
    CHECK(rep.a1.passed);
    CHECK(rep.a2.passed);
    CHECK(rep.a3.passed);
}

TEST_CASE("assumption validator: cosh fails A1") {
    const auto rep = validate_assumptions([](double t) { return std::cosh(t); },
                                          [](double t) { return std::sinh(t); },
                                          [](double t) { return std::cosh(t); },
                                          make_grid(10.0, 2000));
    CHECK(!rep.a1.passed);
}

TEST_CASE("assumption validator: A3 violation reported with location") {
    // f = exp(t^2) - strongly convex growth violates A3 for large |t|:
    // f'' f = (2 + 4 t^2) e^{2t^2}, (3/2) f'^2 = 6 t^2 e^{2t^2}
    const auto f = [](double t) { return std::exp(t * t); };
    const auto fp = [](double t) { return 2.0 * t * std::exp(t * t); };
    const auto fpp = [](double t) { return (2.0 + 4.0 * t * t) * std::exp(t * t); };
    const auto rep = validate_assumptions(f, fp, fpp, make_grid(3.0, 600));
    CHECK(!rep.a3.passed);
    CHECK(rep.a3.first_violation_t.has_value());
    // violation holds whenever 2 + 4t^2 >= 6 t^2, i.e. |t| <= 1
    CHECK(std::abs(*rep.a3.first_violation_t) <= 1.0 + 1e-9);
}

TEST_CASE("assumption validator: bounded factor fails A2") {
    const auto rep = validate_assumptions([](double t) { return std::tanh(t); },
                                          [](double t) { return 1.0 / std::cosh(t) / std::cosh(t); },
                                          [](double t) {
                                              const double s = 1.0 / std::cosh(t);
                                              return -2.0 * s * s * std::tanh(t);
                                          },
                                          make_grid(10.0, 2000));
    CHECK(rep.a1.passed);
    CHECK(!rep.a2.passed);
}
