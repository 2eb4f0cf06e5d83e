// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria marked with their tolerance come straight from the
// project contract; no thresholds are tuned at runtime.

#include "orbitforge/continuation.hpp"
#include "orbitforge/oracle.hpp"
#include "orbitforge/runio.hpp"
#include "test_models.hpp"

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <random>

using namespace orbitforge;

namespace {

int failures = 0;

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

void report(int id, bool ok, const std::string& what, const std::string& detail) {
    std::printf("criterion %2d [%s] %s  (%s)\n", id, ok ? "PASS" : "FAIL", what.c_str(),
                detail.c_str());
    if (!ok) ++failures;
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof(buf), f, ap);
    va_end(ap);
    return buf;
}

// -------------------------------------------------------------------------
// 1. derivative consistency on random curves over three models

void criterion_1() {
    Timer timer;
    std::mt19937 rng(2024);
    const TimeFactor tf = TimeFactor::power(1);
    const std::vector<double> hs = {0.4, 0.2, 0.1, 0.05};
    double worst_g = 10.0, worst_h = 10.0, worst_probe = 0.0;
    int count = 0;
    struct Case {
        ManifoldModel model;
        Vec a, b;
        int curves;
    };
    std::vector<Case> cases;
    {
        Vec a(1), b(1);
        a[0] = -1.0;
        b[0] = 1.0;
        cases.push_back({testmodels::flat_line_double_well(), a, b, 7});
    }
    {
        Vec a(1), b(1);
        a[0] = M_PI;
        b[0] = 0.0;
        cases.push_back({testmodels::pendulum_circle(), a, b, 7});
    }
    {
        Vec a(2), b(2);
        a << 0.2, -0.5;
        b << 2.0, 1.4;
        cases.push_back({testmodels::torus_wavy(), a, b, 6});
    }
    for (auto& cs : cases) {
        auto grid = std::make_shared<WindowGrid>(build_grid(tf, 1.2, 320));
        for (int trial = 0; trial < cs.curves; ++trial) {
            const DiscreteCurve q = testmodels::random_curve(grid, cs.a, cs.b, rng);
            const TangentField phi = testmodels::random_field(q, rng);
            const TangentField psi = testmodels::random_field(q, rng);
            const auto rep = oracle::fd_check(cs.model, tf, q, phi, psi, hs, 1e-4);
            worst_g = std::min(worst_g, rep.gradient_order);
            worst_h = std::min(worst_h, rep.hessian_order);
            worst_probe = std::max(worst_probe, rep.gradient_rel_mismatch_at);
            ++count;
        }
    }
    const double secs = timer.seconds();
    const bool ok =
        count == 20 && worst_g >= 1.9 && worst_h >= 1.8 && worst_probe < 1e-6 && secs < 60.0;
    report(1, ok, "derivative consistency (20 random curves, 3 models)",
           fmt("grad order >= %.3f, hess order >= %.3f, rel mismatch at 1e-4 <= %.2e, %.1f s",
               worst_g, worst_h, worst_probe, secs));
}

// -------------------------------------------------------------------------
// 2. comparison-lemma sandwich and endpoint-slope bound

void criterion_2() {
    const std::vector<std::tuple<double, double, double, int>> combos = {
        {1.0, 0.5, 2.5, 1},  {0.8, 1.0, 3.0, 2}, {1.5, 0.3, 1.8, 1}, {0.6, 0.7, 4.0, 3},
        {1.2, 0.2, 1.5, 2},  {0.9, 1.5, 5.0, 1}, {2.0, 0.4, 2.0, 4}, {0.5, 0.8, 6.0, 2},
        {1.1, 0.25, 2.2, 1}, {0.7, 0.6, 3.5, 3}};
    double worst_low = 0.0, worst_high = 0.0, worst_margin = 1e300;
    bool slopes_ok = true;
    for (const auto& [lam, a, b, m] : combos) {
        const TimeFactor tf = TimeFactor::power(m);
        const int n = 3001;
        std::vector<double> xs;
        for (int i = 0; i < n; ++i) xs.push_back(a + (b - a) * i / (n - 1.0));
        const std::vector<double> v = oracle::scalar_bvp_solve(tf, lam, a, b, xs);
        const double p_plus = 0.5 * tf.p(a);
        const double p_minus = 0.5 * tf.p(b);
        for (int i = 0; i < n; ++i) {
            const double lo = comparison_solution(p_plus, lam, a, b, xs[i]);
            const double hi = comparison_solution(p_minus, lam, a, b, xs[i]);
            worst_low = std::max(worst_low, lo - v[i]);
            worst_high = std::max(worst_high, v[i] - hi);
        }
        const double dx = (b - a) / (n - 1.0);
        const double slope = (25.0 * v[n - 1] - 48.0 * v[n - 2] + 36.0 * v[n - 3] -
                              16.0 * v[n - 4] + 3.0 * v[n - 5]) /
                             (12.0 * dx);
        const double bound = lam / std::sinh(lam * (b - a));
        if (!(std::abs(slope) < bound)) slopes_ok = false;
        worst_margin = std::min(worst_margin, bound - std::abs(slope));
    }
    const bool ok = worst_low < 1e-8 && worst_high < 1e-8 && slopes_ok;
    report(2, ok, "comparison-lemma sandwich + endpoint slope bound (10 combos)",
           fmt("max below v_+: %.2e, max above v_-: %.2e, strict slope margin >= %.2e",
               worst_low, worst_high, worst_margin));
}

// -------------------------------------------------------------------------
// 3-6, 8: properties of the end-to-end pendulum run

struct RunChecks {
    OrbitResult res;
    ManifoldModel model;
    TimeFactor tf;
    CriticalPointData cp;
    double seconds = 0.0;
};

RunChecks pendulum_run() {
    Timer t;
    RunConfig cfg = load_run_config("configs/pendulum_t.json");
    cfg.stage_budget = 8;
    ContinuationDriver driver(cfg);
    RunChecks rc{driver.run(), driver.model(), driver.factor(), driver.critical_points(), 0.0};
    rc.seconds = t.seconds();
    return rc;
}

void criterion_3(const RunChecks& rc) {
    int certified = 0, rate_violations = 0;
    double best_exponent = 0.0;
    for (const StageRecord& r : rc.res.state.history) {
        // fitted contraction exponent from the residual trace
        std::vector<double> res;
        for (const auto& e : r.trace.entries)
            if (e.residual > 1e-11 * r.trace.entries.front().residual)
                res.push_back(e.residual);
        for (size_t i = 0; i + 2 < res.size(); ++i) {
            if (res[i + 1] >= res[i]) continue;
            const double expo = std::log(res[i + 2] / res[i + 1]) / std::log(res[i + 1] / res[i]);
            best_exponent = std::max(best_exponent, expo);
        }
        if (!r.certificate.passed) continue;
        ++certified;
        for (size_t j = 1; j < r.trace.dist_to_final.size(); ++j) {
            if (j - 1 >= r.certificate.predicted_rates.size()) break;
            if (r.trace.dist_to_final[j] > r.certificate.predicted_rates[j - 1] * (1 + 1e-9))
                ++rate_violations;
        }
    }
    const bool ok = certified >= 1 && rate_violations == 0 && best_exponent >= 1.8;
    report(3, ok, "Kantorovich rate on certified window solves",
           fmt("%d certified stages, %d rate violations, best fitted exponent %.2f",
               certified, rate_violations, best_exponent));
}

void criterion_4(const RunChecks& rc) {
    bool ok = true;
    double worst_ratio = 0.0;
    int checked = 0;
    for (const StageRecord& r : rc.res.state.history) {
        if (r.boundary_speed_bound <= 0.0) continue;
        ++checked;
        const double ratio =
            std::max(r.boundary_speed_plus, r.boundary_speed_minus) / r.boundary_speed_bound;
        worst_ratio = std::max(worst_ratio, ratio);
        if (ratio > 1.05) ok = false;
    }
    ok = ok && checked == static_cast<int>(rc.res.state.history.size());
    report(4, ok, "boundary-velocity bound at every converged stage",
           fmt("%d stages, worst |q'|/bound = %.3f (limit 1.05)", checked, worst_ratio));
}

void criterion_5(const RunChecks& rc) {
    bool entry_ok = true, gap_ok = true;
    double worst_slack = 1e300;
    for (size_t i = 1; i < rc.res.state.history.size(); ++i) {
        const StageRecord& r = rc.res.state.history[i];
        if (!r.bounds.entry_bound_valid) continue;
        if (r.bounds.xi_hat_measured > r.bounds.zeta_k + 1e-12) entry_ok = false;
        worst_slack = std::min(worst_slack, r.bounds.zeta_k - r.bounds.xi_hat_measured);
        const double gap = r.bounds.xi_k - r.bounds.xi_hat_measured;
        if (gap < r.gap_lemma11 - 1e-9) gap_ok = false;
    }
    report(5, entry_ok && gap_ok, "entry-time bound (Lemma-9 style) + power gap bound",
           fmt("measured entry within zeta at all stages (min slack %.3f), gap >= power bound: %s",
               worst_slack, gap_ok ? "yes" : "no"));
}

void criterion_6(const RunChecks& rc) {
    const ContinuationState& st = rc.res.state;
    const Eigen::VectorXd e = energy_per_cell(rc.model, rc.tf, st.curve);
    const WindowGrid& g = *st.curve.grid;
    int violations = 0;
    double worst_excess = 0.0;
    for (int c = 1; c + 1 < g.cells(); ++c) {
        if (g.cell_mid[c] < st.xi_hat_k) continue;  // restrict to the + tail region
        const double jump = e[c + 1] - e[c];
        if (jump <= 0.0) continue;
        // local truncation estimate via the second difference of E
        const double tau =
            std::abs(e[c + 1] - 2.0 * e[c] + e[c - 1]) + 1e-13 * (1.0 + std::abs(e[c]));
        if (jump > 10.0 * tau) {
            ++violations;
            worst_excess = std::max(worst_excess, jump / tau);
        }
    }
    report(6, violations == 0, "discrete energy non-increasing beyond the entry time",
           fmt("%d cells over 10x the local truncation estimate (worst %.1fx)", violations,
               worst_excess));
}

void criterion_7() {
    Timer timer;
    const ManifoldModel m = testmodels::pendulum_circle();
    const TimeFactor tf = TimeFactor::power(1);
    Vec a(1), b(1);
    a[0] = M_PI;
    b[0] = 0.0;
    auto grid = std::make_shared<WindowGrid>(build_grid(tf, 2.0, 400));  // 401 nodes
    const SolveResult fem = solve_window(m, tf, straight_curve(grid, a, b), {});
    oracle::BvpOptions opts;
    opts.nodes = 4 * grid->node_count();
    const auto orc = oracle::bvp_solve(m, tf, 2.0, a, b, {}, {}, opts);
    double sup = 0.0;
    for (int i = 0; i < fem.solution.node_count(); ++i)
        sup = std::max(sup,
                       (orc.at(grid->nodes[i]) - fem.solution.points[i]).cwiseAbs().maxCoeff());
    const double secs = timer.seconds();
    const bool ok = fem.converged && orc.converged && sup < 1e-6 && secs < 120.0;
    report(7, ok, "oracle equivalence on a shared pendulum window",
           fmt("sup distance %.2e (limit 1e-6), %d FEM nodes, %zu oracle nodes, %.1f s", sup,
               fem.solution.node_count(), orc.xi.size(), secs));
}

void criterion_8(const RunChecks& rc) {
    bool gammas_ok = true;
    for (const StageRecord& r : rc.res.state.history)
        if (r.gamma_measured <= 0.0) gammas_ok = false;
    const double final_res = rc.res.state.history.back().residual_final;
    const double lam_eff = rc.res.tail_lambda_eff;
    const bool ok = rc.res.state.k >= 5 && gammas_ok && final_res < 1e-8 &&
                    lam_eff >= 0.9 * rc.cp.lambda && rc.seconds < 300.0;
    report(8, ok, "transversality: end-to-end pendulum with f = t",
           fmt("%d stages, gamma > 0: %s, final residual %.1e, lambda_eff %.3f >= %.3f, %.1f s",
               rc.res.state.k, gammas_ok ? "yes" : "no", final_res, lam_eff,
               0.9 * rc.cp.lambda, rc.seconds));
}

// -------------------------------------------------------------------------
// 9. recurrence identities + schedule convergence criterion

void criterion_9(const RunChecks& rc) {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> up(0.01, 0.25), ud(0.0, 0.03);
    double worst_rel = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const double gamma0 = 0.95;
        double gamma_prod = gamma0, A = 1.0, drift = 0.0;
        for (int k = 0; k < 10; ++k) {
            const double p = up(rng), d = ud(rng);
            const double root = std::sqrt(1.0 - 2.0 * p);
            gamma_prod = root * (gamma_prod - d);
            drift += A * d;
            A /= root;
            const double gamma_sum = (gamma0 - drift) / A;
            worst_rel = std::max(worst_rel,
                                 std::abs(gamma_prod - gamma_sum) /
                                     std::max(1e-300, std::abs(gamma_sum)));
        }
    }
    const bool sum_ok = rc.res.convergence_sum_ok;
    const bool ok = worst_rel < 1e-12 && sum_ok;
    report(9, ok, "gamma recurrence identities + schedule criterion",
           fmt("max relative gap %.2e (limit 1e-12); schedule sum %.4f < 1: %s", worst_rel,
               rc.res.convergence_sum_69, sum_ok ? "yes" : "no"));
}

// -------------------------------------------------------------------------
// 10. assumption validator verdicts

void criterion_10() {
    auto grid = [] {
        std::vector<double> g;
        for (int i = 0; i <= 4000; ++i) g.push_back(-10.0 + 20.0 * i / 4000.0);
        return g;
    }();

    const auto lin = validate_assumptions([](double t) { return t; },
                                          [](double) { return 1.0; },
                                          [](double) { return 0.0; }, grid);
    const bool linear_ok = lin.all_passed() && !lin.a3_exemption_applied;

    const auto quad = validate_assumptions([](double t) { return t * t; },
                                           [](double t) { return 2.0 * t; },
                                           [](double) { return 2.0; }, grid);
    const bool quad_ok = quad.all_passed() && quad.a3_exemption_applied;

    const auto nozero = validate_assumptions([](double t) { return std::cosh(t); },
                                             [](double t) { return std::sinh(t); },
                                             [](double t) { return std::cosh(t); }, grid);
    const bool a1_rejected = !nozero.a1.passed;

    // f''f >= (3/2) f'^2 on |t| <= 1 for f = exp(t^2): rejected with the
    // violation located there
    const auto bad3 = validate_assumptions(
        [](double t) { return std::exp(t * t); },
        [](double t) { return 2.0 * t * std::exp(t * t); },
        [](double t) { return (2.0 + 4.0 * t * t) * std::exp(t * t); }, grid);
    const bool a3_rejected = !bad3.a3.passed && bad3.a3.first_violation_t.has_value() &&
                             std::abs(*bad3.a3.first_violation_t) <= 1.0 + 1e-9;

    const bool ok = linear_ok && quad_ok && a1_rejected && a3_rejected;
    report(10, ok, "assumption validator verdicts",
           fmt("f=t: %s; f=t^2 (exemption): %s; A1 violator rejected: %s; A3 violator at t=%.3f: %s",
               linear_ok ? "pass" : "FAIL", quad_ok ? "pass" : "FAIL",
               a1_rejected ? "yes" : "NO",
               bad3.a3.first_violation_t.value_or(0.0), a3_rejected ? "yes" : "NO"));
}

}  // namespace

int main() {
    std::printf("acceptance suite\n----------------\n");
    criterion_1();
    criterion_2();
    const RunChecks rc = pendulum_run();
    criterion_3(rc);
    criterion_4(rc);
    criterion_5(rc);
    criterion_6(rc);
    criterion_7();
    criterion_8(rc);
    criterion_9(rc);
    criterion_10();
    std::printf("----------------\n%s (%d failure%s)\n", failures == 0 ? "ALL PASS" : "FAILED",
                failures, failures == 1 ? "" : "s");
    return failures == 0 ? 0 : 1;
}
