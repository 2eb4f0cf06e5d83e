// orbitforge: batch front-end for the connecting-orbit solver.
// Subcommands: validate | run | bounds. Exit codes: 0 success, 1 numeric
// failure, 2 usage/config error.

#include "orbitforge/continuation.hpp"
#include "orbitforge/runio.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

using namespace orbitforge;

namespace {

int hardware_threads() {
    if (const char* env = std::getenv("ORBITFORGE_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

int cmd_validate(const std::string& config_path) {
    RunConfig cfg = load_run_config(config_path);
    ContinuationDriver driver(cfg);
    const TimeFactor& tf = driver.factor();
    const ManifoldModel& model = driver.model();

    // assumption report on a sign-spanning grid
    std::vector<double> grid;
    for (int i = 0; i <= 4000; ++i) grid.push_back(-20.0 + 40.0 * i / 4000.0);
    TimeFactor::Fn f, fp, fpp;
    if (cfg.factor.kind == "power") {
        const int m = cfg.factor.m;
        f = [m](double t) { return std::pow(t, m); };
        fp = [m](double t) { return m * std::pow(t, m - 1); };
        fpp = [m](double t) { return m >= 2 ? m * (m - 1) * std::pow(t, m - 2) : 0.0; };
    } else {
        Expression fe(cfg.factor.expr), fpe(cfg.factor.d_expr), fppe(cfg.factor.dd_expr);
        f = [fe](double t) { return fe.eval1(t); };
        fp = [fpe](double t) { return fpe.eval1(t); };
        fpp = [fppe](double t) { return fppe.eval1(t); };
    }
    const AssumptionReport rep = validate_assumptions(f, fp, fpp, grid);

    runio::json out;
    out["config_hash"] = config_hash(cfg.raw);
    auto put = [&](const char* key, const AssumptionCheck& c) {
        runio::json j;
        j["passed"] = c.passed;
        j["detail"] = c.detail;
        if (c.first_violation_t) j["first_violation_t"] = *c.first_violation_t;
        out[key] = j;
    };
    put("A1", rep.a1);
    put("A2", rep.a2);
    put("A3", rep.a3);
    out["A3_exemption_applied"] = rep.a3_exemption_applied;

    bool a4_ok = true;
    std::string a4_detail = "critical points non-degenerate";
    try {
        // construction already checks A4 (definiteness); check the gradient too
        const CriticalPointData& cp = driver.critical_points();
        for (int side = 0; side < 2; ++side) {
            const Vec& x = side == 0 ? cfg.model.x_minus : cfg.model.x_plus;
            const PotentialPackage pp = potential_package(model, x);
            const double gn = std::sqrt(pp.gradient.dot(model.metric(x) * pp.gradient));
            if (gn > 1e-8) {
                a4_ok = false;
                a4_detail = std::string("grad V != 0 at x_") + (side == 0 ? "minus" : "plus") +
                            " (|grad| = " + std::to_string(gn) + ")";
            }
        }
        out["Lambda_minus"] = std::vector<double>(
            cp.hessian_eigs_minus.data(),
            cp.hessian_eigs_minus.data() + cp.hessian_eigs_minus.size());
        out["Lambda_plus"] = std::vector<double>(
            cp.hessian_eigs_plus.data(), cp.hessian_eigs_plus.data() + cp.hessian_eigs_plus.size());
    } catch (const std::exception& e) {
        a4_ok = false;
        a4_detail = e.what();
    }
    out["A4"] = {{"passed", a4_ok}, {"detail", a4_detail}};

    bool calibration_ok = false;
    std::string calibration_detail;
    if (a4_ok) {
        try {
            driver.calibrate();
            calibration_ok = true;
            const CriticalPointData& cp = driver.critical_points();
            out["R_lambda"] = cp.R_lambda;
            out["lambda"] = cp.lambda;
            out["nu"] = cp.nu;
            out["K_max"] = cp.scan.K_max;
            out["C_g"] = cp.scan.C_g;
            out["C_K"] = cp.scan.C_K;
            out["C_V"] = cp.scan.C_V;
        } catch (const CalibrationFailure& e) {
            calibration_detail = e.what();
        }
    }
    out["calibration"] = {{"passed", calibration_ok}, {"detail", calibration_detail}};

    const bool all = rep.all_passed() && a4_ok && calibration_ok;
    out["all_passed"] = all;
    std::cout << out.dump(2) << std::endl;
    return all ? 0 : 1;
}

int cmd_run(const std::string& config_path, const std::string& out_dir_override, int stages,
            bool force, unsigned seed_override, bool have_seed) {
    RunConfig cfg = load_run_config(config_path);
    if (!out_dir_override.empty()) cfg.out_dir = out_dir_override;
    if (stages >= 0) cfg.stage_budget = stages;
    if (have_seed) cfg.seed = seed_override;

    ContinuationDriver driver(cfg);
    if (!force) {
        // quick pre-validation: calibration must succeed
        try {
            driver.calibrate();
        } catch (const std::exception& e) {
            std::cerr << "validation failed (" << e.what() << "); use --force to override\n";
            return 1;
        }
    }
    const auto t0 = std::chrono::steady_clock::now();
    OrbitResult result;
    try {
        result = driver.run();
    } catch (const std::exception& e) {
        std::cerr << "run failed: " << e.what() << "\n";
        return 1;
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const runio::RunPaths paths = runio::write_run_outputs(cfg.out_dir, cfg, result,
                                                           driver.model(), driver.factor(), wall);
    std::cout << "stages: " << result.state.k << "  xi_final: " << result.state.xi_k
              << "  gamma: " << result.state.gamma_measured
              << "  residual: " << result.state.history.back().residual_final << "\n"
              << "stop: " << result.stop_reason << "\n"
              << "outputs: " << paths.summary << "\n";
    return 0;
}

int cmd_bounds(const std::string& config_path, const std::string& state_path, double xi_next) {
    RunConfig cfg = load_run_config(config_path);
    ContinuationDriver driver(cfg);
    driver.calibrate();
    const runio::Checkpoint ck = runio::load_checkpoint(state_path);
    ContinuationState st = runio::state_from_checkpoint(ck, driver.factor());
    if (xi_next <= st.xi_k) xi_next = st.xi_k + std::sqrt(st.xi_k);
    auto [sb, lip] = driver.stage_bounds_at(st, xi_next);
    runio::json j;
    j["state_hash"] = ck.cfg_hash;
    j["bounds"] = runio::stage_bounds_json(sb);
    j["lipschitz"] = {{"C_r", lip.C_r}, {"C_L", lip.C_L}, {"J_k", lip.J_k}};
    if (driver.factor().is_power()) {
        // print the power refinements next to the generic values; the
        // refinement is the cruder closed form and dominates the generic bound
        const TimeFactor& tf = driver.factor();
        const CriticalPointData& cp = driver.critical_points();
        const double eps = xi_next - st.xi_k;
        const double h_star = driver.h_star() > 0 ? driver.h_star() : 0.5 * sb.h_k;
        j["b_k_power"] =
            gradient_bound_bk_power(tf, st.xi_k, eps, cp.lambda, cp.R_lambda, h_star);
        if (sb.mu > 0.0)
            j["Delta_k_power"] = coercivity_loss_Delta_power(tf, st.xi_k, eps, sb.mu,
                                                             st.gamma_measured, h_star);
        j["gap_power_bound"] = power_gap_bound(tf, h_star, st.xi_k);
        j["ordering"] = {{"b_k <= b_k_power", sb.b_k <= j["b_k_power"].get<double>()},
                         {"Delta_k <= Delta_k_power",
                          !j.contains("Delta_k_power") ||
                              sb.Delta_k <= j["Delta_k_power"].get<double>()}};
    }
    std::cout << j.dump(2) << std::endl;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"orbitforge: transversal connecting-orbit construction with "
                 "Newton-Kantorovich certificates"};
    app.require_subcommand(1);

    std::string config_path, out_dir, state_path, sweep_list;
    int stages = -1;
    unsigned seed = 0;
    bool force = false;
    double xi_next = 0.0;

    auto* validate = app.add_subcommand("validate", "check assumptions and ball calibration");
    validate->add_option("--config", config_path, "run configuration file")->required();

    auto* run = app.add_subcommand("run", "validate, seed, continue, report");
    run->add_option("--config", config_path, "run configuration file");
    run->add_option("--out", out_dir, "output directory override");
    run->add_option("--stages", stages, "stage budget override");
    run->add_option("--seed", seed, "rng seed override");
    run->add_flag("--force", force, "skip pre-validation");
    run->add_option("--sweep", sweep_list, "comma-separated config list, run concurrently");

    auto* bounds = app.add_subcommand("bounds", "recompute stage bounds from a state file");
    bounds->add_option("--config", config_path, "run configuration file")->required();
    bounds->add_option("--state", state_path, "binary state checkpoint")->required();
    bounds->add_option("--xi-next", xi_next, "candidate next window");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (validate->parsed()) return cmd_validate(config_path);
        if (run->parsed()) {
            if (!sweep_list.empty()) {
                std::vector<std::string> configs;
                size_t pos = 0;
                while (pos != std::string::npos) {
                    const size_t comma = sweep_list.find(',', pos);
                    configs.push_back(sweep_list.substr(
                        pos, comma == std::string::npos ? std::string::npos : comma - pos));
                    pos = comma == std::string::npos ? comma : comma + 1;
                }
                const int workers =
                    std::min<int>(hardware_threads(), static_cast<int>(configs.size()));
                std::atomic<size_t> next(0);
                std::atomic<int> failures(0);
                std::vector<std::thread> pool;
                for (int w = 0; w < workers; ++w)
                    pool.emplace_back([&] {
                        for (;;) {
                            const size_t i = next.fetch_add(1);
                            if (i >= configs.size()) return;
                            const std::string odir = "sweep_" + std::to_string(i);
                            if (cmd_run(configs[i], odir, stages, force, seed,
                                        run->count("--seed") > 0) != 0)
                                failures.fetch_add(1);
                        }
                    });
                for (auto& t : pool) t.join();
                return failures.load() == 0 ? 0 : 1;
            }
            if (config_path.empty()) {
                std::cerr << "run: --config required\n";
                return 2;
            }
            return cmd_run(config_path, out_dir, stages, force, seed,
                           run->count("--seed") > 0);
        }
        if (bounds->parsed()) return cmd_bounds(config_path, state_path, xi_next);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
