#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

// End-to-end checks of the command-line tool: exit-code contract,
// deterministic outputs, bounds recomputation.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

std::string cli_path() {
    for (const char* p : {"build/orbitforge", "./orbitforge", "../build/orbitforge"})
        if (fs::exists(p)) return p;
    return "build/orbitforge";
}

struct RunOut {
    int exit_code = -1;
    std::string output;
};

RunOut run_cli(const std::string& args) {
    const std::string cmd = cli_path() + " " + args + " 2>&1";
    RunOut out;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[4096];
    while (fgets(buf, sizeof(buf), pipe)) out.output += buf;
    const int st = pclose(pipe);
    out.exit_code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return out;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
    CHECK(run_cli("").exit_code == 2);
    CHECK(run_cli("frobnicate --config x").exit_code == 2);
    CHECK(run_cli("bounds --config configs/pendulum_t.json").exit_code == 2);  // missing --state
}

TEST_CASE("validate: pendulum passes, malformed config exits 2") {
    const RunOut ok = run_cli("validate --config configs/pendulum_t.json");
    CHECK(ok.exit_code == 0);
    CHECK(ok.output.find("\"all_passed\": true") != std::string::npos);
    CHECK(ok.output.find("\"A3_exemption_applied\": false") != std::string::npos);

    fs::create_directories("build/out_test");
    {
        std::ofstream bad("build/out_test/bad.json");
        bad << "{ not json";
    }
    CHECK(run_cli("validate --config out_test/bad.json").exit_code == 2);
    CHECK(run_cli("validate --config out_test/missing.json").exit_code == 2);
}

TEST_CASE("validate: f = t^2 passes with the exemption recorded") {
    fs::create_directories("build/out_test");
    {
        std::ofstream cfg("build/out_test/dw.json");
        std::ifstream src("configs/double_well_t2.json");
        cfg << src.rdbuf();
    }
    const RunOut ok = run_cli("validate --config out_test/dw.json");
    CHECK(ok.exit_code == 0);
    CHECK(ok.output.find("\"A3_exemption_applied\": true") != std::string::npos);
}

TEST_CASE("validate: non-critical x_pm reported as A4 failure, exit 1") {
    fs::create_directories("build/out_test");
    {
        std::ofstream cfg("build/out_test/badcrit.json");
        cfg << R"({"model": {"dim": 1, "topology": ["circle"], "metric": "circle",
                 "potential": "pendulum", "x_minus": [3.141592653589793], "x_plus": [0.4]},
                 "factor": {"kind": "power", "m": 1}})";
    }
    const RunOut r = run_cli("validate --config out_test/badcrit.json");
    CHECK(r.exit_code == 1);
}

TEST_CASE("run: outputs, manifest, determinism, bounds recomputation") {
    fs::remove_all("build/out_cli_a");
    fs::remove_all("build/out_cli_b");
    const RunOut a =
        run_cli("run --config configs/pendulum_t.json --out build/out_cli_a --stages 4");
    REQUIRE(a.exit_code == 0);
    for (const char* f : {"trajectory.csv", "certificates.json", "summary.json",
                          "residual_vs_iteration.csv", "gamma_vs_stage.csv",
                          "window_growth.csv", "manifest.json", "state_final.ofck"})
        CHECK(fs::exists(std::string("build/out_cli_a/") + f));

    // rerun: byte-identical CSV outputs
    const RunOut b =
        run_cli("run --config configs/pendulum_t.json --out build/out_cli_b --stages 4");
    REQUIRE(b.exit_code == 0);
    for (const char* f : {"trajectory.csv", "residual_vs_iteration.csv", "gamma_vs_stage.csv",
                          "window_growth.csv", "certificates.json", "summary.json"})
        CHECK(slurp(std::string("build/out_cli_a/") + f) == slurp(std::string("build/out_cli_b/") + f));

    // 17-significant-digit serialization appears in the trajectory
    const std::string traj = slurp("build/out_cli_a/trajectory.csv");
    CHECK(traj.find("xi,t,q0,speed,energy") == 0);

    // bounds recomputation from the final checkpoint matches certificates
    const RunOut bd = run_cli(
        "bounds --config configs/pendulum_t.json --state out_cli_a/state_final.ofck "
        "--xi-next 6.0");
    CHECK(bd.exit_code == 0);
    CHECK(bd.output.find("\"b_k\"") != std::string::npos);
    CHECK(bd.output.find("\"zeta_k\"") != std::string::npos);

    // missing state file: exit 1 with a clear message
    const RunOut miss = run_cli(
        "bounds --config configs/pendulum_t.json --state out_cli_a/nope.ofck");
    CHECK(miss.exit_code == 1);
}

TEST_CASE("run: stage budget 0 leaves the seed solution") {
    fs::remove_all("build/out_cli_seed");
    const RunOut r =
        run_cli("run --config configs/pendulum_t.json --out build/out_cli_seed --stages 0");
    REQUIRE(r.exit_code == 0);
    const std::string summary = slurp("build/out_cli_seed/summary.json");
    CHECK(summary.find("\"stages_completed\": 0") != std::string::npos);
}

TEST_CASE("sweep fans out over configs") {
    fs::remove_all("sweep_0");
    fs::remove_all("sweep_1");
    const RunOut r = run_cli(
        "run --sweep configs/pendulum_t.json,configs/pendulum_t.json --stages 1");
    CHECK(r.exit_code == 0);
    CHECK(fs::exists("sweep_0/summary.json"));
    CHECK(fs::exists("sweep_1/summary.json"));
    fs::remove_all("sweep_0");
    fs::remove_all("sweep_1");
}
