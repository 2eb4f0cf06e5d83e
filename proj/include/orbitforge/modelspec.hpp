#pragma once

#include "orbitforge/geometry.hpp"
#include "orbitforge/timescale.hpp"

#include <json.hpp>

#include <memory>
#include <string>
#include <vector>

namespace orbitforge {

class ConfigError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Tiny arithmetic expression evaluator for custom potentials/metrics/factors:
/// +,-,*,/,^, parentheses, sin cos tan sinh cosh tanh exp log sqrt abs pow,
/// constants pi and e, variables x1..xn (x,y,z aliases) and t.
class Expression {
public:
    explicit Expression(const std::string& text);
    double eval(const Eigen::VectorXd& x) const;
    double eval1(double t) const;

    struct Node;

private:
    std::shared_ptr<const Node> root_;
};

struct ModelSpec {
    int dim = 1;
    std::vector<ChartTopology> topology;
    std::string metric_name;     // flat | circle | torus | sphere-chart | expr
    std::string potential_name;  // pendulum | double-well-on-circle | expr
    Eigen::VectorXd x_minus, x_plus;
    ManifoldModel build() const;
    nlohmann::ordered_json raw;  // original spec for round-tripping
};

struct FactorSpec {
    std::string kind = "power";  // power | custom
    int m = 1;
    std::string expr, d_expr, dd_expr;  // custom: f, f', f'' of t
    double t0 = 0.0;
    TimeFactor build() const;
    nlohmann::ordered_json raw;
};

/// Full run configuration (solver knobs + references to model and factor).
struct RunConfig {
    ModelSpec model;
    FactorSpec factor;
    std::vector<int> winding;  // homotopy class for periodic coordinates

    double lambda_factor = 0.9;
    double nu_factor = 1.1;
    double margin_sigma = 0.1;

    std::string schedule_mode = "adaptive";  // adaptive | certified-generic | certified-power
    double p_hat = 0.1;                      // p_k = p_hat / (k+1)^2
    int stage_budget = 8;
    double eps_asymptotic = 1e-8;
    double eps_tail = 1e-6;

    int seed_cells = 192;
    double h_max = 0.08;
    double resolution_factor = 0.4;
    int min_ext_cells = 16;

    double newton_tol_rel = 1e-10;
    double newton_tol_abs = 1e-12;
    int newton_max_iter = 30;
    double step_cap = 1.0;
    double trust_radius = 1.0;

    double xi0_init = 0.25;
    double xi0_floor = 1e-4;
    double ball_r_init = 1.0;
    double ball_shrink = 0.8;
    int ball_shells = 8;
    int ball_directions = 64;

    std::string out_dir = "out";
    unsigned seed = 1;

    nlohmann::ordered_json raw;
};

ModelSpec parse_model(const nlohmann::ordered_json& j);
FactorSpec parse_factor(const nlohmann::ordered_json& j);
RunConfig parse_run_config(const nlohmann::ordered_json& j);
RunConfig load_run_config(const std::string& path);

/// FNV-1a hash of the canonical serialized config (stable across runs).
std::string config_hash(const nlohmann::ordered_json& j);

}  // namespace orbitforge
