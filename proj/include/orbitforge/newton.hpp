#pragma once

#include "orbitforge/curvespace.hpp"

#include <string>
#include <vector>

namespace orbitforge {

class IndefiniteHessian : public std::runtime_error {
public:
    explicit IndefiniteHessian(double gamma)
        : std::runtime_error("second-variation operator is not positive definite (gamma = " +
                             std::to_string(gamma) + ")"),
          gamma(gamma) {}
    double gamma;
};

struct KantorovichCertificate {
    double a_inv_bound = 0.0;  // bound on the inverse-operator norm (1 / gamma)
    double b_step = 0.0;       // first Newton step norm
    double C_L = 0.0;
    double l = 0.0;            // a_inv_bound * b_step * C_L
    double r_star = 0.0;       // (1 - sqrt(1 - 2l)) / (a_inv_bound C_L)
    double trust_radius = 0.0;
    bool passed = false;       // l <= 1/2 and r_star within the trust region
    std::vector<double> predicted_rates;  // (2l)^{2^j} b/l for j = 0..
};

KantorovichCertificate certify(double gamma_lower, double first_step_norm, double C_L,
                               double trust_radius, int rate_terms = 8);

struct NewtonTraceEntry {
    int iter = 0;
    double residual = 0.0;   // dual norm of the action gradient
    double step_norm = 0.0;  // weighted norm of the Newton increment
    double gamma = 0.0;      // coercivity at the iterate
};

struct NewtonTrace {
    std::vector<NewtonTraceEntry> entries;
    std::vector<double> dist_to_final;  // same indexing as entries
    std::string termination;
    bool monotone_after_first = true;
    bool step_capped = false;  // a damped step voids the certificate
};

struct NewtonOptions {
    double tol_rel = 1e-10;  // relative to the initial residual
    double tol_abs = 1e-12;
    int max_iter = 30;
    double step_cap = 1.0;   // per-node retraction cap (chart norm)
    int exp_steps = 8;
    bool zero_potential = false;  // solve the geodesic (kinetic-only) problem
};

struct NewtonStepResult {
    DiscreteCurve next;
    Eigen::VectorXd step_dofs;
    double step_norm = 0.0;
    bool capped = false;
};

/// One retraction-based Newton step: solves the banded system
/// hessian * delta = -gradient and retracts nodewise along geodesics.
/// Throws IndefiniteHessian when the operator is not positive definite.
NewtonStepResult newton_step(const ManifoldModel& model, const TimeFactor& tf,
                             const DiscreteCurve& q, const NewtonOptions& opts = {});

struct SolveResult {
    DiscreteCurve solution;
    NewtonTrace trace;
    double gamma_final = 0.0;      // coercivity at the solution
    double gamma_init = 0.0;       // coercivity at the initial curve
    double residual_final = 0.0;
    double first_step_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

class SolveFailure : public std::runtime_error {
public:
    SolveFailure(const std::string& what, SolveResult partial)
        : std::runtime_error(what), partial(std::move(partial)) {}
    SolveResult partial;
};

/// Newton iteration on a fixed window until the dual residual drops below
/// tolerance. Records the trace and distance-to-final diagnostics.
SolveResult solve_window(const ManifoldModel& model, const TimeFactor& tf,
                         const DiscreteCurve& q_init, const NewtonOptions& opts = {});

}  // namespace orbitforge
