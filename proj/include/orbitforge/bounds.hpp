#pragma once

#include "orbitforge/curvespace.hpp"
#include "orbitforge/geometry.hpp"
#include "orbitforge/timescale.hpp"

#include <optional>
#include <string>

namespace orbitforge {

/// Per-stage scalar estimates.
struct StageBounds {
    int k = -1;
    double xi_k = 0.0;
    double xi_next = 0.0;
    double xi_hat_measured = 0.0;  // measured first entry time
    double zeta_k = 0.0;           // certified bound on xi_hat (Lemma-9 style)
    double h_k = 0.0;              // smallest root of the entry-time quadratic
    double eta_k = 0.0;            // int_{Omega_k} r^{-1}
    double L_k = 0.0;              // inter-sphere energy constant
    double I_hat_k = 0.0;          // action at the solution
    double DeltaI_k = 0.0;         // guaranteed action decrease over the next stage
    double mu = 0.0;               // zero-order coercivity rate
    double b_k = 0.0;              // gradient bound on the extended window
    double Delta_k = 0.0;          // coercivity loss
    double a_k = 0.0;              // gamma_k - Delta_k
    double gamma_k = 0.0;          // coercivity used as Lemma-8 input
    std::string active_branch;     // which formula/branch produced b_k, Delta_k
    bool entry_bound_valid = true; // false when the quadratic had no positive root
};

struct LipschitzData {
    double C_r = 0.0;    // discrete embedding constant
    double C_L = 0.0;    // Lipschitz constant of the covariant gradient field
    double J_k = 0.0;    // kinetic action
    double R_ball = 0.0; // trust radius the constant is valid for
};

/// Closed-form solution of the constant-coefficient comparison problem
/// v'' + 2 p v' - lambda^2 v = 0, v(a) = 1, v(b) = 0:
///   v(xi) = theta(b - xi) / theta(b - a),
///   theta(z) = e^{p z} sinh(sqrt(lambda^2 + p^2) z).
/// Evaluated in log form so large windows do not overflow.
double comparison_solution(double p_const, double lambda, double a, double b, double xi);

/// lambda R_lambda / sinh(lambda (b - a)).
double decay_bound(double lambda, double R_lambda, double a, double b);

/// Gradient bound on the extended window. Generic form uses the window data
/// directly; the power refinement is exposed separately.
double gradient_bound_bk(const TimeFactor& tf, double xi_k, double xi_hat, double lambda,
                         double R_lambda, double xi_next);

/// Power-law refinement b_k <= C_b sqrt(eps_k / F(lambda h_* xi^{m/(m+2)} / alpha)),
/// F(y) = sinh^2(y)/y, C_b = 2 lambda^{1/2} R_lambda alpha / h_*.
double gradient_bound_bk_power(const TimeFactor& tf, double xi_k, double eps_k, double lambda,
                               double R_lambda, double h_star);
double sinh_sq_over_y(double y);  // F(y)
double power_Cb(double lambda, double R_lambda, double alpha, double h_star);

/// Coercivity loss of the window extension. gamma_k is clipped into (0, 1).
double coercivity_loss_Delta(const TimeFactor& tf, double xi_k, double xi_hat, double mu,
                             double gamma_k, double xi_next);

/// Power refinement Delta_k <= C_Delta (1-gamma) eps / F(mu h_* xi^{m/(m+2)} / alpha).
double coercivity_loss_Delta_power(const TimeFactor& tf, double xi_k, double eps_k, double mu,
                                   double gamma_k, double h_star);
double power_CDelta(int m, double mu, double alpha, double h_star);

/// Largest admissible zero-order rate mu from the curvature condition; empty
/// when the curvature term destroys coercivity. Non-positive K_max gives
/// mu = lambda.
std::optional<double> mu_condition(double K_max, double lambda, double nu, double R_lambda,
                                   double gap);

struct EntryTimeBound {
    double h_k = 0.0;
    double zeta_plus = 0.0;
    double zeta_minus = 0.0;
    double zeta = 0.0;
    double eta = 0.0;
    bool valid = true;  // false when the quadratic has no positive root
};

/// Lemma-9 entry-time machinery: h_k is the smallest root of
/// 2 I h^2 - (2 I eta - L^2) h + R^2 eta = 0; zeta from inverting the
/// r^{-1}-budget. Substituting I = I_prev - DeltaI gives the a-priori
/// (Corollary 2) variant.
EntryTimeBound entry_time_bound(const TimeFactor& tf, double xi_k, double R_lambda,
                                double I_hat, double L_k);

/// Guaranteed action decrease over [xi_k, xi_next].
double action_decrease(const TimeFactor& tf, double xi_k, double xi_hat, double nu,
                       double R_lambda, double xi_next);

/// Discrete embedding constant: largest generalized eigenvalue between the
/// unweighted and r-weighted Sobolev Gram forms on the window.
double embedding_constant_Cr(const ManifoldModel& model, const TimeFactor& tf,
                             const DiscreteCurve& q);

/// C_L = 2 (1 + (C_g^2 + C_K) C_r^2 (J_k + R^2/2) + C_V C_r^2 / 4).
LipschitzData lipschitz_CL(const LocalizedBallScan& scan, double C_r, double J_k, double R_ball);

/// Two-branch lower bound on xi_k - xi_hat_k for power factors.
double power_gap_bound(const TimeFactor& tf, double h_star, double xi_k);

}  // namespace orbitforge
