#pragma once

#include "orbitforge/bounds.hpp"
#include "orbitforge/modelspec.hpp"
#include "orbitforge/newton.hpp"
#include "orbitforge/oracle.hpp"

#include <optional>
#include <string>
#include <vector>

namespace orbitforge {

struct SeedReport {
    double xi_0 = 0.0;
    double C_Gamma = 0.0;  // kinetic-Hessian coercivity over the derivative Gram
    double C_xi0 = 0.0;    // 1/2 int r * int r^{-1}
    double C_D1 = 0.0;     // max |grad V| along the geodesic
    double C_D2 = 0.0;     // max |H^V| along the geodesic
    double b_0 = 0.0;
    double a_0 = 0.0;
    double p_0 = 0.0;
    double C_L = 0.0;
    double xi_Gamma = 0.0;
    double margin_lhs = 0.0;  // displacement bound at xi_Gamma
    double margin_rhs = 0.0;  // margin_sigma * R_lambda
    bool margin_ok = false;
    int halvings = 0;
    double geodesic_action = 0.0;  // I_0[Gamma], sets the h floor
};

/// Everything recorded about one converged stage and its transition bounds.
struct StageRecord {
    StageBounds bounds;
    LipschitzData lip;
    KantorovichCertificate certificate;
    NewtonTrace trace;
    int k = 0;
    double eps_k = 0.0;
    double p_target = 0.0;
    double p_realized = 0.0;       // b_k C_L / a_k^2 from the certified bounds
    double gamma_measured = 0.0;   // coercivity at the converged solution
    double gamma_floor = 0.0;      // analytic recurrence track
    double gamma_init_measured = 0.0;  // at the prolonged curve before Newton
    double A_k = 1.0;
    double drift_sum = 0.0;
    double residual_final = 0.0;
    int newton_iterations = 0;
    double action_before = 0.0;  // action of the prolonged curve
    double action_after = 0.0;   // = I_hat_{k+1}
    double boundary_speed_plus = 0.0;
    double boundary_speed_minus = 0.0;
    double boundary_speed_bound = 0.0;  // decay bound at the measured entry time
    double b_k_power = 0.0;             // power refinement (when applicable)
    double Delta_k_power = 0.0;
    double gap_lemma11 = 0.0;
    bool heuristic = false;  // window chosen beyond the certified proposal
    std::string schedule_note;
};

struct ContinuationState {
    int k = 0;
    double xi_k = 0.0;
    double xi_hat_k = 0.0;  // measured
    double gamma_measured = 0.0;
    double gamma_floor = 0.0;
    double A_k = 1.0;         // accumulated product (1-2p_j)^{-1/2}
    double drift_sum = 0.0;   // sum A_j Delta_j
    double I_hat_k = 0.0;
    DiscreteCurve curve;
    bool floor_exhausted = false;
    std::vector<StageRecord> history;
};

struct OrbitResult {
    ContinuationState state;
    SeedReport seed;
    CriticalPointData cp;
    double h_star = 0.0;
    bool stopped_on_tolerance = false;
    std::string stop_reason;
    double convergence_sum_69 = 0.0;  // power-mode schedule criterion
    bool convergence_sum_ok = false;
    double necessary_lhs = 0.0, necessary_rhs = 0.0;  // remark diagnostic
    double tail_lambda_eff = 0.0;     // fitted decay rate (power runs)
};

class ContinuationDriver {
public:
    explicit ContinuationDriver(RunConfig cfg);

    const ManifoldModel& model() const { return model_; }
    const TimeFactor& factor() const { return tf_; }
    const CriticalPointData& critical_points() const { return cp_; }
    const RunConfig& config() const { return cfg_; }
    double h_star() const { return h_star_; }

    /// Calibrate the critical-point data (A4 + ball scan). Idempotent.
    void calibrate();

    /// Seed geodesic on a small window, halving xi_0 until the smallness
    /// conditions pass; returns the report and leaves the solved q_0 in the
    /// returned state.
    std::pair<SeedReport, ContinuationState> seed_geodesic(double xi0_initial);

    /// Window proposal; mode = adaptive | certified-generic | certified-power.
    struct Proposal {
        double xi_next = 0.0;
        double eps = 0.0;
        bool heuristic = false;
        std::string note;
    };
    Proposal propose_next_window(const ContinuationState& st, const StageBounds& sb,
                                 const LipschitzData& lip, double p_target,
                                 const std::string& mode) const;

    /// One full stage: bounds at q_k, window choice, prolongation, Newton
    /// solve, certificate, state update.
    ContinuationState advance_stage(const ContinuationState& st);

    /// Full pipeline: seed + stages until the stopping rule or budget.
    OrbitResult run();

    /// Stage bounds for the current state at a prescribed next window
    /// (used by the CLI bounds subcommand; matches the in-run values).
    std::pair<StageBounds, LipschitzData> stage_bounds_at(const ContinuationState& st,
                                                          double xi_next) const;

    Vec lifted_x_plus() const;

private:
    RunConfig cfg_;
    ManifoldModel model_;
    TimeFactor tf_;
    CriticalPointData cp_;
    bool calibrated_ = false;
    double h_star_ = 0.0;

    NewtonOptions newton_opts(bool zero_potential = false) const;
    int extension_cells(double xi_from, double xi_to) const;
    double measure_gamma(const DiscreteCurve& q) const;
};

/// Fit of the tail decay rate against the asymptotic form
/// d(q(xi), x_pm) ~ C r^{-1/4} exp(-lambda int_0^xi r).
double fit_tail_decay_rate(const ManifoldModel& model, const TimeFactor& tf,
                           const DiscreteCurve& q, const Vec& x_plus_lift, double d_lo,
                           double d_hi);

/// The schedule convergence sum of the power-law criterion:
/// sum_k [ 2 p_k/(1+sqrt(1-2p_k)) + C_gamma sqrt(1-2p_k) p_k^2 ].
double schedule_convergence_sum(double p_hat, double C_gamma, int terms = 200000);

}  // namespace orbitforge
