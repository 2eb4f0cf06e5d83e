#pragma once

#include "orbitforge/continuation.hpp"

#include <json.hpp>

#include <string>

namespace orbitforge {
namespace runio {

using json = nlohmann::ordered_json;

/// Trajectory CSV: xi, t(xi), q-coordinates, |q'|, E(xi), one row per node,
/// 17 significant digits.
void write_trajectory_csv(const std::string& path, const ManifoldModel& model,
                          const TimeFactor& tf, const DiscreteCurve& q);

json stage_record_json(const StageRecord& r);
json seed_report_json(const SeedReport& r);
json certificate_json(const KantorovichCertificate& c);
json stage_bounds_json(const StageBounds& b);

/// certificates.json, summary.json, plot-data CSVs, manifest.json.
struct RunPaths {
    std::string trajectory;
    std::string certificates;
    std::string summary;
    std::string residuals;
    std::string gammas;
    std::string windows;
    std::string manifest;
    std::string checkpoint;
};
RunPaths write_run_outputs(const std::string& out_dir, const RunConfig& cfg,
                           const OrbitResult& result, const ManifoldModel& model,
                           const TimeFactor& tf, double wall_seconds);

/// Versioned binary checkpoint of a continuation state (restart / bounds
/// inspection).
void save_checkpoint(const std::string& path, const ContinuationState& st,
                     const std::string& cfg_hash);
struct Checkpoint {
    int k = 0;
    double xi_k = 0.0, xi_hat_k = 0.0, gamma_measured = 0.0, gamma_floor = 0.0;
    double A_k = 1.0, drift_sum = 0.0, I_hat_k = 0.0;
    Eigen::VectorXd nodes;
    std::vector<Vec> points;
    Vec x_minus, x_plus;
    std::string cfg_hash;
};
Checkpoint load_checkpoint(const std::string& path);

/// Rebuild a continuation state from a checkpoint (grid cells recomputed
/// from the factor).
ContinuationState state_from_checkpoint(const Checkpoint& ck, const TimeFactor& tf);

}  // namespace runio
}  // namespace orbitforge
