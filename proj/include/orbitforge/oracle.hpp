#pragma once

#include "orbitforge/curvespace.hpp"
#include "orbitforge/geometry.hpp"
#include "orbitforge/timescale.hpp"

#include <functional>
#include <string>
#include <vector>

namespace orbitforge {
namespace oracle {

/// Independent solution of the equations of motion on a window, by dense
/// Newton-collocation of the strong-form residuals on a uniform grid (a
/// code path deliberately disjoint from the FEM assembly).
struct OracleSolution {
    std::vector<double> xi;  // images of the uniform t-grid (no node at the turning point)
    std::vector<double> t;   // uniform collocation abscissae
    std::vector<Vec> points;
    TimeFactor factor;       // retained for the xi -> t mapping
    double residual = 0.0;   // sup norm of its own collocation residual
    std::string method = "dense-collocation";
    bool converged = false;

    /// Four-point Lagrange evaluation in the original time variable, where
    /// the solution is smooth through the turning point.
    Vec at(double x) const;
};

struct BvpOptions {
    int nodes = 801;       // forced odd so the grid has no node at xi = 0
    double tol = 1e-11;
    int max_iter = 60;
};

/// Solve the connecting BVP q(+-xi_k) = x_pm. `init` seeds Newton (straight
/// chart segment if empty).
OracleSolution bvp_solve(const ManifoldModel& model, const TimeFactor& tf, double xi_k,
                         const Vec& x_minus, const Vec& x_plus,
                         const std::vector<Vec>& init_points = {},
                         const std::vector<double>& init_xi = {}, const BvpOptions& opts = {});

/// Scalar linear comparison BVP  v'' + (r'/r) v' = lambda^2 v, v(a)=1,
/// v(b)=0, solved by dense second-order collocation with Richardson
/// extrapolation; used to verify the Lemma-5 sandwich.
std::vector<double> scalar_bvp_solve(const TimeFactor& tf, double lambda, double a, double b,
                                     const std::vector<double>& sample_xi, int base_nodes = 2001);

struct FdOrderReport {
    double gradient_order = 0.0;
    double hessian_order = 0.0;
    double gradient_rel_mismatch_at = 0.0;  // relative mismatch at h_probe
    double h_probe = 1e-4;
    std::vector<double> h_values;
    std::vector<double> gradient_mismatch;
    std::vector<double> hessian_mismatch;
};

/// Finite-difference convergence order of the assembled gradient and second
/// variation along exp-retracted directions.
FdOrderReport fd_check(const ManifoldModel& model, const TimeFactor& tf,
                       const DiscreteCurve& q, const TangentField& phi,
                       const TangentField& psi, const std::vector<double>& h_values,
                       double h_probe = 1e-4);

/// Shortest-path estimate of the inter-sphere constant L_k: distance between
/// the spheres of radius R around x_minus and x_plus. Exact for
/// one-dimensional charts, Dijkstra on a fine mesh for surfaces, straight
/// chart estimate beyond. Returns 0 (flagged) when the spheres overlap.
struct SphereDistance {
    double L = 0.0;
    bool overlapping = false;
};
SphereDistance sphere_distance(const ManifoldModel& model, const Vec& x_minus,
                               const Vec& x_plus, double R, int mesh_per_dim = 160);

}  // namespace oracle
}  // namespace orbitforge
