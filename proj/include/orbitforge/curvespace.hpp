#pragma once

#include "orbitforge/banded.hpp"
#include "orbitforge/geometry.hpp"
#include "orbitforge/timescale.hpp"

#include <memory>
#include <vector>

namespace orbitforge {

/// Grid over a window [-xi_k, xi_k], graded so that the per-cell integral of
/// r^{-1} is equidistributed; contains a node at 0. Cell data (midpoints, r,
/// sigma, exact per-cell weight integrals) is precomputed.
struct WindowGrid {
    double xi_k = 0.0;
    Eigen::VectorXd nodes;  // size N+1, strictly increasing, ends at +-xi_k
    int zero_node = 0;

    Eigen::VectorXd cell_mid, cell_h, r_mid, sigma_mid;
    Eigen::VectorXd cell_int_r, cell_int_rinv;

    int cells() const { return static_cast<int>(cell_h.size()); }
    int node_count() const { return static_cast<int>(nodes.size()); }
};

WindowGrid build_grid(const TimeFactor& tf, double xi_k, int n_cells);

/// Extension of an existing grid to a larger window: old nodes are kept, new
/// cells are appended outside with their own r^{-1}-budget grading. Preserves
/// the action of a prolonged curve to roundoff.
WindowGrid extend_grid(const TimeFactor& tf, const WindowGrid& old_grid, double xi_new,
                       int n_ext_per_side);

/// Curve on a window with Dirichlet data q(+-xi_k) = x_pm. Points are stored
/// as a continuous chart lift (periodic coordinates unwrapped); model
/// functions wrap internally.
struct DiscreteCurve {
    std::shared_ptr<const WindowGrid> grid;
    std::vector<Vec> points;
    Vec x_minus, x_plus;  // lift values actually pinned at the ends

    int node_count() const { return static_cast<int>(points.size()); }
};

/// Straight chart segment from x_minus to x_plus (the standard initial guess).
DiscreteCurve straight_curve(std::shared_ptr<const WindowGrid> grid, const Vec& x_minus,
                             const Vec& x_plus);

/// Grid-aligned tangent field with zero Dirichlet ends.
struct TangentField {
    std::vector<Vec> values;  // one per node; ends zero
};

Eigen::VectorXd stack_interior(const TangentField& v);
TangentField unstack_interior(const DiscreteCurve& q, const Eigen::VectorXd& dofs);

struct HessianPair {
    SymBanded hessian;  // second-variation operator (diffusion + curvature + potential)
    SymBanded mass;     // Gram form of the weighted norm
    HessianPair(int n, int kd) : hessian(n, kd), mass(n, kd) {}
};

struct ActionDerivatives {
    double value = 0.0;
    double kinetic = 0.0;             // J_k[q] = 1/2 int |q'|^2 r
    Eigen::VectorXd gradient_dofs;    // exact derivative of the discrete action
    HessianPair ops;
    ActionDerivatives(int n, int kd) : ops(n, kd) {}
};

struct AssembleOptions {
    bool with_hessian = true;
    bool zero_potential = false;  // kinetic-only (geodesic) functional
};

/// One-pass assembly of action value, gradient and operators.
ActionDerivatives assemble(const ManifoldModel& model, const TimeFactor& tf,
                           const DiscreteCurve& q, const AssembleOptions& opts = {});

double action(const ManifoldModel& model, const TimeFactor& tf, const DiscreteCurve& q);

struct GradientResult {
    TangentField field;           // Riesz representative M^{-1} G
    Eigen::VectorXd dual_vector;  // G
    double dual_norm = 0.0;       // sqrt(G^T M^{-1} G)
};

GradientResult gradient(const ManifoldModel& model, const TimeFactor& tf,
                        const DiscreteCurve& q);

HessianPair hessian(const ManifoldModel& model, const TimeFactor& tf, const DiscreteCurve& q);

/// Smallest generalized eigenvalue of (hessian, mass); positive value
/// certifies discrete non-degeneracy.
double coercivity_gamma(const HessianPair& ops);
GenEigPair coercivity_pair(const HessianPair& ops);

/// Derivative-only Gram form int <D phi, D psi> r (the right-hand side of the
/// seed-geodesic coercivity condition).
SymBanded derivative_gram(const ManifoldModel& model, const TimeFactor& tf,
                          const DiscreteCurve& q);

/// Copy q onto a larger window: re-interpolated along short chart geodesics
/// on the old window, continued by x_pm outside.
DiscreteCurve prolong(const DiscreteCurve& q, std::shared_ptr<const WindowGrid> new_grid);

/// Norm in the weighted Sobolev geometry: sqrt(v^T M v).
double curve_norm(const SymBanded& mass, const Eigen::VectorXd& dofs);

/// Nodewise chart-difference field between two curves on the same grid.
Eigen::VectorXd curve_difference_dofs(const DiscreteCurve& a, const DiscreteCurve& b);

/// Discrete energy per cell: E_c = 1/2 |q'|^2 + sigma (V(q) - V(chi)).
Eigen::VectorXd energy_per_cell(const ManifoldModel& model, const TimeFactor& tf,
                                const DiscreteCurve& q);

/// Metric speed |q'| per cell.
Eigen::VectorXd speed_per_cell(const ManifoldModel& model, const DiscreteCurve& q);

/// First entry time into the calibrated balls: smallest xi >= 0 such that the
/// curve stays inside B_R(x_plus) on (xi, xi_k] and inside B_R(x_minus) on
/// [-xi_k, -xi).
double measured_entry_time(const ManifoldModel& model, const DiscreteCurve& q,
                           const Vec& x_minus, const Vec& x_plus, double R);

}  // namespace orbitforge
