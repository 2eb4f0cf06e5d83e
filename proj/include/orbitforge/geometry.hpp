#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace orbitforge {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct ChartTopology {
    enum Kind { Line, Circle };
    Kind kind = Line;
    double period = 0.0;

    static ChartTopology line() { return {Line, 0.0}; }
    static ChartTopology circle(double period) { return {Circle, period}; }
};

class DegenerateMetric : public std::runtime_error {
public:
    DegenerateMetric(const Vec& x, const std::string& what)
        : std::runtime_error(what), point(x) {}
    Vec point;
};

/// Chart-presented Riemannian manifold: one global chart, optionally periodic
/// per coordinate, with a metric g(x), a potential V(x) and their derivatives
/// (central finite differences by default, analytic overrides accepted).
class ManifoldModel {
public:
    using MetricFn = std::function<Mat(const Vec&)>;
    using ScalarFn = std::function<double(const Vec&)>;
    using MetricDerivFn = std::function<std::vector<Mat>(const Vec&)>;  // d g / d x_a
    using VectorFn = std::function<Vec(const Vec&)>;                    // partial derivatives of V
    using MatrixFn = std::function<Mat(const Vec&)>;                    // second partials of V

    ManifoldModel(int dim, std::vector<ChartTopology> topology, MetricFn metric,
                  ScalarFn potential);

    int dim() const { return dim_; }
    const std::vector<ChartTopology>& topology() const { return topology_; }

    void set_metric_derivative(MetricDerivFn fn) { metric_deriv_ = std::move(fn); }
    void set_potential_gradient(VectorFn fn) { potential_grad_ = std::move(fn); }
    void set_potential_hessian(MatrixFn fn) { potential_hess_ = std::move(fn); }
    void set_fd_step(double h) { fd_step_ = h; }
    double fd_step() const { return fd_step_; }

    /// Model with the same geometry and V == 0 (used for geodesic solves).
    ManifoldModel with_zero_potential() const;

    Mat metric(const Vec& x) const { return metric_(wrap(x)); }
    Mat metric_inverse(const Vec& x) const;
    double potential(const Vec& x) const { return potential_(wrap(x)); }
    Vec potential_partials(const Vec& x) const;
    Mat potential_second_partials(const Vec& x) const;
    std::vector<Mat> metric_partials(const Vec& x) const;

    /// Wrap periodic coordinates to the fundamental domain [-P/2, P/2).
    Vec wrap(const Vec& x) const;
    /// Minimal representative of a - b under periodic identifications.
    Vec wrap_difference(const Vec& a, const Vec& b) const;

    double inner(const Vec& x, const Vec& u, const Vec& v) const {
        return u.dot(metric(x) * v);
    }
    double norm(const Vec& x, const Vec& v) const { return std::sqrt(inner(x, v, v)); }

private:
    int dim_;
    std::vector<ChartTopology> topology_;
    MetricFn metric_;
    ScalarFn potential_;
    MetricDerivFn metric_deriv_;
    VectorFn potential_grad_;
    MatrixFn potential_hess_;
    double fd_step_ = 1e-5;
};

/// Christoffel symbols of the second kind; result[i](j,k) = Gamma^i_{jk}.
std::vector<Mat> christoffel(const ManifoldModel& model, const Vec& x);

/// Sectional-curvature numerator <R(u,w)w, u>.
double curvature_quadratic(const ManifoldModel& model, const Vec& x, const Vec& u, const Vec& w);

/// Matrix form of the curvature operator along velocity v:
/// result(a,b) = <R(e_a, v) v, e_b>.
Mat curvature_along(const ManifoldModel& model, const Vec& x, const Vec& v);

struct PotentialPackage {
    double value = 0.0;
    Vec gradient;   // metric gradient g^{-1} dV (contravariant)
    Mat hessian;    // covariant Hessian d^2 V - Gamma . dV (bilinear form)
};

PotentialPackage potential_package(const ManifoldModel& model, const Vec& x);

/// Geodesic shooting from (x, v) to parameter 1, fixed-step RK4.
/// Output has periodic coordinates wrapped; exp_map_raw keeps the lift.
Vec exp_map(const ManifoldModel& model, const Vec& x, const Vec& v, int steps = 8);
Vec exp_map_raw(const ManifoldModel& model, const Vec& x, const Vec& v, int steps = 8);

/// Metric length of the straight chart segment between a and b (minimal
/// periodic representative). Exact Riemannian distance for constant-metric
/// charts, an upper estimate otherwise.
double chart_distance(const ManifoldModel& model, const Vec& a, const Vec& b, int panels = 16);

struct LocalizedBallScan {
    std::vector<Vec> samples;
    double K_max = 0.0;
    double C_g = 0.0;
    double C_K = 0.0;
    double C_V = 0.0;

    /// Fold the constants of additional chart points (e.g. current curve
    /// nodes) into the scan maxima.
    void absorb(const ManifoldModel& model, const Vec& x);
};

struct CriticalPointData {
    Vec x_minus;
    Vec x_plus;
    double sigma_minus = 1.0;  // sign of f on t < t0
    double sigma_plus = 1.0;   // sign of f on t > t0
    Vec hessian_eigs_minus;    // Lambda_k^- (square roots of |eigs of sigma H^V|)
    Vec hessian_eigs_plus;
    double lambda = 0.0;       // decay rate, 0 < lambda < Lambda_min
    double nu = 0.0;           // upper rate, nu > Lambda_max
    double R_lambda = 0.0;     // validated ball radius
    LocalizedBallScan scan;

    double lambda_min() const {
        return std::min(hessian_eigs_minus.minCoeff(), hessian_eigs_plus.minCoeff());
    }
    double lambda_max() const {
        return std::max(hessian_eigs_minus.maxCoeff(), hessian_eigs_plus.maxCoeff());
    }
};

class CalibrationFailure : public std::runtime_error {
public:
    CalibrationFailure(const std::string& inequality, const std::string& what)
        : std::runtime_error(what), violated(inequality) {}
    std::string violated;
};

/// Spectral data at x_pm. Throws if sigma H^V(x_pm) is not negative definite
/// (assumption A4) or if lambda_factor is not in (0, 1).
CriticalPointData make_critical_point_data(const ManifoldModel& model, const Vec& x_minus,
                                           const Vec& x_plus, double sigma_minus,
                                           double sigma_plus, double lambda_factor = 0.9,
                                           double nu_factor = 1.1);

struct BallCalibrationOptions {
    double r_init = 1.0;
    double shrink_factor = 0.8;
    int shells = 8;
    int directions_per_dim = 64;
    double r_floor = 1e-6;
    int sample_offset = 0;  // rotates the direction set (fresh-sample re-checks)
};

/// Largest admissible R_lambda from a shrinking trial sequence such that the
/// three coercivity inequalities and the nu upper bound hold on a
/// deterministic low-discrepancy sample grid of both balls. Fills the scan
/// constants (K_max, C_g, C_K, C_V). Throws CalibrationFailure.
CriticalPointData calibrate_ball(const ManifoldModel& model, const CriticalPointData& cp,
                                 const BallCalibrationOptions& opts = {});

/// Check the ball inequalities at one sample; returns the name of the first
/// violated inequality, or empty when all hold.
std::string check_ball_inequalities(const ManifoldModel& model, const Vec& x_pm,
                                    double sigma_pm, const Vec& x, double lambda, double nu);

}  // namespace orbitforge
