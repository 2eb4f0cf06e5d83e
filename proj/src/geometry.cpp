#include "orbitforge/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace orbitforge {

namespace {

double step_for(double h, double x) { return h * std::max(1.0, std::abs(x)); }

/// Deterministic low-discrepancy direction set on the unit sphere of R^n:
/// Halton points pushed through the inverse normal CDF and normalized.
double halton(int index, int base) {
    double f = 1.0, r = 0.0;
    int i = index;
    while (i > 0) {
        f /= base;
        r += f * (i % base);
        i /= base;
    }
    return r;
}

// Acklam's rational approximation of the standard normal quantile.
double norm_quantile(double p) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1.0 - plow;
    double q, r;
    if (p < plow) {
        q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > phigh) {
        q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    q = p - 0.5;
    r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

std::vector<Vec> unit_directions(int dim, int count, int offset) {
    static const int primes[] = {2, 3, 5, 7, 11, 13, 17, 19};
    std::vector<Vec> dirs;
    dirs.reserve(count);
    if (dim == 1) {
        for (int k = 0; k < count; ++k) {
            Vec d(1);
            d[0] = (k % 2 == 0) ? 1.0 : -1.0;
            dirs.push_back(d);
        }
        return dirs;
    }
    for (int k = 0; k < count; ++k) {
        Vec d(dim);
        for (int a = 0; a < dim; ++a) {
            double u = halton(offset + k + 1, primes[a % 8]);
            u = std::min(std::max(u, 1e-12), 1.0 - 1e-12);
            d[a] = norm_quantile(u);
        }
        const double n = d.norm();
        dirs.push_back(n > 1e-14 ? Vec(d / n) : Vec(Vec::Unit(dim, k % dim)));
    }
    return dirs;
}

}  // namespace

ManifoldModel::ManifoldModel(int dim, std::vector<ChartTopology> topology, MetricFn metric,
                             ScalarFn potential)
    : dim_(dim), topology_(std::move(topology)), metric_(std::move(metric)),
      potential_(std::move(potential)) {
    if (static_cast<int>(topology_.size()) != dim_)
        throw std::invalid_argument("topology size must equal dim");
}

ManifoldModel ManifoldModel::with_zero_potential() const {
    ManifoldModel m = *this;
    m.potential_ = [](const Vec&) { return 0.0; };
    m.potential_grad_ = [d = dim_](const Vec&) { return Vec(Vec::Zero(d)); };
    m.potential_hess_ = [d = dim_](const Vec&) { return Mat(Mat::Zero(d, d)); };
    return m;
}

Vec ManifoldModel::wrap(const Vec& x) const {
    Vec y = x;
    for (int a = 0; a < dim_; ++a) {
        if (topology_[a].kind == ChartTopology::Circle) {
            const double P = topology_[a].period;
            y[a] = std::remainder(y[a], P);
        }
    }
    return y;
}

Vec ManifoldModel::wrap_difference(const Vec& a, const Vec& b) const {
    Vec d = a - b;
    for (int i = 0; i < dim_; ++i) {
        if (topology_[i].kind == ChartTopology::Circle)
            d[i] = std::remainder(d[i], topology_[i].period);
    }
    return d;
}

Mat ManifoldModel::metric_inverse(const Vec& x) const {
    const Mat g = metric(x);
    Eigen::LLT<Mat> llt(g);
    if (llt.info() != Eigen::Success)
        throw DegenerateMetric(x, "metric not positive definite at sampled point");
    return llt.solve(Mat::Identity(dim_, dim_));
}

Vec ManifoldModel::potential_partials(const Vec& x) const {
    if (potential_grad_) return potential_grad_(wrap(x));
    Vec d(dim_);
    for (int a = 0; a < dim_; ++a) {
        const double h = step_for(fd_step_, x[a]);
        Vec xp = x, xm = x;
        xp[a] += h;
        xm[a] -= h;
        d[a] = (potential(xp) - potential(xm)) / (2.0 * h);
    }
    return d;
}

Mat ManifoldModel::potential_second_partials(const Vec& x) const {
    if (potential_hess_) return potential_hess_(wrap(x));
    Mat h2(dim_, dim_);
    const double v0 = potential(x);
    // second differences want a larger step than first ones (eps^{1/4} scaling)
    const double fd2 = 12.0 * fd_step_;
    for (int a = 0; a < dim_; ++a) {
        const double ha = step_for(fd2, x[a]);
        Vec xp = x, xm = x;
        xp[a] += ha;
        xm[a] -= ha;
        h2(a, a) = (potential(xp) - 2.0 * v0 + potential(xm)) / (ha * ha);
        for (int b = a + 1; b < dim_; ++b) {
            const double hb = step_for(fd2, x[b]);
            Vec xpp = x, xpm = x, xmp = x, xmm = x;
            xpp[a] += ha; xpp[b] += hb;
            xpm[a] += ha; xpm[b] -= hb;
            xmp[a] -= ha; xmp[b] += hb;
            xmm[a] -= ha; xmm[b] -= hb;
            h2(a, b) = (potential(xpp) - potential(xpm) - potential(xmp) + potential(xmm)) /
                       (4.0 * ha * hb);
            h2(b, a) = h2(a, b);
        }
    }
    return h2;
}

std::vector<Mat> ManifoldModel::metric_partials(const Vec& x) const {
    if (metric_deriv_) return metric_deriv_(wrap(x));
    std::vector<Mat> d(dim_);
    for (int a = 0; a < dim_; ++a) {
        const double h = step_for(fd_step_, x[a]);
        Vec xp = x, xm = x;
        xp[a] += h;
        xm[a] -= h;
        d[a] = (metric(xp) - metric(xm)) / (2.0 * h);
    }
    return d;
}

std::vector<Mat> christoffel(const ManifoldModel& model, const Vec& x) {
    const int n = model.dim();
    const Mat ginv = model.metric_inverse(x);  // throws DegenerateMetric when singular
    const std::vector<Mat> dg = model.metric_partials(x);
    std::vector<Mat> gamma(n, Mat::Zero(n, n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = j; k < n; ++k) {
                double s = 0.0;
                for (int l = 0; l < n; ++l)
                    s += ginv(i, l) * (dg[j](l, k) + dg[k](l, j) - dg[l](j, k));
                gamma[i](j, k) = 0.5 * s;
                gamma[i](k, j) = gamma[i](j, k);
            }
    return gamma;
}

namespace {

/// R^i_{jkl} u^k w^l z^j  for (R(u,w)z)^i, from Gamma and its central
/// finite differences. The outer step is kept larger than the metric step so
/// the nested differences stay well conditioned.
std::vector<Mat> christoffel_partial(const ManifoldModel& model, const Vec& x, int a,
                                     double h) {
    Vec xp = x, xm = x;
    xp[a] += h;
    xm[a] -= h;
    const std::vector<Mat> gp = christoffel(model, xp);
    const std::vector<Mat> gm = christoffel(model, xm);
    std::vector<Mat> d(model.dim());
    for (int i = 0; i < model.dim(); ++i) d[i] = (gp[i] - gm[i]) / (2.0 * h);
    return d;
}

}  // namespace

double curvature_quadratic(const ManifoldModel& model, const Vec& x, const Vec& u,
                           const Vec& w) {
    const int n = model.dim();
    if (n == 1) return 0.0;
    const std::vector<Mat> gamma = christoffel(model, x);
    const double h = std::max(1e-4, 10.0 * model.fd_step());
    std::vector<std::vector<Mat>> dgamma(n);
    for (int a = 0; a < n; ++a) dgamma[a] = christoffel_partial(model, x, a, step_for(h, x[a]));
    const Mat g = model.metric(x);
    // (R(u,w)z)^i = [d_k Gamma^i_{lj} - d_l Gamma^i_{kj} + G^i_{km}G^m_{lj} - G^i_{lm}G^m_{kj}]
    //               u^k w^l z^j    with z = w here.
    Vec ruw = Vec::Zero(n);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int k = 0; k < n; ++k)
            for (int l = 0; l < n; ++l) {
                if (u[k] == 0.0 && w[l] == 0.0) continue;
                for (int j = 0; j < n; ++j) {
                    double term = dgamma[k][i](l, j) - dgamma[l][i](k, j);
                    for (int m = 0; m < n; ++m)
                        term += gamma[i](k, m) * gamma[m](l, j) -
                                gamma[i](l, m) * gamma[m](k, j);
                    s += term * u[k] * w[l] * w[j];
                }
            }
        ruw[i] = s;
    }
    return u.dot(g * ruw);
}

Mat curvature_along(const ManifoldModel& model, const Vec& x, const Vec& v) {
    const int n = model.dim();
    Mat out = Mat::Zero(n, n);
    if (n == 1) return out;
    const std::vector<Mat> gamma = christoffel(model, x);
    const double h = std::max(1e-4, 10.0 * model.fd_step());
    std::vector<std::vector<Mat>> dgamma(n);
    for (int a = 0; a < n; ++a) dgamma[a] = christoffel_partial(model, x, a, step_for(h, x[a]));
    const Mat g = model.metric(x);
    // column b of R(e_a, v) v in upper index i:
    for (int a = 0; a < n; ++a) {
        Vec r = Vec::Zero(n);
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int l = 0; l < n; ++l)
                for (int j = 0; j < n; ++j) {
                    double term = dgamma[a][i](l, j) - dgamma[l][i](a, j);
                    for (int m = 0; m < n; ++m)
                        term += gamma[i](a, m) * gamma[m](l, j) -
                                gamma[i](l, m) * gamma[m](a, j);
                    s += term * v[l] * v[j];
                }
            r[i] = s;
        }
        const Vec gr = g * r;
        for (int b = 0; b < n; ++b) out(a, b) = gr[b];
    }
    return 0.5 * (out + out.transpose());
}

PotentialPackage potential_package(const ManifoldModel& model, const Vec& x) {
    PotentialPackage out;
    out.value = model.potential(x);
    const Vec dv = model.potential_partials(x);
    out.gradient = model.metric_inverse(x) * dv;
    Mat h2 = model.potential_second_partials(x);
    const std::vector<Mat> gamma = christoffel(model, x);
    for (int i = 0; i < model.dim(); ++i) h2 -= gamma[i] * dv[i];
    out.hessian = 0.5 * (h2 + h2.transpose());
    return out;
}

namespace {

Vec geodesic_acc(const ManifoldModel& model, const Vec& x, const Vec& v) {
    const std::vector<Mat> gamma = christoffel(model, x);
    Vec a(model.dim());
    for (int i = 0; i < model.dim(); ++i) a[i] = -v.dot(gamma[i] * v);
    return a;
}

}  // namespace

Vec exp_map_raw(const ManifoldModel& model, const Vec& x, const Vec& v, int steps) {
    if (steps <= 0) throw std::invalid_argument("exp_map: steps must be positive");
    Vec pos = x, vel = v;
    const double dt = 1.0 / steps;
    for (int s = 0; s < steps; ++s) {
        const Vec k1x = vel;
        const Vec k1v = geodesic_acc(model, pos, vel);
        const Vec k2x = vel + 0.5 * dt * k1v;
        const Vec k2v = geodesic_acc(model, pos + 0.5 * dt * k1x, vel + 0.5 * dt * k1v);
        const Vec k3x = vel + 0.5 * dt * k2v;
        const Vec k3v = geodesic_acc(model, pos + 0.5 * dt * k2x, vel + 0.5 * dt * k2v);
        const Vec k4x = vel + dt * k3v;
        const Vec k4v = geodesic_acc(model, pos + dt * k3x, vel + dt * k3v);
        pos += dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        vel += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    }
    return pos;
}

Vec exp_map(const ManifoldModel& model, const Vec& x, const Vec& v, int steps) {
    return model.wrap(exp_map_raw(model, x, v, steps));
}

double chart_distance(const ManifoldModel& model, const Vec& a, const Vec& b, int panels) {
    const Vec d = model.wrap_difference(b, a);
    if (d.norm() == 0.0) return 0.0;
    // composite Simpson along the straight segment a + s d
    double len = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double s0 = static_cast<double>(p) / panels;
        const double s1 = static_cast<double>(p + 1) / panels;
        const double sm = 0.5 * (s0 + s1);
        const double f0 = model.norm(a + s0 * d, d);
        const double fm = model.norm(a + sm * d, d);
        const double f1 = model.norm(a + s1 * d, d);
        len += (s1 - s0) / 6.0 * (f0 + 4.0 * fm + f1);
    }
    return len;
}

void LocalizedBallScan::absorb(const ManifoldModel& model, const Vec& x) {
    const int n = model.dim();
    const Mat g = model.metric(x);
    const std::vector<Mat> gamma = christoffel(model, x);
    const Mat hv = potential_package(model, x).hessian;
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(hv, g, Eigen::EigenvaluesOnly);
    C_V = std::max(C_V, es.eigenvalues().cwiseAbs().maxCoeff());

    const std::vector<Vec> dirs = unit_directions(n, std::max(2, 4 * n), 0);
    for (const Vec& d : dirs) {
        const double gn = d.dot(g * d);
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += std::abs(d.dot(gamma[i] * d));
        C_g = std::max(C_g, s / gn);
    }
    if (n >= 2) {
        for (int a = 0; a < n; ++a)
            for (int b = a + 1; b < n; ++b) {
                Vec u = Vec::Unit(n, a), w = Vec::Unit(n, b);
                const double num = curvature_quadratic(model, x, u, w);
                const double uu = u.dot(g * u), ww = w.dot(g * w), uw = u.dot(g * w);
                const double area = uu * ww - uw * uw;
                if (area > 1e-12) {
                    const double K = num / area;
                    K_max = std::max(K_max, K);
                    C_K = std::max(C_K, std::abs(num) / (uu * ww));
                }
            }
    }
}

std::string check_ball_inequalities(const ManifoldModel& model, const Vec& x_pm,
                                    double sigma_pm, const Vec& x, double lambda, double nu) {
    // W = -sigma V has a nondegenerate minimum at x_pm; the three coercivity
    // inequalities plus the nu upper bound are checked on W.
    const double d = chart_distance(model, x, x_pm);
    const double d2 = d * d;
    const double W = -sigma_pm * model.potential(x);
    const double W0 = -sigma_pm * model.potential(x_pm);
    const double tol = 1e-12 * (1.0 + std::abs(W0));
    if (W - W0 + tol < 0.5 * lambda * lambda * d2) return "value: sigma(V(x_pm)-V(x)) >= lambda^2 d^2 / 2";
    const Vec dW = -sigma_pm * model.potential_partials(x);
    const Vec u = model.wrap_difference(x, x_pm);
    if (dW.dot(u) + tol < lambda * lambda * d2) return "gradient: <grad(-sigma V), x - x_pm> >= lambda^2 d^2";
    const Mat HW = -sigma_pm * potential_package(model, x).hessian;
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(HW, model.metric(x), Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() + tol < lambda * lambda) return "hessian: <H^(-sigma V) v, v> >= lambda^2 |v|^2";
    if (W - W0 - tol > 0.5 * nu * nu * d2) return "nu-bound: sigma(V(x_pm)-V(x)) <= nu^2 d^2 / 2";
    return {};
}

CriticalPointData make_critical_point_data(const ManifoldModel& model, const Vec& x_minus,
                                           const Vec& x_plus, double sigma_minus,
                                           double sigma_plus, double lambda_factor,
                                           double nu_factor) {
    if (lambda_factor <= 0.0 || lambda_factor >= 1.0)
        throw std::invalid_argument("lambda must satisfy 0 < lambda < Lambda_min (factor in (0,1))");
    if (nu_factor <= 1.0) throw std::invalid_argument("nu must exceed Lambda_max (factor > 1)");
    CriticalPointData cp;
    cp.x_minus = x_minus;
    cp.x_plus = x_plus;
    cp.sigma_minus = sigma_minus;
    cp.sigma_plus = sigma_plus;

    auto eigs_at = [&](const Vec& x, double sigma) {
        const Mat HW = -sigma * potential_package(model, x).hessian;
        Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(HW, model.metric(x),
                                                         Eigen::EigenvaluesOnly);
        Vec ev = es.eigenvalues();
        if (ev.minCoeff() <= 0.0)
            throw std::runtime_error(
                "assumption A4 violated: sigma H^V is not negative definite at a critical point");
        return Vec(ev.cwiseSqrt());
    };
    cp.hessian_eigs_minus = eigs_at(x_minus, sigma_minus);
    cp.hessian_eigs_plus = eigs_at(x_plus, sigma_plus);
    cp.lambda = lambda_factor * cp.lambda_min();
    cp.nu = nu_factor * cp.lambda_max();
    return cp;
}

CriticalPointData calibrate_ball(const ManifoldModel& model, const CriticalPointData& cp,
                                 const BallCalibrationOptions& opts) {
    if (cp.lambda >= cp.lambda_min())
        throw std::invalid_argument("calibrate_ball precondition: lambda < Lambda_min");
    if (cp.nu <= cp.lambda_max())
        throw std::invalid_argument("calibrate_ball precondition: nu > Lambda_max");

    CriticalPointData out = cp;
    const int n = model.dim();
    const int dir_count = std::max(2, opts.directions_per_dim * n);
    const std::vector<Vec> dirs = unit_directions(n, dir_count, opts.sample_offset);

    std::string last_violation = "value";
    for (double R = opts.r_init; R >= opts.r_floor; R *= opts.shrink_factor) {
        bool ok = true;
        LocalizedBallScan scan;
        for (int side = 0; side < 2 && ok; ++side) {
            const Vec& c = (side == 0) ? cp.x_minus : cp.x_plus;
            const double sg = (side == 0) ? cp.sigma_minus : cp.sigma_plus;
            const Mat g0 = model.metric(c);
            for (int s = 0; s < opts.shells && ok; ++s) {
                const double rho = R * (s + 1) / opts.shells;
                for (const Vec& d : dirs) {
                    // scale the chart offset so its metric length is ~rho
                    const double dn = std::sqrt(d.dot(g0 * d));
                    const Vec x = c + (rho / dn) * d;
                    const std::string v =
                        check_ball_inequalities(model, c, sg, x, cp.lambda, cp.nu);
                    if (!v.empty()) {
                        last_violation = v;
                        ok = false;
                        break;
                    }
                    scan.samples.push_back(x);
                }
            }
        }
        if (ok) {
            scan.absorb(model, cp.x_minus);
            scan.absorb(model, cp.x_plus);
            for (const Vec& x : scan.samples) scan.absorb(model, x);
            out.R_lambda = R;
            out.scan = std::move(scan);
            return out;
        }
    }
    throw CalibrationFailure(last_violation,
                             "calibrate_ball: no admissible R_lambda above floor; violated " +
                                 last_violation);
}

}  // namespace orbitforge
