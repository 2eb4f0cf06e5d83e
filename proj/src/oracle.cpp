#include "orbitforge/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <utility>

namespace orbitforge {
namespace oracle {

namespace {

/// Strong-form residual of the equations of motion in the original time
/// variable, where the connecting solution is smooth through the turning
/// point: qdd + Gamma(qd, qd) + f(t) gradV = 0. Fourth-order stencils
/// (off-center next to the boundary).
struct TCollocation {
    const ManifoldModel* model;
    const TimeFactor* tf;
    std::vector<double> t;  // uniform nodes
    double dt;
    TimeFactor::Fn f;

    Vec residual_at(const std::vector<Vec>& q, int j) const {
        const int n = static_cast<int>(q.size());
        Vec qd, qdd;
        if (j == 1) {
            qd = (-3.0 * q[0] - 10.0 * q[1] + 18.0 * q[2] - 6.0 * q[3] + q[4]) / (12.0 * dt);
            qdd = (11.0 * q[0] - 20.0 * q[1] + 6.0 * q[2] + 4.0 * q[3] - q[4]) /
                  (12.0 * dt * dt);
        } else if (j == n - 2) {
            qd = (3.0 * q[n - 1] + 10.0 * q[n - 2] - 18.0 * q[n - 3] + 6.0 * q[n - 4] -
                  q[n - 5]) /
                 (12.0 * dt);
            qdd = (11.0 * q[n - 1] - 20.0 * q[n - 2] + 6.0 * q[n - 3] + 4.0 * q[n - 4] -
                   q[n - 5]) /
                  (12.0 * dt * dt);
        } else {
            qd = (-q[j + 2] + 8.0 * q[j + 1] - 8.0 * q[j - 1] + q[j - 2]) / (12.0 * dt);
            qdd = (-q[j + 2] + 16.0 * q[j + 1] - 30.0 * q[j] + 16.0 * q[j - 1] - q[j - 2]) /
                  (12.0 * dt * dt);
        }
        const std::vector<Mat> gamma = christoffel(*model, q[j]);
        Vec r = qdd;
        for (int i = 0; i < model->dim(); ++i) r[i] += qd.dot(gamma[i] * qd);
        r += f(t[j]) * potential_package(*model, q[j]).gradient;
        return r;
    }

    Eigen::VectorXd residual(const std::vector<Vec>& q) const {
        const int dim = model->dim();
        const int n = static_cast<int>(q.size());
        Eigen::VectorXd F((n - 2) * dim);
        for (int j = 1; j + 1 < n; ++j) F.segment((j - 1) * dim, dim) = residual_at(q, j);
        return F;
    }

    /// attainable residual floor from stencil cancellation
    double roundoff_floor(const std::vector<Vec>& q) const {
        double qmax = 0.0;
        for (const Vec& p : q) qmax = std::max(qmax, p.cwiseAbs().maxCoeff());
        return 8.0 * 2.2e-16 * (1.0 + qmax) / (dt * dt);
    }
};

}  // namespace

Vec OracleSolution::at(double x) const {
    const int n = static_cast<int>(xi.size());
    if (x <= xi.front()) return points.front();
    if (x >= xi.back()) return points.back();
    // interpolate in the smooth variable t
    const double tq = factor.t_of_xi(x);
    const double dt = t[1] - t[0];
    int j = std::min(std::max(static_cast<int>((tq - t.front()) / dt), 0), n - 2);
    int j0 = std::min(std::max(j - 1, 0), n - 4);
    Vec out = Vec::Zero(points[0].size());
    for (int a = 0; a < 4; ++a) {
        double w = 1.0;
        for (int b = 0; b < 4; ++b) {
            if (a == b) continue;
            w *= (tq - t[j0 + b]) / (t[j0 + a] - t[j0 + b]);
        }
        out += w * points[j0 + a];
    }
    return out;
}

OracleSolution bvp_solve(const ManifoldModel& model, const TimeFactor& tf, double xi_k,
                         const Vec& x_minus, const Vec& x_plus,
                         const std::vector<Vec>& init_points,
                         const std::vector<double>& init_xi, const BvpOptions& opts) {
    const int dim = model.dim();
    int n = std::max(opts.nodes, 31);
    if (n % 2 == 1) ++n;  // even node count -> odd cell count -> no node at t0

    TCollocation col;
    col.model = &model;
    col.tf = &tf;
    col.f = [&tf](double t) {
        const double xi = tf.xi_of_t(t);
        const double r = tf.r(xi);
        return tf.sigma(xi) * r * r;
    };
    const double t_lo = tf.t_of_xi(-xi_k), t_hi = tf.t_of_xi(xi_k);
    col.dt = (t_hi - t_lo) / (n - 1);
    col.t.resize(n);
    for (int j = 0; j < n; ++j) col.t[j] = t_lo + j * col.dt;

    OracleSolution sol;
    sol.factor = tf;
    sol.t = col.t;
    sol.xi.resize(n);
    for (int j = 0; j < n; ++j) sol.xi[j] = tf.xi_of_t(col.t[j]);
    sol.xi.front() = -xi_k;
    sol.xi.back() = xi_k;

    // initial guess: supplied curve interpolated in xi, else straight chart line
    std::vector<Vec> q(n);
    for (int j = 0; j < n; ++j) {
        const double x = sol.xi[j];
        if (!init_points.empty()) {
            const auto it = std::upper_bound(init_xi.begin(), init_xi.end(), x);
            int k = static_cast<int>(it - init_xi.begin()) - 1;
            k = std::min(std::max(k, 0), static_cast<int>(init_points.size()) - 2);
            const double s = (x - init_xi[k]) / (init_xi[k + 1] - init_xi[k]);
            q[j] = (1.0 - s) * init_points[k] + s * init_points[k + 1];
        } else {
            // straight in t (smooth through the turning point)
            const double s = (col.t[j] - t_lo) / (t_hi - t_lo);
            q[j] = x_minus + s * (x_plus - x_minus);
        }
    }
    q.front() = x_minus;
    q.back() = x_plus;

    const int ndof = (n - 2) * dim;
    auto pack = [&](const std::vector<Vec>& pts) {
        Eigen::VectorXd v(ndof);
        for (int j = 1; j + 1 < n; ++j) v.segment((j - 1) * dim, dim) = pts[j];
        return v;
    };
    auto unpack = [&](const Eigen::VectorXd& v) {
        std::vector<Vec> pts = q;
        for (int j = 1; j + 1 < n; ++j) pts[j] = v.segment((j - 1) * dim, dim);
        pts.front() = x_minus;
        pts.back() = x_plus;
        return pts;
    };

    Eigen::VectorXd x = pack(q);
    Eigen::VectorXd F = col.residual(unpack(x));
    for (int it = 0; it <= opts.max_iter; ++it) {
        const double tol_eff = std::max(opts.tol, col.roundoff_floor(unpack(x)));
        if (F.cwiseAbs().maxCoeff() <= tol_eff) {
            sol.converged = true;
            break;
        }
        if (it == opts.max_iter) break;
        // finite-difference Jacobian: interior rows touch nodes j-2 .. j+2,
        // the off-center boundary rows reach three nodes in
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(ndof, ndof);
        std::vector<Vec> base = unpack(x);
        for (int node = 1; node + 1 < n; ++node) {
            for (int a = 0; a < dim; ++a) {
                const double h = 1e-7 * (1.0 + std::abs(base[node][a]));
                std::vector<Vec> pert = base;
                pert[node][a] += h;
                for (int jr = std::max(1, node - 3); jr <= std::min(n - 2, node + 3); ++jr) {
                    const Vec r = col.residual_at(pert, jr);
                    const Vec r0 = F.segment((jr - 1) * dim, dim);
                    J.block((jr - 1) * dim, (node - 1) * dim + a, dim, 1) = (r - r0) / h;
                }
            }
        }
        const Eigen::VectorXd step = J.partialPivLu().solve(-F);
        // damped update on the residual norm; reject a step that only grows it
        double alpha = 1.0;
        const double f0 = F.norm();
        bool accepted = false;
        for (int bt = 0; bt < 16; ++bt) {
            const Eigen::VectorXd xn = x + alpha * step;
            const Eigen::VectorXd Fn = col.residual(unpack(xn));
            if (Fn.norm() < f0) {
                x = xn;
                F = Fn;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) break;  // residual stagnated at its floor
    }
    sol.residual = F.cwiseAbs().maxCoeff();
    if (!sol.converged &&
        sol.residual <= std::max(opts.tol, col.roundoff_floor(unpack(x))) * 4.0)
        sol.converged = true;  // stagnation within a factor of the floor
    sol.points = unpack(x);
    if (!sol.converged)
        throw std::runtime_error("oracle bvp_solve: collocation Newton did not converge (residual " +
                                 std::to_string(sol.residual) + ")");
    return sol;
}

std::vector<double> scalar_bvp_solve(const TimeFactor& tf, double lambda, double a, double b,
                                     const std::vector<double>& sample_xi, int base_nodes) {
    if (!(b > a) || a <= 0.0) throw std::invalid_argument("scalar_bvp_solve: 0 < a < b");
    auto solve_at = [&](int n) {
        // v'' + p v' - lambda^2 v = 0 with the flux-form damping p = r'/r
        const double dx = (b - a) / (n - 1);
        Eigen::VectorXd lower(n), diag(n), upper(n), rhs = Eigen::VectorXd::Zero(n);
        diag[0] = 1.0;
        upper[0] = 0.0;
        rhs[0] = 1.0;
        diag[n - 1] = 1.0;
        lower[n - 1] = 0.0;
        rhs[n - 1] = 0.0;
        for (int j = 1; j + 1 < n; ++j) {
            const double xj = a + j * dx;
            const double p = tf.p(xj);
            lower[j] = 1.0 / (dx * dx) - p / (2.0 * dx);
            diag[j] = -2.0 / (dx * dx) - lambda * lambda;
            upper[j] = 1.0 / (dx * dx) + p / (2.0 * dx);
        }
        // Thomas algorithm
        Eigen::VectorXd c(n), d(n);
        c[0] = upper[0] / diag[0];
        d[0] = rhs[0] / diag[0];
        for (int j = 1; j < n; ++j) {
            const double m = diag[j] - lower[j] * c[j - 1];
            c[j] = (j + 1 < n) ? upper[j] / m : 0.0;
            d[j] = (rhs[j] - lower[j] * d[j - 1]) / m;
        }
        Eigen::VectorXd v(n);
        v[n - 1] = d[n - 1];
        for (int j = n - 2; j >= 0; --j) v[j] = d[j] - c[j] * v[j + 1];
        return v;
    };
    int n = base_nodes;
    if (n % 2 == 0) ++n;  // coarse nodes must embed in the fine grid
    const Eigen::VectorXd vc = solve_at(n);
    const Eigen::VectorXd vf = solve_at(2 * n - 1);
    Eigen::VectorXd vext(n);
    for (int j = 0; j < n; ++j) vext[j] = (4.0 * vf[2 * j] - vc[j]) / 3.0;

    // cubic Hermite evaluation at requested points
    const double dx = (b - a) / (n - 1);
    std::vector<double> out;
    out.reserve(sample_xi.size());
    for (double x : sample_xi) {
        if (x <= a) {
            out.push_back(1.0);
            continue;
        }
        if (x >= b) {
            out.push_back(0.0);
            continue;
        }
        int j = std::min(static_cast<int>((x - a) / dx), n - 2);
        const double s = (x - (a + j * dx)) / dx;
        const double m0 = (j == 0) ? (vext[1] - vext[0])
                                   : 0.5 * (vext[j + 1] - vext[j - 1]);
        const double m1 = (j + 2 >= n) ? (vext[n - 1] - vext[n - 2])
                                       : 0.5 * (vext[j + 2] - vext[j]);
        const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
        const double h10 = s * (1 - s) * (1 - s);
        const double h01 = s * s * (3 - 2 * s);
        const double h11 = s * s * (s - 1);
        out.push_back(h00 * vext[j] + h10 * m0 + h01 * vext[j + 1] + h11 * m1);
    }
    return out;
}

namespace {

DiscreteCurve retract_curve(const ManifoldModel& model, const DiscreteCurve& q,
                            const TangentField& dir, double s) {
    DiscreteCurve out = q;
    for (int i = 1; i + 1 < q.node_count(); ++i)
        out.points[i] = exp_map_raw(model, q.points[i], s * dir.values[i], 8);
    return out;
}

double fit_slope(const std::vector<double>& h, const std::vector<double>& e) {
    // least-squares slope of log e vs log h, ignoring entries at the
    // roundoff floor
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (size_t i = 0; i < h.size(); ++i) {
        if (e[i] <= 0.0) continue;
        const double x = std::log(h[i]), y = std::log(e[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    if (n < 2) return 0.0;
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

FdOrderReport fd_check(const ManifoldModel& model, const TimeFactor& tf,
                       const DiscreteCurve& q, const TangentField& phi,
                       const TangentField& psi, const std::vector<double>& h_values,
                       double h_probe) {
    FdOrderReport rep;
    rep.h_values = h_values;
    rep.h_probe = h_probe;
    const ActionDerivatives d = assemble(model, tf, q);
    const Eigen::VectorXd phi_dofs = stack_interior(phi);
    const Eigen::VectorXd psi_dofs = stack_interior(psi);
    const double dir_deriv = d.gradient_dofs.dot(phi_dofs);
    const double quad_form = phi_dofs.dot(d.ops.hessian.multiply(psi_dofs));

    TangentField sum, dif;
    sum.values.resize(phi.values.size());
    dif.values.resize(phi.values.size());
    for (size_t i = 0; i < phi.values.size(); ++i) {
        sum.values[i] = phi.values[i] + psi.values[i];
        dif.values[i] = phi.values[i] - psi.values[i];
    }

    auto grad_mismatch = [&](double h) {
        const double ip = action(model, tf, retract_curve(model, q, phi, h));
        const double im = action(model, tf, retract_curve(model, q, phi, -h));
        return std::abs((ip - im) / (2.0 * h) - dir_deriv);
    };
    auto hess_mismatch = [&](double h) {
        const double ipp = action(model, tf, retract_curve(model, q, sum, h));
        const double imm = action(model, tf, retract_curve(model, q, sum, -h));
        const double ipm = action(model, tf, retract_curve(model, q, dif, h));
        const double imp = action(model, tf, retract_curve(model, q, dif, -h));
        return std::abs((ipp + imm - ipm - imp) / (4.0 * h * h) - quad_form);
    };

    for (double h : h_values) {
        rep.gradient_mismatch.push_back(grad_mismatch(h));
        rep.hessian_mismatch.push_back(hess_mismatch(h));
    }
    rep.gradient_order = fit_slope(h_values, rep.gradient_mismatch);
    rep.hessian_order = fit_slope(h_values, rep.hessian_mismatch);
    rep.gradient_rel_mismatch_at =
        grad_mismatch(h_probe) / std::max(1e-300, std::abs(dir_deriv));
    return rep;
}

SphereDistance sphere_distance(const ManifoldModel& model, const Vec& x_minus,
                               const Vec& x_plus, double R, int mesh_per_dim) {
    SphereDistance out;
    const double d_centers = chart_distance(model, x_minus, x_plus);
    if (d_centers <= 2.0 * R) {
        out.overlapping = true;
        out.L = 0.0;
        return out;
    }
    const int dim = model.dim();
    if (dim == 1) {
        // arc lengths in both directions for circular charts
        auto arc = [&](double from, double to) {
            const int panels = 256;
            double len = 0.0;
            for (int p = 0; p < panels; ++p) {
                const double s0 = from + (to - from) * p / panels;
                const double s1 = from + (to - from) * (p + 1) / panels;
                const double sm = 0.5 * (s0 + s1);
                Vec v(1);
                v[0] = 1.0;
                auto w = [&](double s) {
                    Vec xx(1);
                    xx[0] = s;
                    return model.norm(xx, v);
                };
                len += std::abs(s1 - s0) / 6.0 * (w(s0) + 4.0 * w(sm) + w(s1));
            }
            return len;
        };
        double best;
        if (model.topology()[0].kind == ChartTopology::Circle) {
            const double P = model.topology()[0].period;
            const double a = x_minus[0], b = x_plus[0];
            double fwd = std::fmod(b - a, P);
            if (fwd < 0) fwd += P;
            best = std::min(arc(a, a + fwd), arc(a, a - (P - fwd)));
        } else {
            best = arc(x_minus[0], x_plus[0]);
        }
        out.L = std::max(0.0, best - 2.0 * R);
        return out;
    }
    if (dim == 2) {
        // Dijkstra on an 8-neighbor mesh between the two sphere surfaces
        const int nmesh = mesh_per_dim;
        Vec lo(2), hi(2);
        for (int a = 0; a < 2; ++a) {
            if (model.topology()[a].kind == ChartTopology::Circle) {
                lo[a] = -0.5 * model.topology()[a].period;
                hi[a] = 0.5 * model.topology()[a].period;
            } else {
                lo[a] = std::min(x_minus[a], x_plus[a]) - (d_centers + 2.0 * R);
                hi[a] = std::max(x_minus[a], x_plus[a]) + (d_centers + 2.0 * R);
            }
        }
        auto node_x = [&](int i, int j) {
            Vec x(2);
            x[0] = lo[0] + (hi[0] - lo[0]) * i / (nmesh - 1);
            x[1] = lo[1] + (hi[1] - lo[1]) * j / (nmesh - 1);
            return x;
        };
        auto idx = [&](int i, int j) { return i * nmesh + j; };
        std::vector<double> dist(static_cast<size_t>(nmesh) * nmesh,
                                 std::numeric_limits<double>::infinity());
        using Item = std::pair<double, int>;
        std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
        for (int i = 0; i < nmesh; ++i)
            for (int j = 0; j < nmesh; ++j)
                if (chart_distance(model, node_x(i, j), x_minus, 4) <= R) {
                    dist[idx(i, j)] = 0.0;
                    pq.push({0.0, idx(i, j)});
                }
        const bool per0 = model.topology()[0].kind == ChartTopology::Circle;
        const bool per1 = model.topology()[1].kind == ChartTopology::Circle;
        while (!pq.empty()) {
            const auto [dcur, u] = pq.top();
            pq.pop();
            if (dcur > dist[u]) continue;
            const int i = u / nmesh, j = u % nmesh;
            const Vec xu = node_x(i, j);
            if (chart_distance(model, xu, x_plus, 4) <= R) {
                out.L = dcur;
                return out;
            }
            for (int di = -1; di <= 1; ++di)
                for (int dj = -1; dj <= 1; ++dj) {
                    if (di == 0 && dj == 0) continue;
                    int ni = i + di, nj = j + dj;
                    if (per0) ni = (ni + nmesh) % nmesh;
                    if (per1) nj = (nj + nmesh) % nmesh;
                    if (ni < 0 || ni >= nmesh || nj < 0 || nj >= nmesh) continue;
                    const double w = chart_distance(model, xu, node_x(ni, nj), 2);
                    if (dist[u] + w < dist[idx(ni, nj)]) {
                        dist[idx(ni, nj)] = dist[u] + w;
                        pq.push({dist[idx(ni, nj)], idx(ni, nj)});
                    }
                }
        }
        out.L = std::max(0.0, d_centers - 2.0 * R);
        return out;
    }
    out.L = std::max(0.0, d_centers - 2.0 * R);
    return out;
}

}  // namespace oracle
}  // namespace orbitforge
