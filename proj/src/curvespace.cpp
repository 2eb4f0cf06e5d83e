#include "orbitforge/curvespace.hpp"

#include <algorithm>
#include <cmath>

namespace orbitforge {

namespace {

void fill_cells(const TimeFactor& tf, WindowGrid& g) {
    const int nc = g.node_count() - 1;
    g.cell_mid.resize(nc);
    g.cell_h.resize(nc);
    g.r_mid.resize(nc);
    g.sigma_mid.resize(nc);
    g.cell_int_r.resize(nc);
    g.cell_int_rinv.resize(nc);
    for (int c = 0; c < nc; ++c) {
        const double a = g.nodes[c], b = g.nodes[c + 1];
        g.cell_h[c] = b - a;
        g.cell_mid[c] = 0.5 * (a + b);
        g.r_mid[c] = tf.r(g.cell_mid[c]);
        g.sigma_mid[c] = tf.sigma(g.cell_mid[c]);
        const WeightIntegrals wi = tf.weight_integrals(a, b);
        g.cell_int_r[c] = wi.int_r;
        g.cell_int_rinv[c] = wi.int_r_inv;
    }
}

}  // namespace

WindowGrid build_grid(const TimeFactor& tf, double xi_k, int n_cells) {
    if (xi_k <= 0.0) throw std::invalid_argument("build_grid: xi_k must be positive");
    if (n_cells < 16) throw std::invalid_argument("build_grid: need at least 16 cells");
    const int n_half = (n_cells + 1) / 2;
    WindowGrid g;
    g.xi_k = xi_k;
    g.nodes.resize(2 * n_half + 1);
    const double gmax = tf.g(xi_k);
    for (int j = 0; j <= n_half; ++j) {
        const double xi = (j == n_half) ? xi_k : tf.g_inverse(gmax * j / n_half);
        g.nodes[n_half + j] = xi;
        g.nodes[n_half - j] = -xi;
    }
    g.nodes[n_half] = 0.0;
    g.zero_node = n_half;
    fill_cells(tf, g);
    return g;
}

WindowGrid extend_grid(const TimeFactor& tf, const WindowGrid& old_grid, double xi_new,
                       int n_ext_per_side) {
    if (xi_new < old_grid.xi_k) throw std::invalid_argument("extend_grid: window must not shrink");
    if (xi_new == old_grid.xi_k) return old_grid;
    n_ext_per_side = std::max(n_ext_per_side, 4);
    WindowGrid g;
    g.xi_k = xi_new;
    const int old_n = old_grid.node_count();
    g.nodes.resize(old_n + 2 * n_ext_per_side);
    // interior: old nodes; outside: grade the extension by its own r^{-1} budget
    const double g_old = tf.g(old_grid.xi_k), g_new = tf.g(xi_new);
    for (int j = 0; j < old_n; ++j) g.nodes[n_ext_per_side + j] = old_grid.nodes[j];
    for (int j = 1; j <= n_ext_per_side; ++j) {
        const double xi = (j == n_ext_per_side)
                              ? xi_new
                              : tf.g_inverse(g_old + (g_new - g_old) * j / n_ext_per_side);
        g.nodes[n_ext_per_side + old_n - 1 + j] = xi;
        g.nodes[n_ext_per_side - j] = -xi;
    }
    g.zero_node = old_grid.zero_node + n_ext_per_side;
    fill_cells(tf, g);
    return g;
}

DiscreteCurve straight_curve(std::shared_ptr<const WindowGrid> grid, const Vec& x_minus,
                             const Vec& x_plus) {
    DiscreteCurve q;
    q.grid = std::move(grid);
    q.x_minus = x_minus;
    q.x_plus = x_plus;
    const int n = q.grid->node_count();
    q.points.reserve(n);
    const double a = q.grid->nodes[0], b = q.grid->nodes[n - 1];
    for (int i = 0; i < n; ++i) {
        const double s = (q.grid->nodes[i] - a) / (b - a);
        q.points.push_back(x_minus + s * (x_plus - x_minus));
    }
    q.points.front() = x_minus;
    q.points.back() = x_plus;
    return q;
}

Eigen::VectorXd stack_interior(const TangentField& v) {
    const int n = static_cast<int>(v.values.size());
    const int dim = static_cast<int>(v.values[0].size());
    Eigen::VectorXd out((n - 2) * dim);
    for (int i = 1; i + 1 < n; ++i) out.segment((i - 1) * dim, dim) = v.values[i];
    return out;
}

TangentField unstack_interior(const DiscreteCurve& q, const Eigen::VectorXd& dofs) {
    const int n = q.node_count();
    const int dim = static_cast<int>(q.points[0].size());
    TangentField v;
    v.values.assign(n, Vec::Zero(dim));
    for (int i = 1; i + 1 < n; ++i) v.values[i] = dofs.segment((i - 1) * dim, dim);
    return v;
}

ActionDerivatives assemble(const ManifoldModel& model, const TimeFactor& tf,
                           const DiscreteCurve& q, const AssembleOptions& opts) {
    const WindowGrid& g = *q.grid;
    const int dim = model.dim();
    const int n_int = g.node_count() - 2;
    const int ndof = n_int * dim;
    const int kd = 2 * dim - 1;
    ActionDerivatives out(ndof, kd);
    out.gradient_dofs = Eigen::VectorXd::Zero(ndof);

    auto dof_base = [&](int node) { return (node - 1) * dim; };  // interior nodes only

    for (int c = 0; c < g.cells(); ++c) {
        const int i0 = c, i1 = c + 1;
        const Vec& u0 = q.points[i0];
        const Vec& u1 = q.points[i1];
        const double h = g.cell_h[c];
        const double sg = g.sigma_mid[c];
        // curves are interpolated linearly in the intrinsic coordinate
        // u = g(xi) per cell, which makes the r-weighted kinetic integral of
        // the interpolant exact: the stiffness weight is h^2 / int r^{-1}
        // (a harmonic-type mean, = r h + O(h^3) away from the singularity)
        // while zero-order terms carry the plain weight int r. This captures
        // the xi^{m/(m+2)} branch of solutions at the turning point.
        const double wk = h * h / g.cell_int_rinv[c];
        const double wp = g.cell_int_r[c];
        const Vec mid = 0.5 * (u0 + u1);
        const Vec qp = (u1 - u0) / h;

        const Mat G = model.metric(mid);
        const std::vector<Mat> dG = model.metric_partials(mid);
        const Vec Gqp = G * qp;

        double pot_term = 0.0;
        Vec dV;
        Mat HV;
        if (!opts.zero_potential) {
            const double Vchi =
                model.potential(g.cell_mid[c] > 0.0 ? q.x_plus : q.x_minus);
            pot_term = sg * (model.potential(mid) - Vchi);
            dV = model.potential_partials(mid);
        }

        const double kin = 0.5 * qp.dot(Gqp);
        out.kinetic += wk * kin;
        out.value += wk * kin - wp * pot_term;

        // exact gradient of the cell energy (chart differentiation of the
        // quadrature; the dG term is the Christoffel correction in disguise)
        Vec shared(dim);
        for (int a = 0; a < dim; ++a) shared[a] = 0.25 * wk * qp.dot(dG[a] * qp);
        if (!opts.zero_potential) shared -= 0.5 * wp * sg * dV;
        const Vec g0 = shared - wk * Gqp / h;
        const Vec g1 = shared + wk * Gqp / h;
        if (i0 > 0) out.gradient_dofs.segment(dof_base(i0), dim) += g0;
        if (i1 < g.node_count() - 1) out.gradient_dofs.segment(dof_base(i1), dim) += g1;

        if (!opts.with_hessian) continue;

        // covariant derivative blocks: D phi = dphi/h + W phi_mid
        const std::vector<Mat> gamma = christoffel(model, mid);
        Mat W = Mat::Zero(dim, dim);
        for (int a = 0; a < dim; ++a)
            for (int k = 0; k < dim; ++k) W(a, k) = qp.dot(gamma[a].col(k));
        const Mat B0 = -Mat::Identity(dim, dim) / h + 0.5 * W;
        const Mat B1 = Mat::Identity(dim, dim) / h + 0.5 * W;

        // zero-order block of the second variation: -(R(., q')q' + sigma H^V)
        Mat Z = Mat::Zero(dim, dim);
        if (dim > 1) Z -= curvature_along(model, mid, qp);
        if (!opts.zero_potential) {
            Mat h2 = model.potential_second_partials(mid);
            for (int a = 0; a < dim; ++a) h2 -= gamma[a] * dV[a];
            HV = 0.5 * (h2 + h2.transpose());
            Z -= sg * HV;
        }

        const Mat S00 = wk * (B0.transpose() * G * B0);
        const Mat S01 = wk * (B0.transpose() * G * B1);
        const Mat S11 = wk * (B1.transpose() * G * B1);
        const Mat ZQ = 0.25 * wp * Z;      // phi_mid psi_mid coupling
        const Mat MQ = 0.25 * wp * G;      // mass value part

        auto scatter = [&](SymBanded& m, int na, int nb, const Mat& blk) {
            const bool a_in = na > 0 && na < g.node_count() - 1;
            const bool b_in = nb > 0 && nb < g.node_count() - 1;
            if (!a_in || !b_in) return;
            const int ba = dof_base(na), bb = dof_base(nb);
            for (int i = 0; i < dim; ++i)
                for (int j = 0; j < dim; ++j) {
                    const int gi = ba + i, gj = bb + j;
                    if (gi >= gj) m.add(gi, gj, blk(i, j));
                }
        };
        // hessian = stiffness + zero-order; mass = stiffness-structure + value
        scatter(out.ops.hessian, i0, i0, S00 + ZQ);
        scatter(out.ops.hessian, i1, i1, S11 + ZQ);
        scatter(out.ops.hessian, i1, i0, (S01 + ZQ).transpose());
        scatter(out.ops.mass, i0, i0, S00 + MQ);
        scatter(out.ops.mass, i1, i1, S11 + MQ);
        scatter(out.ops.mass, i1, i0, (S01 + MQ).transpose());
    }
    return out;
}

double action(const ManifoldModel& model, const TimeFactor& tf, const DiscreteCurve& q) {
    AssembleOptions o;
    o.with_hessian = false;
    return assemble(model, tf, q, o).value;
}

GradientResult gradient(const ManifoldModel& model, const TimeFactor& tf,
                        const DiscreteCurve& q) {
    const ActionDerivatives d = assemble(model, tf, q);
    GradientResult out;
    out.dual_vector = d.gradient_dofs;
    const BandedCholesky mass(d.ops.mass);
    const Eigen::VectorXd riesz = mass.solve(d.gradient_dofs);
    out.dual_norm = std::sqrt(std::max(0.0, riesz.dot(d.gradient_dofs)));
    out.field = unstack_interior(q, riesz);
    return out;
}

HessianPair hessian(const ManifoldModel& model, const TimeFactor& tf, const DiscreteCurve& q) {
    return assemble(model, tf, q).ops;
}

double coercivity_gamma(const HessianPair& ops) {
    return sym_banded_gen_eig(ops.hessian, ops.mass, false).value;
}

GenEigPair coercivity_pair(const HessianPair& ops) {
    return sym_banded_gen_eig(ops.hessian, ops.mass, false);
}

SymBanded derivative_gram(const ManifoldModel& model, const TimeFactor& tf,
                          const DiscreteCurve& q) {
    (void)tf;
    const WindowGrid& g = *q.grid;
    const int dim = model.dim();
    const int ndof = (g.node_count() - 2) * dim;
    SymBanded out(ndof, 2 * dim - 1);
    auto dof_base = [&](int node) { return (node - 1) * dim; };
    for (int c = 0; c < g.cells(); ++c) {
        const Vec mid = 0.5 * (q.points[c] + q.points[c + 1]);
        const Vec qp = (q.points[c + 1] - q.points[c]) / g.cell_h[c];
        const Mat G = model.metric(mid);
        const std::vector<Mat> gamma = christoffel(model, mid);
        Mat W = Mat::Zero(dim, dim);
        for (int a = 0; a < dim; ++a)
            for (int k = 0; k < dim; ++k) W(a, k) = qp.dot(gamma[a].col(k));
        const Mat B0 = -Mat::Identity(dim, dim) / g.cell_h[c] + 0.5 * W;
        const Mat B1 = Mat::Identity(dim, dim) / g.cell_h[c] + 0.5 * W;
        const double w = g.cell_h[c] * g.cell_h[c] / g.cell_int_rinv[c];
        auto scatter = [&](int na, int nb, const Mat& blk) {
            const bool a_in = na > 0 && na < g.node_count() - 1;
            const bool b_in = nb > 0 && nb < g.node_count() - 1;
            if (!a_in || !b_in) return;
            const int ba = dof_base(na), bb = dof_base(nb);
            for (int i = 0; i < dim; ++i)
                for (int j = 0; j < dim; ++j)
                    if (ba + i >= bb + j) out.add(ba + i, bb + j, blk(i, j));
        };
        scatter(c, c, w * (B0.transpose() * G * B0));
        scatter(c + 1, c + 1, w * (B1.transpose() * G * B1));
        scatter(c + 1, c, (w * (B0.transpose() * G * B1)).transpose());
    }
    return out;
}

DiscreteCurve prolong(const DiscreteCurve& q, std::shared_ptr<const WindowGrid> new_grid) {
    const WindowGrid& oldg = *q.grid;
    const WindowGrid& newg = *new_grid;
    if (newg.xi_k < oldg.xi_k) throw std::invalid_argument("prolong: window must not shrink");
    DiscreteCurve out;
    out.grid = std::move(new_grid);
    out.x_minus = q.x_minus;
    out.x_plus = q.x_plus;
    out.points.reserve(newg.node_count());
    const double tol = 1e-13 * (1.0 + oldg.xi_k);
    for (int i = 0; i < newg.node_count(); ++i) {
        const double xi = newg.nodes[i];
        if (xi <= -oldg.xi_k + tol && xi < 0) {
            out.points.push_back(xi < -oldg.xi_k + tol && std::abs(xi + oldg.xi_k) < tol
                                     ? q.points.front()
                                     : q.x_minus);
            continue;
        }
        if (xi >= oldg.xi_k - tol && xi > 0) {
            out.points.push_back(std::abs(xi - oldg.xi_k) < tol ? q.points.back() : q.x_plus);
            continue;
        }
        // interpolate within the old grid (chart-linear = short geodesic)
        const auto it = std::upper_bound(oldg.nodes.data(),
                                         oldg.nodes.data() + oldg.node_count(), xi);
        int j = static_cast<int>(it - oldg.nodes.data()) - 1;
        j = std::min(std::max(j, 0), oldg.node_count() - 2);
        const double s = (xi - oldg.nodes[j]) / (oldg.nodes[j + 1] - oldg.nodes[j]);
        out.points.push_back((1.0 - s) * q.points[j] + s * q.points[j + 1]);
    }
    out.points.front() = q.x_minus;
    out.points.back() = q.x_plus;
    return out;
}

double curve_norm(const SymBanded& mass, const Eigen::VectorXd& dofs) {
    return std::sqrt(std::max(0.0, dofs.dot(mass.multiply(dofs))));
}

Eigen::VectorXd curve_difference_dofs(const DiscreteCurve& a, const DiscreteCurve& b) {
    const int n = a.node_count();
    const int dim = static_cast<int>(a.points[0].size());
    Eigen::VectorXd out((n - 2) * dim);
    for (int i = 1; i + 1 < n; ++i)
        out.segment((i - 1) * dim, dim) = a.points[i] - b.points[i];
    return out;
}

Eigen::VectorXd energy_per_cell(const ManifoldModel& model, const TimeFactor& tf,
                                const DiscreteCurve& q) {
    const WindowGrid& g = *q.grid;
    Eigen::VectorXd e(g.cells());
    for (int c = 0; c < g.cells(); ++c) {
        const Vec qp = (q.points[c + 1] - q.points[c]) / g.cell_h[c];
        const Vec mid = 0.5 * (q.points[c] + q.points[c + 1]);
        const double Vchi = model.potential(g.cell_mid[c] > 0.0 ? q.x_plus : q.x_minus);
        e[c] = 0.5 * qp.dot(model.metric(mid) * qp) +
               g.sigma_mid[c] * (model.potential(mid) - Vchi);
    }
    return e;
}

Eigen::VectorXd speed_per_cell(const ManifoldModel& model, const DiscreteCurve& q) {
    const WindowGrid& g = *q.grid;
    Eigen::VectorXd s(g.cells());
    for (int c = 0; c < g.cells(); ++c) {
        const Vec qp = (q.points[c + 1] - q.points[c]) / g.cell_h[c];
        const Vec mid = 0.5 * (q.points[c] + q.points[c + 1]);
        s[c] = model.norm(mid, qp);
    }
    return s;
}

double measured_entry_time(const ManifoldModel& model, const DiscreteCurve& q,
                           const Vec& x_minus, const Vec& x_plus, double R) {
    const WindowGrid& g = *q.grid;
    const int n = g.node_count();
    // first violation scanning inward from either boundary
    double entry_plus = 0.0, entry_minus = 0.0;
    for (int i = n - 1; i >= g.zero_node; --i) {
        if (chart_distance(model, q.points[i], x_plus) > R) {
            entry_plus = g.nodes[i];
            break;
        }
    }
    for (int i = 0; i <= g.zero_node; ++i) {
        if (chart_distance(model, q.points[i], x_minus) > R) {
            entry_minus = -g.nodes[i];
            break;
        }
    }
    return std::max(entry_plus, entry_minus);
}

}  // namespace orbitforge
