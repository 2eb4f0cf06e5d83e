#include "orbitforge/newton.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace orbitforge {

KantorovichCertificate certify(double gamma_lower, double first_step_norm, double C_L,
                               double trust_radius, int rate_terms) {
    if (!(gamma_lower > 0.0)) throw std::invalid_argument("certify: gamma_lower must be positive");
    KantorovichCertificate c;
    c.a_inv_bound = 1.0 / gamma_lower;
    c.b_step = first_step_norm;
    c.C_L = C_L;
    c.trust_radius = trust_radius;
    c.l = c.a_inv_bound * c.b_step * C_L;
    if (c.l <= 0.5) {
        c.r_star = (c.l < 1e-12) ? c.b_step
                                 : (1.0 - std::sqrt(1.0 - 2.0 * c.l)) / (c.a_inv_bound * C_L);
        c.passed = c.r_star <= trust_radius;
    } else {
        c.r_star = std::numeric_limits<double>::infinity();
        c.passed = false;
    }
    if (c.l > 0.0) {
        double pw = 2.0 * c.l;
        for (int j = 0; j < rate_terms; ++j) {
            c.predicted_rates.push_back(pw * c.b_step / c.l);
            pw *= pw;
            if (pw == 0.0) break;
        }
    }
    return c;
}

NewtonStepResult newton_step(const ManifoldModel& model, const TimeFactor& tf,
                             const DiscreteCurve& q, const NewtonOptions& opts) {
    AssembleOptions ao;
    ao.zero_potential = opts.zero_potential;
    const ActionDerivatives d = assemble(model, tf, q, ao);
    NewtonStepResult out;
    try {
        const BandedCholesky chol(d.ops.hessian);
        out.step_dofs = chol.solve(-d.gradient_dofs);
    } catch (const NotPositiveDefinite&) {
        throw IndefiniteHessian(coercivity_gamma(d.ops));
    }
    out.step_norm = curve_norm(d.ops.mass, out.step_dofs);

    // per-node retraction cap; a damped step voids the certificate
    const int dim = model.dim();
    double max_node = 0.0;
    for (int i = 0; i < out.step_dofs.size(); i += dim)
        max_node = std::max(max_node, out.step_dofs.segment(i, dim).norm());
    double scale = 1.0;
    if (max_node > opts.step_cap) {
        scale = opts.step_cap / max_node;
        out.capped = true;
    }

    out.next = q;
    for (int i = 1; i + 1 < q.node_count(); ++i) {
        const Vec v = scale * out.step_dofs.segment((i - 1) * dim, dim);
        out.next.points[i] = exp_map_raw(model, q.points[i], v, opts.exp_steps);
    }
    return out;
}

SolveResult solve_window(const ManifoldModel& model, const TimeFactor& tf,
                         const DiscreteCurve& q_init, const NewtonOptions& opts) {
    AssembleOptions ao;
    ao.zero_potential = opts.zero_potential;
    SolveResult res;
    res.solution = q_init;
    std::vector<DiscreteCurve> iterates;
    iterates.push_back(q_init);

    double res0 = -1.0;
    for (int it = 0; it <= opts.max_iter; ++it) {
        const ActionDerivatives d = assemble(model, tf, res.solution, ao);
        const BandedCholesky mass(d.ops.mass);
        const Eigen::VectorXd riesz = mass.solve(d.gradient_dofs);
        const double residual = std::sqrt(std::max(0.0, riesz.dot(d.gradient_dofs)));
        const double gamma = coercivity_gamma(d.ops);
        if (it == 0) {
            res0 = residual;
            res.gamma_init = gamma;
        }

        const double tol = std::max(opts.tol_rel * res0, opts.tol_abs);
        if (residual <= tol) {
            NewtonTraceEntry e;
            e.iter = it;
            e.residual = residual;
            e.step_norm = 0.0;
            e.gamma = gamma;
            res.trace.entries.push_back(e);
            res.trace.termination = "converged";
            res.converged = true;
            res.gamma_final = gamma;
            res.residual_final = residual;
            res.iterations = it;
            break;
        }
        if (it == opts.max_iter) {
            res.trace.termination = "max-iterations";
            res.residual_final = residual;
            res.gamma_final = gamma;
            res.iterations = it;
            throw SolveFailure("solve_window: max iterations reached with residual " +
                                   std::to_string(residual),
                               res);
        }
        if (gamma <= 0.0) {
            res.trace.termination = "indefinite-hessian";
            res.gamma_final = gamma;
            res.residual_final = residual;
            throw SolveFailure("solve_window: indefinite second variation (gamma = " +
                                   std::to_string(gamma) + ")",
                               res);
        }

        Eigen::VectorXd step;
        try {
            const BandedCholesky chol(d.ops.hessian);
            step = chol.solve(-d.gradient_dofs);
        } catch (const NotPositiveDefinite&) {
            res.trace.termination = "indefinite-hessian";
            throw SolveFailure("solve_window: Cholesky failure on the Newton system", res);
        }
        const double step_norm = curve_norm(d.ops.mass, step);
        if (it == 0) res.first_step_norm = step_norm;

        const int dim = model.dim();
        double max_node = 0.0;
        for (int i = 0; i < step.size(); i += dim)
            max_node = std::max(max_node, step.segment(i, dim).norm());
        double scale = 1.0;
        if (max_node > opts.step_cap) {
            scale = opts.step_cap / max_node;
            res.trace.step_capped = true;
        }

        NewtonTraceEntry e;
        e.iter = it;
        e.residual = residual;
        e.step_norm = step_norm;
        e.gamma = gamma;
        res.trace.entries.push_back(e);
        if (res.trace.entries.size() >= 3) {
            const auto& prev = res.trace.entries[res.trace.entries.size() - 2];
            if (e.residual > prev.residual) res.trace.monotone_after_first = false;
        }

        DiscreteCurve next = res.solution;
        for (int i = 1; i + 1 < next.node_count(); ++i) {
            const Vec v = scale * step.segment((i - 1) * dim, dim);
            next.points[i] = exp_map_raw(model, res.solution.points[i], v, opts.exp_steps);
        }
        res.solution = std::move(next);
        iterates.push_back(res.solution);
    }

    // distance of each iterate to the final solution in the weighted norm
    const HessianPair ops = hessian(model, tf, res.solution);
    res.trace.dist_to_final.clear();
    for (const DiscreteCurve& qi : iterates) {
        const Eigen::VectorXd diff = curve_difference_dofs(qi, res.solution);
        res.trace.dist_to_final.push_back(curve_norm(ops.mass, diff));
    }
    return res;
}

}  // namespace orbitforge
