#include "orbitforge/bounds.hpp"

#include <cmath>

namespace orbitforge {

namespace {

double log_sinh(double x) {
    // log(sinh x) for x > 0 without overflow
    if (x < 1e-8) return std::log(x);
    return x + std::log1p(-std::exp(-2.0 * x)) - std::log(2.0);
}

double clip_gamma(double gamma) {
    if (gamma >= 1.0) return 1.0 - 1e-6;
    return gamma;
}

}  // namespace

double comparison_solution(double p_const, double lambda, double a, double b, double xi) {
    if (!(b > a)) throw std::invalid_argument("comparison_solution: requires b > a");
    if (!(lambda > 0.0)) throw std::invalid_argument("comparison_solution: lambda > 0");
    if (p_const < 0.0) throw std::invalid_argument("comparison_solution: p_const >= 0");
    const double omega = std::sqrt(lambda * lambda + p_const * p_const);
    const double z = b - xi, Z = b - a;
    if (z <= 0.0) return 0.0;
    const double lv = p_const * z + log_sinh(omega * z) - (p_const * Z + log_sinh(omega * Z));
    return std::exp(lv);
}

double decay_bound(double lambda, double R_lambda, double a, double b) {
    if (!(b > a)) throw std::invalid_argument("decay_bound: requires b > a");
    const double x = lambda * (b - a);
    if (x < 1e-8) return R_lambda / (b - a);
    return lambda * R_lambda * std::exp(-log_sinh(x));
}

double gradient_bound_bk(const TimeFactor& tf, double xi_k, double xi_hat, double lambda,
                         double R_lambda, double xi_next) {
    if (!(xi_next >= xi_k) || !(xi_k > xi_hat))
        throw std::invalid_argument("gradient_bound_bk: requires xi_next >= xi_k > xi_hat");
    const double pref = std::sqrt(tf.r(xi_k)) + std::sqrt(tf.r(-xi_k));
    return pref * decay_bound(lambda, R_lambda, xi_hat, xi_k) * std::sqrt(xi_next - xi_k);
}

double sinh_sq_over_y(double y) {
    if (y <= 0.0) throw std::domain_error("F(y) requires y > 0");
    if (y < 1e-6) return y;  // sinh^2(y)/y -> y
    return std::exp(2.0 * log_sinh(y) - std::log(y));
}

double power_Cb(double lambda, double R_lambda, double alpha, double h_star) {
    return 2.0 * std::sqrt(lambda) * R_lambda * alpha / h_star;
}

double gradient_bound_bk_power(const TimeFactor& tf, double xi_k, double eps_k, double lambda,
                               double R_lambda, double h_star) {
    if (!tf.is_power()) throw std::invalid_argument("power bound requires a power factor");
    const int m = tf.power_m();
    const double y = lambda / tf.alpha() * h_star * std::pow(xi_k, double(m) / (m + 2));
    return power_Cb(lambda, R_lambda, tf.alpha(), h_star) * std::sqrt(eps_k / sinh_sq_over_y(y));
}

double coercivity_loss_Delta(const TimeFactor& tf, double xi_k, double xi_hat, double mu,
                             double gamma_k, double xi_next) {
    if (!(mu > 0.0)) throw std::invalid_argument("coercivity_loss_Delta: mu > 0 required");
    if (!(gamma_k > 0.0)) throw std::invalid_argument("coercivity_loss_Delta: gamma_k > 0");
    if (!(xi_next >= xi_k) || !(xi_k > xi_hat))
        throw std::invalid_argument("coercivity_loss_Delta: ordering violated");
    if (xi_next == xi_k) return 0.0;
    const double g = clip_gamma(gamma_k);
    const double s = std::exp(log_sinh(mu * (xi_k - xi_hat)));
    const WeightIntegrals plus_inv = tf.weight_integrals(xi_hat, xi_next);
    const WeightIntegrals plus_r = tf.weight_integrals(xi_k, xi_next);
    const WeightIntegrals minus_inv = tf.weight_integrals(-xi_next, -xi_hat);
    const WeightIntegrals minus_r = tf.weight_integrals(-xi_next, -xi_k);
    const double sum = plus_inv.int_r_inv * plus_r.int_r + minus_inv.int_r_inv * minus_r.int_r;
    return (1.0 - g) * mu * mu / (s * s) * sum;
}

double power_CDelta(int m, double mu, double alpha, double h_star) {
    const double e = 2.0 * (m + 1) / (m + 2);
    return (1.0 + alpha / h_star) * mu * alpha * std::pow(0.5 * (m + 2), e) / (m + 1) *
           (std::pow(2.0, e) - 1.0);
}

double coercivity_loss_Delta_power(const TimeFactor& tf, double xi_k, double eps_k, double mu,
                                   double gamma_k, double h_star) {
    if (!tf.is_power()) throw std::invalid_argument("power bound requires a power factor");
    const int m = tf.power_m();
    const double g = clip_gamma(gamma_k);
    const double y = mu / tf.alpha() * h_star * std::pow(xi_k, double(m) / (m + 2));
    return power_CDelta(m, mu, tf.alpha(), h_star) * (1.0 - g) * eps_k / sinh_sq_over_y(y);
}

std::optional<double> mu_condition(double K_max, double lambda, double nu, double R_lambda,
                                   double gap) {
    if (!(gap > 0.0)) throw std::invalid_argument("mu_condition: gap > 0 required");
    if (K_max <= 0.0) return lambda;  // non-positive curvature case
    const double c = 1.0 / std::tanh(nu * gap);
    const double mu2 = lambda * lambda -
                       K_max * (nu * nu * c * c + (nu * nu - lambda * lambda)) * R_lambda * R_lambda;
    if (mu2 <= 0.0) return std::nullopt;
    return std::sqrt(mu2);
}

EntryTimeBound entry_time_bound(const TimeFactor& tf, double xi_k, double R_lambda,
                                double I_hat, double L_k) {
    if (!(I_hat > 0.0)) throw std::invalid_argument("entry_time_bound: I_hat > 0 required");
    EntryTimeBound out;
    out.eta = tf.weight_integrals(-xi_k, xi_k).int_r_inv;
    if (!(out.eta > 0.0)) throw std::invalid_argument("entry_time_bound: eta > 0 required");
    const double A = 2.0 * I_hat;
    const double B = 2.0 * I_hat * out.eta - L_k * L_k;
    const double C = R_lambda * R_lambda * out.eta;
    const double disc = B * B - 4.0 * A * C;
    if (disc < 0.0 || B <= 0.0) {
        // no positive root: the distance estimate never reaches R_lambda,
        // only the vacuous bound xi_hat <= xi_k is available
        out.valid = false;
        out.zeta = xi_k;
        out.zeta_plus = out.zeta_minus = xi_k;
        return out;
    }
    out.h_k = 2.0 * C / (B + std::sqrt(disc));
    // solve +-int_{+-zeta}^{+-xi_k} r^{-1} = h_k via the signed antiderivative;
    // when the window's budget is below h_k the bound holds from 0 (Lemma 9
    // remark) and zeta is set to 0
    {
        const double budget_plus = tf.g_signed(xi_k);
        out.zeta_plus =
            budget_plus < out.h_k ? 0.0 : tf.g_inverse(budget_plus - out.h_k);
        const double budget_minus = -tf.g_signed(-xi_k);
        if (budget_minus < out.h_k) {
            out.zeta_minus = 0.0;
        } else {
            // G(-zeta) = G(-xi_k) + h_k with G increasing; bisect on [-xi_k, 0]
            const double target = tf.g_signed(-xi_k) + out.h_k;
            double lo = -xi_k, hi = 0.0;
            for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + xi_k); ++it) {
                const double mid = 0.5 * (lo + hi);
                if (tf.g_signed(mid) < target)
                    lo = mid;
                else
                    hi = mid;
            }
            out.zeta_minus = -0.5 * (lo + hi);
        }
    }
    out.zeta = std::max(out.zeta_plus, out.zeta_minus);
    return out;
}

double action_decrease(const TimeFactor& tf, double xi_k, double xi_hat, double nu,
                       double R_lambda, double xi_next) {
    if (!(xi_next > xi_k)) return 0.0;
    const double s = std::exp(log_sinh(nu * (xi_k - xi_hat)));
    return R_lambda * R_lambda * nu * nu / (2.0 * s * s) *
           tf.weight_integrals(xi_k, xi_next).int_r;
}

double embedding_constant_Cr(const ManifoldModel& model, const TimeFactor& tf,
                             const DiscreteCurve& q) {
    // assemble the unweighted Gram form with the same covariant structure by
    // dividing each cell's weight out; reuse the weighted assembly cellwise
    const WindowGrid& g = *q.grid;
    const int dim = model.dim();
    const int ndof = (g.node_count() - 2) * dim;
    const int kd = 2 * dim - 1;
    SymBanded m1(ndof, kd), mr(ndof, kd);
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
        auto scatter = [&](SymBanded& m, int na, int nb, const Mat& blk) {
            const bool a_in = na > 0 && na < g.node_count() - 1;
            const bool b_in = nb > 0 && nb < g.node_count() - 1;
            if (!a_in || !b_in) return;
            const int ba = dof_base(na), bb = dof_base(nb);
            for (int i = 0; i < dim; ++i)
                for (int j = 0; j < dim; ++j)
                    if (ba + i >= bb + j) m.add(ba + i, bb + j, blk(i, j));
        };
        for (int pass = 0; pass < 2; ++pass) {
            SymBanded& m = pass == 0 ? m1 : mr;
            const double h = g.cell_h[c];
            const double wk = pass == 0 ? h : h * h / g.cell_int_rinv[c];
            const double wv = pass == 0 ? h : g.cell_int_r[c];
            const Mat S00 = wk * (B0.transpose() * G * B0) + 0.25 * wv * G;
            const Mat S01 = wk * (B0.transpose() * G * B1) + 0.25 * wv * G;
            const Mat S11 = wk * (B1.transpose() * G * B1) + 0.25 * wv * G;
            scatter(m, c, c, S00);
            scatter(m, c + 1, c + 1, S11);
            scatter(m, c + 1, c, S01.transpose());
        }
    }
    const GenEigPair top = sym_banded_gen_eig(m1, mr, true);
    return std::sqrt(std::max(0.0, top.value));
}

LipschitzData lipschitz_CL(const LocalizedBallScan& scan, double C_r, double J_k,
                           double R_ball) {
    LipschitzData out;
    out.C_r = C_r;
    out.J_k = J_k;
    out.R_ball = R_ball;
    out.C_L = 2.0 * (1.0 +
                     (scan.C_g * scan.C_g + scan.C_K) * C_r * C_r * (J_k + 0.5 * R_ball * R_ball) +
                     0.25 * scan.C_V * C_r * C_r);
    return out;
}

double power_gap_bound(const TimeFactor& tf, double h_star, double xi_k) {
    if (!tf.is_power()) throw std::invalid_argument("power_gap_bound requires a power factor");
    const int m = tf.power_m();
    const double threshold = std::pow(h_star / tf.alpha(), 0.5 * (m + 2));
    if (xi_k <= threshold) return xi_k;
    return h_star / tf.alpha() * std::pow(xi_k, double(m) / (m + 2));
}

}  // namespace orbitforge
