#include "orbitforge/timescale.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace orbitforge {

namespace {

double sgn(double x) { return (x > 0.0) - (x < 0.0); }

/// 15-point Gauss-Legendre on [a, b].
double gauss15(const std::function<double(double)>& f, double a, double b) {
    static const double xs[] = {0.0,
                                0.2011940939974345,  -0.2011940939974345,
                                0.3941513470775634,  -0.3941513470775634,
                                0.5709721726085388,  -0.5709721726085388,
                                0.7244177313601700,  -0.7244177313601700,
                                0.8482065834104272,  -0.8482065834104272,
                                0.9372733924007059,  -0.9372733924007059,
                                0.9879925180204854,  -0.9879925180204854};
    static const double ws[] = {0.2025782419255613,
                                0.1984314853271116,  0.1984314853271116,
                                0.1861610000155622,  0.1861610000155622,
                                0.1662692058169939,  0.1662692058169939,
                                0.1395706779261543,  0.1395706779261543,
                                0.1071592204671719,  0.1071592204671719,
                                0.0703660474881081,  0.0703660474881081,
                                0.0307532419961173,  0.0307532419961173};
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double s = 0.0;
    for (int i = 0; i < 15; ++i) s += ws[i] * f(mid + half * xs[i]);
    return s * half;
}

}  // namespace

TimeFactor TimeFactor::power(int m) {
    if (m < 1) throw std::invalid_argument("make_power: m must be a positive integer");
    TimeFactor tf;
    tf.m_ = m;
    tf.alpha_ = std::pow(0.5 * (m + 2), 2.0 / (m + 2));
    tf.t0_ = 0.0;
    tf.f_ = [m](double t) { return std::pow(t, m); };
    tf.fp_ = [m](double t) { return m * std::pow(t, m - 1); };
    tf.fpp_ = [m](double t) { return m * (m - 1) * (m >= 2 ? std::pow(t, m - 2) : 0.0); };
    return tf;
}

double TimeFactor::r(double xi) const {
    const double a = std::abs(xi);
    if (is_power()) {
        const double beta = static_cast<double>(m_) / (m_ + 2);
        return std::pow(0.5 * (m_ + 2) * a, beta);
    }
    return std::sqrt(std::abs(f_(t_of_xi(xi))));
}

double TimeFactor::sigma(double xi) const {
    if (is_power()) {
        if (m_ % 2 == 0) return 1.0;
        return xi >= 0.0 ? 1.0 : -1.0;
    }
    const double fv = f_(t_of_xi(xi));
    return fv >= 0.0 ? 1.0 : -1.0;
}

double TimeFactor::p(double xi) const {
    if (xi == 0.0) throw std::domain_error("p(xi) undefined at xi = 0");
    if (is_power()) return static_cast<double>(m_) / (m_ + 2) / xi;
    // r'/r = sigma f' / (2 |f|^{3/2}), evaluated at t(xi)
    const double t = t_of_xi(xi);
    const double fv = f_(t);
    return sgn(fv) * fp_(t) / (2.0 * std::pow(std::abs(fv), 1.5));
}

double TimeFactor::g_signed(double xi) const {
    if (is_power()) return sgn(xi) * alpha_ * std::pow(std::abs(xi), 2.0 / (m_ + 2));
    return t_of_xi(xi) - t0_;
}

double TimeFactor::g_inverse(double y) const {
    if (y < 0.0) throw std::domain_error("g_inverse: negative argument");
    if (is_power()) return std::pow(y / alpha_, 0.5 * (m_ + 2));
    // invert g on xi >= 0 by bisection on the monotone table-backed g
    if (y == 0.0) return 0.0;
    double lo = 0.0, hi = pos_.xi.back();
    if (y > g_signed(hi)) throw std::domain_error("g_inverse: outside table span");
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (g_signed(mid) < y)
            lo = mid;
        else
            hi = mid;
        if (hi - lo < 1e-14 * (1.0 + hi)) break;
    }
    return 0.5 * (lo + hi);
}

double TimeFactor::t_of_xi(double xi) const {
    if (is_power()) return t0_ + g_signed(xi);
    return custom_t_of_xi(xi);
}

double TimeFactor::xi_of_t(double t) const {
    if (is_power()) {
        const double u = t - t0_;
        return sgn(u) * 2.0 / (m_ + 2) * std::pow(std::abs(u), 0.5 * (m_ + 2));
    }
    const Side& side = (t >= t0_) ? pos_ : neg_;
    const double target = t;
    // locate panel containing t, then integrate the partial panel
    auto cmp_pos = [](double a, double b) { return a < b; };
    size_t j = 1;
    if (t >= t0_) {
        const auto it = std::lower_bound(side.t.begin(), side.t.end(), target, cmp_pos);
        j = std::max<size_t>(1, it - side.t.begin());
    } else {
        // neg side t decreases along the table
        size_t k = 1;
        while (k < side.t.size() && side.t[k] > target) ++k;
        j = std::min(k, side.t.size() - 1);
    }
    auto sqrtf = [&](double s) { return std::sqrt(std::abs(f_(s))); };
    const double lo = std::min(side.t[j - 1], t), hi = std::max(side.t[j - 1], t);
    const double partial = gauss15(sqrtf, lo, hi);
    return (t >= t0_ ? 1.0 : -1.0) * (side.xi[j - 1] + partial);
}

WeightIntegrals TimeFactor::weight_integrals(double a, double b) const {
    if (!(a < b)) throw std::invalid_argument("weight_integrals: requires a < b");
    WeightIntegrals out;
    out.int_r_inv = g_signed(b) - g_signed(a);
    if (is_power()) {
        // antiderivative of r: c (m+2)/(2(m+1)) |xi|^{2(m+1)/(m+2)}, odd-extended
        const double beta = static_cast<double>(m_) / (m_ + 2);
        const double c = std::pow(0.5 * (m_ + 2), beta);
        auto prim = [&](double x) {
            return sgn(x) * c * (m_ + 2.0) / (2.0 * (m_ + 1.0)) *
                   std::pow(std::abs(x), 2.0 * (m_ + 1) / (m_ + 2));
        };
        out.int_r = prim(b) - prim(a);
    } else {
        out.int_r = custom_int_r(a, b);
        if (a < 0.0 && b > 0.0) out.reduced_accuracy = true;
    }
    return out;
}

UpsilonResult TimeFactor::upsilon_gap(double xi, double h) const {
    if (xi <= 0.0) throw std::domain_error("upsilon_gap: xi must be positive");
    if (h < 0.0) throw std::domain_error("upsilon_gap: h must be nonnegative");
    UpsilonResult out;
    const double gx = g_signed(xi);
    if (gx < h) {
        out.no_solution = true;
        out.zeta = 0.0;
        out.gap = xi;
        return out;
    }
    out.zeta = g_inverse(gx - h);
    out.gap = xi - out.zeta;
    return out;
}

void TimeFactor::build_side(Side& side, const Fn& f, double t0, double span, int panels,
                            int direction) {
    // graded panel edges accumulating from t0: geometric refinement near the
    // zero so the |f|^{1/2} kink is resolved
    side.t.resize(panels + 1);
    side.xi.resize(panels + 1);
    side.int_absf.resize(panels + 1);
    const double grading = 2.0;  // t_j = span (j/panels)^grading
    side.t[0] = t0;
    side.xi[0] = 0.0;
    side.int_absf[0] = 0.0;
    for (int j = 1; j <= panels; ++j) {
        const double frac = std::pow(static_cast<double>(j) / panels, grading);
        side.t[j] = t0 + direction * span * frac;
        const double lo = std::min(side.t[j - 1], side.t[j]);
        const double hi = std::max(side.t[j - 1], side.t[j]);
        auto sqrtf = [&](double t) { return std::sqrt(std::abs(f(t))); };
        auto absf = [&](double t) { return std::abs(f(t)); };
        side.xi[j] = side.xi[j - 1] + gauss15(sqrtf, lo, hi);
        side.int_absf[j] = side.int_absf[j - 1] + gauss15(absf, lo, hi);
    }
}

TimeFactor TimeFactor::custom(Fn f, Fn fprime, Fn fsecond, double t0, double t_span,
                              int panels_per_side) {
    TimeFactor tf;
    tf.m_ = 0;
    tf.t0_ = t0;
    tf.f_ = std::move(f);
    tf.fp_ = std::move(fprime);
    tf.fpp_ = std::move(fsecond);
    build_side(tf.pos_, tf.f_, t0, t_span, panels_per_side, +1);
    build_side(tf.neg_, tf.f_, t0, t_span, panels_per_side, -1);
    return tf;
}

double TimeFactor::custom_t_of_xi(double xi) const {
    const Side& side = (xi >= 0.0) ? pos_ : neg_;
    const double target = std::abs(xi);
    if (target == 0.0) return t0_;
    if (target > side.xi.back())
        throw std::domain_error("t_of_xi: xi outside tabulated span; increase t_span");
    // locate the panel, then bisect on the partial panel integral (monotone
    // in |t - t_{j-1}|)
    const auto it = std::lower_bound(side.xi.begin(), side.xi.end(), target);
    const size_t j = std::max<size_t>(1, it - side.xi.begin());
    const double ta = side.t[j - 1], tb = side.t[j];
    const double need = target - side.xi[j - 1];
    auto sqrtf = [&](double t) { return std::sqrt(std::abs(f_(t))); };
    auto partial = [&](double t) {
        const double lo = std::min(ta, t), hi = std::max(ta, t);
        return gauss15(sqrtf, lo, hi);
    };
    double lo = ta, hi = tb;  // partial(lo) = 0 <= need <= partial(hi)
    for (int iter = 0; iter < 100; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (partial(mid) < need)
            lo = mid;
        else
            hi = mid;
        if (std::abs(hi - lo) < 1e-15 * (1.0 + std::abs(mid))) break;
    }
    return 0.5 * (lo + hi);
}

double TimeFactor::custom_int_r(double a, double b) const {
    // int_a^b r dxi = int_{t(a)}^{t(b)} |f| dt
    auto cumulative = [&](double xi) {
        const Side& side = (xi >= 0.0) ? pos_ : neg_;
        const double t = custom_t_of_xi(xi);
        // locate and integrate the partial panel
        const double target = std::abs(xi);
        const auto it = std::lower_bound(side.xi.begin(), side.xi.end(), target);
        const size_t j = std::max<size_t>(1, it - side.xi.begin());
        auto absf = [&](double s) { return std::abs(f_(s)); };
        const double lo = std::min(side.t[j - 1], t), hi = std::max(side.t[j - 1], t);
        const double partial = gauss15(absf, lo, hi);
        return (xi >= 0.0 ? 1.0 : -1.0) * (side.int_absf[j - 1] + partial);
    };
    return cumulative(b) - cumulative(a);
}

AssumptionReport validate_assumptions(const TimeFactor::Fn& f, const TimeFactor::Fn& fprime,
                                      const TimeFactor::Fn& fsecond,
                                      const std::vector<double>& t_grid) {
    AssumptionReport rep;
    if (t_grid.size() < 3) {
        rep.a1.detail = "grid too small";
        return rep;
    }
    std::vector<double> t = t_grid;
    std::sort(t.begin(), t.end());
    const size_t n = t.size();

    // A1: unique zero; sign changes are refined by bisection, tangential
    // zeros (f = t^{2j}) by ternary search on local minima of |f|
    double fmax = 0.0;
    for (double tv : t) fmax = std::max(fmax, std::abs(f(tv)));
    auto push_zero = [&](double z) {
        const double span = t.back() - t.front();
        for (double e : rep.zeros)
            if (std::abs(e - z) < 1e-9 * span) return;
        rep.zeros.push_back(z);
    };
    for (size_t i = 0; i + 1 < n; ++i) {
        const double fa = f(t[i]), fb = f(t[i + 1]);
        if (fa == 0.0) push_zero(t[i]);
        if (fa * fb < 0.0) {
            double lo = t[i], hi = t[i + 1];
            for (int k = 0; k < 80; ++k) {
                const double mid = 0.5 * (lo + hi);
                if (f(lo) * f(mid) <= 0.0)
                    hi = mid;
                else
                    lo = mid;
            }
            push_zero(0.5 * (lo + hi));
        }
    }
    if (f(t.back()) == 0.0) push_zero(t.back());
    for (size_t i = 1; i + 1 < n; ++i) {
        const double fi = std::abs(f(t[i]));
        if (fi > std::abs(f(t[i - 1])) || fi > std::abs(f(t[i + 1]))) continue;
        double lo = t[i - 1], hi = t[i + 1];
        for (int k = 0; k < 200; ++k) {
            const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
            if (std::abs(f(m1)) <= std::abs(f(m2)))
                hi = m2;
            else
                lo = m1;
        }
        const double z = 0.5 * (lo + hi);
        if (std::abs(f(z)) <= 1e-10 * fmax) push_zero(z);
    }
    std::sort(rep.zeros.begin(), rep.zeros.end());
    rep.a1.passed = (rep.zeros.size() == 1);
    rep.a1.detail = rep.zeros.empty() ? "no zero of f on grid"
                  : rep.zeros.size() == 1
                      ? "unique zero at t = " + std::to_string(rep.zeros.front())
                      : std::to_string(rep.zeros.size()) + " zeros found";
    if (!rep.a1.passed && !rep.zeros.empty()) rep.a1.first_violation_t = rep.zeros[1];

    // A2: |f| grows toward both grid ends (monotone outer quarter + growth ratio)
    auto check_end = [&](bool right) {
        const size_t q = n / 4;
        bool mono = true;
        if (right) {
            for (size_t i = n - q; i + 1 < n; ++i)
                if (std::abs(f(t[i + 1])) < std::abs(f(t[i])) * (1.0 - 1e-12)) mono = false;
            return mono && std::abs(f(t[n - 1])) >= 1.2 * std::abs(f(t[n - 1 - q / 2]));
        }
        for (size_t i = 0; i + 1 < q; ++i)
            if (std::abs(f(t[i])) < std::abs(f(t[i + 1])) * (1.0 - 1e-12)) mono = false;
        return mono && std::abs(f(t[0])) >= 1.2 * std::abs(f(t[q / 2]));
    };
    const bool left_ok = check_end(false), right_ok = check_end(true);
    rep.a2.passed = left_ok && right_ok;
    rep.a2.detail = rep.a2.passed ? "|f| increasing toward both grid ends"
                                  : std::string("growth check failed at ") +
                                        (left_ok ? "right" : "left") + " end";

    // A3: f'' f < 3/2 f'^2 pointwise, with the both-vanish exemption judged
    // against the local magnitude (a global scale would let fast-growing
    // factors exempt everything)
    rep.a3.passed = true;
    for (double tv : t) {
        const double lhs = fsecond(tv) * f(tv);
        const double rhs = 1.5 * fprime(tv) * fprime(tv);
        const double tol = 1e-14 * (std::abs(lhs) + rhs + 1.0);
        if (std::abs(lhs) <= tol && rhs <= tol) {
            rep.a3_exemption_applied = true;
            continue;
        }
        if (!(lhs < rhs)) {
            rep.a3.passed = false;
            rep.a3.first_violation_t = tv;
            rep.a3.detail = "f'' f >= 3/2 f'^2 at t = " + std::to_string(tv);
            break;
        }
    }
    if (rep.a3.passed)
        rep.a3.detail = rep.a3_exemption_applied
                            ? "holds (both-vanish exemption applied where f''f and f'^2 vanish)"
                            : "holds strictly on grid";
    return rep;
}

}  // namespace orbitforge
