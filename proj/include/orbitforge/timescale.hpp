#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace orbitforge {

struct WeightIntegrals {
    double int_r = 0.0;
    double int_r_inv = 0.0;
    bool reduced_accuracy = false;
};

struct UpsilonResult {
    double gap = 0.0;   // xi - zeta(xi; h)
    double zeta = 0.0;  // g^{-1}(g(xi) - h)
    bool no_solution = false;
};

/// The reparameterized factor triple (r, sigma, p) together with the integral
/// primitives used throughout the window machinery.
///
/// Conventions: r(xi) = |f(t(xi))|^{1/2}; sigma = sign f; p = r'/r is the
/// first-order coefficient of the flux-form equations (for a power factor
/// p(xi) = m/(m+2) / xi exactly) and drives the energy law E' = -p |q'|^2.
/// The constant-coefficient comparison problems of the bounds module take
/// p/2 as their damping parameter.
///
/// g(xi) = int_0^xi r^{-1} coincides with t(xi) - t0, so r^{-1}-integrals
/// reduce to differences of the reconstructed time.
class TimeFactor {
public:
    using Fn = std::function<double(double)>;

    /// Empty factor; use the power/custom factories to get a usable one.
    TimeFactor() = default;

    /// Power-law factor f(t) = t^m with closed-form triple (m >= 1).
    static TimeFactor power(int m);

    /// Custom factor from f, f', f'' with unique zero t0. The map t(xi) is
    /// reconstructed by graded integration of xi(t) = int |f|^{1/2}.
    static TimeFactor custom(Fn f, Fn fprime, Fn fsecond, double t0, double t_span = 50.0,
                             int panels_per_side = 4096);

    bool is_power() const { return m_ > 0; }
    int power_m() const { return m_; }
    double alpha() const { return alpha_; }  // ((m+2)/2)^{2/(m+2)} (power case)

    double r(double xi) const;
    double sigma(double xi) const;
    /// p = r'/r, defined for xi != 0.
    double p(double xi) const;
    /// Signed antiderivative of r^{-1}: G(xi) = int_0^xi r^{-1}. On xi > 0
    /// this is the paper's g; G(-xi) = -g(xi) for even factors.
    double g_signed(double xi) const;
    /// g on magnitudes.
    double g(double xi) const { return g_signed(std::abs(xi)); }
    /// Inverse of g on xi >= 0.
    double g_inverse(double y) const;
    /// Reconstructed original time t(xi) = t0 + G(xi).
    double t_of_xi(double xi) const;
    /// Inverse map xi(t) = int_{t0}^t |f|^{1/2}.
    double xi_of_t(double t) const;

    /// (int_a^b r, int_a^b r^{-1}); exact antiderivatives for the power kind,
    /// table-backed for custom factors.
    WeightIntegrals weight_integrals(double a, double b) const;

    /// Upsilon(xi; h) = xi - g^{-1}(g(xi) - h) for xi > 0, h >= 0.
    UpsilonResult upsilon_gap(double xi, double h) const;

private:
    int m_ = 0;  // 0 marks custom
    double alpha_ = 0.0;
    double t0_ = 0.0;
    Fn f_, fp_, fpp_;
    // custom-factor tables over t (graded around t0): cumulative xi(t) and
    // cumulative int |f| dt, one panel set per side
    struct Side {
        std::vector<double> t;        // panel edges, from t0 outward
        std::vector<double> xi;       // cumulative int |f|^{1/2}
        std::vector<double> int_absf; // cumulative int |f|
    };
    Side pos_, neg_;

    double custom_t_of_xi(double xi) const;
    double custom_int_r(double a, double b) const;  // int r dxi = int |f| dt
    static void build_side(Side& side, const Fn& f, double t0, double span, int panels,
                           int direction);
};

struct AssumptionCheck {
    bool passed = false;
    std::string detail;
    std::optional<double> first_violation_t;
};

struct AssumptionReport {
    AssumptionCheck a1;  // unique zero
    AssumptionCheck a2;  // |f| -> infinity
    AssumptionCheck a3;  // f'' f < 3/2 f'^2
    bool a3_exemption_applied = false;  // both sides vanished somewhere (e.g. t^m at 0)
    std::vector<double> zeros;
    bool all_passed() const { return a1.passed && a2.passed && a3.passed; }
};

/// Report-style validation of assumptions A1-A3 on a sign-spanning grid.
AssumptionReport validate_assumptions(const TimeFactor::Fn& f, const TimeFactor::Fn& fprime,
                                      const TimeFactor::Fn& fsecond,
                                      const std::vector<double>& t_grid);

}  // namespace orbitforge
