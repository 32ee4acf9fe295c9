#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "epibias/error.hpp"
#include "epibias/exposures.hpp"
#include "epibias/gamma.hpp"
#include "epibias/numerics.hpp"

namespace epibias {

// Euler-Lotka relation 1 = R0 * E[exp(-r G)] for Gamma generation times.

/// Malthusian growth rate lambda (R0^(1/alpha) - 1).
inline double solve_r(double R0, const GammaParams& gen)
{
    detail::require(R0 > 0.0, "solve_r: R0 must be positive");
    return gen.rate() * (std::pow(R0, 1.0 / gen.shape()) - 1.0);
}

/// Reproduction number (1 + r/lambda)^alpha.
inline double solve_R0(double r, const GammaParams& gen)
{
    detail::require(r > -gen.rate(), "solve_R0: r must exceed -rate");
    return std::pow(1.0 + r / gen.rate(), gen.shape());
}

/*!
 * Growth rate for an arbitrary generation-time density by root finding on
 * g(r) = R0 * int_0^T exp(-r t) f(t) dt - 1, which is decreasing in r.
 * `support_end` is T, the end of the density's support (a finite value lets
 * discontinuous densities integrate accurately).
 *
 * The upper bracket doubles from 1 until g changes sign. When R0 < 1 the
 * lower end steps toward `lower` (the abscissa of convergence of the
 * transform) instead.
 */
inline double solve_r_numeric(double R0, const std::function<double(double)>& gen_pdf, double lower,
                              double support_end = INFINITY)
{
    detail::require(R0 > 0.0, "solve_r_numeric: R0 must be positive");
    detail::require(lower < 0.0, "solve_r_numeric: lower bound must be negative");
    detail::require(support_end > 0.0, "solve_r_numeric: support must be non-empty");
    if (R0 == 1.0) {
        return 0.0;
    }
    auto g = [&](double r) {
        auto integrand = [&](double t) {
            if (!(t > 0.0) || std::isinf(t)) {
                return 0.0;
            }
            const double f = gen_pdf(t);
            return f > 0.0 ? std::exp(std::log(f) - r * t) : 0.0;
        };
        return R0 * numerics::integrate(integrand, 0.0, support_end, 1e-14) - 1.0;
    };

    double lo = 0.0;
    double hi = 0.0;
    if (R0 > 1.0) {
        hi = 1.0;
        while (g(hi) > 0.0) {
            hi *= 2.0;
            if (hi > 1e12) {
                throw ConvergenceError("solve_r_numeric: growth rate above 1e12");
            }
        }
    }
    else {
        bool found = false;
        for (int k = 1; k <= 30 && !found; ++k) {
            lo = lower * (1.0 - std::ldexp(1.0, -k));
            found = g(lo) >= 0.0;
        }
        if (!found) {
            throw ConvergenceError("solve_r_numeric: no sign change in bracket above " + std::to_string(lower));
        }
    }
    return numerics::find_root(g, lo, hi, 1e-15).root;
}

inline double solve_r_numeric(double R0, const GammaParams& gen)
{
    return solve_r_numeric(R0, [gen](double t) { return pdf(gen, t); }, -gen.rate());
}

/// A consistent (R0, r, generation time) triple.
class GrowthLink {
  public:
    GrowthLink(double R0, const GammaParams& gen) : R0_(R0), r_(solve_r(R0, gen)), gen_(gen) {}

    static GrowthLink from_growth_rate(double r, const GammaParams& gen) { return {solve_R0(r, gen), gen}; }

    double R0() const { return R0_; }
    double r() const { return r_; }
    const GammaParams& generation() const { return gen_; }

    /// Residual of 1 = R0 * L(r); zero up to rounding by construction.
    double euler_lotka_residual() const { return R0_ * laplace(gen_, r_) - 1.0; }

  private:
    double R0_;
    double r_;
    GammaParams gen_;
};

enum class BiasSource { Backward, SerialInflation, MultipleExposure, Combined };

inline std::string_view to_string(BiasSource s)
{
    switch (s) {
    case BiasSource::Backward:
        return "Backward";
    case BiasSource::SerialInflation:
        return "SerialInflation";
    case BiasSource::MultipleExposure:
        return "MultipleExposure";
    case BiasSource::Combined:
        return "Combined";
    }
    return "?";
}

/// Growth rate given the true R0, and R0 given the true r, under a misspecified
/// generation time. Relative biases are signed fractions.
struct BiasReport {
    BiasSource source = BiasSource::Backward;
    double r_true = 0.0;
    double R0_true = 0.0;
    double r_biased = 0.0;
    double R0_biased = 0.0;
    double r_rel_bias = 0.0;
    double R0_rel_bias = 0.0;
};

namespace detail {

inline double relative(double biased, double truth)
{
    if (truth == 0.0) {
        return biased == 0.0 ? 0.0 : (biased > 0.0 ? INFINITY : -INFINITY);
    }
    return biased / truth - 1.0;
}

inline BiasReport make_report(BiasSource source, const GrowthLink& link, double r_biased, double R0_biased)
{
    BiasReport rep;
    rep.source = source;
    rep.r_true = link.r();
    rep.R0_true = link.R0();
    rep.r_biased = r_biased;
    rep.R0_biased = R0_biased;
    rep.r_rel_bias = relative(r_biased, link.r());
    rep.R0_rel_bias = relative(R0_biased, link.R0());
    return rep;
}

} // namespace detail

/// Distribution of generation times seen backwards from infectees: Gamma(alpha, lambda + r).
inline GammaParams backward_dist(const GrowthLink& link)
{
    const auto& g = link.generation();
    return {g.shape(), g.rate() + link.r()};
}

/// r_B = R0^(1/alpha) r and R0_B = (1 - (r/(lambda+r))^2)^alpha R0.
inline BiasReport backward_bias(const GrowthLink& link)
{
    const auto& g = link.generation();
    const double r = link.r();
    const double r_b = std::pow(link.R0(), 1.0 / g.shape()) * r;
    const double ratio = r / (g.rate() + r);
    const double R0_b = std::pow(1.0 - ratio * ratio, g.shape()) * link.R0();
    return detail::make_report(BiasSource::Backward, link, r_b, R0_b);
}

/// Same mean, coefficient of variation scaled by c: Gamma(alpha/c^2, lambda/c^2).
inline GammaParams inflate_variation(const GammaParams& g, double c)
{
    detail::require(c >= 1.0, "inflate_variation: c must be at least 1");
    return {g.shape() / (c * c), g.rate() / (c * c)};
}

/*!
 * Bias from using a serial-interval distribution whose cv exceeds the
 * generation time's by a factor c:
 *   r_S = (R0^(c^2/alpha) - 1) / (c^2 (R0^(1/alpha) - 1)) r,
 *   R0_S = (1 + c^2 r/lambda)^(alpha/c^2) / (1 + r/lambda)^alpha R0.
 */
inline BiasReport serial_inflation_bias(const GrowthLink& link, double c)
{
    detail::require(c >= 1.0, "serial_inflation_bias: c must be at least 1");
    const auto& g = link.generation();
    const double a = g.shape();
    const double c2 = c * c;
    const double R0 = link.R0();
    const double r = link.r();

    double r_s = r;
    if (R0 != 1.0) {
        r_s = (std::pow(R0, c2 / a) - 1.0) / (c2 * (std::pow(R0, 1.0 / a) - 1.0)) * r;
    }
    const double x = r / g.rate();
    const double R0_s = std::pow(1.0 + x * c2, a / c2) / std::pow(1.0 + x, a) * R0;
    return detail::make_report(BiasSource::SerialInflation, link, r_s, R0_s);
}

/// Bias from substituting a shortened generation-time distribution.
inline BiasReport multiple_exposure_bias(const GrowthLink& link, const GammaParams& biased_gen)
{
    return detail::make_report(BiasSource::MultipleExposure, link, solve_r(link.R0(), biased_gen),
                               solve_R0(link.r(), biased_gen));
}

/// Inputs to the three-source bias table.
struct BiasScenario {
    double R0 = 1.7;
    /// Generation time for the backward and serial-interval rows.
    GammaParams generation{3.0, 0.2};
    double serial_c = 1.026;

    /// Generation time assumed in the multiple-exposure row (serial-interval based).
    GammaParams me_generation = gamma_from_moments(15.3, 9.3);
    double me_p = 0.5;
    double me_single_fraction = 0.25;
    GammaParams me_incubation = gamma_from_moments(11.4, 8.1);
    /// When set, the single-exposure generation mean is taken as given instead
    /// of being derived from the exposure model (the reference scenario uses 12).
    std::optional<double> me_biased_mean = 12.0;

    static BiasScenario neutral()
    {
        BiasScenario s;
        s.R0 = 1.0;
        s.serial_c = 1.0;
        s.me_biased_mean = s.me_generation.mean();
        return s;
    }
};

struct BiasTable {
    std::array<BiasReport, 4> rows{};
    /// Single-exposure analysis behind the multiple-exposure row.
    double me_contact_rate = 0.0;
    SingleExposureShift me_shift;
    GammaParams me_biased_generation{1.0, 1.0};
};

/*!
 * Backward, serial-inflation and multiple-exposure rows plus their combined
 * effect, where the combined factor is the product of the three
 * (1 + relative bias) factors.
 */
inline BiasTable bias_table(const BiasScenario& s)
{
    BiasTable t;
    const GrowthLink link(s.R0, s.generation);
    t.rows[0] = backward_bias(link);
    t.rows[1] = serial_inflation_bias(link, s.serial_c);

    const GrowthLink me_link(s.R0, s.me_generation);
    ExposureModel model;
    model.p = s.me_p;
    model.incubation = s.me_incubation;
    model.contact_rate = calibrate_contact_rate(s.me_p, s.me_single_fraction, s.me_incubation);
    t.me_contact_rate = model.contact_rate;
    t.me_shift = single_exposure_shift(model, s.me_generation);
    t.me_biased_generation = s.me_biased_mean ? gamma_from_moments(*s.me_biased_mean, s.me_generation.sd())
                                              : t.me_shift.biased_generation;
    t.rows[2] = multiple_exposure_bias(me_link, t.me_biased_generation);

    double r_factor = 1.0;
    double R0_factor = 1.0;
    for (int i = 0; i < 3; ++i) {
        r_factor *= 1.0 + t.rows[i].r_rel_bias;
        R0_factor *= 1.0 + t.rows[i].R0_rel_bias;
    }
    auto& combined = t.rows[3];
    combined.source = BiasSource::Combined;
    combined.r_true = link.r();
    combined.R0_true = link.R0();
    combined.r_rel_bias = r_factor - 1.0;
    combined.R0_rel_bias = R0_factor - 1.0;
    combined.r_biased = link.r() * r_factor;
    combined.R0_biased = link.R0() * R0_factor;
    return t;
}

} // namespace epibias
