#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "epibias/error.hpp"
#include "epibias/random.hpp"

namespace epibias {

/*!
 * Gamma distribution in shape/rate form: density
 * lambda^alpha t^(alpha-1) e^(-lambda t) / Gamma(alpha), mean alpha/lambda.
 *
 * Every duration in the toolkit (generation time, latent and infectious
 * periods, incubation, notification-to-outcome delays) is one of these.
 */
class GammaParams {
  public:
    GammaParams(double shape, double rate) : shape_(shape), rate_(rate)
    {
        detail::require(std::isfinite(shape) && shape > 0.0, "GammaParams: shape must be positive, got " + std::to_string(shape));
        detail::require(std::isfinite(rate) && rate > 0.0, "GammaParams: rate must be positive, got " + std::to_string(rate));
    }

    static GammaParams from_shape_scale(double shape, double scale)
    {
        detail::require(scale > 0.0, "GammaParams: scale must be positive");
        return {shape, 1.0 / scale};
    }

    double shape() const { return shape_; }
    double rate() const { return rate_; }
    double scale() const { return 1.0 / rate_; }
    double mean() const { return shape_ / rate_; }
    double variance() const { return shape_ / (rate_ * rate_); }
    double sd() const { return std::sqrt(shape_) / rate_; }
    double cv() const { return 1.0 / std::sqrt(shape_); }

    friend bool operator==(const GammaParams&, const GammaParams&) = default;

  private:
    double shape_;
    double rate_;
};

/// Gamma with the requested mean and standard deviation (alpha = m^2/s^2, lambda = m/s^2).
inline GammaParams gamma_from_moments(double mean, double sd)
{
    detail::require(std::isfinite(mean) && mean > 0.0, "gamma_from_moments: mean must be positive");
    detail::require(std::isfinite(sd) && sd > 0.0, "gamma_from_moments: sd must be positive");
    const double var = sd * sd;
    return {mean * mean / var, mean / var};
}

inline double log_pdf(const GammaParams& g, double t)
{
    detail::require(t >= 0.0, "gamma pdf: t must be non-negative");
    const double a = g.shape();
    const double l = g.rate();
    if (t == 0.0) {
        if (a < 1.0) {
            return INFINITY;
        }
        if (a > 1.0) {
            return -INFINITY;
        }
        return std::log(l);
    }
    return a * std::log(l) - std::lgamma(a) + (a - 1.0) * std::log(t) - l * t;
}

inline double pdf(const GammaParams& g, double t)
{
    return std::exp(log_pdf(g, t));
}

inline double cdf(const GammaParams& g, double t)
{
    detail::require(t >= 0.0, "gamma cdf: t must be non-negative");
    if (t == 0.0) {
        return 0.0;
    }
    if (std::isinf(t)) {
        return 1.0;
    }
    return boost::math::gamma_p(g.shape(), g.rate() * t);
}

/// Smallest t with cdf(t) >= p.
inline double quantile(const GammaParams& g, double p)
{
    detail::require(p >= 0.0 && p < 1.0, "gamma quantile: p must lie in [0, 1)");
    return boost::math::gamma_p_inv(g.shape(), p) / g.rate();
}

/*!
 * Laplace transform E[exp(-r T)] = (lambda / (lambda + r))^alpha.
 *
 * Equals 1/R0 at the Malthusian r of a generation-time distribution and the
 * asymptotic observed fraction of events delayed by T under growth rate r.
 */
inline double laplace(const GammaParams& g, double r)
{
    detail::require(r > -g.rate(), "laplace: r must exceed -rate for the transform to converge");
    return std::pow(g.rate() / (g.rate() + r), g.shape());
}

/*!
 * Draw from Gamma(shape, rate) using Marsaglia & Tsang's squeeze method.
 * For shape < 1 a Gamma(shape + 1) draw is scaled by U^(1/shape).
 */
inline double sample(const GammaParams& g, RandomStream& rng)
{
    const double a = g.shape();
    const double boost_shape = a < 1.0 ? a + 1.0 : a;
    const double d = boost_shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    double x = 0.0;
    for (;;) {
        double z = 0.0;
        double v = 0.0;
        do {
            z = rng.normal();
            v = 1.0 + c * z;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.uniform();
        const double z2 = z * z;
        if (u < 1.0 - 0.0331 * z2 * z2 || std::log(u) < 0.5 * z2 + d * (1.0 - v + std::log(v))) {
            x = d * v;
            break;
        }
    }
    if (a < 1.0) {
        x *= std::pow(rng.uniform(), 1.0 / a);
    }
    return x / g.rate();
}

/// Daily delay probabilities p(1..horizon); probs()[0] holds day 1.
class DiscreteDelay {
  public:
    explicit DiscreteDelay(std::vector<double> probs) : probs_(std::move(probs))
    {
        detail::require(!probs_.empty(), "DiscreteDelay: horizon must be at least one day");
        double total = 0.0;
        for (double p : probs_) {
            detail::require(p >= 0.0 && std::isfinite(p), "DiscreteDelay: probabilities must be non-negative");
            total += p;
        }
        detail::require(std::abs(total - 1.0) <= 1e-12, "DiscreteDelay: probabilities must sum to one");
    }

    std::size_t horizon() const { return probs_.size(); }
    const std::vector<double>& probs() const { return probs_; }

    /// p(s) for lag s in days; zero outside 1..horizon.
    double at(std::size_t lag) const { return lag >= 1 && lag <= probs_.size() ? probs_[lag - 1] : 0.0; }

    double mean() const
    {
        double m = 0.0;
        for (std::size_t s = 1; s <= probs_.size(); ++s) {
            m += static_cast<double>(s) * probs_[s - 1];
        }
        return m;
    }

  private:
    std::vector<double> probs_;
};

enum class Discretization {
    /// p(s) proportional to F(s) - F(s-1): the delay rounded up to whole days.
    UnitInterval,
    /// p(s) proportional to the integral of (1 - |t - s|) f(t) over [s-1, s+1]:
    /// the day-index difference of two events whose start time is uniform
    /// within its day. Preserves the continuous mean; mass at lag 0 is dropped.
    DayDifference,
};

namespace detail {

inline std::vector<double> normalized(std::vector<double> w)
{
    double total = 0.0;
    for (double x : w) {
        total += x;
    }
    for (double& x : w) {
        x /= total;
    }
    // Absorb the last rounding residue so the sum is 1 to machine precision.
    double resum = 0.0;
    for (double x : w) {
        resum += x;
    }
    w.back() = std::max(0.0, w.back() + (1.0 - resum));
    return w;
}

// Integral of t f(t) over [0, x] for a Gamma: (alpha / lambda) P(alpha + 1, lambda x).
inline double partial_first_moment(const GammaParams& g, double x)
{
    if (x <= 0.0) {
        return 0.0;
    }
    return g.mean() * boost::math::gamma_p(g.shape() + 1.0, g.rate() * x);
}

} // namespace detail

/*!
 * Discretize a Gamma delay to daily probabilities over lags 1..horizon.
 * Rejects horizons that leave more than 0.1% of the mass beyond them.
 */
inline DiscreteDelay discretize(const GammaParams& g, std::size_t horizon, Discretization scheme = Discretization::UnitInterval)
{
    detail::require(horizon >= 1, "discretize: horizon must be at least one day");
    detail::require(cdf(g, static_cast<double>(horizon)) >= 0.999,
                    "discretize: horizon " + std::to_string(horizon) + " truncates more than 0.1% of the mass");

    std::vector<double> w(horizon, 0.0);
    if (scheme == Discretization::UnitInterval) {
        double prev = 0.0;
        for (std::size_t s = 1; s <= horizon; ++s) {
            const double cur = cdf(g, static_cast<double>(s));
            w[s - 1] = cur - prev;
            prev = cur;
        }
    }
    else {
        // Mass on [a, b] weighted by the triangular kernel centred at s, via F and
        // the partial first moment M: int (t - a) f = M(b) - M(a) - a (F(b) - F(a)).
        auto F = [&](double x) { return x <= 0.0 ? 0.0 : cdf(g, x); };
        auto M = [&](double x) { return detail::partial_first_moment(g, x); };
        for (std::size_t s = 1; s <= horizon; ++s) {
            const double c = static_cast<double>(s);
            const double rising = (M(c) - M(c - 1.0)) - (c - 1.0) * (F(c) - F(c - 1.0));
            const double falling = (c + 1.0) * (F(c + 1.0) - F(c)) - (M(c + 1.0) - M(c));
            w[s - 1] = std::max(0.0, rising + falling);
        }
    }
    return DiscreteDelay(detail::normalized(std::move(w)));
}

/// Shortest horizon whose upper tail mass is below `tail`.
inline std::size_t horizon_for(const GammaParams& g, double tail = 1e-6)
{
    return static_cast<std::size_t>(std::ceil(quantile(g, 1.0 - tail))) + 1;
}

} // namespace epibias
