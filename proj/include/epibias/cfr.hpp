#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string_view>

#include "epibias/error.hpp"
#include "epibias/gamma.hpp"
#include "epibias/numerics.hpp"

namespace epibias {

enum class DelayLabel { ToDeath, ToRecovery };

/// Delay from notification to a final outcome.
struct DelaySpec {
    GammaParams dist;
    DelayLabel label = DelayLabel::ToDeath;

    static DelaySpec exponential(double mean, DelayLabel label) { return {GammaParams(1.0, 1.0 / mean), label}; }
};

struct CfrCounts {
    double notified = 0.0;   // K
    double deaths = 0.0;     // D_obs
    double recoveries = 0.0; // R_obs
    /// Observation horizon since notifications began; absent means "long".
    std::optional<double> horizon;
    double r = 0.0;
};

/// Asymptotic fraction of delayed outcomes already observed: E[exp(-r D)].
inline double pi_infinity(double r, const DelaySpec& delay)
{
    if (r <= -delay.dist.rate()) {
        throw InvalidArgument("pi_infinity: integral diverges for r <= -rate");
    }
    return laplace(delay.dist, r);
}

/*!
 * Expected observed fraction at horizon T when notifications have grown as
 * exp(r s) since time 0:
 *   pi(T) = int_0^T r e^{-r u} H(u) du / (1 - e^{-r T}),
 * which tends to pi_infinity as T grows; for r = 0 it is the average of H
 * over [0, T].
 */
inline double pi_finite(double T, double r, const DelaySpec& delay)
{
    detail::require(T >= 0.0, "pi_finite: horizon must be non-negative");
    if (T == 0.0) {
        return 0.0;
    }
    auto H = [&](double u) { return u <= 0.0 ? 0.0 : cdf(delay.dist, u); };
    if (std::abs(r * T) < 1e-10) {
        return numerics::integrate(H, 0.0, T, 1e-13) / T;
    }
    const double num = numerics::integrate([&](double u) { return r * std::exp(-r * u) * H(u); }, 0.0, T, 1e-13);
    return num / -std::expm1(-r * T);
}

struct CfrCorrection {
    double naive = 0.0;      // D_obs / K
    double factor = 0.0;     // pi(T) or pi(inf)
    double corrected = 0.0;  // clipped to [0, 1]
    double unclipped = 0.0;
    bool clipped = false;
};

/// Naive D_obs/K divided by the expected observed fraction of deaths.
inline CfrCorrection corrected_naive_cfr(const CfrCounts& counts, const DelaySpec& to_death)
{
    detail::require(counts.notified > 0.0, "corrected_naive_cfr: notified count must be positive");
    detail::require(counts.deaths >= 0.0 && counts.recoveries >= 0.0 &&
                        counts.deaths + counts.recoveries <= counts.notified,
                    "corrected_naive_cfr: inconsistent counts");
    CfrCorrection c;
    c.naive = counts.deaths / counts.notified;
    c.factor = counts.horizon ? pi_finite(*counts.horizon, counts.r, to_death) : pi_infinity(counts.r, to_death);
    if (!(c.factor > 0.0)) {
        throw Error("corrected_naive_cfr: expected observed fraction is zero");
    }
    c.unclipped = c.naive / c.factor;
    c.corrected = std::clamp(c.unclipped, 0.0, 1.0);
    c.clipped = c.corrected != c.unclipped;
    return c;
}

/// Expected value of D/(D+R): p pi / (p pi + (1-p) rho).
inline double resolved_cfr_bias(double p, double r, const DelaySpec& to_death, const DelaySpec& to_recovery)
{
    detail::require(p >= 0.0 && p <= 1.0, "resolved_cfr_bias: p must lie in [0, 1]");
    const double pi = pi_infinity(r, to_death);
    const double rho = pi_infinity(r, to_recovery);
    const double denom = p * pi + (1.0 - p) * rho;
    return denom > 0.0 ? p * pi / denom : 0.0;
}

/// Growth rate for a doubling time: ln 2 / T_d.
inline double growth_rate_from_doubling(double doubling_time)
{
    detail::require(doubling_time > 0.0, "doubling time must be positive");
    return std::log(2.0) / doubling_time;
}

} // namespace epibias
