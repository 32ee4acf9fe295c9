#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "epibias/error.hpp"
#include "epibias/gamma.hpp"
#include "epibias/numerics.hpp"
#include "epibias/random.hpp"
#include "epibias/summary.hpp"

namespace epibias {

/// One contact-traced case: exposure times e_1 <= ... <= e_k and symptom onset s > e_k.
struct ExposureHistory {
    std::vector<double> exposures;
    double symptom_time = 0.0;

    std::size_t contacts() const { return exposures.size(); }
};

inline void validate(const ExposureHistory& h)
{
    detail::require(!h.exposures.empty(), "ExposureHistory: at least one exposure required");
    detail::require(std::is_sorted(h.exposures.begin(), h.exposures.end()),
                    "ExposureHistory: exposure times must be non-decreasing");
    detail::require(h.exposures.back() < h.symptom_time, "ExposureHistory: symptom onset must follow every exposure");
}

/// Constant-rate contact process with per-contact infection probability p.
struct ExposureModel {
    double p = 0.5;
    double contact_rate = 0.0725;
    GammaParams incubation = gamma_from_moments(11.4, 8.1);
};

/// Log-normal matched to a target mean and variance.
struct LogNormalParams {
    double mu = 0.0;
    double sigma = 1.0;

    static LogNormalParams from_moments(double mean, double variance)
    {
        detail::require(mean > 0.0 && variance > 0.0, "LogNormalParams: mean and variance must be positive");
        const double s2 = std::log1p(variance / (mean * mean));
        return {std::log(mean) - 0.5 * s2, std::sqrt(s2)};
    }

    double mean() const { return std::exp(mu + 0.5 * sigma * sigma); }
    double variance() const { return std::expm1(sigma * sigma) * std::exp(2.0 * mu + sigma * sigma); }

    double pdf(double t) const
    {
        if (t <= 0.0) {
            return 0.0;
        }
        const double z = (std::log(t) - mu) / sigma;
        return std::exp(-0.5 * z * z) / (t * sigma * std::sqrt(2.0 * M_PI));
    }

    double sample(RandomStream& rng) const { return std::exp(mu + sigma * rng.normal()); }
};

enum class IncubationFamily { Gamma, LogNormal };

/*!
 * Simulate traced histories. Per person: contacts form a Poisson process of
 * rate mu starting with a contact at t = 0; the infecting contact index is
 * Geometric(p); symptoms follow the infecting contact after an incubation
 * time T; every contact before symptom onset is recorded.
 */
inline std::vector<ExposureHistory> generate_histories(const ExposureModel& model, std::size_t n, IncubationFamily family,
                                                       std::uint64_t seed, std::uint64_t stream = 0)
{
    detail::require(n >= 1, "generate_histories: n must be at least 1");
    detail::require(model.p > 0.0 && model.p <= 1.0, "generate_histories: p must lie in (0, 1]");
    detail::require(model.contact_rate > 0.0, "generate_histories: contact rate must be positive");

    RandomStream rng(seed, stream, 0x5e1f);
    const auto lognormal = LogNormalParams::from_moments(model.incubation.mean(), model.incubation.variance());

    std::vector<ExposureHistory> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        ExposureHistory h;
        const std::uint64_t infecting = rng.geometric(model.p);
        double t = 0.0;
        h.exposures.push_back(t);
        for (std::uint64_t c = 1; c < infecting; ++c) {
            t += rng.exponential(model.contact_rate);
            h.exposures.push_back(t);
        }
        const double incubation = family == IncubationFamily::Gamma ? sample(model.incubation, rng) : lognormal.sample(rng);
        h.symptom_time = t + incubation;
        for (;;) {
            t += rng.exponential(model.contact_rate);
            if (t >= h.symptom_time) {
                break;
            }
            h.exposures.push_back(t);
        }
        out.push_back(std::move(h));
    }
    return out;
}

/*!
 * Log-likelihood of the incubation/infection part of the multiple-exposure
 * likelihood, conditioning on the number and times of exposures:
 *   sum_h log sum_{i=1..k} p (1-p)^(i-1) g(s - e_i).
 * With `normalized`, each history's term is divided by 1 - (1-p)^k.
 */
inline double conditional_log_likelihood(std::span<const ExposureHistory> histories, double p, const GammaParams& incubation,
                                         bool normalized = false)
{
    detail::require(p > 0.0 && p <= 1.0, "conditional_log_likelihood: p must lie in (0, 1]");
    double total = 0.0;
    for (const auto& h : histories) {
        double mix = 0.0;
        double weight = p;
        for (double e : h.exposures) {
            detail::require(h.symptom_time > e, "conditional_log_likelihood: exposure at or after symptom onset");
            mix += weight * pdf(incubation, h.symptom_time - e);
            weight *= 1.0 - p;
        }
        total += std::log(mix);
        if (normalized) {
            total -= std::log1p(-std::pow(1.0 - p, static_cast<double>(h.contacts())));
        }
    }
    return total;
}

struct MlFit {
    double p = 0.0;
    double mean = 0.0;
    double sd = 0.0;
    double log_likelihood = 0.0;
    int evaluations = 0;
    int starts_converged = 0;
    bool converged = false;

    GammaParams incubation() const { return gamma_from_moments(mean, sd); }
};

/// ML fit failed to converge; carries the best point found.
class MlConvergenceError : public ConvergenceError {
  public:
    MlConvergenceError(const std::string& what, MlFit best) : ConvergenceError(what), best_(best) {}
    const MlFit& best() const { return best_; }

  private:
    MlFit best_;
};

struct MlOptions {
    bool normalized = false;
    int max_iterations = 4000;
};

namespace detail {

// Pre-computed log incubation candidates so each objective evaluation costs
// one exp per exposure.
struct ExposureLikelihood {
    std::vector<double> log_gaps;
    std::vector<double> gaps;
    std::vector<std::size_t> offsets;
    bool normalized = false;

    explicit ExposureLikelihood(std::span<const ExposureHistory> histories, bool norm) : normalized(norm)
    {
        offsets.push_back(0);
        for (const auto& h : histories) {
            validate(h);
            for (double e : h.exposures) {
                gaps.push_back(h.symptom_time - e);
                log_gaps.push_back(std::log(h.symptom_time - e));
            }
            offsets.push_back(gaps.size());
        }
    }

    double operator()(double p, double shape, double rate) const
    {
        const double log_norm = shape * std::log(rate) - std::lgamma(shape);
        const double log_q = std::log1p(-p);
        double total = 0.0;
        for (std::size_t h = 0; h + 1 < offsets.size(); ++h) {
            double mix = 0.0;
            double weight = p;
            for (std::size_t j = offsets[h]; j < offsets[h + 1]; ++j) {
                mix += weight * std::exp(log_norm + (shape - 1.0) * log_gaps[j] - rate * gaps[j]);
                weight *= 1.0 - p;
            }
            total += std::log(mix);
            if (normalized) {
                const auto k = static_cast<double>(offsets[h + 1] - offsets[h]);
                total -= std::log(-std::expm1(k * log_q));
            }
        }
        return total;
    }
};

inline double logistic(double x)
{
    return 1.0 / (1.0 + std::exp(-x));
}

} // namespace detail

/*!
 * Maximum-likelihood (p, incubation mean, incubation sd) under a Gamma
 * incubation model. Optimizes in (logit p, log mean, log sd) by Nelder-Mead
 * from three deterministic starting points and keeps the best optimum.
 * logit p is capped at +/-30, so a boundary optimum at p = 1 is reported as
 * p within 1e-13 of 1.
 */
inline MlFit ml_fit(std::span<const ExposureHistory> histories, const MlOptions& options = {})
{
    detail::require(histories.size() >= 50, "ml_fit: need at least 50 histories");
    const detail::ExposureLikelihood loglik(histories, options.normalized);
    constexpr double logit_cap = 30.0;

    // Starting scale from the earliest-exposure and latest-exposure gaps, which
    // bracket the incubation mean.
    std::vector<double> first_gap;
    std::vector<double> last_gap;
    for (const auto& h : histories) {
        first_gap.push_back(h.symptom_time - h.exposures.front());
        last_gap.push_back(h.symptom_time - h.exposures.back());
    }
    const double m_hi = sample_mean(first_gap);
    const double m_lo = sample_mean(last_gap);
    const double s_hi = std::sqrt(sample_variance(first_gap));
    const double m_mid = 0.5 * (m_hi + m_lo);

    auto objective = [&](const std::array<double, 3>& x) -> double {
        const double logit = std::clamp(x[0], -logit_cap, logit_cap);
        const double p = detail::logistic(logit);
        const double mean = std::exp(x[1]);
        const double sd = std::exp(x[2]);
        const double rate = mean / (sd * sd);
        const double shape = mean * rate;
        if (!(shape > 1e-8 && shape < 1e8 && rate > 0.0)) {
            return INFINITY;
        }
        // Penalize leaving the logit box so the simplex stays on the cap.
        const double excess = std::abs(x[0]) - logit_cap;
        return -loglik(p, shape, rate) + (excess > 0.0 ? excess * excess : 0.0);
    };

    const std::array<std::array<double, 3>, 3> starts{{
        {0.0, std::log(m_mid), std::log(s_hi)},
        {std::log(0.25 / 0.75), std::log(m_lo + 0.25 * (m_hi - m_lo)), std::log(0.8 * s_hi)},
        {std::log(0.8 / 0.2), std::log(m_hi), std::log(1.2 * s_hi)},
    }};

    numerics::NelderMeadOptions nm;
    nm.max_iterations = options.max_iterations;
    nm.f_tolerance = 1e-9;
    nm.x_tolerance = 1e-7;

    MlFit best;
    best.log_likelihood = -INFINITY;
    for (const auto& start : starts) {
        // Restart once from the optimum to shake off a collapsed simplex.
        auto res = numerics::nelder_mead<3>(objective, start, nm);
        best.evaluations += res.evaluations;
        nm.initial_step = 0.1;
        auto polished = numerics::nelder_mead<3>(objective, res.x, nm);
        nm.initial_step = 0.5;
        best.evaluations += polished.evaluations;
        if (polished.value <= res.value) {
            res = polished;
        }
        const bool ok = res.converged && polished.converged;
        if (ok) {
            ++best.starts_converged;
        }
        const double ll = -res.value;
        if (ll > best.log_likelihood) {
            best.log_likelihood = ll;
            best.p = detail::logistic(std::clamp(res.x[0], -logit_cap, logit_cap));
            best.mean = std::exp(res.x[1]);
            best.sd = std::exp(res.x[2]);
            best.converged = ok;
        }
    }
    if (best.starts_converged == 0) {
        throw MlConvergenceError("ml_fit: no start converged within the iteration cap", best);
    }
    best.converged = true;
    return best;
}

/// Population moments of contact count C and first-contact-to-symptom time S.
struct ContactMoments {
    double mean_c = 0.0;
    double var_c = 0.0;
    double mean_s = 0.0;
    double var_s = 0.0;
};

/*!
 * Closed-form moments implied by (p, mu, E(T), Var(T)):
 *   E(C) = 1/p + mu E(T),  Var(C) = (1-p)/p^2 + mu E(T) + mu^2 Var(T),
 *   E(S) = (1-p)/(p mu) + E(T),
 *   Var(S) = (1-p)/(p mu^2) + (1-p)/(p^2 mu^2) + Var(T).
 */
inline ContactMoments contact_moments(double p, double mu, double mean_t, double var_t)
{
    const double q = (1.0 - p) / p;
    ContactMoments m;
    m.mean_c = 1.0 / p + mu * mean_t;
    m.var_c = (1.0 - p) / (p * p) + mu * mean_t + mu * mu * var_t;
    m.mean_s = q / mu + mean_t;
    m.var_s = q / (mu * mu) + (1.0 - p) / (p * p * mu * mu) + var_t;
    return m;
}

inline ContactMoments empirical_contact_moments(std::span<const ExposureHistory> histories)
{
    std::vector<double> c;
    std::vector<double> s;
    c.reserve(histories.size());
    s.reserve(histories.size());
    for (const auto& h : histories) {
        c.push_back(static_cast<double>(h.contacts()));
        s.push_back(h.symptom_time - h.exposures.front());
    }
    return {sample_mean(c), sample_variance(c), sample_mean(s), sample_variance(s)};
}

struct MomentFit {
    double p = 0.0;
    double contact_rate = 0.0;
    double mean_t = 0.0;
    /// May be negative in a raw solution from a noisy sample.
    double var_t = 0.0;
    /// p in (0, 1], mu > 0, E(T) > 0 and Var(T) > 0.
    bool admissible = false;
    /// Moment equations evaluated at the solution minus the input moments.
    std::array<double, 4> residuals{};

    double sd_t() const { return std::sqrt(var_t); }
};

/*!
 * Solve the four contact-moment equations for (p, mu, E(T), Var(T)) without
 * an admissibility check.
 *
 * With q = (1-p)/p the system eliminates sequentially: E(C) - 1 = q + mu E(T)
 * = mu E(S) gives mu; Var(C) - mu^2 Var(S) = mu E(T) - q then separates q and
 * E(T); Var(T) follows from Var(S).
 */
inline MomentFit solve_moment_equations(const ContactMoments& m)
{
    detail::require(m.mean_c > 1.0 && m.mean_s > 0.0, "solve_moment_equations: need E(C) > 1 and E(S) > 0");
    MomentFit fit;
    const double a = m.mean_c - 1.0;
    const double mu = a / m.mean_s;
    const double b = m.var_c - mu * mu * m.var_s;
    const double q = 0.5 * (a - b);
    fit.contact_rate = mu;
    fit.p = 1.0 / (1.0 + q);
    fit.mean_t = 0.5 * (a + b) / mu;
    fit.var_t = m.var_s - q * (2.0 + q) / (mu * mu);
    fit.admissible = q >= 0.0 && fit.mean_t > 0.0 && fit.var_t > 0.0;
    if (q > -1.0) {
        const auto back = contact_moments(fit.p, mu, fit.mean_t, fit.var_t);
        fit.residuals = {back.mean_c - m.mean_c, back.var_c - m.var_c, back.mean_s - m.mean_s, back.var_s - m.var_s};
    }
    else {
        fit.residuals.fill(NAN);
    }
    return fit;
}

/// Admissible moment estimates; throws ConvergenceError when none exists.
inline MomentFit moment_fit(const ContactMoments& m)
{
    const auto fit = solve_moment_equations(m);
    if (!fit.admissible) {
        throw ConvergenceError("moment_fit: no admissible solution (p=" + std::to_string(fit.p) +
                               ", mu=" + std::to_string(fit.contact_rate) + ", E(T)=" + std::to_string(fit.mean_t) +
                               ", Var(T)=" + std::to_string(fit.var_t) + ")");
    }
    return fit;
}

inline MomentFit moment_fit(std::span<const ExposureHistory> histories)
{
    detail::require(histories.size() >= 50, "moment_fit: need at least 50 histories");
    return moment_fit(empirical_contact_moments(histories));
}

/// Contact rate mu solving p * E[exp(-mu T)] = single_fraction.
inline double calibrate_contact_rate(double p, double single_fraction, const GammaParams& incubation)
{
    detail::require(p > 0.0 && p <= 1.0, "calibrate_contact_rate: p must lie in (0, 1]");
    detail::require(single_fraction > 0.0, "calibrate_contact_rate: single-contact fraction must be positive");
    if (single_fraction >= p) {
        throw InvalidArgument("calibrate_contact_rate: single-contact fraction must be below p (no root)");
    }
    auto residual = [&](double mu) { return p * laplace(incubation, mu) - single_fraction; };
    double hi = 1.0;
    while (residual(hi) > 0.0) {
        hi *= 2.0;
        if (hi > 1e12) {
            throw ConvergenceError("calibrate_contact_rate: failed to bracket the root");
        }
    }
    return numerics::find_root(residual, 0.0, hi, 1e-14).root;
}

struct SingleExposureShift {
    double single_fraction = 0.0;   // P(one possible infector)
    double conditional_mean = 0.0;  // E(T | one possible infector)
    double shift = 0.0;             // E(T) - conditional_mean
    GammaParams biased_generation{1.0, 1.0};
};

/*!
 * Incubation mean among cases with a single possible infector,
 * E(T e^{-mu T}) / E(e^{-mu T}) = alpha / (lambda + mu) for a Gamma, and the
 * generation-time distribution that results when its mean is shortened by
 * the same amount with the standard deviation held fixed.
 */
inline SingleExposureShift single_exposure_shift(const ExposureModel& model, const GammaParams& generation)
{
    detail::require(model.contact_rate >= 0.0, "single_exposure_shift: contact rate must be non-negative");
    const auto& inc = model.incubation;
    SingleExposureShift out;
    out.single_fraction = model.p * laplace(inc, model.contact_rate);
    out.conditional_mean = inc.shape() / (inc.rate() + model.contact_rate);
    out.shift = inc.mean() - out.conditional_mean;
    out.biased_generation = gamma_from_moments(generation.mean() - out.shift, generation.sd());
    return out;
}

/// Moment fit of incubation assuming the earliest (or latest) exposure infected.
inline GammaParams heuristic_incubation_fit(std::span<const ExposureHistory> histories, bool earliest)
{
    std::vector<double> gaps;
    gaps.reserve(histories.size());
    for (const auto& h : histories) {
        gaps.push_back(h.symptom_time - (earliest ? h.exposures.front() : h.exposures.back()));
    }
    return gamma_from_moments(sample_mean(gaps), std::sqrt(sample_variance(gaps)));
}

} // namespace epibias
