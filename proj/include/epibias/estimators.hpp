#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "epibias/error.hpp"
#include "epibias/gamma.hpp"
#include "epibias/summary.hpp"

namespace epibias {

/// Daily notification counts n(1..K), day 1 being the first notification day.
class CaseSeries {
  public:
    explicit CaseSeries(std::vector<double> daily) : daily_(std::move(daily))
    {
        double c = 0.0;
        cumulative_.reserve(daily_.size());
        for (double n : daily_) {
            detail::require(n >= 0.0 && std::isfinite(n), "CaseSeries: counts must be non-negative");
            c += n;
            cumulative_.push_back(c);
        }
    }

    std::size_t days() const { return daily_.size(); }
    /// n(day), 1-based.
    double daily(std::size_t day) const { return daily_.at(day - 1); }
    /// Cumulative count through `day`, 1-based.
    double cumulative(std::size_t day) const { return day == 0 ? 0.0 : cumulative_.at(day - 1); }
    const std::vector<double>& daily() const { return daily_; }
    const std::vector<double>& cumulative() const { return cumulative_; }

    CaseSeries prefix(std::size_t days) const
    {
        detail::require(days <= daily_.size(), "CaseSeries::prefix: beyond series end");
        return CaseSeries(std::vector<double>(daily_.begin(), daily_.begin() + static_cast<std::ptrdiff_t>(days)));
    }

  private:
    std::vector<double> daily_;
    std::vector<double> cumulative_;
};

namespace detail {

inline void require_window(const CaseSeries& s, std::size_t window, std::size_t extra = 0)
{
    require(window >= 1, "estimator window must be at least one day");
    require(window + extra <= s.days(), "estimator window exceeds the series length");
}

} // namespace detail

/// (a) OLS slope of log cumulative counts over the last `window` days.
inline double est_a_log_cumulative(const CaseSeries& s, std::size_t window = 42)
{
    detail::require_window(s, window);
    detail::require(window >= 2, "est_a: window must be at least two days");
    std::vector<double> x;
    std::vector<double> y;
    for (std::size_t d = s.days() - window + 1; d <= s.days(); ++d) {
        const double c = s.cumulative(d);
        if (!(c > 0.0)) {
            throw InvalidArgument("est_a: zero cumulative count inside the window");
        }
        x.push_back(static_cast<double>(d));
        y.push_back(std::log(c));
    }
    return least_squares(x, y).slope;
}

/// (b) OLS slope of log daily counts over the last `window` days; zero-count days are dropped.
inline double est_b_log_daily(const CaseSeries& s, std::size_t window = 42)
{
    detail::require_window(s, window);
    std::vector<double> x;
    std::vector<double> y;
    for (std::size_t d = s.days() - window + 1; d <= s.days(); ++d) {
        if (s.daily(d) > 0.0) {
            x.push_back(static_cast<double>(d));
            y.push_back(std::log(s.daily(d)));
        }
    }
    if (x.size() < 2) {
        throw InvalidArgument("est_b: fewer than two non-zero days in the window");
    }
    return least_squares(x, y).slope;
}

enum class RatioScale {
    /// mean of ln(c(t+1)/c(t))
    LogRatio,
    /// mean of c(t+1)/c(t) - 1
    RatioMinusOne,
};

/// (c) Mean of the last `window` daily ratios of successive cumulative counts.
inline double est_c_mean_ratio(const CaseSeries& s, std::size_t window = 42, RatioScale scale = RatioScale::LogRatio)
{
    detail::require_window(s, window, 1);
    double total = 0.0;
    for (std::size_t d = s.days() - window; d < s.days(); ++d) {
        const double prev = s.cumulative(d);
        if (!(prev > 0.0)) {
            throw InvalidArgument("est_c: zero cumulative count inside the window");
        }
        const double ratio = s.cumulative(d + 1) / prev;
        total += scale == RatioScale::LogRatio ? std::log(ratio) : ratio - 1.0;
    }
    return total / static_cast<double>(window);
}

/// (d) ln of (n(2)+...+n(K)) / (n(1)+...+n(K-1)) over the window's K days.
inline double est_d_branching(const CaseSeries& s, std::size_t window = 42)
{
    detail::require_window(s, window);
    detail::require(window >= 2, "est_d: window must be at least two days");
    const std::size_t first = s.days() - window + 1;
    double num = 0.0;
    double den = 0.0;
    for (std::size_t d = first; d <= s.days(); ++d) {
        if (d > first) {
            num += s.daily(d);
        }
        if (d < s.days()) {
            den += s.daily(d);
        }
    }
    if (!(den > 0.0) || !(num > 0.0)) {
        throw InvalidArgument("est_d: window contains no cases");
    }
    return std::log(num / den);
}

/// Renewal convolution Lambda(t) = sum_{s>=1} p(s) n(t - s), 1-based t.
inline double renewal_pressure(std::span<const double> daily, std::size_t t, const DiscreteDelay& w)
{
    double lambda = 0.0;
    const std::size_t max_lag = std::min(t - 1, w.horizon());
    for (std::size_t lag = 1; lag <= max_lag; ++lag) {
        lambda += w.at(lag) * daily[t - lag - 1];
    }
    return lambda;
}

/*!
 * (e) Poisson maximum-likelihood R0 of the autoregressive renewal model
 * n(t) ~ Poisson(R0 Lambda(t)): sum n(t) / sum Lambda(t) over days 2..K
 * with Lambda(t) > 0. Lags reaching before day 1 contribute nothing.
 */
inline double est_e_renewal_R0(const CaseSeries& s, const DiscreteDelay& weights)
{
    double num = 0.0;
    double den = 0.0;
    for (std::size_t t = 2; t <= s.days(); ++t) {
        const double lambda = renewal_pressure(s.daily(), t, weights);
        if (lambda > 0.0) {
            num += s.daily(t);
            den += lambda;
        }
    }
    if (!(den > 0.0)) {
        throw InvalidArgument("est_e: renewal pressure is zero on every day");
    }
    return num / den;
}

/// Expected daily counts for `horizon` days past the series end under constant R0.
inline std::vector<double> renewal_projection(const CaseSeries& s, double R0, const DiscreteDelay& weights, std::size_t horizon)
{
    std::vector<double> daily = s.daily();
    for (std::size_t k = 0; k < horizon; ++k) {
        const std::size_t t = daily.size() + 1;
        daily.push_back(R0 * renewal_pressure(daily, t, weights));
    }
    return std::vector<double>(daily.end() - static_cast<std::ptrdiff_t>(horizon), daily.end());
}

enum class Method { A, B, C, D, E };

inline std::string_view to_string(Method m)
{
    constexpr std::string_view names[] = {"a", "b", "c", "d", "e"};
    return names[static_cast<int>(m)];
}

struct PredictionScore {
    double predicted = 0.0;
    double actual = 0.0;
    double ratio = 0.0;
};

inline PredictionScore score_prediction(double predicted, double actual)
{
    detail::require(actual > 0.0, "score_prediction: actual count must be positive");
    return {predicted, actual, predicted / actual};
}

/// Growth-rate estimate by method a-d with the default window.
inline double estimate_r(const CaseSeries& s, Method m, std::size_t window = 42)
{
    switch (m) {
    case Method::A:
        return est_a_log_cumulative(s, window);
    case Method::B:
        return est_b_log_daily(s, window);
    case Method::C:
        return est_c_mean_ratio(s, window);
    case Method::D:
        return est_d_branching(s, window);
    case Method::E:
        break;
    }
    throw InvalidArgument("estimate_r: method e estimates R0, not r");
}

/*!
 * Predicted cumulative count `horizon` days after the series end.
 * Methods a-d multiply the last cumulative count by exp(horizon * r);
 * method e adds the expected renewal projection with the fitted R0.
 */
inline double predict_forward(const CaseSeries& s, Method m, std::size_t horizon = 42, std::size_t window = 42,
                              const DiscreteDelay* weights = nullptr)
{
    const double last = s.cumulative(s.days());
    if (m != Method::E) {
        return last * std::exp(static_cast<double>(horizon) * estimate_r(s, m, window));
    }
    detail::require(weights != nullptr, "predict_forward: method e needs renewal weights");
    const double R0 = est_e_renewal_R0(s, *weights);
    double total = last;
    for (double n : renewal_projection(s, R0, *weights, horizon)) {
        total += n;
    }
    return total;
}

} // namespace epibias
