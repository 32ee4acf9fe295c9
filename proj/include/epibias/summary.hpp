#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "epibias/error.hpp"

namespace epibias {

/// Replicate summary: sample moments, extremes and the central 95% range.
struct Summary {
    std::size_t n = 0;
    double mean = 0.0;
    double sd = 0.0;
    double min = 0.0;
    double max = 0.0;
    double median = 0.0;
    double lower95 = 0.0;
    double upper95 = 0.0;
};

/// Linear-interpolation quantile of sorted data (type 7).
inline double quantile_sorted(std::span<const double> sorted, double q)
{
    detail::require(!sorted.empty(), "quantile of an empty sample");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline Summary summarize(std::span<const double> values)
{
    detail::require(!values.empty(), "summarize: empty sample");
    Summary s;
    s.n = values.size();
    double sum = 0.0;
    for (double v : values) {
        sum += v;
    }
    s.mean = sum / static_cast<double>(s.n);
    double ss = 0.0;
    for (double v : values) {
        ss += (v - s.mean) * (v - s.mean);
    }
    s.sd = s.n > 1 ? std::sqrt(ss / static_cast<double>(s.n - 1)) : 0.0;

    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    s.min = sorted.front();
    s.max = sorted.back();
    s.median = quantile_sorted(sorted, 0.5);
    s.lower95 = quantile_sorted(sorted, 0.025);
    s.upper95 = quantile_sorted(sorted, 0.975);
    return s;
}

inline double sample_mean(std::span<const double> values)
{
    detail::require(!values.empty(), "sample_mean: empty sample");
    double sum = 0.0;
    for (double v : values) {
        sum += v;
    }
    return sum / static_cast<double>(values.size());
}

/// Unbiased (n - 1) sample variance.
inline double sample_variance(std::span<const double> values)
{
    detail::require(values.size() >= 2, "sample_variance: need at least two values");
    const double m = sample_mean(values);
    double ss = 0.0;
    for (double v : values) {
        ss += (v - m) * (v - m);
    }
    return ss / static_cast<double>(values.size() - 1);
}

struct LinearFit {
    double intercept = 0.0;
    double slope = 0.0;
};

/// Ordinary least squares of y on x.
inline LinearFit least_squares(std::span<const double> x, std::span<const double> y)
{
    detail::require(x.size() == y.size() && x.size() >= 2, "least_squares: need two or more paired points");
    const double mx = sample_mean(x);
    const double my = sample_mean(y);
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    detail::require(sxx > 0.0, "least_squares: x values are all equal");
    LinearFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    return fit;
}

} // namespace epibias
