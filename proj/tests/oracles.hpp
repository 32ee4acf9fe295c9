#pragma once

// Test-only reference computations. These deliberately avoid the code paths
// they check: quadrature here uses double-exponential rules rather than the
// library's Gauss-Kronrod wrapper, and no closed form from the library is
// reused.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace oracle {

inline double gamma_density(double shape, double rate, double t)
{
    if (t <= 0.0) {
        return 0.0;
    }
    return std::exp(shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(t) - rate * t);
}

/// Integral over [0, inf) by the exp-sinh rule.
inline double half_line(const std::function<double(double)>& f)
{
    boost::math::quadrature::exp_sinh<double> rule;
    return rule.integrate(f, 1e-14);
}

/// Integral over [a, b] by the tanh-sinh rule.
inline double finite(const std::function<double(double)>& f, double a, double b)
{
    boost::math::quadrature::tanh_sinh<double> rule;
    return rule.integrate(f, a, b, 1e-14);
}

/// E[exp(-r T)] for T ~ Gamma(shape, rate) by quadrature. Substituting
/// u = t^shape removes the t^(shape-1) singularity at the origin.
inline double gamma_laplace(double shape, double rate, double r)
{
    const double c = std::exp(shape * std::log(rate) - std::lgamma(shape + 1.0));
    return c * half_line([&](double u) { return std::exp(-(rate + r) * std::pow(u, 1.0 / shape)); });
}

/// Kolmogorov-Smirnov statistic of a sample against a continuous CDF.
inline double ks_statistic(std::vector<double> x, const std::function<double(double)>& F)
{
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = F(x[i]);
        d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
inline double ks_critical_1pct(std::size_t n)
{
    return 1.6276 / std::sqrt(static_cast<double>(n));
}

inline double chi_square_critical(double dof, double alpha)
{
    return boost::math::quantile(boost::math::complement(boost::math::chi_squared(dof), alpha));
}

/// Gamma MLE from data: solve log(a) - digamma(a) = log(mean) - mean(log x) by bisection.
inline std::pair<double, double> gamma_mle(const std::vector<double>& x)
{
    double m = 0.0;
    double ml = 0.0;
    for (double v : x) {
        m += v;
        ml += std::log(v);
    }
    m /= static_cast<double>(x.size());
    ml /= static_cast<double>(x.size());
    const double target = std::log(m) - ml;
    double lo = 1e-6;
    double hi = 1e6;
    for (int i = 0; i < 300; ++i) {
        const double mid = std::sqrt(lo * hi);
        const double v = std::log(mid) - boost::math::digamma(mid);
        (v > target ? lo : hi) = mid;
    }
    const double shape = std::sqrt(lo * hi);
    return {shape, shape / m};
}

} // namespace oracle
