#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "epibias/error.hpp"

namespace epibias::numerics {

/// Adaptive 61-point Gauss-Kronrod quadrature on a finite interval. An
/// infinite `b` switches to tanh-sinh, which tolerates an integrable
/// singularity at `a` (Gamma densities with shape below one).
template<class F>
double integrate(F&& f, double a, double b, double tolerance = 1e-12, unsigned max_depth = 20)
{
    if (std::isinf(b)) {
        thread_local boost::math::quadrature::tanh_sinh<double> rule;
        const auto g = [&f](double t) -> double { return f(t); };
        return rule.integrate(g, a, b, tolerance);
    }
    double error = 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        std::forward<F>(f), a, b, max_depth, tolerance, &error);
}

struct RootResult {
    double root = 0.0;
    double residual = 0.0;
    int iterations = 0;
};

/*!
 * Root of a continuous function on a sign-changing bracket [lo, hi].
 *
 * Each iteration proposes a secant step between the bracket ends and falls
 * back to bisection whenever the secant point leaves the bracket or the
 * bracket failed to halve on the previous step. Stops once |f| is below
 * `f_tolerance` or the bracket collapses to floating-point resolution.
 */
template<class F>
RootResult find_root(F&& f, double lo, double hi, double f_tolerance = 1e-12, int max_iterations = 400)
{
    double f_lo = f(lo);
    double f_hi = f(hi);
    if (f_lo == 0.0) {
        return {lo, 0.0, 0};
    }
    if (f_hi == 0.0) {
        return {hi, 0.0, 0};
    }
    if (!(std::signbit(f_lo) != std::signbit(f_hi))) {
        throw ConvergenceError("find_root: no sign change on bracket [" + std::to_string(lo) + ", " +
                               std::to_string(hi) + "]");
    }

    double best = std::abs(f_lo) < std::abs(f_hi) ? lo : hi;
    double f_best = std::min(std::abs(f_lo), std::abs(f_hi));
    double last_width = hi - lo;
    for (int it = 1; it <= max_iterations; ++it) {
        const double width = hi - lo;
        double x = lo - f_lo * width / (f_hi - f_lo);
        const bool secant_ok = std::isfinite(x) && x > lo && x < hi && width < 0.5 * last_width;
        if (!secant_ok) {
            x = 0.5 * (lo + hi);
        }
        last_width = width;

        const double fx = f(x);
        if (std::abs(fx) < f_best) {
            best = x;
            f_best = std::abs(fx);
        }
        if (std::abs(fx) <= f_tolerance) {
            return {x, fx, it};
        }
        if (std::signbit(fx) == std::signbit(f_lo)) {
            lo = x;
            f_lo = fx;
        }
        else {
            hi = x;
            f_hi = fx;
        }
        if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(x))) {
            return {best, f_best, it};
        }
    }
    throw ConvergenceError("find_root: iteration cap reached, best residual " + std::to_string(f_best));
}

template<std::size_t N>
struct MinimizeResult {
    std::array<double, N> x{};
    double value = std::numeric_limits<double>::infinity();
    int evaluations = 0;
    int iterations = 0;
    bool converged = false;
};

struct NelderMeadOptions {
    double initial_step = 0.5;
    double f_tolerance = 1e-10;
    double x_tolerance = 1e-8;
    int max_iterations = 5000;
};

/*!
 * Nelder-Mead simplex minimization with the standard coefficients
 * (reflection 1, expansion 2, contraction 1/2, shrink 1/2).
 *
 * Converged when both the spread of function values over the simplex and
 * the largest vertex distance from the best vertex fall under tolerance.
 * Non-finite objective values are treated as +infinity.
 */
template<std::size_t N, class F>
MinimizeResult<N> nelder_mead(F&& objective, const std::array<double, N>& start, const NelderMeadOptions& options = {})
{
    using Point = std::array<double, N>;
    MinimizeResult<N> result;
    auto eval = [&](const Point& p) {
        ++result.evaluations;
        const double v = objective(p);
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    };

    std::array<Point, N + 1> simplex{};
    std::array<double, N + 1> values{};
    simplex[0] = start;
    for (std::size_t i = 0; i < N; ++i) {
        simplex[i + 1] = start;
        simplex[i + 1][i] += options.initial_step;
    }
    for (std::size_t i = 0; i <= N; ++i) {
        values[i] = eval(simplex[i]);
    }

    std::array<std::size_t, N + 1> order{};
    auto sort_simplex = [&] {
        for (std::size_t i = 0; i <= N; ++i) {
            order[i] = i;
        }
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
        std::array<Point, N + 1> s2{};
        std::array<double, N + 1> v2{};
        for (std::size_t i = 0; i <= N; ++i) {
            s2[i] = simplex[order[i]];
            v2[i] = values[order[i]];
        }
        simplex = s2;
        values = v2;
    };

    auto blend = [](const Point& a, const Point& b, double t) {
        Point out{};
        for (std::size_t i = 0; i < N; ++i) {
            out[i] = a[i] + t * (b[i] - a[i]);
        }
        return out;
    };

    for (result.iterations = 0; result.iterations < options.max_iterations; ++result.iterations) {
        sort_simplex();

        double spread = values[N] - values[0];
        double size = 0.0;
        for (std::size_t i = 1; i <= N; ++i) {
            for (std::size_t j = 0; j < N; ++j) {
                size = std::max(size, std::abs(simplex[i][j] - simplex[0][j]));
            }
        }
        if (std::isfinite(spread) && spread <= options.f_tolerance && size <= options.x_tolerance) {
            result.converged = true;
            break;
        }

        Point centroid{};
        for (std::size_t i = 0; i < N; ++i) {
            for (std::size_t j = 0; j < N; ++j) {
                centroid[j] += simplex[i][j] / static_cast<double>(N);
            }
        }

        const Point reflected = blend(centroid, simplex[N], -1.0);
        const double f_reflected = eval(reflected);
        if (f_reflected < values[0]) {
            const Point expanded = blend(centroid, simplex[N], -2.0);
            const double f_expanded = eval(expanded);
            if (f_expanded < f_reflected) {
                simplex[N] = expanded;
                values[N] = f_expanded;
            }
            else {
                simplex[N] = reflected;
                values[N] = f_reflected;
            }
            continue;
        }
        if (f_reflected < values[N - 1]) {
            simplex[N] = reflected;
            values[N] = f_reflected;
            continue;
        }

        const bool outside = f_reflected < values[N];
        const Point contracted = outside ? blend(centroid, reflected, 0.5) : blend(centroid, simplex[N], 0.5);
        const double f_contracted = eval(contracted);
        if (f_contracted < std::min(f_reflected, values[N])) {
            simplex[N] = contracted;
            values[N] = f_contracted;
            continue;
        }

        for (std::size_t i = 1; i <= N; ++i) {
            simplex[i] = blend(simplex[0], simplex[i], 0.5);
            values[i] = eval(simplex[i]);
        }
    }

    sort_simplex();
    result.x = simplex[0];
    result.value = values[0];
    return result;
}

} // namespace epibias::numerics
