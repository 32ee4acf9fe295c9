#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "epibias/error.hpp"
#include "epibias/gamma.hpp"
#include "epibias/outbreak.hpp"
#include "epibias/summary.hpp"

namespace epibias {

/// An infectee and its infector, with both intervals measured between them.
struct TracedPair {
    std::uint32_t infectee_id = 0;
    std::uint32_t infector_id = 0;
    double generation_time = 0.0; // infection-time difference
    double serial_interval = 0.0;  // symptom-time difference, may be negative
};

inline TracedPair make_pair(const OutbreakTrace& trace, const PersonRecord& infectee)
{
    const auto& infector = trace.persons.at(infectee.infector_id);
    return {infectee.id, infector.id, infectee.t_infect - infector.t_infect, infectee.t_symptom - infector.t_symptom};
}

/*!
 * Systematic contact-tracing sample: walk non-index cases in notification
 * order (ties by id) and trace every `stride`-th one back to its infector,
 * starting with the stride-th case. Only cases notified by the trace's
 * end time are eligible.
 */
inline std::vector<TracedPair> sample_backward_pairs(const OutbreakTrace& trace, std::size_t n, std::size_t stride)
{
    detail::require(n >= 1 && stride >= 1, "sample_backward_pairs: n and stride must be positive");
    std::vector<const PersonRecord*> notified;
    notified.reserve(trace.persons.size());
    for (const auto& p : trace.persons) {
        if (!p.is_index() && p.t_symptom <= trace.end_time) {
            notified.push_back(&p);
        }
    }
    if (notified.size() < n * stride) {
        throw InvalidArgument("sample_backward_pairs: only " + std::to_string(notified.size()) +
                              " notified cases, need " + std::to_string(n * stride));
    }
    const auto by_notification = [](const PersonRecord* a, const PersonRecord* b) {
        return a->t_symptom < b->t_symptom || (a->t_symptom == b->t_symptom && a->id < b->id);
    };
    // Only the first n * stride positions matter.
    const auto needed = static_cast<std::ptrdiff_t>(n * stride);
    std::partial_sort(notified.begin(), notified.begin() + needed, notified.end(), by_notification);

    std::vector<TracedPair> pairs;
    pairs.reserve(n);
    for (std::size_t k = 1; k <= n; ++k) {
        pairs.push_back(make_pair(trace, *notified[k * stride - 1]));
    }
    return pairs;
}

/// Every infector-infectee pair whose infectee was infected by `until`, viewed forwards.
inline std::vector<TracedPair> all_pairs(const OutbreakTrace& trace, double until)
{
    std::vector<TracedPair> pairs;
    for (const auto& p : trace.persons) {
        if (p.t_infect > until) {
            break;
        }
        if (!p.is_index()) {
            pairs.push_back(make_pair(trace, p));
        }
    }
    return pairs;
}

struct IntervalMoments {
    double mean_generation = 0.0;
    double var_generation = 0.0;
    double mean_serial = 0.0;
    double var_serial = 0.0;
};

inline IntervalMoments interval_moments(std::span<const TracedPair> pairs)
{
    detail::require(pairs.size() >= 2, "interval_moments: need at least two pairs");
    std::vector<double> g;
    std::vector<double> s;
    g.reserve(pairs.size());
    s.reserve(pairs.size());
    for (const auto& p : pairs) {
        g.push_back(p.generation_time);
        s.push_back(p.serial_interval);
    }
    return {sample_mean(g), sample_variance(g), sample_mean(s), sample_variance(s)};
}

enum class IntervalKind { Generation, Serial };

struct IntervalFit {
    GammaParams params{1.0, 1.0};
    std::size_t used = 0;
    /// Non-positive intervals excluded from the fit.
    std::size_t dropped = 0;
};

/// Method-of-moments Gamma fit to the positive intervals of one kind.
inline IntervalFit fit_gamma_to_intervals(std::span<const TracedPair> pairs, IntervalKind which)
{
    std::vector<double> x;
    x.reserve(pairs.size());
    IntervalFit fit;
    for (const auto& p : pairs) {
        const double v = which == IntervalKind::Generation ? p.generation_time : p.serial_interval;
        if (v > 0.0) {
            x.push_back(v);
        }
        else {
            ++fit.dropped;
        }
    }
    fit.used = x.size();
    if (x.size() < 10) {
        throw InvalidArgument("fit_gamma_to_intervals: fewer than 10 positive intervals");
    }
    const double var = sample_variance(x);
    if (!(var > 0.0)) {
        throw InvalidArgument("fit_gamma_to_intervals: intervals have zero variance");
    }
    fit.params = gamma_from_moments(sample_mean(x), std::sqrt(var));
    return fit;
}

} // namespace epibias
