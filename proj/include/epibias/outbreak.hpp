#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "epibias/cfr.hpp"
#include "epibias/error.hpp"
#include "epibias/gamma.hpp"
#include "epibias/random.hpp"
#include "epibias/summary.hpp"

namespace epibias {

/*!
 * Branching-process SEIR scenario. Each case has a Gamma latent period E,
 * then a Gamma infectious period during which it infects others at
 * `contact_rate` per day, then dies (probability p_death) or recovers after
 * a further Gamma delay. Symptoms, which are also the notification, appear
 * at E * U after infection with U uniform on the incubation factor range.
 */
struct Scenario {
    double contact_rate = 0.34;
    GammaParams latent{2.0, 0.2};
    GammaParams infectious{1.0, 0.2};
    double incubation_factor_min = 0.8;
    double incubation_factor_max = 1.2;
    double p_death = 0.7;
    GammaParams to_death{4.0 / 9.0, 1.0 / 9.0};
    GammaParams to_recovery{4.0, 1.0 / 3.0};
    std::size_t notify_threshold = 4500;
    double followup = 42.0;
    std::uint64_t master_seed = 1;
    std::size_t max_persons = 10'000'000;

    double R0() const { return contact_rate * infectious.mean(); }

    /// Generation time (latent + uniform point of the infectious period) when
    /// the infectious period is exponential and shares the latent rate.
    std::optional<GammaParams> generation_time() const
    {
        if (infectious.shape() == 1.0 && infectious.rate() == latent.rate()) {
            return GammaParams(latent.shape() + 1.0, latent.rate());
        }
        return std::nullopt;
    }

    void validate() const
    {
        detail::require(contact_rate >= 0.0, "Scenario: contact_rate must be non-negative");
        detail::require(incubation_factor_min > 0.0 && incubation_factor_min <= incubation_factor_max,
                        "Scenario: incubation factor range must be positive and ordered");
        detail::require(p_death >= 0.0 && p_death <= 1.0, "Scenario: p_death must lie in [0, 1]");
        detail::require(notify_threshold >= 1, "Scenario: notify_threshold must be at least 1");
        detail::require(followup >= 0.0, "Scenario: followup must be non-negative");
        detail::require(max_persons >= 1, "Scenario: max_persons must be at least 1");
    }
};

enum class Fate { Died, Recovered };

inline constexpr std::uint32_t no_infector = UINT32_MAX;

struct PersonRecord {
    std::uint32_t id = 0;
    std::uint32_t infector_id = no_infector;
    double t_infect = 0.0;
    double t_infectious_start = 0.0;
    double t_infectious_end = 0.0;
    double t_symptom = 0.0;
    Fate fate = Fate::Recovered;
    double t_outcome = 0.0;

    bool is_index() const { return infector_id == no_infector; }
};

enum class OutcomeStatus { Died, Recovered, Pending };

/// Outcome as visible at time `at`.
inline OutcomeStatus outcome_at(const PersonRecord& p, double at)
{
    if (p.t_outcome > at) {
        return OutcomeStatus::Pending;
    }
    return p.fate == Fate::Died ? OutcomeStatus::Died : OutcomeStatus::Recovered;
}

/*!
 * One outbreak that reached the notification threshold.
 *
 * `persons` holds every case infected up to `horizon`, ordered by infection
 * time (ids are positions). `horizon` is `end_time` = threshold + followup
 * rounded up to the end of a notification day, so daily notification counts
 * are complete through the followup window.
 */
struct OutbreakTrace {
    std::uint64_t replicate_index = 0;
    std::vector<PersonRecord> persons;
    double threshold_time = 0.0;
    double end_time = 0.0;
    double horizon = 0.0;
    double first_notification = 0.0;
    std::size_t notify_threshold = 0;
};

enum class SimulationStatus { Reached, Extinct };

struct SimulationResult {
    SimulationStatus status = SimulationStatus::Extinct;
    OutbreakTrace trace;
    /// Persons generated before the outcome was decided.
    std::size_t persons = 0;

    bool reached() const { return status == SimulationStatus::Reached; }
};

namespace detail {

struct PendingInfection {
    double time;
    std::uint32_t infector;
    bool operator>(const PendingInfection& o) const { return time > o.time || (time == o.time && infector > o.infector); }
};

} // namespace detail

/*!
 * Simulate one outbreak from a single case infected at t = 0 using stream
 * `replicate_index` of the scenario's master seed.
 *
 * Infections are processed in time order. Before a case infected at t is
 * created, all notifications at or before t are final (later cases notify
 * after their own infection), so the threshold crossing is detected exactly.
 */
inline SimulationResult simulate_outbreak(const Scenario& sc, std::uint64_t replicate_index)
{
    sc.validate();
    RandomStream rng(sc.master_seed, replicate_index);
    SimulationResult result;
    auto& trace = result.trace;
    trace.replicate_index = replicate_index;
    trace.notify_threshold = sc.notify_threshold;

    std::priority_queue<detail::PendingInfection, std::vector<detail::PendingInfection>, std::greater<>> infections;
    std::priority_queue<double, std::vector<double>, std::greater<>> notifications;
    infections.push({0.0, no_infector});

    std::size_t notified = 0;
    bool reached = false;
    double horizon = INFINITY;

    auto drain_notifications = [&](double up_to) {
        while (!reached && !notifications.empty() && notifications.top() <= up_to) {
            const double t = notifications.top();
            notifications.pop();
            if (notified == 0) {
                trace.first_notification = t;
            }
            if (++notified == sc.notify_threshold) {
                reached = true;
                trace.threshold_time = t;
                trace.end_time = t + sc.followup;
                horizon = trace.first_notification + std::floor(trace.end_time - trace.first_notification) + 1.0;
                trace.horizon = horizon;
            }
        }
    };

    while (!infections.empty()) {
        const auto next = infections.top();
        drain_notifications(next.time);
        if (next.time > horizon) {
            break;
        }
        infections.pop();

        if (trace.persons.size() >= sc.max_persons) {
            throw Error("simulate_outbreak: person cap of " + std::to_string(sc.max_persons) + " exceeded");
        }
        PersonRecord p;
        p.id = static_cast<std::uint32_t>(trace.persons.size());
        p.infector_id = next.infector;
        p.t_infect = next.time;
        const double latent = sample(sc.latent, rng);
        const double infectious = sample(sc.infectious, rng);
        const double factor = rng.uniform(sc.incubation_factor_min, sc.incubation_factor_max);
        p.t_infectious_start = p.t_infect + latent;
        p.t_infectious_end = p.t_infectious_start + infectious;
        p.t_symptom = p.t_infect + factor * latent;
        const bool dies = rng.bernoulli(sc.p_death);
        p.fate = dies ? Fate::Died : Fate::Recovered;
        p.t_outcome = p.t_infectious_end + sample(dies ? sc.to_death : sc.to_recovery, rng);

        if (sc.contact_rate > 0.0) {
            double t = p.t_infectious_start + rng.exponential(sc.contact_rate);
            while (t <= p.t_infectious_end) {
                infections.push({t, p.id});
                t += rng.exponential(sc.contact_rate);
            }
        }
        notifications.push(p.t_symptom);
        trace.persons.push_back(p);
    }
    drain_notifications(INFINITY);

    result.persons = trace.persons.size();
    result.status = reached ? SimulationStatus::Reached : SimulationStatus::Extinct;
    if (!reached) {
        trace.persons.clear();
        trace.persons.shrink_to_fit();
    }
    return result;
}

enum class SeriesKind { Notification, Infection, Death, Recovery };

namespace detail {

inline std::optional<double> event_time(const PersonRecord& p, SeriesKind kind)
{
    switch (kind) {
    case SeriesKind::Notification:
        return p.t_symptom;
    case SeriesKind::Infection:
        return p.t_infect;
    case SeriesKind::Death:
        return p.fate == Fate::Died ? std::optional<double>(p.t_outcome) : std::nullopt;
    case SeriesKind::Recovery:
        return p.fate == Fate::Recovered ? std::optional<double>(p.t_outcome) : std::nullopt;
    }
    return std::nullopt;
}

} // namespace detail

/*!
 * Daily event counts; element 0 is day 1, which starts at the first event of
 * the chosen kind. Day d covers [t_first + d - 1, t_first + d).
 *
 * Without `cutoff` the series covers every day that ends within the trace
 * horizon; horizon - first can land a rounding error below a whole number of
 * days, hence the tolerance. With `cutoff` only events at or before it are
 * counted and the series ends with the (possibly partial) day containing it.
 */
inline std::vector<double> daily_series(const OutbreakTrace& trace, SeriesKind kind, std::optional<double> cutoff = std::nullopt)
{
    std::vector<double> times;
    times.reserve(trace.persons.size());
    const double limit = cutoff ? std::min(*cutoff, trace.horizon) : trace.horizon;
    for (const auto& p : trace.persons) {
        if (auto t = detail::event_time(p, kind); t && *t <= limit) {
            times.push_back(*t);
        }
    }
    if (times.empty()) {
        return {};
    }
    const double first = *std::min_element(times.begin(), times.end());
    const std::size_t days = cutoff ? static_cast<std::size_t>(std::floor(limit - first)) + 1
                                    : static_cast<std::size_t>(std::floor(trace.horizon - first + 1e-9));
    std::vector<double> counts(days, 0.0);
    for (double t : times) {
        const auto d = static_cast<std::size_t>(std::floor(t - first));
        if (d < days) {
            counts[d] += 1.0;
        }
    }
    return counts;
}

/// Day index (1-based) of the notification day in which the threshold was reached.
inline std::size_t threshold_day(const OutbreakTrace& trace)
{
    return static_cast<std::size_t>(std::floor(trace.threshold_time - trace.first_notification)) + 1;
}

/// Counts at the moment the threshold is reached.
struct SnapshotStats {
    std::size_t infected = 0;
    std::size_t notified = 0;
    std::size_t died = 0;
    std::size_t recovered = 0;
    /// Notified cases with a final outcome.
    std::size_t resolved = 0;
    /// Notified cases still awaiting their outcome.
    std::size_t pending = 0;
    /// Infected but not yet notified.
    std::size_t unnotified = 0;

    double notified_ratio() const { return infected ? static_cast<double>(notified) / static_cast<double>(infected) : 0.0; }
};

inline SnapshotStats snapshot_ratios(const OutbreakTrace& trace)
{
    detail::require(!trace.persons.empty(), "snapshot_ratios: trace did not reach the threshold");
    const double at = trace.threshold_time;
    SnapshotStats s;
    for (const auto& p : trace.persons) {
        if (p.t_infect > at) {
            break;
        }
        ++s.infected;
        if (p.t_symptom > at) {
            ++s.unnotified;
            continue;
        }
        ++s.notified;
        switch (outcome_at(p, at)) {
        case OutcomeStatus::Died:
            ++s.died;
            break;
        case OutcomeStatus::Recovered:
            ++s.recovered;
            break;
        case OutcomeStatus::Pending:
            ++s.pending;
            break;
        }
    }
    s.resolved = s.died + s.recovered;
    return s;
}

/// Per-trace statistics retained by the ensemble runner.
struct TraceSummary {
    std::uint64_t replicate_index = 0;
    double threshold_time = 0.0;
    /// Time from the first infection until 100 cumulative notifications.
    double time_to_100 = 0.0;
    double time_100_to_threshold = 0.0;
    SnapshotStats snapshot;
    std::size_t persons = 0;
};

inline TraceSummary summarize_trace(const OutbreakTrace& trace)
{
    TraceSummary s;
    s.replicate_index = trace.replicate_index;
    s.threshold_time = trace.threshold_time;
    s.snapshot = snapshot_ratios(trace);
    s.persons = trace.persons.size();

    std::vector<double> notes;
    notes.reserve(trace.persons.size());
    for (const auto& p : trace.persons) {
        notes.push_back(p.t_symptom);
    }
    const std::size_t k = std::min<std::size_t>(100, trace.notify_threshold);
    std::nth_element(notes.begin(), notes.begin() + static_cast<std::ptrdiff_t>(k - 1), notes.end());
    s.time_to_100 = notes[k - 1];
    s.time_100_to_threshold = trace.threshold_time - s.time_to_100;
    return s;
}

struct EnsembleOptions {
    unsigned threads = 0; // 0: hardware concurrency
    std::size_t max_attempts_before_check = 10'000;
    double min_acceptance_rate = 0.01;
};

template<class T>
struct EnsembleResult {
    std::size_t accepted = 0;
    std::size_t attempts = 0;
    std::vector<TraceSummary> summaries;
    std::vector<T> values;
};

struct EnsembleStats {
    std::size_t accepted = 0;
    std::size_t attempts = 0;
    std::vector<TraceSummary> traces;
    Summary threshold_time;
    Summary time_to_100;
    Summary time_100_to_threshold;
    Summary notified_ratio;
    Summary resolved;
    Summary pending;
    Summary unnotified;
    /// ln(threshold) / r for the scenario's generation time, when defined.
    std::optional<double> deterministic_threshold_time;
};

/*!
 * Simulate replicates 0, 1, 2, ... and keep the first `n_accepted` that reach
 * the threshold, applying `visit` to each kept trace. Workers pull replicate
 * indices from a shared counter; results are keyed by index and the first
 * `n_accepted` accepted indices are returned in index order, so the outcome
 * does not depend on the thread count. `visit` runs concurrently and must
 * not touch shared mutable state.
 */
template<class Visit>
auto run_ensemble_map(const Scenario& sc, std::size_t n_accepted, Visit visit, const EnsembleOptions& options = {})
    -> EnsembleResult<std::invoke_result_t<Visit&, const OutbreakTrace&>>
{
    using Value = std::invoke_result_t<Visit&, const OutbreakTrace&>;
    detail::require(n_accepted >= 1, "run_ensemble: n_accepted must be at least 1");
    sc.validate();

    struct Slot {
        bool done = false;
        bool accepted = false;
        std::optional<TraceSummary> summary;
        std::optional<Value> value;
    };

    std::mutex mutex;
    std::map<std::uint64_t, Slot> slots;
    std::atomic<std::uint64_t> next{0};
    std::atomic<bool> stop{false};
    std::exception_ptr failure;
    std::uint64_t prefix_end = 0; // all indices below are done
    std::size_t prefix_accepted = 0;

    auto worker = [&] {
        while (!stop.load()) {
            const std::uint64_t index = next.fetch_add(1);
            try {
                auto sim = simulate_outbreak(sc, index);
                Slot slot;
                slot.done = true;
                slot.accepted = sim.reached();
                if (slot.accepted) {
                    slot.summary = summarize_trace(sim.trace);
                    slot.value.emplace(visit(sim.trace));
                }
                std::lock_guard lock(mutex);
                slots[index] = std::move(slot);
                while (prefix_accepted < n_accepted) {
                    auto it = slots.find(prefix_end);
                    if (it == slots.end() || !it->second.done) {
                        break;
                    }
                    prefix_accepted += it->second.accepted ? 1 : 0;
                    ++prefix_end;
                    if (prefix_accepted >= n_accepted) {
                        stop = true;
                        break;
                    }
                }
                if (prefix_end >= options.max_attempts_before_check &&
                    static_cast<double>(prefix_accepted) < options.min_acceptance_rate * static_cast<double>(prefix_end)) {
                    if (!failure) {
                        failure = std::make_exception_ptr(
                            Error("run_ensemble: acceptance rate below " + std::to_string(options.min_acceptance_rate) +
                                  " (" + std::to_string(prefix_accepted) + " of " + std::to_string(prefix_end) +
                                  " attempts reached the threshold)"));
                    }
                    stop = true;
                }
            }
            catch (...) {
                std::lock_guard lock(mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
                stop = true;
            }
        }
    };

    unsigned threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
    if (threads == 1) {
        worker();
    }
    else {
        std::vector<std::jthread> pool;
        for (unsigned i = 0; i < threads; ++i) {
            pool.emplace_back(worker);
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }

    EnsembleResult<Value> out;
    out.attempts = prefix_end;
    for (std::uint64_t i = 0; i < prefix_end; ++i) {
        auto& slot = slots.at(i);
        if (slot.accepted) {
            out.summaries.push_back(*slot.summary);
            out.values.push_back(std::move(*slot.value));
        }
    }
    out.accepted = out.summaries.size();
    return out;
}

inline EnsembleStats summarize_ensemble(const Scenario& sc, std::vector<TraceSummary> traces, std::size_t attempts)
{
    EnsembleStats st;
    st.accepted = traces.size();
    st.attempts = attempts;
    auto collect = [&](auto field) {
        std::vector<double> v;
        v.reserve(traces.size());
        for (const auto& t : traces) {
            v.push_back(field(t));
        }
        return summarize(v);
    };
    st.threshold_time = collect([](const TraceSummary& t) { return t.threshold_time; });
    st.time_to_100 = collect([](const TraceSummary& t) { return t.time_to_100; });
    st.time_100_to_threshold = collect([](const TraceSummary& t) { return t.time_100_to_threshold; });
    st.notified_ratio = collect([](const TraceSummary& t) { return t.snapshot.notified_ratio(); });
    st.resolved = collect([](const TraceSummary& t) { return static_cast<double>(t.snapshot.resolved); });
    st.pending = collect([](const TraceSummary& t) { return static_cast<double>(t.snapshot.pending); });
    st.unnotified = collect([](const TraceSummary& t) { return static_cast<double>(t.snapshot.unnotified); });
    if (auto gen = sc.generation_time(); gen && sc.R0() > 1.0) {
        const double r = gen->rate() * (std::pow(sc.R0(), 1.0 / gen->shape()) - 1.0);
        st.deterministic_threshold_time = std::log(static_cast<double>(sc.notify_threshold)) / r;
    }
    st.traces = std::move(traces);
    return st;
}

inline EnsembleStats run_ensemble(const Scenario& sc, std::size_t n_accepted, const EnsembleOptions& options = {})
{
    auto res = run_ensemble_map(sc, n_accepted, [](const OutbreakTrace&) { return 0; }, options);
    return summarize_ensemble(sc, std::move(res.summaries), res.attempts);
}

/*!
 * Notification-to-outcome delay implied by the scenario, moment-matched to a
 * Gamma: the remaining latent time E (1 - U) plus the infectious period plus
 * the outcome delay. Components are independent, so means and variances add;
 * Var(E (1 - U)) = E[E^2] E[(1 - U)^2] - (E[E] E[1 - U])^2.
 */
inline DelaySpec notification_to_outcome_delay(const Scenario& sc, DelayLabel label)
{
    const double a = sc.incubation_factor_min;
    const double b = sc.incubation_factor_max;
    const double m1u = 1.0 - 0.5 * (a + b);
    // E[(1-U)^2] for U uniform on [a, b].
    const double m2u = b == a ? (1.0 - a) * (1.0 - a) : (std::pow(1.0 - a, 3) - std::pow(1.0 - b, 3)) / (3.0 * (b - a));
    const double e1 = sc.latent.mean();
    const double e2 = sc.latent.variance() + e1 * e1;
    const auto& outcome = label == DelayLabel::ToDeath ? sc.to_death : sc.to_recovery;

    const double mean = e1 * m1u + sc.infectious.mean() + outcome.mean();
    const double var = e2 * m2u - (e1 * m1u) * (e1 * m1u) + sc.infectious.variance() + outcome.variance();
    return {gamma_from_moments(mean, std::sqrt(var)), label};
}

} // namespace epibias
