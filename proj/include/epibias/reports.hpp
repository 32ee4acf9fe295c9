#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "epibias/cfr.hpp"
#include "epibias/estimators.hpp"
#include "epibias/exposures.hpp"
#include "epibias/growth.hpp"
#include "epibias/io.hpp"
#include "epibias/outbreak.hpp"
#include "epibias/summary.hpp"
#include "epibias/tracing.hpp"

namespace epibias {

/// Apply `f` to 0..n-1 on up to `threads` workers; results in index order.
template<class F>
auto parallel_map(std::size_t n, unsigned threads, F f) -> std::vector<std::invoke_result_t<F&, std::size_t>>
{
    using Value = std::invoke_result_t<F&, std::size_t>;
    std::vector<std::optional<Value>> slots(n);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::mutex mutex;
    std::exception_ptr failure;
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < n && !stop.load(); i = next.fetch_add(1)) {
            try {
                slots[i].emplace(f(i));
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
    if (threads == 0) {
        threads = std::max(1u, std::thread::hardware_concurrency());
    }
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
    std::vector<Value> out;
    out.reserve(n);
    for (auto& s : slots) {
        out.push_back(std::move(*s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Per-trace analysis

struct AnalysisOptions {
    std::size_t window = 42;
    std::size_t horizon = 42;
    std::size_t backward_pairs = 500;
    std::size_t backward_stride = 9;
    /// Renewal weights from the true generation time, when the scenario defines one.
    std::optional<DiscreteDelay> true_weights;
    DelaySpec to_death{GammaParams(1.0, 1.0), DelayLabel::ToDeath};

    static AnalysisOptions from(const RunConfig& c)
    {
        AnalysisOptions o;
        o.window = c.window;
        o.horizon = c.prediction_horizon;
        o.backward_pairs = c.backward_pairs;
        o.backward_stride = c.backward_stride;
        if (auto g = c.scenario.generation_time()) {
            o.true_weights = discretize(*g, horizon_for(*g), Discretization::DayDifference);
        }
        o.to_death = notification_to_outcome_delay(c.scenario, DelayLabel::ToDeath);
        return o;
    }
};

struct TraceAnalysis {
    std::uint64_t replicate_index = 0;
    /// Complete notification days up to and including the threshold day.
    std::size_t threshold_day = 0;
    /// Methods a-d.
    std::array<double, 4> r_hat{};
    /// Method c on the ratio-minus-one scale.
    double r_hat_c_minus_one = 0.0;
    /// Methods a-e; e uses the serial-interval renewal weights.
    std::array<PredictionScore, 5> prediction{};
    IntervalMoments backward;
    IntervalFit serial_fit;
    double R0_fitted_weights = 0.0;
    std::optional<double> R0_true_weights;
    /// Deaths over notifications at the threshold, corrected with method a's r.
    CfrCorrection cfr;
    /// Deaths over resolved cases at the threshold.
    double resolved_cfr = 0.0;
};

inline TraceAnalysis analyze_trace(const OutbreakTrace& t, const AnalysisOptions& o)
{
    TraceAnalysis a;
    a.replicate_index = t.replicate_index;
    a.threshold_day = threshold_day(t);

    const CaseSeries full(daily_series(t, SeriesKind::Notification));
    if (full.days() < a.threshold_day + o.horizon) {
        throw Error(fmt::format("analyze_trace: replicate {} has {} days, fewer than threshold day {} plus {}",
                                t.replicate_index, full.days(), a.threshold_day, o.horizon));
    }
    const CaseSeries s = full.prefix(a.threshold_day);
    const double actual = full.cumulative(a.threshold_day + o.horizon);

    constexpr Method r_methods[] = {Method::A, Method::B, Method::C, Method::D};
    for (std::size_t i = 0; i < 4; ++i) {
        a.r_hat[i] = estimate_r(s, r_methods[i], o.window);
        const double predicted = s.cumulative(s.days()) * std::exp(static_cast<double>(o.horizon) * a.r_hat[i]);
        a.prediction[i] = score_prediction(predicted, actual);
    }
    a.r_hat_c_minus_one = est_c_mean_ratio(s, o.window, RatioScale::RatioMinusOne);

    const auto pairs = sample_backward_pairs(t, o.backward_pairs, o.backward_stride);
    a.backward = interval_moments(pairs);
    a.serial_fit = fit_gamma_to_intervals(pairs, IntervalKind::Serial);
    const auto fitted = discretize(a.serial_fit.params, horizon_for(a.serial_fit.params), Discretization::DayDifference);
    a.R0_fitted_weights = est_e_renewal_R0(s, fitted);
    a.prediction[4] = score_prediction(predict_forward(s, Method::E, o.horizon, o.window, &fitted), actual);
    if (o.true_weights) {
        a.R0_true_weights = est_e_renewal_R0(s, *o.true_weights);
    }

    const auto snap = snapshot_ratios(t);
    CfrCounts counts;
    counts.notified = static_cast<double>(snap.notified);
    counts.deaths = static_cast<double>(snap.died);
    counts.recoveries = static_cast<double>(snap.recovered);
    counts.horizon = t.threshold_time - t.first_notification;
    counts.r = std::max(0.0, a.r_hat[0]);
    a.cfr = corrected_naive_cfr(counts, o.to_death);
    a.resolved_cfr = snap.resolved ? counts.deaths / static_cast<double>(snap.resolved) : 0.0;
    return a;
}

struct EnsembleAnalysis {
    EnsembleStats stats;
    std::vector<TraceAnalysis> traces;
};

inline EnsembleAnalysis analyze_ensemble(const RunConfig& c)
{
    detail::require(c.seed.has_value(), "analyze_ensemble: a seed is required");
    Scenario sc = c.scenario;
    sc.master_seed = *c.seed;
    const auto options = AnalysisOptions::from(c);
    auto res = run_ensemble_map(sc, c.replicates, [&](const OutbreakTrace& t) { return analyze_trace(t, options); },
                                EnsembleOptions{c.threads});
    EnsembleAnalysis out;
    out.stats = summarize_ensemble(sc, std::move(res.summaries), res.attempts);
    out.traces = std::move(res.values);
    return out;
}

/// Summary of one field over the analysed traces.
template<class Field>
Summary over(const std::vector<TraceAnalysis>& traces, Field field)
{
    std::vector<double> v;
    v.reserve(traces.size());
    for (const auto& t : traces) {
        v.push_back(field(t));
    }
    return summarize(v);
}

// ---------------------------------------------------------------------------
// Exposure replicates

struct ExposureReplicate {
    IncubationFamily family = IncubationFamily::Gamma;
    MlFit ml;
    /// Raw solution of the moment equations, admissible or not.
    MomentFit moments;
    GammaParams earliest{1.0, 1.0};
    GammaParams latest{1.0, 1.0};
};

/// Fits on `replicates` simulated data sets per generator family.
inline std::vector<ExposureReplicate> run_exposure_replicates(const ExposureModel& model, std::size_t persons,
                                                              std::size_t replicates, std::uint64_t seed, unsigned threads)
{
    return parallel_map(2 * replicates, threads, [&](std::size_t i) {
        ExposureReplicate rep;
        rep.family = i < replicates ? IncubationFamily::Gamma : IncubationFamily::LogNormal;
        const std::uint64_t stream = (rep.family == IncubationFamily::Gamma ? 0 : (1ULL << 32)) + i % replicates;
        const auto hs = generate_histories(model, persons, rep.family, seed, stream);
        rep.ml = ml_fit(hs);
        rep.moments = solve_moment_equations(empirical_contact_moments(hs));
        rep.earliest = heuristic_incubation_fit(hs, true);
        rep.latest = heuristic_incubation_fit(hs, false);
        return rep;
    });
}

inline std::string_view to_string(IncubationFamily f)
{
    return f == IncubationFamily::Gamma ? "gamma" : "lognormal";
}

// ---------------------------------------------------------------------------
// Commands

struct CommandContext {
    RunConfig config;
    RunMetadata meta;
    OutputDir& out;
};

inline Table bias_table_report(const BiasScenario& s)
{
    const auto t = bias_table(s);
    Table table({"source", "r_true", "r_biased", "r_bias_pct", "R0_true", "R0_biased", "R0_bias_pct", "note"});
    for (const auto& row : t.rows) {
        std::string note;
        if (row.source == BiasSource::SerialInflation) {
            note = fmt::format("c={}", s.serial_c);
        }
        else if (row.source == BiasSource::MultipleExposure) {
            note = fmt::format("single-exposure generation mean {:.4g}, contact rate {:.5g}", t.me_biased_generation.mean(),
                               t.me_contact_rate);
        }
        else if (row.source == BiasSource::Combined) {
            note = "product of unrounded row factors";
        }
        table.add({std::string(to_string(row.source)), row.r_true, row.r_biased, 100.0 * row.r_rel_bias, row.R0_true,
                   row.R0_biased, 100.0 * row.R0_rel_bias, note});
    }
    return table;
}

inline void cmd_bias_table(CommandContext& ctx)
{
    ctx.out.write_table("table1", bias_table_report(ctx.config.bias), ctx.meta);
}

inline void cmd_cfr(CommandContext& ctx)
{
    const auto& c = ctx.config;
    const double r = growth_rate_from_doubling(c.cfr_doubling_time);
    const auto death = DelaySpec::exponential(c.cfr_death_mean, DelayLabel::ToDeath);
    const auto recovery = DelaySpec::exponential(c.cfr_recovery_mean, DelayLabel::ToRecovery);
    const double pi = pi_infinity(r, death);
    const double rho = pi_infinity(r, recovery);
    const double resolved = resolved_cfr_bias(c.cfr_p, r, death, recovery);

    Table summary({"quantity", "value"});
    summary.add({std::string("growth_rate"), r});
    summary.add({std::string("pi_infinity_death"), pi});
    summary.add({std::string("rho_infinity_recovery"), rho});
    summary.add({std::string("naive_cfr_expected"), c.cfr_p * pi});
    summary.add({std::string("resolved_cfr_expected"), resolved});
    summary.add({std::string("resolved_cfr_rel_bias"), resolved / c.cfr_p - 1.0});
    ctx.out.write_table("cfr", summary, ctx.meta);

    Table curve({"T", "pi_T_death", "rho_T_recovery"});
    for (int T = 0; T <= 300; T += 5) {
        curve.add({static_cast<std::int64_t>(T), pi_finite(T, r, death), pi_finite(T, r, recovery)});
    }
    ctx.out.write_table("cfr_curve", curve, ctx.meta);
}

inline void cmd_exposures(CommandContext& ctx)
{
    const auto& c = ctx.config;
    const auto reps = run_exposure_replicates(c.exposure_model, c.exposure_persons, c.exposure_replicates, *c.seed, c.threads);
    const auto& m = c.exposure_model;

    // Per-replicate mean, sd and central 95% range, plus the 95% interval of
    // the replicate mean. Moment-estimator sd rows are the square root of the
    // averaged Var(T) estimates, which can be negative in single replicates.
    Table table({"generator", "estimator", "parameter", "truth", "n", "inadmissible", "mean", "mean_lower95",
                 "mean_upper95", "sd", "lower95", "upper95"});
    for (auto family : {IncubationFamily::Gamma, IncubationFamily::LogNormal}) {
        std::vector<const ExposureReplicate*> fam;
        std::int64_t inadmissible = 0;
        for (const auto& r : reps) {
            if (r.family == family) {
                fam.push_back(&r);
                inadmissible += r.moments.admissible ? 0 : 1;
            }
        }
        auto add = [&](std::string_view estimator, std::string_view param, double truth, bool root, auto get) {
            std::vector<double> v;
            for (const auto* r : fam) {
                v.push_back(get(*r));
            }
            const auto s = summarize(v);
            const double half = 1.959963984540054 * s.sd / std::sqrt(static_cast<double>(s.n));
            auto tr = [root](double x) { return root ? std::sqrt(std::max(0.0, x)) : x; };
            table.add({std::string(to_string(family)), std::string(estimator), std::string(param), truth,
                       static_cast<std::int64_t>(s.n), estimator == "moment" ? inadmissible : std::int64_t{0}, tr(s.mean),
                       tr(s.mean - half), tr(s.mean + half), root ? NAN : s.sd, tr(s.lower95), tr(s.upper95)});
        };
        using R = const ExposureReplicate&;
        add("ml", "p", m.p, false, [](R r) { return r.ml.p; });
        add("ml", "mean", m.incubation.mean(), false, [](R r) { return r.ml.mean; });
        add("ml", "sd", m.incubation.sd(), false, [](R r) { return r.ml.sd; });
        add("moment", "p", m.p, false, [](R r) { return r.moments.p; });
        add("moment", "contact_rate", m.contact_rate, false, [](R r) { return r.moments.contact_rate; });
        add("moment", "mean", m.incubation.mean(), false, [](R r) { return r.moments.mean_t; });
        add("moment", "var", m.incubation.variance(), false, [](R r) { return r.moments.var_t; });
        add("moment", "sd", m.incubation.sd(), true, [](R r) { return r.moments.var_t; });
        add("earliest_exposure", "mean", m.incubation.mean(), false, [](R r) { return r.earliest.mean(); });
        add("earliest_exposure", "sd", m.incubation.sd(), false, [](R r) { return r.earliest.sd(); });
        add("latest_exposure", "mean", m.incubation.mean(), false, [](R r) { return r.latest.mean(); });
        add("latest_exposure", "sd", m.incubation.sd(), false, [](R r) { return r.latest.sd(); });
    }
    ctx.out.write_table("table_s1", table, ctx.meta);

    const auto sample = generate_histories(m, c.exposure_persons, IncubationFamily::Gamma, *c.seed, 0);
    const auto [wide, exposures] = history_csv(sample, ctx.meta);
    ctx.out.write_text("histories_000000.csv", wide);
    ctx.out.write_text("exposures_000000.csv", exposures);
}

inline nlohmann::ordered_json ensemble_summary_json(const EnsembleStats& st, const RunMetadata& meta)
{
    nlohmann::ordered_json j;
    j["meta"] = to_json(meta);
    j["accepted"] = st.accepted;
    j["attempts"] = st.attempts;
    j["threshold_time"] = to_json(st.threshold_time);
    j["time_to_100"] = to_json(st.time_to_100);
    j["time_100_to_threshold"] = to_json(st.time_100_to_threshold);
    j["notified_ratio"] = to_json(st.notified_ratio);
    j["resolved"] = to_json(st.resolved);
    j["pending"] = to_json(st.pending);
    j["unnotified"] = to_json(st.unnotified);
    j["deterministic_threshold_time"] = st.deterministic_threshold_time ? nlohmann::ordered_json(*st.deterministic_threshold_time)
                                                                         : nlohmann::ordered_json(nullptr);
    return j;
}

/// Writes the ensemble summary, per-trace rows and the first trace files.
inline void write_simulation(CommandContext& ctx, const EnsembleStats& st)
{
    ctx.out.write_json("ensemble_summary.json", ensemble_summary_json(st, ctx.meta));

    Table rows({"replicate", "threshold_time", "time_to_100", "time_100_to_threshold", "infected", "notified", "died",
                "recovered", "pending", "unnotified", "notified_ratio", "persons"});
    for (const auto& t : st.traces) {
        const auto& s = t.snapshot;
        rows.add({static_cast<std::int64_t>(t.replicate_index), t.threshold_time, t.time_to_100, t.time_100_to_threshold,
                  static_cast<std::int64_t>(s.infected), static_cast<std::int64_t>(s.notified),
                  static_cast<std::int64_t>(s.died), static_cast<std::int64_t>(s.recovered),
                  static_cast<std::int64_t>(s.pending), static_cast<std::int64_t>(s.unnotified), s.notified_ratio(),
                  static_cast<std::int64_t>(t.persons)});
    }
    ctx.out.write_table("trace_summaries", rows, ctx.meta);

    Scenario sc = ctx.config.scenario;
    sc.master_seed = *ctx.config.seed;
    for (std::size_t k = 0; k < std::min(ctx.config.trace_files, st.traces.size()); ++k) {
        const auto sim = simulate_outbreak(sc, st.traces[k].replicate_index);
        const auto& t = sim.trace;
        const std::string id = fmt::format("{:06}", t.replicate_index);
        ctx.out.write_text("trace_" + id + ".csv", person_csv(t, ctx.meta));
        const auto pairs = sample_backward_pairs(t, ctx.config.backward_pairs, ctx.config.backward_stride);
        ctx.out.write_text("pairs_" + id + ".csv", pair_csv(pairs, ctx.meta));

        // Tidy incidence on a common clock: day d covers [d - 1, d) after the first infection.
        Table incidence({"day", "kind", "count"});
        const auto days = static_cast<std::size_t>(std::floor(t.horizon));
        constexpr std::pair<SeriesKind, std::string_view> kinds[] = {{SeriesKind::Infection, "infection"},
                                                                    {SeriesKind::Notification, "notification"},
                                                                    {SeriesKind::Death, "death"},
                                                                    {SeriesKind::Recovery, "recovery"}};
        for (const auto& [kind, name] : kinds) {
            std::vector<std::int64_t> counts(days, 0);
            for (const auto& p : t.persons) {
                if (auto e = detail::event_time(p, kind); e && *e < static_cast<double>(days)) {
                    ++counts[static_cast<std::size_t>(*e)];
                }
            }
            for (std::size_t d = 0; d < days; ++d) {
                incidence.add({static_cast<std::int64_t>(d + 1), std::string(name), counts[d]});
            }
        }
        ctx.out.write_table("incidence_" + id, incidence, ctx.meta);
    }
}

inline void write_estimates(CommandContext& ctx, const EnsembleAnalysis& ea)
{
    const auto& tr = ea.traces;
    Table table({"quantity", "method", "n", "mean", "sd", "median", "lower95", "upper95", "min", "max"});
    auto add = [&](std::string_view quantity, std::string_view method, const Summary& s) {
        table.add({std::string(quantity), std::string(method), static_cast<std::int64_t>(s.n), s.mean, s.sd, s.median,
                   s.lower95, s.upper95, s.min, s.max});
    };
    constexpr std::string_view names[] = {"a", "b", "c", "d", "e"};
    for (std::size_t i = 0; i < 4; ++i) {
        add("r_hat", names[i], over(tr, [i](const TraceAnalysis& t) { return t.r_hat[i]; }));
    }
    add("r_hat", "c_ratio_minus_one", over(tr, [](const TraceAnalysis& t) { return t.r_hat_c_minus_one; }));
    for (std::size_t i = 0; i < 5; ++i) {
        add("prediction_ratio", names[i], over(tr, [i](const TraceAnalysis& t) { return t.prediction[i].ratio; }));
    }
    add("R0_hat", "e_serial_fitted_weights", over(tr, [](const TraceAnalysis& t) { return t.R0_fitted_weights; }));
    if (!tr.empty() && tr.front().R0_true_weights) {
        add("R0_hat", "e_true_weights", over(tr, [](const TraceAnalysis& t) { return *t.R0_true_weights; }));
    }
    add("backward_generation_mean", "sampled", over(tr, [](const TraceAnalysis& t) { return t.backward.mean_generation; }));
    add("backward_generation_var", "sampled", over(tr, [](const TraceAnalysis& t) { return t.backward.var_generation; }));
    add("backward_serial_mean", "sampled", over(tr, [](const TraceAnalysis& t) { return t.backward.mean_serial; }));
    add("backward_serial_var", "sampled", over(tr, [](const TraceAnalysis& t) { return t.backward.var_serial; }));
    add("serial_fit_dropped", "nonpositive", over(tr, [](const TraceAnalysis& t) { return static_cast<double>(t.serial_fit.dropped); }));
    add("cfr", "naive", over(tr, [](const TraceAnalysis& t) { return t.cfr.naive; }));
    add("cfr", "corrected_naive", over(tr, [](const TraceAnalysis& t) { return t.cfr.corrected; }));
    add("cfr", "resolved", over(tr, [](const TraceAnalysis& t) { return t.resolved_cfr; }));
    ctx.out.write_table("table_rest", table, ctx.meta);

    Table rows({"replicate", "threshold_day", "r_a", "r_b", "r_c", "r_d", "ratio_a", "ratio_b", "ratio_c", "ratio_d",
                "ratio_e", "R0_e_fitted", "R0_e_true", "gen_mean", "gen_var", "serial_mean", "serial_var",
                "serial_fit_shape", "serial_fit_rate", "cfr_naive", "cfr_corrected", "cfr_resolved"});
    for (const auto& t : tr) {
        rows.add({static_cast<std::int64_t>(t.replicate_index), static_cast<std::int64_t>(t.threshold_day), t.r_hat[0],
                  t.r_hat[1], t.r_hat[2], t.r_hat[3], t.prediction[0].ratio, t.prediction[1].ratio, t.prediction[2].ratio,
                  t.prediction[3].ratio, t.prediction[4].ratio, t.R0_fitted_weights, t.R0_true_weights.value_or(NAN),
                  t.backward.mean_generation, t.backward.var_generation, t.backward.mean_serial, t.backward.var_serial,
                  t.serial_fit.params.shape(), t.serial_fit.params.rate(), t.cfr.naive, t.cfr.corrected, t.resolved_cfr});
    }
    ctx.out.write_table("estimate_traces", rows, ctx.meta);
}

inline void cmd_simulate(CommandContext& ctx)
{
    Scenario sc = ctx.config.scenario;
    sc.master_seed = *ctx.config.seed;
    write_simulation(ctx, run_ensemble(sc, ctx.config.replicates, EnsembleOptions{ctx.config.threads}));
}

inline void cmd_estimate(CommandContext& ctx)
{
    write_estimates(ctx, analyze_ensemble(ctx.config));
}

/// Every table from one ensemble, plus a manifest of the files written.
inline void cmd_reproduce(CommandContext& ctx)
{
    cmd_bias_table(ctx);
    cmd_cfr(ctx);
    cmd_exposures(ctx);
    const auto ea = analyze_ensemble(ctx.config);
    write_simulation(ctx, ea.stats);
    write_estimates(ctx, ea);
    nlohmann::ordered_json manifest;
    manifest["meta"] = to_json(ctx.meta);
    manifest["files"] = ctx.out.written();
    ctx.out.write_json("manifest.json", manifest);
}

} // namespace epibias
