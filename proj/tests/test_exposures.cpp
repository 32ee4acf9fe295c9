#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "epibias/exposures.hpp"
#include "oracles.hpp"

using namespace epibias;

namespace {

// Sample mean, variance and the standard errors of both.
struct Moments {
    double mean;
    double var;
    double se_mean;
    double se_var;
};

Moments moments(const std::vector<double>& x)
{
    const double n = static_cast<double>(x.size());
    double m = 0.0;
    for (double v : x) {
        m += v;
    }
    m /= n;
    double m2 = 0.0;
    double m4 = 0.0;
    for (double v : x) {
        const double d = (v - m) * (v - m);
        m2 += d;
        m4 += d * d;
    }
    m2 /= n;
    m4 /= n;
    return {m, m2, std::sqrt(m2 / n), std::sqrt((m4 - m2 * m2) / n)};
}

} // namespace

TEST(ExposureHistories, WellFormedAndDeterministic)
{
    const ExposureModel model;
    const auto a = generate_histories(model, 2000, IncubationFamily::Gamma, 42);
    const auto b = generate_histories(model, 2000, IncubationFamily::Gamma, 42);
    const auto c = generate_histories(model, 2000, IncubationFamily::Gamma, 42, 1);
    ASSERT_EQ(a.size(), 2000u);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_NO_THROW(validate(a[i]));
        EXPECT_EQ(a[i].exposures.front(), 0.0);
        ASSERT_EQ(a[i].exposures, b[i].exposures);
        ASSERT_EQ(a[i].symptom_time, b[i].symptom_time);
        differs = differs || a[i].symptom_time != c[i].symptom_time;
    }
    EXPECT_TRUE(differs);
}

TEST(ExposureHistories, ValidateRejectsMalformed)
{
    EXPECT_THROW(validate(ExposureHistory{{}, 1.0}), InvalidArgument);
    EXPECT_THROW(validate(ExposureHistory{{2.0, 1.0}, 5.0}), InvalidArgument);
    EXPECT_THROW(validate(ExposureHistory{{0.0, 3.0}, 3.0}), InvalidArgument);
    EXPECT_NO_THROW(validate(ExposureHistory{{0.0, 3.0}, 3.5}));
}

TEST(ExposureHistories, GeneratorMatchesClosedFormMoments)
{
    for (auto family : {IncubationFamily::Gamma, IncubationFamily::LogNormal}) {
        ExposureModel model;
        const auto hs = generate_histories(model, 1'000'000, family, 7);
        std::vector<double> c;
        std::vector<double> s;
        c.reserve(hs.size());
        s.reserve(hs.size());
        for (const auto& h : hs) {
            c.push_back(static_cast<double>(h.exposures.size()));
            s.push_back(h.symptom_time - h.exposures.front());
        }
        // Independent closed forms, not via contact_moments().
        const double p = model.p;
        const double mu = model.contact_rate;
        const double et = 11.4;
        const double vt = 8.1 * 8.1;
        const double ec = 1.0 / p + mu * et;
        const double vc = (1.0 - p) / (p * p) + mu * et + mu * mu * vt;
        const double es = (1.0 - p) / (p * mu) + et;
        const double vs = (1.0 - p) / (p * mu * mu) + (1.0 - p) / (p * p * mu * mu) + vt;

        const auto mc = moments(c);
        const auto ms = moments(s);
        EXPECT_NEAR(mc.mean, ec, 3.0 * mc.se_mean);
        EXPECT_NEAR(mc.var, vc, 3.0 * mc.se_var);
        EXPECT_NEAR(ms.mean, es, 3.0 * ms.se_mean);
        EXPECT_NEAR(ms.var, vs, 3.0 * ms.se_var);

        const auto forward = contact_moments(p, mu, et, vt);
        EXPECT_NEAR(forward.mean_c, ec, 1e-12);
        EXPECT_NEAR(forward.var_c, vc, 1e-12);
        EXPECT_NEAR(forward.mean_s, es, 1e-10);
        EXPECT_NEAR(forward.var_s, vs, 1e-9);
    }
}

TEST(ExposureLikelihood, SingleExposureReducesToDensity)
{
    const GammaParams g(2.0, 0.5);
    const std::vector<ExposureHistory> hs{{{0.0}, 3.0}, {{1.0}, 2.5}};
    const double expected = std::log(0.3 * oracle::gamma_density(2.0, 0.5, 3.0)) + std::log(0.3 * oracle::gamma_density(2.0, 0.5, 1.5));
    EXPECT_NEAR(conditional_log_likelihood(hs, 0.3, g), expected, 1e-12);
    // Normalized: dividing by 1 - (1-p)^1 = p removes the p factor.
    EXPECT_NEAR(conditional_log_likelihood(hs, 0.3, g, true), expected - 2.0 * std::log(0.3), 1e-12);
}

TEST(ExposureLikelihood, MixtureWeights)
{
    const GammaParams g(3.0, 0.2);
    const ExposureHistory h{{0.0, 2.0, 5.0}, 20.0};
    const double p = 0.4;
    const double mix = p * oracle::gamma_density(3, 0.2, 20.0) + p * 0.6 * oracle::gamma_density(3, 0.2, 18.0) +
                       p * 0.36 * oracle::gamma_density(3, 0.2, 15.0);
    EXPECT_NEAR(conditional_log_likelihood(std::span(&h, 1), p, g), std::log(mix), 1e-12);
}

TEST(MlFit, LikelihoodAtFitNotBelowTruth)
{
    const ExposureModel model;
    const auto hs = generate_histories(model, 500, IncubationFamily::Gamma, 2024);
    const auto fit = ml_fit(hs);
    EXPECT_TRUE(fit.converged);
    const double at_truth = conditional_log_likelihood(hs, model.p, model.incubation);
    EXPECT_GE(fit.log_likelihood, at_truth - 1e-6);
    EXPECT_NEAR(fit.log_likelihood, conditional_log_likelihood(hs, fit.p, fit.incubation()), 1e-8);
    EXPECT_NEAR(fit.p, 0.5, 0.15);
    EXPECT_NEAR(fit.mean, 11.4, 1.5);
    EXPECT_NEAR(fit.sd, 8.1, 1.5);
}

TEST(MlFit, LocalOptimality)
{
    const ExposureModel model;
    const auto hs = generate_histories(model, 500, IncubationFamily::Gamma, 99);
    const auto fit = ml_fit(hs);
    const double best = fit.log_likelihood;
    for (double dp : {-0.01, 0.01}) {
        EXPECT_LE(conditional_log_likelihood(hs, fit.p + dp, fit.incubation()), best + 1e-7);
    }
    for (double dm : {-0.05, 0.05}) {
        EXPECT_LE(conditional_log_likelihood(hs, fit.p, gamma_from_moments(fit.mean + dm, fit.sd)), best + 1e-7);
        EXPECT_LE(conditional_log_likelihood(hs, fit.p, gamma_from_moments(fit.mean, fit.sd + dm)), best + 1e-7);
    }
}

TEST(MlFit, SmallEnsembleIsCentred)
{
    const ExposureModel model;
    double p = 0.0;
    double mean = 0.0;
    double sd = 0.0;
    constexpr int reps = 20;
    for (int i = 0; i < reps; ++i) {
        const auto fit = ml_fit(generate_histories(model, 500, IncubationFamily::Gamma, 1, static_cast<std::uint64_t>(i)));
        p += fit.p / reps;
        mean += fit.mean / reps;
        sd += fit.sd / reps;
    }
    EXPECT_NEAR(p, 0.5, 0.03);
    EXPECT_NEAR(mean, 11.4, 0.6);
    EXPECT_NEAR(sd, 8.1, 0.6);
}

TEST(MlFit, RejectsTinySamples)
{
    const auto hs = generate_histories(ExposureModel{}, 10, IncubationFamily::Gamma, 1);
    EXPECT_THROW(ml_fit(hs), InvalidArgument);
}

TEST(MomentFit, ExactInverseOfClosedForms)
{
    RandomStream rng(3, 0);
    for (int i = 0; i < 1000; ++i) {
        const double p = rng.uniform(0.05, 0.95);
        const double mu = rng.uniform(0.01, 1.0);
        const double et = rng.uniform(1.0, 30.0);
        const double vt = rng.uniform(0.5, 200.0);
        const auto fit = moment_fit(contact_moments(p, mu, et, vt));
        ASSERT_NEAR(fit.p, p, 1e-8);
        ASSERT_NEAR(fit.contact_rate, mu, 1e-8 * mu);
        ASSERT_NEAR(fit.mean_t, et, 1e-8 * et);
        ASSERT_NEAR(fit.var_t, vt, 1e-7 * vt);
        for (double r : fit.residuals) {
            ASSERT_LT(std::abs(r), 1e-8);
        }
    }
}

TEST(MomentFit, InadmissibleMomentsThrow)
{
    // Var(C) far too large for any p <= 1 with these means.
    EXPECT_THROW(moment_fit(ContactMoments{2.0, 500.0, 10.0, 50.0}), ConvergenceError);
}

TEST(MomentFit, LargeSampleConsistency)
{
    const ExposureModel model;
    const auto fit = moment_fit(generate_histories(model, 200'000, IncubationFamily::Gamma, 5));
    EXPECT_NEAR(fit.p, 0.5, 0.02);
    EXPECT_NEAR(fit.contact_rate, 0.0725, 0.003);
    EXPECT_NEAR(fit.mean_t, 11.4, 0.3);
    EXPECT_NEAR(fit.sd_t(), 8.1, 0.3);
}

TEST(Calibration, SingleFractionRoot)
{
    const auto inc = gamma_from_moments(11.4, 8.1);
    const double mu = calibrate_contact_rate(0.5, 0.25, inc);
    EXPECT_NEAR(mu, 0.072798, 1e-5);
    EXPECT_NEAR(0.5 * oracle::gamma_laplace(inc.shape(), inc.rate(), mu), 0.25, 1e-10);
    EXPECT_THROW(calibrate_contact_rate(0.5, 0.6, inc), InvalidArgument);
}

TEST(SingleExposureShift, ConditionalMeanByQuadrature)
{
    ExposureModel model;
    model.contact_rate = 0.072798;
    const auto& inc = model.incubation;
    const auto out = single_exposure_shift(model, gamma_from_moments(15.3, 9.3));
    const double num = oracle::half_line([&](double t) { return t * std::exp(-model.contact_rate * t) * oracle::gamma_density(inc.shape(), inc.rate(), t); });
    const double den = oracle::half_line([&](double t) { return std::exp(-model.contact_rate * t) * oracle::gamma_density(inc.shape(), inc.rate(), t); });
    EXPECT_NEAR(out.conditional_mean, num / den, 1e-8);
    EXPECT_NEAR(out.single_fraction, 0.25, 1e-6);
    EXPECT_NEAR(out.biased_generation.mean(), 15.3 - out.shift, 1e-12);
    EXPECT_NEAR(out.biased_generation.sd(), 9.3, 1e-12);
}

TEST(SingleExposureShift, ShorterWheneverContactsOccur)
{
    RandomStream rng(8, 0);
    for (int i = 0; i < 500; ++i) {
        ExposureModel model;
        model.contact_rate = rng.uniform(1e-4, 2.0);
        model.incubation = GammaParams(rng.uniform(0.3, 10.0), rng.uniform(0.05, 2.0));
        const auto generation = gamma_from_moments(model.incubation.mean() + 5.0, 5.0);
        ASSERT_LT(single_exposure_shift(model, generation).conditional_mean, model.incubation.mean());
    }
}

TEST(Heuristics, EarliestOverLatestUnder)
{
    const ExposureModel model;
    const auto hs = generate_histories(model, 100'000, IncubationFamily::Gamma, 12);
    EXPECT_GT(heuristic_incubation_fit(hs, true).mean(), 11.4 + 0.5);
    EXPECT_LT(heuristic_incubation_fit(hs, false).mean(), 11.4 - 0.5);
}

TEST(MomentFit, RawSolutionKeepsNegativeVariance)
{
    // Moments consistent with Var(T) < 0, as a noisy sample can produce.
    const auto m = contact_moments(0.5, 0.07, 11.0, -20.0);
    const auto raw = solve_moment_equations(m);
    EXPECT_FALSE(raw.admissible);
    EXPECT_NEAR(raw.p, 0.5, 1e-12);
    EXPECT_NEAR(raw.mean_t, 11.0, 1e-10);
    EXPECT_NEAR(raw.var_t, -20.0, 1e-8);
    EXPECT_THROW(moment_fit(m), ConvergenceError);
    EXPECT_TRUE(solve_moment_equations(contact_moments(0.5, 0.07, 11.0, 20.0)).admissible);
}
