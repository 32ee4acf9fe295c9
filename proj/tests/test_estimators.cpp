#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "epibias/estimators.hpp"

using namespace epibias;

namespace {

// Cumulative c(t) = c0 e^{rt}, daily n(t) = c(t) - c(t-1), with n(1) = c(1).
CaseSeries geometric_cumulative(double c0, double r, std::size_t days)
{
    std::vector<double> daily;
    double prev = 0.0;
    for (std::size_t t = 1; t <= days; ++t) {
        const double c = c0 * std::exp(r * static_cast<double>(t));
        daily.push_back(c - prev);
        prev = c;
    }
    return CaseSeries(daily);
}

CaseSeries geometric_daily(double n0, double r, std::size_t days)
{
    std::vector<double> daily;
    for (std::size_t t = 1; t <= days; ++t) {
        daily.push_back(n0 * std::exp(r * static_cast<double>(t)));
    }
    return CaseSeries(daily);
}

// Noiseless renewal data: n(t) = R0 * sum_s w(s) n(t-s) after a single seed day.
CaseSeries renewal_series(double R0, const DiscreteDelay& w, std::size_t days)
{
    std::vector<double> daily{5.0};
    while (daily.size() < days) {
        double lambda = 0.0;
        const std::size_t t = daily.size() + 1;
        for (std::size_t s = 1; s < t && s <= w.horizon(); ++s) {
            lambda += w.at(s) * daily[t - s - 1];
        }
        daily.push_back(R0 * lambda);
    }
    return CaseSeries(daily);
}

} // namespace

TEST(CaseSeries, CumulativeAndPrefix)
{
    const CaseSeries s({1, 0, 2, 5});
    EXPECT_EQ(s.days(), 4u);
    EXPECT_DOUBLE_EQ(s.cumulative(0), 0.0);
    EXPECT_DOUBLE_EQ(s.cumulative(3), 3.0);
    EXPECT_DOUBLE_EQ(s.cumulative(4), 8.0);
    EXPECT_DOUBLE_EQ(s.daily(4), 5.0);
    EXPECT_EQ(s.prefix(2).cumulative(2), 1.0);
    EXPECT_THROW(s.prefix(5), InvalidArgument);
    EXPECT_THROW(CaseSeries({1, -1}), InvalidArgument);
    double prev = 0.0;
    for (double c : s.cumulative()) {
        EXPECT_GE(c, prev);
        prev = c;
    }
}

TEST(Estimators, ExactOnGeometricCumulative)
{
    const double r = 0.0387;
    const auto s = geometric_cumulative(5.0, r, 120);
    EXPECT_NEAR(est_a_log_cumulative(s), r, 1e-12);
    EXPECT_NEAR(est_b_log_daily(s), r, 1e-12);
    EXPECT_NEAR(est_c_mean_ratio(s), r, 1e-12);
    EXPECT_NEAR(est_d_branching(s), r, 1e-12);
    EXPECT_NEAR(est_c_mean_ratio(s, 42, RatioScale::RatioMinusOne), std::expm1(r), 1e-12);
}

TEST(Estimators, GeometricDailySeries)
{
    const double r = 0.04;
    const auto s = geometric_daily(2.0, r, 400);
    EXPECT_NEAR(est_b_log_daily(s), r, 1e-12);
    EXPECT_NEAR(est_d_branching(s), r, 1e-12);
    // Cumulative of a geometric daily series approaches slope r once the start is forgotten.
    EXPECT_NEAR(est_a_log_cumulative(s), r, 1e-4);
    EXPECT_NEAR(est_c_mean_ratio(s), r, 1e-4);
}

TEST(Estimators, RoundedExponentialIsClose)
{
    std::vector<double> cumulative;
    for (int t = 1; t <= 200; ++t) {
        cumulative.push_back(std::round(5.0 * std::exp(0.0387 * t)));
    }
    std::vector<double> daily{cumulative[0]};
    for (std::size_t i = 1; i < cumulative.size(); ++i) {
        daily.push_back(cumulative[i] - cumulative[i - 1]);
    }
    EXPECT_NEAR(est_a_log_cumulative(CaseSeries(daily)), 0.0387, 1e-4);
}

TEST(Estimators, ConstantSeriesGivesZero)
{
    const CaseSeries flat(std::vector<double>(60, 7.0));
    EXPECT_NEAR(est_b_log_daily(flat), 0.0, 1e-15);
    EXPECT_NEAR(est_d_branching(flat), 0.0, 1e-15);
    std::vector<double> once(60, 0.0);
    once[0] = 100.0;
    const CaseSeries constant_cumulative(once);
    EXPECT_NEAR(est_a_log_cumulative(constant_cumulative), 0.0, 1e-15);
    EXPECT_NEAR(est_c_mean_ratio(constant_cumulative), 0.0, 1e-15);
    EXPECT_NEAR(est_d_branching(CaseSeries({3, 3}), 2), 0.0, 0.0);
}

TEST(Estimators, WindowOneRatio)
{
    const CaseSeries s({4, 1, 3});
    EXPECT_NEAR(est_c_mean_ratio(s, 1), std::log(8.0 / 5.0), 1e-15);
    EXPECT_THROW(est_c_mean_ratio(s, 3), InvalidArgument);
}

TEST(Estimators, ScaleInvariance)
{
    RandomStream rng(4, 0);
    std::vector<double> daily;
    for (int t = 1; t <= 90; ++t) {
        daily.push_back(std::round(3.0 * std::exp(0.04 * t) * rng.uniform(0.7, 1.3)) + 1.0);
    }
    std::vector<double> scaled = daily;
    for (double& n : scaled) {
        n *= 17.0;
    }
    const CaseSeries a(daily);
    const CaseSeries b(scaled);
    const auto w = discretize(GammaParams(3, 0.2), 80, Discretization::DayDifference);
    EXPECT_NEAR(est_a_log_cumulative(a), est_a_log_cumulative(b), 1e-12);
    EXPECT_NEAR(est_b_log_daily(a), est_b_log_daily(b), 1e-12);
    EXPECT_NEAR(est_c_mean_ratio(a), est_c_mean_ratio(b), 1e-12);
    EXPECT_NEAR(est_d_branching(a), est_d_branching(b), 1e-12);
    EXPECT_NEAR(est_e_renewal_R0(a, w), est_e_renewal_R0(b, w), 1e-12);
}

TEST(Estimators, ZeroDaysAreDroppedInDaily)
{
    std::vector<double> daily;
    for (int t = 1; t <= 50; ++t) {
        daily.push_back(t % 10 == 0 ? 0.0 : std::exp(0.05 * t));
    }
    // Dropping zero days keeps the remaining points on the exact line.
    EXPECT_NEAR(est_b_log_daily(CaseSeries(daily)), 0.05, 1e-12);
    EXPECT_THROW(est_b_log_daily(CaseSeries(std::vector<double>(50, 0.0))), InvalidArgument);
}

TEST(Estimators, WindowAndZeroErrors)
{
    const CaseSeries s({0, 0, 1, 2, 3});
    EXPECT_THROW(est_a_log_cumulative(s, 5), InvalidArgument);
    EXPECT_NO_THROW(est_a_log_cumulative(s, 3));
    EXPECT_THROW(est_a_log_cumulative(s, 6), InvalidArgument);
    EXPECT_THROW(est_c_mean_ratio(s, 3), InvalidArgument);
    EXPECT_THROW(est_d_branching(CaseSeries({0, 0, 0})), InvalidArgument);
}

TEST(Estimators, BranchingUsesWindowStart)
{
    const CaseSeries s({100, 1, 2, 4});
    EXPECT_NEAR(est_d_branching(s, 3), std::log(6.0 / 3.0), 1e-15);
}

TEST(Renewal, SelfConsistentRecovery)
{
    for (const auto& g : {GammaParams(3, 0.2), GammaParams(1, 0.3), GammaParams(6, 1.0)}) {
        for (auto scheme : {Discretization::UnitInterval, Discretization::DayDifference}) {
            const auto w = discretize(g, horizon_for(g), scheme);
            for (double R0 : {0.8, 1.7, 2.0, 3.5}) {
                const auto s = renewal_series(R0, w, 150);
                EXPECT_NEAR(est_e_renewal_R0(s, w), R0, 1e-12 * R0);
            }
        }
    }
}

TEST(Renewal, PressureTruncatesAtDayOne)
{
    const DiscreteDelay w({0.5, 0.3, 0.2});
    const std::vector<double> daily{10, 20, 30, 40};
    EXPECT_DOUBLE_EQ(renewal_pressure(daily, 1, w), 0.0);
    EXPECT_DOUBLE_EQ(renewal_pressure(daily, 2, w), 5.0);
    EXPECT_DOUBLE_EQ(renewal_pressure(daily, 3, w), 10.0 + 3.0);
    EXPECT_DOUBLE_EQ(renewal_pressure(daily, 4, w), 15.0 + 6.0 + 2.0);
    // Hand-computed estimate: (20 + 30 + 40) / (5 + 13 + 23).
    EXPECT_DOUBLE_EQ(est_e_renewal_R0(CaseSeries(daily), w), 90.0 / 41.0);
    EXPECT_THROW(est_e_renewal_R0(CaseSeries({5.0}), w), InvalidArgument);
}

TEST(Prediction, RMethodsMultiplyLastCumulative)
{
    const double r = 0.0387;
    const auto s = geometric_cumulative(5.0, r, 120);
    for (auto m : {Method::A, Method::B, Method::C, Method::D}) {
        const double pred = predict_forward(s, m);
        EXPECT_NEAR(pred / s.cumulative(120), std::exp(42 * r), 1e-9) << to_string(m);
    }
    // True factor at the exact Euler-Lotka rate for R0 = 1.7.
    EXPECT_NEAR(std::exp(42 * 0.0386966), 5.07973, 1e-4);
    EXPECT_THROW(predict_forward(s, Method::E), InvalidArgument);
    EXPECT_THROW(estimate_r(s, Method::E), InvalidArgument);
}

TEST(Prediction, RenewalProjectionContinuesSeries)
{
    const auto w = discretize(GammaParams(3, 0.2), 80, Discretization::DayDifference);
    const auto full = renewal_series(1.7, w, 200);
    const auto head = full.prefix(158);
    const double pred = predict_forward(head, Method::E, 42, 42, &w);
    EXPECT_NEAR(pred / full.cumulative(200), 1.0, 1e-10);
    const auto tail = renewal_projection(head, 1.7, w, 42);
    ASSERT_EQ(tail.size(), 42u);
    EXPECT_NEAR(tail.back(), full.daily(200), 1e-9 * full.daily(200));
}

TEST(Prediction, Score)
{
    const auto s = score_prediction(110.0, 100.0);
    EXPECT_DOUBLE_EQ(s.ratio, 1.1);
    EXPECT_THROW(score_prediction(1.0, 0.0), InvalidArgument);
}
