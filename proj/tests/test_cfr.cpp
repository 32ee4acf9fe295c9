#include <cmath>

#include <gtest/gtest.h>

#include "epibias/cfr.hpp"
#include "oracles.hpp"

using namespace epibias;

namespace {

const double r_ebola = std::log(2.0) / 20.0;
const DelaySpec to_death = DelaySpec::exponential(9.0, DelayLabel::ToDeath);
const DelaySpec to_recovery = DelaySpec::exponential(17.0, DelayLabel::ToRecovery);

} // namespace

TEST(PiInfinity, ExponentialClosedForm)
{
    EXPECT_NEAR(r_ebola, 0.0347, 5e-5);
    EXPECT_NEAR(pi_infinity(r_ebola, to_death), 1.0 / (1.0 + 9.0 * r_ebola), 1e-14);
    EXPECT_NEAR(pi_infinity(r_ebola, to_death), 0.76, 0.005);
    EXPECT_NEAR(pi_infinity(r_ebola, to_recovery), 0.63, 0.005);
    EXPECT_DOUBLE_EQ(pi_infinity(0.0, to_death), 1.0);
    EXPECT_THROW(pi_infinity(-0.2, to_death), InvalidArgument);
}

TEST(PiInfinity, GammaClosedFormAgainstQuadrature)
{
    // pi = (1 + r E(D) / alpha)^(-alpha)
    for (double shape : {0.5, 1.0, 2.0, 4.0}) {
        const DelaySpec d{GammaParams(shape, shape / 9.0), DelayLabel::ToDeath};
        const double closed = std::pow(1.0 + r_ebola * 9.0 / shape, -shape);
        EXPECT_NEAR(pi_infinity(r_ebola, d), closed, 1e-13);
        EXPECT_NEAR(pi_infinity(r_ebola, d), oracle::gamma_laplace(shape, shape / 9.0, r_ebola), 1e-10);
    }
}

TEST(PiInfinity, DecreasingInRateAndShape)
{
    double prev = 1.0;
    for (double r = 0.001; r < 1.0; r += 0.001) {
        const double v = pi_infinity(r, to_death);
        ASSERT_LT(v, prev);
        prev = v;
    }
    // At fixed mean, a more concentrated delay leaves fewer outcomes visible.
    prev = 1.0;
    for (double shape = 0.2; shape < 20.0; shape += 0.1) {
        const double v = pi_infinity(r_ebola, DelaySpec{GammaParams(shape, shape / 9.0), DelayLabel::ToDeath});
        ASSERT_LT(v, prev) << "shape " << shape;
        prev = v;
    }
}

TEST(PiFinite, MatchesDisplayedIntegral)
{
    // Displayed form int_0^T r e^{-r(T-s)} H(T-s) ds, normalized by the
    // notifications' own mass 1 - e^{-rT}.
    for (double T : {5.0, 30.0, 100.0}) {
        const double raw = oracle::finite([&](double s) { return r_ebola * std::exp(-r_ebola * (T - s)) * (1.0 - std::exp(-(T - s) / 9.0)); }, 0.0, T);
        EXPECT_NEAR(pi_finite(T, r_ebola, to_death), raw / (1.0 - std::exp(-r_ebola * T)), 1e-10);
    }
}

TEST(PiFinite, ExponentialClosedForm)
{
    // H(u) = 1 - e^{-u/m}: r int_0^T e^{-ru}(1 - e^{-u/m}) du in closed form.
    const double m = 9.0;
    const double T = 40.0;
    const double r = r_ebola;
    const double k = r + 1.0 / m;
    const double num = (1.0 - std::exp(-r * T)) - r / k * (1.0 - std::exp(-k * T));
    EXPECT_NEAR(pi_finite(T, r, to_death), num / (1.0 - std::exp(-r * T)), 1e-12);
}

TEST(PiFinite, MonotoneConvergesToInfinity)
{
    EXPECT_DOUBLE_EQ(pi_finite(0.0, r_ebola, to_death), 0.0);
    double prev = 0.0;
    for (double T = 0.5; T <= 400.0; T += 0.5) {
        const double v = pi_finite(T, r_ebola, to_death);
        ASSERT_GE(v, prev - 1e-14);
        ASSERT_LE(v, pi_infinity(r_ebola, to_death) + 1e-12);
        prev = v;
    }
    EXPECT_NEAR(pi_finite(300.0, r_ebola, to_death), pi_infinity(r_ebola, to_death), 1e-4);
    EXPECT_NEAR(pi_finite(300.0, r_ebola, to_death), 0.76, 0.005);
}

TEST(PiFinite, ZeroGrowthAveragesCdf)
{
    const double T = 50.0;
    const double avg = oracle::finite([](double u) { return 1.0 - std::exp(-u / 9.0); }, 0.0, T) / T;
    EXPECT_NEAR(pi_finite(T, 0.0, to_death), avg, 1e-12);
    EXPECT_NEAR(pi_finite(T, 1e-13, to_death), avg, 1e-9);
    EXPECT_NEAR(pi_finite(1e5, 0.0, to_death), 1.0, 1e-3);
}

TEST(CorrectedNaive, RecoversTrueCfr)
{
    CfrCounts c{1000.0, 0.7 * pi_infinity(r_ebola, to_death) * 1000.0, 100.0, std::nullopt, r_ebola};
    const auto out = corrected_naive_cfr(c, to_death);
    EXPECT_NEAR(out.corrected, 0.7, 1e-12);
    EXPECT_FALSE(out.clipped);

    c.deaths = 532.0;
    EXPECT_NEAR(corrected_naive_cfr(c, to_death).corrected, 0.70, 0.005);

    c.horizon = 300.0;
    EXPECT_NEAR(corrected_naive_cfr(c, to_death).factor, pi_finite(300.0, r_ebola, to_death), 1e-15);

    c.deaths = 0.0;
    EXPECT_DOUBLE_EQ(corrected_naive_cfr(c, to_death).corrected, 0.0);
}

TEST(CorrectedNaive, ZeroGrowthFactorIsOne)
{
    const CfrCounts c{1000.0, 600.0, 300.0, 1e6, 0.0};
    const auto out = corrected_naive_cfr(c, to_death);
    EXPECT_NEAR(out.factor, 1.0, 1e-4);
    EXPECT_NEAR(out.corrected, 0.6, 1e-4);
}

TEST(CorrectedNaive, ClipsAndFlags)
{
    const CfrCounts c{100.0, 90.0, 0.0, std::nullopt, 0.2};
    const auto out = corrected_naive_cfr(c, to_death);
    EXPECT_TRUE(out.clipped);
    EXPECT_DOUBLE_EQ(out.corrected, 1.0);
    EXPECT_GT(out.unclipped, 1.0);
}

TEST(CorrectedNaive, RejectsBadCounts)
{
    EXPECT_THROW(corrected_naive_cfr(CfrCounts{0.0, 0.0, 0.0, {}, 0.01}, to_death), InvalidArgument);
    EXPECT_THROW(corrected_naive_cfr(CfrCounts{10.0, 8.0, 5.0, {}, 0.01}, to_death), InvalidArgument);
    EXPECT_THROW(corrected_naive_cfr(CfrCounts{10.0, 1.0, 1.0, 0.0, 0.01}, to_death), Error);
}

TEST(ResolvedCfr, EbolaIllustration)
{
    const double v = resolved_cfr_bias(0.7, r_ebola, to_death, to_recovery);
    EXPECT_NEAR(v, 0.738, 0.001);
    EXPECT_NEAR(v / 0.7 - 1.0, 0.05, 0.01);
    const double pi = 1.0 / (1.0 + 9.0 * r_ebola);
    const double rho = 1.0 / (1.0 + 17.0 * r_ebola);
    EXPECT_NEAR(v, 0.7 * pi / (0.7 * pi + 0.3 * rho), 1e-14);
}

TEST(ResolvedCfr, UnbiasedIffEqualFactorsAndDirection)
{
    EXPECT_NEAR(resolved_cfr_bias(0.3, r_ebola, to_death, DelaySpec::exponential(9.0, DelayLabel::ToRecovery)), 0.3, 1e-15);
    EXPECT_NEAR(resolved_cfr_bias(0.3, 0.0, to_death, to_recovery), 0.3, 1e-15);
    // Recovery faster than death: the resolved estimator underestimates.
    const double flu = resolved_cfr_bias(0.1, r_ebola, DelaySpec::exponential(17.0, DelayLabel::ToDeath),
                                         DelaySpec::exponential(9.0, DelayLabel::ToRecovery));
    EXPECT_LT(flu, 0.1);
    EXPECT_DOUBLE_EQ(resolved_cfr_bias(0.0, r_ebola, to_death, to_recovery), 0.0);
    EXPECT_DOUBLE_EQ(resolved_cfr_bias(1.0, r_ebola, to_death, to_recovery), 1.0);
}

TEST(Doubling, GrowthRate)
{
    EXPECT_NEAR(growth_rate_from_doubling(20.0), 0.034657, 1e-6);
    EXPECT_THROW(growth_rate_from_doubling(0.0), InvalidArgument);
}
