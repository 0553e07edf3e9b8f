#include <algorithm>
#include <array>
#include <cmath>
#include <map>

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace distrn;

namespace {

const std::vector<Interval> kDefaultBounds{Interval{0.0, 14.0}};

struct Sampled {
    double mean;
    double var;
    double min;
    double max;
};

Sampled sample_moments(const TruncGaussParams& p, std::size_t count, std::uint64_t seed)
{
    Stream rng = Stream::derive(seed, "test-sampler");
    double sum = 0.0;
    double sum2 = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < count; ++i) {
        const double v = trunc_gauss_sample(p, rng);
        sum += v;
        sum2 += v * v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double mean = sum / static_cast<double>(count);
    return {mean, sum2 / static_cast<double>(count) - mean * mean, lo, hi};
}

// Second, independent evaluation of the amplification bound.
double amplified_reference(double e0, double delta, double n)
{
    const double a = std::exp(e0) - 1.0;
    const double b = 4.0 * std::sqrt(2.0 * std::log(4.0 / delta)) / std::sqrt((std::exp(e0) + 1.0) * n);
    return std::log(1.0 + a * (b + 4.0 / n));
}

} // namespace

TEST(TruncGauss, MomentsMatchQuadrature)
{
    const Moments m = trunc_gauss_moments({0.2, 0.5, 0.0, 1.0});
    EXPECT_NEAR(m.mean, 0.41423550323676866977, 1e-14);
    EXPECT_NEAR(m.variance, 0.068917812816929578338, 1e-14);
}

TEST(TruncGauss, MomentLimits)
{
    const Moments wide = trunc_gauss_moments({3.0, 0.7, 3.0 - 40 * 0.7, 3.0 + 40 * 0.7});
    EXPECT_NEAR(wide.mean, 3.0, 1e-10);
    EXPECT_NEAR(wide.variance, 0.49, 1e-10);
    const Moments sym = trunc_gauss_moments({5.0, 2.0, 0.0, 10.0});
    EXPECT_DOUBLE_EQ(sym.mean, 5.0);
    EXPECT_THROW(trunc_gauss_moments({0.0, 1e-3, 10.0, 11.0}), ConfigError);
}

TEST(TruncGauss, DensityIntegratesToOne)
{
    const TruncGaussParams p{0.2, 0.5, 0.0, 1.0};
    const double z = normal::mass(p.alpha(), p.beta());
    const int steps = 20000;
    const double h = (p.upper - p.lower) / steps;
    double total = 0.0;
    for (int i = 0; i < steps; ++i) {
        const double t = p.lower + (i + 0.5) * h;
        total += normal::pdf((t - p.mu) / p.sigma) / (p.sigma * z) * h;
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
}

TEST(TruncGauss, SamplerMatchesMoments)
{
    const TruncGaussParams p{0.2, 0.5, 0.0, 1.0};
    const Moments m = trunc_gauss_moments(p);
    const Sampled s = sample_moments(p, 1'000'000, 1);
    EXPECT_NEAR(s.mean, m.mean, 0.01 * m.mean);
    EXPECT_NEAR(s.var, m.variance, 0.01 * m.variance);
    EXPECT_GT(s.min, 0.0);
    EXPECT_LE(s.max, 1.0);
}

TEST(TruncGauss, SymmetricWindowMean)
{
    const TruncGaussParams p{7.0, 3.0, 0.0, 14.0};
    const Sampled s = sample_moments(p, 1'000'000, 2);
    EXPECT_NEAR(s.mean, 7.0, 4.0 * 3.0 / 1000.0);
}

TEST(TruncGauss, InverseCdfPathForNarrowWindow)
{
    // Window mass ~ 0.006, below the rejection threshold.
    const TruncGaussParams p{0.0, 2.0, 0.0, 0.03};
    ASSERT_LT(normal::mass(p.alpha(), p.beta()), kRejectionAcceptanceFloor);
    const Moments m = trunc_gauss_moments(p);
    const Sampled s = sample_moments(p, 200'000, 3);
    EXPECT_GT(s.min, 0.0);
    EXPECT_LE(s.max, 0.03);
    EXPECT_NEAR(s.mean, m.mean, 0.01 * m.mean);
    EXPECT_NEAR(s.var, m.variance, 0.02 * m.variance);
}

TEST(TruncGauss, RejectsInvalidParameters)
{
    Stream rng(1);
    EXPECT_THROW(trunc_gauss_sample({0.5, 0.0, 0.0, 1.0}, rng), ConfigError);
    EXPECT_THROW(trunc_gauss_sample({0.5, 1.0, 1.0, 1.0}, rng), ConfigError);
    EXPECT_THROW(trunc_gauss_sample({2.0, 1.0, 0.0, 1.0}, rng), ConfigError);
}

TEST(Calibration, GoldenSigmaThreeActive)
{
    const std::vector<bool> active(3, true);
    const Calibration cal = calibrate_sigma(1.0, 1e-5, kDefaultBounds, active);
    EXPECT_NEAR(cal.sigma, 0.015578909721749948, 1e-8);
    EXPECT_NEAR(cal.log_delta_c, 0.00088695057346100368, 1e-9);
    EXPECT_NEAR(cal.offset.norm(), 1e-5, 1e-12);
    EXPECT_TRUE(cal.offset_approximate);

    // Re-substitution at sigma and 0.99 sigma with the offset recomputed.
    EXPECT_TRUE(sigma_feasible(cal.sigma, 1.0, 1e-5, kDefaultBounds, active));
    EXPECT_FALSE(sigma_feasible(0.99 * cal.sigma, 1.0, 1e-5, kDefaultBounds, active));
    const double rhs = calibration_rhs(cal.sigma, cal.offset, 1.0, 1e-5, kDefaultBounds, active);
    EXPECT_GE(cal.sigma * cal.sigma, rhs);
}

TEST(Calibration, InactiveEntriesDropOut)
{
    const Calibration two = calibrate_sigma(1.0, 1e-5, kDefaultBounds, {true, false, true});
    const Calibration two_only = calibrate_sigma(1.0, 1e-5, kDefaultBounds, {true, true});
    EXPECT_NEAR(two.sigma, two_only.sigma, 1e-12);
    EXPECT_EQ(two.offset(1), 0.0);
    const Calibration three = calibrate_sigma(1.0, 1e-5, kDefaultBounds, {true, true, true});
    EXPECT_LT(two.sigma, three.sigma);
}

TEST(Calibration, MonotoneInEpsilon)
{
    double prev = std::numeric_limits<double>::infinity();
    for (double e0 : {0.5, 1.0, 2.0, 4.0}) {
        const double sigma = calibrate_sigma(e0, 1e-5, kDefaultBounds, {true, true, true}).sigma;
        EXPECT_LE(sigma, prev);
        prev = sigma;
    }
}

TEST(Calibration, WorstOffsetBeatsRandomFeasiblePoints)
{
    const std::vector<Interval> bounds{{0.0, 14.0}, {0.0, 3.0}, {1.0, 2.0}};
    const std::vector<bool> active(3, true);
    const double sigma = 0.05;
    const double k = 0.2;
    const Vector best = worst_case_offset(sigma, k, bounds, active);
    EXPECT_LE(best.norm(), k * (1 + 1e-12));
    EXPECT_GE(best.minCoeff(), 0.0);
    const double top = log_delta_c(sigma, best, bounds, active);
    Stream rng(11);
    for (int trial = 0; trial < 2000; ++trial) {
        Vector c(3);
        for (int r = 0; r < 3; ++r)
            c(r) = rng.uniform_open_closed();
        c *= k * std::pow(rng.uniform_open_closed(), 1.0 / 3.0) / c.norm();
        EXPECT_LE(log_delta_c(sigma, c, bounds, active), top + 1e-12);
    }
}

TEST(Calibration, Errors)
{
    EXPECT_THROW(calibrate_sigma(0.0, 1e-5, kDefaultBounds, {true}), ConfigError);
    EXPECT_THROW(calibrate_sigma(1.0, 0.0, kDefaultBounds, {true}), ConfigError);
    EXPECT_THROW(calibrate_sigma(1.0, 1e-5, kDefaultBounds, {false, false}), ConfigError);
    EXPECT_THROW(calibrate_sigma(1e-3, 5.0, kDefaultBounds, {true, true, true}), CalibrationError);
}

TEST(Mechanism, ZerosStayZeroAndSupportHolds)
{
    Vector zeta(4);
    zeta << 2.0, 0.0, 5.0, 14.0;
    Stream rng(5);
    for (int trial = 0; trial < 10000; ++trial) {
        const Vector out = bounded_gaussian_randomize(zeta, kDefaultBounds, 1.5, rng);
        ASSERT_EQ(out(1), 0.0);
        for (Eigen::Index r : {0, 2, 3}) {
            ASSERT_GT(out(r), 0.0);
            ASSERT_LE(out(r), 14.0);
        }
    }
    const Vector zero = Vector::Zero(3);
    EXPECT_EQ(bounded_gaussian_randomize(zero, kDefaultBounds, 1.0, rng), zero);
}

TEST(Mechanism, EntryMeansMatchMoments)
{
    Vector zeta(3);
    zeta << 2.0, 0.0, 5.0;
    const double sigma = 3.0;
    Stream rng(6);
    Vector sum = Vector::Zero(3);
    const int runs = 100'000;
    for (int i = 0; i < runs; ++i)
        sum += bounded_gaussian_randomize(zeta, kDefaultBounds, sigma, rng);
    sum /= runs;
    EXPECT_NEAR(sum(0), trunc_gauss_moments({2.0, sigma, 0.0, 14.0}).mean, 0.01 * sum(0));
    EXPECT_EQ(sum(1), 0.0);
    EXPECT_NEAR(sum(2), trunc_gauss_moments({5.0, sigma, 0.0, 14.0}).mean, 0.01 * sum(2));
}

TEST(Mechanism, DegenerateNoise)
{
    Vector zeta(2);
    zeta << 3.0, 0.5;
    Stream rng(7);
    const Vector out = bounded_gaussian_randomize(zeta, kDefaultBounds, 1e-9, rng);
    EXPECT_LT((out - zeta).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Mechanism, OutOfBoundsIsError)
{
    Vector zeta(2);
    zeta << 15.0, 1.0;
    Stream rng(8);
    EXPECT_THROW(bounded_gaussian_randomize(zeta, kDefaultBounds, 1.0, rng), ConfigError);
}

TEST(Shuffle, PreservesMultiset)
{
    Stream rng(9);
    std::vector<int> items{5, 1, 4, 1, 3, 9, 2};
    auto out = shuffle(items, rng);
    std::sort(items.begin(), items.end());
    std::sort(out.begin(), out.end());
    EXPECT_EQ(items, out);
    EXPECT_EQ(shuffle(std::vector<int>{42}, rng), std::vector<int>{42});
}

TEST(Shuffle, UniformOverPermutations)
{
    Stream rng(10);
    std::map<std::array<int, 4>, int> counts;
    const int runs = 100'000;
    for (int i = 0; i < runs; ++i) {
        const auto v = shuffle(std::vector<int>{0, 1, 2, 3}, rng);
        counts[{v[0], v[1], v[2], v[3]}]++;
    }
    ASSERT_EQ(counts.size(), 24u);
    const double expected = runs / 24.0;
    double chi2 = 0.0;
    for (const auto& [perm, c] : counts)
        chi2 += (c - expected) * (c - expected) / expected;
    const double p = boost::math::cdf(boost::math::complement(boost::math::chi_squared(23), chi2));
    EXPECT_GT(p, 1e-3);
}

TEST(Amplification, GoldenValue)
{
    EXPECT_NEAR(amplified_epsilon(1.0, 0.01, 10000), 0.11695868252919921575, 1e-14);
    EXPECT_NEAR(amplified_epsilon(1.0, 0.01, 10000), amplified_reference(1.0, 0.01, 10000), 1e-14);
}

TEST(Amplification, LimitsAndMonotonicity)
{
    EXPECT_LT(amplified_epsilon(1e-9, 0.01, 1000), 1e-9);
    EXPECT_LE(amplified_epsilon(1.0, 0.01, 1000), 1.0);
    const double a = amplified_epsilon(0.25, 0.01, 100);
    const double b = amplified_epsilon(0.25, 0.01, 400);
    const double c = amplified_epsilon(0.25, 0.01, 1600);
    EXPECT_GT(a, b);
    EXPECT_GT(b, c);
    EXPECT_LT(amplified_epsilon(0.5, 0.01, 1000), amplified_epsilon(1.0, 0.01, 1000));
}

TEST(Amplification, ValidityCondition)
{
    EXPECT_FALSE(amplification_applies(1.0, 0.01, 100));
    EXPECT_THROW(amplified_epsilon(1.0, 0.01, 100), ConfigError);
    EXPECT_THROW(amplified_epsilon(1.0, 1.5, 10000), ConfigError);
    EXPECT_TRUE(amplification_applies(0.25, 0.01, 100));
}

TEST(Rng, StreamsAreReproducibleAndDistinct)
{
    Stream a = Stream::derive(1, "local_authority", 3, 7);
    Stream b = Stream::derive(1, "local_authority", 3, 7);
    Stream c = Stream::derive(1, "local_authority", 4, 7);
    Stream d = Stream::derive(1, "shuffler", 3, 7);
    const auto va = a();
    EXPECT_EQ(va, b());
    EXPECT_NE(va, c());
    EXPECT_NE(va, d());
    EXPECT_EQ(a.position(), 1u);
    for (int i = 0; i < 1000; ++i) {
        const double u = a.uniform_open_closed();
        ASSERT_GT(u, 0.0);
        ASSERT_LE(u, 1.0);
        ASSERT_LT(a.below(7), 7u);
    }
}
