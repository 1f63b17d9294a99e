#include "tnd/shot_stats.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <gtest/gtest.h>

using namespace tnd;

TEST(Wilson, BalancedCenterIsHalf) {
    for (long n : {1L, 5L, 50L, 1001L}) EXPECT_EQ(wilson_interval({n, n}).center, 0.5);
}

TEST(Wilson, AllZeros) {
    const auto w = wilson_interval({100, 0}, 1.645);
    EXPECT_NEAR(w.center, 0.98683, 5e-6);
    EXPECT_NEAR(w.half_width, 0.01317, 5e-6);
    EXPECT_NEAR(w.center + w.half_width, 1.0, 1e-12);  // zero failures put the upper end at 1
}

TEST(Wilson, DirectFormula) {
    const double z = 1.96, n0 = 37, n = 100;
    const double p = n0 / n;
    const double denom = 1 + z * z / n;
    const auto w = wilson_interval({37, 63}, z);
    EXPECT_NEAR(w.center, (p + z * z / (2 * n)) / denom, 1e-15);
    EXPECT_NEAR(w.half_width, z / denom * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n)), 1e-15);
}

TEST(Wilson, StaysInUnitInterval) {
    Rng rng(80);
    for (int k = 0; k < 10000; ++k) {
        const ShotTally t{static_cast<long>(rng.below(500)), static_cast<long>(rng.below(500))};
        if (t.n() == 0) continue;
        const auto w = wilson_interval(t, 0.5 + 3 * rng.uniform());
        EXPECT_GE(w.center - w.half_width, -1e-15);
        EXPECT_LE(w.center + w.half_width, 1 + 1e-15);
    }
}

TEST(Wilson, RejectsEmptyTally) {
    EXPECT_THROW(wilson_interval({0, 0}), InvalidArgument);
    EXPECT_THROW(wilson_interval({1, 0}, 0.0), InvalidArgument);
}

TEST(Bayes, InitialState) {
    const BayesState s;
    EXPECT_EQ(s.p_less, 0.5);
    EXPECT_EQ(s.B, 4.0);
}

TEST(Bayes, SingleObservations) {
    EXPECT_DOUBLE_EQ(bayes_step({}, 0).p_less, 0.25);
    EXPECT_DOUBLE_EQ(bayes_step({}, 1).p_less, 0.75);
    EXPECT_THROW(bayes_step({}, 2), InvalidArgument);
}

TEST(Bayes, MatchesIncompleteBetaForAllHistories) {
    // walk every (n0, n1) with n <= 200 along the n0-then-n1 order
    double worst = 0.0;
    for (long a = 0; a <= 200; ++a) {
        BayesState s;
        for (long k = 0; k < a; ++k) s = bayes_step(s, 0);
        for (long b = 0; a + b <= 200; ++b) {
            if (b > 0) s = bayes_step(s, 1);
            const double direct = boost::math::ibeta(static_cast<double>(a + 1), static_cast<double>(b + 1), 0.5);
            worst = std::max(worst, std::abs(s.p_less - direct));
        }
    }
    EXPECT_LT(worst, 1e-10);
}

TEST(Bayes, MixedOrderMatchesIncompleteBeta) {
    Rng rng(81);
    BayesState s;
    for (int k = 0; k < 200; ++k) {
        s = bayes_step(s, rng.uniform() < 0.3 ? 0 : 1);
        const double direct =
            boost::math::ibeta(static_cast<double>(s.n0 + 1), static_cast<double>(s.n1 + 1), 0.5);
        EXPECT_NEAR(s.p_less, direct, 1e-12);
    }
}

TEST(Bayes, SwapSymmetry) {
    Rng rng(82);
    BayesState a, b;
    for (int k = 0; k < 60; ++k) {
        const int o = rng.uniform() < 0.6 ? 0 : 1;
        a = bayes_step(a, o);
        b = bayes_step(b, 1 - o);
        EXPECT_NEAR(a.p_less, 1.0 - b.p_less, 1e-13);
    }
}

TEST(ClassFromSamples, PureZeroHaltsWhenTailDropsBelowThreshold) {
    // p_less after k zeros is 2^-(k+1): 1/4, 1/8, 1/16 < 0.1
    const auto r = class_from_samples(0.9, [] { return 0; });
    EXPECT_EQ(r.label, 0);
    EXPECT_EQ(r.shots_used, 3);
    EXPECT_EQ(r.map_estimate, 1.0);
    EXPECT_FALSE(r.capped);
}

TEST(ClassFromSamples, PureOneIsSymmetric) {
    const auto r = class_from_samples(0.9, [] { return 1; });
    EXPECT_EQ(r.label, 1);
    EXPECT_EQ(r.shots_used, 3);
    EXPECT_EQ(r.map_estimate, 0.0);
}

TEST(ClassFromSamples, StricterThresholdNeedsMoreShots) {
    // 2^-(k+1) < 0.01 first at k = 6
    EXPECT_EQ(class_from_samples(0.99, [] { return 0; }).shots_used, 6);
}

TEST(ClassFromSamples, ConfusedSamplerHitsCap) {
    Rng rng(83);
    int capped = 0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<int> seen;
        const auto r = class_from_samples(
            0.9,
            [&] {
                seen.push_back(rng.uniform() < 0.5 ? 0 : 1);
                return seen.back();
            },
            50);
        if (!r.capped) continue;
        ++capped;
        EXPECT_EQ(r.shots_used, 50);
        const long zeros = std::count(seen.begin(), seen.end(), 0);
        EXPECT_EQ(r.label, zeros >= 25 ? 0 : 1);
        EXPECT_DOUBLE_EQ(r.map_estimate, zeros / 50.0);
    }
    EXPECT_GE(capped, 10);
}

TEST(ClassFromSamples, DeterministicSampler) {
    auto make = [] {
        return [k = 0]() mutable { return (k++ % 3 == 0) ? 1 : 0; };
    };
    const auto a = class_from_samples(0.95, make()), b = class_from_samples(0.95, make());
    EXPECT_EQ(a.label, b.label);
    EXPECT_EQ(a.shots_used, b.shots_used);
}

TEST(ClassFromSamples, Guards) {
    EXPECT_THROW(class_from_samples(0.9, [] { return 0; }, 0), InvalidArgument);
    EXPECT_THROW(class_from_samples(0.5, [] { return 0; }), InvalidArgument);
    EXPECT_EQ(default_shot_cap(0.9), 1000);
}
