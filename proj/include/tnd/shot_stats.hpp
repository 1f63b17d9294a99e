#pragma once

#include "tnd/common.hpp"

namespace tnd {

struct ShotTally {
    long n0 = 0;
    long n1 = 0;
    long n() const { return n0 + n1; }
};

struct WilsonInterval {
    double center = 0.0;
    double half_width = 0.0;
};

/// Wilson score interval for the class-0 fraction.
inline WilsonInterval wilson_interval(const ShotTally& t, double z = 1.645) {
    require(t.n0 >= 0 && t.n1 >= 0, "wilson_interval: negative count");
    require(t.n() >= 1, "wilson_interval: need at least one shot");
    require(z > 0, "wilson_interval: z must be positive");
    const double n = static_cast<double>(t.n()), z2 = z * z;
    const double n0 = static_cast<double>(t.n0), n1 = static_cast<double>(t.n1);
    return {(n0 + z2 / 2) / (n + z2), z / (n + z2) * std::sqrt(n0 * n1 / n + z2 / 4)};
}

/// Posterior state under a uniform prior on p0. p_less = I_{1/2}(n0+1, n1+1)
/// and B = 2^(n0+n1+2) Beta(n0+1, n1+1).
struct BayesState {
    long n0 = 0;
    long n1 = 0;
    double p_less = 0.5;
    double B = 4.0;

    double map_estimate() const { return n0 + n1 == 0 ? 0.5 : static_cast<double>(n0) / static_cast<double>(n0 + n1); }
};

inline BayesState bayes_step(BayesState s, int observation) {
    require(observation == 0 || observation == 1, "bayes_step: observation must be 0 or 1");
    const double total = static_cast<double>(s.n0 + s.n1 + 2);
    if (observation == 0) {
        s.p_less -= 1.0 / (static_cast<double>(s.n0 + 1) * s.B);
        s.B = 2.0 * s.B * static_cast<double>(s.n0 + 1) / total;
        ++s.n0;
    } else {
        s.p_less += 1.0 / (static_cast<double>(s.n1 + 1) * s.B);
        s.B = 2.0 * s.B * static_cast<double>(s.n1 + 1) / total;
        ++s.n1;
    }
    return s;
}

struct ClassCall {
    int label = 0;
    long shots_used = 0;
    double map_estimate = 0.5;
    /// the shot cap was reached before the credible-interval test passed
    bool capped = false;
};

inline long default_shot_cap(double p_star) {
    const double r = 1.0 / ((1.0 - p_star) * (1.0 - p_star));
    return 10 * static_cast<long>(std::ceil(r - 1e-9));
}

/// Draws shots until [0, 1/2] or (1/2, 1] holds p0 with posterior probability
/// above p_star, or the cap is reached (label from the larger tally, ties to 0).
inline ClassCall class_from_samples(double p_star, const std::function<int()>& sampler, long shot_cap) {
    require(p_star > 0.5 && p_star < 1.0, "class_from_samples: p_star must lie in (1/2, 1)");
    require(shot_cap > 0, "class_from_samples: shot cap must be positive");
    BayesState s;
    while (s.n0 + s.n1 < shot_cap) {
        s = bayes_step(s, sampler());
        if (s.p_less > p_star) return {1, s.n0 + s.n1, s.map_estimate(), false};
        if (s.p_less < 1.0 - p_star) return {0, s.n0 + s.n1, s.map_estimate(), false};
    }
    return {s.n1 > s.n0 ? 1 : 0, s.n0 + s.n1, s.map_estimate(), true};
}

inline ClassCall class_from_samples(double p_star, const std::function<int()>& sampler) {
    require(p_star > 0.5 && p_star < 1.0, "class_from_samples: p_star must lie in (1/2, 1)");
    return class_from_samples(p_star, sampler, default_shot_cap(p_star));
}

}  // namespace tnd
