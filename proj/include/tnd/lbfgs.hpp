#pragma once

#include "tnd/common.hpp"

#include <deque>
#include <limits>

namespace tnd {

struct LbfgsConfig {
    int max_iters = 100;
    int memory = 10;
    double grad_tol = 1e-8;
    /// stop when the relative decrease of one accepted step falls below this
    double f_tol = 1e-14;
    double c1 = 1e-4;
    int max_halvings = 30;
    /// scale of the first trial step
    double initial_step = 1.0;
};

struct LbfgsResult {
    Vec x;
    double f = 0.0;
    int iters = 0;
    bool converged = false;
    /// true when a line search ran out of halvings
    bool line_search_failed = false;
    std::vector<double> trace;
};

/// fg(x, g) returns f(x) and writes the gradient into g.
using ValueGrad = std::function<double(const Vec&, Vec&)>;

/// Limited-memory BFGS with backtracking Armijo line search. Accepted steps
/// never increase f.
inline LbfgsResult lbfgs_minimize(const ValueGrad& fg, Vec x, const LbfgsConfig& cfg = {}) {
    LbfgsResult res;
    Vec g(x.size());
    double f = fg(x, g);
    require(std::isfinite(f), "lbfgs: cost not finite at start");
    res.trace.push_back(f);
    std::deque<Vec> S, Y;
    std::deque<double> rho;
    Vec gn(x.size());
    for (int it = 0; it < cfg.max_iters; ++it) {
        if (g.norm() < cfg.grad_tol) {
            res.converged = true;
            break;
        }
        // two-loop recursion
        Vec q = g;
        std::vector<double> alpha(S.size());
        for (int i = static_cast<int>(S.size()) - 1; i >= 0; --i) {
            alpha[i] = rho[i] * S[i].dot(q);
            q -= alpha[i] * Y[i];
        }
        if (!S.empty()) q *= S.back().dot(Y.back()) / Y.back().squaredNorm();
        for (std::size_t i = 0; i < S.size(); ++i) {
            const double beta = rho[i] * Y[i].dot(q);
            q += (alpha[i] - beta) * S[i];
        }
        Vec d = -q;
        double slope = g.dot(d);
        if (!(slope < 0)) {
            S.clear();
            Y.clear();
            rho.clear();
            d = -g;
            slope = -g.squaredNorm();
        }
        double t = S.empty() ? cfg.initial_step * std::min(1.0, 1.0 / std::max(g.norm(), 1e-300)) : 1.0;
        bool accepted = false;
        Vec xn;
        double fn = 0.0;
        for (int k = 0; k <= cfg.max_halvings; ++k, t *= 0.5) {
            xn = x + t * d;
            fn = fg(xn, gn);
            if (std::isfinite(fn) && fn <= f + cfg.c1 * t * slope) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            res.line_search_failed = true;
            break;
        }
        Vec s = xn - x, y = gn - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            S.push_back(s);
            Y.push_back(y);
            rho.push_back(1.0 / sy);
            if (static_cast<int>(S.size()) > cfg.memory) {
                S.pop_front();
                Y.pop_front();
                rho.pop_front();
            }
        }
        const double decrease = f - fn;
        x = std::move(xn);
        g = gn;
        f = fn;
        res.trace.push_back(f);
        res.iters = it + 1;
        if (decrease <= cfg.f_tol * std::max(1.0, std::abs(f))) {
            res.converged = true;
            break;
        }
    }
    if (g.norm() < cfg.grad_tol) res.converged = true;
    res.x = std::move(x);
    res.f = f;
    return res;
}

}  // namespace tnd
