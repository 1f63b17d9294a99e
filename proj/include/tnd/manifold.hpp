#pragma once

#include "tnd/common.hpp"

#include <deque>
#include <limits>

namespace tnd {

enum class ManifoldKind { Sphere, Stiefel };

/// A point on the unit sphere (stored as an n x 1 matrix) or on the real
/// Stiefel manifold St(n, p).
struct ManifoldPoint {
    ManifoldKind kind = ManifoldKind::Sphere;
    Mat value;

    static ManifoldPoint sphere(const Vec& v) { return {ManifoldKind::Sphere, v}; }
    static ManifoldPoint stiefel(const Mat& m) { return {ManifoldKind::Stiefel, m}; }

    /// |x| - 1 for the sphere, ||X^T X - I|| for Stiefel.
    double invariant_residual() const {
        if (kind == ManifoldKind::Sphere) return std::abs(value.norm() - 1.0);
        return (value.transpose() * value - Mat::Identity(value.cols(), value.cols())).norm();
    }
};

inline Mat tangent_project(const ManifoldPoint& x, const Mat& g) {
    require(g.rows() == x.value.rows() && g.cols() == x.value.cols(), "tangent_project: shape mismatch");
    if (x.kind == ManifoldKind::Sphere) {
        const double a = (x.value.array() * g.array()).sum();
        return g - a * x.value;
    }
    return g - x.value * sym(x.value.transpose() * g);
}

/// Q factor of a thin QR with diag(R) > 0. Throws RetractionFailure when the
/// input is (numerically) rank deficient.
inline Mat qr_positive(const Mat& m) {
    Eigen::HouseholderQR<Mat> qr(m);
    const Eigen::Index p = m.cols();
    Mat q = qr.householderQ() * Mat::Identity(m.rows(), p);
    const auto& r = qr.matrixQR();
    const double scale = std::max(m.norm(), 1e-300);
    for (Eigen::Index j = 0; j < p; ++j) {
        if (!(std::abs(r(j, j)) > 1e-13 * scale)) throw RetractionFailure("retract: rank-deficient X + xi");
        if (r(j, j) < 0) q.col(j) *= -1.0;
    }
    return q;
}

inline ManifoldPoint retract(const ManifoldPoint& x, const Mat& xi) {
    require(xi.rows() == x.value.rows() && xi.cols() == x.value.cols(), "retract: shape mismatch");
    const Mat y = x.value + xi;
    if (x.kind == ManifoldKind::Sphere) {
        const double n = y.norm();
        if (!(n > 1e-300) || !std::isfinite(n)) throw RetractionFailure("retract: zero vector on sphere");
        return {x.kind, y / n};
    }
    return {x.kind, qr_positive(y)};
}

/// Random point: normalized Gaussian vector or QR of a Gaussian matrix.
inline ManifoldPoint random_point(ManifoldKind kind, Eigen::Index n, Eigen::Index p, Rng& rng) {
    if (kind == ManifoldKind::Sphere) {
        Vec v = rng.normal_matrix(n, 1);
        return ManifoldPoint::sphere(v / v.norm());
    }
    return ManifoldPoint::stiefel(random_isometry(rng, n, p));
}

// ---------------------------------------------------------------------------
// Minimization

using Points = std::vector<ManifoldPoint>;

/// Returns the cost. When grad is non-null, also writes one ambient (Euclidean)
/// gradient per point; entries for inactive points may be left untouched.
using ManifoldCost = std::function<double(const Points&, std::vector<Mat>* grad)>;

enum class GradMode { Analytic, FiniteDifference };

struct MinimizeConfig {
    double step = 0.1;
    double momentum = 0.5;
    /// Polak-Ribiere+ momentum coefficient (nonlinear conjugate gradient)
    /// instead of the fixed one
    bool adaptive_momentum = false;
    /// when positive, quasi-Newton directions from this many stored pairs
    /// replace momentum
    int lbfgs_memory = 0;
    int max_iters = 500;
    double grad_tol = 1e-6;
    GradMode grad_mode = GradMode::Analytic;
    /// relative step of central differences
    double fd_step = 1e-6;
    double armijo_c = 1e-4;
    int max_halvings = 30;
    /// steps with relative decrease below stall_rel in a row before giving up
    int stall_steps = 50;
    double stall_rel = 1e-12;
    /// which points move; empty means all
    std::vector<bool> active;
};

struct MinimizeResult {
    Points x;
    double cost = 0.0;
    int iters = 0;
    bool converged = false;
    bool stalled = false;
    double grad_norm = 0.0;
    /// worst manifold-invariant residual over every emitted iterate
    double max_invariant_residual = 0.0;
    std::vector<double> trace;
};

/// Central finite-difference ambient gradient of cost at the active points.
inline std::vector<Mat> fd_gradient(const ManifoldCost& cost, const Points& x, const std::vector<bool>& active,
                                    double rel_step) {
    std::vector<Mat> g(x.size());
    struct Coord {
        std::size_t p;
        Eigen::Index i;
    };
    std::vector<Coord> coords;
    for (std::size_t p = 0; p < x.size(); ++p) {
        g[p] = Mat::Zero(x[p].value.rows(), x[p].value.cols());
        if (!active.empty() && !active[p]) continue;
        for (Eigen::Index i = 0; i < x[p].value.size(); ++i) coords.push_back({p, i});
    }
    parallel_for(coords.size(), [&](std::size_t k) {
        const auto [p, i] = coords[k];
        Points y = x;
        const double v = x[p].value.data()[i];
        const double h = rel_step * std::max(1.0, std::abs(v));
        y[p].value.data()[i] = v + h;
        const double fp = cost(y, nullptr);
        y[p].value.data()[i] = v - h;
        const double fm = cost(y, nullptr);
        g[p].data()[i] = (fp - fm) / (2 * h);
    });
    return g;
}

/// Riemannian gradient descent with Armijo backtracking. Search directions
/// mix in the previous direction (momentum) or come from a limited-memory
/// BFGS recursion; either way, vectors from earlier iterates are carried over
/// by projection onto the current tangent space. Momentum step sizes grow by 2
/// after each accepted step.
inline MinimizeResult minimize(const ManifoldCost& cost, Points x, const MinimizeConfig& cfg) {
    require(!x.empty(), "minimize: no points");
    require(cfg.active.empty() || cfg.active.size() == x.size(), "minimize: active mask size");
    const std::size_t n = x.size();
    auto is_active = [&](std::size_t p) { return cfg.active.empty() || cfg.active[p]; };

    MinimizeResult res;
    auto check_iterate = [&](const Points& pts) {
        for (const auto& p : pts) res.max_invariant_residual = std::max(res.max_invariant_residual, p.invariant_residual());
    };
    auto riemannian_grad = [&](const Points& pts, double& f) {
        std::vector<Mat> g;
        if (cfg.grad_mode == GradMode::Analytic) {
            g.resize(n);
            for (std::size_t p = 0; p < n; ++p) g[p] = Mat::Zero(pts[p].value.rows(), pts[p].value.cols());
            f = cost(pts, &g);
        } else {
            f = cost(pts, nullptr);
            g = fd_gradient(cost, pts, cfg.active, cfg.fd_step);
        }
        for (std::size_t p = 0; p < n; ++p)
            g[p] = is_active(p) ? tangent_project(pts[p], g[p]) : Mat::Zero(g[p].rows(), g[p].cols());
        return g;
    };
    auto norm = [&](const std::vector<Mat>& v) {
        double s = 0;
        for (const auto& m : v) s += m.squaredNorm();
        return std::sqrt(s);
    };
    auto dot = [&](const std::vector<Mat>& a, const std::vector<Mat>& b) {
        double s = 0;
        for (std::size_t p = 0; p < n; ++p) s += (a[p].array() * b[p].array()).sum();
        return s;
    };
    auto transport = [&](const Points& at, std::vector<Mat>& v) {
        for (std::size_t p = 0; p < n; ++p) v[p] = is_active(p) ? tangent_project(at[p], v[p]) : Mat::Zero(v[p].rows(), v[p].cols());
    };
    std::deque<std::vector<Mat>> mem_s, mem_y;

    check_iterate(x);
    double f = 0.0;
    std::vector<Mat> g = riemannian_grad(x, f);
    require(std::isfinite(f), "minimize: cost not finite at x0");
    res.trace.push_back(f);
    std::vector<Mat> dir, g_prev;
    double t = cfg.step;
    int small_steps = 0;

    for (int it = 0; it < cfg.max_iters; ++it) {
        res.grad_norm = norm(g);
        if (res.grad_norm < cfg.grad_tol) {
            res.converged = true;
            break;
        }
        double beta = cfg.lbfgs_memory > 0 ? 0.0 : cfg.momentum;
        if (cfg.lbfgs_memory == 0 && cfg.adaptive_momentum && !g_prev.empty()) {
            double num = 0.0, den = 0.0;
            for (std::size_t p = 0; p < n; ++p) {
                if (!is_active(p)) continue;
                num += (g[p].array() * (g[p] - tangent_project(x[p], g_prev[p])).array()).sum();
                den += g_prev[p].squaredNorm();
            }
            beta = den > 0 ? std::max(0.0, num / den) : 0.0;
        }
        std::vector<Mat> d(n);
        double slope = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            d[p] = -g[p];
            if (!dir.empty() && beta != 0.0 && is_active(p)) d[p] += beta * tangent_project(x[p], dir[p]);
            slope += (d[p].array() * g[p].array()).sum();
        }
        if (cfg.lbfgs_memory > 0 && !mem_s.empty()) {
            std::vector<Mat> q = g;
            const std::size_t m = mem_s.size();
            std::vector<double> alpha(m), rho(m);
            for (std::size_t k = m; k-- > 0;) {
                rho[k] = 1.0 / dot(mem_s[k], mem_y[k]);
                alpha[k] = rho[k] * dot(mem_s[k], q);
                for (std::size_t p = 0; p < n; ++p) q[p] -= alpha[k] * mem_y[k][p];
            }
            const double gamma = dot(mem_s.back(), mem_y.back()) / dot(mem_y.back(), mem_y.back());
            for (auto& v : q) v *= gamma;
            for (std::size_t k = 0; k < m; ++k) {
                const double b = rho[k] * dot(mem_y[k], q);
                for (std::size_t p = 0; p < n; ++p) q[p] += (alpha[k] - b) * mem_s[k][p];
            }
            transport(x, q);
            for (std::size_t p = 0; p < n; ++p) d[p] = -q[p];
            slope = dot(d, g);
            t = 1.0;
        }
        if (!(slope < 0)) {
            for (std::size_t p = 0; p < n; ++p) d[p] = -g[p];
            slope = -res.grad_norm * res.grad_norm;
            mem_s.clear();
            mem_y.clear();
        }
        const double dnorm = norm(d);
        // keep the first trial step from leaving the chart entirely
        t = std::min(t, 1.0 / std::max(dnorm, 1e-300));

        bool accepted = false;
        Points y;
        double fy = 0.0;
        for (int k = 0; k <= cfg.max_halvings; ++k, t *= 0.5) {
            try {
                y = x;
                for (std::size_t p = 0; p < n; ++p)
                    if (is_active(p)) y[p] = retract(x[p], t * d[p]);
            } catch (const RetractionFailure&) {
                continue;
            }
            fy = cost(y, nullptr);
            if (std::isfinite(fy) && fy <= f + cfg.armijo_c * t * slope) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            res.stalled = true;
            break;
        }
        dir = std::move(d);
        g_prev = g;
        const double decrease = f - fy;
        x = std::move(y);
        check_iterate(x);
        double fnew = 0.0;
        g = riemannian_grad(x, fnew);
        f = fnew;
        res.trace.push_back(f);
        res.iters = it + 1;
        if (cfg.lbfgs_memory > 0) {
            for (auto& pair : mem_s) transport(x, pair);
            for (auto& pair : mem_y) transport(x, pair);
            std::vector<Mat> s_new = dir, y_new = g_prev;
            for (auto& v : s_new) v *= t;
            transport(x, s_new);
            transport(x, y_new);
            for (std::size_t p = 0; p < n; ++p) y_new[p] = g[p] - y_new[p];
            if (dot(s_new, y_new) > 1e-12 * norm(s_new) * norm(y_new)) {
                mem_s.push_back(std::move(s_new));
                mem_y.push_back(std::move(y_new));
                if (static_cast<int>(mem_s.size()) > cfg.lbfgs_memory) {
                    mem_s.pop_front();
                    mem_y.pop_front();
                }
            }
        } else {
            t *= 2.0;
        }
        if (decrease < cfg.stall_rel * std::max(std::abs(f), 1e-300)) {
            if (++small_steps >= cfg.stall_steps) {
                res.stalled = true;
                break;
            }
        } else {
            small_steps = 0;
        }
    }
    res.grad_norm = norm(g);
    if (res.grad_norm < cfg.grad_tol) res.converged = true;
    res.x = std::move(x);
    res.cost = f;
    return res;
}

}  // namespace tnd
