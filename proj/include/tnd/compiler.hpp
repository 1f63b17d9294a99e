#pragma once

#include "tnd/circuit.hpp"
#include "tnd/lbfgs.hpp"

#include <set>

namespace tnd {

// ---------------------------------------------------------------------------
// Diagonal gauge

/// Hamming distances between the binary labels of the bond indices.
inline Mat hamming_matrix(int chi) {
    Mat d(chi, chi);
    for (int a = 0; a < chi; ++a)
        for (int b = 0; b < chi; ++b) d(a, b) = __builtin_popcount(static_cast<unsigned>(a ^ b));
    return d;
}

/// sum_ab Delta_ab sum_i [(W G^i W^T)_ab^2 + (W D^i W^T)_ab^2] and its
/// Euclidean gradient with respect to W.
inline double gauge_cost(const DiscriminatorTensors& t, const Mat& W, Mat* grad = nullptr) {
    const Mat delta = hamming_matrix(t.hyper.chi);
    double cost = 0.0;
    if (grad) *grad = Mat::Zero(W.rows(), W.cols());
    for (int i = 0; i < kPhys; ++i)
        for (const Mat& A : {t.gen(i), t.cond(i)}) {
            const Mat M = W * A * W.transpose();
            const Mat DM = delta.cwiseProduct(M);
            cost += DM.cwiseProduct(M).sum();
            if (grad) *grad += 2.0 * (DM * W * A.transpose() + DM.transpose() * W * A);
        }
    return cost;
}

struct GaugeResult {
    DiscriminatorTensors tensors;
    Mat W;
    double cost = 0.0;
    double initial_cost = 0.0;
    bool stalled = false;
};

/// Orthogonal bond rotation that concentrates G and D weight near the
/// diagonal, applied to all four tensors. Starts from the identity and from
/// `restarts` random rotations; the identity wins ties.
inline GaugeResult diagonal_gauge(const DiscriminatorTensors& t, std::uint64_t seed = 0, int restarts = 4) {
    t.validate();
    const int chi = t.hyper.chi;
    ManifoldCost cost = [&t](const Points& p, std::vector<Mat>* g) {
        return gauge_cost(t, p[0].value, g ? &(*g)[0] : nullptr);
    };
    GaugeResult best;
    best.W = Mat::Identity(chi, chi);
    best.initial_cost = best.cost = gauge_cost(t, best.W);
    MinimizeConfig mc;
    mc.lbfgs_memory = 10;
    mc.max_iters = 1000;
    mc.grad_tol = 1e-10;
    for (int r = 0; r <= restarts; ++r) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
        const Mat W0 = r == 0 ? Mat::Identity(chi, chi) : random_isometry(rng, chi, chi);
        const auto res = minimize(cost, {ManifoldPoint::stiefel(W0)}, mc);
        if (res.cost < best.cost - 1e-12) {
            best.W = res.x[0].value;
            best.cost = res.cost;
            best.stalled = res.stalled && !res.converged;
        }
    }
    best.tensors = apply_gauge(t, best.W);
    return best;
}

// ---------------------------------------------------------------------------
// Greedy beam-search compilation

struct CompileConfig {
    double tol = 4e-4;
    int beam = 5;
    /// largest CNOT count tried
    int cnot_budget = 64;
    int restarts = 3;
    /// allowed (control, target) pairs; empty means all ordered pairs
    std::vector<std::pair<int, int>> topology;
    std::uint64_t seed = 0;
    LbfgsConfig angles{.max_iters = 500, .memory = 10, .grad_tol = 1e-9, .f_tol = 1e-13};
};

struct CompileResult {
    ParamCircuit circuit;  // realizes the embedding itself, inverse already taken
    double distance = 0.0;
    /// best distance found up to each CNOT depth
    std::vector<double> trace;
};

namespace detail {

/// Distance of the circuit's constrained columns from the target and its
/// gradient with respect to the angles.
inline double compile_distance(const ParamCircuit& c, const IsometryTarget& t, const Vec& theta, Vec* grad) {
    const int n = c.n_qubits;
    const Eigen::Index k = t.target.cols();
    Mat phi = Mat::Zero(Eigen::Index{1} << n, k);
    for (Eigen::Index j = 0; j < k; ++j) phi(t.columns[static_cast<std::size_t>(j)], j) = 1.0;
    std::vector<Mat> states;
    if (grad) states.reserve(c.gates.size());
    for (const auto& g : c.gates) {
        if (grad) states.push_back(phi);
        apply_gate(phi, n, g, g.kind == Gate::Kind::Ry ? theta(g.b) : 0.0);
    }
    const double overlap = t.target.cwiseProduct(phi).sum();
    const double dist = std::max(0.0, 2.0 * static_cast<double>(k) - 2.0 * std::abs(overlap));
    if (!grad) return dist;
    const double sign = overlap >= 0 ? 1.0 : -1.0;
    grad->setZero(theta.size());
    Mat lambda = t.target;
    for (std::size_t j = c.gates.size(); j-- > 0;) {
        const Gate& g = c.gates[j];
        const double th = g.kind == Gate::Kind::Ry ? theta(g.b) : 0.0;
        if (g.kind == Gate::Kind::Ry) (*grad)(g.b) = -2.0 * sign * ry_derivative_overlap(lambda, states[j], n, g.a, th);
        apply_gate(lambda, n, g, th, true);
    }
    return dist;
}

struct Candidate {
    ParamCircuit circuit;
    double distance = std::numeric_limits<double>::infinity();
    std::uint64_t hash = 0;
};

/// Optimizes all angles from the warm start plus random restarts.
inline void optimize_angles(Candidate& cand, const IsometryTarget& t, const CompileConfig& cfg) {
    ValueGrad fg = [&](const Vec& x, Vec& g) { return compile_distance(cand.circuit, t, x, &g); };
    Vec best_x = cand.circuit.params;
    double best = compile_distance(cand.circuit, t, best_x, nullptr);
    for (int r = 0; r < cfg.restarts; ++r) {
        Vec x0 = cand.circuit.params;
        if (r > 0) {
            Rng rng(derive_seed(cfg.seed ^ cand.hash, static_cast<std::uint64_t>(r)));
            for (Eigen::Index i = 0; i < x0.size(); ++i) x0(i) = (2 * rng.uniform() - 1) * M_PI;
        }
        const auto res = lbfgs_minimize(fg, x0, cfg.angles);
        if (res.f < best) {
            best = res.f;
            best_x = res.x;
        }
        if (best <= 0.01 * cfg.tol) break;
    }
    for (Eigen::Index i = 0; i < best_x.size(); ++i) best_x(i) = std::remainder(best_x(i), 2 * M_PI);
    cand.circuit.params = best_x;
    cand.distance = compile_distance(cand.circuit, t, best_x, nullptr);
}

}  // namespace detail

/// Grows circuits one CNOT (plus Ry on both touched qubits) at a time from a
/// layer of Ry gates, keeping the best `beam` candidates per depth, and returns
/// the first that meets the tolerance. Each depth also competes a brickwork
/// candidate of the same CNOT count from random angles, since warm-started
/// greedy children can stall far above tolerance on wide targets.
inline CompileResult greedy_compile(const IsometryTarget& target, const CompileConfig& cfg = {}) {
    target.validate();
    require(cfg.tol > 0 && cfg.beam >= 1 && cfg.restarts >= 1, "greedy_compile: invalid configuration");
    const int n = target.n_qubits;
    std::vector<std::pair<int, int>> pairs = cfg.topology;
    if (pairs.empty())
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b)
                if (a != b) pairs.emplace_back(a, b);
    for (const auto& [a, b] : pairs) require(a != b && a >= 0 && b >= 0 && a < n && b < n, "greedy_compile: invalid topology pair");

    std::vector<std::pair<int, int>> ladder = pairs;
    std::stable_sort(ladder.begin(), ladder.end(), [n](const auto& x, const auto& y) {
        return std::pair((x.second - x.first + n) % n, x.first) < std::pair((y.second - y.first + n) % n, y.first);
    });

    detail::Candidate root;
    root.circuit.n_qubits = n;
    for (int q = 0; q < n; ++q) root.circuit.add_ry(q);
    root.hash = root.circuit.structure_hash();
    detail::optimize_angles(root, target, cfg);

    CompileResult result;
    auto finish = [&](const detail::Candidate& c) {
        result.circuit = target.transposed ? inverse(c.circuit) : c.circuit;
        result.distance = c.distance;
        return result;
    };
    std::vector<detail::Candidate> beam{root};
    double best = root.distance;
    result.trace.push_back(best);
    if (root.distance <= cfg.tol) return finish(root);

    for (int depth = 1; depth <= cfg.cnot_budget && !pairs.empty(); ++depth) {
        std::vector<detail::Candidate> children;
        std::set<std::uint64_t> seen;
        for (const auto& parent : beam)
            for (const auto& [a, b] : pairs) {
                detail::Candidate child;
                child.circuit = parent.circuit;
                child.circuit.gates.push_back(Gate::cnot(a, b));
                child.circuit.add_ry(a);
                child.circuit.add_ry(b);
                child.hash = child.circuit.structure_hash();
                if (seen.insert(child.hash).second) children.push_back(std::move(child));
            }
        detail::Candidate brick;
        brick.circuit = root.circuit;
        for (int j = 0; j < depth; ++j) {
            const auto [a, b] = ladder[static_cast<std::size_t>(j) % ladder.size()];
            brick.circuit.gates.push_back(Gate::cnot(a, b));
            brick.circuit.add_ry(a);
            brick.circuit.add_ry(b);
        }
        brick.hash = brick.circuit.structure_hash();
        if (seen.insert(brick.hash).second) {
            Rng rng(derive_seed(cfg.seed ^ brick.hash, 0));
            for (Eigen::Index i = 0; i < brick.circuit.params.size(); ++i) brick.circuit.params(i) = (2 * rng.uniform() - 1) * M_PI;
            children.push_back(std::move(brick));
        }
        parallel_for(children.size(), [&](std::size_t i) { detail::optimize_angles(children[i], target, cfg); });
        std::stable_sort(children.begin(), children.end(),
                         [](const auto& x, const auto& y) { return x.distance < y.distance; });
        if (children.size() > static_cast<std::size_t>(cfg.beam)) children.resize(static_cast<std::size_t>(cfg.beam));
        beam = std::move(children);
        best = std::min(best, beam.front().distance);
        result.trace.push_back(best);
        if (beam.front().distance <= cfg.tol) return finish(beam.front());
    }
    throw BudgetExceeded("greedy_compile: CNOT budget exhausted for role " + role_name(target.role), best);
}

}  // namespace tnd
