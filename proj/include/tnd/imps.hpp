#pragma once

#include "tnd/manifold.hpp"
#include "tnd/mps.hpp"

#include <complex>
#include <limits>

namespace tnd {

/// Translationally invariant left-canonical iMPS plus the boundary vector used
/// to start a finite burn-in.
struct IMPSModel {
    SiteTensor A;
    Vec V;
    int chi = 1;
    double h_source = 0.0;
    int nb_prime = 1;
    /// energy density of A, recomputable with energy_density(A, h_source)
    double e0 = 0.0;
};

/// [T_O]_{(a a'),(b b')} = sum_{i i'} A^i_{ab} O_{i i'} A^{i'}_{a'b'}.
inline Mat transfer_matrix(const SiteTensor& A, const Mat& O) {
    require(O.rows() == kPhys && O.cols() == kPhys, "transfer_matrix: operator must be 2x2");
    require(A[0].rows() == A[1].rows() && A[0].cols() == A[1].cols(), "transfer_matrix: inconsistent tensor");
    const Eigen::Index r = A[0].rows(), c = A[0].cols();
    Mat T = Mat::Zero(r * r, c * c);
    for (int i = 0; i < kPhys; ++i)
        for (int j = 0; j < kPhys; ++j) {
            if (O(i, j) == 0.0) continue;
            for (Eigen::Index a = 0; a < r; ++a)
                for (Eigen::Index b = 0; b < c; ++b)
                    T.block(a * r, b * c, r, c) += O(i, j) * A[static_cast<std::size_t>(i)](a, b) * A[static_cast<std::size_t>(j)];
        }
    return T;
}

/// sum_i A^i U A^iT, the channel whose fixed point is the half-infinite density.
inline Mat transfer_right(const SiteTensor& A, const Mat& U) {
    return A[0] * U * A[0].transpose() + A[1] * U * A[1].transpose();
}

/// sum_i A^iT U A^i, the adjoint of transfer_right.
inline Mat transfer_left(const SiteTensor& A, const Mat& U) {
    return A[0].transpose() * U * A[0] + A[1].transpose() * U * A[1];
}

/// Half-infinite density matrix: the eigenvalue-1 right eigenmatrix of the
/// identity transfer matrix, symmetrized and trace-normalized. The gap is the
/// distance from 1 to the nearest other eigenvalue.
inline Mat fixed_point_density(const SiteTensor& A, double* gap_out = nullptr) {
    const Eigen::Index chi = A[0].rows();
    require(A[0].cols() == chi, "fixed_point_density: tensor must be square in the bond");
    if (chi == 1) {
        if (gap_out) *gap_out = std::numeric_limits<double>::infinity();
        return Mat::Ones(1, 1);
    }
    const Mat T = transfer_matrix(A, Mat::Identity(2, 2));
    Eigen::EigenSolver<Mat> es(T);
    if (es.info() != Eigen::Success) throw InternalError("fixed_point_density: eigensolver failed");
    const auto& ev = es.eigenvalues();
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < ev.size(); ++k)
        if (std::abs(ev(k) - 1.0) < std::abs(ev(best) - 1.0)) best = k;
    double gap = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < ev.size(); ++k)
        if (k != best) gap = std::min(gap, std::abs(ev(k) - 1.0));
    if (gap_out) *gap_out = gap;
    if (gap < 1e-8) throw DegenerateTransfer(gap);

    Eigen::VectorXcd v = es.eigenvectors().col(best);
    Eigen::MatrixXcd r = Eigen::Map<Eigen::MatrixXcd>(v.data(), chi, chi).transpose();  // row a, col a'
    const std::complex<double> tr = r.trace();
    if (std::abs(tr) < 1e-300) throw InternalError("fixed_point_density: traceless fixed point");
    Mat rho = (r / tr).real();
    rho = sym(rho);
    return rho / rho.trace();
}

namespace detail {

inline double imps_energy(const SiteTensor& A, double h, const Mat& rho, Mat* Ez1_out = nullptr) {
    const Mat Ez1 = A[0].transpose() * A[0] - A[1].transpose() * A[1];
    const Mat Ez = A[0].transpose() * Ez1 * A[0] - A[1].transpose() * Ez1 * A[1];
    const Mat Ex = A[0].transpose() * A[1] + A[1].transpose() * A[0];
    if (Ez1_out) *Ez1_out = Ez1;
    return (rho.array() * (Ez - h * Ex).transpose().array()).sum();
}

/// LU of K = 1 - T + vec(I) vec(I)^T. K rho = vec(I) gives the fixed point and
/// K^T y = b solves (1 - T_L) y = b whenever Tr(rho b) = 0.
inline Eigen::PartialPivLU<Mat> fixed_point_system(const SiteTensor& A) {
    const Eigen::Index chi = A[0].rows();
    Mat K = Mat::Identity(chi * chi, chi * chi) - transfer_matrix(A, Mat::Identity(2, 2));
    for (Eigen::Index a = 0; a < chi; ++a)
        for (Eigen::Index b = 0; b < chi; ++b) K(a * chi + a, b * chi + b) += 1.0;
    return K.partialPivLu();
}

inline Vec vec_identity(Eigen::Index chi) {
    Vec v = Vec::Zero(chi * chi);
    for (Eigen::Index a = 0; a < chi; ++a) v(a * chi + a) = 1.0;
    return v;
}

inline double imps_energy_grad(const SiteTensor& A, double h, const Mat& rho, const Eigen::PartialPivLU<Mat>& lu,
                               SiteTensor& grad) {
    const Eigen::Index chi = rho.rows();
    Mat Ez1;
    const double e0 = imps_energy(A, h, rho, &Ez1);
    const Mat Ez = A[0].transpose() * Ez1 * A[0] - A[1].transpose() * Ez1 * A[1];
    const Mat Ex = A[0].transpose() * A[1] + A[1].transpose() * A[0];
    const Mat rhs = sym(Ez - h * Ex) - e0 * Mat::Identity(chi, chi);
    // symmetric, so the row-major vectorization used by the transfer matrix is
    // the same as Eigen's column-major one
    Vec yv = lu.transpose().solve(Eigen::Map<const Vec>(rhs.data(), chi * chi));
    const Mat y = sym(Eigen::Map<const Mat>(yv.data(), chi, chi));
    const Mat P = A[0] * rho * A[0].transpose() - A[1] * rho * A[1].transpose();
    const double s[2] = {1.0, -1.0};
    for (int k = 0; k < kPhys; ++k) {
        const Mat& a = A[static_cast<std::size_t>(k)];
        const Mat& other = A[static_cast<std::size_t>(1 - k)];
        grad[static_cast<std::size_t>(k)] = 2.0 * (s[k] * (Ez1 * a * rho + a * P) - h * other * rho + y * a * rho);
    }
    return e0;
}

/// Energy (and gradient when grad is non-null) with the fixed point taken from
/// the linear system instead of the eigensolver. Used inside optimization
/// loops; a near-singular system reports as a degenerate transfer.
inline double imps_energy_fast(const SiteTensor& A, double h, SiteTensor* grad) {
    const Eigen::Index chi = A[0].rows();
    const auto lu = fixed_point_system(A);
    if (!(lu.rcond() > 1e-13)) throw DegenerateTransfer(0.0);
    Vec rv = lu.solve(vec_identity(chi));
    Mat rho = sym(Eigen::Map<const Mat>(rv.data(), chi, chi).transpose());
    rho /= rho.trace();
    if (!grad) return imps_energy(A, h, rho);
    return imps_energy_grad(A, h, rho, lu, *grad);
}

}  // namespace detail

/// TFIM energy density of a left-canonical iMPS.
inline double energy_density(const SiteTensor& A, double h) {
    return detail::imps_energy(A, h, fixed_point_density(A));
}

/// Energy density and its Euclidean gradient with respect to both A^i,
/// including the dependence of the fixed point on A. The gradient is exact
/// along directions tangent to the left-canonical manifold.
inline double energy_density(const SiteTensor& A, double h, SiteTensor& grad) {
    const Mat rho = fixed_point_density(A);
    return detail::imps_energy_grad(A, h, rho, detail::fixed_point_system(A), grad);
}

/// Bond state after nb channel applications starting from V V^T.
inline Mat burn_in_state(const SiteTensor& A, const Vec& V, int nb) {
    require(nb >= 1, "burn_in: need at least one iteration");
    Mat U = V * V.transpose();
    for (int n = 0; n < nb; ++n) U = transfer_right(A, U);
    return U;
}

/// Frobenius distance between the burned-in bond state and the fixed point.
inline double burn_in_cost(const SiteTensor& A, const Vec& V, int nb) {
    return (burn_in_state(A, V, nb) - fixed_point_density(A)).norm();
}

/// Same with the gradient with respect to V.
inline double burn_in_cost(const SiteTensor& A, const Vec& V, int nb, const Mat& rho, Vec& grad) {
    const Mat D = burn_in_state(A, V, nb) - rho;
    const double c = D.norm();
    if (c == 0.0) {
        grad = Vec::Zero(V.size());
        return 0.0;
    }
    Mat E = D / c;
    for (int n = 0; n < nb; ++n) E = transfer_left(A, E);
    grad = 2.0 * E * V;
    return c;
}

struct ImpsConfig {
    int restarts = 10;
    int max_iters = 4000;
    double grad_tol = 1e-6;
    int boundary_restarts = 4;
    int boundary_iters = 1000;
};

struct ImpsResult {
    IMPSModel model;
    bool stalled = false;
    double grad_norm = 0.0;
    double burn_in = 0.0;
};

/// Minimizes the energy density over left-canonical A (best of several random
/// starts), then the burn-in cost over the boundary vector with A frozen.
inline ImpsResult optimize_imps(double h, int chi, int nb_prime, std::uint64_t seed, const ImpsConfig& cfg = {}) {
    require(is_power_of_two(chi), "optimize_imps: chi must be a power of two");
    require(nb_prime >= 1, "optimize_imps: nb_prime must be positive");
    require(cfg.restarts >= 1 && cfg.boundary_restarts >= 1, "optimize_imps: need at least one start");
    const Eigen::Index c = chi;

    ManifoldCost energy = [&](const Points& p, std::vector<Mat>* g) {
        const SiteTensor A = split_rows(p[0].value);
        try {
            if (!g) return detail::imps_energy_fast(A, h, nullptr);
            SiteTensor gr{Mat(c, c), Mat(c, c)};
            const double e = detail::imps_energy_fast(A, h, &gr);
            (*g)[0] = stack_rows(gr);
            return e;
        } catch (const DegenerateTransfer&) {
            return std::numeric_limits<double>::quiet_NaN();
        }
    };

    std::vector<MinimizeResult> runs(static_cast<std::size_t>(cfg.restarts));
    parallel_for(runs.size(), [&](std::size_t r) {
        Rng rng(derive_seed(seed, r));
        MinimizeConfig mc;
        mc.max_iters = cfg.max_iters;
        mc.grad_tol = cfg.grad_tol;
        mc.lbfgs_memory = 10;
        // retry from a fresh start if the random tensor happens to be degenerate
        for (int attempt = 0; attempt < 8; ++attempt) {
            Points x0{ManifoldPoint::stiefel(random_isometry(rng, 2 * c, c))};
            if (!std::isfinite(energy(x0, nullptr))) continue;
            runs[r] = minimize(energy, std::move(x0), mc);
            return;
        }
        throw DegenerateTransfer(0.0);
    });
    std::size_t best = 0;
    for (std::size_t r = 1; r < runs.size(); ++r)
        if (runs[r].cost < runs[best].cost) best = r;

    ImpsResult out;
    IMPSModel& m = out.model;
    m.chi = chi;
    m.h_source = h;
    m.nb_prime = nb_prime;
    m.A = split_rows(runs[best].x[0].value);
    m.e0 = energy_density(m.A, h);
    out.stalled = runs[best].stalled && !runs[best].converged;
    out.grad_norm = runs[best].grad_norm;

    const Mat rho = fixed_point_density(m.A);
    ManifoldCost boundary = [&](const Points& p, std::vector<Mat>* g) {
        const Vec v = p[0].value.col(0);
        if (!g) return (burn_in_state(m.A, v, nb_prime) - rho).norm();
        Vec gv;
        const double cst = burn_in_cost(m.A, v, nb_prime, rho, gv);
        (*g)[0] = gv;
        return cst;
    };
    Rng rng(derive_seed(seed, 1u << 20));
    double best_cost = std::numeric_limits<double>::infinity();
    for (int r = 0; r < cfg.boundary_restarts; ++r) {
        MinimizeConfig mc;
        mc.max_iters = cfg.boundary_iters;
        mc.grad_tol = 1e-10;
        auto res = minimize(boundary, {random_point(ManifoldKind::Sphere, c, 1, rng)}, mc);
        if (res.cost < best_cost) {
            best_cost = res.cost;
            m.V = res.x[0].value.col(0);
        }
    }
    m.V.normalize();
    out.burn_in = burn_in_cost(m.A, m.V, nb_prime);
    return out;
}

}  // namespace tnd
