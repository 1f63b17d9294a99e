#pragma once

#include "tnd/common.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <limits>
#include <optional>

namespace tnd {

// ---------------------------------------------------------------------------
// Single-site operators and measurement bases

inline Eigen::Matrix2d pauli_x() { return (Eigen::Matrix2d() << 0, 1, 1, 0).finished(); }
inline Eigen::Matrix2d pauli_z() { return (Eigen::Matrix2d() << 1, 0, 0, -1).finished(); }

enum class Basis { X, Z };

inline const char* basis_name(Basis b) { return b == Basis::X ? "x" : "z"; }

inline Basis parse_basis(const std::string& s) {
    if (s == "x" || s == "X") return Basis::X;
    if (s == "z" || s == "Z") return Basis::Z;
    throw InvalidArgument("unknown basis '" + s + "'");
}

/// Eigenvector of the basis operator for outcome index mu; mu = 0 is the +1
/// eigenvalue (up or right-pointing spin).
inline Eigen::Vector2d basis_vector(Basis b, int mu) {
    if (b == Basis::Z) return mu == 0 ? Eigen::Vector2d(1, 0) : Eigen::Vector2d(0, 1);
    const double r = M_SQRT1_2;
    return mu == 0 ? Eigen::Vector2d(r, r) : Eigen::Vector2d(r, -r);
}

/// One single-shot measurement over the sampling window.
struct ShotRecord {
    Basis basis = Basis::Z;
    std::vector<int> outcomes;
    int label = 0;
    double h_source = 0.0;

    /// Product-state amplitudes of the collapsed state, one 2-vector per site.
    std::vector<Eigen::Vector2d> amplitudes() const {
        std::vector<Eigen::Vector2d> x;
        x.reserve(outcomes.size());
        for (int mu : outcomes) x.push_back(basis_vector(basis, mu));
        return x;
    }
};

// ---------------------------------------------------------------------------
// MPO

/// One MPO site: ops[a * wr + b] holds <s|W_ab|t> (row s = bra, col t = ket).
struct MpoSite {
    int wl = 1;
    int wr = 1;
    std::vector<Eigen::Matrix2d> ops;

    MpoSite() = default;
    MpoSite(int l, int r) : wl(l), wr(r), ops(static_cast<std::size_t>(l * r), Eigen::Matrix2d::Zero()) {}

    Eigen::Matrix2d& at(int a, int b) { return ops[static_cast<std::size_t>(a * wr + b)]; }
    const Eigen::Matrix2d& at(int a, int b) const { return ops[static_cast<std::size_t>(a * wr + b)]; }
    bool nonzero(int a, int b) const { return at(a, b).cwiseAbs().maxCoeff() != 0.0; }
};

struct MPO {
    std::vector<MpoSite> sites;
    int size() const { return static_cast<int>(sites.size()); }
};

/// H = sum_i Z_i Z_{i+1} - h sum_i X_i - h_z2 prod_i X_i on an open chain.
///
/// Bond channels: 0 = completed, 1 = Z pending, 2 = not started, 3 = global X
/// string (only present when h_z2 > 0). Bulk tensors are lower triangular.
inline MPO build_tfim_mpo(int F, double h, double h_z2) {
    require(F >= 2, "build_tfim_mpo: need at least 2 sites");
    require(h >= 0 && h_z2 >= 0, "build_tfim_mpo: field strengths must be non-negative");
    const Eigen::Matrix2d I = Eigen::Matrix2d::Identity();
    const Eigen::Matrix2d X = pauli_x();
    const Eigen::Matrix2d Z = pauli_z();
    const bool string = h_z2 > 0;
    const int w = string ? 4 : 3;

    MpoSite bulk(w, w);
    bulk.at(0, 0) = I;
    bulk.at(1, 0) = Z;
    bulk.at(2, 0) = -h * X;
    bulk.at(2, 1) = Z;
    bulk.at(2, 2) = I;
    if (string) bulk.at(3, 3) = X;

    MPO mpo;
    mpo.sites.reserve(static_cast<std::size_t>(F));
    MpoSite first(1, w);
    for (int b = 0; b < w; ++b) first.at(0, b) = bulk.at(2, b);
    if (string) first.at(0, 3) = -h_z2 * X;
    mpo.sites.push_back(first);
    for (int k = 1; k < F - 1; ++k) mpo.sites.push_back(bulk);
    MpoSite last(w, 1);
    for (int a = 0; a < w; ++a) last.at(a, 0) = bulk.at(a, 0);
    if (string) last.at(3, 0) = X;
    mpo.sites.push_back(last);
    return mpo;
}

// ---------------------------------------------------------------------------
// Finite MPS

struct FiniteMPS {
    std::vector<SiteTensor> tensors;
    /// Orthogonality center, or -1 when every site is left-canonical.
    int orthogonality_center = -1;

    int size() const { return static_cast<int>(tensors.size()); }

    std::vector<int> bond_dims() const {
        std::vector<int> dims;
        for (const auto& t : tensors) dims.push_back(static_cast<int>(t[0].cols()));
        if (!dims.empty()) dims.pop_back();
        return dims;
    }

    int max_bond() const {
        int m = 1;
        for (int d : bond_dims()) m = std::max(m, d);
        return m;
    }
};

/// Product state with the given single-site amplitudes.
inline FiniteMPS product_mps(const std::vector<Eigen::Vector2d>& sites) {
    FiniteMPS m;
    for (const auto& v : sites) {
        SiteTensor t{Mat::Constant(1, 1, v(0)), Mat::Constant(1, 1, v(1))};
        m.tensors.push_back(t);
    }
    return m;
}

/// Stacks a site tensor into the (2 chi_l) x chi_r matrix with row s*chi_l + a.
inline Mat stack_rows(const SiteTensor& t) {
    Mat m(2 * t[0].rows(), t[0].cols());
    m << t[0], t[1];
    return m;
}

inline SiteTensor split_rows(const Mat& m) {
    const Eigen::Index r = m.rows() / 2;
    return {m.topRows(r), m.bottomRows(r)};
}

/// Left-canonical residual of one site: || sum_s A_s^T A_s - I ||_max.
inline double left_canonical_residual(const SiteTensor& t) {
    Mat g = t[0].transpose() * t[0] + t[1].transpose() * t[1];
    return (g - Mat::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
}

/// QR sweep from the left; afterwards every site is left-canonical. The
/// overall norm is dropped, the overall sign is kept.
inline void left_canonicalize(FiniteMPS& mps) {
    const int F = mps.size();
    for (int k = 0; k < F; ++k) {
        Mat m = stack_rows(mps.tensors[static_cast<std::size_t>(k)]);
        const Eigen::Index r = std::min(m.rows(), m.cols());
        Eigen::HouseholderQR<Mat> qr(m);
        Mat q = qr.householderQ() * Mat::Identity(m.rows(), r);
        Mat rr = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
        for (Eigen::Index j = 0; j < r; ++j)
            if (rr(j, j) < 0) {
                q.col(j) *= -1.0;
                rr.row(j) *= -1.0;
            }
        mps.tensors[static_cast<std::size_t>(k)] = split_rows(q);
        if (k + 1 < F) {
            auto& next = mps.tensors[static_cast<std::size_t>(k + 1)];
            next[0] = rr * next[0];
            next[1] = rr * next[1];
        } else {
            const double n = rr(0, 0);
            if (n == 0.0) throw InvalidArgument("left_canonicalize: zero state");
        }
    }
    mps.orthogonality_center = -1;
}

/// Right-canonical QR sweep (used to seed the ground-state search).
inline void right_canonicalize(FiniteMPS& mps) {
    for (int k = mps.size() - 1; k >= 0; --k) {
        auto& t = mps.tensors[static_cast<std::size_t>(k)];
        Mat m(t[0].rows(), 2 * t[0].cols());
        m << t[0], t[1];
        Mat mt = m.transpose();
        const Eigen::Index r = std::min(mt.rows(), mt.cols());
        Eigen::HouseholderQR<Mat> qr(mt);
        Mat q = qr.householderQ() * Mat::Identity(mt.rows(), r);
        Mat rr = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
        for (Eigen::Index j = 0; j < r; ++j)
            if (rr(j, j) < 0) {
                q.col(j) *= -1.0;
                rr.row(j) *= -1.0;
            }
        const Eigen::Index c = t[0].cols();
        Mat qt = q.transpose();
        t[0] = qt.leftCols(c);
        t[1] = qt.rightCols(c);
        if (k > 0) {
            auto& prev = mps.tensors[static_cast<std::size_t>(k - 1)];
            prev[0] = prev[0] * rr.transpose();
            prev[1] = prev[1] * rr.transpose();
        }
    }
    mps.orthogonality_center = 0;
}

/// Dense state vector; site 0 is the most significant bit. Only for small F.
inline Vec mps_to_dense(const FiniteMPS& mps) {
    const int F = mps.size();
    require(F <= 24, "mps_to_dense: too many sites");
    // rows: configurations of the sites so far, cols: right bond
    Mat acc = Mat::Ones(1, 1);
    for (int k = 0; k < F; ++k) {
        const auto& t = mps.tensors[static_cast<std::size_t>(k)];
        Mat next(acc.rows() * 2, t[0].cols());
        for (Eigen::Index r = 0; r < acc.rows(); ++r)
            for (int s = 0; s < 2; ++s) next.row(2 * r + s) = acc.row(r) * t[s];
        acc = std::move(next);
    }
    return acc.col(0);
}

/// Right environments E_k = contraction of sites k..F-1 with their conjugates,
/// indexed so that env[k] sits on the bond left of site k; env[F] = [1].
inline std::vector<Mat> right_environments(const FiniteMPS& mps) {
    const int F = mps.size();
    std::vector<Mat> env(static_cast<std::size_t>(F + 1));
    env[static_cast<std::size_t>(F)] = Mat::Ones(1, 1);
    for (int k = F - 1; k >= 0; --k) {
        const auto& t = mps.tensors[static_cast<std::size_t>(k)];
        const Mat& e = env[static_cast<std::size_t>(k + 1)];
        env[static_cast<std::size_t>(k)] = t[0] * e * t[0].transpose() + t[1] * e * t[1].transpose();
    }
    return env;
}

/// Reduced density matrix of one site of a state left-canonical up to that site.
inline Eigen::Matrix2d single_site_rdm(const FiniteMPS& mps, int site) {
    require(site >= 0 && site < mps.size(), "single_site_rdm: site out of range");
    const auto env = right_environments(mps);
    const auto& t = mps.tensors[static_cast<std::size_t>(site)];
    const Mat& e = env[static_cast<std::size_t>(site + 1)];
    Eigen::Matrix2d rho;
    for (int s = 0; s < 2; ++s)
        for (int sp = 0; sp < 2; ++sp) rho(s, sp) = (t[s] * e * t[sp].transpose()).trace();
    rho = 0.5 * (rho + rho.transpose()).eval();
    return rho / rho.trace();
}

/// <psi|H|psi> / <psi|psi> by direct transfer contraction.
inline double mpo_expectation(const FiniteMPS& mps, const MPO& mpo) {
    require(mps.size() == mpo.size(), "mpo_expectation: size mismatch");
    std::vector<Mat> left{Mat::Ones(1, 1)};
    Mat norm = Mat::Ones(1, 1);
    for (int k = 0; k < mps.size(); ++k) {
        const auto& t = mps.tensors[static_cast<std::size_t>(k)];
        const auto& w = mpo.sites[static_cast<std::size_t>(k)];
        std::vector<Mat> next(static_cast<std::size_t>(w.wr), Mat::Zero(t[0].cols(), t[0].cols()));
        for (int a = 0; a < w.wl; ++a)
            for (int b = 0; b < w.wr; ++b) {
                if (!w.nonzero(a, b)) continue;
                const auto& op = w.at(a, b);
                for (int s = 0; s < 2; ++s)
                    for (int u = 0; u < 2; ++u)
                        if (op(s, u) != 0.0)
                            next[static_cast<std::size_t>(b)] +=
                                op(s, u) * (t[s].transpose() * left[static_cast<std::size_t>(a)] * t[u]);
            }
        left = std::move(next);
        norm = t[0].transpose() * norm * t[0] + t[1].transpose() * norm * t[1];
    }
    return left[0](0, 0) / norm(0, 0);
}

// ---------------------------------------------------------------------------
// Two-site DMRG

struct TruncationEvent {
    int bond = 0;
    int kept = 0;
    double discarded_weight = 0.0;
    bool capped = false;  ///< chi_max, not the weight rule, set the kept count
};

struct GroundStateResult {
    FiniteMPS mps;
    double energy = 0.0;
    bool converged = false;
    int sweeps = 0;
    std::vector<double> sweep_energies;
    std::vector<TruncationEvent> truncations;
};

struct DmrgConfig {
    int chi_max = 40;
    double eps = 1e-6;
    int max_sweeps = 20;
    double e_tol = 1e-10;
    int chi_init = 8;
    std::uint64_t seed = 1;
    int dense_threshold = 96;  ///< local problems at most this size are solved densely
};

namespace detail {

/// Lowest eigenpair of a symmetric operator given by matvec, starting from v0.
template <class MatVec>
std::pair<double, Vec> lowest_eigenpair(MatVec&& apply, const Vec& v0, int dense_threshold) {
    const Eigen::Index n = v0.size();
    if (n <= dense_threshold) {
        Mat h(n, n);
        Vec e = Vec::Zero(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            e(i) = 1.0;
            h.col(i) = apply(e);
            e(i) = 0.0;
        }
        Eigen::SelfAdjointEigenSolver<Mat> es(sym(h));
        return {es.eigenvalues()(0), es.eigenvectors().col(0)};
    }
    Vec v = v0.normalized();
    double theta = std::numeric_limits<double>::infinity();
    const int krylov = static_cast<int>(std::min<Eigen::Index>(n, 40));
    for (int restart = 0; restart < 12; ++restart) {
        Mat basis(n, krylov);
        std::vector<double> alpha, beta;
        basis.col(0) = v;
        int m = 0;
        for (int j = 0; j < krylov; ++j) {
            Vec w = apply(basis.col(j));
            const double a = basis.col(j).dot(w);
            alpha.push_back(a);
            // full reorthogonalization, twice
            for (int pass = 0; pass < 2; ++pass)
                w -= basis.leftCols(j + 1) * (basis.leftCols(j + 1).transpose() * w);
            const double b = w.norm();
            m = j + 1;
            if (j + 1 == krylov || b < 1e-13) break;
            beta.push_back(b);
            basis.col(j + 1) = w / b;
        }
        Mat t = Mat::Zero(m, m);
        for (int j = 0; j < m; ++j) {
            t(j, j) = alpha[static_cast<std::size_t>(j)];
            if (j + 1 < m) t(j, j + 1) = t(j + 1, j) = beta[static_cast<std::size_t>(j)];
        }
        Eigen::SelfAdjointEigenSolver<Mat> es(t);
        const double new_theta = es.eigenvalues()(0);
        v = (basis.leftCols(m) * es.eigenvectors().col(0)).normalized();
        const Vec r = apply(v) - new_theta * v;
        const bool done = r.norm() < 1e-10 || std::abs(new_theta - theta) < 1e-14 * std::max(1.0, std::abs(new_theta));
        theta = new_theta;
        if (done || m < krylov) break;
    }
    return {theta, v};
}

struct LocalTerm {
    int a = 0;
    int c = 0;
    Eigen::Matrix4d op;  // (s1 s2, t1 t2)
};

inline std::vector<LocalTerm> two_site_terms(const MpoSite& w1, const MpoSite& w2) {
    std::vector<LocalTerm> terms;
    for (int a = 0; a < w1.wl; ++a)
        for (int c = 0; c < w2.wr; ++c) {
            Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
            for (int b = 0; b < w1.wr; ++b) {
                if (!w1.nonzero(a, b) || !w2.nonzero(b, c)) continue;
                const auto& o1 = w1.at(a, b);
                const auto& o2 = w2.at(b, c);
                for (int s1 = 0; s1 < 2; ++s1)
                    for (int s2 = 0; s2 < 2; ++s2)
                        for (int t1 = 0; t1 < 2; ++t1)
                            for (int t2 = 0; t2 < 2; ++t2) m(2 * s1 + s2, 2 * t1 + t2) += o1(s1, t1) * o2(s2, t2);
            }
            if (m.cwiseAbs().maxCoeff() != 0.0) terms.push_back({a, c, m});
        }
    return terms;
}

inline std::vector<Mat> extend_left(const std::vector<Mat>& left, const SiteTensor& t, const MpoSite& w) {
    std::vector<Mat> out(static_cast<std::size_t>(w.wr), Mat::Zero(t[0].cols(), t[0].cols()));
    for (int a = 0; a < w.wl; ++a) {
        Mat la[2];
        la[0] = left[static_cast<std::size_t>(a)] * t[0];
        la[1] = left[static_cast<std::size_t>(a)] * t[1];
        for (int b = 0; b < w.wr; ++b) {
            if (!w.nonzero(a, b)) continue;
            const auto& op = w.at(a, b);
            for (int s = 0; s < 2; ++s)
                for (int u = 0; u < 2; ++u)
                    if (op(s, u) != 0.0) out[static_cast<std::size_t>(b)] += op(s, u) * (t[s].transpose() * la[u]);
        }
    }
    return out;
}

inline std::vector<Mat> extend_right(const std::vector<Mat>& right, const SiteTensor& t, const MpoSite& w) {
    std::vector<Mat> out(static_cast<std::size_t>(w.wl), Mat::Zero(t[0].rows(), t[0].rows()));
    for (int b = 0; b < w.wr; ++b) {
        Mat rb[2];
        rb[0] = t[0] * right[static_cast<std::size_t>(b)];
        rb[1] = t[1] * right[static_cast<std::size_t>(b)];
        for (int a = 0; a < w.wl; ++a) {
            if (!w.nonzero(a, b)) continue;
            const auto& op = w.at(a, b);
            for (int s = 0; s < 2; ++s)
                for (int u = 0; u < 2; ++u)
                    if (op(s, u) != 0.0) out[static_cast<std::size_t>(a)] += op(s, u) * (rb[u] * t[s].transpose());
        }
    }
    return out;
}

}  // namespace detail

/// Variational two-site sweeping ground-state search. The returned state is
/// left-canonical. Non-convergence is reported through `converged`.
inline GroundStateResult ground_state_search(const MPO& mpo, const DmrgConfig& cfg) {
    const int F = mpo.size();
    require(F >= 2, "ground_state_search: need at least 2 sites");
    require(cfg.chi_max >= 1 && cfg.eps >= 0, "ground_state_search: bad truncation parameters");
    Rng rng(cfg.seed);

    FiniteMPS mps;
    {
        int left = 1;
        for (int k = 0; k < F; ++k) {
            const int to_end = F - 1 - k;
            long cap = to_end >= 30 ? (1L << 30) : (1L << to_end);
            long grow = std::min<long>(static_cast<long>(left) * 2, cap);
            int right = (k == F - 1) ? 1 : static_cast<int>(std::min<long>(grow, std::min(cfg.chi_init, cfg.chi_max)));
            mps.tensors.push_back({rng.normal_matrix(left, right), rng.normal_matrix(left, right)});
            left = right;
        }
    }
    right_canonicalize(mps);

    std::vector<std::vector<Mat>> L(static_cast<std::size_t>(F + 1)), R(static_cast<std::size_t>(F + 1));
    L[0] = {Mat::Ones(1, 1)};
    R[static_cast<std::size_t>(F)] = {Mat::Ones(1, 1)};
    for (int k = F - 1; k >= 1; --k)
        R[static_cast<std::size_t>(k)] =
            detail::extend_right(R[static_cast<std::size_t>(k + 1)], mps.tensors[static_cast<std::size_t>(k)],
                                 mpo.sites[static_cast<std::size_t>(k)]);

    std::vector<std::vector<detail::LocalTerm>> terms(static_cast<std::size_t>(F - 1));
    for (int k = 0; k + 1 < F; ++k)
        terms[static_cast<std::size_t>(k)] =
            detail::two_site_terms(mpo.sites[static_cast<std::size_t>(k)], mpo.sites[static_cast<std::size_t>(k + 1)]);

    GroundStateResult res;
    double energy = std::numeric_limits<double>::infinity();

    auto update = [&](int k, bool moving_right) {
        auto& A = mps.tensors[static_cast<std::size_t>(k)];
        auto& B = mps.tensors[static_cast<std::size_t>(k + 1)];
        const Eigen::Index cl = A[0].rows(), cr = B[0].cols();
        const Eigen::Index blk = cl * cr;
        Vec theta(4 * blk);
        for (int s1 = 0; s1 < 2; ++s1)
            for (int s2 = 0; s2 < 2; ++s2) {
                Mat t = A[s1] * B[s2];
                theta.segment((2 * s1 + s2) * blk, blk) = Eigen::Map<const Vec>(t.data(), blk);
            }
        const auto& Lk = L[static_cast<std::size_t>(k)];
        const auto& Rk = R[static_cast<std::size_t>(k + 2)];
        const auto& tk = terms[static_cast<std::size_t>(k)];
        auto apply = [&](const Vec& x) {
            Vec y = Vec::Zero(x.size());
            Mat y_blocks[4];
            for (auto& yb : y_blocks) yb = Mat::Zero(cl, cr);
            for (const auto& term : tk) {
                const Mat& la = Lk[static_cast<std::size_t>(term.a)];
                const Mat& rc = Rk[static_cast<std::size_t>(term.c)];
                for (int t = 0; t < 4; ++t) {
                    if (term.op.col(t).cwiseAbs().maxCoeff() == 0.0) continue;
                    Eigen::Map<const Mat> xt(x.data() + t * blk, cl, cr);
                    Mat z = la * xt * rc;
                    for (int s = 0; s < 4; ++s)
                        if (term.op(s, t) != 0.0) y_blocks[s] += term.op(s, t) * z;
                }
            }
            for (int s = 0; s < 4; ++s) y.segment(s * blk, blk) = Eigen::Map<const Vec>(y_blocks[s].data(), blk);
            return y;
        };
        auto [e, v] = detail::lowest_eigenpair(apply, theta, cfg.dense_threshold);
        energy = e;

        Mat big(2 * cl, 2 * cr);
        for (int s1 = 0; s1 < 2; ++s1)
            for (int s2 = 0; s2 < 2; ++s2)
                big.block(s1 * cl, s2 * cr, cl, cr) = Eigen::Map<const Mat>(v.data() + (2 * s1 + s2) * blk, cl, cr);
        Eigen::BDCSVD<Mat> svd(big, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Vec& sv = svd.singularValues();
        const double total = sv.squaredNorm();
        Eigen::Index keep = sv.size();
        double tail = 0.0;
        while (keep > 1 && tail + sv(keep - 1) * sv(keep - 1) <= cfg.eps * total) {
            tail += sv(keep - 1) * sv(keep - 1);
            --keep;
        }
        TruncationEvent ev;
        ev.bond = k;
        if (keep > cfg.chi_max) {
            keep = cfg.chi_max;
            ev.capped = true;
        }
        ev.kept = static_cast<int>(keep);
        ev.discarded_weight = (total - sv.head(keep).squaredNorm()) / total;
        res.truncations.push_back(ev);

        Vec s = sv.head(keep) / sv.head(keep).norm();
        Mat U = svd.matrixU().leftCols(keep);
        Mat Vt = svd.matrixV().leftCols(keep).transpose();
        if (moving_right) {
            Vt = s.asDiagonal() * Vt;
        } else {
            U = U * s.asDiagonal();
        }
        A[0] = U.topRows(cl);
        A[1] = U.bottomRows(cl);
        B[0] = Vt.leftCols(cr);
        B[1] = Vt.rightCols(cr);
        if (moving_right)
            L[static_cast<std::size_t>(k + 1)] = detail::extend_left(Lk, A, mpo.sites[static_cast<std::size_t>(k)]);
        else
            R[static_cast<std::size_t>(k + 1)] = detail::extend_right(Rk, B, mpo.sites[static_cast<std::size_t>(k + 1)]);
    };

    double previous = std::numeric_limits<double>::infinity();
    for (int sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
        for (int k = 0; k + 1 < F; ++k) update(k, true);
        for (int k = F - 2; k >= 0; --k) update(k, false);
        res.sweep_energies.push_back(energy);
        res.sweeps = sweep + 1;
        if (std::abs(previous - energy) < cfg.e_tol) {
            res.converged = true;
            break;
        }
        previous = energy;
    }
    left_canonicalize(mps);
    res.mps = std::move(mps);
    res.energy = energy;
    return res;
}

// ---------------------------------------------------------------------------
// Classical product state sampling

/// A contiguous window of a left-canonical MPS prepared for repeated sampling.
/// The environment right of the window is diagonalized once so each shot is a
/// chain of matrix-vector products.
class SamplingWindow {
public:
    SamplingWindow(const FiniteMPS& mps, int start, int length) {
        require(length >= 1 && start >= 0 && start + length <= mps.size(), "SamplingWindow: window out of range");
        for (int k = 0; k < mps.size(); ++k)
            require(left_canonical_residual(mps.tensors[static_cast<std::size_t>(k)]) < 1e-8,
                    "SamplingWindow: state must be left-canonical");
        // environment on the bond right of the window
        Mat env = Mat::Ones(1, 1);
        for (int k = mps.size() - 1; k >= start + length; --k) {
            const auto& t = mps.tensors[static_cast<std::size_t>(k)];
            env = t[0] * env * t[0].transpose() + t[1] * env * t[1].transpose();
        }
        Eigen::SelfAdjointEigenSolver<Mat> es(sym(env));
        weights_ = es.eigenvalues().cwiseMax(0.0);
        weights_ /= weights_.sum();
        vectors_ = es.eigenvectors();
        sites_.assign(mps.tensors.begin() + start, mps.tensors.begin() + start + length);
    }

    int length() const { return static_cast<int>(sites_.size()); }

    /// Draws one outcome string; bases[j] is the measurement basis of window site j.
    std::vector<int> sample(const std::vector<Basis>& bases, Rng& rng) const {
        require(static_cast<int>(bases.size()) == length(), "SamplingWindow::sample: basis count mismatch");
        double u = rng.uniform();
        Eigen::Index k = 0;
        for (; k + 1 < weights_.size(); ++k) {
            if (u < weights_(k)) break;
            u -= weights_(k);
        }
        Vec v = vectors_.col(k);
        std::vector<int> out(sites_.size());
        for (int j = length() - 1; j >= 0; --j) {
            const auto& t = sites_[static_cast<std::size_t>(j)];
            const Vec a0 = t[0] * v;
            const Vec a1 = t[1] * v;
            Eigen::Matrix2d rho;
            rho << a0.dot(a0), a0.dot(a1), a1.dot(a0), a1.dot(a1);
            double p[2];
            for (int mu = 0; mu < 2; ++mu) {
                const Eigen::Vector2d b = basis_vector(bases[static_cast<std::size_t>(j)], mu);
                p[mu] = b.dot(rho * b);
                if (p[mu] < -1e-12) throw InternalError("sample_cps: negative outcome probability");
                if (p[mu] < 0) p[mu] = 0;
            }
            const double norm = p[0] + p[1];
            if (!(norm > 0)) throw InternalError("sample_cps: vanishing branch probability");
            const int mu = rng.uniform() * norm < p[0] ? 0 : 1;
            const Eigen::Vector2d b = basis_vector(bases[static_cast<std::size_t>(j)], mu);
            v = (b(0) * a0 + b(1) * a1) / std::sqrt(p[mu]);
            out[static_cast<std::size_t>(j)] = mu;
        }
        return out;
    }

private:
    std::vector<SiteTensor> sites_;
    Vec weights_;
    Mat vectors_;
};

/// One shot over the window [start, start + L) in a uniform basis.
inline ShotRecord sample_cps(const FiniteMPS& mps, int start, int L, Basis basis, std::uint64_t seed) {
    SamplingWindow w(mps, start, L);
    Rng rng(seed);
    ShotRecord s;
    s.basis = basis;
    s.outcomes = w.sample(std::vector<Basis>(static_cast<std::size_t>(L), basis), rng);
    return s;
}

/// n shots; shot i draws from the substream seeded with seed + i.
inline std::vector<ShotRecord> sample_shots(const SamplingWindow& w, Basis basis, int n, std::uint64_t seed, int label,
                                            double h_source) {
    std::vector<ShotRecord> shots(static_cast<std::size_t>(n));
    const std::vector<Basis> bases(static_cast<std::size_t>(w.length()), basis);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
        Rng rng(seed + i);
        auto& s = shots[i];
        s.basis = basis;
        s.label = label;
        s.h_source = h_source;
        s.outcomes = w.sample(bases, rng);
    });
    return shots;
}

}  // namespace tnd
