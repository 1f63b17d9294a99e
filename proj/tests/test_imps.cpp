#include "oracles.hpp"
#include "tnd/imps.hpp"

#include <gtest/gtest.h>

using namespace tnd;

namespace {

SiteTensor random_left_canonical(int chi, std::uint64_t seed) {
    Rng rng(seed);
    return split_rows(random_isometry(rng, 2 * chi, chi));
}

SiteTensor product_tensor(double a0, double a1) { return {Mat::Constant(1, 1, a0), Mat::Constant(1, 1, a1)}; }

const IMPSModel& optimized_h1_chi4() {
    static const IMPSModel m = optimize_imps(1.0, 4, 6, 5).model;
    return m;
}

}  // namespace

TEST(TransferMatrix, ProductStateIdentity) {
    Mat T = transfer_matrix(product_tensor(1, 0), Mat::Identity(2, 2));
    ASSERT_EQ(T.rows(), 1);
    EXPECT_DOUBLE_EQ(T(0, 0), 1.0);
}

TEST(TransferMatrix, IdentityIsLeftEigenvector) {
    for (int chi : {2, 3, 4}) {
        const auto A = random_left_canonical(chi, 10 + chi);
        const Mat T = transfer_matrix(A, Mat::Identity(2, 2));
        Vec id = Vec::Zero(chi * chi);
        for (int a = 0; a < chi; ++a) id(a * chi + a) = 1;
        EXPECT_LT((T.transpose() * id - id).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(TransferMatrix, MatchesIndexLoop) {
    const auto A = random_left_canonical(2, 21);
    const Mat O = pauli_z();
    const Mat T = transfer_matrix(A, O);
    for (int a = 0; a < 2; ++a)
        for (int ap = 0; ap < 2; ++ap)
            for (int b = 0; b < 2; ++b)
                for (int bp = 0; bp < 2; ++bp) {
                    double s = 0;
                    for (int i = 0; i < 2; ++i)
                        for (int ip = 0; ip < 2; ++ip) s += A[i](a, b) * O(i, ip) * A[ip](ap, bp);
                    EXPECT_NEAR(T(a * 2 + ap, b * 2 + bp), s, 1e-15);
                }
}

TEST(FixedPoint, ScalarBond) {
    const Mat rho = fixed_point_density(product_tensor(0.6, 0.8));
    ASSERT_EQ(rho.rows(), 1);
    EXPECT_DOUBLE_EQ(rho(0, 0), 1.0);
}

TEST(FixedPoint, ClassicalGhzIsDegenerate) {
    SiteTensor A{Mat::Zero(2, 2), Mat::Zero(2, 2)};
    A[0](0, 0) = 1;
    A[1](1, 1) = 1;
    EXPECT_THROW(fixed_point_density(A), DegenerateTransfer);
    try {
        fixed_point_density(A);
    } catch (const DegenerateTransfer& e) {
        EXPECT_LT(e.gap, 1e-8);
    }
}

TEST(FixedPoint, AlternatingTensorIsNotDegenerate) {
    // spectrum {1, -1, 0, 0}: the -1 eigenvalue does not make the fixed point ambiguous
    SiteTensor A{Mat::Zero(2, 2), Mat::Zero(2, 2)};
    A[0](1, 0) = 1;
    A[1](0, 1) = 1;
    const Mat rho = fixed_point_density(A);
    EXPECT_LT((rho - 0.5 * Mat::Identity(2, 2)).norm(), 1e-12);
}

TEST(FixedPoint, MatchesPowerIteration) {
    // at the critical field the subleading transfer eigenvalue is ~0.956, so
    // 200 steps leave ~|l2|^200 ~ 1e-4 behind; iterate until that tail is gone
    const auto& m = optimized_h1_chi4();
    Eigen::EigenSolver<Mat> es(transfer_matrix(m.A, Mat::Identity(2, 2)));
    Vec mags = es.eigenvalues().cwiseAbs();
    std::sort(mags.data(), mags.data() + mags.size(), std::greater<>());
    const double l2 = mags(1);
    Rng rng(3);
    Mat g = rng.normal_matrix(4, 4);
    Mat U = g * g.transpose();
    const Mat rho = fixed_point_density(m.A);
    for (int n = 1; n <= 2000; ++n) {
        U = m.A[0] * U * m.A[0].transpose() + m.A[1] * U * m.A[1].transpose();
        U /= U.trace();
        if (n == 200) {
            EXPECT_LT((rho - U).cwiseAbs().maxCoeff(), 10 * std::pow(l2, 200)) << "l2 " << l2;
        }
    }
    EXPECT_LT((rho - U).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(FixedPoint, DensityMatrixInvariants) {
    for (int chi : {2, 4, 8}) {
        const auto A = random_left_canonical(chi, 30 + chi);
        const Mat rho = fixed_point_density(A);
        EXPECT_NEAR(rho.trace(), 1.0, 1e-10);
        EXPECT_LT((rho - rho.transpose()).norm(), 1e-14);
        EXPECT_GE(Eigen::SelfAdjointEigenSolver<Mat>(rho).eigenvalues().minCoeff(), -1e-10);
        EXPECT_LT((transfer_right(A, rho) - rho).norm(), 1e-10);
        // linear-system route agrees with the eigensolver
        const auto lu = detail::fixed_point_system(A);
        Vec rv = lu.solve(detail::vec_identity(chi));
        Mat r2 = Eigen::Map<const Mat>(rv.data(), chi, chi).transpose();
        EXPECT_LT((r2 / r2.trace() - rho).norm(), 1e-10);
    }
}

TEST(EnergyDensity, AlignedProductState) {
    EXPECT_NEAR(energy_density(product_tensor(1, 0), 0.7), 1.0, 1e-15);
}

TEST(EnergyDensity, PolarizedProductState) {
    EXPECT_NEAR(energy_density(product_tensor(M_SQRT1_2, M_SQRT1_2), 10.0), -10.0, 1e-13);
}

TEST(EnergyDensity, MatchesTwoSiteOracle) {
    // e0 = <Z Z> - h <X> on the infinite chain, with <..> contracted through rho
    const auto A = random_left_canonical(3, 41);
    const Mat rho = fixed_point_density(A);
    const Mat Z = pauli_z(), X = pauli_x();
    const double h = 0.8;
    double zz = 0, x = 0;
    for (int i = 0; i < 2; ++i)
        for (int ip = 0; ip < 2; ++ip)
            for (int j = 0; j < 2; ++j)
                for (int jp = 0; jp < 2; ++jp) {
                    if (Z(i, ip) * Z(j, jp) != 0)
                        zz += Z(i, ip) * Z(j, jp) * (rho * (A[i] * A[j]).transpose() * A[ip] * A[jp]).trace();
                }
    for (int i = 0; i < 2; ++i)
        for (int ip = 0; ip < 2; ++ip) x += X(i, ip) * (rho * A[i].transpose() * A[ip]).trace();
    EXPECT_NEAR(energy_density(A, h), zz - h * x, 1e-12);
}

TEST(EnergyDensity, GaugeInvariant) {
    const auto A = random_left_canonical(4, 42);
    Rng rng(43);
    const Mat W = random_isometry(rng, 4, 4);
    SiteTensor B{W * A[0] * W.transpose(), W * A[1] * W.transpose()};
    EXPECT_NEAR(energy_density(A, 1.3), energy_density(B, 1.3), 1e-10);
}

TEST(EnergyDensity, AnalyticGradientMatchesFiniteDifference) {
    for (int chi : {2, 4}) {
        const auto A = random_left_canonical(chi, 50 + chi);
        const double h = 0.9;
        SiteTensor g{Mat(chi, chi), Mat(chi, chi)};
        energy_density(A, h, g);
        const auto x = ManifoldPoint::stiefel(stack_rows(A));
        const Mat ga = tangent_project(x, stack_rows(g));
        Mat gf(2 * chi, chi);
        Mat X = x.value;
        for (Eigen::Index k = 0; k < X.size(); ++k) {
            const double v = X.data()[k], eps = 1e-6;
            X.data()[k] = v + eps;
            const double fp = energy_density(split_rows(X), h);
            X.data()[k] = v - eps;
            const double fm = energy_density(split_rows(X), h);
            X.data()[k] = v;
            gf.data()[k] = (fp - fm) / (2 * eps);
        }
        EXPECT_LT((ga - tangent_project(x, gf)).norm() / ga.norm(), 1e-5) << "chi " << chi;
    }
}

TEST(EnergyDensity, OptimizedChi8AtCriticalPoint) {
    const auto r = optimize_imps(1.0, 8, 8, 7);
    EXPECT_NEAR(r.model.e0, -4.0 / M_PI, 2e-3);
    EXPECT_NEAR(oracle::tfim_energy_density_exact(1.0), -4.0 / M_PI, 1e-12);
}

TEST(BurnIn, ScalarBondIsExact) {
    Vec v = Vec::Ones(1);
    for (int nb : {1, 3, 7}) EXPECT_NEAR(burn_in_cost(product_tensor(0.6, 0.8), v, nb), 0.0, 1e-15);
}

TEST(BurnIn, SingleStepDenseOracle) {
    const auto A = random_left_canonical(2, 60);
    Rng rng(61);
    Vec v = rng.normal_matrix(2, 1);
    v.normalize();
    // one step of the channel on the 2-qubit (bond x physical) register, then
    // trace out the physical qubit
    const Mat Ut = stack_rows(A);  // rows i*chi + a
    Vec out = Ut * v;
    Mat U = Mat::Zero(2, 2);
    for (int i = 0; i < 2; ++i) U += out.segment(2 * i, 2) * out.segment(2 * i, 2).transpose();
    EXPECT_NEAR(burn_in_cost(A, v, 1), (U - fixed_point_density(A)).norm(), 1e-12);
}

TEST(BurnIn, NonIncreasingOnOptimizedTensors) {
    const auto& m = optimized_h1_chi4();
    double prev = std::numeric_limits<double>::infinity();
    for (int nb = 1; nb <= 8; ++nb) {
        const double c = burn_in_cost(m.A, m.V, nb);
        EXPECT_LE(c, prev + 1e-12) << "nb " << nb;
        prev = c;
    }
}

TEST(BurnIn, GradientMatchesFiniteDifference) {
    const auto A = random_left_canonical(4, 62);
    Rng rng(63);
    Vec v = rng.normal_matrix(4, 1);
    v.normalize();
    const Mat rho = fixed_point_density(A);
    Vec g;
    burn_in_cost(A, v, 3, rho, g);
    for (int k = 0; k < 4; ++k) {
        Vec vp = v, vm = v;
        vp(k) += 1e-6;
        vm(k) -= 1e-6;
        const double fd = ((burn_in_state(A, vp, 3) - rho).norm() - (burn_in_state(A, vm, 3) - rho).norm()) / 2e-6;
        EXPECT_NEAR(g(k), fd, 1e-7);
    }
}

TEST(OptimizeImps, ClassicalLimit) {
    const auto r = optimize_imps(0.0, 2, 2, 1);
    EXPECT_LE(r.model.e0, -0.999);
}

TEST(OptimizeImps, DeepParamagnet) {
    const auto r = optimize_imps(10.0, 2, 2, 1);
    EXPECT_NEAR(r.model.e0, oracle::tfim_energy_density_exact(10.0), 1e-4);
}

TEST(OptimizeImps, BoundaryReachesFixedPoint) {
    const auto& m = optimized_h1_chi4();
    EXPECT_LT(burn_in_cost(m.A, m.V, 6), 1e-2);
}

TEST(OptimizeImps, ModelInvariantsAndReproducibleEnergy) {
    const auto& m = optimized_h1_chi4();
    EXPECT_LT(left_canonical_residual(m.A), 1e-10);
    EXPECT_NEAR(m.V.norm(), 1.0, 1e-12);
    EXPECT_EQ(m.e0, energy_density(m.A, m.h_source));
    const auto again = optimize_imps(1.0, 4, 6, 5).model;
    EXPECT_EQ(again.A[0], m.A[0]);
    EXPECT_EQ(again.V, m.V);
}

TEST(OptimizeImps, VariationalInBondDimension) {
    for (double h : {0.5, 2.0}) {
        double prev = std::numeric_limits<double>::infinity();
        for (int chi : {2, 4, 8}) {
            const double e = optimize_imps(h, chi, 4, 3).model.e0;
            EXPECT_LE(e, prev + 1e-9) << "h " << h << " chi " << chi;
            EXPECT_GE(e, oracle::tfim_energy_density_exact(h) - 1e-9);
            prev = e;
        }
    }
}

TEST(OptimizeImps, RejectsBadChi) { EXPECT_THROW(optimize_imps(1.0, 3, 2, 1), InvalidArgument); }
