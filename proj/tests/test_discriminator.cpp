#include "model_oracles.hpp"
#include "tnd/discriminator.hpp"

#include <gtest/gtest.h>

using namespace tnd;
using namespace oracle;

namespace {

/// chi = 2 model with R = |0>, G^0 = D^0 = I, G^1 = D^1 = 0, C = I.
DiscriminatorTensors perfect_model(int L) {
    DiscriminatorTensors t;
    t.hyper = {2, L, 1, 2};
    t.R = Vec::Unit(2, 0);
    t.G = Mat::Identity(4, 2);
    t.D = Mat::Identity(4, 2);
    t.C = Mat::Identity(2, 2);
    return t;
}

ProductSample all_zero(int L, int label) {
    return {std::vector<Eigen::Vector2d>(static_cast<std::size_t>(L), Eigen::Vector2d(1, 0)), label};
}

/// Class is the z value of site 0; other sites random.
std::vector<ProductSample> first_site_dataset(Rng& rng, int L, int m) {
    auto data = random_batch(rng, L, m);
    for (std::size_t k = 0; k < data.size(); ++k) {
        data[k].label = static_cast<int>(k % 2);
        data[k].x[0] = data[k].label == 0 ? Eigen::Vector2d(1, 0) : Eigen::Vector2d(0, 1);
    }
    return data;
}

}  // namespace

TEST(ClassificationCost, PerfectCallGivesMinusOne) {
    auto t = perfect_model(3);
    t.validate();
    EXPECT_NEAR(classification_cost(t, {all_zero(3, 0)}), -1.0, 1e-15);
    EXPECT_NEAR(classification_cost(t, {all_zero(3, 1)}), 1.0, 1e-15);
    const auto p = predict_product(t, all_zero(3, 0));
    EXPECT_NEAR(p.diag(0), 1.0, 1e-15);
    EXPECT_NEAR(p.diag(1), 0.0, 1e-15);
}

TEST(ClassificationCost, EqualDiagonalGivesZero) {
    // C maps |0> to (|0> + |1>)/sqrt 2, so both classes read 1/2
    auto t = perfect_model(2);
    t.C = Mat::Identity(2, 2);
    t.C << 1, 1, 1, -1;
    t.C /= std::sqrt(2.0);
    EXPECT_NEAR(classification_cost(t, {all_zero(2, 0)}), 0.0, 1e-15);
    EXPECT_NEAR(classification_cost(t, {all_zero(2, 1)}), 0.0, 1e-15);
    EXPECT_EQ(predict_product(t, all_zero(2, 1)).label(), 0);  // tie goes low
}

TEST(ClassificationCost, DegenerateReadoutNamesSample) {
    auto t = perfect_model(2);
    auto bad = all_zero(2, 0);
    bad.x[1] = {0, 1};  // D^1 = 0 annihilates the bond state
    try {
        classification_cost(t, {all_zero(2, 0), bad});
        FAIL() << "expected DegenerateReadout";
    } catch (const DegenerateReadout& e) {
        EXPECT_EQ(e.sample, 1u);
    }
    EXPECT_THROW(predict_product(t, bad), DegenerateReadout);
}

TEST(ClassificationCost, MatchesIndexLoopOracle) {
    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        const auto t = DiscriminatorTensors::random({2, 2, 1, 2}, rng);
        const auto batch = random_batch(rng, 2, 5);
        double expect = 0;
        for (const auto& s : batch) {
            const Vec rho = oracle_readout(t, s);
            expect += (rho.sum() - 2 * rho(s.label)) / rho.sum();
            const auto p = predict_product(t, s);
            EXPECT_LT((p.diag - rho / rho.sum()).norm(), 1e-12);
        }
        EXPECT_NEAR(classification_cost(t, batch), expect / 5, 1e-12);
    }
}

TEST(ClassificationCost, BoundedAndNormalized) {
    Rng rng(22);
    for (int trial = 0; trial < 50; ++trial) {
        const auto t = DiscriminatorTensors::random({4, 3, 2, 2}, rng);
        const auto s = random_batch(rng, 3, 1);
        const double c = classification_cost(t, s);
        EXPECT_GE(c, -1.0);
        EXPECT_LE(c, 1.0);
        EXPECT_NEAR(predict_product(t, s[0]).diag.sum(), 1.0, 1e-12);
    }
}

TEST(ClassificationCost, BondGaugeInvariance) {
    Rng rng(23);
    for (int chi : {2, 4, 8}) {
        const auto t = DiscriminatorTensors::random({chi, 4, 3, 2}, rng);
        const auto batch = random_batch(rng, 4, 20);
        const auto g = apply_gauge(t, random_isometry(rng, chi, chi));
        EXPECT_LT(g.invariant_residual(), 1e-12);
        EXPECT_NEAR(classification_cost(t, batch), classification_cost(g, batch), 1e-10);
    }
}

TEST(ClassificationCost, AnalyticGradientMatchesFiniteDifference) {
    Rng rng(24);
    const DiscriminatorHyper h{2, 3, 2, 2};
    const auto t = DiscriminatorTensors::random(h, rng);
    const auto batch = random_batch(rng, 3, 20);
    const auto objective = discriminator_objective(batch, h);
    const Points x = t.as_points();
    std::vector<Mat> ga(4);
    objective(x, &ga);
    const auto gf = fd_gradient(objective, x, {}, 1e-6);
    for (std::size_t p = 0; p < 4; ++p) {
        const Mat ra = tangent_project(x[p], ga[p]), rf = tangent_project(x[p], gf[p]);
        EXPECT_LT((ra - rf).norm(), 1e-5) << "tensor " << p;
    }
}

TEST(ClassificationCost, EuclideanGradientMatchesFiniteDifference) {
    // every entry, not just the tangent part
    Rng rng(25);
    const auto t = DiscriminatorTensors::random({4, 2, 3, 2}, rng);
    const auto batch = random_batch(rng, 2, 7);
    DiscriminatorGrad g;
    classification_cost(t, batch, &g);
    const double eps = 1e-6;
    auto check = [&](auto member, const Mat& analytic) {
        for (Eigen::Index i = 0; i < analytic.rows(); ++i)
            for (Eigen::Index j = 0; j < analytic.cols(); ++j) {
                auto tp = t, tm = t;
                member(tp)(i, j) += eps;
                member(tm)(i, j) -= eps;
                const double fd = (classification_cost(tp, batch) - classification_cost(tm, batch)) / (2 * eps);
                EXPECT_NEAR(analytic(i, j), fd, 1e-7);
            }
    };
    check([](DiscriminatorTensors& m) -> Mat& { return m.G; }, g.G);
    check([](DiscriminatorTensors& m) -> Mat& { return m.D; }, g.D);
    check([](DiscriminatorTensors& m) -> Mat& { return m.C; }, g.C);
    for (Eigen::Index i = 0; i < t.R.size(); ++i) {
        auto tp = t, tm = t;
        tp.R(i) += eps;
        tm.R(i) -= eps;
        const double fd = (classification_cost(tp, batch) - classification_cost(tm, batch)) / (2 * eps);
        EXPECT_NEAR(g.R(i), fd, 1e-7);
    }
}

TEST(ClassificationCost, ShuffleInvariance) {
    Rng rng(26);
    const auto t = DiscriminatorTensors::random({4, 3, 2, 2}, rng);
    auto batch = random_batch(rng, 3, 200);
    const double before = classification_cost(t, batch);
    rng.shuffle(batch);
    EXPECT_NEAR(classification_cost(t, batch), before, 1e-12);
}

TEST(ClassificationCost, RejectsMismatchedLength) {
    Rng rng(27);
    const auto t = DiscriminatorTensors::random({2, 3, 1, 2}, rng);
    EXPECT_THROW(classification_cost(t, random_batch(rng, 2, 1)), InvalidArgument);
    EXPECT_THROW(classification_cost(t, {}), InvalidArgument);
}

TEST(Hyper, ValidateRejectsBadShapes) {
    Rng rng(28);
    auto t = DiscriminatorTensors::random({2, 2, 1, 2}, rng);
    t.validate();
    t.hyper.chi = 3;
    EXPECT_THROW(t.validate(), InvalidArgument);
    auto u = DiscriminatorTensors::random({2, 2, 1, 2}, rng);
    u.G *= 1.1;
    EXPECT_THROW(u.validate(), InvalidArgument);
}

TEST(F1, DiagonalIsPerfect) {
    Eigen::MatrixXi c(2, 2);
    c << 10, 0, 0, 7;
    const auto r = f1_scores(c);
    EXPECT_DOUBLE_EQ(r.per_class[0], 1.0);
    EXPECT_DOUBLE_EQ(r.per_class[1], 1.0);
    EXPECT_DOUBLE_EQ(r.average, 1.0);
}

TEST(F1, WorkedExample) {
    Eigen::MatrixXi c(2, 2);
    c << 8, 2, 3, 7;
    const auto r = f1_scores(c);
    const double p0 = 8.0 / 11, r0 = 8.0 / 10, p1 = 7.0 / 9, r1 = 7.0 / 10;
    EXPECT_NEAR(r.per_class[0], 2 * p0 * r0 / (p0 + r0), 1e-15);
    EXPECT_NEAR(r.per_class[0], 0.7619, 1e-4);
    EXPECT_NEAR(r.per_class[1], 2 * p1 * r1 / (p1 + r1), 1e-15);
    EXPECT_NEAR(r.average, 0.5 * (r.per_class[0] + r.per_class[1]), 1e-15);
}

TEST(F1, SymmetricConfusion) {
    Eigen::MatrixXi c = Eigen::MatrixXi::Constant(2, 2, 5);
    for (double f : f1_scores(c).per_class) EXPECT_DOUBLE_EQ(f, 0.5);
}

TEST(F1, EmptyClassScoresZero) {
    Eigen::MatrixXi c(2, 2);
    c << 6, 0, 4, 0;
    const auto r = f1_scores(c);
    EXPECT_DOUBLE_EQ(r.per_class[1], 0.0);
    EXPECT_NEAR(r.per_class[0], 2 * 0.6 / 1.6, 1e-15);
    Eigen::MatrixXi neg(2, 2);
    neg << 1, -1, 0, 1;
    EXPECT_THROW(f1_scores(neg), InvalidArgument);
}

TEST(Train, SeparableOnFirstSite) {
    Rng rng(30);
    const auto data = first_site_dataset(rng, 4, 40);
    TrainSchedule s;
    s.restarts = 2;
    s.joint_iters = 200;
    s.cyclic_rounds = 1;
    const auto r = train_discriminator(data, 2, 2, 7, s);
    EXPECT_NEAR(r.train_f1, 1.0, 1e-9);
    EXPECT_LT(r.cost, -0.9);
    EXPECT_LT(r.model.invariant_residual(), 1e-10);
    EXPECT_LT(r.max_invariant_residual, 1e-10);
}

TEST(Train, DeterministicAndShuffleInvariant) {
    Rng rng(31);
    auto data = first_site_dataset(rng, 3, 30);
    for (auto& s : data) s.x[0] = (0.8 * s.x[0] + 0.6 * random_unit2(rng)).normalized();
    TrainSchedule s;
    s.restarts = 1;
    s.joint_iters = 60;
    s.cyclic_rounds = 1;
    s.single_iters = 10;
    const auto a = train_discriminator(data, 2, 1, 3, s);
    const auto b = train_discriminator(data, 2, 1, 3, s);
    EXPECT_EQ(a.cost, b.cost);
    EXPECT_EQ(a.model.G, b.model.G);
    rng.shuffle(data);
    const auto c = train_discriminator(data, 2, 1, 3, s);
    EXPECT_NEAR(a.cost, c.cost, 1e-10);
}

TEST(Train, RequiresBothClasses) {
    Rng rng(32);
    auto data = random_batch(rng, 2, 10);
    for (auto& s : data) s.label = 1;
    EXPECT_THROW(train_discriminator(data, 2, 1, 0), InvalidArgument);
    EXPECT_THROW(train_discriminator({}, 2, 1, 0), InvalidArgument);
}
