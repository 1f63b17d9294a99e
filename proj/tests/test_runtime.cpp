#include "model_oracles.hpp"
#include "tnd/runtime.hpp"

#include <gtest/gtest.h>

using namespace tnd;
using namespace oracle;

namespace {

/// Joint (physical, discriminator bond, test bond) simulation of the
/// entangled inference circuit.
Vec dense_entangled_oracle(const CompiledModel& m, const TestStateUnitaries& t) {
    const Eigen::Index chi = m.hyper.chi, ct = t.chi, dim = 2 * chi * ct;
    auto idx = [&](Eigen::Index p, Eigen::Index a, Eigen::Index b) { return (p * chi + a) * ct + b; };
    auto on_test = [&](const Mat& U) {  // U on (p, test bond)
        Mat op = Mat::Zero(dim, dim);
        for (Eigen::Index p = 0; p < 2; ++p)
            for (Eigen::Index q = 0; q < 2; ++q)
                for (Eigen::Index a = 0; a < chi; ++a)
                    for (Eigen::Index b = 0; b < ct; ++b)
                        for (Eigen::Index c = 0; c < ct; ++c) op(idx(p, a, b), idx(q, a, c)) = U(p * ct + b, q * ct + c);
        return op;
    };
    auto on_disc = [&](const Mat& U) {  // U on (p, discriminator bond)
        Mat op = Mat::Zero(dim, dim);
        for (Eigen::Index p = 0; p < 2; ++p)
            for (Eigen::Index q = 0; q < 2; ++q)
                for (Eigen::Index a = 0; a < chi; ++a)
                    for (Eigen::Index c = 0; c < chi; ++c)
                        for (Eigen::Index b = 0; b < ct; ++b) op(idx(p, a, b), idx(q, c, b)) = U(p * chi + a, q * chi + c);
        return op;
    };
    const Mat UR = circuit_unitary(m.R), UG = circuit_unitary(m.G), UC = circuit_unitary(m.C);
    const Vec zero = Vec::Unit(2, 0);
    Mat disc = projector(UR.col(0));
    for (int n = 0; n < m.hyper.nb; ++n) disc = trace_top(UG * oracle::kron(projector(zero), disc) * UG.transpose());
    Mat test = projector(t.UR.col(0));
    for (int n = 0; n < t.nb_prime; ++n) test = trace_top(t.UG * oracle::kron(projector(zero), test) * t.UG.transpose());
    Mat bonds = oracle::kron(disc, test);
    const Mat G = on_test(t.UG);
    for (int step = 1; step <= m.hyper.L; ++step) {
        const Mat D = on_disc(circuit_unitary(m.D, m.theta_D[static_cast<std::size_t>(m.hyper.L - step)]));
        const Mat full = D * G * oracle::kron(projector(zero), bonds) * G.transpose() * D.transpose();
        bonds = trace_top(full);
    }
    Mat dred = Mat::Zero(chi, chi);
    for (Eigen::Index a = 0; a < chi; ++a)
        for (Eigen::Index c = 0; c < chi; ++c)
            for (Eigen::Index b = 0; b < ct; ++b) dred(a, c) += bonds(a * ct + b, c * ct + b);
    const Mat full = UC * oracle::kron(projector(zero), dred) * UC.transpose();
    Vec rho(2);
    rho(0) = full.diagonal().head(chi).sum();
    rho(1) = full.diagonal().tail(chi).sum();
    return rho;
}

}  // namespace

TEST(RegularizedCost, WorkedExamples) {
    Vec perfect(2), even(2);
    perfect << 1, 0;
    even << 0.5, 0.5;
    EXPECT_EQ(regularized_sample_cost(perfect, 0, {}), 0.0);
    EXPECT_NEAR(regularized_sample_cost(even, 0, {}), 0.81, 1e-15);
    EXPECT_NEAR(regularized_sample_cost(even, 1, {}), 0.81, 1e-15);
    EXPECT_NEAR(regularized_sample_cost(perfect, 1, {}), 1.9 * 1.9, 1e-14);
}

TEST(Channel, MatchesDenseOracle) {
    Rng rng(60);
    int cases = 0;
    for (int chi : {2, 4})
        for (int L = 1; L <= 3; ++L)
            for (int trial = 0; trial < 17; ++trial, ++cases) {
                const auto m = random_model(rng, chi, L, 1 + static_cast<int>(rng.below(3)));
                const auto batch = random_batch(rng, L, 3);
                double expect = 0;
                for (const auto& s : batch) {
                    const Vec rho = dense_channel_oracle(m, s);
                    EXPECT_LT((infer_product(m, s).diag - rho).norm(), 1e-12);
                    expect += regularized_sample_cost(rho, s.label, {});
                }
                EXPECT_NEAR(cost_no_postselection(m, batch), expect / 3, 1e-12);
            }
    EXPECT_GE(cases, 100);
}

TEST(Channel, TracePreservingAndPositive) {
    Rng rng(61);
    for (int trial = 0; trial < 20; ++trial) {
        const auto m = random_model(rng, 4, 3, 2);
        ChannelAudit audit;
        const auto batch = random_batch(rng, 3, 10);
        cost_no_postselection(m, batch, {}, nullptr, &audit);
        for (const auto& s : batch) EXPECT_NEAR(infer_product(m, s, false, &audit).diag.sum(), 1.0, 1e-12);
        EXPECT_LT(audit.max_trace_error, 1e-10);
        EXPECT_GT(audit.min_eigenvalue, -1e-10);
    }
}

TEST(Channel, CoherencesDoNotAffectReadout) {
    Rng rng(62);
    const auto m = random_model(rng, 2, 2, 1);
    const auto s = random_batch(rng, 2, 1)[0];
    // class-register state after U_C, from the dense simulation
    const Mat UR = circuit_unitary(m.R), UG = circuit_unitary(m.G), UC = circuit_unitary(m.C);
    Mat bond = projector(UR.col(0));
    bond = trace_top(UG * oracle::kron(projector(Vec::Unit(2, 0)), bond) * UG.transpose());
    for (int j = 1; j >= 0; --j) {
        const Mat UD = circuit_unitary(m.D, m.theta_D[static_cast<std::size_t>(j)]);
        bond = trace_top(UD * oracle::kron(projector(s.x[static_cast<std::size_t>(j)]), bond) * UD.transpose());
    }
    const Mat full = UC * oracle::kron(projector(Vec::Unit(2, 0)), bond) * UC.transpose();
    Mat cls(2, 2);  // trace out the bond qubit
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) cls(a, b) = full(2 * a, 2 * b) + full(2 * a + 1, 2 * b + 1);
    const Mat dephased = Mat(cls.diagonal().asDiagonal());
    EXPECT_LT((infer_product(m, s).diag - dephased.diagonal()).norm(), 1e-12);
    EXPECT_GT(std::abs(cls(0, 1)), 1e-6);
}

TEST(Channel, RejectsBadInputs) {
    Rng rng(63);
    const auto m = random_model(rng, 2, 2, 1);
    EXPECT_THROW(cost_no_postselection(m, random_batch(rng, 3, 2)), InvalidArgument);
    EXPECT_THROW(cost_no_postselection(m, random_batch(rng, 2, 2), {0.0, 2.0}), InvalidArgument);
    EXPECT_THROW(cost_no_postselection(m, {}), InvalidArgument);
}

TEST(Gradient, MatchesFiniteDifference) {
    Rng rng(64);
    for (int chi : {2, 4}) {
        auto m = random_model(rng, chi, 3, 2);
        const auto batch = random_batch(rng, 3, 25);
        const RegularizedCost rc{0.9, 2.0};
        Vec g;
        cost_no_postselection(m, batch, rc, &g);
        const Vec x = m.flat();
        Vec fd(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            Vec p = x, q = x;
            p(i) += 1e-6;
            q(i) -= 1e-6;
            m.set_flat(p);
            const double fp = cost_no_postselection(m, batch, rc);
            m.set_flat(q);
            fd(i) = (fp - cost_no_postselection(m, batch, rc)) / 2e-6;
        }
        m.set_flat(x);
        EXPECT_LT((g - fd).norm(), 1e-5 * std::max(1.0, fd.norm())) << "chi " << chi;
    }
}

TEST(Gradient, NonIntegerExponent) {
    Rng rng(65);
    auto m = random_model(rng, 2, 2, 1);
    const auto batch = random_batch(rng, 2, 10);
    const RegularizedCost rc{1.0, 1.5};
    Vec g;
    cost_no_postselection(m, batch, rc, &g);
    const Vec x = m.flat();
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Vec p = x, q = x;
        p(i) += 1e-6;
        q(i) -= 1e-6;
        m.set_flat(p);
        const double fp = cost_no_postselection(m, batch, rc);
        m.set_flat(q);
        EXPECT_NEAR(g(i), (fp - cost_no_postselection(m, batch, rc)) / 2e-6, 1e-6);
    }
}

TEST(CompiledModel, FlatRoundTrip) {
    Rng rng(66);
    auto m = random_model(rng, 4, 3, 1);
    const Vec x = m.flat();
    EXPECT_EQ(x.size(), m.n_params());
    auto n = m;
    n.set_flat(Vec::Zero(x.size()));
    n.set_flat(x);
    EXPECT_EQ(n.flat(), x);
    EXPECT_THROW(n.set_flat(Vec::Zero(x.size() + 1)), InvalidArgument);
}

TEST(CompiledModel, PostselectedCircuitReproducesTensors) {
    Rng rng(67);
    const auto t = DiscriminatorTensors::random({2, 3, 2, 2}, rng);
    CompileConfig cfg;
    const auto comp = compile_model(t, cfg);
    comp.model.validate();
    for (const auto& [role, r] : comp.roles) EXPECT_LE(r.distance, cfg.tol) << role_name(role);
    for (const auto& s : random_batch(rng, 3, 50)) {
        const auto want = predict_product(t, s).diag;
        const auto got = infer_product(comp.model, s, true).diag;
        EXPECT_LT((want - got).cwiseAbs().maxCoeff(), 2 * cfg.tol);
    }
}

TEST(Finetune, MonotoneAndImproving) {
    Rng rng(68);
    auto m = random_model(rng, 2, 3, 1);
    auto batch = random_batch(rng, 3, 60);
    for (std::size_t k = 0; k < batch.size(); ++k) {
        batch[k].label = static_cast<int>(k % 2);
        batch[k].x[0] = batch[k].label ? Eigen::Vector2d(0, 1) : Eigen::Vector2d(1, 0);
    }
    FinetuneConfig cfg;
    cfg.epochs = 5;
    const auto r = finetune_parameters(m, batch, cfg);
    for (std::size_t i = 1; i < r.epoch_costs.size(); ++i) EXPECT_LE(r.epoch_costs[i], r.epoch_costs[i - 1]);
    EXPECT_LT(r.cost_after, r.cost_before);
    EXPECT_NEAR(cost_no_postselection(r.model, batch, cfg.cost), r.cost_after, 1e-12);
    EXPECT_LE(r.restarts, cfg.max_restarts);
    EXPECT_GE(r.f1_after, 0.9);
}

TEST(Entangled, ProductTestStateMatchesProductInference) {
    Rng rng(69);
    for (int chi : {2, 4}) {
        const auto m = random_model(rng, chi, 3, 2);
        const Eigen::Vector2d x = random_unit2(rng);
        TestStateUnitaries t;
        t.chi = 1;
        t.nb_prime = 2;
        t.UR = Mat::Identity(1, 1);
        t.UG = complete_isometry(Mat(Vec(x)));
        const ProductSample s{{x, x, x}, 0};
        EXPECT_LT((infer_entangled(m, t).diag - infer_product(m, s).diag).norm(), 1e-10);
    }
}

TEST(Entangled, MatchesDenseOracle) {
    Rng rng(70);
    for (int trial = 0; trial < 10; ++trial) {
        const auto m = random_model(rng, 2, 2, 1 + static_cast<int>(rng.below(2)));
        IMPSModel test;
        test.chi = 2;
        test.nb_prime = 1 + static_cast<int>(rng.below(3));
        const auto split = split_rows(random_isometry(rng, 4, 2));
        test.A = split;
        test.V = random_isometry(rng, 2, 1);
        const auto t = embed_imps_exact(test);
        ChannelAudit audit;
        const Vec got = infer_entangled(m, t, {}, &audit).diag;
        EXPECT_LT((got - dense_entangled_oracle(m, t)).norm(), 1e-12);
        EXPECT_NEAR(got.sum(), 1.0, 1e-12);
        EXPECT_LT(audit.max_trace_error, 1e-10);
        EXPECT_GT(audit.min_eigenvalue, -1e-10);
    }
}

TEST(Entangled, ExactEmbeddingKeepsTensor) {
    Rng rng(71);
    IMPSModel test;
    test.chi = 4;
    test.A = split_rows(random_isometry(rng, 8, 4));
    test.V = random_isometry(rng, 4, 1);
    const auto t = embed_imps_exact(test);
    EXPECT_LT((t.UG.leftCols(4) - stack_rows(test.A)).norm(), 1e-14);
    EXPECT_LT((t.UG.transpose() * t.UG - Mat::Identity(8, 8)).norm(), 1e-12);
    EXPECT_LT((t.UR.col(0) - test.V).norm(), 1e-14);
}

TEST(Entangled, RegisterCap) {
    Rng rng(72);
    const auto m = random_model(rng, 4, 2, 1);
    IMPSModel test;
    test.chi = 4;
    test.A = split_rows(random_isometry(rng, 8, 4));
    test.V = random_isometry(rng, 4, 1);
    EXPECT_THROW(infer_entangled(m, embed_imps_exact(test), {4}), ResourceLimit);
    EXPECT_NO_THROW(infer_entangled(m, embed_imps_exact(test), {5}));
}

TEST(SampleLabel, Degenerate) {
    Vec d(2);
    d << 1, 0;
    for (int l : sample_label({d, true}, 100, 3)) EXPECT_EQ(l, 0);
}

TEST(SampleLabel, FairCoinWithinThreeSigma) {
    Vec d(2);
    d << 0.5, 0.5;
    const auto s = sample_label({d, true}, 10000, 4);
    const long zeros = std::count(s.begin(), s.end(), 0);
    EXPECT_LT(std::abs(zeros - 5000), 150);
    EXPECT_EQ(s, sample_label({d, true}, 10000, 4));
    EXPECT_NE(s, sample_label({d, true}, 10000, 5));
}
