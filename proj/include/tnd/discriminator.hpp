#pragma once

#include "tnd/manifold.hpp"
#include "tnd/mps.hpp"

#include <limits>

namespace tnd {

/// One product-state input: a normalized 2-vector per site and its class.
struct ProductSample {
    std::vector<Eigen::Vector2d> x;
    int label = 0;
};

inline ProductSample to_sample(const ShotRecord& shot) { return {shot.amplitudes(), shot.label}; }

struct DiscriminatorHyper {
    int chi = 2;
    int L = 1;
    int nb = 1;
    int nc = 2;
};

/// Boundary vector R on the sphere, generator G and conditioner D as
/// (2 chi) x chi isometries, and readout C in St(chi, nc).
///
/// Both G and D are stored with the physical index as the row block: G^i is
/// rows [i chi, (i+1) chi) of G. The conditioning tensor is the transpose of
/// the corresponding block of D, so sum_i D^i D^iT = I.
struct DiscriminatorTensors {
    Vec R;
    Mat G;
    Mat D;
    Mat C;
    DiscriminatorHyper hyper;

    Mat gen(int i) const { return G.middleRows(i * hyper.chi, hyper.chi); }
    Mat cond(int i) const { return D.middleRows(i * hyper.chi, hyper.chi).transpose(); }

    /// Largest manifold residual of the four tensors.
    double invariant_residual() const {
        const Eigen::Index c = hyper.chi;
        double r = std::abs(R.norm() - 1.0);
        r = std::max(r, (G.transpose() * G - Mat::Identity(c, c)).norm());
        r = std::max(r, (D.transpose() * D - Mat::Identity(c, c)).norm());
        r = std::max(r, (C.transpose() * C - Mat::Identity(C.cols(), C.cols())).norm());
        return r;
    }

    void validate() const {
        const auto& h = hyper;
        require(is_power_of_two(h.chi) && is_power_of_two(h.nc), "discriminator: chi and nc must be powers of two");
        require(h.nc <= h.chi, "discriminator: nc must not exceed chi");
        require(h.L >= 1 && h.nb >= 1, "discriminator: L and nb must be positive");
        require(R.size() == h.chi && G.rows() == 2 * h.chi && G.cols() == h.chi && D.rows() == 2 * h.chi &&
                    D.cols() == h.chi && C.rows() == h.chi && C.cols() == h.nc,
                "discriminator: tensor shapes do not match hyperparameters");
        require(invariant_residual() < 1e-8, "discriminator: tensors off their manifolds");
    }

    Points as_points() const {
        return {ManifoldPoint::sphere(R), ManifoldPoint::stiefel(G), ManifoldPoint::stiefel(D), ManifoldPoint::stiefel(C)};
    }

    static DiscriminatorTensors from_points(const Points& p, const DiscriminatorHyper& h) {
        return {p[0].value.col(0), p[1].value, p[2].value, p[3].value, h};
    }

    static DiscriminatorTensors random(const DiscriminatorHyper& h, Rng& rng) {
        DiscriminatorTensors t;
        t.hyper = h;
        Vec r = rng.normal_matrix(h.chi, 1);
        t.R = r / r.norm();
        t.G = random_isometry(rng, 2 * h.chi, h.chi);
        t.D = random_isometry(rng, 2 * h.chi, h.chi);
        t.C = random_isometry(rng, h.chi, h.nc);
        return t;
    }
};

/// Applies the bond gauge W (orthogonal chi x chi) to every bond index.
inline DiscriminatorTensors apply_gauge(const DiscriminatorTensors& t, const Mat& W) {
    DiscriminatorTensors out = t;
    const Eigen::Index c = t.hyper.chi;
    out.R = W * t.R;
    for (int i = 0; i < kPhys; ++i) {
        out.G.middleRows(i * c, c) = W * t.G.middleRows(i * c, c) * W.transpose();
        out.D.middleRows(i * c, c) = W * t.D.middleRows(i * c, c) * W.transpose();
    }
    out.C = W * t.C;
    return out;
}

/// Class probabilities; normalized unless taken straight from the tensors.
struct ClassDistribution {
    Vec diag;
    bool normalized = true;

    /// argmax with ties going to the lower index
    int label() const {
        int best = 0;
        for (int l = 1; l < diag.size(); ++l)
            if (diag(l) > diag(best)) best = l;
        return best;
    }
};

/// Bond state after the burn-in: nb applications of the G channel to R R^T.
inline Mat prior_bond_state(const DiscriminatorTensors& t) {
    Mat V = t.R * t.R.transpose();
    const Mat G0 = t.gen(0), G1 = t.gen(1);
    for (int n = 0; n < t.hyper.nb; ++n) V = G0 * V * G0.transpose() + G1 * V * G1.transpose();
    return V;
}

/// Unnormalized readout diagonal for one sample given the prior bond state.
inline Vec readout_diagonal(const DiscriminatorTensors& t, const Mat& prior, const ProductSample& s) {
    const int L = t.hyper.L;
    require(static_cast<int>(s.x.size()) == L, "discriminator: sample length does not match L");
    const Mat D0 = t.cond(0), D1 = t.cond(1);
    Mat W = prior;
    for (int j = L - 1; j >= 0; --j) {
        const auto& x = s.x[static_cast<std::size_t>(j)];
        const Mat B = x(0) * D0 + x(1) * D1;
        W = B * W * B.transpose();
    }
    return (t.C.transpose() * W * t.C).diagonal();
}

inline ClassDistribution predict_product(const DiscriminatorTensors& t, const ProductSample& s) {
    Vec d = readout_diagonal(t, prior_bond_state(t), s);
    const double total = d.sum();
    if (!(total >= 1e-14)) throw DegenerateReadout(0);
    return {d / total, true};
}

struct DiscriminatorGrad {
    Vec R;
    Mat G, D, C;
};

namespace detail {

/// Per-sample cost 1 - 2 rho_l / sum(rho) and its gradient with respect to the
/// prior bond state, the conditioning tensors and C; accumulated into the
/// given buffers.
inline double sample_cost(const DiscriminatorTensors& t, const Mat& prior, const ProductSample& s, std::size_t index,
                          Mat* prior_bar, Mat* D0_bar, Mat* D1_bar, Mat* C_bar) {
    const int L = t.hyper.L;
    require(static_cast<int>(s.x.size()) == L, "discriminator: sample length does not match L");
    require(s.label >= 0 && s.label < t.hyper.nc, "discriminator: label out of range");
    const Mat D0 = t.cond(0), D1 = t.cond(1);
    std::vector<Mat> W(static_cast<std::size_t>(L + 1));
    std::vector<Mat> B(static_cast<std::size_t>(L));
    W[static_cast<std::size_t>(L)] = prior;
    for (int j = L - 1; j >= 0; --j) {
        const auto& x = s.x[static_cast<std::size_t>(j)];
        B[static_cast<std::size_t>(j)] = x(0) * D0 + x(1) * D1;
        W[static_cast<std::size_t>(j)] =
            B[static_cast<std::size_t>(j)] * W[static_cast<std::size_t>(j + 1)] * B[static_cast<std::size_t>(j)].transpose();
    }
    const Mat WC = W[0] * t.C;
    const Vec rho = (t.C.transpose() * WC).diagonal();
    const double S = rho.sum();
    if (!(S >= 1e-14)) throw DegenerateReadout(index);
    const double rl = rho(s.label);
    const double cost = 1.0 - 2.0 * rl / S;
    if (!prior_bar) return cost;

    Vec a = Vec::Constant(rho.size(), 2.0 * rl / (S * S));
    a(s.label) -= 2.0 / S;
    *C_bar += 2.0 * WC * a.asDiagonal();
    Mat Wbar = t.C * a.asDiagonal() * t.C.transpose();
    for (int j = 0; j < L; ++j) {
        const Mat& b = B[static_cast<std::size_t>(j)];
        const Mat Bbar = 2.0 * Wbar * b * W[static_cast<std::size_t>(j + 1)];
        const auto& x = s.x[static_cast<std::size_t>(j)];
        *D0_bar += x(0) * Bbar;
        *D1_bar += x(1) * Bbar;
        Wbar = b.transpose() * Wbar * b;
    }
    *prior_bar += Wbar;
    return cost;
}

}  // namespace detail

/// Mean trace-normalized classification cost over a batch, and optionally its
/// Euclidean gradient with respect to the stored (R, G, D, C).
inline double classification_cost(const DiscriminatorTensors& t, const std::vector<ProductSample>& batch,
                                  DiscriminatorGrad* grad = nullptr) {
    require(!batch.empty(), "classification_cost: empty batch");
    const Eigen::Index c = t.hyper.chi;
    const Mat prior = prior_bond_state(t);

    constexpr std::size_t chunk = 64;
    const std::size_t nchunks = (batch.size() + chunk - 1) / chunk;
    struct Partial {
        double cost = 0.0;
        Mat prior_bar, D0_bar, D1_bar, C_bar;
    };
    std::vector<Partial> parts(nchunks);
    parallel_chunks(batch.size(), chunk, [&](std::size_t ci, std::size_t b, std::size_t e) {
        Partial& p = parts[ci];
        if (grad) {
            p.prior_bar = Mat::Zero(c, c);
            p.D0_bar = Mat::Zero(c, c);
            p.D1_bar = Mat::Zero(c, c);
            p.C_bar = Mat::Zero(c, t.hyper.nc);
        }
        for (std::size_t m = b; m < e; ++m)
            p.cost += detail::sample_cost(t, prior, batch[m], m, grad ? &p.prior_bar : nullptr, &p.D0_bar, &p.D1_bar,
                                          &p.C_bar);
    });
    double cost = 0.0;
    for (const auto& p : parts) cost += p.cost;
    const double inv_m = 1.0 / static_cast<double>(batch.size());
    if (!grad) return cost * inv_m;

    Mat Vbar = Mat::Zero(c, c), D0b = Mat::Zero(c, c), D1b = Mat::Zero(c, c), Cb = Mat::Zero(c, t.hyper.nc);
    for (const auto& p : parts) {
        Vbar += p.prior_bar;
        D0b += p.D0_bar;
        D1b += p.D1_bar;
        Cb += p.C_bar;
    }
    Vbar *= inv_m;

    // back through the burn-in
    const Mat G0 = t.gen(0), G1 = t.gen(1);
    std::vector<Mat> Vs{t.R * t.R.transpose()};
    for (int n = 0; n < t.hyper.nb; ++n) Vs.push_back(G0 * Vs.back() * G0.transpose() + G1 * Vs.back() * G1.transpose());
    Mat G0b = Mat::Zero(c, c), G1b = Mat::Zero(c, c);
    for (int k = t.hyper.nb; k >= 1; --k) {
        const Mat& prev = Vs[static_cast<std::size_t>(k - 1)];
        G0b += 2.0 * Vbar * G0 * prev;
        G1b += 2.0 * Vbar * G1 * prev;
        Vbar = G0.transpose() * Vbar * G0 + G1.transpose() * Vbar * G1;
    }
    grad->R = 2.0 * Vbar * t.R;
    grad->G.resize(2 * c, c);
    grad->G << G0b, G1b;
    grad->D.resize(2 * c, c);
    grad->D << (D0b * inv_m).transpose(), (D1b * inv_m).transpose();
    grad->C = Cb * inv_m;
    return cost * inv_m;
}

// ---------------------------------------------------------------------------
// Metrics

struct F1Report {
    std::vector<double> per_class;
    double average = 0.0;
};

/// Per-class and class-averaged F1 from a confusion matrix with rows = true
/// class and columns = predicted class.
inline F1Report f1_scores(const Eigen::MatrixXi& confusion) {
    require(confusion.rows() == confusion.cols() && confusion.rows() > 0, "f1_scores: confusion must be square");
    require(confusion.minCoeff() >= 0, "f1_scores: negative count");
    F1Report r;
    const Eigen::Index n = confusion.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
        const double tp = confusion(i, i);
        const double col = confusion.col(i).sum(), row = confusion.row(i).sum();
        const double p = col > 0 ? tp / col : 0.0;
        const double rc = row > 0 ? tp / row : 0.0;
        r.per_class.push_back(p + rc > 0 ? 2 * p * rc / (p + rc) : 0.0);
    }
    for (double f : r.per_class) r.average += f;
    r.average /= static_cast<double>(n);
    return r;
}

inline Eigen::MatrixXi confusion_matrix(const std::vector<int>& truth, const std::vector<int>& predicted, int nc) {
    require(truth.size() == predicted.size(), "confusion_matrix: size mismatch");
    Eigen::MatrixXi m = Eigen::MatrixXi::Zero(nc, nc);
    for (std::size_t k = 0; k < truth.size(); ++k) {
        require(truth[k] >= 0 && truth[k] < nc && predicted[k] >= 0 && predicted[k] < nc, "confusion_matrix: label out of range");
        ++m(truth[k], predicted[k]);
    }
    return m;
}

inline F1Report evaluate_f1(const DiscriminatorTensors& t, const std::vector<ProductSample>& data) {
    std::vector<int> truth, pred;
    const Mat prior = prior_bond_state(t);
    for (std::size_t m = 0; m < data.size(); ++m) {
        const Vec d = readout_diagonal(t, prior, data[m]);
        if (!(d.sum() >= 1e-14)) throw DegenerateReadout(m);
        truth.push_back(data[m].label);
        pred.push_back(ClassDistribution{d / d.sum(), true}.label());
    }
    return f1_scores(confusion_matrix(truth, pred, t.hyper.nc));
}

// ---------------------------------------------------------------------------
// Training

struct TrainSchedule {
    int restarts = 5;
    int joint_iters = 400;
    int cyclic_rounds = 3;
    int single_iters = 60;
    GradMode grad_mode = GradMode::Analytic;
    int nc = 2;
};

struct TrainResult {
    DiscriminatorTensors model;
    double cost = 0.0;
    double train_f1 = 0.0;
    bool stalled = false;
    /// worst manifold residual over every optimizer iterate
    double max_invariant_residual = 0.0;
};

inline ManifoldCost discriminator_objective(const std::vector<ProductSample>& data, const DiscriminatorHyper& h) {
    return [&data, h](const Points& p, std::vector<Mat>* g) {
        const auto t = DiscriminatorTensors::from_points(p, h);
        try {
            if (!g) return classification_cost(t, data);
            DiscriminatorGrad gr;
            const double c = classification_cost(t, data, &gr);
            (*g)[0] = gr.R;
            (*g)[1] = gr.G;
            (*g)[2] = gr.D;
            (*g)[3] = gr.C;
            return c;
        } catch (const DegenerateReadout&) {
            return std::numeric_limits<double>::quiet_NaN();
        }
    };
}

/// Joint optimization of all four tensors, then rounds that each optimize one
/// tensor with the rest frozen; best of several random starts.
inline TrainResult train_discriminator(const std::vector<ProductSample>& train, int chi, int nb, std::uint64_t seed,
                                       const TrainSchedule& schedule = {}) {
    require(!train.empty(), "train_discriminator: empty training set");
    bool seen[2] = {false, false};
    for (const auto& s : train)
        if (s.label >= 0 && s.label < 2) seen[s.label] = true;
    require(seen[0] && seen[1], "train_discriminator: both classes must be present");
    const DiscriminatorHyper h{chi, static_cast<int>(train.front().x.size()), nb, schedule.nc};
    // canonical order makes the floating-point sums independent of input order
    std::vector<ProductSample> data = train;
    std::sort(data.begin(), data.end(), [](const ProductSample& a, const ProductSample& b) {
        for (std::size_t j = 0; j < std::min(a.x.size(), b.x.size()); ++j)
            for (int i = 0; i < kPhys; ++i)
                if (a.x[j](i) != b.x[j](i)) return a.x[j](i) < b.x[j](i);
        return a.label < b.label;
    });
    const ManifoldCost objective = discriminator_objective(data, h);

    TrainResult best;
    best.cost = std::numeric_limits<double>::infinity();
    for (int r = 0; r < schedule.restarts; ++r) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
        auto init = DiscriminatorTensors::random(h, rng);
        init.validate();
        MinimizeConfig mc;
        mc.grad_mode = schedule.grad_mode;
        mc.lbfgs_memory = 10;
        mc.max_iters = schedule.joint_iters;
        auto res = minimize(objective, init.as_points(), mc);
        double residual = res.max_invariant_residual;
        bool stalled = res.stalled && !res.converged;
        Points x = res.x;
        for (int round = 0; round < schedule.cyclic_rounds; ++round)
            for (std::size_t p = 0; p < 4; ++p) {
                MinimizeConfig sc = mc;
                sc.max_iters = schedule.single_iters;
                sc.active.assign(4, false);
                sc.active[p] = true;
                auto rs = minimize(objective, x, sc);
                residual = std::max(residual, rs.max_invariant_residual);
                x = std::move(rs.x);
                res.cost = rs.cost;
            }
        if (res.cost < best.cost) {
            best.model = DiscriminatorTensors::from_points(x, h);
            best.cost = res.cost;
            best.stalled = stalled;
        }
        best.max_invariant_residual = std::max(best.max_invariant_residual, residual);
    }
    best.train_f1 = evaluate_f1(best.model, train).average;
    return best;
}

}  // namespace tnd
