#pragma once

#include "tnd/discriminator.hpp"

namespace tnd {

/// Flattened amplitude vector of a product sample, 2 entries per site.
inline Vec flatten_sample(const ProductSample& s) {
    Vec v(2 * static_cast<Eigen::Index>(s.x.size()));
    for (std::size_t j = 0; j < s.x.size(); ++j) v.segment<2>(2 * static_cast<Eigen::Index>(j)) = s.x[j];
    return v;
}

struct ForestConfig {
    int n_trees = 20;
    /// features tried per split; 0 means floor(sqrt(n_features))
    int max_features = 0;
    int min_samples_split = 2;
    int max_depth = 64;
    std::uint64_t seed = 0;
};

/// CART tree with Gini impurity. Leaves store class fractions.
class DecisionTree {
public:
    struct Node {
        int feature = -1;  // -1 marks a leaf
        double threshold = 0.0;
        int left = -1, right = -1;
        Vec proba;
    };

    void fit(const Mat& X, const std::vector<int>& y, int nc, const std::vector<std::size_t>& rows, int max_features,
             const ForestConfig& cfg, Rng& rng) {
        nodes_.clear();
        nc_ = nc;
        std::vector<std::size_t> idx = rows;
        build(X, y, idx, 0, idx.size(), 0, max_features, cfg, rng);
    }

    const Vec& leaf_proba(const Vec& x) const {
        int k = 0;
        while (nodes_[static_cast<std::size_t>(k)].feature >= 0) {
            const auto& n = nodes_[static_cast<std::size_t>(k)];
            k = x(n.feature) <= n.threshold ? n.left : n.right;
        }
        return nodes_[static_cast<std::size_t>(k)].proba;
    }

    std::size_t size() const { return nodes_.size(); }

private:
    Vec counts(const std::vector<int>& y, const std::vector<std::size_t>& idx, std::size_t b, std::size_t e) const {
        Vec c = Vec::Zero(nc_);
        for (std::size_t k = b; k < e; ++k) c(y[idx[k]]) += 1.0;
        return c;
    }

    static double gini(const Vec& c, double n) { return n > 0 ? 1.0 - c.squaredNorm() / (n * n) : 0.0; }

    int build(const Mat& X, const std::vector<int>& y, std::vector<std::size_t>& idx, std::size_t b, std::size_t e,
              int depth, int max_features, const ForestConfig& cfg, Rng& rng) {
        const int id = static_cast<int>(nodes_.size());
        nodes_.emplace_back();
        const Vec c = counts(y, idx, b, e);
        const double n = static_cast<double>(e - b);
        nodes_[static_cast<std::size_t>(id)].proba = c / n;
        const double parent = gini(c, n);
        if (parent <= 0.0 || e - b < static_cast<std::size_t>(cfg.min_samples_split) || depth >= cfg.max_depth) return id;

        // candidate features: a random subset of size max_features
        std::vector<int> feats(static_cast<std::size_t>(X.cols()));
        for (int f = 0; f < X.cols(); ++f) feats[static_cast<std::size_t>(f)] = f;
        rng.shuffle(feats);
        feats.resize(static_cast<std::size_t>(max_features));

        int best_f = -1;
        double best_thr = 0.0, best_imp = parent - 1e-12;
        std::vector<std::pair<double, int>> col(e - b);
        for (int f : feats) {
            for (std::size_t k = b; k < e; ++k) col[k - b] = {X(static_cast<Eigen::Index>(idx[k]), f), y[idx[k]]};
            std::sort(col.begin(), col.end());
            Vec left = Vec::Zero(nc_);
            for (std::size_t k = 0; k + 1 < col.size(); ++k) {
                left(col[k].second) += 1.0;
                if (col[k].first == col[k + 1].first) continue;
                const double nl = static_cast<double>(k + 1), nr = n - nl;
                const double imp = (nl * gini(left, nl) + nr * gini(c - left, nr)) / n;
                if (imp < best_imp) {
                    best_imp = imp;
                    best_f = f;
                    best_thr = 0.5 * (col[k].first + col[k + 1].first);
                }
            }
        }
        if (best_f < 0) return id;
        const auto mid = std::partition(idx.begin() + static_cast<std::ptrdiff_t>(b), idx.begin() + static_cast<std::ptrdiff_t>(e),
                                        [&](std::size_t r) { return X(static_cast<Eigen::Index>(r), best_f) <= best_thr; });
        const auto m = static_cast<std::size_t>(mid - idx.begin());
        const int l = build(X, y, idx, b, m, depth + 1, max_features, cfg, rng);
        const int r = build(X, y, idx, m, e, depth + 1, max_features, cfg, rng);
        auto& node = nodes_[static_cast<std::size_t>(id)];
        node.feature = best_f;
        node.threshold = best_thr;
        node.left = l;
        node.right = r;
        return id;
    }

    std::vector<Node> nodes_;
    int nc_ = 2;
};

/// Bootstrap-aggregated CART trees; prediction averages leaf class fractions
/// with ties going to the lower class.
class RandomForest {
public:
    void fit(const Mat& X, const std::vector<int>& y, int nc, const ForestConfig& cfg) {
        require(X.rows() == static_cast<Eigen::Index>(y.size()) && X.rows() > 0, "random forest: empty or mismatched data");
        require(cfg.n_trees >= 1, "random forest: need at least one tree");
        for (int l : y) require(l >= 0 && l < nc, "random forest: label out of range");
        nc_ = nc;
        const int mf = cfg.max_features > 0
                           ? std::min<int>(cfg.max_features, static_cast<int>(X.cols()))
                           : std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(X.cols())))));
        trees_.assign(static_cast<std::size_t>(cfg.n_trees), {});
        parallel_for(trees_.size(), [&](std::size_t t) {
            Rng rng(derive_seed(cfg.seed, t));
            std::vector<std::size_t> rows(static_cast<std::size_t>(X.rows()));
            for (auto& r : rows) r = rng.below(static_cast<std::uint64_t>(X.rows()));
            trees_[t].fit(X, y, nc, rows, mf, cfg, rng);
        });
    }

    Vec predict_proba(const Vec& x) const {
        Vec p = Vec::Zero(nc_);
        for (const auto& t : trees_) p += t.leaf_proba(x);
        return p / static_cast<double>(trees_.size());
    }

    int predict(const Vec& x) const { return ClassDistribution{predict_proba(x), true}.label(); }

private:
    std::vector<DecisionTree> trees_;
    int nc_ = 2;
};

inline Mat feature_matrix(const std::vector<ProductSample>& data) {
    require(!data.empty(), "feature_matrix: empty data");
    Mat X(static_cast<Eigen::Index>(data.size()), 2 * static_cast<Eigen::Index>(data.front().x.size()));
    for (std::size_t k = 0; k < data.size(); ++k) X.row(static_cast<Eigen::Index>(k)) = flatten_sample(data[k]).transpose();
    return X;
}

inline F1Report forest_f1(const RandomForest& rf, const std::vector<ProductSample>& data, int nc = 2) {
    std::vector<int> truth, pred;
    for (const auto& s : data) {
        truth.push_back(s.label);
        pred.push_back(rf.predict(flatten_sample(s)));
    }
    return f1_scores(confusion_matrix(truth, pred, nc));
}

struct ForestReport {
    RandomForest forest;
    F1Report train, test;
};

inline ForestReport baseline_random_forest(const std::vector<ProductSample>& train, const std::vector<ProductSample>& test,
                                           const ForestConfig& cfg = {}) {
    ForestReport r;
    std::vector<int> y;
    for (const auto& s : train) y.push_back(s.label);
    r.forest.fit(feature_matrix(train), y, 2, cfg);
    r.train = forest_f1(r.forest, train);
    if (!test.empty()) r.test = forest_f1(r.forest, test);
    return r;
}

}  // namespace tnd
