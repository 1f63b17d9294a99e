#pragma once

#include "tnd/mps.hpp"

namespace tnd {

struct DatasetConfig {
    std::vector<double> h_values{0.1, 10.0};
    int shots_per_basis = 1000;
    int F = 32;
    int L = 6;
    int chi_max = 40;
    double eps = 1e-6;
    double h_z2 = 10.0;
    std::uint64_t seed = 0;
    double train_fraction = 0.8;

    void validate() const {
        require(!h_values.empty(), "dataset: need at least one field value");
        for (double h : h_values) require(h >= 0, "dataset: field values must be non-negative");
        require(shots_per_basis >= 1 && F >= 2 && L >= 1 && L <= F, "dataset: need shots >= 1 and 1 <= L <= F");
        require(chi_max >= 1 && eps >= 0 && h_z2 >= 0, "dataset: invalid truncation or bias parameters");
        require(train_fraction > 0 && train_fraction < 1, "dataset: train fraction must lie in (0, 1)");
    }
};

/// AFM (0) below the critical field, PM (1) at or above it.
inline int phase_label(double h) { return h < 1.0 ? 0 : 1; }

/// Shots for one (h, basis) pair.
struct ShotBlock {
    double h = 0.0;
    Basis basis = Basis::Z;
    int L = 0;
    int label = 0;
    std::uint64_t seed = 0;
    std::vector<ShotRecord> shots;
};

struct GroundStateInfo {
    double h = 0.0;
    double energy = 0.0;
    bool converged = false;
    int sweeps = 0;
    int max_bond = 0;
};

struct Dataset {
    std::vector<ShotBlock> blocks;
    std::vector<GroundStateInfo> ground_states;
    /// indices into the concatenation of all blocks in order
    std::vector<std::size_t> train_index, test_index;

    std::vector<ShotRecord> all() const {
        std::vector<ShotRecord> out;
        for (const auto& b : blocks) out.insert(out.end(), b.shots.begin(), b.shots.end());
        return out;
    }
    std::vector<ShotRecord> train() const { return pick(train_index); }
    std::vector<ShotRecord> test() const { return pick(test_index); }

private:
    std::vector<ShotRecord> pick(const std::vector<std::size_t>& idx) const {
        const auto a = all();
        std::vector<ShotRecord> out;
        out.reserve(idx.size());
        for (std::size_t i : idx) out.push_back(a[i]);
        return out;
    }
};

/// First floor(fraction n) entries of a seeded permutation of [0, n) go to
/// train, the rest to test; both lists are returned sorted.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double fraction,
                                                                                   std::uint64_t seed) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    Rng rng(seed);
    rng.shuffle(perm);
    const auto cut = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
    std::vector<std::size_t> train(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(cut));
    std::vector<std::size_t> test(perm.begin() + static_cast<std::ptrdiff_t>(cut), perm.end());
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {std::move(train), std::move(test)};
}

/// Ground state on F sites, then the centered L-site window.
inline std::pair<GroundStateInfo, SamplingWindow> prepare_window(double h, const DatasetConfig& cfg, std::uint64_t seed) {
    DmrgConfig dc;
    dc.chi_max = cfg.chi_max;
    dc.eps = cfg.eps;
    dc.seed = seed;
    auto gs = ground_state_search(build_tfim_mpo(cfg.F, h, cfg.h_z2), dc);
    GroundStateInfo info{h, gs.energy, gs.converged, gs.sweeps, 1};
    for (const auto& t : gs.mps.tensors) info.max_bond = std::max<int>(info.max_bond, static_cast<int>(t[0].cols()));
    return {info, SamplingWindow(gs.mps, (cfg.F - cfg.L) / 2, cfg.L)};
}

/// Shots per field value, half in the uniform z basis and half in x, labeled
/// by phase_label; split by a seeded shuffle. Fully determined by cfg.
inline Dataset generate_dataset(const DatasetConfig& cfg) {
    cfg.validate();
    Dataset ds;
    for (std::size_t k = 0; k < cfg.h_values.size(); ++k) {
        const double h = cfg.h_values[k];
        auto [info, window] = prepare_window(h, cfg, derive_seed(cfg.seed, 2 * k));
        ds.ground_states.push_back(info);
        for (Basis b : {Basis::Z, Basis::X}) {
            ShotBlock blk;
            blk.h = h;
            blk.basis = b;
            blk.L = cfg.L;
            blk.label = phase_label(h);
            blk.seed = derive_seed(cfg.seed, 1000 + 2 * k + (b == Basis::X));
            blk.shots = sample_shots(window, b, cfg.shots_per_basis, blk.seed, blk.label, h);
            ds.blocks.push_back(std::move(blk));
        }
    }
    std::size_t n = 0;
    for (const auto& b : ds.blocks) n += b.shots.size();
    std::tie(ds.train_index, ds.test_index) = split_indices(n, cfg.train_fraction, derive_seed(cfg.seed, 999));
    return ds;
}

}  // namespace tnd
