#pragma once

#include "tnd/dataset.hpp"
#include "tnd/forest.hpp"
#include "tnd/imps.hpp"
#include "tnd/runtime.hpp"
#include "tnd/shot_stats.hpp"

#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

namespace tnd {

enum class ScanMode { Product, Entangled };

inline const char* scan_mode_name(ScanMode m) { return m == ScanMode::Product ? "product" : "entangled"; }

inline ScanMode parse_scan_mode(const std::string& s) {
    if (s == "product") return ScanMode::Product;
    if (s == "entangled") return ScanMode::Entangled;
    throw InvalidArgument("unknown scan mode '" + s + "'");
}

struct ScanPoint {
    double h = 0.0;
    ScanMode mode = ScanMode::Product;
    long shots = 0;
    double fraction_pm = 0.0;
    double wilson_half_width = 0.0;
    int chi = 0;
    int chi_i = 0;
    /// noiseless single-run P(PM) in entangled mode, the shot fraction otherwise
    double p_exact = 0.0;
};

/// Label of one product sample; 1 means PM.
using ProductClassifier = std::function<int(const ProductSample&)>;

inline ProductClassifier tensor_classifier(const DiscriminatorTensors& t) {
    return [t, prior = prior_bond_state(t)](const ProductSample& s) {
        const Vec d = readout_diagonal(t, prior, s);
        if (!(d.sum() >= 1e-14)) throw DegenerateReadout(0);
        return ClassDistribution{d, false}.label();
    };
}

/// Most likely label of one unpostselected circuit run.
inline ProductClassifier circuit_classifier(const CompiledModel& m) {
    auto u = std::make_shared<const ModelUnitaries>(m);
    const Mat prior = detail::burn_in_history(u->UR, u->UG, m.hyper.chi, m.hyper.nb, nullptr).back();
    return [u, prior, nc = m.hyper.nc](const ProductSample& s) {
        const Mat W = condition_product(*u, prior, s, false);
        return ClassDistribution{detail::readout(u->UC, W, nc, false), true}.label();
    };
}

inline ProductClassifier forest_classifier(std::shared_ptr<const RandomForest> rf) {
    return [rf](const ProductSample& s) { return rf->predict(flatten_sample(s)); };
}

struct ScanConfig {
    std::vector<double> h_grid;
    /// product mode: shots per basis at each h; entangled mode: simulated circuit runs
    int shots = 1000;
    std::uint64_t seed = 0;
    double z = 1.645;
};

/// Fresh ground-state shots at each h, classified one by one by every
/// classifier; one scan per classifier name.
inline std::map<std::string, std::vector<ScanPoint>> product_scan(const std::map<std::string, ProductClassifier>& classifiers, const ScanConfig& sc,
                                           const DatasetConfig& data, int chi = 0) {
    require(!sc.h_grid.empty() && sc.shots >= 1, "product_scan: need a grid and at least one shot");
    std::vector<std::map<std::string, long>> pm(sc.h_grid.size());
    std::vector<long> total(sc.h_grid.size(), 0);
    for (std::size_t k = 0; k < sc.h_grid.size(); ++k) {
        DatasetConfig dc = data;
        dc.h_values = {sc.h_grid[k]};
        dc.shots_per_basis = sc.shots;
        dc.seed = derive_seed(sc.seed, k);
        const auto shots = generate_dataset(dc).all();
        total[k] = static_cast<long>(shots.size());
        for (const auto& [name, f] : classifiers) {
            long n = 0;
            for (const auto& s : shots) n += f(to_sample(s)) == 1;
            pm[k][name] = n;
        }
    }
    std::map<std::string, std::vector<ScanPoint>> out;
    for (const auto& [name, f] : classifiers)
        for (std::size_t k = 0; k < sc.h_grid.size(); ++k) {
            const long n1 = pm[k][name];
            const auto w = wilson_interval({total[k] - n1, n1}, sc.z);
            const double frac = static_cast<double>(n1) / static_cast<double>(total[k]);
            out[name].push_back({sc.h_grid[k], ScanMode::Product, total[k], frac, w.half_width, chi, 0, frac});
        }
    return out;
}

struct EntangledScanConfig {
    ScanConfig scan;
    int chi_i = 4;
    int nb_prime = 6;
    ImpsConfig imps;
    RuntimeLimits limits;
};

/// Test-state iMPS per h, keyed by h; callers may preload files here.
using ImpsLibrary = std::map<double, IMPSModel>;

inline ImpsLibrary build_imps_library(const std::vector<double>& h_grid, int chi_i, int nb_prime, std::uint64_t seed,
                                      const ImpsConfig& cfg = {}) {
    std::vector<IMPSModel> models(h_grid.size());
    parallel_for(h_grid.size(), [&](std::size_t k) {
        models[k] = optimize_imps(h_grid[k], chi_i, nb_prime, derive_seed(seed, k), cfg).model;
    });
    ImpsLibrary lib;
    for (std::size_t k = 0; k < h_grid.size(); ++k) lib[h_grid[k]] = models[k];
    return lib;
}

/// Single-circuit P(PM) per h plus `shots` simulated runs. Grid points with
/// no iMPS in the library are skipped with a warning.
inline std::vector<ScanPoint> entangled_scan(const CompiledModel& m, const ImpsLibrary& lib, const EntangledScanConfig& ec,
                                             std::ostream* warn = &std::cerr) {
    require(!ec.scan.h_grid.empty() && ec.scan.shots >= 1, "entangled_scan: need a grid and at least one shot");
    std::vector<ScanPoint> out;
    for (std::size_t k = 0; k < ec.scan.h_grid.size(); ++k) {
        const double h = ec.scan.h_grid[k];
        const auto it = lib.find(h);
        if (it == lib.end()) {
            if (warn) *warn << "warning: no iMPS for h=" << h << ", point skipped\n";
            continue;
        }
        const auto dist = infer_entangled(m, embed_imps_exact(it->second), ec.limits);
        const auto labels = sample_label(dist, ec.scan.shots, derive_seed(ec.scan.seed, k));
        const long n1 = std::count(labels.begin(), labels.end(), 1);
        const long n = static_cast<long>(labels.size());
        const auto w = wilson_interval({n - n1, n1}, ec.scan.z);
        out.push_back({h, ScanMode::Entangled, n, static_cast<double>(n1) / static_cast<double>(n), w.half_width,
                       m.hyper.chi, it->second.chi, dist.diag(1)});
    }
    return out;
}

inline std::string scan_csv(const std::vector<ScanPoint>& pts) {
    std::ostringstream ss;
    ss << std::setprecision(17) << "h,mode,shots,fraction_pm,wilson_half_width,chi,chi_i\n";
    for (const auto& p : pts)
        ss << p.h << ',' << scan_mode_name(p.mode) << ',' << p.shots << ',' << p.fraction_pm << ',' << p.wilson_half_width << ','
           << p.chi << ',' << p.chi_i << '\n';
    return ss.str();
}

inline std::vector<ScanPoint> scan_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    require(line == "h,mode,shots,fraction_pm,wilson_half_width,chi,chi_i", "scan csv: unexpected header");
    std::vector<ScanPoint> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell[7];
        for (auto& c : cell) require(static_cast<bool>(std::getline(row, c, ',')), "scan csv: short row");
        ScanPoint p;
        p.h = std::stod(cell[0]);
        p.mode = parse_scan_mode(cell[1]);
        p.shots = std::stol(cell[2]);
        p.fraction_pm = std::stod(cell[3]);
        p.wilson_half_width = std::stod(cell[4]);
        p.chi = std::stoi(cell[5]);
        p.chi_i = std::stoi(cell[6]);
        p.p_exact = p.fraction_pm;
        require(p.fraction_pm >= 0 && p.fraction_pm <= 1, "scan csv: fraction outside [0, 1]");
        out.push_back(p);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Transition fit

struct RegressionResult {
    double slope = 0.0;
    double intercept = 0.0;
    double h_star = 0.0;
    double mae = 0.0;
    double r_squared = 0.0;
    std::vector<ScanPoint> points_used;
};

/// The `count` points whose fraction is closest to 1/2, ties to smaller h,
/// returned in ascending h.
inline std::vector<ScanPoint> closest_to_half(std::vector<ScanPoint> pts, std::size_t count) {
    std::stable_sort(pts.begin(), pts.end(), [](const ScanPoint& a, const ScanPoint& b) { return a.h < b.h; });
    std::stable_sort(pts.begin(), pts.end(), [](const ScanPoint& a, const ScanPoint& b) {
        return std::abs(a.fraction_pm - 0.5) < std::abs(b.fraction_pm - 0.5);
    });
    if (pts.size() > count) pts.resize(count);
    std::stable_sort(pts.begin(), pts.end(), [](const ScanPoint& a, const ScanPoint& b) { return a.h < b.h; });
    return pts;
}

/// Weighted least squares of fraction_pm on h over the given points with
/// weights 1/half_width^2; MAE and R^2 are unweighted.
inline RegressionResult fit_line(const std::vector<ScanPoint>& pts) {
    require(pts.size() >= 3, "fit_transition: need at least 3 points");
    double sw = 0, sx = 0, sy = 0;
    for (const auto& p : pts) {
        require(p.wilson_half_width > 0, "fit_transition: half widths must be positive");
        const double w = 1.0 / (p.wilson_half_width * p.wilson_half_width);
        sw += w;
        sx += w * p.h;
        sy += w * p.fraction_pm;
    }
    const double xm = sx / sw, ym = sy / sw;
    double sxx = 0, sxy = 0;
    for (const auto& p : pts) {
        const double w = 1.0 / (p.wilson_half_width * p.wilson_half_width);
        sxx += w * (p.h - xm) * (p.h - xm);
        sxy += w * (p.h - xm) * (p.fraction_pm - ym);
    }
    double hspread = 0;
    for (const auto& p : pts) hspread = std::max(hspread, std::abs(p.h - pts.front().h));
    if (!(hspread > 0) || !(sxx > 0)) throw InvalidArgument("fit_transition: singular design, all h equal");
    RegressionResult r;
    r.slope = sxy / sxx;
    r.intercept = ym - r.slope * xm;
    if (r.slope == 0.0) throw InvalidArgument("fit_transition: flat fit has no crossing");
    r.h_star = (0.5 - r.intercept) / r.slope;
    double ybar = 0;
    for (const auto& p : pts) ybar += p.fraction_pm;
    ybar /= static_cast<double>(pts.size());
    double ss_res = 0, ss_tot = 0;
    for (const auto& p : pts) {
        const double e = p.fraction_pm - (r.slope * p.h + r.intercept);
        r.mae += std::abs(e);
        ss_res += e * e;
        ss_tot += (p.fraction_pm - ybar) * (p.fraction_pm - ybar);
    }
    r.mae /= static_cast<double>(pts.size());
    r.r_squared = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
    r.points_used = pts;
    return r;
}

inline RegressionResult fit_transition(const std::vector<ScanPoint>& scan, std::size_t window = 6) {
    require(window >= 3, "fit_transition: window must hold at least 3 points");
    return fit_line(closest_to_half(scan, window));
}

/// First h at which the fraction crosses 1/2, by linear interpolation between
/// neighbouring grid points; NaN when it never crosses.
inline double half_crossing(std::vector<ScanPoint> pts) {
    std::stable_sort(pts.begin(), pts.end(), [](const ScanPoint& a, const ScanPoint& b) { return a.h < b.h; });
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
        const double a = pts[k].fraction_pm - 0.5, b = pts[k + 1].fraction_pm - 0.5;
        if (a == 0) return pts[k].h;
        if ((a < 0) != (b < 0) || b == 0) return pts[k].h + (pts[k + 1].h - pts[k].h) * a / (a - b);
    }
    return std::numeric_limits<double>::quiet_NaN();
}

// ---------------------------------------------------------------------------
// Single-shot success probability

inline std::vector<double> success_probabilities(const CompiledModel& m, const std::vector<ProductSample>& data) {
    const ModelUnitaries u(m);
    const Mat prior = detail::burn_in_history(u.UR, u.UG, m.hyper.chi, m.hyper.nb, nullptr).back();
    std::vector<double> p(data.size());
    parallel_for(data.size(), [&](std::size_t k) {
        const Mat W = condition_product(u, prior, data[k], false);
        p[k] = detail::readout(u.UC, W, m.hyper.nc, false)(data[k].label);
    });
    return p;
}

/// Counts in `bins` uniform bins on [0, 1]; 1 falls in the last bin.
inline std::vector<long> histogram_unit(const std::vector<double>& v, int bins = 20) {
    require(bins >= 1, "histogram: need at least one bin");
    std::vector<long> h(static_cast<std::size_t>(bins), 0);
    for (double x : v) {
        const int b = std::clamp(static_cast<int>(std::floor(x * bins)), 0, bins - 1);
        ++h[static_cast<std::size_t>(b)];
    }
    return h;
}

}  // namespace tnd
