#pragma once

#include "tnd/compiler.hpp"
#include "tnd/io.hpp"
#include "tnd/scan.hpp"

#include <chrono>

namespace tnd {

struct PipelineConfig {
    std::uint64_t seed = 0;
    std::vector<int> chi{2, 4, 8};
    int nb = 6;
    int nb_prime = 6;
    double lambda = 0.9;
    double eta = 2.0;
    int epochs = 30;
    double tol = 4e-4;
    int beam = 5;
    double h_z2 = 10.0;
    int F = 32;
    int L = 6;
    int chi_max = 40;
    double eps = 1e-6;
    double p_star = 0.9;

    std::vector<double> h_train{0.1, 10.0};
    int shots = 1000;
    int train_restarts = 5;
    int cnot_budget = 96;
    int n_trees = 20;
    std::vector<double> scan_grid = default_scan_grid();
    int scan_shots = 1000;
    int entangled_shots = 1000;
    int chi_i = 4;
    int window = 6;
    /// largest classifier chi run through the entangled scan
    int entangled_max_chi = 4;

    static std::vector<double> default_scan_grid() {
        std::vector<double> g;
        for (int k = 0; k <= 20; ++k) g.push_back(k / 10.0);
        for (double h : {2.5, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0}) g.push_back(h);
        return g;
    }

    DatasetConfig dataset() const {
        DatasetConfig d;
        d.h_values = h_train;
        d.shots_per_basis = shots;
        d.F = F;
        d.L = L;
        d.chi_max = chi_max;
        d.eps = eps;
        d.h_z2 = h_z2;
        d.seed = derive_seed(seed, 1);
        return d;
    }

    void validate() const {
        dataset().validate();
        require(!chi.empty(), "config: chi list is empty");
        for (int c : chi) require(is_power_of_two(c) && c >= 2, "config: chi must be a power of two >= 2");
        require(nb >= 1 && nb_prime >= 1 && epochs >= 0 && tol > 0 && beam >= 1, "config: invalid nb, epochs, tol or beam");
        require(eta >= 1 && lambda >= 0, "config: need eta >= 1 and lambda >= 0");
        require(p_star > 0.5 && p_star < 1, "config: p_star must lie in (1/2, 1)");
        require(window >= 3 && scan_shots >= 1 && entangled_shots >= 1 && chi_i >= 1, "config: invalid scan settings");
    }
};

inline json config_json(const PipelineConfig& c) {
    return {{"seed", c.seed},
            {"chi", c.chi},
            {"nb", c.nb},
            {"nb_prime", c.nb_prime},
            {"lambda", c.lambda},
            {"eta", c.eta},
            {"epochs", c.epochs},
            {"tol", c.tol},
            {"beam", c.beam},
            {"h_z2", c.h_z2},
            {"F", c.F},
            {"L", c.L},
            {"chi_max", c.chi_max},
            {"eps", c.eps},
            {"p_star", c.p_star},
            {"h_train", c.h_train},
            {"shots", c.shots},
            {"train_restarts", c.train_restarts},
            {"cnot_budget", c.cnot_budget},
            {"n_trees", c.n_trees},
            {"scan_grid", c.scan_grid},
            {"scan_shots", c.scan_shots},
            {"entangled_shots", c.entangled_shots},
            {"chi_i", c.chi_i},
            {"window", c.window},
            {"entangled_max_chi", c.entangled_max_chi}};
}

/// Keys absent from j keep their defaults; unknown keys are rejected.
inline PipelineConfig config_from_json(const json& j, PipelineConfig c = {}) {
    const json known = config_json(c);
    for (const auto& [k, v] : j.items())
        if (!known.contains(k)) throw InvalidArgument("config: unknown key '" + k + "'");
    auto get = [&](const char* k, auto& dst) {
        if (j.contains(k)) dst = j.at(k).get<std::decay_t<decltype(dst)>>();
    };
    get("seed", c.seed);
    if (j.contains("chi")) c.chi = j["chi"].is_array() ? j["chi"].get<std::vector<int>>() : std::vector<int>{j["chi"].get<int>()};
    get("nb", c.nb);
    get("nb_prime", c.nb_prime);
    get("lambda", c.lambda);
    get("eta", c.eta);
    get("epochs", c.epochs);
    get("tol", c.tol);
    get("beam", c.beam);
    get("h_z2", c.h_z2);
    get("F", c.F);
    get("L", c.L);
    get("chi_max", c.chi_max);
    get("eps", c.eps);
    get("p_star", c.p_star);
    get("h_train", c.h_train);
    get("shots", c.shots);
    get("train_restarts", c.train_restarts);
    get("cnot_budget", c.cnot_budget);
    get("n_trees", c.n_trees);
    get("scan_grid", c.scan_grid);
    get("scan_shots", c.scan_shots);
    get("entangled_shots", c.entangled_shots);
    get("chi_i", c.chi_i);
    get("window", c.window);
    get("entangled_max_chi", c.entangled_max_chi);
    return c;
}

struct StageFailure : std::runtime_error {
    std::string stage;
    StageFailure(const std::string& s, const std::string& what) : std::runtime_error("stage " + s + " failed: " + what), stage(s) {}
};

/// Content-addressed stage cache. A stage is skipped when its record under
/// stages/ carries the same key and every file it lists still exists.
class StageCache {
public:
    struct Entry {
        std::string name, key, status;
        /// wall time of the computation, also for cached stages
        double seconds = 0.0;
    };

    StageCache(std::filesystem::path root, std::ostream* log) : root_(std::move(root)), log_(log) {}

    const std::filesystem::path& root() const { return root_; }

    /// compute() writes its files under root and returns the stage record,
    /// whose "files" array lists them relative to root.
    json run(const std::string& name, const json& inputs, const std::function<json()>& compute) {
        const std::string key = hex64(fnv1a(name + "\n" + inputs.dump()));
        const auto rec_path = root_ / "stages" / (name + ".json");
        if (std::filesystem::exists(rec_path)) {
            try {
                const json rec = read_json(rec_path);
                bool ok = rec.value("key", "") == key;
                if (ok && rec.contains("record") && rec["record"].contains("files"))
                    for (const auto& f : rec["record"]["files"]) ok = ok && std::filesystem::exists(root_ / f.get<std::string>());
                if (ok) {
                    entries_.push_back({name, key, "cached", rec.value("seconds", 0.0)});
                    if (log_) *log_ << "[cached]   " << name << "\n";
                    return rec["record"];
                }
            } catch (const IoError&) {
                // unreadable record: recompute
            }
        }
        if (log_) *log_ << "[running]  " << name << std::endl;
        const auto t0 = std::chrono::steady_clock::now();
        json record;
        try {
            record = compute();
        } catch (const std::exception& e) {
            entries_.push_back({name, key, "failed", 0.0});
            throw StageFailure(name, e.what());
        }
        if (!record.contains("files")) record["files"] = json::array();
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        write_json(rec_path, {{"stage", name}, {"key", key}, {"seconds", secs}, {"record", record}});
        entries_.push_back({name, key, "computed", secs});
        if (log_) *log_ << "[done]     " << name << " (" << secs << " s)\n";
        return record;
    }

    const std::vector<Entry>& entries() const { return entries_; }

    /// Key of a finished stage, for use in downstream inputs.
    std::string key_of(const std::string& name) const {
        for (const auto& e : entries_)
            if (e.name == name) return e.key;
        throw InternalError("stage cache: unknown stage " + name);
    }

private:
    std::filesystem::path root_;
    std::ostream* log_;
    std::vector<Entry> entries_;
};

struct PipelineResult {
    json manifest;
    std::vector<StageCache::Entry> stages;
};

namespace detail {

inline json f1_json(const F1Report& r) { return {{"average", r.average}, {"per_class", r.per_class}}; }

inline std::string chi_tag(int chi) { return "chi" + std::to_string(chi); }

inline std::string histogram_csv(const std::vector<long>& counts) {
    std::ostringstream ss;
    ss << std::setprecision(17) << "bin_lo,bin_hi,count\n";
    const double w = 1.0 / static_cast<double>(counts.size());
    for (std::size_t b = 0; b < counts.size(); ++b) ss << b * w << ',' << (b + 1) * w << ',' << counts[b] << '\n';
    return ss.str();
}

inline json fit_json(const RegressionResult& r) {
    json hs = json::array();
    for (const auto& p : r.points_used) hs.push_back(p.h);
    return {{"slope", r.slope}, {"intercept", r.intercept}, {"h_star", r.h_star}, {"mae", r.mae}, {"r_squared", r.r_squared},
            {"points_used", hs}};
}

}  // namespace detail

/// gen-data, then per chi train, gauge, compile, finetune, evaluate; then the
/// random-forest baseline, iMPS test states, scans and transition fits.
/// Writes manifest.json under out.
inline PipelineResult run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out, std::ostream* log = &std::cerr) {
    namespace fs = std::filesystem;
    cfg.validate();
    fs::create_directories(out);
    StageCache cache(out, log);
    json metrics = json::object();
    json manifest = {{"config", config_json(cfg)}};

    auto finish = [&](const std::string* failed) {
        json stages = json::array();
        for (const auto& e : cache.entries())
            stages.push_back({{"name", e.name}, {"key", e.key}, {"status", e.status}, {"seconds", e.seconds}});
        manifest["stages"] = stages;
        manifest["metrics"] = metrics;
        if (failed) manifest["failed_stage"] = *failed;
        write_json(out / "manifest.json", manifest);
    };

    try {
        // ---- data
        const json dataset_inputs = {{"h_train", cfg.h_train}, {"shots", cfg.shots}, {"F", cfg.F},      {"L", cfg.L},
                                     {"chi_max", cfg.chi_max}, {"eps", cfg.eps},     {"h_z2", cfg.h_z2}, {"seed", cfg.seed}};
        const auto data_rec = cache.run("gen-data", dataset_inputs, [&] {
            const Dataset ds = generate_dataset(cfg.dataset());
            save_dataset(out / "data", ds);
            json files = json::array({"data/split.json"});
            for (const auto& b : ds.blocks) files.push_back("data/" + shot_block_filename(b));
            json gs = json::array();
            for (const auto& g : ds.ground_states) gs.push_back({{"h", g.h}, {"energy", g.energy}, {"converged", g.converged}});
            return json{{"files", files},
                        {"n_train", ds.train_index.size()},
                        {"n_test", ds.test_index.size()},
                        {"ground_states", gs}};
        });
        metrics["dataset"] = data_rec;
        const Dataset ds = load_dataset(out / "data");
        const auto train = to_samples(ds.train()), test = to_samples(ds.test());
        const std::string data_key = cache.key_of("gen-data");

        std::map<int, DiscriminatorTensors> tensors;
        std::map<int, CompiledModel> finetuned;
        for (int chi : cfg.chi) {
            const std::string tag = detail::chi_tag(chi);
            json& m = metrics[tag];

            // ---- train
            const json tr_in = {{"data", data_key}, {"chi", chi}, {"nb", cfg.nb}, {"restarts", cfg.train_restarts}, {"seed", cfg.seed}};
            m["train"] = cache.run("train-" + tag, tr_in, [&] {
                TrainSchedule sch;
                sch.restarts = cfg.train_restarts;
                const auto r = train_discriminator(train, chi, cfg.nb, derive_seed(cfg.seed, 100 + chi), sch);
                const auto te = evaluate_f1(r.model, test);
                const json mt = {{"cost", r.cost}, {"train_f1", r.train_f1}, {"test_f1", te.average}, {"stalled", r.stalled}};
                write_json(out / tag / "model.json", model_json(r.model, mt));
                json rec = mt;
                rec["files"] = json::array({tag + "/model.json"});
                return rec;
            });

            // ---- gauge
            m["gauge"] = cache.run("gauge-" + tag, {{"train", cache.key_of("train-" + tag)}}, [&] {
                const auto t = model_from_json(read_json(out / tag / "model.json"));
                const auto g = diagonal_gauge(t, derive_seed(cfg.seed, 200 + chi));
                const json mt = {{"gauge_cost_before", g.initial_cost}, {"gauge_cost_after", g.cost}};
                write_json(out / tag / "model_gauged.json", model_json(g.tensors, mt));
                json rec = mt;
                rec["files"] = json::array({tag + "/model_gauged.json"});
                return rec;
            });
            tensors[chi] = model_from_json(read_json(out / tag / "model_gauged.json"));

            // ---- compile
            const json co_in = {{"gauge", cache.key_of("gauge-" + tag)}, {"tol", cfg.tol}, {"beam", cfg.beam},
                                {"budget", cfg.cnot_budget}, {"seed", cfg.seed}};
            m["compile"] = cache.run("compile-" + tag, co_in, [&] {
                CompileConfig cc;
                cc.tol = cfg.tol;
                cc.beam = cfg.beam;
                cc.cnot_budget = cfg.cnot_budget;
                cc.seed = derive_seed(cfg.seed, 300 + chi);
                const auto t0 = std::chrono::steady_clock::now();
                const auto mc = compile_model(tensors[chi], cc);
                const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                std::map<Role, double> tol;
                json counts, dist;
                for (const auto& [role, r] : mc.roles) {
                    tol[role] = r.distance;
                    counts[role_name(role)] = r.circuit.cnot_count();
                    dist[role_name(role)] = r.distance;
                }
                write_json(out / tag / "compiled.json", compiled_model_json(mc.model, tol));
                const auto ps = evaluate_compiled_f1(mc.model, train, true);
                return json{{"cnot_counts", counts},        {"distances", dist},
                            {"seconds", secs},              {"train_f1_postselected", ps.average},
                            {"files", json::array({tag + "/compiled.json"})}};
            });

            // ---- finetune
            const json ft_in = {{"compile", cache.key_of("compile-" + tag)}, {"lambda", cfg.lambda}, {"eta", cfg.eta},
                                {"epochs", cfg.epochs}};
            m["finetune"] = cache.run("finetune-" + tag, ft_in, [&] {
                const auto start = compiled_model_from_json(read_json(out / tag / "compiled.json"));
                FinetuneConfig fc;
                fc.cost = {cfg.lambda, cfg.eta};
                fc.epochs = cfg.epochs;
                const auto r = finetune_parameters(start, train, fc);
                write_json(out / tag / "finetuned.json", compiled_model_json(r.model));
                return json{{"cost_before", r.cost_before}, {"cost_after", r.cost_after}, {"train_f1_before", r.f1_before},
                            {"train_f1_after", r.f1_after},  {"epoch_costs", r.epoch_costs}, {"restarts", r.restarts},
                            {"files", json::array({tag + "/finetuned.json"})}};
            });
            finetuned[chi] = compiled_model_from_json(read_json(out / tag / "finetuned.json"));

            // ---- evaluate
            m["evaluate"] = cache.run("evaluate-" + tag, {{"finetune", cache.key_of("finetune-" + tag)}}, [&] {
                const auto start = compiled_model_from_json(read_json(out / tag / "compiled.json"));
                const auto& ft = finetuned[chi];
                const auto pss = success_probabilities(ft, train);
                double mean = 0;
                for (double p : pss) mean += p;
                mean /= static_cast<double>(pss.size());
                write_atomic(out / tag / "pss_histogram.csv", detail::histogram_csv(histogram_unit(pss, 20)));
                return json{{"compiled_train_f1_no_postselection", evaluate_compiled_f1(start, train).average},
                            {"compiled_test_f1_no_postselection", evaluate_compiled_f1(start, test).average},
                            {"finetuned_train_f1", evaluate_compiled_f1(ft, train).average},
                            {"finetuned_test_f1", evaluate_compiled_f1(ft, test).average},
                            {"pss_mean_train", mean},
                            {"pss_histogram", tag + "/pss_histogram.csv"},
                            {"files", json::array({tag + "/pss_histogram.csv"})}};
            });
        }

        // ---- random forest baseline
        const json rf_in = {{"data", data_key}, {"n_trees", cfg.n_trees}, {"seed", cfg.seed}};
        auto fit_forest = [&] {
            ForestConfig fc;
            fc.n_trees = cfg.n_trees;
            fc.seed = derive_seed(cfg.seed, 400);
            return baseline_random_forest(train, test, fc);
        };
        metrics["random_forest"] = cache.run("baseline-rf", rf_in, [&] {
            const auto r = fit_forest();
            write_json(out / "baseline_rf.json", {{"train_f1", detail::f1_json(r.train)}, {"test_f1", detail::f1_json(r.test)}});
            return json{{"train_f1", r.train.average}, {"test_f1", r.test.average}, {"files", json::array({"baseline_rf.json"})}};
        });

        // ---- product scan
        json upstream = json::array({cache.key_of("baseline-rf")});
        for (int chi : cfg.chi) upstream.push_back(cache.key_of("evaluate-" + detail::chi_tag(chi)));
        const json ps_in = {{"up", upstream}, {"grid", cfg.scan_grid}, {"shots", cfg.scan_shots}, {"seed", cfg.seed}};
        metrics["product_scan"] = cache.run("scan-product", ps_in, [&] {
            std::map<std::string, ProductClassifier> cls;
            std::map<std::string, int> chi_of;
            for (int chi : cfg.chi) {
                const auto tag = detail::chi_tag(chi);
                cls["tensor_" + tag] = tensor_classifier(tensors[chi]);
                cls["circuit_" + tag] = circuit_classifier(finetuned[chi]);
                chi_of["tensor_" + tag] = chi_of["circuit_" + tag] = chi;
            }
            cls["random_forest"] = forest_classifier(std::make_shared<const RandomForest>(fit_forest().forest));
            chi_of["random_forest"] = 0;
            ScanConfig sc{cfg.scan_grid, cfg.scan_shots, derive_seed(cfg.seed, 500)};
            DatasetConfig dc = cfg.dataset();
            auto scans = product_scan(cls, sc, dc);
            json rec = {{"files", json::array()}, {"scans", json::object()}};
            for (auto& [name, pts] : scans) {
                for (auto& p : pts) p.chi = chi_of[name];
                const std::string f = "scans/product_" + name + ".csv";
                write_atomic(out / f, scan_csv(pts));
                rec["files"].push_back(f);
                rec["scans"][name] = f;
            }
            return rec;
        });

        // ---- entangled scan
        const json im_in = {{"grid", cfg.scan_grid}, {"chi_i", cfg.chi_i}, {"nb_prime", cfg.nb_prime}, {"seed", cfg.seed}};
        metrics["imps"] = cache.run("imps", im_in, [&] {
            const auto lib = build_imps_library(cfg.scan_grid, cfg.chi_i, cfg.nb_prime, derive_seed(cfg.seed, 600));
            json rec = {{"files", json::array()}};
            for (std::size_t k = 0; k < cfg.scan_grid.size(); ++k) {
                const std::string f = "imps/imps_" + std::to_string(k) + ".json";
                write_json(out / f, imps_json(lib.at(cfg.scan_grid[k])));
                rec["files"].push_back(f);
            }
            return rec;
        });
        json ent_up = json::array({cache.key_of("imps")});
        for (int chi : cfg.chi) ent_up.push_back(cache.key_of("finetune-" + detail::chi_tag(chi)));
        const json es_in = {{"up", ent_up}, {"shots", cfg.entangled_shots}, {"max_chi", cfg.entangled_max_chi}, {"seed", cfg.seed}};
        metrics["entangled_scan"] = cache.run("scan-entangled", es_in, [&] {
            ImpsLibrary lib;
            for (std::size_t k = 0; k < cfg.scan_grid.size(); ++k) {
                const auto im = imps_from_json(read_json(out / ("imps/imps_" + std::to_string(k) + ".json")));
                lib[im.h_source] = im;
            }
            json rec = {{"files", json::array()}, {"scans", json::object()}};
            for (int chi : cfg.chi) {
                if (chi > cfg.entangled_max_chi) continue;
                EntangledScanConfig ec;
                ec.scan = {cfg.scan_grid, cfg.entangled_shots, derive_seed(cfg.seed, 700 + chi)};
                ec.chi_i = cfg.chi_i;
                ec.nb_prime = cfg.nb_prime;
                const auto pts = entangled_scan(finetuned[chi], lib, ec, log);
                const std::string f = "scans/entangled_" + detail::chi_tag(chi) + ".csv";
                write_atomic(out / f, scan_csv(pts));
                rec["files"].push_back(f);
                rec["scans"][detail::chi_tag(chi)] = f;
                json pe = json::array();
                for (const auto& p : pts) pe.push_back({{"h", p.h}, {"p_pm", p.p_exact}});
                rec["p_pm_exact"][detail::chi_tag(chi)] = pe;
            }
            return rec;
        });

        // ---- transition fits
        const json fit_in = {{"product", cache.key_of("scan-product")}, {"entangled", cache.key_of("scan-entangled")},
                             {"window", cfg.window}};
        metrics["fits"] = cache.run("fit", fit_in, [&] {
            json rec = {{"files", json::array({"fits.json"})}, {"product", json::object()}, {"entangled", json::object()}};
            for (const char* mode : {"product", "entangled"}) {
                const auto& scans = metrics[std::string(mode) + "_scan"]["scans"];
                for (const auto& [name, file] : scans.items()) {
                    const auto pts = scan_from_csv(read_text(out / file.get<std::string>()));
                    json f = {{"half_crossing", half_crossing(pts)}};
                    try {
                        f["regression"] = detail::fit_json(fit_transition(pts, static_cast<std::size_t>(cfg.window)));
                    } catch (const InvalidArgument& e) {
                        f["regression_error"] = e.what();
                    }
                    rec[mode][name] = f;
                }
            }
            write_json(out / "fits.json", rec);
            return rec;
        });
    } catch (const StageFailure& e) {
        finish(&e.stage);
        throw;
    }
    finish(nullptr);
    return {manifest, cache.entries()};
}

}  // namespace tnd
