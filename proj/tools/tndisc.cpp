#include "tnd/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace tnd;
namespace fs = std::filesystem;

namespace {

struct Globals {
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string config;
    std::string out = ".";
};

PipelineConfig load_config(const Globals& g) {
    PipelineConfig c;
    if (!g.config.empty()) c = config_from_json(read_json(g.config));
    if (g.seed_set) c.seed = g.seed;
    return c;
}

std::vector<ProductSample> dataset_split(const std::string& dir, const std::string& which) {
    const Dataset ds = load_dataset(dir);
    if (which == "train") return to_samples(ds.train());
    if (which == "test") return to_samples(ds.test());
    if (which == "all") return to_samples(ds.all());
    throw InvalidArgument("split must be train, test or all");
}

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tensor-network discriminators for quantum phase classification"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--seed", g.seed, "Master seed")->each([&](const std::string&) { g.seed_set = true; });
    app.add_option("--config", g.config, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--out", g.out, "Output file or directory");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Ground states, single-shot samples and the train/test split");

    // train
    std::string data_dir, split = "train";
    int chi_opt = 0;
    auto* train = app.add_subcommand("train", "Train discriminator tensors");
    train->add_option("--data", data_dir, "Dataset directory")->required();
    train->add_option("--chi", chi_opt, "Bond dimension (default: first chi in config)");

    // gauge
    std::string model_file;
    auto* gauge = app.add_subcommand("gauge", "Diagonal bond gauge of a trained model");
    gauge->add_option("--model", model_file, "Model JSON")->required()->check(CLI::ExistingFile);

    // compile
    auto* compile = app.add_subcommand("compile", "Compile a model's four embeddings to CNOT+Ry circuits");
    compile->add_option("--model", model_file, "Model JSON")->required()->check(CLI::ExistingFile);

    // finetune
    std::string compiled_file;
    auto* finetune = app.add_subcommand("finetune", "Fine-tune circuit angles without postselection");
    finetune->add_option("--compiled", compiled_file, "Compiled model JSON")->required()->check(CLI::ExistingFile);
    finetune->add_option("--data", data_dir, "Dataset directory")->required();

    // infer
    std::string imps_file;
    bool postselect = false;
    auto* infer = app.add_subcommand("infer", "Run a compiled model on product or iMPS inputs");
    infer->add_option("--compiled", compiled_file, "Compiled model JSON")->required()->check(CLI::ExistingFile);
    auto* infer_data = infer->add_option("--data", data_dir, "Dataset directory (product inputs)");
    infer->add_option("--split", split, "train, test or all")->check(CLI::IsMember({"train", "test", "all"}));
    infer->add_option("--imps", imps_file, "iMPS JSON (entangled input)")->excludes(infer_data)->check(CLI::ExistingFile);
    infer->add_flag("--postselect", postselect, "Postselect the physical qubit on 0");

    // imps
    double h_opt = 1.0;
    auto* imps = app.add_subcommand("imps", "Optimize a left-canonical iMPS ground state and its boundary vector");
    imps->add_option("--field", h_opt, "Transverse field h")->required();
    imps->add_option("--chi", chi_opt, "Bond dimension (default: chi_i from config)");

    // phase-scan
    std::string mode = "product";
    std::vector<std::string> imps_files;
    auto* scan = app.add_subcommand("phase-scan", "Fraction classed PM across a field grid (CSV)");
    scan->add_option("--mode", mode, "product or entangled")->check(CLI::IsMember({"product", "entangled"}));
    auto* scan_model = scan->add_option("--model", model_file, "Model JSON (product mode, tensor level)");
    scan->add_option("--compiled", compiled_file, "Compiled model JSON")->excludes(scan_model);
    scan->add_option("--imps", imps_files, "Preoptimized iMPS files (entangled mode); missing h are optimized");

    // fit-transition
    std::string scan_file;
    auto* fit = app.add_subcommand("fit-transition", "Weighted linear fit of a scan near fraction 1/2");
    fit->add_option("--scan", scan_file, "Scan CSV")->required()->check(CLI::ExistingFile);

    // run-pipeline
    auto* run = app.add_subcommand("run-pipeline", "All stages with content-hash caching");

    // baseline-rf
    auto* rf = app.add_subcommand("baseline-rf", "Random-forest baseline on flattened amplitudes");
    rf->add_option("--data", data_dir, "Dataset directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        const PipelineConfig cfg = load_config(g);
        const fs::path out(g.out);
        const int chi = chi_opt > 0 ? chi_opt : cfg.chi.front();

        if (gen->parsed()) {
            const Dataset ds = generate_dataset(cfg.dataset());
            save_dataset(out, ds);
            for (const auto& s : ds.ground_states)
                if (!s.converged) std::cerr << "warning: ground state at h=" << s.h << " did not converge\n";
            print({{"n_train", ds.train_index.size()}, {"n_test", ds.test_index.size()}, {"dir", out.string()}});
        } else if (train->parsed()) {
            const auto tr = dataset_split(data_dir, "train"), te = dataset_split(data_dir, "test");
            TrainSchedule sch;
            sch.restarts = cfg.train_restarts;
            const auto r = train_discriminator(tr, chi, cfg.nb, cfg.seed, sch);
            const json mt = {{"cost", r.cost}, {"train_f1", r.train_f1}, {"test_f1", evaluate_f1(r.model, te).average}};
            write_json(out, model_json(r.model, mt));
            print(mt);
        } else if (gauge->parsed()) {
            const auto gr = diagonal_gauge(model_from_json(read_json(model_file)), cfg.seed);
            const json mt = {{"gauge_cost_before", gr.initial_cost}, {"gauge_cost_after", gr.cost}};
            write_json(out, model_json(gr.tensors, mt));
            print(mt);
        } else if (compile->parsed()) {
            CompileConfig cc;
            cc.tol = cfg.tol;
            cc.beam = cfg.beam;
            cc.cnot_budget = cfg.cnot_budget;
            cc.seed = cfg.seed;
            const auto mc = compile_model(model_from_json(read_json(model_file)), cc);
            std::map<Role, double> tol;
            json counts;
            for (const auto& [role, r] : mc.roles) {
                tol[role] = r.distance;
                counts[role_name(role)] = {{"cnots", r.circuit.cnot_count()}, {"distance", r.distance}};
                write_json(out / ("circuit_" + role_name(role) + ".json"), circuit_json(r.circuit, role_name(role), r.distance));
            }
            write_json(out / "compiled.json", compiled_model_json(mc.model, tol));
            print(counts);
        } else if (finetune->parsed()) {
            FinetuneConfig fc;
            fc.cost = {cfg.lambda, cfg.eta};
            fc.epochs = cfg.epochs;
            const auto r = finetune_parameters(compiled_model_from_json(read_json(compiled_file)), dataset_split(data_dir, "train"), fc);
            write_json(out, compiled_model_json(r.model));
            print({{"cost_before", r.cost_before}, {"cost_after", r.cost_after}, {"train_f1_before", r.f1_before},
                   {"train_f1_after", r.f1_after}});
        } else if (infer->parsed()) {
            const auto m = compiled_model_from_json(read_json(compiled_file));
            json report = json::array();
            if (!imps_file.empty()) {
                const auto im = imps_from_json(read_json(imps_file));
                const auto d = infer_entangled(m, embed_imps_exact(im));
                report.push_back({{"h", im.h_source}, {"rho_diag", vector_json(d.diag)}, {"label", d.label()}});
            } else {
                require(!data_dir.empty(), "infer: need --data or --imps");
                for (const auto& s : dataset_split(data_dir, split)) {
                    const auto d = infer_product(m, s, postselect);
                    report.push_back({{"rho_diag", vector_json(d.diag)}, {"label", d.label()}, {"true_label", s.label},
                                      {"p_ss", d.diag(s.label) / (d.normalized ? 1.0 : d.diag.sum())}});
                }
            }
            write_json(out, {{"inputs", report}});
            std::cout << report.size() << " inputs written to " << out << "\n";
        } else if (imps->parsed()) {
            const int c = chi_opt > 0 ? chi_opt : cfg.chi_i;
            const auto r = optimize_imps(h_opt, c, cfg.nb_prime, cfg.seed);
            write_json(out, imps_json(r.model));
            print({{"energy_density", r.model.e0}, {"burn_in_cost", r.burn_in}, {"stalled", r.stalled}});
        } else if (scan->parsed()) {
            std::vector<ScanPoint> pts;
            if (mode == "product") {
                std::map<std::string, ProductClassifier> cls;
                int c = 0;
                if (!model_file.empty()) {
                    const auto t = model_from_json(read_json(model_file));
                    cls["model"] = tensor_classifier(t);
                    c = t.hyper.chi;
                } else {
                    require(!compiled_file.empty(), "phase-scan: need --model or --compiled");
                    const auto m = compiled_model_from_json(read_json(compiled_file));
                    cls["model"] = circuit_classifier(m);
                    c = m.hyper.chi;
                }
                pts = product_scan(cls, {cfg.scan_grid, cfg.scan_shots, cfg.seed}, cfg.dataset(), c)["model"];
            } else {
                require(!compiled_file.empty(), "phase-scan: entangled mode needs --compiled");
                const auto m = compiled_model_from_json(read_json(compiled_file));
                ImpsLibrary lib;
                for (const auto& f : imps_files) {
                    const auto im = imps_from_json(read_json(f));
                    lib[im.h_source] = im;
                }
                std::vector<double> missing;
                for (double h : cfg.scan_grid)
                    if (!lib.count(h)) missing.push_back(h);
                if (imps_files.empty() && !missing.empty())
                    for (auto& [h, im] : build_imps_library(missing, cfg.chi_i, cfg.nb_prime, cfg.seed)) lib[h] = im;
                EntangledScanConfig ec;
                ec.scan = {cfg.scan_grid, cfg.entangled_shots, cfg.seed};
                ec.chi_i = cfg.chi_i;
                ec.nb_prime = cfg.nb_prime;
                pts = entangled_scan(m, lib, ec);
            }
            write_atomic(out, scan_csv(pts));
            std::cout << pts.size() << " scan points written to " << out << "\n";
        } else if (fit->parsed()) {
            const auto r = fit_transition(scan_from_csv(read_text(scan_file)), static_cast<std::size_t>(cfg.window));
            print({{"slope", r.slope}, {"intercept", r.intercept}, {"h_star", r.h_star}, {"mae", r.mae}, {"r_squared", r.r_squared},
                   {"points_used", r.points_used.size()}});
        } else if (run->parsed()) {
            const auto r = run_pipeline(cfg, out);
            long cached = 0;
            for (const auto& e : r.stages) cached += e.status == "cached";
            std::cout << r.stages.size() << " stages, " << cached << " cached; manifest at " << (out / "manifest.json") << "\n";
        } else if (rf->parsed()) {
            ForestConfig fc;
            fc.n_trees = cfg.n_trees;
            fc.seed = cfg.seed;
            const auto r = baseline_random_forest(dataset_split(data_dir, "train"), dataset_split(data_dir, "test"), fc);
            const json j = {{"train_f1", r.train.average}, {"test_f1", r.test.average}};
            if (g.out != ".") write_json(out, j);
            print(j);
        }
    } catch (const StageFailure& e) {
        std::cerr << "error: " << e.what() << " (rerun to resume)\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
