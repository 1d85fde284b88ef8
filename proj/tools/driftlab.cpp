// driftlab: drifted diffusion sampling, delta grid search, fine-tuning and
// counterfactual experiments from reproducible run manifests.
//
// Exit codes: 0 success, 2 config error, 3 numeric failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "driftlab/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw driftlab::ConfigError("cannot open config file " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw driftlab::ConfigError("config parse error in " + path + ": " +
                                    e.what());
    }
    return j;
}

std::vector<double> parse_grid(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw driftlab::ConfigError("bad grid value '" + item + "'");
        }
    }
    if (out.empty()) throw driftlab::ConfigError("empty grid");
    return out;
}

json default_schedule() {
    return {{"T", 50}, {"beta_start", 1e-4}, {"beta_end", 2e-2}};
}

json gaussian_mixture_json(double mean, double std, int label = 0) {
    return {{"classes",
             {{{"label", label},
               {"components",
                {{{"weight", 1.0},
                  {"mean", {mean}},
                  {"var", {std * std}}}}}}}}};
}

json two_class_mixture_json(double m0, double m1, double var) {
    return {{"classes",
             {{{"label", 0},
               {"components", {{{"weight", 1.0}, {"mean", {m0}}, {"var", {var}}}}}},
              {{"label", 1},
               {"components", {{{"weight", 1.0}, {"mean", {m1}}, {"var", {var}}}}}}}}};
}

struct GlobalOpts {
    std::string config_path;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_set = false;
    unsigned threads = 1;
};

void add_global_opts(CLI::App* cmd, GlobalOpts& g) {
    cmd->add_option("--config", g.config_path, "JSON config file");
    cmd->add_option("--out", g.out, "output directory (or .csv path)");
    cmd->add_option("--seed", g.seed, "root seed")->each([&](const std::string&) {
        g.seed_set = true;
    });
    cmd->add_option("--threads", g.threads, "worker threads");
}

// Runs the manifest; when `out` names a .csv, the primary artifact is copied
// there and the run directory sits alongside it.
int run_and_emit(json config, const GlobalOpts& g,
                 const std::string& primary_artifact) {
    if (g.seed_set) config["seed"] = g.seed;
    if (!config.contains("seed")) config["seed"] = 0;

    const driftlab::RunManifest manifest = driftlab::make_manifest(config);
    fs::path out = g.out.empty() ? fs::path("runs") / manifest.run_id
                                 : fs::path(g.out);
    fs::path csv_target;
    if (out.extension() == ".csv") {
        csv_target = out;
        out = out.parent_path().empty()
                  ? fs::path(out.stem().string() + "_run")
                  : out.parent_path() / (out.stem().string() + "_run");
    }

    const driftlab::ExperimentResult result =
        driftlab::run_experiment(manifest, out, g.threads);

    if (!csv_target.empty()) {
        fs::copy_file(out / primary_artifact, csv_target,
                      fs::copy_options::overwrite_existing);
        std::cout << csv_target.string() << "\n";
    }
    std::cout << "run_id: " << result.run_id << "\n";
    std::cout << "out: " << out.string() << "\n";
    for (const auto& [k, v] : result.summary)
        std::cout << k << ": " << driftlab::fmt_double(v) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"driftlab: latent-drift diffusion laboratory"};
    app.require_subcommand(1);

    // ---- sample ----
    GlobalOpts g_sample;
    double delta = 0.0;
    std::string mode = "per-step";
    std::size_t n = 1000;
    int cond = 0;
    bool record = false;
    std::string sampler = "ancestral";
    double eta = 0.0;
    std::size_t ddim_steps = 0;
    auto* c_sample = app.add_subcommand("sample", "generate one sample batch");
    add_global_opts(c_sample, g_sample);
    c_sample->add_option("--delta", delta, "latent drift");
    c_sample->add_option("--mode", mode, "prior-only | per-step | both");
    c_sample->add_option("--n", n, "sample count");
    c_sample->add_option("--cond", cond, "class label");
    c_sample->add_flag("--record", record, "record trajectory");
    c_sample->add_option("--sampler", sampler, "ancestral | ddim");
    c_sample->add_option("--eta", eta, "ddim noise coefficient");
    c_sample->add_option("--ddim-steps", ddim_steps, "ddim subgrid size");

    // ---- sweep-drift ----
    GlobalOpts g_sweep;
    std::string grid_str = "-0.2,-0.1,-0.05,0,0.05,0.1,0.2";
    std::size_t sweep_n = 1000;
    std::string sweep_mode = "per-step";
    auto* c_sweep = app.add_subcommand("sweep-drift",
                                       "sample once per delta over a grid");
    add_global_opts(c_sweep, g_sweep);
    c_sweep->add_option("--grid", grid_str, "comma-separated delta grid");
    c_sweep->add_option("--n", sweep_n, "samples per delta");
    c_sweep->add_option("--mode", sweep_mode, "drift mode");

    // ---- grid-search ----
    GlobalOpts g_search;
    std::string search_grid = "-0.2,-0.15,-0.1,-0.05,0,0.05,0.1,0.15,0.2";
    std::size_t n_per_point = 2000;
    double target_mean = 0.5, target_std = 1.0;
    std::size_t target_n = 5000;
    auto* c_search = app.add_subcommand(
        "grid-search", "pick delta minimizing the L1 distance to a target");
    add_global_opts(c_search, g_search);
    c_search->add_option("--grid", search_grid, "comma-separated delta grid");
    c_search->add_option("--n-per-point", n_per_point, "samples per delta");
    c_search->add_option("--target-mean", target_mean, "target mean");
    c_search->add_option("--target-std", target_std, "target std");
    c_search->add_option("--target-n", target_n, "target sample count");

    // ---- finetune ----
    GlobalOpts g_ft;
    double src_mean = 0.0, src_std = 1.0, tgt_mean = 0.5, tgt_std = 1.0;
    std::size_t pre_steps = 2000, ft_steps = 300, eval_n = 5000;
    double ft_delta = 0.0;
    bool apply_in_training = false;
    auto* c_ft = app.add_subcommand("finetune",
                                    "pretrain, fine-tune, evaluate L1 to target");
    add_global_opts(c_ft, g_ft);
    c_ft->add_option("--source-mean", src_mean, "pretraining data mean");
    c_ft->add_option("--source-std", src_std, "pretraining data std");
    c_ft->add_option("--target-mean", tgt_mean, "fine-tuning data mean");
    c_ft->add_option("--target-std", tgt_std, "fine-tuning data std");
    c_ft->add_option("--pretrain-steps", pre_steps, "pretraining steps");
    c_ft->add_option("--finetune-steps", ft_steps, "fine-tuning steps");
    c_ft->add_option("--eval-n", eval_n, "evaluation sample count");
    c_ft->add_option("--delta", ft_delta, "latent drift");
    c_ft->add_flag("--apply-in-training", apply_in_training,
                   "drift the forward target during fine-tuning");

    // ---- counterfactual ----
    GlobalOpts g_cf;
    double lambda = 1.0, strength = 0.6, cf_delta = 0.0;
    int source_label = 0, target_label = 1;
    std::size_t cf_n = 200;
    auto* c_cf = app.add_subcommand("counterfactual",
                                    "regenerate inputs under a desired label");
    add_global_opts(c_cf, g_cf);
    c_cf->add_option("--lambda", lambda, "outcome-fidelity weight");
    c_cf->add_option("--strength", strength, "partial noising depth in (0, 1]");
    c_cf->add_option("--delta", cf_delta, "latent drift");
    c_cf->add_option("--source-label", source_label, "inputs drawn from this class");
    c_cf->add_option("--target-label", target_label, "desired label y'");
    c_cf->add_option("--n", cf_n, "input count");

    // ---- report / compare ----
    std::string report_dir;
    auto* c_report = app.add_subcommand("report", "print a run's summary");
    c_report->add_option("dir", report_dir, "run directory")->required();

    std::string cmp_a, cmp_b, cmp_out;
    auto* c_cmp = app.add_subcommand("compare", "diff two runs of the same kind");
    c_cmp->add_option("a", cmp_a, "first run directory")->required();
    c_cmp->add_option("b", cmp_b, "second run directory")->required();
    c_cmp->add_option("--out", cmp_out, "write the diff CSV here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_sample->parsed()) {
            json cfg;
            if (!g_sample.config_path.empty()) {
                cfg = load_config_file(g_sample.config_path);
            } else {
                cfg["version"] = driftlab::kConfigVersion;
                cfg["kind"] = "sample";
                cfg["schedule"] = default_schedule();
                cfg["backend"] = {{"type", "analytic"},
                                  {"mixture", gaussian_mixture_json(0.0, 1.0, cond)}};
            }
            cfg["drift"] = {{"delta", delta}, {"mode", mode}};
            json sc = {{"n", n}, {"cond", cond}, {"record_trajectory", record},
                       {"sampler", sampler}};
            if (sampler == "ddim") {
                sc["eta"] = eta;
                if (ddim_steps > 0) sc["ddim_steps"] = ddim_steps;
            }
            if (!cfg.contains("sample")) cfg["sample"] = sc;
            return run_and_emit(cfg, g_sample, "batch.csv");
        }
        if (c_sweep->parsed()) {
            json cfg;
            if (!g_sweep.config_path.empty()) {
                cfg = load_config_file(g_sweep.config_path);
            } else {
                cfg["version"] = driftlab::kConfigVersion;
                cfg["kind"] = "sweep-drift";
                cfg["schedule"] = default_schedule();
                cfg["backend"] = {{"type", "analytic"},
                                  {"mixture", gaussian_mixture_json(0.0, 1.0)}};
                cfg["sweep"] = {{"grid", parse_grid(grid_str)},
                                {"n", sweep_n},
                                {"mode", sweep_mode}};
            }
            return run_and_emit(cfg, g_sweep, "");
        }
        if (c_search->parsed()) {
            json cfg;
            if (!g_search.config_path.empty()) {
                cfg = load_config_file(g_search.config_path);
            } else {
                cfg["version"] = driftlab::kConfigVersion;
                cfg["kind"] = "grid-search";
                cfg["schedule"] = default_schedule();
                cfg["backend"] = {{"type", "analytic"},
                                  {"mixture", gaussian_mixture_json(0.0, 1.0)}};
                cfg["search"] = {
                    {"grid", parse_grid(search_grid)},
                    {"n_per_point", n_per_point},
                    {"target",
                     {{"mixture", gaussian_mixture_json(target_mean, target_std)},
                      {"n", target_n}}}};
            }
            return run_and_emit(cfg, g_search, "report.csv");
        }
        if (c_ft->parsed()) {
            json cfg;
            if (!g_ft.config_path.empty()) {
                cfg = load_config_file(g_ft.config_path);
            } else {
                cfg["version"] = driftlab::kConfigVersion;
                cfg["kind"] = "finetune";
                cfg["schedule"] = default_schedule();
                cfg["drift"] = {{"delta", ft_delta},
                                {"mode", "per-step"},
                                {"apply_in_training", apply_in_training}};
                cfg["finetune"] = {
                    {"source", gaussian_mixture_json(src_mean, src_std)},
                    {"target", gaussian_mixture_json(tgt_mean, tgt_std)},
                    {"pretrain_steps", pre_steps},
                    {"finetune_steps", ft_steps},
                    {"eval_n", eval_n}};
            }
            return run_and_emit(cfg, g_ft, "");
        }
        if (c_cf->parsed()) {
            json cfg;
            if (!g_cf.config_path.empty()) {
                cfg = load_config_file(g_cf.config_path);
            } else {
                cfg["version"] = driftlab::kConfigVersion;
                cfg["kind"] = "counterfactual";
                cfg["schedule"] = default_schedule();
                cfg["drift"] = {{"delta", cf_delta}, {"mode", "per-step"}};
                cfg["counterfactual"] = {{"mixture", two_class_mixture_json(-2.0, 2.0, 0.25)},
                                         {"n", cf_n},
                                         {"source_label", source_label},
                                         {"target_label", target_label},
                                         {"strength", strength},
                                         {"lambda", lambda}};
            }
            return run_and_emit(cfg, g_cf, "");
        }
        if (c_report->parsed()) {
            const auto r = driftlab::load_result(report_dir);
            std::cout << "kind: " << r.kind << "\nrun_id: " << r.run_id << "\n";
            for (const auto& [k, v] : r.summary)
                std::cout << k << ": " << driftlab::fmt_double(v) << "\n";
            return 0;
        }
        if (c_cmp->parsed()) {
            const auto rep = driftlab::compare_runs(driftlab::load_result(cmp_a),
                                                    driftlab::load_result(cmp_b));
            const std::string csv = driftlab::compare_to_csv(rep);
            if (!cmp_out.empty())
                driftlab::write_text_file(cmp_out, csv);
            else
                std::cout << csv;
            return 0;
        }
    } catch (const driftlab::NumericFailure& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const driftlab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::out_of_range& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
