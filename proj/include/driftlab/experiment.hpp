#pragma once

// Run manifests, deterministic seeding, persistence, and the experiment
// dispatcher behind the CLI. A run is a pure function of (config, seed):
// re-running an identical manifest reproduces identical artifacts
// byte-for-byte.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "driftlab/batch.hpp"
#include "driftlab/denoiser.hpp"
#include "driftlab/diffusion.hpp"
#include "driftlab/driftsearch.hpp"
#include "driftlab/errors.hpp"
#include "driftlab/io.hpp"
#include "driftlab/metrics.hpp"
#include "driftlab/mlp.hpp"
#include "driftlab/schedule.hpp"

namespace driftlab {

inline constexpr const char* kToolVersion = "driftlab 0.1.0";
inline constexpr int kConfigVersion = 1;

// ---------------------------------------------------------------------------
// Schema: unknown keys are errors, not warnings; violations name the field
// path.

namespace schema {

using nlohmann::json;

inline void expect_object(const json& j, const std::string& path) {
    if (!j.is_object())
        throw ConfigError("schema violation at " + path + ": expected object");
}

inline void check_keys(const json& obj, const std::string& path,
                       const std::set<std::string>& allowed,
                       const std::set<std::string>& required) {
    expect_object(obj, path);
    for (const auto& [k, v] : obj.items())
        if (!allowed.count(k))
            throw ConfigError("schema violation at " + path + "." + k +
                              ": unknown key");
    for (const auto& k : required)
        if (!obj.contains(k))
            throw ConfigError("schema violation at " + path + "." + k +
                              ": missing required key");
}

template <typename T>
T get(const json& obj, const std::string& path, const std::string& key) {
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("schema violation at " + path + "." + key + ": " +
                          e.what());
    }
}

template <typename T>
T get_or(const json& obj, const std::string& path, const std::string& key,
         T fallback) {
    if (!obj.contains(key)) return fallback;
    return get<T>(obj, path, key);
}

} // namespace schema

// ---------------------------------------------------------------------------
// Config parsing

inline NoiseSchedule schedule_from_json(const nlohmann::json& j,
                                        const std::string& path = "schedule") {
    schema::check_keys(j, path,
                       {"T", "beta_start", "beta_end", "variance_mode",
                        "weight_mode"},
                       {"T", "beta_start", "beta_end"});
    return make_linear_schedule(
        schema::get<std::size_t>(j, path, "T"),
        schema::get<double>(j, path, "beta_start"),
        schema::get<double>(j, path, "beta_end"),
        variance_mode_from_string(
            schema::get_or<std::string>(j, path, "variance_mode", "fixed-beta")),
        weight_mode_from_string(
            schema::get_or<std::string>(j, path, "weight_mode", "uniform")));
}

inline nlohmann::ordered_json schedule_to_json(const NoiseSchedule& s) {
    nlohmann::ordered_json j;
    j["T"] = s.T;
    j["beta_start"] = s.beta_start;
    j["beta_end"] = s.beta_end;
    j["variance_mode"] = to_string(s.variance_mode);
    j["weight_mode"] = to_string(s.weight_mode);
    return j;
}

inline DriftConfig drift_from_json(const nlohmann::json& j,
                                   const std::string& path = "drift") {
    schema::check_keys(j, path, {"delta", "mode", "apply_in_training"},
                       {"delta"});
    return make_drift(
        schema::get<double>(j, path, "delta"),
        drift_mode_from_string(
            schema::get_or<std::string>(j, path, "mode", "per-step")),
        schema::get_or<bool>(j, path, "apply_in_training", false));
}

inline GaussianMixtureSpec mixture_from_json(const nlohmann::json& j,
                                             const std::string& path) {
    schema::check_keys(j, path, {"classes"}, {"classes"});
    GaussianMixtureSpec spec;
    const auto& classes = j.at("classes");
    if (!classes.is_array() || classes.empty())
        throw ConfigError("schema violation at " + path +
                          ".classes: expected non-empty array");
    for (std::size_t ci = 0; ci < classes.size(); ++ci) {
        const std::string cpath = path + ".classes[" + std::to_string(ci) + "]";
        schema::check_keys(classes[ci], cpath, {"label", "components"},
                           {"label", "components"});
        const int label = schema::get<int>(classes[ci], cpath, "label");
        const auto& comps = classes[ci].at("components");
        if (!comps.is_array() || comps.empty())
            throw ConfigError("schema violation at " + cpath +
                              ".components: expected non-empty array");
        for (std::size_t ki = 0; ki < comps.size(); ++ki) {
            const std::string kpath = cpath + ".components[" + std::to_string(ki) + "]";
            schema::check_keys(comps[ki], kpath, {"weight", "mean", "var"},
                               {"mean", "var"});
            spec.add_component(
                label, schema::get_or<double>(comps[ki], kpath, "weight", 1.0),
                schema::get<std::vector<double>>(comps[ki], kpath, "mean"),
                schema::get<std::vector<double>>(comps[ki], kpath, "var"));
        }
    }
    spec.normalize();
    return spec;
}

// ---------------------------------------------------------------------------
// Manifest

struct RunManifest {
    nlohmann::json config;
    std::uint64_t seed = 0;
    std::string run_id; // content hash of (config, seed)
    std::string tool_version = kToolVersion;
    std::string created_at;
};

inline const std::set<std::string> kExperimentKinds = {
    "sample", "sweep-drift", "grid-search", "finetune", "counterfactual"};

inline void validate_config(const nlohmann::json& cfg) {
    schema::check_keys(cfg, "config",
                       {"version", "kind", "seed", "schedule", "drift",
                        "backend", "sample", "sweep", "search", "finetune",
                        "counterfactual"},
                       {"version", "kind", "seed", "schedule"});
    if (schema::get<int>(cfg, "config", "version") != kConfigVersion)
        throw ConfigError("schema violation at config.version: unsupported");
    const auto kind = schema::get<std::string>(cfg, "config", "kind");
    if (!kExperimentKinds.count(kind))
        throw ConfigError("schema violation at config.kind: unknown kind '" +
                          kind + "'");
    schedule_from_json(cfg.at("schedule"));
    if (cfg.contains("drift")) drift_from_json(cfg.at("drift"));
    // section presence per kind
    const std::map<std::string, std::string> section = {
        {"sample", "sample"},
        {"sweep-drift", "sweep"},
        {"grid-search", "search"},
        {"finetune", "finetune"},
        {"counterfactual", "counterfactual"}};
    const auto& need = section.at(kind);
    if (!cfg.contains(need))
        throw ConfigError("schema violation at config." + need +
                          ": missing required key");
}

inline std::string compute_run_id(const nlohmann::json& config) {
    const std::string canon = config.dump(); // sorted keys: nlohmann::json maps
    return hex64(fnv1a64(canon.data(), canon.size()));
}

inline RunManifest make_manifest(nlohmann::json config) {
    validate_config(config);
    RunManifest m;
    m.seed = config.at("seed").get<std::uint64_t>();
    m.run_id = compute_run_id(config);
    m.config = std::move(config);
    std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    m.created_at = buf;
    return m;
}

// ---------------------------------------------------------------------------
// Results

struct Artifact {
    std::string kind; // batch | trajectory | report | checkpoint
    std::string path; // relative to the run directory
    std::string checksum;
};

struct ExperimentResult {
    std::string kind;
    std::string run_id;
    std::filesystem::path dir;
    std::vector<Artifact> artifacts;
    std::map<std::string, double> summary;
};

namespace detail {

class ArtifactSink {
public:
    explicit ArtifactSink(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    void write(const std::string& kind, const std::string& name,
               const std::string& content) {
        const auto path = dir_ / name;
        write_text_file(path, content);
        written_.push_back(path);
        artifacts_.push_back({kind, name, file_checksum(path)});
    }

    // Removes partial outputs after a failed run.
    void rollback() {
        for (const auto& p : written_) {
            std::error_code ec;
            std::filesystem::remove(p, ec);
        }
        written_.clear();
        artifacts_.clear();
    }

    const std::vector<Artifact>& artifacts() const { return artifacts_; }
    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    std::vector<std::filesystem::path> written_;
    std::vector<Artifact> artifacts_;
};

inline std::shared_ptr<Denoiser>
backend_from_config(const nlohmann::json& cfg) {
    if (!cfg.contains("backend"))
        throw ConfigError("schema violation at config.backend: missing required key");
    const auto& b = cfg.at("backend");
    schema::check_keys(b, "backend", {"type", "mixture", "checkpoint"}, {"type"});
    const auto type = schema::get<std::string>(b, "backend", "type");
    if (type == "analytic") {
        if (!b.contains("mixture"))
            throw ConfigError(
                "schema violation at backend.mixture: missing required key");
        return std::make_shared<AnalyticDenoiser>(
            mixture_from_json(b.at("mixture"), "backend.mixture"));
    }
    if (type == "mlp") {
        if (!b.contains("checkpoint"))
            throw ConfigError(
                "schema violation at backend.checkpoint: missing required key");
        return load_checkpoint(
            schema::get<std::string>(b, "backend", "checkpoint"));
    }
    throw ConfigError("schema violation at backend.type: unknown type '" +
                      type + "'");
}

inline std::vector<std::size_t> even_subgrid(std::size_t T, std::size_t steps) {
    require(steps >= 1 && steps <= T, "ddim: step count outside [1, T]");
    std::vector<std::size_t> g;
    g.reserve(steps);
    for (std::size_t j = 0; j < steps; ++j) {
        // evenly spaced, descending, endpoints T and 1
        const double f = steps == 1 ? 0.0
                                    : static_cast<double>(j) /
                                          static_cast<double>(steps - 1);
        auto t = static_cast<std::size_t>(
            std::llround(static_cast<double>(T) - f * static_cast<double>(T - 1)));
        if (!g.empty() && t >= g.back()) t = g.back() - 1;
        require(t >= 1, "ddim: degenerate subgrid");
        g.push_back(t);
    }
    return g;
}

} // namespace detail

inline ExperimentResult run_experiment(const RunManifest& manifest,
                                       const std::filesystem::path& out_dir,
                                       unsigned n_threads = 1);

// ---------------------------------------------------------------------------
// Experiment kinds

namespace detail {

inline void run_sample_kind(const nlohmann::json& cfg, std::uint64_t seed,
                            unsigned n_threads, ArtifactSink& sink,
                            std::map<std::string, double>& summary) {
    const NoiseSchedule s = schedule_from_json(cfg.at("schedule"));
    const DriftConfig drift = cfg.contains("drift")
                                  ? drift_from_json(cfg.at("drift"))
                                  : DriftConfig{};
    const auto model = backend_from_config(cfg);
    const auto& sc = cfg.at("sample");
    schema::check_keys(sc, "sample",
                       {"n", "cond", "record_trajectory", "sampler", "eta",
                        "ddim_steps"},
                       {"n"});
    const auto n = schema::get<std::size_t>(sc, "sample", "n");
    const int cond = schema::get_or<int>(sc, "sample", "cond", 0);
    const bool record = schema::get_or<bool>(sc, "sample", "record_trajectory", false);
    const auto sampler = schema::get_or<std::string>(sc, "sample", "sampler", "ancestral");

    if (sampler == "ancestral") {
        const PriorSpec prior = make_prior(0.0, 1.0, model->dim());
        SampleResult res =
            sample(*model, s, prior, drift, n, cond, seed, record, n_threads);
        sink.write("batch", "batch.csv", batch_to_csv(res.batch));
        sink.write("batch", "batch.jsonl", batch_to_jsonl(res.batch));
        if (res.trajectory) {
            sink.write("trajectory", "trajectory.csv",
                       trajectory_to_csv(*res.trajectory));
            sink.write("trajectory", "trajectory.jsonl",
                       trajectory_to_jsonl(*res.trajectory));
        }
        const auto m = make_empirical(res.batch).moments[0];
        summary["mean"] = m.mean;
        summary["std"] = m.std;
    } else if (sampler == "ddim") {
        const double eta = schema::get_or<double>(sc, "sample", "eta", 0.0);
        const auto steps =
            schema::get_or<std::size_t>(sc, "sample", "ddim_steps", s.T);
        SampleBatch batch = ddim_sample(*model, s, even_subgrid(s.T, steps),
                                        drift, eta, n, cond, seed, nullptr,
                                        n_threads);
        sink.write("batch", "batch.csv", batch_to_csv(batch));
        sink.write("batch", "batch.jsonl", batch_to_jsonl(batch));
        const auto m = make_empirical(batch).moments[0];
        summary["mean"] = m.mean;
        summary["std"] = m.std;
    } else {
        throw ConfigError("schema violation at sample.sampler: unknown sampler '" +
                          sampler + "'");
    }
}

inline void run_sweep_kind(const nlohmann::json& cfg, std::uint64_t seed,
                           unsigned n_threads, ArtifactSink& sink,
                           std::map<std::string, double>& summary) {
    const NoiseSchedule s = schedule_from_json(cfg.at("schedule"));
    const auto model = backend_from_config(cfg);
    const auto& sw = cfg.at("sweep");
    schema::check_keys(sw, "sweep", {"grid", "n", "cond", "mode"}, {"grid", "n"});
    const auto grid = schema::get<std::vector<double>>(sw, "sweep", "grid");
    require(!grid.empty(), "sweep: empty grid");
    const auto n = schema::get<std::size_t>(sw, "sweep", "n");
    const int cond = schema::get_or<int>(sw, "sweep", "cond", 0);
    const DriftMode mode = drift_mode_from_string(
        schema::get_or<std::string>(sw, "sweep", "mode", "per-step"));
    const PriorSpec prior = make_prior(0.0, 1.0, model->dim());

    for (std::size_t j = 0; j < grid.size(); ++j) {
        const DriftConfig drift = make_drift(grid[j], mode);
        // shared root: every delta sees the same noise (only delta varies)
        SampleResult res =
            sample(*model, s, prior, drift, n, cond, seed, true, n_threads);
        const std::string tag = "delta_" + std::to_string(j);
        sink.write("batch", "batch_" + tag + ".csv", batch_to_csv(res.batch));
        sink.write("trajectory", "trajectory_" + tag + ".csv",
                   trajectory_to_csv(*res.trajectory));
        sink.write("trajectory", "trajectory_" + tag + ".jsonl",
                   trajectory_to_jsonl(*res.trajectory));
        summary["mean_" + tag] = make_empirical(res.batch).moments[0].mean;
    }
}

inline void run_grid_search_kind(const nlohmann::json& cfg, std::uint64_t seed,
                                 unsigned n_threads, ArtifactSink& sink,
                                 std::map<std::string, double>& summary) {
    const NoiseSchedule s = schedule_from_json(cfg.at("schedule"));
    const auto model = backend_from_config(cfg);
    const auto& se = cfg.at("search");
    schema::check_keys(
        se, "search",
        {"grid", "n_per_point", "bins", "cond", "mode", "target"},
        {"grid", "n_per_point", "target"});
    const auto& tgt = se.at("target");
    schema::check_keys(tgt, "search.target", {"mixture", "n", "label"},
                       {"mixture", "n"});
    const GaussianMixtureSpec target_mix =
        mixture_from_json(tgt.at("mixture"), "search.target.mixture");
    const auto target_n = schema::get<std::size_t>(tgt, "search.target", "n");
    const int target_label = schema::get_or<int>(tgt, "search.target", "label", 0);
    RngStream target_rng = RngStream::keyed(seed, stream_id::kData, 0);
    const SampleBatch target_batch =
        target_mix.draw(target_label, target_n, target_rng);

    GridSearchConfig gcfg = make_grid_search_config(
        schema::get<std::vector<double>>(se, "search", "grid"),
        schema::get<std::size_t>(se, "search", "n_per_point"),
        make_empirical(target_batch),
        drift_mode_from_string(
            schema::get_or<std::string>(se, "search", "mode", "per-step")),
        seed);
    gcfg.bins = schema::get_or<std::size_t>(se, "search", "bins", 64);
    gcfg.cond = schema::get_or<int>(se, "search", "cond", 0);
    gcfg.n_threads = n_threads;

    const GridSearchReport rep = grid_search_delta(*model, s, gcfg);
    sink.write("report", "report.csv", grid_report_to_csv(rep));
    summary["delta_star"] = rep.delta_star;
    summary["ambiguity"] = rep.ambiguity_flag ? 1.0 : 0.0;
    for (const auto& [d, est] : rep.per_delta)
        if (d == rep.delta_star) {
            summary["l1_at_star"] = est.value;
            summary["l1_at_star_se"] = est.std_error;
        }
}

inline void run_finetune_kind(const nlohmann::json& cfg, std::uint64_t seed,
                              unsigned n_threads, ArtifactSink& sink,
                              std::map<std::string, double>& summary) {
    const NoiseSchedule s = schedule_from_json(cfg.at("schedule"));
    const DriftConfig drift = cfg.contains("drift")
                                  ? drift_from_json(cfg.at("drift"))
                                  : DriftConfig{};
    const auto& ft = cfg.at("finetune");
    schema::check_keys(ft, "finetune",
                       {"source", "target", "pretrain_steps", "finetune_steps",
                        "batch_size", "learning_rate", "eval_n", "bins"},
                       {"source", "target", "pretrain_steps", "finetune_steps",
                        "eval_n"});
    const GaussianMixtureSpec source =
        mixture_from_json(ft.at("source"), "finetune.source");
    const GaussianMixtureSpec target =
        mixture_from_json(ft.at("target"), "finetune.target");
    require(source.dim == target.dim, "finetune: source/target dim mismatch");
    const auto batch_size = schema::get_or<std::size_t>(ft, "finetune", "batch_size", 64);
    const double lr = schema::get_or<double>(ft, "finetune", "learning_rate", 1e-2);
    const auto eval_n = schema::get<std::size_t>(ft, "finetune", "eval_n");
    const auto bins = schema::get_or<std::size_t>(ft, "finetune", "bins", 64);

    TrainConfig pre = make_train_config(
        schema::get<std::size_t>(ft, "finetune", "pretrain_steps"), batch_size,
        lr, DriftConfig{}, detail::mix64(seed ^ 0x1));
    auto [pretrained, pre_curve] = train_denoiser(source, s, pre);
    sink.write("report", "pretrain_loss.csv", loss_curve_to_csv(pre_curve));

    TrainConfig fin = make_train_config(
        schema::get<std::size_t>(ft, "finetune", "finetune_steps"), batch_size,
        lr, drift, detail::mix64(seed ^ 0x2));
    auto [tuned, fin_curve] = train_denoiser(target, s, fin, pretrained);
    sink.write("report", "finetune_loss.csv", loss_curve_to_csv(fin_curve));
    sink.write("checkpoint", "checkpoint.json",
               checkpoint_json(*tuned, compute_run_id(cfg),
                               nlohmann::json{{"kind", "finetune"}})
                       .dump(2) +
                   "\n");

    const PriorSpec prior = make_prior(0.0, 1.0, tuned->dim());
    SampleResult gen = sample(*tuned, s, prior, drift, eval_n, 0,
                              detail::mix64(seed ^ 0x3), false, n_threads);
    sink.write("batch", "batch.csv", batch_to_csv(gen.batch));

    RngStream target_rng = RngStream::keyed(seed, stream_id::kData, 1);
    int target_label = target.classes.begin()->first;
    const SampleBatch target_batch = target.draw(target_label, eval_n, target_rng);
    const DistanceEstimate d =
        l1_distance(make_empirical(gen.batch), make_empirical(target_batch), bins);
    sink.write("report", "distance.csv", distances_to_csv({d}));

    summary["final_loss"] = fin_curve.empty() ? 0.0 : fin_curve.back();
    summary["l1"] = d.value;
    summary["l1_se"] = d.std_error;
    summary["gen_mean"] = make_empirical(gen.batch).moments[0].mean;
}

inline void run_counterfactual_kind(const nlohmann::json& cfg,
                                    std::uint64_t seed, unsigned n_threads,
                                    ArtifactSink& sink,
                                    std::map<std::string, double>& summary) {
    const NoiseSchedule s = schedule_from_json(cfg.at("schedule"));
    const DriftConfig drift = cfg.contains("drift")
                                  ? drift_from_json(cfg.at("drift"))
                                  : DriftConfig{};
    const auto& cf = cfg.at("counterfactual");
    schema::check_keys(cf, "counterfactual",
                       {"mixture", "n", "source_label", "target_label",
                        "strength", "lambda", "classifier_train_n",
                        "outcome_loss", "instance_loss"},
                       {"mixture", "n", "source_label", "target_label",
                        "strength", "lambda"});
    const GaussianMixtureSpec mix =
        mixture_from_json(cf.at("mixture"), "counterfactual.mixture");
    const auto n = schema::get<std::size_t>(cf, "counterfactual", "n");
    const int src = schema::get<int>(cf, "counterfactual", "source_label");
    const int dst = schema::get<int>(cf, "counterfactual", "target_label");
    const double strength = schema::get<double>(cf, "counterfactual", "strength");
    const double lambda = schema::get<double>(cf, "counterfactual", "lambda");
    const auto train_n =
        schema::get_or<std::size_t>(cf, "counterfactual", "classifier_train_n", 2000);

    const auto model = std::make_shared<AnalyticDenoiser>(mix);

    // labeled training set for the frozen toy classifier
    std::vector<int> labels;
    for (const auto& [c, comps] : mix.classes) labels.push_back(c);
    SampleBatch train = make_batch(train_n * labels.size(), mix.dim);
    {
        std::size_t row = 0;
        for (int c : labels) {
            RngStream rng = RngStream::keyed(seed, stream_id::kData, 10 + c);
            SampleBatch part = mix.draw(c, train_n, rng);
            for (std::size_t i = 0; i < part.n; ++i, ++row) {
                std::copy(part.row(i), part.row(i) + mix.dim, train.row(row));
                train.condition[row] = c;
            }
        }
    }
    auto clf = std::make_shared<LogisticClassifier>(mix.dim, labels.size());
    clf->fit(train);

    RngStream src_rng = RngStream::keyed(seed, stream_id::kData, 2);
    const SampleBatch inputs = mix.draw(src, n, src_rng);

    const CounterfactualSpec spec = make_counterfactual_spec(lambda, clf, dst);
    const CounterfactualResult res = generate_counterfactual(
        inputs, *model, s, spec, drift, strength, seed, n_threads);

    std::ostringstream os;
    os << "sample_id";
    for (std::size_t d = 0; d < mix.dim; ++d) os << ",x_" << d;
    for (std::size_t d = 0; d < mix.dim; ++d) os << ",xprime_" << d;
    os << ",total,outcome,instance,flipped\n";
    double tot = 0.0, out = 0.0, inst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        os << i;
        for (std::size_t d = 0; d < mix.dim; ++d)
            os << ',' << fmt_double(inputs.at(i, d));
        for (std::size_t d = 0; d < mix.dim; ++d)
            os << ',' << fmt_double(res.batch.at(i, d));
        const auto& L = res.losses[i];
        const int f = spec.classifier->predict(res.batch.row(i)) == dst ? 1 : 0;
        os << ',' << fmt_double(L.total) << ',' << fmt_double(L.outcome_term)
           << ',' << fmt_double(L.instance_term) << ',' << f << '\n';
        tot += L.total;
        out += L.outcome_term;
        inst += L.instance_term;
    }
    sink.write("batch", "counterfactual.csv", os.str());
    const double inv_n = 1.0 / static_cast<double>(n);
    summary["flip_rate"] = res.flip_rate;
    summary["mean_total"] = tot * inv_n;
    summary["mean_outcome"] = out * inv_n;
    summary["mean_instance"] = inst * inv_n;
}

} // namespace detail

inline nlohmann::ordered_json result_to_json(const ExperimentResult& r) {
    nlohmann::ordered_json j;
    j["kind"] = r.kind;
    j["run_id"] = r.run_id;
    j["tool_version"] = kToolVersion;
    nlohmann::ordered_json arts = nlohmann::ordered_json::array();
    for (const auto& a : r.artifacts)
        arts.push_back({{"kind", a.kind}, {"path", a.path}, {"checksum", a.checksum}});
    j["artifacts"] = arts;
    j["summary"] = r.summary;
    return j;
}

inline ExperimentResult run_experiment(const RunManifest& manifest,
                                       const std::filesystem::path& out_dir,
                                       unsigned n_threads) {
    validate_config(manifest.config);
    const auto kind = manifest.config.at("kind").get<std::string>();

    detail::ArtifactSink sink(out_dir);
    ExperimentResult result;
    result.kind = kind;
    result.run_id = manifest.run_id;
    result.dir = out_dir;
    try {
        if (kind == "sample")
            detail::run_sample_kind(manifest.config, manifest.seed, n_threads,
                                    sink, result.summary);
        else if (kind == "sweep-drift")
            detail::run_sweep_kind(manifest.config, manifest.seed, n_threads,
                                   sink, result.summary);
        else if (kind == "grid-search")
            detail::run_grid_search_kind(manifest.config, manifest.seed,
                                         n_threads, sink, result.summary);
        else if (kind == "finetune")
            detail::run_finetune_kind(manifest.config, manifest.seed, n_threads,
                                      sink, result.summary);
        else if (kind == "counterfactual")
            detail::run_counterfactual_kind(manifest.config, manifest.seed,
                                            n_threads, sink, result.summary);
    } catch (...) {
        sink.rollback();
        throw;
    }

    result.artifacts = sink.artifacts();

    // every output carries its manifest; timestamps live here only, never in
    // checksummed artifacts
    nlohmann::ordered_json mj;
    mj["run_id"] = manifest.run_id;
    mj["tool_version"] = manifest.tool_version;
    mj["created_at"] = manifest.created_at;
    mj["config"] = manifest.config;
    write_text_file(out_dir / "manifest.json", mj.dump(2) + "\n");
    write_text_file(out_dir / "result.json", result_to_json(result).dump(2) + "\n");
    return result;
}

inline ExperimentResult load_result(const std::filesystem::path& dir) {
    std::ifstream in(dir / "result.json");
    if (!in)
        throw ConfigError("result: cannot open " + (dir / "result.json").string());
    nlohmann::json j;
    in >> j;
    ExperimentResult r;
    r.kind = j.at("kind").get<std::string>();
    r.run_id = j.at("run_id").get<std::string>();
    r.dir = dir;
    for (const auto& a : j.at("artifacts"))
        r.artifacts.push_back({a.at("kind").get<std::string>(),
                               a.at("path").get<std::string>(),
                               a.at("checksum").get<std::string>()});
    for (const auto& [k, v] : j.at("summary").items())
        r.summary[k] = v.get<double>();
    return r;
}

// ---------------------------------------------------------------------------
// Run comparison

struct CompareRow {
    std::string key;
    double value_a = 0.0;
    double value_b = 0.0;
    double delta = 0.0;   // b - a
    double p_value = -1.0; // from std_errors where present; -1 when absent
};

struct CompareReport {
    std::string kind;
    std::vector<CompareRow> rows;
};

inline double normal_two_sided_p(double z) {
    return std::erfc(std::abs(z) / std::sqrt(2.0));
}

inline CompareReport compare_runs(const ExperimentResult& a,
                                  const ExperimentResult& b) {
    if (a.kind != b.kind)
        throw ConfigError("compare: kind-mismatch (" + a.kind + " vs " + b.kind + ")");
    CompareReport rep;
    rep.kind = a.kind;
    for (const auto& [key, va] : a.summary) {
        if (key.size() > 3 && key.substr(key.size() - 3) == "_se") continue;
        auto it = b.summary.find(key);
        if (it == b.summary.end()) continue;
        CompareRow row;
        row.key = key;
        row.value_a = va;
        row.value_b = it->second;
        row.delta = it->second - va;
        const auto sea = a.summary.find(key + "_se");
        const auto seb = b.summary.find(key + "_se");
        if (sea != a.summary.end() && seb != b.summary.end()) {
            const double se =
                std::sqrt(sea->second * sea->second + seb->second * seb->second);
            row.p_value = se > 0.0 ? normal_two_sided_p(row.delta / se) : 0.0;
        }
        rep.rows.push_back(row);
    }
    return rep;
}

inline std::string compare_to_csv(const CompareReport& rep) {
    std::ostringstream os;
    os << "key,value_a,value_b,delta,p_value\n";
    for (const auto& r : rep.rows)
        os << r.key << ',' << fmt_double(r.value_a) << ',' << fmt_double(r.value_b)
           << ',' << fmt_double(r.delta) << ','
           << (r.p_value >= 0.0 ? fmt_double(r.p_value) : std::string("")) << '\n';
    return os.str();
}

} // namespace driftlab
