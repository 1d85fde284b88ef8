#pragma once

// File formats: CSV with a header row, JSONL for trajectories, JSON model
// checkpoints. All floating-point output uses 17 significant digits so
// artifacts round-trip exactly and checksums are stable.

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "driftlab/batch.hpp"
#include "driftlab/driftsearch.hpp"
#include "driftlab/errors.hpp"
#include "driftlab/metrics.hpp"
#include "driftlab/mlp.hpp"

namespace driftlab {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// FNV-1a 64-bit over raw bytes; used for artifact checksums and run ids.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, v);
    return buf;
}

inline std::string file_checksum(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("checksum: cannot open " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 14];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
        h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
    return hex64(h);
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("io: cannot write " + path.string());
    out << text;
}

// columns: sample_id, dim_0.., cond
inline std::string batch_to_csv(const SampleBatch& b) {
    std::ostringstream os;
    os << "sample_id";
    for (std::size_t d = 0; d < b.dim; ++d) os << ",dim_" << d;
    os << ",cond\n";
    for (std::size_t i = 0; i < b.n; ++i) {
        os << i;
        for (std::size_t d = 0; d < b.dim; ++d) os << ',' << fmt_double(b.at(i, d));
        os << ',' << b.condition[i] << '\n';
    }
    return os.str();
}

// columns: t, mean, std
inline std::string trajectory_to_csv(const Trajectory& tr) {
    std::ostringstream os;
    os << "t,mean,std\n";
    for (std::size_t t = 0; t < tr.per_step_mean.size(); ++t)
        os << t << ',' << fmt_double(tr.per_step_mean[t]) << ','
           << fmt_double(tr.per_step_std[t]) << '\n';
    return os.str();
}

inline std::string trajectory_to_jsonl(const Trajectory& tr) {
    std::ostringstream os;
    for (std::size_t t = 0; t < tr.per_step_mean.size(); ++t) {
        nlohmann::ordered_json rec;
        rec["t"] = t;
        rec["mean"] = tr.per_step_mean[t];
        rec["std"] = tr.per_step_std[t];
        os << rec.dump() << '\n';
    }
    return os.str();
}

inline std::string batch_to_jsonl(const SampleBatch& b) {
    std::ostringstream os;
    for (std::size_t i = 0; i < b.n; ++i) {
        nlohmann::ordered_json rec;
        rec["sample_id"] = i;
        rec["x"] = std::vector<double>(b.row(i), b.row(i) + b.dim);
        rec["cond"] = b.condition[i];
        os << rec.dump() << '\n';
    }
    return os.str();
}

// columns: metric, value, std_error, n_a, n_b, bins_or_bandwidth
inline std::string distances_to_csv(const std::vector<DistanceEstimate>& es) {
    std::ostringstream os;
    os << "metric,value,std_error,n_a,n_b,bins_or_bandwidth\n";
    for (const auto& e : es)
        os << to_string(e.metric_id) << ',' << fmt_double(e.value) << ','
           << fmt_double(e.std_error) << ',' << e.n_a << ',' << e.n_b << ','
           << fmt_double(e.param) << '\n';
    return os.str();
}

// columns: delta, l1, l1_se, is_argmin
inline std::string grid_report_to_csv(const GridSearchReport& rep) {
    std::ostringstream os;
    os << "delta,l1,l1_se,is_argmin\n";
    for (const auto& [delta, est] : rep.per_delta)
        os << fmt_double(delta) << ',' << fmt_double(est.value) << ','
           << fmt_double(est.std_error) << ','
           << (delta == rep.delta_star ? 1 : 0) << '\n';
    return os.str();
}

inline std::string loss_curve_to_csv(const std::vector<double>& curve) {
    std::ostringstream os;
    os << "step,loss\n";
    for (std::size_t i = 0; i < curve.size(); ++i)
        os << i << ',' << fmt_double(curve[i]) << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned JSON with dims, parameters in declaration order,
// schedule_id, and the training manifest. Shape mismatches on load are
// errors.

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::ordered_json checkpoint_json(const MlpDenoiser& net,
                                              const std::string& schedule_id,
                                              const nlohmann::json& manifest) {
    nlohmann::ordered_json j;
    j["version"] = kCheckpointVersion;
    j["backend"] = net.backend();
    j["dim"] = net.dim();
    j["num_classes"] = net.num_classes();
    j["hidden1"] = net.hidden1();
    j["hidden2"] = net.hidden2();
    j["t_emb_dim"] = net.t_emb_dim();
    j["c_emb_dim"] = net.c_emb_dim();
    j["schedule_id"] = schedule_id;
    j["manifest"] = manifest;
    j["params"] = net.params();
    return j;
}

inline void save_checkpoint(const MlpDenoiser& net,
                            const std::filesystem::path& path,
                            const std::string& schedule_id = "",
                            const nlohmann::json& manifest = {}) {
    write_text_file(path, checkpoint_json(net, schedule_id, manifest).dump(2) + "\n");
}

inline std::shared_ptr<MlpDenoiser>
load_checkpoint(const std::filesystem::path& path,
                std::size_t expected_dim = 0) {
    std::ifstream in(path);
    if (!in) throw ConfigError("checkpoint: cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("checkpoint: parse error in " + path.string() + ": " +
                          e.what());
    }
    if (j.value("version", -1) != kCheckpointVersion)
        throw ConfigError("checkpoint: unsupported version");
    const auto dim = j.at("dim").get<std::size_t>();
    if (expected_dim != 0 && dim != expected_dim)
        throw ConfigError("checkpoint: dim mismatch (file has " +
                          std::to_string(dim) + ", expected " +
                          std::to_string(expected_dim) + ")");
    auto net = std::make_shared<MlpDenoiser>(
        dim, j.at("num_classes").get<std::size_t>(),
        j.at("hidden1").get<std::size_t>(), j.at("hidden2").get<std::size_t>(),
        0, j.at("t_emb_dim").get<std::size_t>(),
        j.at("c_emb_dim").get<std::size_t>());
    auto params = j.at("params").get<std::vector<double>>();
    if (params.size() != net->param_count())
        throw ConfigError("checkpoint: parameter count mismatch");
    net->params() = std::move(params);
    return net;
}

} // namespace driftlab
