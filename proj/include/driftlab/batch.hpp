#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "driftlab/errors.hpp"

namespace driftlab {

enum class DriftMode { PriorOnly, PerStep, Both };

inline const char* to_string(DriftMode m) {
    switch (m) {
    case DriftMode::PriorOnly: return "prior-only";
    case DriftMode::PerStep: return "per-step";
    case DriftMode::Both: return "both";
    }
    return "?";
}

inline DriftMode drift_mode_from_string(const std::string& s) {
    if (s == "prior-only") return DriftMode::PriorOnly;
    if (s == "per-step") return DriftMode::PerStep;
    if (s == "both") return DriftMode::Both;
    throw ConfigError("drift: unknown mode '" + s + "'");
}

// The latent drift: a signed scalar added to the forward target and/or the
// reverse transition mean, broadcast as delta * 1 across coordinates.
struct DriftConfig {
    double delta = 0.0;
    DriftMode mode = DriftMode::PerStep;
    bool apply_in_training = false;

    bool shifts_prior() const {
        return delta != 0.0 &&
               (mode == DriftMode::PriorOnly || mode == DriftMode::Both);
    }
    bool shifts_step_mean() const {
        return delta != 0.0 &&
               (mode == DriftMode::PerStep || mode == DriftMode::Both);
    }
};

inline DriftConfig make_drift(double delta, DriftMode mode,
                              bool apply_in_training = false) {
    require(std::isfinite(delta), "drift: delta must be finite");
    return DriftConfig{delta, mode, apply_in_training};
}

// Row-major N x dim sample matrix with per-row class labels.
struct SampleBatch {
    std::size_t n = 0;
    std::size_t dim = 0;
    std::vector<double> data;       // n * dim, row-major
    std::vector<int> condition;     // n class labels
    std::uint64_t seed = 0;
    std::string schedule_id;

    double& at(std::size_t i, std::size_t d) { return data[i * dim + d]; }
    double at(std::size_t i, std::size_t d) const { return data[i * dim + d]; }

    double* row(std::size_t i) { return data.data() + i * dim; }
    const double* row(std::size_t i) const { return data.data() + i * dim; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline SampleBatch make_batch(std::size_t n, std::size_t dim, int cond = 0) {
    require(n >= 1, "batch: n must be >= 1");
    require(dim >= 1, "batch: dim must be >= 1");
    SampleBatch b;
    b.n = n;
    b.dim = dim;
    b.data.assign(n * dim, 0.0);
    b.condition.assign(n, cond);
    return b;
}

// Per-step channel-mean/std diagnostics of a reverse-sampling run.
// Index t holds the statistics of x_t, so the vectors span t = 0..T.
struct Trajectory {
    std::vector<double> per_step_mean; // length T+1
    std::vector<double> per_step_std;  // length T+1
    double terminal_latent_mean = 0.0; // stats of z_T
    double terminal_latent_std = 0.0;
};

} // namespace driftlab
