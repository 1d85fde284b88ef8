#pragma once

// Diffusion time discretization and all per-timestep coefficients used by
// the forward process, the reverse process, and the training loss.
//
// Timesteps are 1-indexed; t=0 denotes clean data x_0. alpha_bar(0) == 1.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "driftlab/errors.hpp"

namespace driftlab {

enum class VarianceMode {
    FixedBeta,      // sigma_t^2 = beta_t
    FixedPosterior, // sigma_t^2 = (1 - abar_{t-1}) / (1 - abar_t) * beta_t
};

enum class WeightMode {
    Uniform, // w_t = 1
    Snr,     // w_t = abar_t / (1 - abar_t), clamped
};

struct NoiseSchedule {
    std::size_t T = 0;
    std::vector<double> beta;      // beta_t, index t-1
    std::vector<double> alpha;     // 1 - beta_t
    std::vector<double> alpha_bar; // prod_{s<=t} alpha_s
    std::vector<double> sigma;     // reverse-kernel std dev
    std::vector<double> w;         // loss weights

    double beta_start = 0.0;
    double beta_end = 0.0;
    VarianceMode variance_mode = VarianceMode::FixedBeta;
    WeightMode weight_mode = WeightMode::Uniform;

    double beta_at(std::size_t t) const { return at(beta, t); }
    double alpha_at(std::size_t t) const { return at(alpha, t); }
    double sigma_at(std::size_t t) const { return at(sigma, t); }
    double weight_at(std::size_t t) const { return at(w, t); }

    // abar_0 = 1 by convention (clean data).
    double alpha_bar_at(std::size_t t) const {
        if (t == 0) return 1.0;
        return at(alpha_bar, t);
    }

private:
    double at(const std::vector<double>& v, std::size_t t) const {
        if (t < 1 || t > T)
            throw std::out_of_range("schedule: timestep " + std::to_string(t) +
                                    " outside [1, " + std::to_string(T) + "]");
        return v[t - 1];
    }
};

namespace detail {

inline void finalize_schedule(NoiseSchedule& s) {
    const std::size_t T = s.T;
    s.alpha.resize(T);
    s.alpha_bar.resize(T);
    s.sigma.resize(T);
    s.w.resize(T);
    double prod = 1.0;
    for (std::size_t i = 0; i < T; ++i) {
        s.alpha[i] = 1.0 - s.beta[i];
        prod *= s.alpha[i];
        s.alpha_bar[i] = prod;
    }
    for (std::size_t i = 0; i < T; ++i) {
        switch (s.variance_mode) {
        case VarianceMode::FixedBeta:
            s.sigma[i] = std::sqrt(s.beta[i]);
            break;
        case VarianceMode::FixedPosterior: {
            const double abar_prev = (i == 0) ? 1.0 : s.alpha_bar[i - 1];
            const double abar = s.alpha_bar[i];
            const double denom = 1.0 - abar;
            s.sigma[i] = denom > 0.0
                             ? std::sqrt((1.0 - abar_prev) / denom * s.beta[i])
                             : 0.0;
            break;
        }
        }
        switch (s.weight_mode) {
        case WeightMode::Uniform:
            s.w[i] = 1.0;
            break;
        case WeightMode::Snr: {
            const double abar = s.alpha_bar[i];
            const double noise = 1.0 - abar;
            s.w[i] = noise > 1e-12 ? abar / noise : 1e12;
            break;
        }
        }
    }
}

} // namespace detail

inline NoiseSchedule make_linear_schedule(std::size_t T, double beta_start,
                                          double beta_end,
                                          VarianceMode vmode = VarianceMode::FixedBeta,
                                          WeightMode wmode = WeightMode::Uniform) {
    require(T >= 1, "schedule: T must be >= 1");
    require(beta_start > 0.0 && beta_start < 1.0,
            "schedule: beta_start must be in (0, 1)");
    require(beta_end > 0.0 && beta_end < 1.0,
            "schedule: beta_end must be in (0, 1)");
    require(beta_start <= beta_end,
            "schedule: beta_start must not exceed beta_end");

    NoiseSchedule s;
    s.T = T;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.variance_mode = vmode;
    s.weight_mode = wmode;
    s.beta.resize(T);
    if (T == 1) {
        s.beta[0] = beta_start;
    } else {
        const double step = (beta_end - beta_start) / static_cast<double>(T - 1);
        for (std::size_t i = 0; i < T; ++i)
            s.beta[i] = beta_start + step * static_cast<double>(i);
    }
    detail::finalize_schedule(s);
    return s;
}

// Zero-noise schedule (all beta == 0). Violates the beta > 0 contract on
// purpose; used only to exercise the abar == 1 limits in tests.
inline NoiseSchedule make_degenerate_test_schedule(std::size_t T) {
    NoiseSchedule s;
    s.T = T;
    s.beta.assign(T, 0.0);
    detail::finalize_schedule(s);
    return s;
}

inline double alpha_bar_at(const NoiseSchedule& s, std::size_t t) {
    return s.alpha_bar_at(t);
}

struct PriorSpec {
    double mean = 0.0;
    double std = 1.0;
    std::size_t dim = 1;
};

inline PriorSpec make_prior(double mean, double std, std::size_t dim) {
    require(std > 0.0, "prior: std must be positive");
    require(dim >= 1, "prior: dim must be >= 1");
    return PriorSpec{mean, std, dim};
}

inline const char* to_string(VarianceMode m) {
    return m == VarianceMode::FixedBeta ? "fixed-beta" : "fixed-posterior";
}

inline const char* to_string(WeightMode m) {
    return m == WeightMode::Uniform ? "uniform" : "snr";
}

inline VarianceMode variance_mode_from_string(const std::string& s) {
    if (s == "fixed-beta") return VarianceMode::FixedBeta;
    if (s == "fixed-posterior") return VarianceMode::FixedPosterior;
    throw ConfigError("schedule: unknown variance_mode '" + s + "'");
}

inline WeightMode weight_mode_from_string(const std::string& s) {
    if (s == "uniform") return WeightMode::Uniform;
    if (s == "snr") return WeightMode::Snr;
    throw ConfigError("schedule: unknown weight_mode '" + s + "'");
}

} // namespace driftlab
