#pragma once

// Forward noising, drifted reverse sampling (ancestral and DDIM), and
// per-step trajectory diagnostics.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "driftlab/batch.hpp"
#include "driftlab/denoiser.hpp"
#include "driftlab/errors.hpp"
#include "driftlab/rng.hpp"
#include "driftlab/schedule.hpp"

namespace driftlab {

namespace detail {

inline void check_finite(const std::vector<double>& v, std::size_t t,
                         const char* what) {
    for (double x : v)
        if (!std::isfinite(x))
            throw NumericFailure(std::string(what) +
                                 " produced a non-finite value at step t=" +
                                 std::to_string(t));
}

// Runs fn(i) for i in [0, n) on up to n_threads workers. Work is split in
// contiguous chunks; fn must only touch state owned by index i.
template <typename Fn>
void parallel_for(std::size_t n, unsigned n_threads, Fn&& fn) {
    if (n_threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const unsigned workers = std::min<unsigned>(n_threads, static_cast<unsigned>(n));
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        const std::size_t lo = static_cast<std::size_t>(w) * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

} // namespace detail

// Closed-form forward noising x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps.
// When drift.apply_in_training the regression target is eps + delta * 1 and
// x_t is built from the drifted noise; otherwise plain eps. Returns the
// noised batch and the target the denoiser should regress onto.
inline std::pair<SampleBatch, std::vector<double>>
forward_sample(const SampleBatch& x0, std::size_t t, const NoiseSchedule& s,
               const DriftConfig& drift, RngStream& rng) {
    const double abar = s.alpha_bar_at(t); // validates t
    const double sig = std::sqrt(1.0 - abar);
    const double sqrt_abar = std::sqrt(abar);
    const double delta = drift.apply_in_training ? drift.delta : 0.0;

    SampleBatch xt = x0;
    std::vector<double> target(x0.n * x0.dim);
    for (std::size_t j = 0; j < target.size(); ++j) {
        const double eps = rng.next_gaussian() + delta;
        target[j] = eps;
        xt.data[j] = sqrt_abar * x0.data[j] + sig * eps;
    }
    return {std::move(xt), std::move(target)};
}

// Posterior mean in the eps parameterization:
//   mu = (x_t - beta_t / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t)
// plus delta * 1 when the mode drifts step means.
inline void reverse_step_row(std::vector<double>& x, std::size_t t, int cond,
                             const Denoiser& model, const NoiseSchedule& s,
                             const DriftConfig& drift, RngStream& rng) {
    const double abar = s.alpha_bar_at(t);
    const double beta = s.beta_at(t);
    const double alpha = s.alpha_at(t);
    const double noise = 1.0 - abar;
    const double eps_coef = noise > 0.0 ? beta / std::sqrt(noise) : 0.0;
    const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
    const double delta = drift.shifts_step_mean() ? drift.delta : 0.0;
    const double sig = t > 1 ? s.sigma_at(t) : 0.0; // last step adds no noise

    const std::vector<double> eps_hat = model.predict(x, t, cond, s);
    detail::check_finite(eps_hat, t, "denoiser");

    for (std::size_t d = 0; d < x.size(); ++d) {
        double mu = (x[d] - eps_coef * eps_hat[d]) * inv_sqrt_alpha + delta;
        if (sig > 0.0) mu += sig * rng.next_gaussian();
        x[d] = mu;
    }
}

// One reverse transition for a whole batch, consuming `rng` row by row.
inline SampleBatch reverse_step(const SampleBatch& xt, std::size_t t,
                                const Denoiser& model, const NoiseSchedule& s,
                                const DriftConfig& drift, RngStream& rng) {
    require(t >= 1, "reverse_step: t must be >= 1");
    SampleBatch out = xt;
    std::vector<double> row(xt.dim);
    for (std::size_t i = 0; i < xt.n; ++i) {
        row.assign(out.row(i), out.row(i) + out.dim);
        reverse_step_row(row, t, out.condition[i], model, s, drift, rng);
        std::copy(row.begin(), row.end(), out.row(i));
    }
    return out;
}

struct SampleResult {
    SampleBatch batch;
    std::optional<Trajectory> trajectory;
};

namespace detail {

struct TrajAccum {
    // per-sample, per-step sums over dimensions; reduced in sample order
    // afterwards so threading cannot change the result.
    std::vector<double> sum;   // n * (T+1)
    std::vector<double> sumsq; // n * (T+1)
    std::size_t steps = 0;

    void init(std::size_t n, std::size_t T) {
        steps = T + 1;
        sum.assign(n * steps, 0.0);
        sumsq.assign(n * steps, 0.0);
    }

    void record(std::size_t i, std::size_t t, const std::vector<double>& x) {
        double a = 0.0, b = 0.0;
        for (double v : x) {
            a += v;
            b += v * v;
        }
        sum[i * steps + t] = a;
        sumsq[i * steps + t] = b;
    }

    Trajectory reduce(std::size_t n, std::size_t dim) const {
        Trajectory traj;
        traj.per_step_mean.resize(steps);
        traj.per_step_std.resize(steps);
        const double count = static_cast<double>(n * dim);
        for (std::size_t t = 0; t < steps; ++t) {
            double a = 0.0, b = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                a += sum[i * steps + t];
                b += sumsq[i * steps + t];
            }
            const double mean = a / count;
            const double var = std::max(0.0, b / count - mean * mean);
            traj.per_step_mean[t] = mean;
            traj.per_step_std[t] = std::sqrt(var);
        }
        traj.terminal_latent_mean = traj.per_step_mean[steps - 1];
        traj.terminal_latent_std = traj.per_step_std[steps - 1];
        return traj;
    }
};

} // namespace detail

// Ancestral sampler. Each sample i consumes the dedicated substream keyed
// by (seed, i), so the batch is identical whether generated serially or by
// concurrent workers.
inline SampleResult sample(const Denoiser& model, const NoiseSchedule& s,
                           const PriorSpec& prior, const DriftConfig& drift,
                           std::size_t n, int cond, std::uint64_t seed,
                           bool record = false, unsigned n_threads = 1) {
    require(n >= 1, "sample: n must be >= 1");
    require(prior.dim == model.dim(), "sample: prior dim != model dim");
    const std::size_t dim = model.dim();
    const std::size_t T = s.T;

    SampleBatch out = make_batch(n, dim, cond);
    out.seed = seed;
    detail::TrajAccum accum;
    if (record) accum.init(n, T);

    detail::parallel_for(n, n_threads, [&](std::size_t i) {
        RngStream rng = RngStream::keyed(seed, stream_id::kSample, i);
        std::vector<double> x(dim);
        for (double& v : x) v = prior.mean + prior.std * rng.next_gaussian();
        if (drift.shifts_prior())
            for (double& v : x) v += drift.delta;
        if (record) accum.record(i, T, x);
        for (std::size_t t = T; t >= 1; --t) {
            reverse_step_row(x, t, cond, model, s, drift, rng);
            if (record) accum.record(i, t - 1, x);
        }
        std::copy(x.begin(), x.end(), out.row(i));
    });

    SampleResult res;
    res.batch = std::move(out);
    if (record) res.trajectory = accum.reduce(n, dim);
    return res;
}

// DDIM over a strictly decreasing timestep subgrid. Deterministic when
// eta = 0: the update from t to t_next keeps the direction term aligned
// with eps_hat and adds noise scaled by eta only.
inline SampleBatch ddim_sample(const Denoiser& model, const NoiseSchedule& s,
                               const std::vector<std::size_t>& subgrid,
                               const DriftConfig& drift, double eta,
                               std::size_t n, int cond, std::uint64_t seed,
                               const SampleBatch* initial_latents = nullptr,
                               unsigned n_threads = 1) {
    require(n >= 1, "ddim: n must be >= 1");
    require(!subgrid.empty(), "ddim: invalid-grid (empty subgrid)");
    require(eta >= 0.0 && eta <= 1.0, "ddim: eta must be in [0, 1]");
    for (std::size_t j = 0; j < subgrid.size(); ++j) {
        require(subgrid[j] >= 1 && subgrid[j] <= s.T,
                "ddim: invalid-grid (timestep outside [1, T])");
        if (j > 0)
            require(subgrid[j] < subgrid[j - 1],
                    "ddim: invalid-grid (subgrid not strictly decreasing)");
    }
    const std::size_t dim = model.dim();
    if (initial_latents) {
        require(initial_latents->n == n && initial_latents->dim == dim,
                "ddim: initial latent shape mismatch");
    }

    SampleBatch out = make_batch(n, dim, cond);
    out.seed = seed;

    detail::parallel_for(n, n_threads, [&](std::size_t i) {
        RngStream rng = RngStream::keyed(seed, stream_id::kSample, i);
        std::vector<double> x(dim);
        if (initial_latents) {
            const double* src = initial_latents->row(i);
            std::copy(src, src + dim, x.begin());
        } else {
            for (double& v : x) v = rng.next_gaussian();
        }
        if (drift.shifts_prior())
            for (double& v : x) v += drift.delta;

        for (std::size_t j = 0; j < subgrid.size(); ++j) {
            const std::size_t t = subgrid[j];
            const std::size_t t_next = j + 1 < subgrid.size() ? subgrid[j + 1] : 0;
            const double abar = s.alpha_bar_at(t);
            const double abar_next = s.alpha_bar_at(t_next);
            const double noise = 1.0 - abar;

            const std::vector<double> eps_hat = model.predict(x, t, cond, s);
            detail::check_finite(eps_hat, t, "denoiser");

            const double sig =
                noise > 0.0 && abar_next > 0.0
                    ? eta * std::sqrt((1.0 - abar_next) / noise) *
                          std::sqrt(1.0 - abar / abar_next)
                    : 0.0;
            const double dir =
                std::sqrt(std::max(0.0, 1.0 - abar_next - sig * sig));
            const double inv_sqrt_abar = 1.0 / std::sqrt(abar);
            const double sqrt_noise = std::sqrt(noise);
            const double sqrt_abar_next = std::sqrt(abar_next);
            const double delta = drift.shifts_step_mean() ? drift.delta : 0.0;

            for (std::size_t d = 0; d < dim; ++d) {
                const double x0_pred = (x[d] - sqrt_noise * eps_hat[d]) * inv_sqrt_abar;
                double v = sqrt_abar_next * x0_pred + dir * eps_hat[d] + delta;
                if (sig > 0.0) v += sig * rng.next_gaussian();
                x[d] = v;
            }
        }
        std::copy(x.begin(), x.end(), out.row(i));
    });

    return out;
}

// Full timestep grid T, T-1, ..., 1 for the given schedule.
inline std::vector<std::size_t> full_subgrid(const NoiseSchedule& s) {
    std::vector<std::size_t> g(s.T);
    for (std::size_t j = 0; j < s.T; ++j) g[j] = s.T - j;
    return g;
}

} // namespace driftlab
