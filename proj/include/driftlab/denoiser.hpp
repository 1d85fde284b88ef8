#pragma once

// Conditional noise predictors behind both samplers. The analytic backend
// is exact for Gaussian-mixture data and needs no training, which makes it
// the verification oracle for everything the samplers do.

#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "driftlab/batch.hpp"
#include "driftlab/errors.hpp"
#include "driftlab/rng.hpp"
#include "driftlab/schedule.hpp"

namespace driftlab {

class Denoiser {
public:
    virtual ~Denoiser() = default;

    // Predicts eps_hat for one noised point x_t under class label c.
    virtual std::vector<double> predict(const std::vector<double>& x_t,
                                        std::size_t t, int c,
                                        const NoiseSchedule& s) const = 0;

    virtual std::size_t dim() const = 0;
    virtual std::size_t num_classes() const = 0;
    virtual std::string backend() const = 0;
};

struct MixtureComponent {
    double weight = 1.0;
    std::vector<double> mean;
    std::vector<double> var; // diagonal covariance, strictly positive
};

// Per-class lists of diagonal Gaussian components; weights sum to 1 within
// each class.
struct GaussianMixtureSpec {
    std::map<int, std::vector<MixtureComponent>> classes;
    std::size_t dim = 0;

    void add_component(int c, double weight, std::vector<double> mean,
                       std::vector<double> var) {
        require(weight >= 0.0, "mixture: component weight must be >= 0");
        require(mean.size() == var.size(), "mixture: mean/var dim mismatch");
        require(!mean.empty(), "mixture: empty component");
        for (double v : var)
            require(v > 0.0, "mixture: variances must be strictly positive");
        if (dim == 0)
            dim = mean.size();
        else
            require(mean.size() == dim, "mixture: inconsistent dim");
        classes[c].push_back({weight, std::move(mean), std::move(var)});
    }

    void normalize() {
        for (auto& [c, comps] : classes) {
            double total = 0.0;
            for (const auto& k : comps) total += k.weight;
            require(total > 0.0, "mixture: class weights sum to zero");
            for (auto& k : comps) k.weight /= total;
        }
    }

    const std::vector<MixtureComponent>& components(int c) const {
        auto it = classes.find(c);
        if (it == classes.end())
            throw std::out_of_range("mixture: unknown class label " +
                                    std::to_string(c));
        return it->second;
    }

    // Exact first two moments of the class marginal, per dimension.
    void moments(int c, std::vector<double>& mean_out,
                 std::vector<double>& var_out) const {
        const auto& comps = components(c);
        mean_out.assign(dim, 0.0);
        var_out.assign(dim, 0.0);
        for (const auto& k : comps)
            for (std::size_t d = 0; d < dim; ++d)
                mean_out[d] += k.weight * k.mean[d];
        for (const auto& k : comps)
            for (std::size_t d = 0; d < dim; ++d) {
                const double dm = k.mean[d] - mean_out[d];
                var_out[d] += k.weight * (k.var[d] + dm * dm);
            }
    }

    SampleBatch draw(int c, std::size_t n, RngStream& rng) const {
        const auto& comps = components(c);
        SampleBatch b = make_batch(n, dim, c);
        for (std::size_t i = 0; i < n; ++i) {
            double u = rng.next_uniform();
            std::size_t k = 0;
            double acc = 0.0;
            for (; k + 1 < comps.size(); ++k) {
                acc += comps[k].weight;
                if (u < acc) break;
            }
            for (std::size_t d = 0; d < dim; ++d)
                b.at(i, d) = comps[k].mean[d] +
                             std::sqrt(comps[k].var[d]) * rng.next_gaussian();
        }
        return b;
    }
};

// Standard single-class N(mean, std^2) spec in `dim` dimensions.
inline GaussianMixtureSpec gaussian_spec(double mean, double std,
                                         std::size_t dim = 1, int label = 0) {
    GaussianMixtureSpec spec;
    std::vector<double> m(dim, mean), v(dim, std * std);
    spec.add_component(label, 1.0, m, v);
    return spec;
}

// Exact eps_hat for a noised Gaussian mixture. The marginal of x_t given
// component k is N(sqrt(abar) m_k, abar S_k + (1 - abar) I); posterior
// responsibilities weight the per-component Gaussian conditionals for
// E[x_0 | x_t], from which eps_hat is read off the closed form.
inline std::vector<double> analytic_predict(const GaussianMixtureSpec& spec,
                                            const std::vector<double>& x_t,
                                            std::size_t t, int c,
                                            const NoiseSchedule& s) {
    require(x_t.size() == spec.dim, "analytic_predict: dim mismatch");
    const auto& comps = spec.components(c);
    const double abar = s.alpha_bar_at(t);
    const double noise_var = 1.0 - abar;
    const double sqrt_abar = std::sqrt(abar);
    const std::size_t dim = spec.dim;

    if (noise_var <= 1e-15) // zero-noise limit: x_t is x_0
        return std::vector<double>(dim, 0.0);

    // log responsibilities
    std::vector<double> logr(comps.size());
    double max_logr = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < comps.size(); ++k) {
        double lr = std::log(comps[k].weight > 0 ? comps[k].weight : 1e-300);
        for (std::size_t d = 0; d < dim; ++d) {
            const double v = abar * comps[k].var[d] + noise_var;
            const double z = x_t[d] - sqrt_abar * comps[k].mean[d];
            lr += -0.5 * (std::log(6.283185307179586 * v) + z * z / v);
        }
        logr[k] = lr;
        if (lr > max_logr) max_logr = lr;
    }
    double norm = 0.0;
    for (double& lr : logr) {
        lr = std::exp(lr - max_logr);
        norm += lr;
    }

    std::vector<double> x0_hat(dim, 0.0);
    for (std::size_t k = 0; k < comps.size(); ++k) {
        const double r = logr[k] / norm;
        for (std::size_t d = 0; d < dim; ++d) {
            const double v = abar * comps[k].var[d] + noise_var;
            const double gain = sqrt_abar * comps[k].var[d] / v;
            const double cond_mean =
                comps[k].mean[d] + gain * (x_t[d] - sqrt_abar * comps[k].mean[d]);
            x0_hat[d] += r * cond_mean;
        }
    }

    const double inv_sqrt_noise = 1.0 / std::sqrt(noise_var);
    std::vector<double> eps(dim);
    for (std::size_t d = 0; d < dim; ++d)
        eps[d] = (x_t[d] - sqrt_abar * x0_hat[d]) * inv_sqrt_noise;
    return eps;
}

class AnalyticDenoiser final : public Denoiser {
public:
    explicit AnalyticDenoiser(GaussianMixtureSpec spec) : spec_(std::move(spec)) {
        require(!spec_.classes.empty(), "analytic denoiser: empty mixture");
        spec_.normalize();
    }

    std::vector<double> predict(const std::vector<double>& x_t, std::size_t t,
                                int c, const NoiseSchedule& s) const override {
        return analytic_predict(spec_, x_t, t, c, s);
    }

    std::size_t dim() const override { return spec_.dim; }
    std::size_t num_classes() const override { return spec_.classes.size(); }
    std::string backend() const override { return "analytic"; }

    const GaussianMixtureSpec& spec() const { return spec_; }

private:
    GaussianMixtureSpec spec_;
};

} // namespace driftlab
