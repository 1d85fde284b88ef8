#pragma once

// Test-side oracles, independent of the sampler implementation path.
// Everything here is derived directly from Gaussian conditioning identities
// or brute-force numerics and touches only the schedule coefficients.

#include <cmath>
#include <cstddef>
#include <vector>

#include "driftlab/schedule.hpp"

namespace oracles {

// eps_hat for 1-D Gaussian data N(m0, s0^2) is affine in x_t:
// eps_hat(x) = a_t x + b_t, read off the Gaussian posterior E[x0 | x_t].
struct AffineEps {
    double a = 0.0;
    double b = 0.0;
};

inline AffineEps affine_eps(const driftlab::NoiseSchedule& s, std::size_t t,
                            double m0, double s0) {
    const double abar = s.alpha_bar_at(t);
    const double sq = std::sqrt(abar);
    const double noise = 1.0 - abar;
    const double v = abar * s0 * s0 + noise;
    const double gain = sq * s0 * s0 / v; // d E[x0|x] / dx
    // E[x0|x] = m0 + gain (x - sq m0)
    const double inv = 1.0 / std::sqrt(noise);
    AffineEps e;
    e.a = (1.0 - sq * gain) * inv;
    e.b = -(sq * m0 * (1.0 - sq * gain)) * inv;
    return e;
}

// Reverse mean map mu(x) = A_t x + B_t (+ delta when drifted).
struct AffineStep {
    double A = 0.0;
    double B = 0.0;
};

inline AffineStep affine_reverse_step(const driftlab::NoiseSchedule& s,
                                      std::size_t t, double m0, double s0) {
    const AffineEps e = affine_eps(s, t, m0, s0);
    const double beta = s.beta_at(t);
    const double abar = s.alpha_bar_at(t);
    const double coef = beta / std::sqrt(1.0 - abar);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(s.alpha_at(t));
    return {(1.0 - coef * e.a) * inv_sqrt_alpha, -coef * e.b * inv_sqrt_alpha};
}

// Expected output mean of the ancestral sampler on N(m0, s0^2) data under
// a constant per-step drift, by direct mean recursion from t = T to 0.
inline double ancestral_mean_recursion(const driftlab::NoiseSchedule& s,
                                       double m0, double s0, double prior_mean,
                                       double delta_per_step,
                                       double delta_prior = 0.0) {
    double m = prior_mean + delta_prior;
    for (std::size_t t = s.T; t >= 1; --t) {
        const AffineStep st = affine_reverse_step(s, t, m0, s0);
        m = st.A * m + st.B + delta_per_step;
    }
    return m;
}

// Drift gain K: d(output mean)/d(delta) for the per-step mode.
inline double drift_gain(const driftlab::NoiseSchedule& s, double m0, double s0) {
    return ancestral_mean_recursion(s, m0, s0, 0.0, 1.0) -
           ancestral_mean_recursion(s, m0, s0, 0.0, 0.0);
}

// Per-coordinate output difference of eta=0 DDIM between drift delta and 0,
// with shared initial latents: the update is affine, so the difference
// follows diff' = C_t diff + delta.
inline double ddim_drift_offset(const driftlab::NoiseSchedule& s,
                                const std::vector<std::size_t>& subgrid,
                                double m0, double s0, double delta) {
    double diff = 0.0;
    for (std::size_t j = 0; j < subgrid.size(); ++j) {
        const std::size_t t = subgrid[j];
        const std::size_t t_next = j + 1 < subgrid.size() ? subgrid[j + 1] : 0;
        const AffineEps e = affine_eps(s, t, m0, s0);
        const double abar = s.alpha_bar_at(t);
        const double abar_next = s.alpha_bar_at(t_next);
        const double sq = std::sqrt(abar);
        const double sqn = std::sqrt(abar_next);
        const double C = sqn * (1.0 - std::sqrt(1.0 - abar) * e.a) / sq +
                         std::sqrt(1.0 - abar_next) * e.a;
        diff = C * diff + delta;
    }
    return diff;
}

// Exact E[x_{t-1} | x_t] for N(m0, s0^2) data by joint-Gaussian
// conditioning on the forward marginals (no eps parameterization).
inline double exact_posterior_mean(const driftlab::NoiseSchedule& s,
                                   std::size_t t, double m0, double s0,
                                   double x_t) {
    const double abar_prev = s.alpha_bar_at(t - 1);
    const double abar = s.alpha_bar_at(t);
    const double mean_prev = std::sqrt(abar_prev) * m0;
    const double var_prev = abar_prev * s0 * s0 + (1.0 - abar_prev);
    const double mean_t = std::sqrt(abar) * m0;
    const double var_t = abar * s0 * s0 + (1.0 - abar);
    const double cov = std::sqrt(s.alpha_at(t)) * var_prev;
    return mean_prev + cov / var_t * (x_t - mean_t);
}

// Brute-force E[x0 | x_t] for an arbitrary 1-D density by Simpson
// quadrature over [lo, hi].
template <typename Density>
double quadrature_x0_posterior(Density q0, double x_t, double abar, double lo,
                               double hi, std::size_t n = 20000) {
    const double sq = std::sqrt(abar);
    const double nv = 1.0 - abar;
    auto integrand = [&](double x0, bool weighted) {
        const double z = x_t - sq * x0;
        const double lik = std::exp(-0.5 * z * z / nv);
        return (weighted ? x0 : 1.0) * q0(x0) * lik;
    };
    const double h = (hi - lo) / static_cast<double>(n);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
        const double x = lo + h * static_cast<double>(i);
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
        num += w * integrand(x, true);
        den += w * integrand(x, false);
    }
    return num / den;
}

inline double normal_pdf(double x, double mean, double std) {
    const double z = (x - mean) / std;
    return std::exp(-0.5 * z * z) / (std * std::sqrt(6.283185307179586));
}

// Discretized integral of |phi_a - phi_b| over shared equal-width bins,
// the brute-force counterpart of the histogram L1 distance.
inline double gaussian_l1_on_bins(double m_a, double s_a, double m_b,
                                  double s_b, double lo, double hi,
                                  std::size_t bins) {
    auto cdf = [](double x, double m, double s) {
        return 0.5 * std::erfc(-(x - m) / (s * std::sqrt(2.0)));
    };
    const double w = (hi - lo) / static_cast<double>(bins);
    double acc = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
        const double a = lo + w * static_cast<double>(k);
        const double b = a + w;
        const double pa = cdf(b, m_a, s_a) - cdf(a, m_a, s_a);
        const double pb = cdf(b, m_b, s_b) - cdf(a, m_b, s_b);
        acc += std::abs(pa - pb);
    }
    return acc;
}

} // namespace oracles
