#pragma once

// Monte-Carlo distribution distances and summary diagnostics.
// The L1 distance is the per-dimension normalized-histogram discrepancy
// with shared equal-width edges; bounded in [0, 2].

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "driftlab/batch.hpp"
#include "driftlab/errors.hpp"
#include "driftlab/rng.hpp"

namespace driftlab {

enum class MetricId { L1, MMD };

inline const char* to_string(MetricId m) {
    return m == MetricId::L1 ? "l1" : "mmd";
}

struct DistanceEstimate {
    double value = 0.0;
    double std_error = 0.0;
    std::size_t n_a = 0;
    std::size_t n_b = 0;
    MetricId metric_id = MetricId::L1;
    double param = 0.0; // bin count for L1, bandwidth for MMD
};

struct DimMoments {
    double mean = 0.0;
    double std = 0.0;
    double skew = 0.0;
    bool degenerate = false; // constant samples: std == 0, skew reported as 0
};

struct EmpiricalDist {
    std::size_t n = 0;
    std::size_t dim = 0;
    std::vector<double> samples; // n * dim, row-major
    std::vector<DimMoments> moments;

    double at(std::size_t i, std::size_t d) const { return samples[i * dim + d]; }
};

namespace detail {

inline std::vector<DimMoments> compute_moments(const std::vector<double>& data,
                                               std::size_t n, std::size_t dim) {
    std::vector<DimMoments> out(dim);
    for (std::size_t d = 0; d < dim; ++d) {
        double s1 = 0.0;
        for (std::size_t i = 0; i < n; ++i) s1 += data[i * dim + d];
        const double mean = s1 / static_cast<double>(n);
        double s2 = 0.0, s3 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double z = data[i * dim + d] - mean;
            s2 += z * z;
            s3 += z * z * z;
        }
        const double var = s2 / static_cast<double>(n); // population convention
        DimMoments m;
        m.mean = mean;
        m.std = std::sqrt(var);
        if (m.std > 0.0) {
            m.skew = s3 / static_cast<double>(n) / (var * m.std);
        } else {
            m.skew = 0.0;
            m.degenerate = true;
        }
        out[d] = m;
    }
    return out;
}

} // namespace detail

inline EmpiricalDist make_empirical(const SampleBatch& b) {
    require(b.n >= 1, "empirical: empty batch");
    EmpiricalDist d;
    d.n = b.n;
    d.dim = b.dim;
    d.samples = b.data;
    d.moments = detail::compute_moments(d.samples, d.n, d.dim);
    return d;
}

inline EmpiricalDist make_empirical(std::vector<double> samples, std::size_t dim) {
    require(dim >= 1 && samples.size() % dim == 0, "empirical: bad shape");
    EmpiricalDist d;
    d.dim = dim;
    d.n = samples.size() / dim;
    require(d.n >= 1, "empirical: empty sample set");
    d.samples = std::move(samples);
    d.moments = detail::compute_moments(d.samples, d.n, d.dim);
    return d;
}

inline std::vector<DimMoments> moments_report(const EmpiricalDist& d) {
    require(d.n >= 2, "moments: need N >= 2");
    return d.moments;
}

namespace detail {

// Sum_bins |p_a - p_b| for one dimension over shared equal-width edges.
// Index lists allow bootstrap resamples to reuse the edges.
inline double l1_one_dim(const EmpiricalDist& a, const EmpiricalDist& b,
                         std::size_t d, double lo, double hi, std::size_t bins,
                         const std::vector<std::size_t>* idx_a,
                         const std::vector<std::size_t>* idx_b) {
    std::vector<double> pa(bins, 0.0), pb(bins, 0.0);
    const double width = hi - lo;
    auto bin_of = [&](double x) -> std::size_t {
        if (width <= 0.0) return 0;
        double f = (x - lo) / width * static_cast<double>(bins);
        if (f < 0.0) f = 0.0;
        auto k = static_cast<std::size_t>(f);
        return k >= bins ? bins - 1 : k;
    };
    const std::size_t na = idx_a ? idx_a->size() : a.n;
    const std::size_t nb = idx_b ? idx_b->size() : b.n;
    for (std::size_t i = 0; i < na; ++i)
        pa[bin_of(a.at(idx_a ? (*idx_a)[i] : i, d))] += 1.0;
    for (std::size_t i = 0; i < nb; ++i)
        pb[bin_of(b.at(idx_b ? (*idx_b)[i] : i, d))] += 1.0;
    double acc = 0.0;
    for (std::size_t k = 0; k < bins; ++k)
        acc += std::abs(pa[k] / static_cast<double>(na) -
                        pb[k] / static_cast<double>(nb));
    return acc;
}

inline constexpr std::size_t kBootstrapResamples = 200;
inline constexpr std::uint64_t kMetricsRoot = 0x6d657472696373ULL;

} // namespace detail

inline DistanceEstimate l1_distance(const EmpiricalDist& a,
                                    const EmpiricalDist& b,
                                    std::size_t bins = 64) {
    require(a.dim == b.dim, "l1_distance: dim mismatch");
    require(bins >= 2, "l1_distance: bins must be >= 2");
    if (a.n < 2 || b.n < 2)
        throw ConfigError("l1_distance: insufficient samples (N < 2)");

    const std::size_t dim = a.dim;
    // shared edges spanning both sample sets, per dimension
    std::vector<double> lo(dim), hi(dim);
    for (std::size_t d = 0; d < dim; ++d) {
        double mn = a.at(0, d), mx = a.at(0, d);
        for (std::size_t i = 0; i < a.n; ++i) {
            mn = std::min(mn, a.at(i, d));
            mx = std::max(mx, a.at(i, d));
        }
        for (std::size_t i = 0; i < b.n; ++i) {
            mn = std::min(mn, b.at(i, d));
            mx = std::max(mx, b.at(i, d));
        }
        lo[d] = mn;
        hi[d] = mx;
    }

    auto full = [&](const std::vector<std::size_t>* ia,
                    const std::vector<std::size_t>* ib) {
        double acc = 0.0;
        for (std::size_t d = 0; d < dim; ++d)
            acc += detail::l1_one_dim(a, b, d, lo[d], hi[d], bins, ia, ib);
        return acc / static_cast<double>(dim);
    };

    DistanceEstimate est;
    est.value = full(nullptr, nullptr);
    est.n_a = a.n;
    est.n_b = b.n;
    est.metric_id = MetricId::L1;
    est.param = static_cast<double>(bins);

    // bootstrap over resampled indices, shared edges fixed
    double s1 = 0.0, s2 = 0.0;
    std::vector<std::size_t> ia(a.n), ib(b.n);
    for (std::size_t r = 0; r < detail::kBootstrapResamples; ++r) {
        RngStream ra = RngStream::keyed(detail::kMetricsRoot, stream_id::kBootstrap, r, 0);
        RngStream rb = RngStream::keyed(detail::kMetricsRoot, stream_id::kBootstrap, r, 1);
        for (auto& i : ia) i = static_cast<std::size_t>(ra.next_below(a.n));
        for (auto& i : ib) i = static_cast<std::size_t>(rb.next_below(b.n));
        const double v = full(&ia, &ib);
        s1 += v;
        s2 += v * v;
    }
    const double B = static_cast<double>(detail::kBootstrapResamples);
    const double mean = s1 / B;
    est.std_error = std::sqrt(std::max(0.0, s2 / B - mean * mean));
    return est;
}

// Unbiased squared-MMD with a Gaussian kernel. The estimate may be slightly
// negative; the raw value is reported without clamping.
inline DistanceEstimate mmd_distance(const EmpiricalDist& a,
                                     const EmpiricalDist& b,
                                     double bandwidth) {
    require(a.dim == b.dim, "mmd_distance: dim mismatch");
    require(bandwidth > 0.0, "mmd_distance: bandwidth must be positive");
    require(a.n >= 2 && b.n >= 2, "mmd_distance: need N >= 2 on both sides");

    const std::size_t m = a.n, n = b.n, dim = a.dim;
    const double inv2h2 = 1.0 / (2.0 * bandwidth * bandwidth);
    auto kernel = [&](const double* x, const double* y) {
        double d2 = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
            const double z = x[k] - y[k];
            d2 += z * z;
        }
        return std::exp(-d2 * inv2h2);
    };

    // precomputed kernel matrices so bootstrap resamples only re-index
    std::vector<double> Kaa(m * m), Kbb(n * n), Kab(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            Kaa[i * m + j] = kernel(&a.samples[i * dim], &a.samples[j * dim]);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            Kbb[i * n + j] = kernel(&b.samples[i * dim], &b.samples[j * dim]);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            Kab[i * n + j] = kernel(&a.samples[i * dim], &b.samples[j * dim]);

    auto estimate = [&](const std::vector<std::size_t>* ia,
                        const std::vector<std::size_t>* ib) {
        const std::size_t mm = ia ? ia->size() : m;
        const std::size_t nn = ib ? ib->size() : n;
        auto A = [&](std::size_t i) { return ia ? (*ia)[i] : i; };
        auto Bx = [&](std::size_t i) { return ib ? (*ib)[i] : i; };
        double taa = 0.0, tbb = 0.0, tab = 0.0;
        for (std::size_t i = 0; i < mm; ++i)
            for (std::size_t j = 0; j < mm; ++j)
                if (i != j) taa += Kaa[A(i) * m + A(j)];
        for (std::size_t i = 0; i < nn; ++i)
            for (std::size_t j = 0; j < nn; ++j)
                if (i != j) tbb += Kbb[Bx(i) * n + Bx(j)];
        for (std::size_t i = 0; i < mm; ++i)
            for (std::size_t j = 0; j < nn; ++j)
                tab += Kab[A(i) * n + Bx(j)];
        return taa / static_cast<double>(mm * (mm - 1)) +
               tbb / static_cast<double>(nn * (nn - 1)) -
               2.0 * tab / static_cast<double>(mm * nn);
    };

    DistanceEstimate est;
    est.value = estimate(nullptr, nullptr);
    est.n_a = m;
    est.n_b = n;
    est.metric_id = MetricId::MMD;
    est.param = bandwidth;

    const std::size_t resamples = 100;
    double s1 = 0.0, s2 = 0.0;
    std::vector<std::size_t> ia(m), ib(n);
    for (std::size_t r = 0; r < resamples; ++r) {
        RngStream ra = RngStream::keyed(detail::kMetricsRoot, stream_id::kBootstrap, r, 2);
        RngStream rb = RngStream::keyed(detail::kMetricsRoot, stream_id::kBootstrap, r, 3);
        for (auto& i : ia) i = static_cast<std::size_t>(ra.next_below(m));
        for (auto& i : ib) i = static_cast<std::size_t>(rb.next_below(n));
        const double v = estimate(&ia, &ib);
        s1 += v;
        s2 += v * v;
    }
    const double B = static_cast<double>(resamples);
    const double mean = s1 / B;
    est.std_error = std::sqrt(std::max(0.0, s2 / B - mean * mean));
    return est;
}

} // namespace driftlab
