#pragma once

// delta selection by grid search against the Monte-Carlo L1 distance, and
// the counterfactual objective with its lambda trade-off.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "driftlab/batch.hpp"
#include "driftlab/denoiser.hpp"
#include "driftlab/diffusion.hpp"
#include "driftlab/errors.hpp"
#include "driftlab/metrics.hpp"
#include "driftlab/rng.hpp"
#include "driftlab/schedule.hpp"

namespace driftlab {

struct GridSearchConfig {
    std::vector<double> grid;
    std::size_t n_per_point = 1000;
    EmpiricalDist target;
    DriftMode mode = DriftMode::PerStep;
    int cond = 0;
    std::size_t bins = 64;
    std::uint64_t seed = 0;
    unsigned n_threads = 1;
};

inline GridSearchConfig make_grid_search_config(std::vector<double> grid,
                                                std::size_t n_per_point,
                                                EmpiricalDist target,
                                                DriftMode mode,
                                                std::uint64_t seed) {
    require(!grid.empty(), "grid-search: empty grid");
    require(std::is_sorted(grid.begin(), grid.end()),
            "grid-search: grid must be sorted");
    for (double d : grid)
        require(std::isfinite(d), "grid-search: grid values must be finite");
    require(n_per_point >= 100, "grid-search: n_per_point must be >= 100");
    GridSearchConfig cfg;
    cfg.grid = std::move(grid);
    cfg.n_per_point = n_per_point;
    cfg.target = std::move(target);
    cfg.mode = mode;
    cfg.seed = seed;
    return cfg;
}

struct GridSearchReport {
    std::vector<std::pair<double, DistanceEstimate>> per_delta;
    double delta_star = 0.0;
    bool ambiguity_flag = false; // runner-up within one std_error of the best
};

// Each grid point runs on its own keyed substream, so the report is
// order-independent and byte-for-byte reproducible from the config. Ties
// break toward smaller |delta| (least intervention).
inline GridSearchReport grid_search_delta(const Denoiser& model,
                                          const NoiseSchedule& s,
                                          const GridSearchConfig& cfg) {
    require(!cfg.grid.empty(), "grid-search: empty grid");
    const PriorSpec prior = make_prior(0.0, 1.0, model.dim());

    GridSearchReport rep;
    rep.per_delta.resize(cfg.grid.size());
    for (std::size_t j = 0; j < cfg.grid.size(); ++j) {
        const DriftConfig drift = make_drift(cfg.grid[j], cfg.mode);
        const std::uint64_t point_seed =
            detail::mix64(cfg.seed ^ detail::mix64(stream_id::kGridSearch + j));
        SampleResult res = sample(model, s, prior, drift, cfg.n_per_point,
                                  cfg.cond, point_seed, false, cfg.n_threads);
        rep.per_delta[j] = {cfg.grid[j],
                            l1_distance(make_empirical(res.batch), cfg.target,
                                        cfg.bins)};
    }

    std::size_t best = 0;
    for (std::size_t j = 1; j < rep.per_delta.size(); ++j) {
        const auto& [dj, ej] = rep.per_delta[j];
        const auto& [db, eb] = rep.per_delta[best];
        if (ej.value < eb.value ||
            (ej.value == eb.value && std::abs(dj) < std::abs(db)))
            best = j;
    }
    rep.delta_star = rep.per_delta[best].first;

    double runner_up = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < rep.per_delta.size(); ++j)
        if (j != best) runner_up = std::min(runner_up, rep.per_delta[j].second.value);
    rep.ambiguity_flag =
        rep.per_delta.size() > 1 &&
        runner_up - rep.per_delta[best].second.value <=
            rep.per_delta[best].second.std_error;
    return rep;
}

// ---------------------------------------------------------------------------
// Toy label predictor f_hat: multinomial logistic regression, trained by
// full-batch gradient descent and frozen before counterfactual experiments.

class LogisticClassifier {
public:
    LogisticClassifier(std::size_t dim, std::size_t num_classes)
        : dim_(dim), classes_(num_classes), w_(num_classes * dim, 0.0),
          b_(num_classes, 0.0) {
        require(dim >= 1 && num_classes >= 2, "classifier: bad shape");
    }

    std::size_t dim() const { return dim_; }
    std::size_t num_classes() const { return classes_; }

    std::vector<double> predict_proba(const double* x) const {
        std::vector<double> logits(classes_);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < classes_; ++c) {
            double acc = b_[c];
            for (std::size_t d = 0; d < dim_; ++d) acc += w_[c * dim_ + d] * x[d];
            logits[c] = acc;
            mx = std::max(mx, acc);
        }
        double norm = 0.0;
        for (double& l : logits) {
            l = std::exp(l - mx);
            norm += l;
        }
        for (double& l : logits) l /= norm;
        return logits;
    }

    int predict(const double* x) const {
        const auto p = predict_proba(x);
        return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    }

    void fit(const SampleBatch& data, std::size_t iterations = 500,
             double learning_rate = 0.5) {
        std::vector<double> gw(w_.size()), gb(b_.size());
        const double inv_n = 1.0 / static_cast<double>(data.n);
        for (std::size_t it = 0; it < iterations; ++it) {
            std::fill(gw.begin(), gw.end(), 0.0);
            std::fill(gb.begin(), gb.end(), 0.0);
            for (std::size_t i = 0; i < data.n; ++i) {
                const auto p = predict_proba(data.row(i));
                for (std::size_t c = 0; c < classes_; ++c) {
                    const double err =
                        p[c] - (static_cast<int>(c) == data.condition[i] ? 1.0 : 0.0);
                    gb[c] += err * inv_n;
                    for (std::size_t d = 0; d < dim_; ++d)
                        gw[c * dim_ + d] += err * data.at(i, d) * inv_n;
                }
            }
            for (std::size_t j = 0; j < w_.size(); ++j) w_[j] -= learning_rate * gw[j];
            for (std::size_t j = 0; j < b_.size(); ++j) b_[j] -= learning_rate * gb[j];
        }
    }

private:
    std::size_t dim_, classes_;
    std::vector<double> w_, b_;
};

enum class OutcomeLoss { CrossEntropy, Squared };
enum class InstanceLoss { L2, L1 };

struct CounterfactualSpec {
    double lambda = 1.0;
    OutcomeLoss outcome_loss = OutcomeLoss::CrossEntropy;
    InstanceLoss instance_loss = InstanceLoss::L2;
    std::shared_ptr<const LogisticClassifier> classifier;
    int desired_label = 0;
};

inline CounterfactualSpec
make_counterfactual_spec(double lambda,
                         std::shared_ptr<const LogisticClassifier> classifier,
                         int desired_label,
                         OutcomeLoss ol = OutcomeLoss::CrossEntropy,
                         InstanceLoss il = InstanceLoss::L2) {
    require(lambda >= 0.0, "counterfactual: lambda must be >= 0");
    require(classifier != nullptr, "counterfactual: classifier required");
    if (desired_label < 0 ||
        static_cast<std::size_t>(desired_label) >= classifier->num_classes())
        throw std::out_of_range("counterfactual: desired label out of range");
    return CounterfactualSpec{lambda, ol, il, std::move(classifier),
                              desired_label};
}

struct CounterfactualLoss {
    double total = 0.0;
    double outcome_term = 0.0;  // l_o(f(x'), y')
    double instance_term = 0.0; // l_in(x, x')
};

// total = lambda * l_o(f(x'), y') + l_in(x, x'); all three values returned
// for auditability.
inline CounterfactualLoss counterfactual_loss(const std::vector<double>& x,
                                              const std::vector<double>& x_prime,
                                              const CounterfactualSpec& spec) {
    require(x.size() == x_prime.size(), "counterfactual: dim mismatch");
    require(x.size() == spec.classifier->dim(),
            "counterfactual: classifier dim mismatch");
    if (spec.desired_label < 0 ||
        static_cast<std::size_t>(spec.desired_label) >=
            spec.classifier->num_classes())
        throw std::out_of_range("counterfactual: desired label out of range");

    CounterfactualLoss out;
    const auto p = spec.classifier->predict_proba(x_prime.data());
    switch (spec.outcome_loss) {
    case OutcomeLoss::CrossEntropy:
        out.outcome_term = -std::log(std::max(p[spec.desired_label], 1e-300));
        break;
    case OutcomeLoss::Squared:
        for (std::size_t c = 0; c < p.size(); ++c) {
            const double r =
                p[c] - (static_cast<int>(c) == spec.desired_label ? 1.0 : 0.0);
            out.outcome_term += r * r;
        }
        break;
    }
    for (std::size_t d = 0; d < x.size(); ++d) {
        const double z = x[d] - x_prime[d];
        out.instance_term +=
            spec.instance_loss == InstanceLoss::L2 ? z * z : std::abs(z);
    }
    out.total = spec.lambda * out.outcome_term + out.instance_term;
    return out;
}

struct CounterfactualResult {
    SampleBatch batch; // x', conditioned on the desired label
    std::vector<CounterfactualLoss> losses;
    double flip_rate = 0.0; // fraction with f(x') == desired label
};

// Partially noises each input to t_s = ceil(strength * T) and regenerates
// with conditional, drifted reverse sampling under the desired label.
inline CounterfactualResult
generate_counterfactual(const SampleBatch& x, const Denoiser& model,
                        const NoiseSchedule& s, const CounterfactualSpec& spec,
                        const DriftConfig& drift, double strength,
                        std::uint64_t seed, unsigned n_threads = 1) {
    require(strength > 0.0 && strength <= 1.0,
            "counterfactual: strength must be in (0, 1]");
    require(x.dim == model.dim(), "counterfactual: dim mismatch");
    const auto t_start = static_cast<std::size_t>(
        std::min<double>(std::ceil(strength * static_cast<double>(s.T)),
                         static_cast<double>(s.T)));

    CounterfactualResult res;
    res.batch = make_batch(x.n, x.dim, spec.desired_label);
    res.batch.seed = seed;
    res.losses.resize(x.n);
    std::vector<unsigned char> flipped(x.n, 0);

    const double abar = s.alpha_bar_at(t_start);
    const double sq = std::sqrt(abar);
    const double sg = std::sqrt(1.0 - abar);
    const double fwd_delta = drift.apply_in_training ? drift.delta : 0.0;

    detail::parallel_for(x.n, n_threads, [&](std::size_t i) {
        RngStream rng = RngStream::keyed(seed, stream_id::kCounterfactual, i);
        std::vector<double> xi(x.row(i), x.row(i) + x.dim);
        std::vector<double> z(x.dim);
        for (std::size_t d = 0; d < x.dim; ++d)
            z[d] = sq * xi[d] + sg * (rng.next_gaussian() + fwd_delta);
        for (std::size_t t = t_start; t >= 1; --t)
            reverse_step_row(z, t, spec.desired_label, model, s, drift, rng);
        std::copy(z.begin(), z.end(), res.batch.row(i));
        res.losses[i] = counterfactual_loss(xi, z, spec);
        flipped[i] =
            spec.classifier->predict(z.data()) == spec.desired_label ? 1 : 0;
    });

    std::size_t nf = 0;
    for (auto f : flipped) nf += f;
    res.flip_rate = static_cast<double>(nf) / static_cast<double>(x.n);
    return res;
}

} // namespace driftlab
