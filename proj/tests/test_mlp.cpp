#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "driftlab/denoiser.hpp"
#include "driftlab/diffusion.hpp"
#include "driftlab/mlp.hpp"
#include "driftlab/schedule.hpp"

using namespace driftlab;

namespace {

// One-parameter linear model p * x: the exact case for central differences.
class LinearModel final : public TrainableDenoiser {
public:
    LinearModel() : p_(1, 0.7) {}
    std::vector<double> predict(const std::vector<double>& x, std::size_t, int,
                                const NoiseSchedule&) const override {
        return {p_[0] * x[0]};
    }
    std::size_t dim() const override { return 1; }
    std::size_t num_classes() const override { return 1; }
    std::string backend() const override { return "linear-test"; }
    std::vector<double>& params() override { return p_; }
    const std::vector<double>& params() const override { return p_; }
    double loss_and_grad(const SampleBatch& xt,
                         const std::vector<std::size_t>& t,
                         const std::vector<double>& target,
                         const NoiseSchedule& s,
                         std::vector<double>& grad) const override {
        grad.assign(1, 0.0);
        double loss = 0.0;
        const double inv_n = 1.0 / static_cast<double>(xt.n);
        for (std::size_t i = 0; i < xt.n; ++i) {
            const double wt = s.weight_at(t[i]);
            const double r = p_[0] * xt.at(i, 0) - target[i];
            loss += wt * r * r * inv_n;
            grad[0] += 2.0 * wt * r * xt.at(i, 0) * inv_n;
        }
        return loss;
    }

private:
    std::vector<double> p_;
};

// Negative control: forwards to a real net but scales every gradient entry.
class CorruptedNet final : public TrainableDenoiser {
public:
    explicit CorruptedNet(MlpDenoiser net) : net_(std::move(net)) {}
    std::vector<double> predict(const std::vector<double>& x, std::size_t t,
                                int c, const NoiseSchedule& s) const override {
        return net_.predict(x, t, c, s);
    }
    std::size_t dim() const override { return net_.dim(); }
    std::size_t num_classes() const override { return net_.num_classes(); }
    std::string backend() const override { return "corrupted-test"; }
    std::vector<double>& params() override { return net_.params(); }
    const std::vector<double>& params() const override { return net_.params(); }
    double loss_and_grad(const SampleBatch& xt,
                         const std::vector<std::size_t>& t,
                         const std::vector<double>& target,
                         const NoiseSchedule& s,
                         std::vector<double>& grad) const override {
        const double loss = net_.loss_and_grad(xt, t, target, s, grad);
        for (double& g : grad) g *= 1.5;
        return loss;
    }

private:
    MlpDenoiser net_;
};

SampleBatch gaussian_probe(std::size_t n, std::uint64_t seed) {
    SampleBatch b = make_batch(n, 1);
    RngStream rng = RngStream::keyed(seed, stream_id::kData, 3);
    for (std::size_t i = 0; i < n; ++i) b.at(i, 0) = rng.next_gaussian();
    return b;
}

double oracle_loss_on_batch(const AnalyticDenoiser& oracle, const TrainBatch& tb,
                            const NoiseSchedule& s) {
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(tb.xt.n);
    std::vector<double> x(1);
    for (std::size_t i = 0; i < tb.xt.n; ++i) {
        x[0] = tb.xt.at(i, 0);
        const auto eps = oracle.predict(x, tb.t[i], tb.xt.condition[i], s);
        const double r = eps[0] - tb.target[i];
        loss += s.weight_at(tb.t[i]) * r * r * inv_n;
    }
    return loss;
}

} // namespace

TEST_CASE("grad_check: linear one-parameter model is exact") {
    const NoiseSchedule s = make_linear_schedule(10, 1e-2, 2e-1);
    LinearModel model;
    const auto rep = grad_check(model, gaussian_probe(32, 1), s);
    REQUIRE(rep.max_rel_error <= 1e-9);
}

TEST_CASE("grad_check: full two-hidden-layer net at step 1e-5") {
    const NoiseSchedule s = make_linear_schedule(10, 1e-2, 2e-1);
    MlpDenoiser net(1, 2, 16, 16, 42);
    const auto rep = grad_check(net, gaussian_probe(16, 2), s, 1e-5);
    REQUIRE(rep.max_rel_error <= 1e-4);
    REQUIRE(rep.n_params == net.param_count());
}

TEST_CASE("grad_check: corrupted gradient is caught, never thrown") {
    const NoiseSchedule s = make_linear_schedule(10, 1e-2, 2e-1);
    CorruptedNet bad(MlpDenoiser(1, 1, 8, 8, 7));
    const auto rep = grad_check(bad, gaussian_probe(16, 3), s, 1e-5);
    REQUIRE(rep.max_rel_error > 1e-2);
}

TEST_CASE("train: zero steps returns init unchanged with empty curve") {
    const NoiseSchedule s = make_linear_schedule(10, 1e-2, 2e-1);
    const GaussianMixtureSpec data = gaussian_spec(0.0, 1.0);
    auto init = std::make_shared<MlpDenoiser>(1, 1, 8, 8, 5);
    const auto before = init->params();
    auto [net, curve] = train_denoiser(
        data, s, make_train_config(0, 16, 1e-2, DriftConfig{}, 1), init);
    REQUIRE(curve.empty());
    REQUIRE(net->params() == before);
}

TEST_CASE("train: deterministic given the seed") {
    const NoiseSchedule s = make_linear_schedule(10, 1e-2, 2e-1);
    const GaussianMixtureSpec data = gaussian_spec(0.0, 1.0);
    const TrainConfig cfg = make_train_config(200, 16, 1e-2, DriftConfig{}, 9);
    auto [a, ca] = train_denoiser(data, s, cfg);
    auto [b, cb] = train_denoiser(data, s, cfg);
    REQUIRE(a->params() == b->params());
    REQUIRE(ca == cb);
}

TEST_CASE("train: divergence raises a numeric failure") {
    const NoiseSchedule s = make_linear_schedule(10, 1e-2, 2e-1);
    const GaussianMixtureSpec data = gaussian_spec(0.0, 1.0);
    REQUIRE_THROWS_AS(
        train_denoiser(data, s, make_train_config(2000, 16, 1e4, DriftConfig{}, 1)),
        NumericFailure);
}

TEST_CASE("train: final loss approaches the analytic oracle's loss") {
    const NoiseSchedule s = make_linear_schedule(10, 1e-2, 2e-1);
    const GaussianMixtureSpec data = gaussian_spec(0.0, 1.0);
    const TrainConfig cfg = make_train_config(5000, 64, 2e-2, DriftConfig{}, 13);
    auto [net, curve] = train_denoiser(data, s, cfg);
    const AnalyticDenoiser oracle(data);

    // the oracle's expected loss on the same batches lower-bounds what the
    // net can reach; compare averages over the last 500 training batches
    double net_loss = 0.0, oracle_loss = 0.0;
    const std::size_t window = 500;
    for (std::size_t step = cfg.steps - window; step < cfg.steps; ++step) {
        const TrainBatch tb = draw_train_batch(data, s, cfg.drift,
                                               cfg.batch_size, cfg.seed, step);
        net_loss += curve[step];
        oracle_loss += oracle_loss_on_batch(oracle, tb, s);
    }
    net_loss /= window;
    oracle_loss /= window;
    REQUIRE(net_loss <= 1.10 * oracle_loss);
    REQUIRE(net_loss >= 0.80 * oracle_loss);
}

TEST_CASE("train: smoothed loss trends downward") {
    const NoiseSchedule s = make_linear_schedule(10, 1e-2, 2e-1);
    const GaussianMixtureSpec data = gaussian_spec(0.5, 1.0);
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        const TrainConfig cfg = make_train_config(2000, 64, 1e-2, DriftConfig{}, seed);
        auto [net, curve] = train_denoiser(data, s, cfg);
        auto window_mean = [&](std::size_t lo) {
            return std::accumulate(curve.begin() + lo, curve.begin() + lo + 100,
                                   0.0) /
                   100.0;
        };
        // minibatch noise allows small upticks between adjacent windows, but
        // no window may regress past the starting loss and the final window
        // must improve on it
        const double first = window_mean(0);
        double prev = first;
        double last = first;
        for (std::size_t lo = 100; lo + 100 <= curve.size(); lo += 100) {
            const double cur = window_mean(lo);
            REQUIRE(cur <= prev + 0.05);
            REQUIRE(cur <= first + 0.05);
            prev = cur;
            last = cur;
        }
        REQUIRE(last < first);
    }
}

TEST_CASE("conditioning: disjoint-support classes land in their basins") {
    const NoiseSchedule s = make_linear_schedule(20, 1e-2, 1e-1);
    GaussianMixtureSpec spec;
    spec.add_component(0, 1.0, {-3.0}, {0.25});
    spec.add_component(1, 1.0, {3.0}, {0.25});
    spec.normalize();
    const AnalyticDenoiser model(spec);
    const PriorSpec prior = make_prior(0.0, 1.0, 1);
    for (int c : {0, 1}) {
        const SampleResult res =
            sample(model, s, prior, DriftConfig{}, 5000, c, 17);
        std::size_t in_basin = 0;
        for (std::size_t i = 0; i < res.batch.n; ++i) {
            const bool left = res.batch.at(i, 0) < 0.0;
            if ((c == 0) == left) ++in_basin;
        }
        REQUIRE(static_cast<double>(in_basin) / res.batch.n >= 0.99);
    }
}

TEST_CASE("trained net steers samples toward the data distribution") {
    const NoiseSchedule s = make_linear_schedule(10, 1e-2, 2e-1);
    const GaussianMixtureSpec data = gaussian_spec(0.0, 1.0);
    auto [net, curve] =
        train_denoiser(data, s, make_train_config(8000, 64, 2e-2, DriftConfig{}, 21));
    const SampleResult res =
        sample(*net, s, make_prior(0.0, 1.0, 1), DriftConfig{}, 20000, 0, 23);
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < res.batch.n; ++i) {
        s1 += res.batch.at(i, 0);
        s2 += res.batch.at(i, 0) * res.batch.at(i, 0);
    }
    const double mean = s1 / static_cast<double>(res.batch.n);
    const double var = s2 / static_cast<double>(res.batch.n) - mean * mean;
    REQUIRE(std::abs(mean) < 0.07);
    REQUIRE_THAT(var, Catch::Matchers::WithinAbs(1.0, 0.12));
}
