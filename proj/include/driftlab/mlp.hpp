#pragma once

// Small fully connected eps-predictor: [x, sinusoidal t embedding, learned
// class embedding] -> tanh -> tanh -> linear. Handwritten backprop, checked
// against central finite differences by grad_check.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "driftlab/batch.hpp"
#include "driftlab/denoiser.hpp"
#include "driftlab/diffusion.hpp"
#include "driftlab/errors.hpp"
#include "driftlab/rng.hpp"
#include "driftlab/schedule.hpp"

namespace driftlab {

struct TrainConfig {
    std::size_t steps = 2000;
    std::size_t batch_size = 64;
    double learning_rate = 1e-2;
    double momentum = 0.9;
    DriftConfig drift;
    std::uint64_t seed = 0;
};

inline TrainConfig make_train_config(std::size_t steps, std::size_t batch_size,
                                     double learning_rate, DriftConfig drift,
                                     std::uint64_t seed) {
    require(batch_size >= 1, "train: batch_size must be >= 1");
    require(learning_rate > 0.0, "train: learning_rate must be positive");
    TrainConfig cfg;
    cfg.steps = steps;
    cfg.batch_size = batch_size;
    cfg.learning_rate = learning_rate;
    cfg.drift = drift;
    cfg.seed = seed;
    return cfg;
}

// Denoisers that expose a differentiable training loss over a flat
// parameter vector.
class TrainableDenoiser : public Denoiser {
public:
    virtual std::vector<double>& params() = 0;
    virtual const std::vector<double>& params() const = 0;

    // Mean-over-batch weighted squared error w_t * |eps_hat - target|^2,
    // with the parameter gradient accumulated into `grad`.
    virtual double loss_and_grad(const SampleBatch& xt,
                                 const std::vector<std::size_t>& t,
                                 const std::vector<double>& target,
                                 const NoiseSchedule& s,
                                 std::vector<double>& grad) const = 0;

    double loss_only(const SampleBatch& xt, const std::vector<std::size_t>& t,
                     const std::vector<double>& target,
                     const NoiseSchedule& s) const {
        std::vector<double> scratch(params().size(), 0.0);
        return loss_and_grad(xt, t, target, s, scratch);
    }
};

class MlpDenoiser final : public TrainableDenoiser {
public:
    MlpDenoiser(std::size_t dim, std::size_t num_classes, std::size_t hidden1,
                std::size_t hidden2, std::uint64_t init_seed,
                std::size_t t_emb_dim = 8, std::size_t c_emb_dim = 4)
        : dim_(dim), num_classes_(num_classes), h1_(hidden1), h2_(hidden2),
          t_emb_(t_emb_dim), c_emb_(c_emb_dim) {
        require(dim >= 1 && num_classes >= 1, "mlp: bad shape");
        require(t_emb_dim % 2 == 0, "mlp: t_emb_dim must be even");
        in_ = dim_ + t_emb_ + c_emb_;
        params_.assign(param_count(), 0.0);
        RngStream rng = RngStream::keyed(init_seed, stream_id::kTraining, 0xfeed);
        auto init_block = [&](std::size_t off, std::size_t rows, std::size_t cols) {
            const double scale = std::sqrt(2.0 / static_cast<double>(rows + cols));
            for (std::size_t i = 0; i < rows * cols; ++i)
                params_[off + i] = scale * rng.next_gaussian();
        };
        init_block(off_emb(), num_classes_, c_emb_);
        init_block(off_w1(), h1_, in_);
        init_block(off_w2(), h2_, h1_);
        init_block(off_w3(), dim_, h2_);
        // biases stay zero
    }

    std::size_t dim() const override { return dim_; }
    std::size_t num_classes() const override { return num_classes_; }
    std::string backend() const override { return "mlp"; }

    std::vector<double>& params() override { return params_; }
    const std::vector<double>& params() const override { return params_; }
    std::size_t param_count() const {
        return num_classes_ * c_emb_ + h1_ * in_ + h1_ + h2_ * h1_ + h2_ +
               dim_ * h2_ + dim_;
    }

    std::size_t hidden1() const { return h1_; }
    std::size_t hidden2() const { return h2_; }
    std::size_t t_emb_dim() const { return t_emb_; }
    std::size_t c_emb_dim() const { return c_emb_; }

    std::vector<double> predict(const std::vector<double>& x_t, std::size_t t,
                                int c, const NoiseSchedule& s) const override {
        Workspace ws(*this);
        forward(x_t.data(), t, c, s, ws);
        return std::vector<double>(ws.out.begin(), ws.out.end());
    }

    double loss_and_grad(const SampleBatch& xt,
                         const std::vector<std::size_t>& t,
                         const std::vector<double>& target,
                         const NoiseSchedule& s,
                         std::vector<double>& grad) const override {
        require(t.size() == xt.n, "mlp: t vector size mismatch");
        require(target.size() == xt.n * dim_, "mlp: target size mismatch");
        grad.assign(params_.size(), 0.0);
        Workspace ws(*this);
        double loss = 0.0;
        const double inv_n = 1.0 / static_cast<double>(xt.n);
        for (std::size_t i = 0; i < xt.n; ++i) {
            const double wt = s.weight_at(t[i]);
            forward(xt.row(i), t[i], xt.condition[i], s, ws);
            // d(loss_i)/d(out) = 2 w_t (out - target) / n
            double li = 0.0;
            for (std::size_t d = 0; d < dim_; ++d) {
                const double r = ws.out[d] - target[i * dim_ + d];
                li += r * r;
                ws.dout[d] = 2.0 * wt * r * inv_n;
            }
            loss += wt * li * inv_n;
            backward(xt.condition[i], ws, grad);
        }
        return loss;
    }

private:
    struct Workspace {
        std::vector<double> in, a1, z1, a2, z2, out;
        std::vector<double> dout, dz2, dz1, din;
        explicit Workspace(const MlpDenoiser& m)
            : in(m.in_), a1(m.h1_), z1(m.h1_), a2(m.h2_), z2(m.h2_),
              out(m.dim_), dout(m.dim_), dz2(m.h2_), dz1(m.h1_), din(m.in_) {}
    };

    std::size_t off_emb() const { return 0; }
    std::size_t off_w1() const { return off_emb() + num_classes_ * c_emb_; }
    std::size_t off_b1() const { return off_w1() + h1_ * in_; }
    std::size_t off_w2() const { return off_b1() + h1_; }
    std::size_t off_b2() const { return off_w2() + h2_ * h1_; }
    std::size_t off_w3() const { return off_b2() + h2_; }
    std::size_t off_b3() const { return off_w3() + dim_ * h2_; }

    void time_embedding(std::size_t t, const NoiseSchedule& s, double* out) const {
        const std::size_t half = t_emb_ / 2;
        const double phase = static_cast<double>(t) / static_cast<double>(s.T);
        for (std::size_t k = 0; k < half; ++k) {
            const double freq =
                std::exp(std::log(1000.0) * static_cast<double>(k) /
                         static_cast<double>(half));
            out[2 * k] = std::sin(phase * freq);
            out[2 * k + 1] = std::cos(phase * freq);
        }
    }

    void forward(const double* x, std::size_t t, int c, const NoiseSchedule& s,
                 Workspace& ws) const {
        if (c < 0 || static_cast<std::size_t>(c) >= num_classes_)
            throw std::out_of_range("mlp: class label out of range");
        for (std::size_t d = 0; d < dim_; ++d) ws.in[d] = x[d];
        time_embedding(t, s, ws.in.data() + dim_);
        const double* emb = params_.data() + off_emb() +
                            static_cast<std::size_t>(c) * c_emb_;
        for (std::size_t k = 0; k < c_emb_; ++k) ws.in[dim_ + t_emb_ + k] = emb[k];

        const double* w1 = params_.data() + off_w1();
        const double* b1 = params_.data() + off_b1();
        for (std::size_t r = 0; r < h1_; ++r) {
            double acc = b1[r];
            for (std::size_t k = 0; k < in_; ++k) acc += w1[r * in_ + k] * ws.in[k];
            ws.a1[r] = acc;
            ws.z1[r] = std::tanh(acc);
        }
        const double* w2 = params_.data() + off_w2();
        const double* b2 = params_.data() + off_b2();
        for (std::size_t r = 0; r < h2_; ++r) {
            double acc = b2[r];
            for (std::size_t k = 0; k < h1_; ++k) acc += w2[r * h1_ + k] * ws.z1[k];
            ws.a2[r] = acc;
            ws.z2[r] = std::tanh(acc);
        }
        const double* w3 = params_.data() + off_w3();
        const double* b3 = params_.data() + off_b3();
        for (std::size_t r = 0; r < dim_; ++r) {
            double acc = b3[r];
            for (std::size_t k = 0; k < h2_; ++k) acc += w3[r * h2_ + k] * ws.z2[k];
            ws.out[r] = acc;
        }
    }

    // Accumulates parameter gradients for the sample last run through
    // forward(); ws.dout must hold d(loss)/d(out).
    void backward(int c, Workspace& ws, std::vector<double>& grad) const {
        const double* w3 = params_.data() + off_w3();
        const double* w2 = params_.data() + off_w2();
        const double* w1 = params_.data() + off_w1();

        for (std::size_t r = 0; r < dim_; ++r) {
            grad[off_b3() + r] += ws.dout[r];
            for (std::size_t k = 0; k < h2_; ++k)
                grad[off_w3() + r * h2_ + k] += ws.dout[r] * ws.z2[k];
        }
        for (std::size_t k = 0; k < h2_; ++k) {
            double acc = 0.0;
            for (std::size_t r = 0; r < dim_; ++r) acc += w3[r * h2_ + k] * ws.dout[r];
            ws.dz2[k] = acc * (1.0 - ws.z2[k] * ws.z2[k]);
        }
        for (std::size_t r = 0; r < h2_; ++r) {
            grad[off_b2() + r] += ws.dz2[r];
            for (std::size_t k = 0; k < h1_; ++k)
                grad[off_w2() + r * h1_ + k] += ws.dz2[r] * ws.z1[k];
        }
        for (std::size_t k = 0; k < h1_; ++k) {
            double acc = 0.0;
            for (std::size_t r = 0; r < h2_; ++r) acc += w2[r * h1_ + k] * ws.dz2[r];
            ws.dz1[k] = acc * (1.0 - ws.z1[k] * ws.z1[k]);
        }
        for (std::size_t r = 0; r < h1_; ++r) {
            grad[off_b1() + r] += ws.dz1[r];
            for (std::size_t k = 0; k < in_; ++k)
                grad[off_w1() + r * in_ + k] += ws.dz1[r] * ws.in[k];
        }
        // class embedding receives gradient through the input slot it fills
        for (std::size_t k = 0; k < c_emb_; ++k) {
            double acc = 0.0;
            const std::size_t col = dim_ + t_emb_ + k;
            for (std::size_t r = 0; r < h1_; ++r)
                acc += w1[r * in_ + col] * ws.dz1[r];
            grad[off_emb() + static_cast<std::size_t>(c) * c_emb_ + k] += acc;
        }
    }

    std::size_t dim_, num_classes_, h1_, h2_, t_emb_, c_emb_, in_ = 0;
    std::vector<double> params_;
};

// One training minibatch: mixture draw, uniform t, closed-form noising.
struct TrainBatch {
    SampleBatch xt;
    std::vector<std::size_t> t;
    std::vector<double> target;
};

inline TrainBatch draw_train_batch(const GaussianMixtureSpec& data,
                                   const NoiseSchedule& s,
                                   const DriftConfig& drift,
                                   std::size_t batch_size, std::uint64_t seed,
                                   std::size_t step) {
    RngStream rng = RngStream::keyed(seed, stream_id::kTraining, step);
    std::vector<int> labels;
    labels.reserve(data.classes.size());
    for (const auto& [c, comps] : data.classes) labels.push_back(c);

    SampleBatch x0 = make_batch(batch_size, data.dim);
    for (std::size_t i = 0; i < batch_size; ++i) {
        const int c = labels[rng.next_below(labels.size())];
        SampleBatch one = data.draw(c, 1, rng);
        std::copy(one.row(0), one.row(0) + data.dim, x0.row(i));
        x0.condition[i] = c;
    }

    TrainBatch tb;
    tb.t.resize(batch_size);
    // a single t per minibatch row
    tb.xt = x0;
    tb.target.assign(batch_size * data.dim, 0.0);
    const double delta = drift.apply_in_training ? drift.delta : 0.0;
    for (std::size_t i = 0; i < batch_size; ++i) {
        const std::size_t t = 1 + rng.next_below(s.T);
        tb.t[i] = t;
        const double abar = s.alpha_bar_at(t);
        const double sq = std::sqrt(abar);
        const double sg = std::sqrt(1.0 - abar);
        for (std::size_t d = 0; d < data.dim; ++d) {
            const double eps = rng.next_gaussian() + delta;
            tb.target[i * data.dim + d] = eps;
            tb.xt.at(i, d) = sq * x0.at(i, d) + sg * eps;
        }
    }
    return tb;
}

// Stochastic gradient descent with momentum; deterministic given cfg.seed
// (fixed init, fixed batch order). Returns the trained net and the per-step
// loss curve.
inline std::pair<std::shared_ptr<MlpDenoiser>, std::vector<double>>
train_denoiser(const GaussianMixtureSpec& data, const NoiseSchedule& s,
               const TrainConfig& cfg,
               std::shared_ptr<const MlpDenoiser> init = nullptr) {
    require(!data.classes.empty(), "train: empty data spec");
    std::shared_ptr<MlpDenoiser> net;
    if (init) {
        require(init->dim() == data.dim, "train: init dim mismatch");
        net = std::make_shared<MlpDenoiser>(*init);
    } else {
        net = std::make_shared<MlpDenoiser>(data.dim, data.classes.size(), 32,
                                            32, cfg.seed);
    }

    std::vector<double> curve;
    curve.reserve(cfg.steps);
    std::vector<double> grad(net->param_count(), 0.0);
    std::vector<double> velocity(net->param_count(), 0.0);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        TrainBatch tb =
            draw_train_batch(data, s, cfg.drift, cfg.batch_size, cfg.seed, step);
        const double loss = net->loss_and_grad(tb.xt, tb.t, tb.target, s, grad);
        if (!std::isfinite(loss))
            throw NumericFailure("training diverged at step " +
                                 std::to_string(step));
        // linear decay keeps early progress fast while shrinking the SGD
        // stationary noise (and hence the sampler's bias) near the end;
        // floored at 10% so every step still learns
        const double lr =
            cfg.learning_rate *
            std::max(0.1, 1.0 - static_cast<double>(step) /
                                    static_cast<double>(cfg.steps));
        auto& p = net->params();
        for (std::size_t j = 0; j < p.size(); ++j) {
            velocity[j] = cfg.momentum * velocity[j] - lr * grad[j];
            p[j] += velocity[j];
        }
        curve.push_back(loss);
    }
    return {net, curve};
}

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_param = 0;
    std::size_t n_params = 0;
};

// Central-difference check of the analytic gradient on a fixed probe batch.
// Failures are reported, never thrown.
inline GradCheckReport grad_check(TrainableDenoiser& model,
                                  const SampleBatch& probe,
                                  const NoiseSchedule& s,
                                  double fd_step = 1e-5) {
    require(probe.n >= 1, "grad_check: empty probe");
    std::vector<std::size_t> t(probe.n);
    std::vector<double> target(probe.n * probe.dim);
    RngStream rng = RngStream::keyed(0xc0ffee, stream_id::kTraining, 99);
    for (std::size_t i = 0; i < probe.n; ++i) t[i] = 1 + rng.next_below(s.T);
    for (double& v : target) v = rng.next_gaussian();

    std::vector<double> analytic(model.params().size(), 0.0);
    model.loss_and_grad(probe, t, target, s, analytic);

    GradCheckReport rep;
    rep.n_params = model.params().size();
    auto& p = model.params();
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double saved = p[j];
        p[j] = saved + fd_step;
        const double lp = model.loss_only(probe, t, target, s);
        p[j] = saved - fd_step;
        const double lm = model.loss_only(probe, t, target, s);
        p[j] = saved;
        const double numeric = (lp - lm) / (2.0 * fd_step);
        const double scale = std::max(1e-8, std::abs(analytic[j]) + std::abs(numeric));
        const double rel = std::abs(analytic[j] - numeric) / scale;
        if (rel > rep.max_rel_error) {
            rep.max_rel_error = rel;
            rep.worst_param = j;
        }
    }
    return rep;
}

} // namespace driftlab
