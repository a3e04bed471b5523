#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cqrank/error.hpp"
#include "cqrank/random.hpp"

namespace cqrank::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline constexpr std::size_t kNumClasses = 2;
inline constexpr double kLogFloor = 1e-12;

enum class Mode { Train, Infer };

/// Layer widths: input -> hidden[0] -> ... -> output. Two hidden widths
/// give the default three linear layers.
struct MlpShape {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden_dims{512, 256};
    std::size_t output_dim = kNumClasses;

    std::vector<std::size_t> widths() const {
        std::vector<std::size_t> w{input_dim};
        w.insert(w.end(), hidden_dims.begin(), hidden_dims.end());
        w.push_back(output_dim);
        return w;
    }
    std::size_t layer_count() const { return hidden_dims.size() + 1; }

    bool operator==(const MlpShape&) const = default;
};

template <typename Scalar>
struct DenseLayer {
    Matrix<Scalar> weights;  // out x in
    Vector<Scalar> bias;     // out
};

/// Parameters (or gradients, or optimizer moments) laid out like a model.
template <typename Scalar>
using LayerStack = std::vector<DenseLayer<Scalar>>;

template <typename Scalar>
LayerStack<Scalar> zeros_like(const MlpShape& shape) {
    LayerStack<Scalar> stack;
    auto w = shape.widths();
    for (std::size_t l = 0; l + 1 < w.size(); ++l)
        stack.push_back({Matrix<Scalar>::Zero(w[l + 1], w[l]), Vector<Scalar>::Zero(w[l + 1])});
    return stack;
}

template <typename Scalar>
std::size_t parameter_count(const LayerStack<Scalar>& stack) {
    std::size_t n = 0;
    for (const auto& layer : stack) n += layer.weights.size() + layer.bias.size();
    return n;
}

template <typename Scalar>
bool all_finite(const LayerStack<Scalar>& stack) {
    return std::all_of(stack.begin(), stack.end(),
                       [](const auto& l) { return l.weights.allFinite() && l.bias.allFinite(); });
}

/// Feed-forward classifier: dropout then a linear map for every layer,
/// rectifier between layers, softmax over two classes at the end.
template <typename Scalar>
class MlpModel {
public:
    MlpModel() = default;

    /// Zero weights and biases.
    MlpModel(MlpShape shape, double dropout_rate)
        : shape_(std::move(shape)), dropout_rate_(dropout_rate), layers_(zeros_like<Scalar>(shape_)) {
        if (shape_.input_dim == 0 || shape_.output_dim == 0)
            throw ValidationError("model dimensions must be positive");
        for (auto h : shape_.hidden_dims)
            if (h == 0) throw ValidationError("hidden widths must be positive");
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
            throw ValidationError("dropout rate must lie in [0, 1)");
    }

    /// Uniform He initialisation, bound sqrt(6 / fan_in); zero biases.
    static MlpModel initialized(MlpShape shape, double dropout_rate, std::uint64_t seed) {
        MlpModel m(std::move(shape), dropout_rate);
        SplitMix64 gen(derive_seed(seed, {0x1417}));
        for (auto& layer : m.layers_) {
            const double bound = std::sqrt(6.0 / static_cast<double>(layer.weights.cols()));
            // Row-major fill so the draw order matches the checkpoint layout.
            for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
                for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
                    layer.weights(r, c) = static_cast<Scalar>((2.0 * uniform01(gen) - 1.0) * bound);
        }
        return m;
    }

    const MlpShape& shape() const { return shape_; }
    std::size_t input_dim() const { return shape_.input_dim; }
    double dropout_rate() const { return dropout_rate_; }
    void set_dropout_rate(double rate) {
        if (!(rate >= 0.0 && rate < 1.0)) throw ValidationError("dropout rate must lie in [0, 1)");
        dropout_rate_ = rate;
    }

    LayerStack<Scalar>& layers() { return layers_; }
    const LayerStack<Scalar>& layers() const { return layers_; }

    bool operator==(const MlpModel& o) const {
        if (shape_ != o.shape_ || dropout_rate_ != o.dropout_rate_) return false;
        for (std::size_t l = 0; l < layers_.size(); ++l)
            if (layers_[l].weights != o.layers_[l].weights || layers_[l].bias != o.layers_[l].bias) return false;
        return true;
    }

private:
    MlpShape shape_;
    double dropout_rate_ = 0.0;
    LayerStack<Scalar> layers_;
};

/// Activations kept for backprop. Columns are examples.
template <typename Scalar>
struct ForwardCache {
    struct Layer {
        Matrix<Scalar> input;  // post-dropout input to the linear map
        Matrix<Scalar> mask;   // inverted-dropout scale (0 or 1/keep); empty when no dropout
        Matrix<Scalar> pre;    // linear output before the rectifier
    };
    std::vector<Layer> layers;
    Matrix<Scalar> probs;  // classes x batch
};

/// Column-wise numerically stable softmax.
template <typename Derived>
auto softmax_columns(const Eigen::MatrixBase<Derived>& logits) {
    using Scalar = typename Derived::Scalar;
    Matrix<Scalar> out = logits;
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
        auto col = out.col(c);
        col.array() -= col.maxCoeff();
        col = col.array().exp().matrix();
        col /= col.sum();
    }
    return out;
}

template <typename Scalar>
Vector<Scalar> softmax(const Vector<Scalar>& logits) {
    if (logits.size() == 0) throw NumericError("softmax of an empty vector");
    if (!logits.allFinite()) throw NumericError("softmax input is not finite");
    return softmax_columns(logits);
}

/// -log(p[label]) with p floored at 1e-12.
template <typename Derived>
typename Derived::Scalar cross_entropy(const Eigen::MatrixBase<Derived>& probs, int label) {
    using Scalar = typename Derived::Scalar;
    if (label < 0 || label >= probs.size()) throw ValidationError("label must be 0 or 1");
    return -std::log(std::max(probs(label), static_cast<Scalar>(kLogFloor)));
}

/// Batched forward pass. `inputs` is input_dim x batch. In train mode with
/// a positive dropout rate, `rngs` supplies one generator per column; each
/// column draws its masks layer by layer so a column's masks do not depend
/// on the rest of the batch.
template <typename Scalar, typename Derived, typename Rng = SplitMix64>
ForwardCache<Scalar> forward_batch(const MlpModel<Scalar>& model, const Eigen::MatrixBase<Derived>& inputs, Mode mode,
                                   std::span<Rng> rngs = {}) {
    if (static_cast<std::size_t>(inputs.rows()) != model.input_dim())
        throw NumericError("input length " + std::to_string(inputs.rows()) + " != model input_dim " +
                           std::to_string(model.input_dim()));
    const Eigen::Index batch = inputs.cols();
    const bool dropout = mode == Mode::Train && model.dropout_rate() > 0.0;
    if (dropout && rngs.size() != static_cast<std::size_t>(batch))
        throw ValidationError("train-mode forward needs one generator per example");
    const double keep = 1.0 - model.dropout_rate();
    const Scalar scale = static_cast<Scalar>(1.0 / keep);

    ForwardCache<Scalar> cache;
    const auto& layers = model.layers();
    cache.layers.resize(layers.size());
    Matrix<Scalar> current = inputs;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto& slot = cache.layers[l];
        if (dropout) {
            slot.mask.resize(current.rows(), batch);
            for (Eigen::Index c = 0; c < batch; ++c)
                for (Eigen::Index r = 0; r < current.rows(); ++r)
                    slot.mask(r, c) = uniform01(rngs[static_cast<std::size_t>(c)]) < keep ? scale : Scalar(0);
            current.array() *= slot.mask.array();
        }
        slot.input = std::move(current);
        slot.pre = layers[l].weights * slot.input;
        slot.pre.colwise() += layers[l].bias;
        if (!slot.pre.allFinite()) throw NumericError("non-finite activation in layer " + std::to_string(l));
        current = l + 1 < layers.size() ? Matrix<Scalar>(slot.pre.cwiseMax(Scalar(0))) : slot.pre;
    }
    cache.probs = softmax_columns(current);
    return cache;
}

template <typename Scalar>
struct ForwardResult {
    Vector<Scalar> probs;
    ForwardCache<Scalar> cache;
};

/// Single-example forward pass.
template <typename Scalar, typename Derived, typename Rng = SplitMix64>
ForwardResult<Scalar> forward(const MlpModel<Scalar>& model, const Eigen::MatrixBase<Derived>& x, Mode mode,
                              Rng* rng = nullptr) {
    if (x.cols() != 1) throw NumericError("single-example forward expects a column vector");
    if (mode == Mode::Train && model.dropout_rate() > 0.0 && rng == nullptr)
        throw ValidationError("train-mode forward needs a generator");
    std::span<Rng> rngs = rng ? std::span<Rng>(rng, 1) : std::span<Rng>();
    auto cache = forward_batch(model, x, mode, rngs);
    Vector<Scalar> probs = cache.probs.col(0);
    return {std::move(probs), std::move(cache)};
}

/// Gradients of sum_j weight_j * CE_j / batch with respect to every
/// parameter. An empty `weights` means all ones, i.e. the batch-mean loss.
template <typename Scalar>
LayerStack<Scalar> backward(const MlpModel<Scalar>& model, const ForwardCache<Scalar>& cache,
                            std::span<const int> labels, std::span<const Scalar> weights = {},
                            Eigen::Index normaliser = 0) {
    const auto& layers = model.layers();
    if (cache.layers.size() != layers.size()) throw NumericError("forward cache does not match model depth");
    const Eigen::Index batch = cache.probs.cols();
    if (static_cast<Eigen::Index>(labels.size()) != batch) throw NumericError("label count != batch size");
    if (!weights.empty() && static_cast<Eigen::Index>(weights.size()) != batch)
        throw NumericError("weight count != batch size");
    const Scalar denom = static_cast<Scalar>(normaliser > 0 ? normaliser : batch);

    Matrix<Scalar> delta = cache.probs;
    for (Eigen::Index c = 0; c < batch; ++c) {
        int y = labels[static_cast<std::size_t>(c)];
        if (y < 0 || y >= delta.rows()) throw ValidationError("label must be 0 or 1");
        delta(y, c) -= Scalar(1);
        Scalar w = weights.empty() ? Scalar(1) : weights[static_cast<std::size_t>(c)];
        delta.col(c) *= w / denom;
    }

    LayerStack<Scalar> grads(layers.size());
    for (std::size_t l = layers.size(); l-- > 0;) {
        const auto& slot = cache.layers[l];
        if (slot.input.rows() != layers[l].weights.cols()) throw NumericError("forward cache shape mismatch");
        grads[l].weights.noalias() = delta * slot.input.transpose();
        grads[l].bias = delta.rowwise().sum();
        if (l == 0) break;
        Matrix<Scalar> upstream = layers[l].weights.transpose() * delta;
        if (slot.mask.size() != 0) upstream.array() *= slot.mask.array();
        const auto& prev_pre = cache.layers[l - 1].pre;
        delta = (prev_pre.array() > Scalar(0)).select(upstream, Scalar(0));
    }
    return grads;
}

/// Adam hyper-parameters and moment accumulators.
template <typename Scalar>
struct AdamState {
    LayerStack<Scalar> m;
    LayerStack<Scalar> v;
    std::uint64_t t = 0;
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState fresh(const MlpShape& shape, double learning_rate) {
        AdamState s;
        s.m = zeros_like<Scalar>(shape);
        s.v = zeros_like<Scalar>(shape);
        s.learning_rate = learning_rate;
        return s;
    }

    bool operator==(const AdamState& o) const {
        if (t != o.t || learning_rate != o.learning_rate || beta1 != o.beta1 || beta2 != o.beta2 ||
            epsilon != o.epsilon || m.size() != o.m.size())
            return false;
        for (std::size_t l = 0; l < m.size(); ++l)
            if (m[l].weights != o.m[l].weights || m[l].bias != o.m[l].bias || v[l].weights != o.v[l].weights ||
                v[l].bias != o.v[l].bias)
                return false;
        return true;
    }
};

namespace detail {

template <typename Param, typename Grad>
void adam_update(Param& theta, Param& m, Param& v, const Grad& g, double beta1, double beta2, double step,
                 double bias2, double epsilon) {
    using Scalar = typename Param::Scalar;
    m = Scalar(beta1) * m + Scalar(1 - beta1) * g;
    v = Scalar(beta2) * v + Scalar(1 - beta2) * g.cwiseAbs2();
    // theta -= lr * m_hat / (sqrt(v_hat) + eps), m_hat = m / (1 - b1^t), v_hat = v / (1 - b2^t)
    theta.array() -= Scalar(step) * m.array() / ((v.array() / Scalar(bias2)).sqrt() + Scalar(epsilon));
}

}  // namespace detail

/// One bias-corrected Adam update. Throws before touching anything if a
/// gradient is non-finite.
template <typename Scalar>
void adam_step(LayerStack<Scalar>& params, const LayerStack<Scalar>& grads, AdamState<Scalar>& state) {
    if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size())
        throw NumericError("adam: parameter/gradient/state depth mismatch");
    for (std::size_t l = 0; l < params.size(); ++l) {
        if (grads[l].weights.rows() != params[l].weights.rows() || grads[l].weights.cols() != params[l].weights.cols() ||
            grads[l].bias.size() != params[l].bias.size())
            throw NumericError("adam: gradient shape mismatch in layer " + std::to_string(l));
        if (!grads[l].weights.allFinite() || !grads[l].bias.allFinite())
            throw NumericError("adam: non-finite gradient in layer " + std::to_string(l));
    }
    state.t += 1;
    const double t = static_cast<double>(state.t);
    const double bias1 = 1.0 - std::pow(state.beta1, t);
    const double bias2 = 1.0 - std::pow(state.beta2, t);
    const double step = state.learning_rate / bias1;
    for (std::size_t l = 0; l < params.size(); ++l) {
        detail::adam_update(params[l].weights, state.m[l].weights, state.v[l].weights, grads[l].weights, state.beta1,
                            state.beta2, step, bias2, state.epsilon);
        detail::adam_update(params[l].bias, state.m[l].bias, state.v[l].bias, grads[l].bias, state.beta1, state.beta2,
                            step, bias2, state.epsilon);
    }
    if (!all_finite(params)) throw NumericError("adam: parameters became non-finite at step " + std::to_string(state.t));
}

template <typename Scalar>
void adam_step(MlpModel<Scalar>& model, const LayerStack<Scalar>& grads, AdamState<Scalar>& state) {
    adam_step(model.layers(), grads, state);
}

/// Largest |analytic - central difference| / max(|analytic|, |numeric|, 1e-8)
/// over all parameters, dropout off.
template <typename Scalar>
double grad_check(const MlpModel<Scalar>& model, const Vector<Scalar>& x, int label, double h) {
    auto loss_at = [&](const MlpModel<Scalar>& m) {
        auto cache = forward_batch(m, x, Mode::Infer);
        return static_cast<double>(cross_entropy(cache.probs.col(0), label));
    };
    auto cache = forward_batch(model, x, Mode::Infer);
    const int labels[1] = {label};
    auto analytic = backward(model, cache, std::span<const int>(labels));

    MlpModel<Scalar> probe = model;
    double worst = 0.0;
    auto check = [&](Scalar& param, Scalar grad) {
        const Scalar saved = param;
        param = saved + static_cast<Scalar>(h);
        double up = loss_at(probe);
        param = saved - static_cast<Scalar>(h);
        double down = loss_at(probe);
        param = saved;
        double numeric = (up - down) / (2.0 * h);
        double a = static_cast<double>(grad);
        double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
        worst = std::max(worst, err);
    };
    for (std::size_t l = 0; l < probe.layers().size(); ++l) {
        auto& layer = probe.layers()[l];
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) check(layer.weights(r, c), analytic[l].weights(r, c));
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) check(layer.bias(r), analytic[l].bias(r));
    }
    return worst;
}

using Mlp = MlpModel<double>;
using Adam = AdamState<double>;

}  // namespace cqrank::nn
