#pragma once

// Feed-forward network with hand-written forward and reverse passes, Adam and
// an exponential moving average of the weights.

#include "fdrl/core.hpp"

#include <algorithm>
#include <span>
#include <string>
#include <string_view>

namespace fdrl {

enum class Activation { Softplus, LeakyRelu };

/// How the scalar network output is interpreted: r itself, or s = log r.
enum class Head { DirectRatio, LogRatio };

inline constexpr double kLeakySlope = 0.2;

inline std::string to_string(Activation a) {
    return a == Activation::Softplus ? "softplus" : "leaky_relu";
}

inline Activation parse_activation(std::string_view s) {
    if (s == "softplus") return Activation::Softplus;
    if (s == "leaky_relu") return Activation::LeakyRelu;
    throw ConfigError("unknown activation '" + std::string(s) + "' (expected softplus|leaky_relu)");
}

inline std::string to_string(Head h) { return h == Head::DirectRatio ? "direct_ratio" : "log_ratio"; }

inline Head parse_head(std::string_view s) {
    if (s == "direct_ratio") return Head::DirectRatio;
    if (s == "log_ratio") return Head::LogRatio;
    throw ConfigError("unknown head '" + std::string(s) + "' (expected direct_ratio|log_ratio)");
}

struct Layer {
    Matrix weight;  // out x in
    Vector bias;    // out
};

/// Plain MLP: affine layers with a shared nonlinearity between them, linear output layer.
class Mlp {
public:
    Mlp() = default;

    Mlp(std::vector<Layer> layers, Activation activation)
        : layers_(std::move(layers)), activation_(activation) {
        require(!layers_.empty(), "Mlp: at least one layer required");
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            require(layers_[l].weight.rows() == layers_[l].bias.size(), "Mlp: bias size mismatch");
            if (l > 0)
                require(layers_[l].weight.cols() == layers_[l - 1].weight.rows(),
                        "Mlp: consecutive layer dimensions do not match");
        }
    }

    /// He (fan-in) initialization, zero biases, deterministic in the seed.
    static Mlp he_init(std::span<const int> dims, Activation activation, std::uint64_t seed) {
        require(dims.size() >= 2, "Mlp: need at least input and output dimensions");
        Rng rng(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<Layer> layers;
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            require(dims[l] > 0 && dims[l + 1] > 0, "Mlp: layer widths must be positive");
            Layer layer{Matrix(dims[l + 1], dims[l]), Vector::Zero(dims[l + 1])};
            const double scale = std::sqrt(2.0 / dims[l]);
            for (Index k = 0; k < layer.weight.size(); ++k) layer.weight.data()[k] = scale * normal(rng);
            layers.push_back(std::move(layer));
        }
        return Mlp(std::move(layers), activation);
    }

    [[nodiscard]] Index input_dim() const { return layers_.front().weight.cols(); }
    [[nodiscard]] Index output_dim() const { return layers_.back().weight.rows(); }
    [[nodiscard]] Activation activation() const { return activation_; }
    [[nodiscard]] const std::vector<Layer>& layers() const { return layers_; }
    [[nodiscard]] std::vector<Layer>& layers() { return layers_; }

    /// Layer widths, input first.
    [[nodiscard]] std::vector<int> dims() const {
        std::vector<int> d{static_cast<int>(input_dim())};
        for (const auto& l : layers_) d.push_back(static_cast<int>(l.weight.rows()));
        return d;
    }

    [[nodiscard]] Index parameter_count() const {
        Index n = 0;
        for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
        return n;
    }

    /// Flattened parameters: per layer, weight (row-major) then bias.
    [[nodiscard]] Vector parameters() const {
        Vector out(parameter_count());
        Index k = 0;
        for (const auto& l : layers_) {
            out.segment(k, l.weight.size()) = l.weight.reshaped<Eigen::RowMajor>();
            k += l.weight.size();
            out.segment(k, l.bias.size()) = l.bias;
            k += l.bias.size();
        }
        return out;
    }

    void set_parameters(const Vector& flat) {
        require(flat.size() == parameter_count(), "Mlp: flat parameter size mismatch");
        Index k = 0;
        for (auto& l : layers_) {
            l.weight.reshaped<Eigen::RowMajor>() = flat.segment(k, l.weight.size());
            k += l.weight.size();
            l.bias = flat.segment(k, l.bias.size());
            k += l.bias.size();
        }
    }

    struct Cache {
        std::vector<Matrix> inputs;  // input to each layer
        std::vector<Matrix> slopes;  // activation derivative after each hidden layer
    };

    /// Batched forward pass; returns n x output_dim. Fills `cache` for a later backward pass.
    [[nodiscard]] Matrix forward(const Matrix& x, Cache* cache = nullptr) const {
        require(x.cols() == input_dim(), "Mlp::forward: input has " + std::to_string(x.cols()) +
                                             " columns, model expects " + std::to_string(input_dim()));
        if (cache) {
            cache->inputs.clear();
            cache->slopes.clear();
        }
        Matrix a = x;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const Layer& layer = layers_[l];
            Matrix z = a * layer.weight.transpose();
            z.rowwise() += layer.bias.transpose();
            if (cache) cache->inputs.push_back(std::move(a));
            if (l + 1 == layers_.size()) return z;
            Matrix slope(z.rows(), z.cols());
            activate(z, slope);
            if (cache) cache->slopes.push_back(std::move(slope));
            a = std::move(z);
        }
        return a;  // unreachable
    }

    struct Gradients {
        std::vector<Layer> params;
        Matrix inputs;
    };

    /// Reverse pass of sum_i <cotangent_i, output_i>. Parameter gradients are summed over the
    /// batch; input gradients are per sample. `with_params=false` skips parameter gradients.
    [[nodiscard]] Gradients backward(const Cache& cache, const Matrix& cotangent, bool with_params = true) const {
        require(cache.inputs.size() == layers_.size(), "Mlp::backward: cache does not match model");
        require(cotangent.rows() == cache.inputs.front().rows() && cotangent.cols() == output_dim(),
                "Mlp::backward: cotangent shape mismatch");
        Gradients g;
        if (with_params) g.params.resize(layers_.size());
        Matrix upstream = cotangent;
        for (std::size_t l = layers_.size(); l-- > 0;) {
            const Layer& layer = layers_[l];
            if (with_params) {
                g.params[l].weight = upstream.transpose() * cache.inputs[l];
                g.params[l].bias = upstream.colwise().sum().transpose();
            }
            Matrix down = upstream * layer.weight;
            if (l > 0) down.array() *= cache.slopes[l - 1].array();
            upstream = std::move(down);
        }
        g.inputs = std::move(upstream);
        return g;
    }

private:
    // In place: z <- act(z), slope <- act'(z).
    void activate(Matrix& z, Matrix& slope) const {
        double* zd = z.data();
        double* sd = slope.data();
        const Index n = z.size();
        if (activation_ == Activation::Softplus) {
            for (Index k = 0; k < n; ++k) {
                const double v = zd[k];
                const double e = std::exp(-std::abs(v));
                zd[k] = std::max(v, 0.0) + std::log1p(e);
                sd[k] = v >= 0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
            }
        } else {
            for (Index k = 0; k < n; ++k) {
                const bool pos = zd[k] > 0;
                sd[k] = pos ? 1.0 : kLeakySlope;
                zd[k] = pos ? zd[k] : kLeakySlope * zd[k];
            }
        }
    }

    std::vector<Layer> layers_;
    Activation activation_ = Activation::Softplus;
};

/// Scalar-output network estimating r (DirectRatio head) or log r (LogRatio head).
struct DensityRatioModel {
    Mlp net;
    Head head = Head::DirectRatio;

    DensityRatioModel() = default;
    DensityRatioModel(Mlp n, Head h) : net(std::move(n)), head(h) {
        require(net.output_dim() == 1, "DensityRatioModel: network must output one scalar per sample");
    }

    [[nodiscard]] Index input_dim() const { return net.input_dim(); }
};

inline std::vector<int> hidden_dims(int input_dim, std::span<const int> hidden, int output_dim) {
    std::vector<int> dims{input_dim};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(output_dim);
    return dims;
}

inline DensityRatioModel make_ratio_model(int input_dim, std::span<const int> hidden, Activation act, Head head,
                                          std::uint64_t seed) {
    const auto dims = hidden_dims(input_dim, hidden, 1);
    return {Mlp::he_init(dims, act, seed), head};
}

/// Raw per-sample network output (r or log r depending on the head).
inline Vector mlp_forward(const DensityRatioModel& model, const Matrix& x) {
    return model.net.forward(x).col(0);
}

struct MlpGrads {
    Vector params;  // flattened like Mlp::parameters()
    Matrix inputs;  // n x d
};

inline Vector flatten(const std::vector<Layer>& layers) {
    Index n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    Vector out(n);
    Index k = 0;
    for (const auto& l : layers) {
        out.segment(k, l.weight.size()) = l.weight.reshaped<Eigen::RowMajor>();
        k += l.weight.size();
        out.segment(k, l.bias.size()) = l.bias;
        k += l.bias.size();
    }
    return out;
}

/// Exact gradients of sum_i cotangent_i * output_i w.r.t. parameters and inputs.
inline MlpGrads mlp_grads(const DensityRatioModel& model, const Matrix& x, const Vector& cotangent) {
    require(cotangent.size() == x.rows(), "mlp_grads: cotangent length must equal batch size");
    Mlp::Cache cache;
    (void)model.net.forward(x, &cache);
    auto g = model.net.backward(cache, Matrix(cotangent), true);
    return {flatten(g.params), std::move(g.inputs)};
}

/// Forward pass plus input gradient of sum_i weight(out_i) * out_i, where the per-sample
/// weight is computed from the forward output. Skips parameter gradients.
template <class CotangentFn>
Matrix weighted_input_gradient(const DensityRatioModel& model, const Matrix& x, CotangentFn&& cotangent_of,
                               Vector* outputs = nullptr) {
    Mlp::Cache cache;
    const Matrix out = model.net.forward(x, &cache);
    Matrix cot(out.rows(), 1);
    for (Index i = 0; i < out.rows(); ++i) cot(i, 0) = cotangent_of(i, out(i, 0));
    if (outputs) *outputs = out.col(0);
    return model.net.backward(cache, cot, false).inputs;
}

struct AdamState {
    Vector m1;
    Vector m2;
    std::int64_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState zeros(Index n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
        return {Vector::Zero(n), Vector::Zero(n), 0, beta1, beta2, eps};
    }
};

/// One bias-corrected Adam update, in place.
inline void adam_step(AdamState& state, Vector& params, const Vector& grads, double lr) {
    require(params.size() == grads.size() && state.m1.size() == params.size() && state.m2.size() == params.size(),
            "adam_step: shape mismatch");
    require(lr > 0, "adam_step: learning rate must be positive");
    for (Index k = 0; k < grads.size(); ++k) {
        if (!std::isfinite(grads[k]))
            throw NumericalError("adam_step: non-finite gradient at parameter " + std::to_string(k),
                                 static_cast<std::size_t>(k));
    }
    state.t += 1;
    state.m1 = state.beta1 * state.m1 + (1 - state.beta1) * grads;
    state.m2 = state.beta2 * state.m2 + (1 - state.beta2) * grads.cwiseProduct(grads);
    const double c1 = 1 - std::pow(state.beta1, static_cast<double>(state.t));
    const double c2 = 1 - std::pow(state.beta2, static_cast<double>(state.t));
    params.array() -= lr * (state.m1.array() / c1) / ((state.m2.array() / c2).sqrt() + state.eps);
}

struct EmaParams {
    Vector params;
    double decay = 0.998;
};

inline void ema_update(EmaParams& ema, const Vector& params) {
    require(ema.params.size() == params.size(), "ema_update: shape mismatch");
    ema.params = ema.decay * ema.params + (1 - ema.decay) * params;
}

}  // namespace fdrl
