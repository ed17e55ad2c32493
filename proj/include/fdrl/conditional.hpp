#pragma once

// Class-conditional sampling: a classifier posterior p(y=n|x) is a density ratio up to the
// constant N, so it composes with the unconditional log-ratio estimator inside the drift.

#include "fdrl/core.hpp"
#include "fdrl/divergences.hpp"
#include "fdrl/evaluation.hpp"
#include "fdrl/flow.hpp"
#include "fdrl/nn.hpp"
#include "fdrl/priors.hpp"

#include <limits>
#include <variant>

namespace fdrl {

/// Exact Bayes posterior of an isotropic Gaussian mixture.
struct AnalyticBayes {
    GaussianMixtureTarget mixture;
};

/// MLP with one logit per class.
struct LearnedSoftmax {
    Mlp net;
};

using Classifier = std::variant<AnalyticBayes, LearnedSoftmax>;

struct ConditionalSpec {
    Index label = 0;
    double phi = 0.1;
};

inline Index class_count(const Classifier& clf) {
    if (const auto* a = std::get_if<AnalyticBayes>(&clf)) return a->mixture.weights.size();
    return std::get<LearnedSoftmax>(clf).net.output_dim();
}

namespace detail {

/// Row-wise log-softmax of a logit matrix.
inline Matrix log_softmax(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
        out.row(i) = logits.row(i).array() - lse;
    }
    return out;
}

/// Per-component log(w_k) + log N(x; mu_k, s^2 I); -inf for zero weights.
inline Matrix mixture_joint_log(const GaussianMixtureTarget& mix, const Matrix& x) {
    Matrix out(x.rows(), mix.weights.size());
    for (Index k = 0; k < mix.weights.size(); ++k) {
        if (mix.weights[k] <= 0) {
            out.col(k).setConstant(-std::numeric_limits<double>::infinity());
            continue;
        }
        out.col(k) = gaussian_log_density(GaussianParams{mix.means.row(k).transpose(), mix.variance}, x).array() +
                     std::log(mix.weights[k]);
    }
    return out;
}

inline Matrix mixture_log_posterior(const GaussianMixtureTarget& mix, const Matrix& x) {
    return log_softmax(mixture_joint_log(mix, x));
}

}  // namespace detail

inline void check_label(const Classifier& clf, Index label) {
    if (label < 0 || label >= class_count(clf))
        throw ConfigError("class index " + std::to_string(label) + " out of range [0, " +
                          std::to_string(class_count(clf)) + ")");
}

/// log p(y = label | x) for every row of x.
inline Vector class_log_prob(const Classifier& clf, Index label, const Matrix& x) {
    check_label(clf, label);
    if (const auto* a = std::get_if<AnalyticBayes>(&clf)) {
        require(x.cols() == a->mixture.means.cols(), "class_log_prob: dimension mismatch");
        return detail::mixture_log_posterior(a->mixture, x).col(label);
    }
    const auto& net = std::get<LearnedSoftmax>(clf).net;
    return detail::log_softmax(net.forward(x)).col(label);
}

/// grad_x log p(y = label | x) for every row of x.
inline Matrix class_log_prob_grad(const Classifier& clf, Index label, const Matrix& x) {
    check_label(clf, label);
    if (const auto* a = std::get_if<AnalyticBayes>(&clf)) {
        const auto& mix = a->mixture;
        require(x.cols() == mix.means.cols(), "class_log_prob_grad: dimension mismatch");
        const Matrix post = detail::mixture_log_posterior(mix, x).array().exp().matrix();
        // grad log N_k(x) = -(x - mu_k) / s^2, so the posterior-weighted difference reduces to
        // (mu_label - sum_k post_k mu_k) / s^2.
        Matrix g = (-(post * mix.means)).rowwise() + mix.means.row(label);
        return g / mix.variance;
    }
    const auto& net = std::get<LearnedSoftmax>(clf).net;
    Mlp::Cache cache;
    const Matrix logits = net.forward(x, &cache);
    Matrix cot = -detail::log_softmax(logits).array().exp().matrix();
    cot.col(label).array() += 1.0;
    return net.backward(cache, cot, false).inputs;
}

/// Drift of the flow whose log-ratio is s(x) - phi * log p(y=n|x) (KL divergence, log-ratio head).
/// The -log N constant is dropped since its gradient vanishes.
inline Matrix conditional_drift(const DensityRatioModel& model, FDivergence div, const Classifier& clf,
                                const ConditionalSpec& spec, const Matrix& x) {
    if (model.head != Head::LogRatio)
        throw ConfigError("conditional sampling needs a log-ratio head (lr objective)");
    if (div != FDivergence::KL)
        throw ConfigError("conditional sampling is only defined for the kl divergence, got '" + to_string(div) + "'");
    if (!(spec.phi >= 0)) throw ConfigError("conditional.phi: must be >= 0");
    check_label(clf, spec.label);
    Matrix d = drift(model, div, x);
    if (spec.phi == 0) return d;
    d -= spec.phi * class_log_prob_grad(clf, spec.label, x);
    return d;
}

inline ParticleBatch conditional_sample(const DensityRatioModel& model, const Classifier& clf,
                                        const ConditionalSpec& spec, const Prior& prior, const FlowConfig& cfg,
                                        Index n, Rng& rng, const FlowObserver& observer = {}) {
    cfg.validate();
    require(n >= 1, "conditional_sample: n must be >= 1");
    ParticleBatch x0{sample_prior(prior, n, rng), 0, prior_name(prior)};
    return simulate_field([&](const Matrix& x) { return conditional_drift(model, cfg.divergence, clf, spec, x); },
                          std::move(x0), cfg.K + cfg.kappa, cfg.eta, cfg.noise_scale(), rng, observer);
}

struct SoftmaxTrainConfig {
    std::vector<int> hidden{64, 64};
    int steps = 2000;
    int batch_size = 256;
    double lr = 1e-3;
};

/// Cross-entropy training of a softmax classifier on labelled draws from a Gaussian mixture.
inline LearnedSoftmax train_softmax_classifier(const GaussianMixtureTarget& mix, const SoftmaxTrainConfig& cfg,
                                               Rng& rng) {
    validate(TargetSpec{mix});
    const Index classes = mix.weights.size();
    const Index d = mix.means.cols();
    const auto dims = hidden_dims(static_cast<int>(d), cfg.hidden, static_cast<int>(classes));
    Mlp net = Mlp::he_init(dims, Activation::Softplus, rng());
    Vector params = net.parameters();
    AdamState adam = AdamState::zeros(params.size());
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sd = std::sqrt(mix.variance);
    for (int step = 0; step < cfg.steps; ++step) {
        Matrix x(cfg.batch_size, d);
        std::vector<Index> labels(cfg.batch_size);
        for (Index i = 0; i < cfg.batch_size; ++i) {
            labels[i] = draw_component(mix.weights, rng);
            for (Index j = 0; j < d; ++j) x(i, j) = mix.means(labels[i], j) + sd * normal(rng);
        }
        Mlp::Cache cache;
        const Matrix logits = net.forward(x, &cache);
        // d(mean cross-entropy)/d logits = (softmax - onehot) / batch
        Matrix cot = detail::log_softmax(logits).array().exp().matrix();
        for (Index i = 0; i < cfg.batch_size; ++i) cot(i, labels[i]) -= 1.0;
        cot /= static_cast<double>(cfg.batch_size);
        adam_step(adam, params, flatten(net.backward(cache, cot, true).params), cfg.lr);
        net.set_parameters(params);
    }
    return LearnedSoftmax{std::move(net)};
}

}  // namespace fdrl
