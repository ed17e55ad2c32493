#pragma once

// Synthetic targets, source priors (including the data-dependent Gaussian) and their samplers.

#include "fdrl/core.hpp"

#include <numbers>
#include <string>
#include <type_traits>
#include <variant>

namespace fdrl {

// ---- targets -------------------------------------------------------------

struct GaussianTarget {
    Vector mean;
    double variance = 1.0;  // isotropic sigma^2
};

struct GaussianMixtureTarget {
    Vector weights;
    Matrix means;  // one component per row
    double variance = 1.0;
};

/// 2D projection of the scikit-learn swiss roll, rescaled so the outer radius equals `scale`.
struct SwissRoll2D {
    double noise = 0.05;
    double scale = 2.0;
};

/// Two interleaved half circles, centred on the origin.
struct TwoMoons {
    double noise = 0.05;
};

using TargetSpec = std::variant<GaussianTarget, GaussianMixtureTarget, SwissRoll2D, TwoMoons>;

inline Index target_dim(const TargetSpec& spec) {
    struct {
        Index operator()(const GaussianTarget& g) const { return g.mean.size(); }
        Index operator()(const GaussianMixtureTarget& g) const { return g.means.cols(); }
        Index operator()(const SwissRoll2D&) const { return 2; }
        Index operator()(const TwoMoons&) const { return 2; }
    } v;
    return std::visit(v, spec);
}

inline void validate(const TargetSpec& spec) {
    std::visit(
        [](const auto& t) {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, GaussianTarget>) {
                if (t.mean.size() < 1) throw ConfigError("target.mean: must have at least one coordinate");
                if (!(t.variance > 0)) throw ConfigError("target.variance: must be > 0");
            } else if constexpr (std::is_same_v<T, GaussianMixtureTarget>) {
                if (t.weights.size() < 1 || t.weights.size() != t.means.rows())
                    throw ConfigError("target.weights: need one weight per component mean");
                if ((t.weights.array() < 0).any()) throw ConfigError("target.weights: must be nonnegative");
                if (std::abs(t.weights.sum() - 1.0) > 1e-9) throw ConfigError("target.weights: must sum to 1");
                if (!(t.variance > 0)) throw ConfigError("target.variance: must be > 0");
            } else if constexpr (std::is_same_v<T, SwissRoll2D>) {
                if (!(t.noise >= 0)) throw ConfigError("target.noise: must be >= 0");
                if (!(t.scale > 0)) throw ConfigError("target.scale: must be > 0");
            } else {
                if (!(t.noise >= 0)) throw ConfigError("target.noise: must be >= 0");
            }
        },
        spec);
}

/// Draws a component index from mixture weights.
inline Index draw_component(const Vector& weights, Rng& rng) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double u = uni(rng);
    double acc = 0;
    Index last = 0;
    for (Index k = 0; k < weights.size(); ++k) {
        if (weights[k] <= 0) continue;
        last = k;
        acc += weights[k];
        if (u < acc) return k;
    }
    return last;
}

inline Matrix sample_target(const TargetSpec& spec, Index n, Rng& rng) {
    require(n >= 1, "sample_target: n must be >= 1");
    validate(spec);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const Index d = target_dim(spec);
    Matrix out(n, d);
    std::visit(
        [&](const auto& t) {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, GaussianTarget>) {
                const double sd = std::sqrt(t.variance);
                for (Index i = 0; i < n; ++i)
                    for (Index j = 0; j < d; ++j) out(i, j) = t.mean[j] + sd * normal(rng);
            } else if constexpr (std::is_same_v<T, GaussianMixtureTarget>) {
                const double sd = std::sqrt(t.variance);
                for (Index i = 0; i < n; ++i) {
                    const Index k = draw_component(t.weights, rng);
                    for (Index j = 0; j < d; ++j) out(i, j) = t.means(k, j) + sd * normal(rng);
                }
            } else if constexpr (std::is_same_v<T, SwissRoll2D>) {
                constexpr double pi = std::numbers::pi;
                for (Index i = 0; i < n; ++i) {
                    const double angle = 1.5 * pi * (1.0 + 2.0 * uni(rng));
                    const double k = t.scale / (4.5 * pi);
                    out(i, 0) = k * angle * std::cos(angle) + t.noise * normal(rng);
                    out(i, 1) = k * angle * std::sin(angle) + t.noise * normal(rng);
                }
            } else {
                constexpr double pi = std::numbers::pi;
                for (Index i = 0; i < n; ++i) {
                    const double angle = pi * uni(rng);
                    const bool upper = uni(rng) < 0.5;
                    const double x = upper ? std::cos(angle) : 1.0 - std::cos(angle);
                    const double y = upper ? std::sin(angle) : 0.5 - std::sin(angle);
                    out(i, 0) = x - 0.5 + t.noise * normal(rng);
                    out(i, 1) = y - 0.25 + t.noise * normal(rng);
                }
            }
        },
        spec);
    return out;
}

// ---- priors --------------------------------------------------------------

struct UniformBox {
    Vector low;
    Vector high;
};

struct StdGaussian {
    Index dim = 2;
};

struct DataDependentGaussian {
    Vector mean;
    Matrix covariance;  // population covariance, exactly symmetric
    Matrix chol;        // lower Cholesky factor of covariance + jitter * I
};

struct Empirical {
    Matrix points;
};

using Prior = std::variant<UniformBox, StdGaussian, DataDependentGaussian, Empirical>;

inline Index prior_dim(const Prior& prior) {
    struct {
        Index operator()(const UniformBox& p) const { return p.low.size(); }
        Index operator()(const StdGaussian& p) const { return p.dim; }
        Index operator()(const DataDependentGaussian& p) const { return p.mean.size(); }
        Index operator()(const Empirical& p) const { return p.points.cols(); }
    } v;
    return std::visit(v, prior);
}

inline std::string prior_name(const Prior& prior) {
    struct {
        std::string operator()(const UniformBox&) const { return "uniform_box"; }
        std::string operator()(const StdGaussian&) const { return "std_gaussian"; }
        std::string operator()(const DataDependentGaussian&) const { return "ddp"; }
        std::string operator()(const Empirical&) const { return "empirical"; }
    } v;
    return std::visit(v, prior);
}

inline void validate(const Prior& prior) {
    std::visit(
        [](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, UniformBox>) {
                if (p.low.size() < 1 || p.low.size() != p.high.size())
                    throw ConfigError("prior.low/prior.high: must have equal, nonzero length");
                if (!(p.low.array() < p.high.array()).all())
                    throw ConfigError("prior.low/prior.high: need low < high in every dimension");
            } else if constexpr (std::is_same_v<T, StdGaussian>) {
                if (p.dim < 1) throw ConfigError("prior.dim: must be >= 1");
            } else if constexpr (std::is_same_v<T, DataDependentGaussian>) {
                if (p.chol.rows() != p.mean.size() || p.chol.cols() != p.mean.size())
                    throw ConfigError("prior: data-dependent Gaussian factor has wrong shape");
            } else {
                if (p.points.rows() < 1) throw ConfigError("prior: empirical dataset is empty");
            }
        },
        prior);
}

/// Fits N(mean, population covariance) to `points`; stores the Cholesky factor of cov + jitter*I.
inline DataDependentGaussian fit_ddp(const Matrix& points, double jitter = 1e-6) {
    require(points.rows() >= 2, "fit_ddp: need at least two points");
    require(jitter >= 0, "fit_ddp: jitter must be >= 0");
    const Index d = points.cols();
    DataDependentGaussian g;
    g.mean = column_mean(points);
    const Matrix centered = points.rowwise() - g.mean.transpose();
    Matrix cov = (centered.transpose() * centered) / static_cast<double>(points.rows());
    g.covariance = 0.5 * (cov + cov.transpose());
    Matrix reg = g.covariance + jitter * Matrix::Identity(d, d);
    Eigen::LLT<Matrix> llt(reg);
    if (llt.info() != Eigen::Success)
        throw NumericalError("fit_ddp: Cholesky factorization failed; increase jitter (currently " +
                             std::to_string(jitter) + ")");
    g.chol = llt.matrixL();
    return g;
}

inline Matrix sample_prior(const Prior& prior, Index n, Rng& rng) {
    require(n >= 1, "sample_prior: n must be >= 1");
    validate(prior);
    const Index d = prior_dim(prior);
    return std::visit(
        [&](const auto& p) -> Matrix {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, UniformBox>) {
                std::uniform_real_distribution<double> uni(0.0, 1.0);
                Matrix out(n, d);
                for (Index i = 0; i < n; ++i)
                    for (Index j = 0; j < d; ++j) out(i, j) = p.low[j] + (p.high[j] - p.low[j]) * uni(rng);
                return out;
            } else if constexpr (std::is_same_v<T, StdGaussian>) {
                return standard_normal(n, d, rng);
            } else if constexpr (std::is_same_v<T, DataDependentGaussian>) {
                Matrix z = standard_normal(n, d, rng);
                Matrix out = z * p.chol.transpose();
                out.rowwise() += p.mean.transpose();
                return out;
            } else {
                std::uniform_int_distribution<Index> pick(0, p.points.rows() - 1);
                Matrix out(n, d);
                for (Index i = 0; i < n; ++i) out.row(i) = p.points.row(pick(rng));
                return out;
            }
        },
        prior);
}

}  // namespace fdrl
