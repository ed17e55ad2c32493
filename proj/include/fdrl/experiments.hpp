#pragma once

// Experiment pipelines shared by the command-line tool and the acceptance tests.

#include "fdrl/conditional.hpp"
#include "fdrl/config.hpp"
#include "fdrl/evaluation.hpp"
#include "fdrl/flow.hpp"
#include "fdrl/trainer.hpp"

#include <optional>
#include <utility>

namespace fdrl {

// Stream offsets so that each stage of a run draws from its own generator.
inline constexpr std::uint64_t kSampleStream = 0x6a09e667f3bcc909ULL;
inline constexpr std::uint64_t kReferenceStream = 0xbb67ae8584caa73bULL;
inline constexpr std::uint64_t kClassifierStream = 0x3c6ef372fe94f82bULL;

inline DataSource data_source(const RunConfig& c) { return c.target; }

inline TrainState train_run(const RunConfig& c, const Prior& prior, const TrainObserver& observer = {}) {
    Rng rng(c.seed);
    return train(c.train, data_source(c), prior, rng, observer);
}

/// Fresh target draws used as the evaluation reference.
inline Matrix reference_draws(const RunConfig& c, Index n) {
    Rng rng(c.seed ^ kReferenceStream);
    return sample_target(c.target, n, rng);
}

struct StaleOutcome {
    std::optional<TrainState> state;
    bool diverged = false;
    std::string failure;
    std::optional<std::size_t> failure_step;
    std::vector<double> loss_history;
    Matrix particles;  // empty when training diverged
};

/// StaleBaseline training followed by a post-hoc flow of chasm.stale_K steps at chasm.stale_eta.
/// A numerical failure during training is an expected outcome, reported rather than thrown.
inline StaleOutcome run_stale_baseline(const RunConfig& c, const Prior& prior) {
    TrainConfig tc = c.train;
    tc.mode = TrainMode::StaleBaseline;
    tc.steps = c.chasm.stale_steps;
    tc.lr_milestones = {static_cast<int>(0.8 * tc.steps), static_cast<int>(0.9 * tc.steps)};
    StaleOutcome out;
    Rng rng(c.seed);
    try {
        out.state = train(tc, data_source(c), prior, rng);
    } catch (const NumericalError& e) {
        out.diverged = true;
        out.failure = e.what();
        out.failure_step = e.step();
        out.loss_history = e.history();
        return out;
    }
    FlowConfig fc = tc.flow;
    fc.eta = c.chasm.stale_eta;
    Rng srng(c.seed ^ kSampleStream);
    ParticleBatch x0{sample_prior(prior, c.n, srng), 0, prior_name(prior)};
    try {
        out.particles = simulate(out.state->eval_model(tc.use_ema), std::move(x0), c.chasm.stale_K, fc, srng).points;
    } catch (const NumericalError& e) {
        out.diverged = true;
        out.failure = e.what();
        out.failure_step = e.step();
    }
    return out;
}

/// Energy distance to `reference` after each total flow length in [k_min, k_max] (stride k_step).
/// Every length restarts from the same prior draws and noise stream.
inline std::vector<std::pair<int, double>> sweep_energy(const DensityRatioModel& model, const Prior& prior,
                                                         const FlowConfig& flow, const Matrix& reference,
                                                         const SweepSettings& sweep, Index n, std::uint64_t seed) {
    std::vector<std::pair<int, double>> out;
    for (int total = sweep.k_min; total <= sweep.k_max; total += sweep.k_step) {
        FlowConfig fc = flow;
        fc.K = total;
        fc.kappa = 0;
        Rng rng(seed ^ kSampleStream);
        const auto batch = sample(model, prior, fc, n, rng);
        out.emplace_back(total, energy_distance(batch.points, reference));
    }
    return out;
}

/// Fraction of rows closer (Euclidean) to means.row(label) than to every other row.
inline double closer_fraction(const Matrix& points, const Matrix& means, Index label) {
    require(label >= 0 && label < means.rows(), "closer_fraction: label out of range");
    require(points.rows() >= 1 && points.cols() == means.cols(), "closer_fraction: shape mismatch");
    Index hits = 0;
    for (Index i = 0; i < points.rows(); ++i) {
        const Vector d2 = (means.rowwise() - points.row(i)).rowwise().squaredNorm();
        Index best = 0;
        d2.minCoeff(&best);
        if (best == label) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(points.rows());
}

inline Classifier build_classifier(const RunConfig& c) {
    const auto* mix = std::get_if<GaussianMixtureTarget>(&c.target);
    if (!mix) throw ConfigError("conditional: target.kind must be mixture");
    if (c.conditional.classifier == "analytic") return AnalyticBayes{*mix};
    SoftmaxTrainConfig sc;
    sc.steps = c.conditional.classifier_steps;
    Rng rng(c.seed ^ kClassifierStream);
    return train_softmax_classifier(*mix, sc, rng);
}

/// Per-particle displacement of a translated batch from its starting points.
inline Vector displacements(const Matrix& from, const Matrix& to) {
    require(from.rows() == to.rows() && from.cols() == to.cols(), "displacements: shape mismatch");
    return (to - from).rowwise().norm();
}

/// Largest distance between a point of `a` and a point of `b`.
inline double max_cross_distance(const Matrix& a, const Matrix& b) {
    require(a.rows() >= 1 && b.rows() >= 1 && a.cols() == b.cols(), "max_cross_distance: shape mismatch");
    double best = 0;
    for (Index i = 0; i < a.rows(); ++i)
        best = std::max(best, (b.rowwise() - a.row(i)).rowwise().squaredNorm().maxCoeff());
    return std::sqrt(best);
}

}  // namespace fdrl
