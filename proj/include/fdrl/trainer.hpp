#pragma once

// Flow-guided density-ratio training: every iteration flows fresh prior draws K steps under the
// current estimator and fits the estimator to (data, flowed) with a Bregman objective.

#include "fdrl/core.hpp"
#include "fdrl/divergences.hpp"
#include "fdrl/evaluation.hpp"
#include "fdrl/flow.hpp"
#include "fdrl/nn.hpp"
#include "fdrl/priors.hpp"

#include <deque>
#include <functional>
#include <optional>
#include <utility>
#include <variant>

namespace fdrl {

enum class TrainMode { FlowGuided, StaleBaseline };

inline std::string to_string(TrainMode m) { return m == TrainMode::FlowGuided ? "flow_guided" : "stale_baseline"; }

inline TrainMode parse_mode(std::string_view s) {
    if (s == "flow_guided") return TrainMode::FlowGuided;
    if (s == "stale_baseline") return TrainMode::StaleBaseline;
    throw ConfigError("unknown train mode '" + std::string(s) + "' (expected flow_guided|stale_baseline)");
}

struct TrainConfig {
    BregmanObjective objective = BregmanObjective::LSIF;
    FlowConfig flow;
    int batch_size = 256;
    int steps = 1000;
    double lr = 1e-4;
    double lr_decay = 0.1;
    std::vector<int> lr_milestones{800, 900};
    double ema_decay = 0.998;
    TrainMode mode = TrainMode::FlowGuided;
    std::uint64_t seed = 0;
    int log_every = 10;
    /// When > 0, logged steps also record the energy distance between the flowed batch and
    /// this many fresh data draws (from a separate stream, so training draws are unaffected).
    int energy_n = 0;
    std::vector<int> hidden{128, 128, 128};
    Activation activation = Activation::Softplus;
    bool use_ema = true;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;

    void validate() const {
        pairing_check(objective, flow.divergence);
        flow.validate();
        if (steps < 1) throw ConfigError("train.steps: must be >= 1");
        if (batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
        if (!(lr > 0)) throw ConfigError("train.lr: must be > 0");
        if (!(lr_decay > 0)) throw ConfigError("train.lr_decay: must be > 0");
        for (std::size_t i = 0; i < lr_milestones.size(); ++i) {
            if (lr_milestones[i] < 0 || lr_milestones[i] >= steps)
                throw ConfigError("train.lr_milestones: each milestone must lie in [0, steps)");
            if (i > 0 && lr_milestones[i] <= lr_milestones[i - 1])
                throw ConfigError("train.lr_milestones: must be strictly increasing");
        }
        if (!(ema_decay >= 0 && ema_decay < 1)) throw ConfigError("train.ema_decay: must lie in [0, 1)");
        if (mode == TrainMode::FlowGuided && flow.K < 1)
            throw ConfigError("flow.K: flow-guided training needs at least one flow step");
        if (log_every < 1) throw ConfigError("train.log_every: must be >= 1");
        if (energy_n < 0) throw ConfigError("train.energy_n: must be >= 0");
        for (int h : hidden)
            if (h < 1) throw ConfigError("model.hidden: widths must be positive");
    }

    [[nodiscard]] double lr_at(int step) const {
        double out = lr;
        for (int m : lr_milestones)
            if (step >= m) out *= lr_decay;
        return out;
    }
};

struct LogEntry {
    int step = 0;
    double loss = 0;
    double lr = 0;
    Vector flowed_mean;
    std::optional<double> energy_distance;
};

struct TrainState {
    DensityRatioModel model;
    AdamState adam;
    EmaParams ema;
    int step = 0;
    std::vector<LogEntry> log;

    /// Model with EMA weights (or the raw weights when `use_ema` is false).
    [[nodiscard]] DensityRatioModel eval_model(bool use_ema = true) const {
        DensityRatioModel out = model;
        if (use_ema) out.net.set_parameters(ema.params);
        return out;
    }
};

/// Where data (p) samples come from: a synthetic target or a fixed dataset.
using DataSource = std::variant<TargetSpec, Empirical>;

inline Index data_dim(const DataSource& src) {
    if (const auto* t = std::get_if<TargetSpec>(&src)) return target_dim(*t);
    return std::get<Empirical>(src).points.cols();
}

inline Matrix sample_data(const DataSource& src, Index n, Rng& rng) {
    if (const auto* t = std::get_if<TargetSpec>(&src)) return sample_target(*t, n, rng);
    return sample_prior(Prior{std::get<Empirical>(src)}, n, rng);
}

/// Called after every completed iteration with the state and the flowed batch.
using TrainObserver = std::function<void(const TrainState&, const Matrix&)>;

inline TrainState init_train_state(const TrainConfig& cfg, Index dim, std::uint64_t init_seed) {
    TrainState st;
    st.model = make_ratio_model(static_cast<int>(dim), cfg.hidden, cfg.activation, head_for(cfg.objective), init_seed);
    const Index n = st.model.net.parameter_count();
    st.adam = AdamState::zeros(n, cfg.adam_beta1, cfg.adam_beta2);
    st.ema = EmaParams{st.model.net.parameters(), cfg.ema_decay};
    return st;
}

/// Runs cfg.steps training iterations. The flow is not differentiated through: flowed
/// particles enter the loss as constants.
inline TrainState train(const TrainConfig& cfg, const DataSource& data, const Prior& prior, Rng& rng,
                        const TrainObserver& observer = {}) {
    cfg.validate();
    validate(prior);
    const Index dim = data_dim(data);
    if (prior_dim(prior) != dim) throw ConfigError("prior and target dimensions differ");

    TrainState st = init_train_state(cfg, dim, rng());
    Rng eval_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::deque<double> recent;
    Vector params = st.model.net.parameters();
    const Index b = cfg.batch_size;

    for (int tau = 0; tau < cfg.steps; ++tau) {
        const Matrix x_p = sample_data(data, b, rng);
        ParticleBatch flowed{sample_prior(prior, b, rng), 0, prior_name(prior)};
        if (cfg.mode == TrainMode::FlowGuided) {
            try {
                flowed = simulate(st.model, std::move(flowed), cfg.flow.K, cfg.flow, rng);
            } catch (const NumericalError& e) {
                throw NumericalError(std::string(e.what()) + " at training step " + std::to_string(tau), e.index(),
                                     static_cast<std::size_t>(tau), {recent.begin(), recent.end()});
            }
        }

        Matrix joint(2 * b, dim);
        joint.topRows(b) = x_p;
        joint.bottomRows(b) = flowed.points;
        Mlp::Cache cache;
        const Matrix out = st.model.net.forward(joint, &cache);
        const Vector out_p = out.col(0).head(b);
        const Vector out_q = out.col(0).tail(b);

        BregmanLoss bl;
        try {
            bl = bregman_loss(cfg.objective, out_p, out_q);
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(e.what()) + " at training step " + std::to_string(tau), std::nullopt,
                                 static_cast<std::size_t>(tau), {recent.begin(), recent.end()});
        }
        recent.push_back(bl.loss);
        if (recent.size() > 20) recent.pop_front();
        if (!std::isfinite(bl.loss))
            throw NumericalError("training loss became non-finite at step " + std::to_string(tau), std::nullopt,
                                 static_cast<std::size_t>(tau), {recent.begin(), recent.end()});

        Matrix cot(2 * b, 1);
        cot.col(0).head(b) = bl.d_out_p;
        cot.col(0).tail(b) = bl.d_out_q;
        const Vector grads = flatten(st.model.net.backward(cache, cot, true).params);

        const double lr = cfg.lr_at(tau);
        try {
            adam_step(st.adam, params, grads, lr);
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(e.what()) + " at training step " + std::to_string(tau), e.index(),
                                 static_cast<std::size_t>(tau), {recent.begin(), recent.end()});
        }
        st.model.net.set_parameters(params);
        ema_update(st.ema, params);
        st.step = tau + 1;

        if (tau % cfg.log_every == 0 || tau == cfg.steps - 1) {
            LogEntry e{tau, bl.loss, lr, column_mean(flowed.points), std::nullopt};
            if (cfg.energy_n > 0)
                e.energy_distance = energy_distance(flowed.points, sample_data(data, cfg.energy_n, eval_rng));
            st.log.push_back(std::move(e));
        }
        if (observer) observer(st, flowed.points);
    }
    return st;
}

/// Logged (step, mean of the flowed batch) pairs, in training order.
inline std::vector<std::pair<int, Vector>> trajectory_of_means(const TrainState& st) {
    if (st.log.empty()) throw ContractError("trajectory_of_means: training log is empty");
    std::vector<std::pair<int, Vector>> out;
    out.reserve(st.log.size());
    for (const auto& e : st.log) out.emplace_back(e.step, e.flowed_mean);
    return out;
}

}  // namespace fdrl
