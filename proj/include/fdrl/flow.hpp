#pragma once

// Euler-Maruyama simulation of the stale-estimator gradient flow
//     x_{k+1} = x_k - eta * grad_x f'(r(x_k)) + nu * xi_k,   xi_k ~ N(0, I).

#include "fdrl/core.hpp"
#include "fdrl/divergences.hpp"
#include "fdrl/nn.hpp"
#include "fdrl/priors.hpp"

#include <functional>
#include <string>

namespace fdrl {

struct FlowConfig {
    FDivergence divergence = FDivergence::PearsonChi2;
    double eta = 3.0;
    double nu = 1e-2;
    int K = 100;
    int kappa = 20;
    /// When set, nu is replaced by sqrt(2 * gamma * eta) so the recursion discretizes a Langevin SDE.
    bool langevin_consistent = false;
    double gamma = 1.0;

    void validate() const {
        if (!(eta > 0)) throw ConfigError("flow.eta: must be > 0");
        if (!(nu >= 0)) throw ConfigError("flow.nu: must be >= 0");
        if (K < 0) throw ConfigError("flow.K: must be >= 0");
        if (kappa < 0) throw ConfigError("flow.kappa: must be >= 0");
        if (langevin_consistent && !(gamma > 0)) throw ConfigError("flow.gamma: must be > 0");
    }

    [[nodiscard]] double noise_scale() const { return langevin_consistent ? std::sqrt(2.0 * gamma * eta) : nu; }
};

struct ParticleBatch {
    Matrix points;
    int steps_taken = 0;
    std::string source;
};

/// grad_x f'(r(x)) for every row of x, by the chain rule through the network.
inline Matrix drift(const DensityRatioModel& model, FDivergence div, const Matrix& x) {
    if (model.head == Head::DirectRatio && div != FDivergence::PearsonChi2)
        throw ConfigError("drift: direct-ratio head only supports pearson_chi2, got '" + to_string(div) + "'");
    if (model.head == Head::LogRatio) require_log_form(div, "drift");
    bool finite = true;
    Index bad = 0;
    Matrix g = weighted_input_gradient(model, x, [&](Index i, double out) {
        if (!std::isfinite(out) && finite) {
            finite = false;
            bad = i;
        }
        return model.head == Head::DirectRatio ? 2.0 : f_prime_dlogr(div, out);
    });
    if (!finite)
        throw NumericalError("drift: non-finite network output at particle " + std::to_string(bad),
                             static_cast<std::size_t>(bad));
    return g;
}

/// One Euler-Maruyama step. Noise is drawn in particle-major order.
inline Matrix flow_step(const Matrix& x, const Matrix& drift_vals, double eta, double nu, Rng& rng) {
    require(x.rows() == drift_vals.rows() && x.cols() == drift_vals.cols(), "flow_step: shape mismatch");
    Matrix next = x - eta * drift_vals;
    if (nu > 0) next += nu * standard_normal(x.rows(), x.cols(), rng);
    if (auto bad = first_nonfinite_row(next))
        throw NumericalError("flow_step: particle " + std::to_string(*bad) + " became non-finite",
                             static_cast<std::size_t>(*bad));
    return next;
}

/// Any callable mapping an n x d particle matrix to its n x d drift.
using DriftField = std::function<Matrix(const Matrix&)>;
/// Called after each step with (steps_taken, points).
using FlowObserver = std::function<void(int, const Matrix&)>;

/// Runs `steps` Euler-Maruyama steps under an arbitrary drift field.
template <class Field>
ParticleBatch simulate_field(Field&& field, ParticleBatch batch, int steps, double eta, double nu, Rng& rng,
                             const FlowObserver& observer = {}) {
    require(steps >= 0, "simulate: steps must be >= 0");
    for (int k = 0; k < steps; ++k) {
        try {
            Matrix d = field(batch.points);
            batch.points = flow_step(batch.points, d, eta, nu, rng);
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(e.what()) + " (flow step " + std::to_string(batch.steps_taken) + ")",
                                 e.index(), static_cast<std::size_t>(batch.steps_taken));
        }
        batch.steps_taken += 1;
        if (observer) observer(batch.steps_taken, batch.points);
    }
    return batch;
}

inline ParticleBatch simulate(const DensityRatioModel& model, ParticleBatch x0, int steps, const FlowConfig& cfg,
                              Rng& rng, const FlowObserver& observer = {}) {
    cfg.validate();
    return simulate_field([&](const Matrix& x) { return drift(model, cfg.divergence, x); }, std::move(x0), steps,
                          cfg.eta, cfg.noise_scale(), rng, observer);
}

/// Two-stage sampling: prior draws, K bridging steps, then kappa refinement steps.
inline ParticleBatch sample(const DensityRatioModel& model, const Prior& prior, const FlowConfig& cfg, Index n, Rng& rng,
                            const FlowObserver& observer = {}) {
    require(n >= 1, "sample: n must be >= 1");
    ParticleBatch x0{sample_prior(prior, n, rng), 0, prior_name(prior)};
    return simulate(model, std::move(x0), cfg.K + cfg.kappa, cfg, rng, observer);
}

}  // namespace fdrl
