#pragma once

// f-divergence derivatives and the two Bregman density-ratio objectives.

#include "fdrl/core.hpp"
#include "fdrl/nn.hpp"

#include <numbers>
#include <string>
#include <string_view>

namespace fdrl {

enum class FDivergence { PearsonChi2, KL, JS, LogD };
enum class BregmanObjective { LSIF, LR };

inline std::string to_string(FDivergence d) {
    switch (d) {
        case FDivergence::PearsonChi2: return "pearson_chi2";
        case FDivergence::KL: return "kl";
        case FDivergence::JS: return "js";
        case FDivergence::LogD: return "logd";
    }
    return "?";
}

inline std::string to_string(BregmanObjective o) { return o == BregmanObjective::LSIF ? "lsif" : "lr"; }

inline FDivergence parse_divergence(std::string_view s) {
    if (s == "pearson_chi2") return FDivergence::PearsonChi2;
    if (s == "kl") return FDivergence::KL;
    if (s == "js") return FDivergence::JS;
    if (s == "logd") return FDivergence::LogD;
    throw ConfigError("unknown divergence '" + std::string(s) + "' (expected pearson_chi2|kl|js|logd)");
}

inline BregmanObjective parse_objective(std::string_view s) {
    if (s == "lsif") return BregmanObjective::LSIF;
    if (s == "lr") return BregmanObjective::LR;
    throw ConfigError("unknown objective '" + std::string(s) + "' (expected lsif|lr)");
}

/// log(sigmoid(x)) without overflow in either tail.
inline double log_sigmoid(double x) {
    return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// f'(r) for the supported divergences.
inline double f_prime(FDivergence div, double r) {
    if (!(r > 0)) throw DomainError("f_prime: ratio must be positive, got " + std::to_string(r));
    switch (div) {
        case FDivergence::PearsonChi2: return 2.0 * (r - 1.0);
        case FDivergence::KL: return std::log(r) + 1.0;
        case FDivergence::JS: return std::log(2.0 * r / (r + 1.0));
        case FDivergence::LogD: return std::log(r + 1.0) + 1.0;
    }
    return 0.0;
}

inline void require_log_form(FDivergence div, const char* fn) {
    if (div == FDivergence::PearsonChi2)
        throw ConfigError(std::string(fn) + ": pearson_chi2 has no log-ratio form (pair it with lsif)");
}

/// f'(exp(s)) evaluated from the log-ratio s.
inline double f_prime_from_logr(FDivergence div, double s) {
    require_log_form(div, "f_prime_from_logr");
    switch (div) {
        case FDivergence::KL: return s + 1.0;
        case FDivergence::JS: return std::numbers::ln2 + log_sigmoid(s);
        case FDivergence::LogD: return -log_sigmoid(-s) + 1.0;
        default: return 0.0;
    }
}

/// d f'(exp(s)) / ds.
inline double f_prime_dlogr(FDivergence div, double s) {
    require_log_form(div, "f_prime_dlogr");
    switch (div) {
        case FDivergence::KL: return 1.0;
        case FDivergence::JS: return sigmoid(-s);
        case FDivergence::LogD: return sigmoid(s);
        default: return 0.0;
    }
}

inline Head head_for(BregmanObjective obj) {
    return obj == BregmanObjective::LSIF ? Head::DirectRatio : Head::LogRatio;
}

/// Accepts LSIF with Pearson chi^2, and LR with KL, JS or logD.
inline void pairing_check(BregmanObjective obj, FDivergence div) {
    const bool ok = obj == BregmanObjective::LSIF ? div == FDivergence::PearsonChi2 : div != FDivergence::PearsonChi2;
    if (!ok)
        throw ConfigError("invalid pairing: objective '" + to_string(obj) + "' cannot drive divergence '" +
                          to_string(div) + "'");
}

struct BregmanLoss {
    double loss = 0;
    Vector d_out_p;
    Vector d_out_q;
};

/// Monte Carlo Bregman objective on raw outputs at data samples (p) and flowed samples (q),
/// with model-independent constants dropped. Cotangents are exact partial derivatives.
///   LSIF: 1/2 mean(r_p^2) - mean(r_q)
///   LR:   -mean(LS(-s_p)) - mean(LS(s_q))
inline BregmanLoss bregman_loss(BregmanObjective obj, const Vector& out_p, const Vector& out_q) {
    if (out_p.size() == 0) throw ContractError("bregman_loss: empty data (p) batch");
    if (out_q.size() == 0) throw ContractError("bregman_loss: empty flowed (q) batch");
    if (!out_p.allFinite()) throw NumericalError("bregman_loss: non-finite model output on data (p) batch");
    if (!out_q.allFinite()) throw NumericalError("bregman_loss: non-finite model output on flowed (q) batch");

    const double np = static_cast<double>(out_p.size());
    const double nq = static_cast<double>(out_q.size());
    BregmanLoss res{0.0, Vector(out_p.size()), Vector(out_q.size())};
    if (obj == BregmanObjective::LSIF) {
        res.loss = 0.5 * out_p.squaredNorm() / np - out_q.sum() / nq;
        res.d_out_p = out_p / np;
        res.d_out_q.setConstant(-1.0 / nq);
    } else {
        double lp = 0, lq = 0;
        for (Index i = 0; i < out_p.size(); ++i) {
            lp += log_sigmoid(-out_p[i]);
            res.d_out_p[i] = sigmoid(out_p[i]) / np;
        }
        for (Index i = 0; i < out_q.size(); ++i) {
            lq += log_sigmoid(out_q[i]);
            res.d_out_q[i] = -sigmoid(-out_q[i]) / nq;
        }
        res.loss = -lp / np - lq / nq;
    }
    return res;
}

}  // namespace fdrl
