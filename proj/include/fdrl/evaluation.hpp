#pragma once

// Sample-quality metrics and analytic oracles for Gaussian / uniform density ratios.

#include "fdrl/core.hpp"
#include "fdrl/divergences.hpp"

#include <algorithm>
#include <map>
#include <numbers>
#include <variant>

namespace fdrl {

struct GaussianParams {
    Vector mean;
    double variance = 1.0;  // isotropic sigma^2
};

/// Constant density C on its support (treated as constant everywhere).
struct UniformC {
    double density = 1.0;
};

namespace detail {

inline double mean_pairwise_distance(const Matrix& a, const Matrix& b) {
    const Index d = a.cols();
    double total = 0;
    for (Index i = 0; i < a.rows(); ++i) {
        const double* ai = a.data() + i * d;
        double row = 0;
        for (Index j = 0; j < b.rows(); ++j) {
            const double* bj = b.data() + j * d;
            double sq = 0;
            for (Index k = 0; k < d; ++k) {
                const double diff = ai[k] - bj[k];
                sq += diff * diff;
            }
            row += std::sqrt(sq);
        }
        total += row;
    }
    return total / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
}

}  // namespace detail

/// V-statistic energy distance 2 E|a-b| - E|a-a'| - E|b-b'|.
inline double energy_distance(const Matrix& a, const Matrix& b) {
    require(a.rows() >= 1 && b.rows() >= 1, "energy_distance: empty sample");
    require(a.cols() == b.cols(), "energy_distance: dimension mismatch");
    // Both summation orders of the cross term, so that E(A,B) == E(B,A) bit for bit.
    const double ab = detail::mean_pairwise_distance(a, b) + detail::mean_pairwise_distance(b, a);
    const double aa = detail::mean_pairwise_distance(a, a);
    const double bb = detail::mean_pairwise_distance(b, b);
    return std::max(0.0, ab - (aa + bb));
}

inline Vector gaussian_log_density(const GaussianParams& g, const Matrix& x) {
    require(x.cols() == g.mean.size(), "gaussian_log_density: dimension mismatch");
    const double d = static_cast<double>(g.mean.size());
    const double norm = -0.5 * d * std::log(2.0 * std::numbers::pi * g.variance);
    return ((x.rowwise() - g.mean.transpose()).rowwise().squaredNorm().array() * (-0.5 / g.variance) + norm)
        .matrix();
}

/// log q(x) - log p(x) for isotropic Gaussians q and p.
inline Vector analytic_gaussian_log_ratio(const GaussianParams& q, const GaussianParams& p, const Matrix& x) {
    require(q.mean.size() == p.mean.size(), "analytic_gaussian_log_ratio: dimension mismatch");
    return gaussian_log_density(q, x) - gaussian_log_density(p, x);
}

using AnalyticSource = std::variant<GaussianParams, UniformC>;

/// grad_x f'(q(x)/p(x)) in closed form, for a Gaussian target p and a Gaussian or uniform source q.
/// With the update x - eta * drift, KL against a uniform source gives drift = -grad log p.
inline Matrix exact_ratio_drift(FDivergence div, const AnalyticSource& q, const GaussianParams& p, const Matrix& x) {
    require(x.cols() == p.mean.size(), "exact_ratio_drift: dimension mismatch");
    if (!(p.variance > 0)) throw DomainError("exact_ratio_drift: target variance must be > 0");
    // grad log r = grad log q - grad log p
    Matrix grad_logr = (x.rowwise() - p.mean.transpose()) / p.variance;
    Vector log_r = -gaussian_log_density(p, x);
    if (const auto* gq = std::get_if<GaussianParams>(&q)) {
        require(gq->mean.size() == p.mean.size(), "exact_ratio_drift: dimension mismatch");
        grad_logr -= (x.rowwise() - gq->mean.transpose()) / gq->variance;
        log_r += gaussian_log_density(*gq, x);
    } else {
        const double c = std::get<UniformC>(q).density;
        if (!(c > 0)) throw DomainError("exact_ratio_drift: uniform density must be > 0");
        log_r.array() += std::log(c);
    }
    for (Index i = 0; i < x.rows(); ++i) {
        const double factor =
            div == FDivergence::PearsonChi2 ? 2.0 * std::exp(log_r[i]) : f_prime_dlogr(div, log_r[i]);
        grad_logr.row(i) *= factor;
    }
    return grad_logr;
}

/// Centre of the most populated bin (bins are [k w, (k+1) w)); ties go to the smaller centre.
inline double histogram_mode_1d(const Vector& samples, double bin_width) {
    require(samples.size() >= 1, "histogram_mode_1d: empty sample");
    require(bin_width > 0, "histogram_mode_1d: bin width must be > 0");
    std::map<long long, long long> counts;
    for (Index i = 0; i < samples.size(); ++i)
        counts[static_cast<long long>(std::floor(samples[i] / bin_width))] += 1;
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it)
        if (it->second > best->second) best = it;
    return (static_cast<double>(best->first) + 0.5) * bin_width;
}

/// Euclidean distance from each generated point to its nearest training point.
inline Vector nn_distance(const Matrix& generated, const Matrix& train) {
    require(generated.rows() >= 1 && train.rows() >= 1, "nn_distance: empty set");
    require(generated.cols() == train.cols(), "nn_distance: dimension mismatch");
    Vector out(generated.rows());
    for (Index i = 0; i < generated.rows(); ++i)
        out[i] = std::sqrt((train.rowwise() - generated.row(i)).rowwise().squaredNorm().minCoeff());
    return out;
}

/// Linear-interpolated quantile, q in [0, 1].
inline double quantile(Vector v, double q) {
    require(v.size() >= 1, "quantile: empty input");
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<Index>(std::floor(pos));
    const auto hi = std::min<Index>(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace fdrl
