#include "fdrl/divergences.hpp"
#include "fdrl/evaluation.hpp"
#include "fdrl/priors.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

namespace {

using namespace fdrl;

Matrix pt(std::initializer_list<double> v) {
    Matrix m(1, static_cast<Index>(v.size()));
    Index j = 0;
    for (double x : v) m(0, j++) = x;
    return m;
}

// Direct O(n m) evaluation of the V-statistic with its own loops.
double energy_oracle(const Matrix& a, const Matrix& b) {
    auto mean_dist = [](const Matrix& x, const Matrix& y) {
        long double s = 0;
        for (Index i = 0; i < x.rows(); ++i)
            for (Index j = 0; j < y.rows(); ++j) s += (x.row(i) - y.row(j)).norm();
        return static_cast<double>(s / (static_cast<long double>(x.rows()) * static_cast<long double>(y.rows())));
    };
    return 2 * mean_dist(a, b) - mean_dist(a, a) - mean_dist(b, b);
}

TEST(EnergyDistance, IdenticalSetsAreZero) {
    Rng rng(1);
    const Matrix a = standard_normal(300, 2, rng);
    EXPECT_EQ(energy_distance(a, a), 0.0);
    Matrix shuffled = a.colwise().reverse();
    EXPECT_NEAR(energy_distance(a, shuffled), 0.0, 1e-12);
}

TEST(EnergyDistance, TwoPointsInOneDimension) {
    EXPECT_DOUBLE_EQ(energy_distance(pt({0}), pt({1})), 2.0);
}

TEST(EnergyDistance, MatchesOracle) {
    Rng rng(2);
    const Matrix a = standard_normal(60, 3, rng);
    const Matrix b = standard_normal(45, 3, rng).array() + 0.5;
    EXPECT_NEAR(energy_distance(a, b), energy_oracle(a, b), 1e-12);
}

TEST(EnergyDistance, SymmetricBitForBit) {
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
        const Matrix a = standard_normal(17 + t, 2, rng);
        const Matrix b = 2.0 * standard_normal(31, 2, rng);
        EXPECT_EQ(energy_distance(a, b), energy_distance(b, a));
    }
}

TEST(EnergyDistance, NonNegativeAndSeparates) {
    Rng rng(4);
    for (int t = 0; t < 20; ++t) {
        const Matrix a = standard_normal(50, 2, rng);
        const Matrix b = standard_normal(40, 2, rng);
        EXPECT_GE(energy_distance(a, b), 0.0);
    }
    const Matrix a = standard_normal(500, 2, rng);
    const Matrix far = standard_normal(500, 2, rng).array() + 3.0;
    EXPECT_GT(energy_distance(a, far), 1.0);
}

TEST(EnergyDistance, SameGaussianNoiseFloor) {
    Rng rng(5);
    const Matrix a = standard_normal(5000, 2, rng);
    const Matrix b = standard_normal(5000, 2, rng);
    EXPECT_LT(energy_distance(a, b), 0.02);
}

TEST(EnergyDistance, Contracts) {
    EXPECT_THROW((void)energy_distance(Matrix(0, 2), pt({0, 0})), ContractError);
    EXPECT_THROW((void)energy_distance(pt({0}), pt({0, 0})), ContractError);
}

TEST(GaussianLogRatio, NearPairValues) {
    const GaussianParams q{Vector::Zero(2), 0.1};
    const GaussianParams p{Vector::Ones(2), 0.1};
    EXPECT_NEAR(analytic_gaussian_log_ratio(q, p, pt({0.5, 0.5}))[0], 0.0, 1e-12);
    EXPECT_NEAR(analytic_gaussian_log_ratio(q, p, pt({0, 0}))[0], 10.0, 1e-12);
}

TEST(GaussianLogRatio, IdenticalDensitiesGiveZero) {
    const GaussianParams g{Vector::Constant(3, 0.7), 2.0};
    Rng rng(6);
    EXPECT_EQ(analytic_gaussian_log_ratio(g, g, standard_normal(20, 3, rng)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(GaussianLogRatio, AntisymmetricExactly) {
    const GaussianParams q{Vector::Zero(2), 0.1};
    const GaussianParams p{Vector::Constant(2, 6.0), 0.3};
    Rng rng(7);
    const Matrix x = 3.0 * standard_normal(50, 2, rng);
    EXPECT_EQ(analytic_gaussian_log_ratio(q, p, x), -analytic_gaussian_log_ratio(p, q, x));
}

TEST(ExactRatioDrift, KLUniformSourcePointsTowardMode) {
    const GaussianParams p{Vector::Zero(1), 1.0};
    const Matrix d = exact_ratio_drift(FDivergence::KL, UniformC{0.25}, p, pt({2.0}));
    // drift = grad f'(C/p) = -grad log p = x; the update x - eta * drift moves toward 0.
    EXPECT_DOUBLE_EQ(d(0, 0), 2.0);
}

TEST(ExactRatioDrift, ZeroAtMode) {
    const GaussianParams p{Vector::Constant(2, 1.5), 0.5};
    for (auto div : {FDivergence::KL, FDivergence::JS, FDivergence::LogD, FDivergence::PearsonChi2}) {
        const Matrix d = exact_ratio_drift(div, UniformC{0.1}, p, pt({1.5, 1.5}));
        EXPECT_EQ(d.cwiseAbs().maxCoeff(), 0.0) << to_string(div);
    }
}

TEST(ExactRatioDrift, MatchesFiniteDifferencesOfFPrime) {
    const GaussianParams p{Vector::Ones(2), 0.4};
    const GaussianParams q{Vector::Zero(2), 0.7};
    Rng rng(8);
    const Matrix x = 0.8 * standard_normal(10, 2, rng);
    for (auto div : {FDivergence::KL, FDivergence::JS, FDivergence::LogD, FDivergence::PearsonChi2}) {
        for (const AnalyticSource& src : {AnalyticSource{q}, AnalyticSource{UniformC{0.3}}}) {
            const Matrix d = exact_ratio_drift(div, src, p, x);
            for (Index i = 0; i < x.rows(); ++i)
                for (Index j = 0; j < 2; ++j) {
                    auto fprime_at = [&](double v) {
                        Matrix xi = x.row(i);
                        xi(0, j) = v;
                        double logq = std::holds_alternative<GaussianParams>(src)
                                          ? gaussian_log_density(std::get<GaussianParams>(src), xi)[0]
                                          : std::log(std::get<UniformC>(src).density);
                        return f_prime(div, std::exp(logq - gaussian_log_density(p, xi)[0]));
                    };
                    const double fd = oracle::central(fprime_at, x(i, j), 1e-6);
                    EXPECT_LT(oracle::rel_err(d(i, j), fd, 1e-7), 1e-6) << to_string(div);
                }
        }
    }
}

TEST(ExactRatioDrift, InvalidInputs) {
    const GaussianParams p{Vector::Zero(1), 1.0};
    EXPECT_THROW((void)exact_ratio_drift(FDivergence::KL, UniformC{0.0}, p, pt({1})), DomainError);
    EXPECT_THROW((void)exact_ratio_drift(FDivergence::KL, UniformC{1.0}, p, pt({1, 2})), ContractError);
}

TEST(HistogramMode, AllEqual) {
    EXPECT_DOUBLE_EQ(histogram_mode_1d(Vector::Constant(10, 0.33), 0.1), 0.35);
    EXPECT_DOUBLE_EQ(histogram_mode_1d(Vector::Constant(10, -0.33), 0.1), -0.35);
}

TEST(HistogramMode, StandardNormal) {
    Rng rng(9);
    EXPECT_LE(std::abs(histogram_mode_1d(standard_normal(100000, 1, rng).col(0), 0.1)), 0.1);
}

TEST(HistogramMode, BimodalPicksHeavierMode) {
    Rng rng(10);
    Vector x(10000);
    const Matrix z = standard_normal(10000, 1, rng);
    for (Index i = 0; i < x.size(); ++i) x[i] = (i < 7000 ? 3.0 : -3.0) + 0.2 * z(i, 0);
    EXPECT_NEAR(histogram_mode_1d(x, 0.1), 3.0, 0.1);
}

TEST(HistogramMode, TiesGoToSmallerCentre) {
    Vector x(4);
    x << 0.55, 0.56, 0.15, 0.16;
    EXPECT_DOUBLE_EQ(histogram_mode_1d(x, 0.1), 0.15);
}

TEST(NnDistance, SubsetIsZero) {
    Rng rng(11);
    const Matrix train = standard_normal(40, 2, rng);
    EXPECT_EQ(nn_distance(train.topRows(10), train).maxCoeff(), 0.0);
}

TEST(NnDistance, SingleTrainPoint) {
    Rng rng(12);
    const Matrix g = standard_normal(20, 3, rng);
    const Matrix t = pt({1, -1, 0.5});
    const Vector d = nn_distance(g, t);
    for (Index i = 0; i < g.rows(); ++i) EXPECT_DOUBLE_EQ(d[i], (g.row(i) - t.row(0)).norm());
}

TEST(Quantile, Interpolates) {
    Vector v(5);
    v << 4, 1, 3, 2, 0;
    EXPECT_DOUBLE_EQ(quantile(v, 0.5), 2.0);
    EXPECT_DOUBLE_EQ(quantile(v, 0.125), 0.5);
    EXPECT_DOUBLE_EQ(quantile(v, 1.0), 4.0);
}

}  // namespace
