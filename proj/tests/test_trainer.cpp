#include "fdrl/config.hpp"
#include "fdrl/evaluation.hpp"
#include "fdrl/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

namespace {

using namespace fdrl;

TrainConfig small_config(BregmanObjective obj = BregmanObjective::LR, FDivergence div = FDivergence::KL) {
    TrainConfig c;
    c.objective = obj;
    c.flow = FlowConfig{div, 0.05, 0.01, 5, 0, false, 1.0};
    c.batch_size = 32;
    c.steps = 40;
    c.lr = 1e-3;
    c.lr_milestones = {30, 35};
    c.ema_decay = 0.9;
    c.log_every = 5;
    c.hidden = {16, 16};
    return c;
}

const DataSource kNearTarget = TargetSpec{GaussianTarget{Vector::Ones(2), 0.1}};
const Prior kNearSource = fixed_gaussian_prior(Vector::Zero(2), 0.1);

bool bit_equal(const Vector& a, const Vector& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

TEST(TrainConfig, ValidatesFields) {
    EXPECT_NO_THROW(small_config().validate());
    auto bad = [](auto mutate) {
        TrainConfig c = small_config();
        mutate(c);
        return c;
    };
    EXPECT_THROW(bad([](TrainConfig& c) { c.steps = 0; }).validate(), ConfigError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.lr = 0; }).validate(), ConfigError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.batch_size = 0; }).validate(), ConfigError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.lr_milestones = {35, 30}; }).validate(), ConfigError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.lr_milestones = {40}; }).validate(), ConfigError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.ema_decay = 1.0; }).validate(), ConfigError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.flow.K = 0; }).validate(), ConfigError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.objective = BregmanObjective::LSIF; }).validate(), ConfigError);
    EXPECT_NO_THROW(bad([](TrainConfig& c) {
                        c.flow.K = 0;
                        c.mode = TrainMode::StaleBaseline;
                    }).validate());
}

TEST(TrainConfig, StepSchedule) {
    TrainConfig c = small_config();
    c.lr = 1e-4;
    c.lr_milestones = {800, 900};
    c.steps = 1000;
    EXPECT_DOUBLE_EQ(c.lr_at(0), 1e-4);
    EXPECT_DOUBLE_EQ(c.lr_at(799), 1e-4);
    EXPECT_DOUBLE_EQ(c.lr_at(800), 1e-4 * 0.1);
    EXPECT_DOUBLE_EQ(c.lr_at(950), 1e-4 * 0.1 * 0.1);
}

TEST(Train, SingleStepLogsOnce) {
    TrainConfig c = small_config();
    c.steps = 1;
    c.lr_milestones.clear();
    Rng rng(1);
    const TrainState st = train(c, kNearTarget, kNearSource, rng);
    ASSERT_EQ(st.log.size(), 1u);
    EXPECT_EQ(st.log[0].step, 0);
    EXPECT_EQ(st.step, 1);
    EXPECT_EQ(trajectory_of_means(st).size(), 1u);
}

TEST(Train, LogCadenceIncludesFinalStep) {
    TrainConfig c = small_config();
    c.steps = 12;
    c.lr_milestones.clear();
    Rng rng(2);
    const TrainState st = train(c, kNearTarget, kNearSource, rng);
    std::vector<int> steps;
    for (const auto& e : st.log) steps.push_back(e.step);
    EXPECT_EQ(steps, (std::vector<int>{0, 5, 10, 11}));
}

TEST(Train, BitReproducibleForFixedSeed) {
    for (auto mode : {TrainMode::FlowGuided, TrainMode::StaleBaseline}) {
        TrainConfig c = small_config();
        c.mode = mode;
        Rng a(77), b(77);
        const TrainState sa = train(c, kNearTarget, kNearSource, a);
        const TrainState sb = train(c, kNearTarget, kNearSource, b);
        EXPECT_TRUE(bit_equal(sa.model.net.parameters(), sb.model.net.parameters()));
        EXPECT_TRUE(bit_equal(sa.ema.params, sb.ema.params));
        ASSERT_EQ(sa.log.size(), sb.log.size());
        for (std::size_t i = 0; i < sa.log.size(); ++i) EXPECT_EQ(sa.log[i].loss, sb.log[i].loss);
    }
}

TEST(Train, DifferentSeedsDiffer) {
    TrainConfig c = small_config();
    Rng a(1), b(2);
    EXPECT_FALSE(bit_equal(train(c, kNearTarget, kNearSource, a).model.net.parameters(),
                           train(c, kNearTarget, kNearSource, b).model.net.parameters()));
}

TEST(Train, EmaWithZeroDecayTracksWeights) {
    TrainConfig c = small_config();
    c.ema_decay = 0.0;
    Rng rng(3);
    int checked = 0;
    (void)train(c, kNearTarget, kNearSource, rng, [&](const TrainState& st, const Matrix&) {
        EXPECT_EQ(st.ema.params, st.model.net.parameters());
        ++checked;
    });
    EXPECT_EQ(checked, c.steps);
}

TEST(Train, EmaIsConvexCombinationOfHistory) {
    TrainConfig c = small_config();
    c.ema_decay = 0.5;
    Rng rng(4);
    Vector expected;
    bool first = true;
    (void)train(c, kNearTarget, kNearSource, rng, [&](const TrainState& st, const Matrix&) {
        const Vector th = st.model.net.parameters();
        if (first) {
            // EMA starts from the initial weights, which the observer never sees; recover them.
            expected = 2.0 * st.ema.params - th;
            first = false;
        }
        expected = 0.5 * expected + 0.5 * th;
        EXPECT_LT((st.ema.params - expected).cwiseAbs().maxCoeff(), 1e-12);
    });
}

TEST(Train, ObserverSeesFlowedBatch) {
    TrainConfig c = small_config();
    Rng rng(5);
    int calls = 0;
    (void)train(c, kNearTarget, kNearSource, rng, [&](const TrainState& st, const Matrix& flowed) {
        ++calls;
        EXPECT_EQ(st.step, calls);
        EXPECT_EQ(flowed.rows(), c.batch_size);
        EXPECT_TRUE(flowed.allFinite());
    });
    EXPECT_EQ(calls, c.steps);
}

TEST(Train, StaleNearPairLossesFinite) {
    TrainConfig c = small_config(BregmanObjective::LSIF, FDivergence::PearsonChi2);
    c.mode = TrainMode::StaleBaseline;
    c.steps = 200;
    c.lr_milestones = {160, 180};
    c.log_every = 1;
    Rng rng(6);
    const TrainState st = train(c, kNearTarget, kNearSource, rng);
    ASSERT_EQ(st.log.size(), 200u);
    for (const auto& e : st.log) {
        EXPECT_TRUE(std::isfinite(e.loss));
        EXPECT_TRUE(e.flowed_mean.allFinite());
    }
    // With no flow the logged batch means are prior draws around the origin.
    EXPECT_LT(st.log.back().flowed_mean.cwiseAbs().maxCoeff(), 0.2);
}

TEST(Train, EnergyLoggingUsesSeparateStream) {
    TrainConfig c = small_config();
    Rng a(8), b(8);
    const TrainState plain = train(c, kNearTarget, kNearSource, a);
    c.energy_n = 64;
    const TrainState with_ed = train(c, kNearTarget, kNearSource, b);
    EXPECT_TRUE(bit_equal(plain.model.net.parameters(), with_ed.model.net.parameters()));
    for (const auto& e : with_ed.log) {
        ASSERT_TRUE(e.energy_distance.has_value());
        EXPECT_GE(*e.energy_distance, 0.0);
    }
}

TEST(Train, NonFiniteDataReportsStepAndHistory) {
    TrainConfig c = small_config();
    c.mode = TrainMode::StaleBaseline;
    const DataSource poisoned = Empirical{Matrix::Constant(4, 2, std::numeric_limits<double>::quiet_NaN())};
    Rng rng(9);
    try {
        (void)train(c, poisoned, kNearSource, rng);
        FAIL() << "expected NumericalError";
    } catch (const NumericalError& e) {
        ASSERT_TRUE(e.step().has_value());
        EXPECT_EQ(*e.step(), 0u);
        EXPECT_TRUE(e.history().empty());
    }
}

TEST(Train, DimensionMismatch) {
    Rng rng(0);
    EXPECT_THROW((void)train(small_config(), kNearTarget, Prior{StdGaussian{3}}, rng), ConfigError);
}

TEST(Train, EmptyLogTrajectoryIsContractError) {
    EXPECT_THROW((void)trajectory_of_means(TrainState{}), ContractError);
}

// The stale estimator targets q/p directly, so on the near pair its log-ratio output is compared
// with the closed form over the region where both densities exceed 1e-3 of their maxima.
TEST(Train, StaleLogRatioMatchesAnalyticOnOverlap) {
    TrainConfig c = small_config();
    c.mode = TrainMode::StaleBaseline;
    c.steps = 2000;
    c.batch_size = 128;
    c.lr = 1e-3;
    c.lr_milestones = {1600, 1800};
    c.ema_decay = 0.998;
    c.hidden = {64, 64, 64};
    c.log_every = 100;
    Rng rng(1);
    const TrainState st = train(c, kNearTarget, kNearSource, rng);
    const DensityRatioModel m = st.eval_model(true);
    const GaussianParams q{Vector::Zero(2), 0.1}, p{Vector::Ones(2), 0.1};
    const double cut = std::log(1e-3);
    std::vector<double> rows;
    for (double a = -1.5; a <= 2.5; a += 0.02)
        for (double b = -1.5; b <= 2.5; b += 0.02) {
            const double lq = -(a * a + b * b) / 0.2;
            const double lp = -((a - 1) * (a - 1) + (b - 1) * (b - 1)) / 0.2;
            if (lq >= cut && lp >= cut) {
                rows.push_back(a);
                rows.push_back(b);
            }
        }
    const Index n = static_cast<Index>(rows.size() / 2);
    ASSERT_GT(n, 100);
    const Matrix x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        rows.data(), n, 2);
    const Vector err = mlp_forward(m, x) - analytic_gaussian_log_ratio(q, p, x);
    const double mse = err.squaredNorm() / static_cast<double>(n);
    RecordProperty("overlap_mse", std::to_string(mse));
    EXPECT_LT(mse, 0.5);
}

}  // namespace
