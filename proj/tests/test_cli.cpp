#include "fdrl/config.hpp"
#include "fdrl/experiments.hpp"
#include "fdrl/io.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>

#ifndef FDRL_CLI_PATH
#error "FDRL_CLI_PATH must point at the fdrl executable"
#endif

namespace {

using namespace fdrl;
namespace fs = std::filesystem;
using io::json;

const fs::path kRoot = fs::temp_directory_path() / "fdrl_cli_test";

int run(const std::string& args) {
    const std::string cmd = std::string(FDRL_CLI_PATH) + " " + args + " >" + (kRoot / "last_stdout.txt").string() +
                            " 2>" + (kRoot / "last_stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const std::string& name, const std::string& text) {
    const fs::path p = kRoot / (name + ".ini");
    io::write_file(p, text);
    return p;
}

const char* kTiny = R"([experiment]
name = tiny
seed = 11
n = 200
[target]
kind = gaussian
mean = 1,1
variance = 0.1
[prior]
kind = gaussian
mean = 0,0
variance = 0.1
[model]
hidden = 8,8
[train]
objective = lr
steps = 30
batch_size = 32
lr = 0.001
ema_decay = 0.9
log_every = 5
[flow]
divergence = kl
eta = 0.05
nu = 0.01
K = 5
kappa = 2
)";

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        fs::remove_all(kRoot);
        fs::create_directories(kRoot);
        const fs::path cfg = write_config("tiny", kTiny);
        ASSERT_EQ(run("train --config " + cfg.string() + " --out " + (kRoot / "train").string()), 0);
    }
};

TEST_F(Cli, TrainWritesRunDirectory) {
    for (const char* f : {"resolved_config.ini", "seed.txt", "samples.csv", "samples.json", "samples.svg",
                          "train_metrics.csv", "train_checkpoint.json", "metrics.json", "trajectory.csv"})
        EXPECT_TRUE(fs::exists(kRoot / "train" / f)) << f;
    EXPECT_EQ(io::read_file(kRoot / "train" / "seed.txt"), "11\n");
    const json m = json::parse(io::read_file(kRoot / "train" / "metrics.json"));
    EXPECT_EQ(m.at("status"), "ok");
    EXPECT_EQ(io::load_particles(kRoot / "train" / "samples.csv").rows(), 200);
    const json side = json::parse(io::read_file(kRoot / "train" / "samples.json"));
    EXPECT_EQ(side.at("steps_taken").get<int>(), 7);
}

TEST_F(Cli, ResolvedConfigReplaysBitForBit) {
    ASSERT_EQ(run("train --config " + (kRoot / "train" / "resolved_config.ini").string() + " --out " +
                  (kRoot / "replay").string()),
              0);
    for (const char* f : {"samples.csv", "train_checkpoint.json", "train_metrics.csv", "resolved_config.ini"})
        EXPECT_EQ(io::read_file(kRoot / "train" / f), io::read_file(kRoot / "replay" / f)) << f;
}

TEST_F(Cli, SampleWithoutFlowReturnsPriorDraws) {
    const fs::path cfg = write_config("tiny_sample", kTiny);
    ASSERT_EQ(run("sample --config " + cfg.string() + " --ckpt " + (kRoot / "train" / "train_checkpoint.json").string() +
                  " --K 0 --kappa 0 --n 150 --out " + (kRoot / "sample0").string()),
              0);
    RunConfig c = parse_run_config(kTiny);
    const Prior prior = build_prior(c);
    Rng rng(c.seed ^ kSampleStream);
    const Matrix expected = sample_prior(prior, 150, rng);
    EXPECT_EQ(io::load_particles(kRoot / "sample0" / "samples.csv"), expected);
}

TEST_F(Cli, EvalOfFileAgainstItselfIsZero) {
    const std::string f = (kRoot / "train" / "samples.csv").string();
    ASSERT_EQ(run("eval " + f + " " + f + " --out " + (kRoot / "eval").string()), 0);
    const json m = json::parse(io::read_file(kRoot / "eval" / "metrics.json"));
    EXPECT_EQ(m.at("energy_distance").get<double>(), 0.0);
    EXPECT_EQ(m.at("nn_distance_quantiles").at("q90").get<double>(), 0.0);
}

TEST_F(Cli, SweepWritesOneRowPerTotal) {
    ASSERT_EQ(run("sweep-k --config " + (kRoot / "tiny.ini").string() + " --ckpt " +
                  (kRoot / "train" / "train_checkpoint.json").string() + " --k-min 0 --k-max 15 --k-step 5 --out " +
                  (kRoot / "sweep").string()),
              0);
    const std::string csv = io::read_file(kRoot / "sweep" / "sweep.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "total_steps,energy_distance");
}

TEST_F(Cli, SeedOverrideIsRecorded) {
    ASSERT_EQ(run("sample --config " + (kRoot / "tiny.ini").string() + " --ckpt " +
                  (kRoot / "train" / "train_checkpoint.json").string() + " --seed 5 --out " +
                  (kRoot / "seeded").string()),
              0);
    EXPECT_EQ(io::read_file(kRoot / "seeded" / "seed.txt"), "5\n");
    EXPECT_NE(io::read_file(kRoot / "seeded" / "resolved_config.ini").find("seed = 5"), std::string::npos);
}

TEST_F(Cli, ValidationErrorsExitOneWithoutOutputs) {
    const fs::path bad = write_config("bad_eta", std::string(kTiny) + "[chasm]\nstale_eta = -1\n");
    EXPECT_EQ(run("train --config " + bad.string() + " --out " + (kRoot / "bad1").string()), 1);
    EXPECT_FALSE(fs::exists(kRoot / "bad1"));
    EXPECT_NE(io::read_file(kRoot / "last_stderr.txt").find("chasm.stale_eta"), std::string::npos);

    const fs::path unknown = write_config("unknown_key", std::string(kTiny) + "[sweep]\nk_max2 = 3\n");
    EXPECT_EQ(run("train --config " + unknown.string() + " --out " + (kRoot / "bad2").string()), 1);
    EXPECT_FALSE(fs::exists(kRoot / "bad2"));

    EXPECT_EQ(run("train --config " + (kRoot / "tiny.ini").string() + " --n 0 --out " + (kRoot / "bad3").string()), 1);
    EXPECT_FALSE(fs::exists(kRoot / "bad3"));

    EXPECT_EQ(run("sample --config " + (kRoot / "tiny.ini").string() + " --out " + (kRoot / "bad4").string()), 1);
    EXPECT_FALSE(fs::exists(kRoot / "bad4"));

    EXPECT_EQ(run("frobnicate"), 1);
    EXPECT_EQ(run("eval " + (kRoot / "tiny.ini").string() + " " + (kRoot / "tiny.ini").string()), 1);
}

TEST_F(Cli, NumericalFailureExitsTwoWithReport) {
    std::string text = kTiny;
    text.replace(text.find("eta = 0.05"), 10, "eta = 1e300");
    const fs::path hot = write_config("hot", text);
    EXPECT_EQ(run("train --config " + hot.string() + " --out " + (kRoot / "hot").string()), 2);
    ASSERT_TRUE(fs::exists(kRoot / "hot" / "failure_report.json"));
    const json r = json::parse(io::read_file(kRoot / "hot" / "failure_report.json"));
    EXPECT_TRUE(r.contains("step"));
    EXPECT_TRUE(r.contains("loss_history"));
}

TEST_F(Cli, OtherSubcommandsRunOnTinySettings) {
    const fs::path chasm = write_config("chasm", std::string(kTiny) + "[chasm]\nstale_steps = 20\nstale_K = 3\n");
    ASSERT_EQ(run("chasm-demo --config " + chasm.string() + " --out " + (kRoot / "chasm").string()), 0);
    const json s = json::parse(io::read_file(kRoot / "chasm" / "summary.json"));
    EXPECT_TRUE(s.contains("stale"));
    EXPECT_TRUE(s.contains("flow_guided"));

    std::string mix = kTiny;
    mix.replace(mix.find("kind = gaussian\nmean = 1,1\nvariance = 0.1"), 40,
                "kind = mixture\nmeans = -1,-1;1,1\nvariance = 0.1");
    const fs::path cond = write_config("cond", mix + "[conditional]\nlabel = 1\nphi = 0.5\n");
    ASSERT_EQ(run("conditional --config " + cond.string() + " --out " + (kRoot / "cond").string()), 0);
    const json m = json::parse(io::read_file(kRoot / "cond" / "metrics.json"));
    EXPECT_EQ(m.at("label").get<int>(), 1);
    EXPECT_GE(m.at("fraction_closer_to_requested_mean").get<double>(), 0.0);

    const fs::path tr = write_config("translate", R"([experiment]
seed = 3
n = 100
[target]
kind = swiss_roll
[source]
kind = two_moons
[prior]
kind = empirical
points = 300
[model]
hidden = 8
[train]
objective = lr
steps = 10
batch_size = 16
[flow]
divergence = kl
eta = 0.1
K = 3
)");
    ASSERT_EQ(run("translate --config " + tr.string() + " --out " + (kRoot / "translate").string()), 0);
    EXPECT_EQ(io::load_particles(kRoot / "translate" / "translated.csv").rows(), 100);
}

}  // namespace
