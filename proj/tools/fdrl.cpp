// fdrl: command-line driver for flow-guided density-ratio experiments.
//
// Exit status: 0 success, 1 validation error, 2 numerical failure.

#include "fdrl/config.hpp"
#include "fdrl/experiments.hpp"
#include "fdrl/io.hpp"
#include "fdrl/svg.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace fs = std::filesystem;
using namespace fdrl;
using nlohmann::json;

namespace {

struct Options {
    std::string config;
    std::string out;
    std::string ckpt;
    std::optional<std::uint64_t> seed;
    std::optional<Index> n;
    std::optional<int> K;
    std::optional<int> kappa;
    std::optional<Index> label;
    std::optional<double> phi;
    std::optional<int> k_min, k_max, k_step;
    std::vector<std::string> files;
};

enum class Stage { Train, SampleOnly };

RunConfig resolve(const Options& o, Stage stage = Stage::Train) {
    RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
    if (o.seed) {
        c.seed = *o.seed;
        c.train.seed = *o.seed;
    }
    if (o.n) c.n = *o.n;
    if (o.K) c.train.flow.K = *o.K;
    if (o.kappa) c.train.flow.kappa = *o.kappa;
    if (o.label) c.conditional.label = *o.label;
    if (o.phi) c.conditional.phi = *o.phi;
    if (o.k_min) c.sweep.k_min = *o.k_min;
    if (o.k_max) c.sweep.k_max = *o.k_max;
    if (o.k_step) c.sweep.k_step = *o.k_step;
    if (stage == Stage::SampleOnly) {
        // K = 0 is a valid sampling request; only flow-guided training needs K >= 1.
        RunConfig check = c;
        check.train.mode = TrainMode::StaleBaseline;
        check.validate();
    } else {
        c.validate();
    }
    return c;
}

/// Run directory; created only after validation has passed.
class RunDir {
public:
    RunDir(const std::string& out, const RunConfig& cfg) : root_(out.empty() ? fs::path("runs") / cfg.name : fs::path(out)) {
        fs::create_directories(root_);
        io::write_file(root_ / "resolved_config.ini", resolved_ini(cfg));
        io::write_file(root_ / "seed.txt", std::to_string(cfg.seed) + "\n");
    }
    [[nodiscard]] fs::path operator/(const std::string& name) const { return root_ / name; }
    [[nodiscard]] const fs::path& root() const { return root_; }

private:
    fs::path root_;
};

svg::Viewport viewport_for(const std::vector<const Matrix*>& sets) {
    double lo = -1, hi = 1;
    for (const Matrix* m : sets) {
        if (m->rows() == 0 || m->cols() < 2) continue;
        lo = std::min({lo, m->col(0).minCoeff(), m->col(1).minCoeff()});
        hi = std::max({hi, m->col(0).maxCoeff(), m->col(1).maxCoeff()});
    }
    const double pad = 0.05 * (hi - lo);
    return {lo - pad, hi + pad, lo - pad, hi + pad};
}

void write_scatter(const fs::path& path, const std::string& title, std::vector<svg::PointSet> sets) {
    if (sets.empty() || sets.front().points.cols() < 2) return;
    std::vector<const Matrix*> ptrs;
    for (const auto& s : sets) ptrs.push_back(&s.points);
    io::write_file(path, svg::scatter(title, sets, viewport_for(ptrs)));
}

void write_trajectory(const RunDir& dir, const std::string& stem, const TrainState& st) {
    const auto traj = trajectory_of_means(st);
    std::string csv = "step";
    const Index d = traj.front().second.size();
    for (Index j = 0; j < d; ++j) csv += ",mean_" + std::to_string(j);
    csv += '\n';
    Matrix pts(static_cast<Index>(traj.size()), d);
    for (std::size_t i = 0; i < traj.size(); ++i) {
        csv += std::to_string(traj[i].first);
        for (Index j = 0; j < d; ++j) csv += ',' + io::format_double(traj[i].second[j]);
        csv += '\n';
        pts.row(static_cast<Index>(i)) = traj[i].second.transpose();
    }
    io::write_file(dir / (stem + ".csv"), csv);
    write_scatter(dir / (stem + ".svg"), "flowed-batch mean trajectory", {{"mean", pts, ""}});
}

json log_json(const std::vector<LogEntry>& log) {
    json out = json::array();
    for (const auto& e : log) {
        json j{{"step", e.step}, {"loss", e.loss}, {"lr", e.lr}};
        j["flowed_mean"] = std::vector<double>(e.flowed_mean.begin(), e.flowed_mean.end());
        if (e.energy_distance) j["energy_distance"] = *e.energy_distance;
        out.push_back(std::move(j));
    }
    return out;
}

std::vector<double> to_std(const Vector& v) { return {v.begin(), v.end()}; }

io::Checkpoint make_checkpoint(const RunConfig& c, const TrainState& st) {
    return io::Checkpoint{st, c.train.objective, c.train.flow.divergence, c.seed};
}

DensityRatioModel load_model(const Options& o, const RunConfig& c) {
    if (o.ckpt.empty()) throw ConfigError("--ckpt: required for this subcommand");
    io::Checkpoint ck = io::load_checkpoint(o.ckpt);
    if (ck.state.model.net.input_dim() != target_dim(c.target))
        throw ConfigError("--ckpt: model input dimension does not match the configured target");
    if (ck.divergence != c.train.flow.divergence)
        throw ConfigError("--ckpt: checkpoint divergence '" + to_string(ck.divergence) +
                          "' differs from flow.divergence '" + to_string(c.train.flow.divergence) + "'");
    return ck.state.eval_model(c.train.use_ema);
}

/// Trains, writing metrics and snapshots; returns the state. Throws NumericalError on failure.
TrainState train_with_outputs(const RunConfig& c, const Prior& prior, const RunDir& dir, const std::string& stem) {
    TrainObserver obs;
    if (c.snapshot_every > 0) {
        obs = [&](const TrainState& st, const Matrix& flowed) {
            if (st.step % c.snapshot_every != 0) return;
            const std::string tag = stem + "_step" + std::to_string(st.step);
            ParticleBatch b{flowed, c.train.mode == TrainMode::FlowGuided ? c.train.flow.K : 0, prior_name(prior)};
            io::save_batch(dir / (tag + ".csv"), b, c.seed);
            write_scatter(dir / (tag + ".svg"), tag, {{"flowed", flowed, ""}});
            io::save_checkpoint(dir / (stem + "_checkpoint.json"), make_checkpoint(c, st));
        };
    }
    TrainState st = train_run(c, prior, obs);
    io::write_file(dir / (stem + "_metrics.csv"), io::metrics_to_csv(st.log));
    io::save_checkpoint(dir / (stem + "_checkpoint.json"), make_checkpoint(c, st));
    return st;
}

void write_failure(const RunDir& dir, const NumericalError& e, const std::string& status) {
    json j{{"status", status}, {"message", e.what()}, {"loss_history", e.history()}};
    if (e.step()) j["step"] = *e.step();
    if (e.index()) j["index"] = *e.index();
    io::write_file(dir / "failure_report.json", j.dump(2) + "\n");
}

// ---- subcommands ---------------------------------------------------------------

int cmd_train(const Options& o) {
    const RunConfig c = resolve(o);
    const Prior prior = build_prior(c);
    RunDir dir(o.out, c);
    TrainState st;
    try {
        st = train_with_outputs(c, prior, dir, "train");
    } catch (const NumericalError& e) {
        if (c.train.mode == TrainMode::StaleBaseline) {
            write_failure(dir, e, "diverged (expected outcome for stale_baseline)");
            std::cout << "stale_baseline training diverged (expected outcome): " << e.what() << "\n";
            return 0;
        }
        write_failure(dir, e, "numerical failure");
        throw;
    }
    Rng srng(c.seed ^ kSampleStream);
    const ParticleBatch b = sample(st.eval_model(c.train.use_ema), prior, c.train.flow, c.n, srng);
    io::save_batch(dir / "samples.csv", b, c.seed);
    const Matrix ref = reference_draws(c, c.n);
    const double ed = energy_distance(b.points, ref);
    write_scatter(dir / "samples.svg", c.name + ": samples vs target", {{"target", ref, ""}, {"samples", b.points, ""}});
    if (c.train.mode == TrainMode::FlowGuided) write_trajectory(dir, "trajectory", st);
    json m{{"status", "ok"},
           {"final_loss", st.log.back().loss},
           {"energy_distance", ed},
           {"samples_mean", to_std(column_mean(b.points))},
           {"log", log_json(st.log)}};
    io::write_file(dir / "metrics.json", m.dump(2) + "\n");
    std::cout << "trained " << st.step << " steps; energy distance of K+kappa samples: " << ed << "\n";
    return 0;
}

int cmd_sample(const Options& o) {
    const RunConfig c = resolve(o, Stage::SampleOnly);
    const Prior prior = build_prior(c);
    const DensityRatioModel model = load_model(o, c);
    RunDir dir(o.out, c);
    Rng rng(c.seed ^ kSampleStream);
    const ParticleBatch b = sample(model, prior, c.train.flow, c.n, rng);
    io::save_batch(dir / "samples.csv", b, c.seed);
    write_scatter(dir / "samples.svg", c.name + ": samples", {{"samples", b.points, ""}});
    std::cout << "wrote " << b.points.rows() << " particles after " << b.steps_taken << " steps\n";
    return 0;
}

int cmd_eval(const Options& o) {
    if (o.files.size() != 2) throw ConfigError("eval: expects exactly two particle CSV files");
    const Matrix a = io::load_particles(o.files[0]);
    const Matrix b = io::load_particles(o.files[1]);
    if (a.cols() != b.cols()) throw ConfigError("eval: the two files have different dimensions");
    const double ed = energy_distance(a, b);
    const Vector nn = nn_distance(a, b);
    json m{{"energy_distance", ed},
           {"nn_distance_quantiles",
            {{"q10", quantile(nn, 0.1)}, {"q50", quantile(nn, 0.5)}, {"q90", quantile(nn, 0.9)}}}};
    if (a.cols() == 1) m["mode"] = histogram_mode_1d(a.col(0), 0.1);
    const std::string text = m.dump(2) + "\n";
    if (!o.out.empty()) {
        fs::create_directories(o.out);
        io::write_file(fs::path(o.out) / "metrics.json", text);
    }
    std::cout << text;
    return 0;
}

int cmd_chasm(const Options& o) {
    const RunConfig c = resolve(o);
    const auto* tgt = std::get_if<GaussianTarget>(&c.target);
    if (!tgt) throw ConfigError("chasm-demo: target.kind must be gaussian");
    const Prior prior = build_prior(c);
    RunDir dir(o.out, c);
    json summary;

    const StaleOutcome stale = run_stale_baseline(c, prior);
    if (stale.diverged) {
        summary["stale"] = {{"status", "diverged (expected outcome)"}, {"message", stale.failure}};
        if (stale.failure_step) summary["stale"]["step"] = *stale.failure_step;
    } else {
        const Vector mean = column_mean(stale.particles);
        ParticleBatch b{stale.particles, c.chasm.stale_K, prior_name(prior)};
        io::save_batch(dir / "stale_particles.csv", b, c.seed);
        io::write_file(dir / "stale_metrics.csv", io::metrics_to_csv(stale.state->log));
        Rng prng(c.seed ^ kSampleStream);
        const Matrix x0 = sample_prior(prior, c.n, prng);
        write_scatter(dir / "stale_particles.svg", "stale baseline after " + std::to_string(c.chasm.stale_K) + " steps",
                      {{"prior", x0, ""}, {"target", reference_draws(c, c.n), ""}, {"flowed", stale.particles, ""}});
        summary["stale"] = {{"status", "completed"},
                            {"mean", to_std(mean)},
                            {"distance_to_target_mean", (mean - tgt->mean).norm()}};
    }

    RunConfig fc = c;
    fc.train.mode = TrainMode::FlowGuided;
    try {
        const TrainState st = train_with_outputs(fc, prior, dir, "flow");
        write_trajectory(dir, "trajectory", st);
        const Vector last = st.log.back().flowed_mean;
        summary["flow_guided"] = {{"status", "completed"},
                                  {"final_flowed_mean", to_std(last)},
                                  {"distance_to_target_mean", (last - tgt->mean).norm()}};
    } catch (const NumericalError& e) {
        write_failure(dir, e, "numerical failure in flow-guided training");
        io::write_file(dir / "summary.json", summary.dump(2) + "\n");
        throw;
    }
    io::write_file(dir / "summary.json", summary.dump(2) + "\n");
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_sweep(const Options& o) {
    const RunConfig c = resolve(o, Stage::SampleOnly);
    const Prior prior = build_prior(c);
    const DensityRatioModel model = load_model(o, c);
    RunDir dir(o.out, c);
    const auto rows = sweep_energy(model, prior, c.train.flow, reference_draws(c, c.n), c.sweep, c.n, c.seed);
    std::string csv = "total_steps,energy_distance\n";
    svg::Series s{"energy distance", {}, {}, ""};
    auto best = rows.front();
    for (const auto& [k, ed] : rows) {
        csv += std::to_string(k) + ',' + io::format_double(ed) + '\n';
        s.x.push_back(k);
        s.y.push_back(ed);
        if (ed < best.second) best = {k, ed};
    }
    io::write_file(dir / "sweep.csv", csv);
    io::write_file(dir / "sweep.svg", svg::lines("energy distance vs total flow steps", {s}));
    std::cout << csv << "minimum at " << best.first << " total steps\n";
    return 0;
}

int cmd_conditional(const Options& o) {
    const RunConfig c = resolve(o, o.ckpt.empty() ? Stage::Train : Stage::SampleOnly);
    const auto* mix = std::get_if<GaussianMixtureTarget>(&c.target);
    if (!mix) throw ConfigError("conditional: target.kind must be mixture");
    const Classifier clf = build_classifier(c);
    check_label(clf, c.conditional.label);
    const Prior prior = build_prior(c);
    if (c.train.objective != BregmanObjective::LR || c.train.flow.divergence != FDivergence::KL)
        throw ConfigError("conditional: needs train.objective = lr and flow.divergence = kl");
    RunDir dir(o.out, c);
    DensityRatioModel model;
    if (o.ckpt.empty())
        model = train_with_outputs(c, prior, dir, "train").eval_model(c.train.use_ema);
    else
        model = load_model(o, c);
    Rng rng(c.seed ^ kSampleStream);
    const ConditionalSpec spec{c.conditional.label, c.conditional.phi};
    const ParticleBatch b = conditional_sample(model, clf, spec, prior, c.train.flow, c.n, rng);
    io::save_batch(dir / "conditional_samples.csv", b, c.seed);
    const double frac = closer_fraction(b.points, mix->means, spec.label);
    write_scatter(dir / "conditional_samples.svg", "class " + std::to_string(spec.label),
                  {{"target", reference_draws(c, c.n), ""}, {"conditional", b.points, ""}});
    json m{{"label", spec.label}, {"phi", spec.phi}, {"fraction_closer_to_requested_mean", frac}};
    io::write_file(dir / "metrics.json", m.dump(2) + "\n");
    std::cout << m.dump(2) << "\n";
    return 0;
}

int cmd_translate(const Options& o) {
    const RunConfig c = resolve(o);
    if (c.prior.kind != "empirical") throw ConfigError("translate: prior.kind must be empirical");
    const Prior prior = build_prior(c);
    RunDir dir(o.out, c);
    TrainState st;
    try {
        st = train_with_outputs(c, prior, dir, "train");
    } catch (const NumericalError& e) {
        write_failure(dir, e, "numerical failure");
        throw;
    }
    const auto& src = std::get<Empirical>(prior).points;
    const Index n = std::min<Index>(c.n, src.rows());
    Rng rng(c.seed ^ kSampleStream);
    const FlowConfig& f = c.train.flow;
    ParticleBatch x0{src.topRows(n), 0, prior_name(prior)};
    const ParticleBatch out = simulate(st.eval_model(c.train.use_ema), x0, f.K + f.kappa, f, rng);
    io::save_batch(dir / "source.csv", x0, c.seed);
    io::save_batch(dir / "translated.csv", out, c.seed);
    const Matrix ref = reference_draws(c, n);
    const Vector disp = displacements(x0.points, out.points);
    const double diameter = max_cross_distance(x0.points, ref);
    json m{{"energy_distance", energy_distance(out.points, ref)},
           {"mean_displacement", disp.mean()},
           {"max_displacement", disp.maxCoeff()},
           {"inter_dataset_diameter", diameter}};
    io::write_file(dir / "metrics.json", m.dump(2) + "\n");
    write_scatter(dir / "translation.svg", "translation",
                  {{"source", x0.points, ""}, {"target", ref, ""}, {"translated", out.points, ""}});
    std::cout << m.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
    // Many short-lived batch-sized matrices per step: keep freed memory in the arena.
    mallopt(M_MMAP_THRESHOLD, 64 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 128 * 1024 * 1024);
#endif
    CLI::App app{"flow-guided density ratio learning"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "INI run configuration")->check(CLI::ExistingFile);
        sub->add_option("--out", o.out, "output directory");
        sub->add_option("--seed", o.seed, "random seed (overrides experiment.seed)");
        sub->add_option("--n", o.n, "number of particles");
        sub->add_option("--K", o.K, "bridging steps");
        sub->add_option("--kappa", o.kappa, "refinement steps");
    };
    struct Entry {
        const char* name;
        const char* help;
        int (*fn)(const Options&);
    };
    const std::vector<Entry> entries{
        {"train", "train a density-ratio estimator", cmd_train},
        {"sample", "draw particles from a checkpoint", cmd_sample},
        {"chasm-demo", "stale baseline vs flow-guided training on a Gaussian pair", cmd_chasm},
        {"sweep-k", "energy distance against total flow length", cmd_sweep},
        {"conditional", "class-conditional sampling", cmd_conditional},
        {"translate", "translate an empirical source onto the target", cmd_translate},
    };
    std::vector<std::pair<CLI::App*, int (*)(const Options&)>> subs;
    for (const auto& e : entries) {
        CLI::App* sub = app.add_subcommand(e.name, e.help);
        common(sub);
        subs.emplace_back(sub, e.fn);
    }
    for (auto& [sub, fn] : subs) {
        const std::string name = sub->get_name();
        if (name == "sample" || name == "sweep-k" || name == "conditional") sub->add_option("--ckpt", o.ckpt, "checkpoint JSON");
        if (name == "conditional") {
            sub->add_option("--class", o.label, "requested class index");
            sub->add_option("--phi", o.phi, "classifier weight");
        }
        if (name == "sweep-k") {
            sub->add_option("--k-min", o.k_min, "smallest total step count");
            sub->add_option("--k-max", o.k_max, "largest total step count");
            sub->add_option("--k-step", o.k_step, "stride");
        }
    }
    CLI::App* eval = app.add_subcommand("eval", "metrics between two particle CSV files");
    eval->add_option("files", o.files, "two particle CSV files")->expected(2)->required();
    eval->add_option("--out", o.out, "output directory");
    subs.emplace_back(eval, cmd_eval);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }
    try {
        for (auto& [sub, fn] : subs)
            if (sub->parsed()) return fn(o);
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
