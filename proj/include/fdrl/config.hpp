#pragma once

// INI run configuration: parsing with unknown-key rejection, construction of priors/targets,
// and a resolved (fully explicit) rendering that parses back to the same configuration.

#include "fdrl/conditional.hpp"
#include "fdrl/io.hpp"
#include "fdrl/priors.hpp"
#include "fdrl/trainer.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <map>
#include <set>
#include <sstream>

namespace fdrl {

/// How to build the source prior. `gaussian` is N(mean, variance I) stored as a fixed
/// data-dependent Gaussian; `ddp` fits one to `points` target draws; `empirical` holds
/// `points` draws of the [source] distribution.
struct PriorSpec {
    std::string kind = "std_gaussian";
    Vector low;
    Vector high;
    Vector mean;
    double variance = 1.0;
    Index points = 5000;
    double jitter = 1e-6;
};

struct ChasmSettings {
    int stale_steps = 2000;
    double stale_eta = 1e-3;
    int stale_K = 15;
};

struct ConditionalSettings {
    Index label = 0;
    double phi = 0.1;
    std::string classifier = "analytic";  // analytic | softmax
    int classifier_steps = 2000;
};

struct SweepSettings {
    int k_min = 80;
    int k_max = 140;
    int k_step = 20;
};

struct RunConfig {
    std::string name = "run";
    std::uint64_t seed = 0;
    Index n = 2000;
    int snapshot_every = 0;
    TrainConfig train;
    TargetSpec target = SwissRoll2D{};
    std::optional<TargetSpec> source;
    PriorSpec prior;
    ChasmSettings chasm;
    ConditionalSettings conditional;
    SweepSettings sweep;

    void validate() const;
};

namespace config_detail {

using boost::property_tree::ptree;

inline const std::map<std::string, std::set<std::string>>& allowed_keys() {
    static const std::map<std::string, std::set<std::string>> keys{
        {"experiment", {"name", "seed", "n", "snapshot_every"}},
        {"target", {"kind", "mean", "variance", "weights", "means", "noise", "scale"}},
        {"source", {"kind", "mean", "variance", "weights", "means", "noise", "scale"}},
        {"prior", {"kind", "low", "high", "mean", "variance", "points", "jitter"}},
        {"model", {"hidden", "activation"}},
        {"train",
         {"objective", "mode", "steps", "batch_size", "lr", "lr_decay", "lr_milestones", "ema_decay", "use_ema",
          "log_every", "energy_n", "adam_beta1", "adam_beta2"}},
        {"flow", {"divergence", "eta", "nu", "K", "kappa", "langevin_consistent", "gamma"}},
        {"chasm", {"stale_steps", "stale_eta", "stale_K"}},
        {"conditional", {"label", "phi", "classifier", "classifier_steps"}},
        {"sweep", {"k_min", "k_max", "k_step"}},
    };
    return keys;
}

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(s);
    while (std::getline(in, cell, sep)) out.push_back(trim(cell));
    return out;
}

class Reader {
public:
    explicit Reader(const ptree& root) : root_(root) {}

    [[nodiscard]] bool has_section(const std::string& s) const { return root_.get_child_optional(s).has_value(); }

    [[nodiscard]] std::optional<std::string> raw(const std::string& section, const std::string& key) const {
        auto sec = root_.get_child_optional(section);
        if (!sec) return std::nullopt;
        auto v = sec->get_optional<std::string>(key);
        if (!v) return std::nullopt;
        return trim(*v);
    }

    std::string str(const std::string& s, const std::string& k, const std::string& def) const {
        return raw(s, k).value_or(def);
    }

    double real(const std::string& s, const std::string& k, double def) const {
        auto v = raw(s, k);
        return v ? io::parse_double(*v, name(s, k)) : def;
    }

    long long integer(const std::string& s, const std::string& k, long long def) const {
        auto v = raw(s, k);
        if (!v) return def;
        long long out = 0;
        auto res = std::from_chars(v->data(), v->data() + v->size(), out);
        if (res.ec != std::errc() || res.ptr != v->data() + v->size())
            throw ConfigError(name(s, k) + ": expected an integer, got '" + *v + "'");
        return out;
    }

    std::uint64_t unsigned_integer(const std::string& s, const std::string& k, std::uint64_t def) const {
        auto v = raw(s, k);
        if (!v) return def;
        std::uint64_t out = 0;
        auto res = std::from_chars(v->data(), v->data() + v->size(), out);
        if (res.ec != std::errc() || res.ptr != v->data() + v->size())
            throw ConfigError(name(s, k) + ": expected a nonnegative integer, got '" + *v + "'");
        return out;
    }

    bool boolean(const std::string& s, const std::string& k, bool def) const {
        auto v = raw(s, k);
        if (!v) return def;
        if (*v == "true" || *v == "1") return true;
        if (*v == "false" || *v == "0") return false;
        throw ConfigError(name(s, k) + ": expected true or false, got '" + *v + "'");
    }

    Vector vec(const std::string& s, const std::string& k, const Vector& def) const {
        auto v = raw(s, k);
        if (!v) return def;
        const auto cells = split(*v, ',');
        Vector out(static_cast<Index>(cells.size()));
        for (std::size_t i = 0; i < cells.size(); ++i) out[static_cast<Index>(i)] = io::parse_double(cells[i], name(s, k));
        if (out.size() == 0) throw ConfigError(name(s, k) + ": empty list");
        return out;
    }

    std::vector<int> ints(const std::string& s, const std::string& k, const std::vector<int>& def) const {
        auto v = raw(s, k);
        if (!v) return def;
        std::vector<int> out;
        if (v->empty()) return out;
        for (const auto& c : split(*v, ',')) {
            int x = 0;
            auto res = std::from_chars(c.data(), c.data() + c.size(), x);
            if (res.ec != std::errc() || res.ptr != c.data() + c.size())
                throw ConfigError(name(s, k) + ": expected comma-separated integers, got '" + *v + "'");
            out.push_back(x);
        }
        return out;
    }

    /// Rows separated by ';', entries by ','.
    Matrix mat(const std::string& s, const std::string& k) const {
        auto v = raw(s, k);
        if (!v) throw ConfigError(name(s, k) + ": required");
        const auto rows = split(*v, ';');
        Matrix out;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const auto cells = split(rows[r], ',');
            if (r == 0) out.resize(static_cast<Index>(rows.size()), static_cast<Index>(cells.size()));
            if (static_cast<Index>(cells.size()) != out.cols())
                throw ConfigError(name(s, k) + ": rows must have equal length");
            for (std::size_t c = 0; c < cells.size(); ++c)
                out(static_cast<Index>(r), static_cast<Index>(c)) = io::parse_double(cells[c], name(s, k));
        }
        return out;
    }

    static std::string name(const std::string& s, const std::string& k) { return s + "." + k; }

private:
    const ptree& root_;
};

inline TargetSpec read_target(const Reader& r, const std::string& sec) {
    const std::string kind = r.str(sec, "kind", "swiss_roll");
    if (kind == "gaussian") {
        auto mean = r.raw(sec, "mean");
        if (!mean) throw ConfigError(sec + ".mean: required for kind = gaussian");
        return GaussianTarget{r.vec(sec, "mean", {}), r.real(sec, "variance", 1.0)};
    }
    if (kind == "mixture") {
        Matrix means = r.mat(sec, "means");
        Vector w = r.vec(sec, "weights", Vector::Constant(means.rows(), 1.0 / static_cast<double>(means.rows())));
        return GaussianMixtureTarget{w, means, r.real(sec, "variance", 1.0)};
    }
    if (kind == "swiss_roll") return SwissRoll2D{r.real(sec, "noise", 0.05), r.real(sec, "scale", 2.0)};
    if (kind == "two_moons") return TwoMoons{r.real(sec, "noise", 0.05)};
    throw ConfigError(sec + ".kind: unknown '" + kind + "' (expected gaussian|mixture|swiss_roll|two_moons)");
}

inline std::string join(const Vector& v) {
    std::string out;
    for (Index i = 0; i < v.size(); ++i) out += (i ? "," : "") + io::format_double(v[i]);
    return out;
}

inline std::string join(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

inline std::string join(const Matrix& m) {
    std::string out;
    for (Index r = 0; r < m.rows(); ++r) {
        if (r) out += ';';
        out += join(Vector(m.row(r).transpose()));
    }
    return out;
}

inline void write_target(std::ostringstream& out, const std::string& sec, const TargetSpec& t) {
    out << "[" << sec << "]\n";
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, GaussianTarget>) {
                out << "kind = gaussian\nmean = " << join(v.mean) << "\nvariance = " << io::format_double(v.variance)
                    << "\n";
            } else if constexpr (std::is_same_v<T, GaussianMixtureTarget>) {
                out << "kind = mixture\nweights = " << join(v.weights) << "\nmeans = " << join(v.means)
                    << "\nvariance = " << io::format_double(v.variance) << "\n";
            } else if constexpr (std::is_same_v<T, SwissRoll2D>) {
                out << "kind = swiss_roll\nnoise = " << io::format_double(v.noise)
                    << "\nscale = " << io::format_double(v.scale) << "\n";
            } else {
                out << "kind = two_moons\nnoise = " << io::format_double(v.noise) << "\n";
            }
        },
        t);
    out << "\n";
}

}  // namespace config_detail

inline void RunConfig::validate() const {
    train.validate();
    fdrl::validate(target);
    if (source) fdrl::validate(*source);
    if (n < 1) throw ConfigError("experiment.n: must be >= 1");
    if (snapshot_every < 0) throw ConfigError("experiment.snapshot_every: must be >= 0");
    const Index d = target_dim(target);
    const std::string& k = prior.kind;
    if (k == "uniform_box") {
        fdrl::validate(Prior{UniformBox{prior.low, prior.high}});
        if (prior.low.size() != d) throw ConfigError("prior.low: length must equal the target dimension");
    } else if (k == "gaussian") {
        if (prior.mean.size() != d) throw ConfigError("prior.mean: length must equal the target dimension");
        if (!(prior.variance > 0)) throw ConfigError("prior.variance: must be > 0");
    } else if (k == "ddp") {
        if (prior.points < 2) throw ConfigError("prior.points: must be >= 2");
        if (!(prior.jitter >= 0)) throw ConfigError("prior.jitter: must be >= 0");
    } else if (k == "empirical") {
        if (prior.points < 1) throw ConfigError("prior.points: must be >= 1");
        if (!source) throw ConfigError("prior.kind = empirical needs a [source] section");
        if (target_dim(*source) != d) throw ConfigError("source: dimension must equal the target dimension");
    } else if (k != "std_gaussian") {
        throw ConfigError("prior.kind: unknown '" + k + "' (expected std_gaussian|uniform_box|gaussian|ddp|empirical)");
    }
    if (conditional.label < 0) throw ConfigError("conditional.label: must be >= 0");
    if (!(conditional.phi >= 0)) throw ConfigError("conditional.phi: must be >= 0");
    if (conditional.classifier != "analytic" && conditional.classifier != "softmax")
        throw ConfigError("conditional.classifier: expected analytic|softmax");
    if (conditional.classifier_steps < 1) throw ConfigError("conditional.classifier_steps: must be >= 1");
    if (chasm.stale_steps < 1) throw ConfigError("chasm.stale_steps: must be >= 1");
    if (!(chasm.stale_eta > 0)) throw ConfigError("chasm.stale_eta: must be > 0");
    if (chasm.stale_K < 0) throw ConfigError("chasm.stale_K: must be >= 0");
    if (sweep.k_min < 0 || sweep.k_step < 1 || sweep.k_max < sweep.k_min)
        throw ConfigError("sweep: need 0 <= k_min <= k_max and k_step >= 1");
}

/// Parses INI text. Unknown sections or keys are rejected, naming the offender.
inline RunConfig parse_run_config(const std::string& text) {
    using namespace config_detail;
    ptree root;
    try {
        std::istringstream in(text);
        boost::property_tree::ini_parser::read_ini(in, root);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    const auto& allowed = allowed_keys();
    for (const auto& [section, body] : root) {
        auto it = allowed.find(section);
        if (it == allowed.end()) {
            if (body.empty()) throw ConfigError("config: key '" + section + "' outside any section");
            throw ConfigError("config: unknown section [" + section + "]");
        }
        for (const auto& [key, value] : body)
            if (!it->second.contains(key)) throw ConfigError("config: unknown key '" + section + "." + key + "'");
    }

    const Reader r(root);
    RunConfig c;
    c.name = r.str("experiment", "name", c.name);
    c.seed = r.unsigned_integer("experiment", "seed", c.seed);
    c.n = r.integer("experiment", "n", c.n);
    c.snapshot_every = static_cast<int>(r.integer("experiment", "snapshot_every", c.snapshot_every));

    c.target = read_target(r, "target");
    if (r.has_section("source")) c.source = read_target(r, "source");

    PriorSpec& p = c.prior;
    p.kind = r.str("prior", "kind", p.kind);
    p.low = r.vec("prior", "low", p.low);
    p.high = r.vec("prior", "high", p.high);
    p.mean = r.vec("prior", "mean", p.mean);
    p.variance = r.real("prior", "variance", p.variance);
    p.points = r.integer("prior", "points", p.points);
    p.jitter = r.real("prior", "jitter", p.jitter);

    TrainConfig& t = c.train;
    t.hidden = r.ints("model", "hidden", t.hidden);
    t.activation = parse_activation(r.str("model", "activation", to_string(t.activation)));
    t.objective = parse_objective(r.str("train", "objective", to_string(t.objective)));
    t.mode = parse_mode(r.str("train", "mode", to_string(t.mode)));
    t.steps = static_cast<int>(r.integer("train", "steps", t.steps));
    t.batch_size = static_cast<int>(r.integer("train", "batch_size", t.batch_size));
    t.lr = r.real("train", "lr", t.lr);
    t.lr_decay = r.real("train", "lr_decay", t.lr_decay);
    // Milestones default to 0.8 T and 0.9 T of whatever T was configured.
    t.lr_milestones = r.ints("train", "lr_milestones", {static_cast<int>(0.8 * t.steps), static_cast<int>(0.9 * t.steps)});
    t.ema_decay = r.real("train", "ema_decay", t.ema_decay);
    t.use_ema = r.boolean("train", "use_ema", t.use_ema);
    t.log_every = static_cast<int>(r.integer("train", "log_every", t.log_every));
    t.energy_n = static_cast<int>(r.integer("train", "energy_n", t.energy_n));
    t.adam_beta1 = r.real("train", "adam_beta1", t.adam_beta1);
    t.adam_beta2 = r.real("train", "adam_beta2", t.adam_beta2);

    FlowConfig& f = t.flow;
    f.divergence = parse_divergence(r.str("flow", "divergence", to_string(f.divergence)));
    f.eta = r.real("flow", "eta", f.eta);
    f.nu = r.real("flow", "nu", f.nu);
    f.K = static_cast<int>(r.integer("flow", "K", f.K));
    f.kappa = static_cast<int>(r.integer("flow", "kappa", f.kappa));
    f.langevin_consistent = r.boolean("flow", "langevin_consistent", f.langevin_consistent);
    f.gamma = r.real("flow", "gamma", f.gamma);

    c.chasm.stale_steps = static_cast<int>(r.integer("chasm", "stale_steps", c.chasm.stale_steps));
    c.chasm.stale_eta = r.real("chasm", "stale_eta", c.chasm.stale_eta);
    c.chasm.stale_K = static_cast<int>(r.integer("chasm", "stale_K", c.chasm.stale_K));

    c.conditional.label = r.integer("conditional", "label", c.conditional.label);
    c.conditional.phi = r.real("conditional", "phi", c.conditional.phi);
    c.conditional.classifier = r.str("conditional", "classifier", c.conditional.classifier);
    c.conditional.classifier_steps =
        static_cast<int>(r.integer("conditional", "classifier_steps", c.conditional.classifier_steps));

    c.sweep.k_min = static_cast<int>(r.integer("sweep", "k_min", c.sweep.k_min));
    c.sweep.k_max = static_cast<int>(r.integer("sweep", "k_max", c.sweep.k_max));
    c.sweep.k_step = static_cast<int>(r.integer("sweep", "k_step", c.sweep.k_step));

    t.seed = c.seed;
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(io::read_file(path)); }

/// Every key written explicitly; parse_run_config(resolved_ini(c)) reproduces c.
inline std::string resolved_ini(const RunConfig& c) {
    using namespace config_detail;
    using io::format_double;
    std::ostringstream out;
    out << "[experiment]\nname = " << c.name << "\nseed = " << c.seed << "\nn = " << c.n
        << "\nsnapshot_every = " << c.snapshot_every << "\n\n";
    write_target(out, "target", c.target);
    if (c.source) write_target(out, "source", *c.source);
    const PriorSpec& p = c.prior;
    out << "[prior]\nkind = " << p.kind << "\n";
    if (p.low.size()) out << "low = " << join(p.low) << "\n";
    if (p.high.size()) out << "high = " << join(p.high) << "\n";
    if (p.mean.size()) out << "mean = " << join(p.mean) << "\n";
    out << "variance = " << format_double(p.variance) << "\npoints = " << p.points
        << "\njitter = " << format_double(p.jitter) << "\n\n";
    const TrainConfig& t = c.train;
    out << "[model]\nhidden = " << join(t.hidden) << "\nactivation = " << to_string(t.activation) << "\n\n";
    out << "[train]\nobjective = " << to_string(t.objective) << "\nmode = " << to_string(t.mode)
        << "\nsteps = " << t.steps << "\nbatch_size = " << t.batch_size << "\nlr = " << format_double(t.lr)
        << "\nlr_decay = " << format_double(t.lr_decay) << "\nlr_milestones = " << join(t.lr_milestones)
        << "\nema_decay = " << format_double(t.ema_decay) << "\nuse_ema = " << (t.use_ema ? "true" : "false")
        << "\nlog_every = " << t.log_every << "\nenergy_n = " << t.energy_n
        << "\nadam_beta1 = " << format_double(t.adam_beta1) << "\nadam_beta2 = " << format_double(t.adam_beta2)
        << "\n\n";
    const FlowConfig& f = t.flow;
    out << "[flow]\ndivergence = " << to_string(f.divergence) << "\neta = " << format_double(f.eta)
        << "\nnu = " << format_double(f.nu) << "\nK = " << f.K << "\nkappa = " << f.kappa
        << "\nlangevin_consistent = " << (f.langevin_consistent ? "true" : "false")
        << "\ngamma = " << format_double(f.gamma) << "\n\n";
    out << "[chasm]\nstale_steps = " << c.chasm.stale_steps << "\nstale_eta = " << format_double(c.chasm.stale_eta)
        << "\nstale_K = " << c.chasm.stale_K << "\n\n";
    out << "[conditional]\nlabel = " << c.conditional.label << "\nphi = " << format_double(c.conditional.phi)
        << "\nclassifier = " << c.conditional.classifier << "\nclassifier_steps = " << c.conditional.classifier_steps
        << "\n\n";
    out << "[sweep]\nk_min = " << c.sweep.k_min << "\nk_max = " << c.sweep.k_max << "\nk_step = " << c.sweep.k_step
        << "\n";
    return out.str();
}

/// Isotropic Gaussian N(mean, variance I) in data-dependent-prior form.
inline DataDependentGaussian fixed_gaussian_prior(const Vector& mean, double variance) {
    require(variance > 0, "fixed_gaussian_prior: variance must be > 0");
    const Index d = mean.size();
    return DataDependentGaussian{mean, variance * Matrix::Identity(d, d),
                                 std::sqrt(variance) * Matrix::Identity(d, d)};
}

/// Materializes the prior. Draws (for ddp/empirical) come from their own stream derived from the seed.
inline Prior build_prior(const RunConfig& c) {
    const PriorSpec& p = c.prior;
    const Index d = target_dim(c.target);
    Rng rng(c.seed ^ 0xd1b54a32d192ed03ULL);
    if (p.kind == "std_gaussian") return StdGaussian{d};
    if (p.kind == "uniform_box") return UniformBox{p.low, p.high};
    if (p.kind == "gaussian") return fixed_gaussian_prior(p.mean, p.variance);
    if (p.kind == "ddp") return fit_ddp(sample_target(c.target, p.points, rng), p.jitter);
    return Empirical{sample_target(*c.source, p.points, rng)};
}

}  // namespace fdrl
