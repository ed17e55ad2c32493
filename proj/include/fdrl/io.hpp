#pragma once

// File formats: particle CSV (+ JSON sidecar), metrics CSV, checkpoint JSON.

#include "fdrl/core.hpp"
#include "fdrl/divergences.hpp"
#include "fdrl/flow.hpp"
#include "fdrl/nn.hpp"
#include "fdrl/trainer.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fdrl::io {

using nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kCheckpointFormatVersion = 1;

/// Shortest decimal representation that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& context) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ConfigError(context + ": cannot parse '" + std::string(s) + "' as a number");
    return v;
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out << content;
    if (!out) throw Error("write to '" + path.string() + "' failed");
}

// ---- particles ---------------------------------------------------------------

/// Header x0,...,x{d-1}; one row per particle.
inline std::string particles_to_csv(const Matrix& points) {
    std::string out;
    for (Index j = 0; j < points.cols(); ++j) out += (j ? ",x" : "x") + std::to_string(j);
    out += '\n';
    for (Index i = 0; i < points.rows(); ++i) {
        for (Index j = 0; j < points.cols(); ++j) {
            if (j) out += ',';
            out += format_double(points(i, j));
        }
        out += '\n';
    }
    return out;
}

inline Matrix particles_from_csv(const std::string& text, const std::string& context = "particles csv") {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError(context + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    Index d = 0;
    {
        std::istringstream hs(line);
        std::string cell;
        while (std::getline(hs, cell, ',')) {
            if (cell != "x" + std::to_string(d))
                throw ConfigError(context + ": header must be x0,x1,...; got '" + line + "'");
            ++d;
        }
    }
    if (d == 0) throw ConfigError(context + ": header has no columns");
    std::vector<double> values;
    Index rows = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        Index cols = 0;
        while (std::getline(ls, cell, ',')) {
            values.push_back(parse_double(cell, context + " row " + std::to_string(rows + 1)));
            ++cols;
        }
        if (cols != d)
            throw ConfigError(context + " row " + std::to_string(rows + 1) + ": expected " + std::to_string(d) +
                              " columns, found " + std::to_string(cols));
        ++rows;
    }
    if (rows == 0) throw ConfigError(context + ": no data rows");
    Matrix out(rows, d);
    std::copy(values.begin(), values.end(), out.data());
    return out;
}

inline Matrix load_particles(const fs::path& path) { return particles_from_csv(read_file(path), path.string()); }

inline json batch_sidecar(const ParticleBatch& batch, std::uint64_t seed) {
    return json{{"steps_taken", batch.steps_taken}, {"source", batch.source}, {"seed", seed}};
}

/// Writes `<stem>.csv` and `<stem>.json` (metadata sidecar).
inline void save_batch(const fs::path& csv_path, const ParticleBatch& batch, std::uint64_t seed) {
    write_file(csv_path, particles_to_csv(batch.points));
    fs::path meta = csv_path;
    meta.replace_extension(".json");
    write_file(meta, batch_sidecar(batch, seed).dump(2) + "\n");
}

// ---- metrics -----------------------------------------------------------------

inline std::string metrics_to_csv(const std::vector<LogEntry>& log) {
    std::string out = "step,loss,lr";
    const Index d = log.empty() ? 0 : log.front().flowed_mean.size();
    for (Index j = 0; j < d; ++j) out += ",flowed_mean_" + std::to_string(j);
    const bool has_energy = !log.empty() && log.front().energy_distance.has_value();
    if (has_energy) out += ",energy_distance";
    out += '\n';
    for (const auto& e : log) {
        out += std::to_string(e.step) + ',' + format_double(e.loss) + ',' + format_double(e.lr);
        for (Index j = 0; j < d; ++j) out += ',' + format_double(e.flowed_mean[j]);
        if (has_energy) out += ',' + (e.energy_distance ? format_double(*e.energy_distance) : std::string());
        out += '\n';
    }
    return out;
}

// ---- checkpoint ----------------------------------------------------------------

/// Nested [{weight: [[...]], bias: [...]}, ...] view of a flat parameter vector.
inline json layers_to_json(const Mlp& shape, const Vector& flat) {
    require(flat.size() == shape.parameter_count(), "layers_to_json: size mismatch");
    json layers = json::array();
    Index k = 0;
    for (const auto& l : shape.layers()) {
        json w = json::array();
        for (Index r = 0; r < l.weight.rows(); ++r) {
            json row = json::array();
            for (Index c = 0; c < l.weight.cols(); ++c) row.push_back(flat[k++]);
            w.push_back(std::move(row));
        }
        json b = json::array();
        for (Index r = 0; r < l.bias.size(); ++r) b.push_back(flat[k++]);
        layers.push_back(json{{"weight", std::move(w)}, {"bias", std::move(b)}});
    }
    return layers;
}

inline Vector layers_from_json(const Mlp& shape, const json& layers, const std::string& what) {
    if (!layers.is_array() || layers.size() != shape.layers().size())
        throw ConfigError("checkpoint: '" + what + "' must hold " + std::to_string(shape.layers().size()) + " layers");
    Vector flat(shape.parameter_count());
    Index k = 0;
    for (std::size_t li = 0; li < layers.size(); ++li) {
        const auto& l = shape.layers()[li];
        const json& w = layers[li].at("weight");
        const json& b = layers[li].at("bias");
        if (w.size() != static_cast<std::size_t>(l.weight.rows()) || b.size() != static_cast<std::size_t>(l.bias.size()))
            throw ConfigError("checkpoint: '" + what + "' layer " + std::to_string(li) + " has the wrong shape");
        for (const auto& row : w) {
            if (row.size() != static_cast<std::size_t>(l.weight.cols()))
                throw ConfigError("checkpoint: '" + what + "' layer " + std::to_string(li) + " has the wrong shape");
            for (const auto& v : row) flat[k++] = v.get<double>();
        }
        for (const auto& v : b) flat[k++] = v.get<double>();
    }
    return flat;
}

struct Checkpoint {
    TrainState state;
    BregmanObjective objective = BregmanObjective::LSIF;
    FDivergence divergence = FDivergence::PearsonChi2;
    std::uint64_t rng_seed = 0;
};

inline json checkpoint_to_json(const Checkpoint& ck) {
    const Mlp& net = ck.state.model.net;
    json arch{{"dims", net.dims()},
              {"activation", to_string(net.activation())},
              {"head", to_string(ck.state.model.head)}};
    const AdamState& a = ck.state.adam;
    return json{{"format_version", kCheckpointFormatVersion},
                {"arch", arch},
                {"objective", to_string(ck.objective)},
                {"divergence", to_string(ck.divergence)},
                {"step", ck.state.step},
                {"params", layers_to_json(net, net.parameters())},
                {"adam",
                 {{"m1", layers_to_json(net, a.m1)},
                  {"m2", layers_to_json(net, a.m2)},
                  {"t", a.t},
                  {"beta1", a.beta1},
                  {"beta2", a.beta2},
                  {"eps", a.eps}}},
                {"ema_params", layers_to_json(net, ck.state.ema.params)},
                {"ema_decay", ck.state.ema.decay},
                {"rng_seed", ck.rng_seed}};
}

inline Checkpoint checkpoint_from_json(const json& j) {
    try {
        if (j.at("format_version").get<int>() != kCheckpointFormatVersion)
            throw ConfigError("checkpoint: unsupported format_version");
        const json& arch = j.at("arch");
        const auto dims = arch.at("dims").get<std::vector<int>>();
        const Activation act = parse_activation(arch.at("activation").get<std::string>());
        const Head head = parse_head(arch.at("head").get<std::string>());
        Checkpoint ck;
        ck.objective = parse_objective(j.at("objective").get<std::string>());
        ck.divergence = parse_divergence(j.at("divergence").get<std::string>());
        if (head != head_for(ck.objective)) throw ConfigError("checkpoint: head does not match objective");
        Mlp net = Mlp::he_init(dims, act, 0);
        net.set_parameters(layers_from_json(net, j.at("params"), "params"));
        const json& adam = j.at("adam");
        ck.state.adam = AdamState{layers_from_json(net, adam.at("m1"), "adam.m1"),
                                  layers_from_json(net, adam.at("m2"), "adam.m2"),
                                  adam.at("t").get<std::int64_t>(),
                                  adam.at("beta1").get<double>(),
                                  adam.at("beta2").get<double>(),
                                  adam.at("eps").get<double>()};
        ck.state.ema = EmaParams{layers_from_json(net, j.at("ema_params"), "ema_params"), j.at("ema_decay").get<double>()};
        ck.state.step = j.at("step").get<int>();
        ck.state.model = DensityRatioModel(std::move(net), head);
        ck.rng_seed = j.at("rng_seed").get<std::uint64_t>();
        return ck;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("checkpoint: malformed document: ") + e.what());
    }
}

inline void save_checkpoint(const fs::path& path, const Checkpoint& ck) {
    write_file(path, checkpoint_to_json(ck).dump() + "\n");
}

inline Checkpoint load_checkpoint(const fs::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("checkpoint '" + path.string() + "': " + e.what());
    }
    return checkpoint_from_json(j);
}

}  // namespace fdrl::io
