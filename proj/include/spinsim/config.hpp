#pragma once

// JSON run configuration: schema, defaults, parsing with line-numbered
// errors, and semantic validation. All physical quantities carry explicit
// unit suffixes (_hz, _s, _deg) in the file.

#include <cctype>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "spinsim/spin_core.hpp"
#include "spinsim/hamiltonian.hpp"
#include "spinsim/experiment.hpp"
#include "spinsim/spectra.hpp"

namespace spinsim::config {

using nlohmann::json;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SpectrumParams {
    Channel channel = Channel::h1;
    std::string method = "transition";  // "transition" or "fid"
    double broadening_hz = 5.0;
    int n_points = 8192;
    double dwell_s = 0.0;  // fid method; 0 selects 1/(2 f_max) automatically
    double readout_flip_deg = 90.0;
    double f_max_hz = 0.0;  // transition method; 0 selects automatically
};

struct OutputParams {
    std::string dir = ".";
    bool csv = false;
    bool plot = false;
};

struct RunConfig {
    SpinSystem system;
    experiment::Mode mode = experiment::Mode::ideal;
    std::string experiment = "expand";
    double theta_deg = 90.0;
    double storage_time_s = 0.5;
    experiment::RelaxationParams relaxation;
    experiment::MqSettings mq;
    experiment::SaturationSettings saturation;
    SpectrumParams spectrum;
    OutputParams output;
    std::uint64_t seed = 20260819;
};

inline RunConfig default_config() {
    RunConfig cfg;
    cfg.system = benzene_preset(1000.0, {1600.0, 250.0, 100.0, 60.0, 100.0, 250.0},
                                158.0);
    return cfg;
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace detail {

inline int line_of_byte(const std::string& text, std::size_t byte) {
    int line = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') ++line;
    }
    return line;
}

// Rejects unknown keys so typos surface instead of silently using defaults.
inline void check_keys(const json& j, const std::string& where,
                       const std::set<std::string>& allowed) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!allowed.count(key)) {
            throw ConfigError(where + ": unknown key \"" + key + "\"");
        }
    }
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("key \"" + key + "\": " + e.what());
    }
}

inline Channel parse_channel(const std::string& s) {
    if (s == "h1" || s == "H1") return Channel::h1;
    if (s == "c13" || s == "C13") return Channel::c13;
    if (s == "all") return Channel::all;
    throw ConfigError("channel must be one of h1, c13, all (got \"" + s + "\")");
}

inline experiment::Mode parse_mode(const std::string& s) {
    if (s == "ideal") return experiment::Mode::ideal;
    if (s == "pulse_level") return experiment::Mode::pulse_level;
    throw ConfigError("mode must be ideal or pulse_level (got \"" + s + "\")");
}

inline SpinSystem parse_system(const json& j) {
    check_keys(j, "system",
               {"preset", "b_ortho_hz", "b_ch_hz", "j01_hz", "offsets_hz",
                "species", "dipolar_hz", "jcoupling_hz"});
    SpinSystem sys;
    if (j.contains("preset")) {
        const std::string preset = j.at("preset").get<std::string>();
        if (preset != "benzene") {
            throw ConfigError("system.preset: unknown preset \"" + preset + "\"");
        }
        const double b_ortho = get_or(j, "b_ortho_hz", 1000.0);
        const std::vector<double> b_ch = get_or<std::vector<double>>(
            j, "b_ch_hz", {1600.0, 250.0, 100.0, 60.0, 100.0, 250.0});
        const double j01 = get_or(j, "j01_hz", 158.0);
        sys = benzene_preset(b_ortho, b_ch, j01);
    } else {
        // Explicit description: species list plus full coupling matrices.
        if (!j.contains("species")) {
            throw ConfigError("system: need either \"preset\" or \"species\"");
        }
        const auto species = j.at("species").get<std::vector<std::string>>();
        const int n = static_cast<int>(species.size());
        sys.sites.resize(n);
        for (int i = 0; i < n; ++i) {
            if (species[i] == "c13" || species[i] == "C13") {
                sys.sites[i].species = Species::c13;
            } else if (species[i] == "h1" || species[i] == "H1") {
                sys.sites[i].species = Species::h1;
            } else {
                throw ConfigError("system.species: unknown species \"" + species[i] +
                                  "\"");
            }
        }
        sys.dipolar_hz = Eigen::MatrixXd::Zero(n, n);
        sys.jcoupling_hz = Eigen::MatrixXd::Zero(n, n);
        for (const char* key : {"dipolar_hz", "jcoupling_hz"}) {
            if (!j.contains(key)) continue;
            const auto rows = j.at(key).get<std::vector<std::vector<double>>>();
            if (static_cast<int>(rows.size()) != n) {
                throw ConfigError(std::string("system.") + key + ": need " +
                                  std::to_string(n) + " rows");
            }
            Eigen::MatrixXd m(n, n);
            for (int r = 0; r < n; ++r) {
                if (static_cast<int>(rows[r].size()) != n) {
                    throw ConfigError(std::string("system.") + key + ": row " +
                                      std::to_string(r) + " needs " +
                                      std::to_string(n) + " entries");
                }
                for (int c = 0; c < n; ++c) m(r, c) = rows[r][c];
            }
            if (std::string(key) == "dipolar_hz") sys.dipolar_hz = m;
            else sys.jcoupling_hz = m;
        }
    }
    if (j.contains("offsets_hz")) {
        const auto offs = j.at("offsets_hz").get<std::vector<double>>();
        if (offs.size() != sys.sites.size()) {
            throw ConfigError("system.offsets_hz: need one entry per site");
        }
        for (std::size_t i = 0; i < offs.size(); ++i) {
            sys.sites[i].offset_hz = offs[i];
        }
    }
    return sys;
}

}  // namespace detail

// Builds a RunConfig from parsed JSON. Unknown keys raise ConfigError.
inline RunConfig from_json(const json& j) {
    detail::check_keys(j, "config",
                       {"system", "mode", "experiment", "theta_deg",
                        "storage_time_s", "relaxation", "mq", "saturation",
                        "spectrum", "output", "seed"});
    RunConfig cfg = default_config();
    if (j.contains("system")) cfg.system = detail::parse_system(j.at("system"));
    if (j.contains("mode")) cfg.mode = detail::parse_mode(j.at("mode").get<std::string>());
    cfg.experiment = detail::get_or<std::string>(j, "experiment", cfg.experiment);
    cfg.theta_deg = detail::get_or(j, "theta_deg", cfg.theta_deg);
    cfg.storage_time_s = detail::get_or(j, "storage_time_s", cfg.storage_time_s);
    cfg.seed = detail::get_or<std::uint64_t>(j, "seed", cfg.seed);

    if (j.contains("relaxation")) {
        const json& r = j.at("relaxation");
        detail::check_keys(r, "relaxation",
                           {"t2_by_order", "t2_default_s", "t1_s", "apply_t1"});
        if (r.contains("t2_by_order")) {
            cfg.relaxation.t2_by_order.clear();
            for (const auto& [key, value] : r.at("t2_by_order").items()) {
                std::size_t pos = 0;
                const int order = std::stoi(key, &pos);
                if (pos != key.size()) {
                    throw ConfigError("relaxation.t2_by_order: key \"" + key +
                                      "\" is not an integer order");
                }
                cfg.relaxation.t2_by_order[order] = value.get<double>();
            }
        }
        cfg.relaxation.t2_default_s =
            detail::get_or(r, "t2_default_s", cfg.relaxation.t2_default_s);
        cfg.relaxation.t1_s = detail::get_or(r, "t1_s", cfg.relaxation.t1_s);
        cfg.relaxation.apply_t1 = detail::get_or(r, "apply_t1", cfg.relaxation.apply_t1);
    }
    if (j.contains("mq")) {
        const json& m = j.at("mq");
        detail::check_keys(m, "mq", {"n_cycles", "tau_s", "phase_steps"});
        cfg.mq.n_cycles = detail::get_or(m, "n_cycles", cfg.mq.n_cycles);
        cfg.mq.tau_s = detail::get_or(m, "tau_s", cfg.mq.tau_s);
        cfg.mq.phase_steps = detail::get_or(m, "phase_steps", cfg.mq.phase_steps);
    }
    if (j.contains("saturation")) {
        const json& s = j.at("saturation");
        detail::check_keys(s, "saturation",
                           {"n_rounds", "max_targets", "pulse_duration_s",
                            "flip_angle_deg", "n_slices"});
        cfg.saturation.n_rounds = detail::get_or(s, "n_rounds", cfg.saturation.n_rounds);
        cfg.saturation.max_targets =
            detail::get_or(s, "max_targets", cfg.saturation.max_targets);
        cfg.saturation.pulse_duration_s =
            detail::get_or(s, "pulse_duration_s", cfg.saturation.pulse_duration_s);
        cfg.saturation.flip_angle =
            detail::get_or(s, "flip_angle_deg", 90.0) * spinsim::pi / 180.0;
        cfg.saturation.n_slices = detail::get_or(s, "n_slices", cfg.saturation.n_slices);
    }
    if (j.contains("spectrum")) {
        const json& s = j.at("spectrum");
        detail::check_keys(s, "spectrum",
                           {"channel", "method", "broadening_hz", "n_points",
                            "dwell_s", "readout_flip_deg", "f_max_hz"});
        if (s.contains("channel")) {
            cfg.spectrum.channel =
                detail::parse_channel(s.at("channel").get<std::string>());
        }
        cfg.spectrum.method = detail::get_or<std::string>(s, "method", cfg.spectrum.method);
        cfg.spectrum.broadening_hz =
            detail::get_or(s, "broadening_hz", cfg.spectrum.broadening_hz);
        cfg.spectrum.n_points = detail::get_or(s, "n_points", cfg.spectrum.n_points);
        cfg.spectrum.dwell_s = detail::get_or(s, "dwell_s", cfg.spectrum.dwell_s);
        cfg.spectrum.readout_flip_deg =
            detail::get_or(s, "readout_flip_deg", cfg.spectrum.readout_flip_deg);
        cfg.spectrum.f_max_hz = detail::get_or(s, "f_max_hz", cfg.spectrum.f_max_hz);
    }
    if (j.contains("output")) {
        const json& o = j.at("output");
        detail::check_keys(o, "output", {"dir", "csv", "plot"});
        cfg.output.dir = detail::get_or<std::string>(o, "dir", cfg.output.dir);
        cfg.output.csv = detail::get_or(o, "csv", cfg.output.csv);
        cfg.output.plot = detail::get_or(o, "plot", cfg.output.plot);
    }
    return cfg;
}

// Parses config text; parse errors carry a 1-based line number.
inline RunConfig parse_config(const std::string& text,
                              const std::string& source = "<config>") {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(source + ":" +
                          std::to_string(detail::line_of_byte(text, e.byte)) +
                          ": " + e.what());
    }
    try {
        return from_json(j);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(source + ": " + e.what());
    }
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

// ---------------------------------------------------------------------------
// Semantic validation
// ---------------------------------------------------------------------------

struct Diagnostic {
    enum class Severity { warning, error };
    Severity severity;
    std::string message;
};

// Checks cross-field invariants. Returns diagnostics instead of throwing so
// the CLI can report all problems at once.
inline std::vector<Diagnostic> validate_config(const RunConfig& cfg) {
    std::vector<Diagnostic> out;
    const auto err = [&](const std::string& m) {
        out.push_back({Diagnostic::Severity::error, m});
    };
    const auto warn = [&](const std::string& m) {
        out.push_back({Diagnostic::Severity::warning, m});
    };

    try {
        validate_system(cfg.system);
    } catch (const std::exception& e) {
        err(std::string("system: ") + e.what());
    }

    // Homonuclear J couplings are ignored by the Hamiltonian model.
    const int n = static_cast<int>(cfg.system.sites.size());
    bool homo_j = false;
    for (int a = 0; a < n && !homo_j; ++a) {
        for (int b = a + 1; b < n && !homo_j; ++b) {
            if (cfg.system.sites[a].species == cfg.system.sites[b].species &&
                cfg.system.jcoupling_hz.size() > 0 &&
                cfg.system.jcoupling_hz(a, b) != 0.0) {
                homo_j = true;
            }
        }
    }
    if (homo_j) {
        warn("system: homonuclear J couplings are ignored (strong-coupling "
             "dipolar model keeps only heteronuclear J)");
    }

    if (!(cfg.theta_deg >= 0.0 && cfg.theta_deg < 360.0)) {
        err("theta_deg must lie in [0, 360)");
    }
    if (!(cfg.storage_time_s >= 0.0)) err("storage_time_s must be >= 0");

    try {
        cfg.relaxation.validate();
    } catch (const std::exception& e) {
        err(std::string("relaxation: ") + e.what());
    }

    if (cfg.mq.n_cycles < 1) err("mq.n_cycles must be >= 1");
    if (!(cfg.mq.tau_s > 0.0)) err("mq.tau_s must be > 0");
    if (cfg.mq.phase_steps < 1) err("mq.phase_steps must be >= 1");

    if (cfg.saturation.n_rounds < 0) err("saturation.n_rounds must be >= 0");
    if (cfg.saturation.max_targets < 1) err("saturation.max_targets must be >= 1");
    if (!(cfg.saturation.pulse_duration_s > 0.0)) {
        err("saturation.pulse_duration_s must be > 0");
    }

    if (!(cfg.spectrum.broadening_hz > 0.0)) err("spectrum.broadening_hz must be > 0");
    if (cfg.spectrum.method != "transition" && cfg.spectrum.method != "fid") {
        err("spectrum.method must be \"transition\" or \"fid\"");
    }
    if (cfg.spectrum.n_points < 2) err("spectrum.n_points must be >= 2");
    if (cfg.spectrum.method == "fid" &&
        (cfg.spectrum.n_points & (cfg.spectrum.n_points - 1)) != 0) {
        err("spectrum.n_points must be a power of two for the fid method");
    }

    // Timescale sanity: the expansion must finish well inside the
    // seven-quantum decoherence time.
    if (out.empty() || std::none_of(out.begin(), out.end(), [](const Diagnostic& d) {
            return d.severity == Diagnostic::Severity::error;
        })) {
        const double duration = experiment::expansion_duration_s(cfg.system, cfg.mq);
        const double t2_7 = cfg.relaxation.t2_for_order(7);
        if (duration >= t2_7) {
            warn("expansion duration " + std::to_string(duration) +
                 " s is not below the seven-quantum decoherence time " +
                 std::to_string(t2_7) + " s");
        }
    }
    return out;
}

}  // namespace spinsim::config
