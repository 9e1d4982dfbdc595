#pragma once

// Command-line experiment runner: executes the configured experiment and
// writes a text report, optional CSV spectra, and optional SVG plots.
// Output is deterministic for a fixed config: fixed formatting, fixed
// reduction order, no clocks.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "spinsim/spin_core.hpp"
#include "spinsim/hamiltonian.hpp"
#include "spinsim/mq_coherence.hpp"
#include "spinsim/pulse_engine.hpp"
#include "spinsim/experiment.hpp"
#include "spinsim/spectra.hpp"
#include "spinsim/logic.hpp"
#include "spinsim/config.hpp"

namespace spinsim::cli {

namespace fs = std::filesystem;

// Frobenius norm per coherence order (all-spin channel).
inline std::map<int, double> coherence_histogram(const DensityMatrix& rho,
                                                 const SpinSystem& sys) {
    std::map<int, double> hist;
    for (const auto& [p, block] : mq::decompose(rho, sys, Channel::all).components) {
        hist[p] = block.norm();
    }
    return hist;
}

namespace detail {

inline std::string fmt(double x) {
    std::ostringstream ss;
    ss << std::setprecision(12) << x;
    return ss.str();
}

inline void write_histogram(std::ostream& out, const std::map<int, double>& hist) {
    out << "coherence orders (|order| -> Frobenius norm):\n";
    std::map<int, double> folded;
    for (const auto& [p, v] : hist) folded[std::abs(p)] += (p <= 0) ? v : 0.0;
    for (const auto& [p, v] : hist) {
        if (p > 0) folded[p] = std::hypot(folded[p], v);
    }
    for (const auto& [p, v] : folded) {
        if (v < 1e-14) continue;
        out << "  " << std::setw(2) << p << "  " << fmt(v) << "\n";
    }
}

inline void write_checkpoints(std::ostream& out,
                              const std::vector<experiment::Checkpoint>& timeline) {
    out << "checkpoints (label -> Frobenius norm):\n";
    for (const auto& cp : timeline) {
        out << "  " << cp.label << "  " << fmt(cp.state.m.norm()) << "\n";
    }
}

inline void write_metrics(std::ostream& out,
                          const std::map<std::string, double>& metrics) {
    for (const auto& [k, v] : metrics) {
        out << k << " = " << fmt(v) << "\n";
    }
}

// Minimal deterministic SVG line plot of a spectrum.
inline void write_svg(const spectra::Spectrum& spec, const std::string& path,
                      const std::string& title) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_svg: cannot open " + path);
    const int w = 900, h = 420, ml = 60, mr = 20, mt = 40, mb = 50;
    const double fmin = spec.freq_hz.minCoeff();
    const double fmax = spec.freq_hz.maxCoeff();
    double amin = spec.amplitude.minCoeff();
    double amax = spec.amplitude.maxCoeff();
    if (amax == amin) amax = amin + 1.0;
    const double pad = 0.05 * (amax - amin);
    amin -= pad;
    amax += pad;
    const auto px = [&](double f) {
        return ml + (f - fmin) / (fmax - fmin) * (w - ml - mr);
    };
    const auto py = [&](double a) {
        return h - mb - (a - amin) / (amax - amin) * (h - mt - mb);
    };
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
        << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
    out << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n";
    // Axes.
    out << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr
        << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
        << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
    out << std::setprecision(6);
    for (int k = 0; k <= 4; ++k) {
        const double f = fmin + k * (fmax - fmin) / 4.0;
        out << "<text x=\"" << px(f) << "\" y=\"" << h - mb + 18
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
            << "font-size=\"11\">" << f << "</text>\n";
    }
    out << "<text x=\"" << w / 2 << "\" y=\"" << h - 12
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"12\">frequency (Hz)</text>\n";
    out << "<polyline fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"1\" points=\"";
    out << std::setprecision(7);
    for (Eigen::Index i = 0; i < spec.freq_hz.size(); ++i) {
        out << px(spec.freq_hz(i)) << "," << py(spec.amplitude(i));
        if (i + 1 < spec.freq_hz.size()) out << " ";
    }
    out << "\"/>\n</svg>\n";
}

// Builds the state selected by the spectrum subcommand.
inline DensityMatrix state_by_name(const std::string& name,
                                   const config::RunConfig& cfg) {
    const double theta = cfg.theta_deg * spinsim::pi / 180.0;
    if (name == "thermal") return experiment::thermal_deviation(cfg.system);
    if (name == "rho-a" || name == "rho_a") {
        return experiment::prepare_rho_a(cfg.system, cfg.mode, cfg.mq).rho_final;
    }
    if (name == "pseudopure") {
        return experiment::prepare_pseudopure(cfg.system, cfg.mode, cfg.mq,
                                              cfg.saturation)
            .rho_final;
    }
    if (name == "expand") {
        return experiment::expand(cfg.system, theta, cfg.mode, cfg.mq).rho_final;
    }
    if (name == "measure") {
        const auto r = experiment::expand(cfg.system, theta, cfg.mode, cfg.mq);
        return experiment::measure_model(r.rho_final, cfg.system,
                                         cfg.storage_time_s, cfg.relaxation);
    }
    throw config::ConfigError("unknown state \"" + name +
                              "\" (expected thermal, rho-a, pseudopure, expand, "
                              "or measure)");
}

inline spectra::Spectrum make_spectrum(const DensityMatrix& rho,
                                       const config::RunConfig& cfg) {
    const auto& sp = cfg.spectrum;
    if (sp.method == "transition") {
        return spectra::transition_spectrum(rho, cfg.system, sp.channel,
                                            sp.broadening_hz, sp.n_points,
                                            sp.f_max_hz);
    }
    // FID route: pick the dwell from the line table unless configured.
    double dwell = sp.dwell_s;
    if (dwell <= 0.0) {
        double f_abs = 0.0;
        for (const auto& line :
             spectra::transition_table(rho, cfg.system, sp.channel)) {
            f_abs = std::max(f_abs, std::abs(line.freq_hz));
        }
        const double f_max =
            std::max(1.1 * f_abs, 20.0 * sp.broadening_hz);
        dwell = 1.0 / (2.0 * f_max);
    }
    return spectra::fid_spectrum(rho, cfg.system, sp.channel,
                                 sp.readout_flip_deg * spinsim::pi / 180.0,
                                 sp.n_points, dwell, sp.broadening_hz);
}

}  // namespace detail

struct RunOptions {
    std::string out_dir = ".";
    bool csv = false;
    bool plot = false;
    std::string state = "thermal";  // spectrum subcommand
};

// Executes one experiment; returns the report text (also written to disk).
inline std::string run(const config::RunConfig& cfg, const RunOptions& opt) {
    const auto diags = config::validate_config(cfg);
    std::ostringstream rep;
    for (const auto& d : diags) {
        if (d.severity == config::Diagnostic::Severity::error) {
            throw config::ConfigError("config: " + d.message);
        }
        rep << "warning: " << d.message << "\n";
    }
    fs::create_directories(opt.out_dir);
    const double theta = cfg.theta_deg * spinsim::pi / 180.0;
    const std::string mode_name =
        (cfg.mode == experiment::Mode::ideal) ? "ideal" : "pulse_level";

    const std::string& what = cfg.experiment;
    rep << "experiment: " << what << "\n";
    rep << "mode: " << mode_name << "\n";
    rep << "spins: " << cfg.system.n_spins() << "\n";

    if (what == "thermal") {
        const DensityMatrix rho = experiment::thermal_deviation(cfg.system);
        rep << "norm = " << detail::fmt(rho.m.norm()) << "\n";
        rep << "trace = " << detail::fmt(rho.m.trace().real()) << "\n";
        detail::write_histogram(rep, coherence_histogram(rho, cfg.system));
    } else if (what == "rho_a" || what == "rho-a") {
        const auto res = experiment::prepare_rho_a(cfg.system, cfg.mode, cfg.mq);
        rep << "fidelity_vs_oracle = " << detail::fmt(res.fidelity_vs_oracle) << "\n";
        detail::write_metrics(rep, res.metrics);
        detail::write_checkpoints(rep, res.timeline);
        detail::write_histogram(rep, coherence_histogram(res.rho_final, cfg.system));
    } else if (what == "pseudopure") {
        const auto res = experiment::prepare_pseudopure(cfg.system, cfg.mode, cfg.mq,
                                                        cfg.saturation);
        rep << "fidelity_vs_oracle = " << detail::fmt(res.fidelity_vs_oracle) << "\n";
        detail::write_metrics(rep, res.metrics);
        detail::write_checkpoints(rep, res.timeline);
    } else if (what == "expand") {
        const auto res = experiment::expand(cfg.system, theta, cfg.mode, cfg.mq);
        rep << "theta_deg = " << detail::fmt(cfg.theta_deg) << "\n";
        rep << "fidelity_vs_oracle = " << detail::fmt(res.fidelity_vs_oracle) << "\n";
        detail::write_metrics(rep, res.metrics);
        detail::write_checkpoints(rep, res.timeline);
        detail::write_histogram(rep, coherence_histogram(res.rho_final, cfg.system));
    } else if (what == "measure") {
        const auto res = experiment::expand(cfg.system, theta, cfg.mode, cfg.mq);
        const DensityMatrix stored = experiment::measure_model(
            res.rho_final, cfg.system, cfg.storage_time_s, cfg.relaxation);
        rep << "theta_deg = " << detail::fmt(cfg.theta_deg) << "\n";
        rep << "storage_time_s = " << detail::fmt(cfg.storage_time_s) << "\n";
        rep << "p_all_up = " << detail::fmt(stored.m(0, 0).real()) << "\n";
        rep << "p_all_down = "
            << detail::fmt(stored.m(stored.dim() - 1, stored.dim() - 1).real())
            << "\n";
        Operator off = stored.m;
        off.diagonal().setZero();
        rep << "offdiagonal_max = " << detail::fmt(off.cwiseAbs().maxCoeff()) << "\n";
        rep << "before storage:\n";
        detail::write_histogram(rep, coherence_histogram(res.rho_final, cfg.system));
        rep << "after storage:\n";
        detail::write_histogram(rep, coherence_histogram(stored, cfg.system));
    } else if (what == "spectrum") {
        const DensityMatrix rho = detail::state_by_name(opt.state, cfg);
        const spectra::Spectrum spec = detail::make_spectrum(rho, cfg);
        rep << "state: " << opt.state << "\n";
        rep << "channel: " << spectra::channel_name(cfg.spectrum.channel) << "\n";
        rep << "method: " << cfg.spectrum.method << "\n";
        rep << "grid points = " << spec.freq_hz.size() << "\n";
        const auto picked = spectra::peak_pick(spec, 0.01);
        rep << "peaks detected = " << picked.size() << "\n";
        const int n_protons =
            static_cast<int>(cfg.system.channel_sites(Channel::h1).size());
        rep << "dipolar peak bound (protons) = "
            << spectra::max_peaks(n_protons, spectra::CouplingTopology::dipolar)
            << "\n";
        if (opt.csv) {
            const std::string path = opt.out_dir + "/spectrum.csv";
            spectra::write_csv(spec, path);
            rep << "csv: " << path << "\n";
        }
        if (opt.plot) {
            const std::string path = opt.out_dir + "/spectrum.svg";
            detail::write_svg(spec, path,
                              opt.state + " " +
                                  spectra::channel_name(cfg.spectrum.channel) +
                                  " spectrum");
            rep << "plot: " << path << "\n";
        }
    } else if (what == "logic_check" || what == "logic-check") {
        const double a = std::cos(theta / 2.0);
        const double b = std::sin(theta / 2.0);
        const int n_qubits = cfg.system.n_spins();
        const auto circuit =
            logic::expand_chain(logic::initial_state(a, b, n_qubits - 1));
        const auto closed = logic::ghz_state(a, b, n_qubits);
        const double fid = std::norm(closed.state.amps.dot(circuit.state.amps));
        rep << "n_qubits = " << n_qubits << "\n";
        rep << "theta_deg = " << detail::fmt(cfg.theta_deg) << "\n";
        rep << "circuit_vs_closed_form_fidelity = " << detail::fmt(fid) << "\n";
        rep << "<M> = " << detail::fmt(logic::polarization_moment(circuit, 1)) << "\n";
        rep << "<M^2> = " << detail::fmt(logic::polarization_moment(circuit, 2))
            << "\n";
        rep << "expected <M> = "
            << detail::fmt(n_qubits * (a * a - b * b)) << "\n";
        rep << "expected <M^2> = " << detail::fmt(double(n_qubits) * n_qubits)
            << "\n";
    } else if (what == "peaks") {
        rep << "max resolved peaks per proton count:\n";
        rep << "  n  dipolar  zz-only\n";
        for (int n = 1; n <= 8; ++n) {
            rep << "  " << n << "  "
                << spectra::max_peaks(n, spectra::CouplingTopology::dipolar) << "  "
                << spectra::max_peaks(n, spectra::CouplingTopology::zz) << "\n";
        }
    } else {
        throw config::ConfigError("unknown experiment \"" + what + "\"");
    }

    const std::string report = rep.str();
    const std::string report_path = opt.out_dir + "/" +
                                    ((what == "rho-a") ? "rho_a" : what) +
                                    "_report.txt";
    std::ofstream out(report_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write report: " + report_path);
    out << report;
    return report;
}

}  // namespace spinsim::cli
