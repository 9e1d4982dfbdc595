#pragma once

// Scripted experiment pipelines: thermal state, rho_A preparation (step A),
// pseudopure preparation (step B), state expansion (step C), and the
// decoherence-based measurement model. Each preparation runs in `ideal`
// mode (exact subspace unitaries, analytic coherence filtering) or
// `pulse_level` mode (multipulse supercycles, phase-cycled filtering, raw
// conditional-evolution delays).
//
// Phase conventions (fixed numerically against the closed-form targets):
//   * The conditional-evolution delay of angle 90 degrees, followed in
//     ideal mode by the frame realignment Rz_sigma(-pi/2) Rz_c13(-pi/2),
//     acts on the sigma subspace as the conditional-Z gate
//     diag(1, 1, 1, -1) on (|up,u>, |up,d>, |down,u>, |down,d>).
//   * Step A (ideal): excitation sigma-rotation phase 270 deg produces the
//     intermediate -I_0z Sigma_x after the delay; the closing 90-deg
//     Y-rotation (phase 90 deg) then yields +I_0z Sigma_z.
//   * Step C (ideal): opening Y-rotation (phase 90 deg) maps |u> to
//     (|u>+|d>)/sqrt(2); after the conditional-Z the closing rotation at
//     phase 270 deg plus a zero-duration carbon pi z-realignment lands
//     exactly on a|all-up> + b|all-down>.
//   * Pulse-level global phases (45 deg steps on the proton channel) were
//     calibrated against the same targets: step A blocks at (0, 45) deg,
//     step C blocks at (45, 30) deg.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "spinsim/spin_core.hpp"
#include "spinsim/hamiltonian.hpp"
#include "spinsim/mq_coherence.hpp"
#include "spinsim/pulse_engine.hpp"
#include "spinsim/logic.hpp"
#include "spinsim/spectra.hpp"

namespace spinsim::experiment {

enum class Mode { ideal, pulse_level };

struct RelaxationParams {
    std::map<int, double> t2_by_order = {{7, 0.050}};  // seconds per |order|
    double t2_default_s = 0.100;  // orders not listed in the map
    double t1_s = 2.0;
    bool apply_t1 = false;  // diagonal relaxation toward thermal equilibrium

    double t2_for_order(int p) const {
        const auto it = t2_by_order.find(std::abs(p));
        return (it != t2_by_order.end()) ? it->second : t2_default_s;
    }

    void validate() const {
        for (const auto& [p, t] : t2_by_order) {
            if (!(t > 0.0)) throw std::invalid_argument("RelaxationParams: t2 <= 0");
            if (p < 1) throw std::invalid_argument("RelaxationParams: order < 1");
        }
        if (!(t2_default_s > 0.0) || !(t1_s > 0.0)) {
            throw std::invalid_argument("RelaxationParams: times must be positive");
        }
    }
};

struct Checkpoint {
    std::string label;
    DensityMatrix state;
};

struct ExperimentResult {
    DensityMatrix rho_final;
    double fidelity_vs_oracle = 0.0;  // clamped to [0, 1]
    std::vector<Checkpoint> timeline;
    std::map<std::string, double> metrics;  // raw overlaps, contrasts, ...
};

// Multiple-quantum excitation block parameters shared by the pipelines.
struct MqSettings {
    int n_cycles = 20;
    double tau_s = 1.6257e-5;  // per-cycle tau; calibrate_mq_tau refines this
    int phase_steps = 16;     // phase-cycle steps for the 6Q filter
};

// Step-B saturation-pulse parameters (pulse_level mode).
struct SaturationSettings {
    int n_rounds = 1;
    int max_targets = 12;            // strongest allowed transitions
    double pulse_duration_s = 0.010; // Gaussian duration
    double flip_angle = spinsim::pi / 2.0;
    int n_slices = 256;
};

// ---------------------------------------------------------------------------
// Small helpers
// ---------------------------------------------------------------------------

inline DensityMatrix thermal_deviation(const SpinSystem& sys) {
    return make_density(thermal_deviation_op(sys), StateKind::deviation);
}

// The step-A target operator I_0z Sigma_z (both factors diagonal).
inline Operator rho_a_target(const SpinSystem& sys) {
    const mq::SigmaOps sig = mq::build_sigma_ops(sys);
    const int carbon = sys.channel_sites(Channel::c13).at(0);
    return single_spin_op(sys.n_spins(), carbon, Axis::z) * sig.sigma_z;
}

// Cosine similarity of two Hermitian operators: Tr(A B) / (||A|| ||B||).
inline double normalized_overlap(const Operator& a, const Operator& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return (a.adjoint() * b).trace().real() / (na * nb);
}

// Dominant eigenvector of a deviation density: the pure part of a
// pseudopure state lambda I + mu |psi><psi| (mu > 0).
inline std::pair<double, CVector> pure_part(const DensityMatrix& rho) {
    Eigen::SelfAdjointEigenSolver<Operator> es(rho.m);
    const int last = static_cast<int>(rho.dim()) - 1;
    return {es.eigenvalues()(last), es.eigenvectors().col(last)};
}

// |<psi|top eigenvector>|^2, clamped to [0, 1].
inline double pure_part_fidelity(const DensityMatrix& rho, const CVector& psi) {
    const auto [val, vec] = pure_part(rho);
    (void)val;
    const double f = std::norm(psi.dot(vec));  // |<psi|vec>|^2
    return std::clamp(f, 0.0, 1.0);
}

namespace detail {

inline pulse::MqMode to_mq_mode(Mode m) {
    return (m == Mode::ideal) ? pulse::MqMode::ideal : pulse::MqMode::pulse_level;
}

// Duration of the 90-degree conditional-evolution delay, from the
// configured heteronuclear couplings.
inline double conditional_delay_s(const SpinSystem& sys) {
    const double rate = conditional_rate(sys);
    if (!(rate > 0.0)) {
        throw std::invalid_argument(
            "conditional delay: no heteronuclear couplings configured");
    }
    return (spinsim::pi / 2.0) / rate;
}

// Conditional-evolution delay propagator. Ideal mode realigns the single
// -spin reference frames afterwards so the result is exactly the
// conditional-Z gate on the sigma subspace; pulse_level keeps the raw
// propagator.
inline Operator conditional_delay_operator(const SpinSystem& sys, Mode mode) {
    const double t90 = conditional_delay_s(sys);
    const Operator u_raw =
        pulse::delay_operator(sys, pulse::Delay{t90, pulse::DelayKind::full});
    if (mode == Mode::pulse_level) return u_raw;
    const Operator rz_sig = mq::sigma_z_rotation(sys, -spinsim::pi / 2.0);
    const Operator rz_c = pulse::channel_z_rotation(sys, Channel::c13, -spinsim::pi / 2.0);
    return rz_c * rz_sig * u_raw;
}

}  // namespace detail

// Wall-clock duration of the expansion pipeline (two 20-cycle blocks plus
// the conditional delay), used for timescale sanity checks against the
// seven-quantum decoherence time.
inline double expansion_duration_s(const SpinSystem& sys, const MqSettings& mq) {
    const pulse::MqBlock block{mq.n_cycles, 0.0, pulse::MqMode::pulse_level, mq.tau_s};
    return 2.0 * pulse::mq_wall_time(block) + detail::conditional_delay_s(sys);
}

// ---------------------------------------------------------------------------
// Step A: rho_A = I_0z Sigma_z
// ---------------------------------------------------------------------------

inline ExperimentResult prepare_rho_a(const SpinSystem& sys, Mode mode,
                                      const MqSettings& mq = {}) {
    ExperimentResult res;
    DensityMatrix rho = thermal_deviation(sys);
    res.timeline.push_back({"thermal", rho});

    // Saturate the carbon: 90-degree pulse followed by a crusher removes
    // its Zeeman order, leaving pure proton order.
    rho = evolve(rho, pulse::hard_pulse_operator(
                          sys, pulse::HardPulse{Channel::c13, spinsim::pi / 2.0, 0.0}));
    rho = pulse::apply_crusher(sys, rho, pulse::GradientCrusher{Channel::c13});
    res.timeline.push_back({"carbon_saturated", rho});

    // Six-quantum excitation and order filtering.
    const double input_norm = rho.m.norm();
    if (mode == Mode::ideal) {
        const Operator r = mq::sigma_rotation(sys, spinsim::pi / 2.0,
                                              3.0 * spinsim::pi / 2.0);
        rho.m = r * rho.m * r.adjoint();
        res.timeline.push_back({"mq_excited", rho});
        rho = mq::project_order(rho, sys, 6, Channel::h1);
    } else {
        pulse::PulseProgram prog;
        prog.events.push_back(pulse::MqBlock{mq.n_cycles, 0.0,
                                             pulse::MqMode::pulse_level, mq.tau_s});
        prog.cycle = pulse::PhaseCycle{mq.phase_steps, 6, Channel::h1};
        rho = pulse::run_program(sys, prog, rho);
    }
    if (!(rho.m.norm() > 1e-12 * input_norm)) {
        throw std::runtime_error(
            "prepare_rho_a: six-quantum filter yielded zero (couplings too weak "
            "to excite 6Q coherence in the configured excitation time)");
    }
    res.timeline.push_back({"six_quantum_filtered", rho});

    // Conditional-evolution delay (90 degrees) correlates the six-quantum
    // coherence with the carbon state.
    rho = evolve(rho, detail::conditional_delay_operator(sys, mode));
    res.timeline.push_back({"conditional_delay", rho});

    // Closing sigma rotation converts the conditioned coherence into
    // longitudinal order I_0z Sigma_z.
    if (mode == Mode::ideal) {
        const Operator r = mq::sigma_rotation(sys, spinsim::pi / 2.0, spinsim::pi / 2.0);
        rho.m = r * rho.m * r.adjoint();
    } else {
        rho = evolve(rho, pulse::mq_block_operator(
                              sys, pulse::MqBlock{mq.n_cycles, spinsim::pi / 4.0,
                                                  pulse::MqMode::pulse_level, mq.tau_s}));
    }
    res.rho_final = rho;
    res.timeline.push_back({"rho_a", rho});

    const double overlap = normalized_overlap(rho.m, rho_a_target(sys));
    res.metrics["raw_overlap"] = overlap;
    res.fidelity_vs_oracle = std::clamp(overlap, 0.0, 1.0);
    return res;
}

// ---------------------------------------------------------------------------
// Step B: pseudopure |up,u>
// ---------------------------------------------------------------------------

namespace detail {

// Populations in the computational basis summarized as the pseudopure
// decomposition rho = (lambda/128) I + mu |up,u><up,u| + residue.
inline void pseudopure_metrics(const DensityMatrix& rho, ExperimentResult& res) {
    const int d = static_cast<int>(rho.dim());
    const double trapped = rho.m(0, 0).real();
    double rest = 0.0;
    for (int i = 1; i < d; ++i) rest += rho.m(i, i).real();
    const double mean_rest = rest / (d - 1);
    const double mu = trapped - mean_rest;
    const double lambda = d * mean_rest;
    res.metrics["mu"] = mu;
    res.metrics["lambda"] = lambda;
    res.metrics["contrast"] =
        (lambda != 0.0) ? mu / std::abs(lambda) : std::numeric_limits<double>::infinity();
    // For a traceless deviation mu = -lambda identically, so the quality
    // lives in the residuals: population spread around the uniform
    // background and leftover coherences, both relative to mu.
    double spread2 = 0.0;
    for (int i = 1; i < d; ++i) {
        spread2 += std::pow(rho.m(i, i).real() - mean_rest, 2);
    }
    Operator offdiag = rho.m;
    offdiag.diagonal().setZero();
    res.metrics["offdiagonal_norm"] = offdiag.norm();
    if (mu > 0.0) {
        res.metrics["population_residual_rel"] = std::sqrt(spread2) / mu;
        res.metrics["offdiagonal_rel"] = offdiag.norm() / mu;
    }
}

// Allowed single-quantum transitions of the current state, strongest first.
// Excluded: anything touching the eigenstate hosting the trapped |up,u>
// population, anything within the spectral guard band of a transition that
// does touch it (Gaussian pulses leak), and near-duplicates of already
// chosen targets (one pulse covers both).
struct SaturationTarget {
    Channel channel;
    double freq_hz;
};

inline int protected_eigenstate(const SpinSystem& sys) {
    const Operator h = build_hamiltonian(sys);
    Eigen::SelfAdjointEigenSolver<Operator> es(h);
    int protect = 0;
    double best = -1.0;
    for (int i = 0; i < sys.dim(); ++i) {
        const double w = std::norm(es.eigenvectors()(0, i));
        if (w > best) {
            best = w;
            protect = i;
        }
    }
    return protect;
}

inline std::vector<SaturationTarget> saturation_targets(
    const SpinSystem& sys, const DensityMatrix& rho, int protect,
    const SaturationSettings& sat) {
    // Gaussian spectral width for the configured duration (+-3 sigma
    // truncation): sigma_t = T/6, sigma_f = 1 / (2 pi sigma_t).
    const double sigma_f = 3.0 / (spinsim::pi * sat.pulse_duration_s);
    const double guard = 3.0 * sigma_f;

    struct Cand {
        Channel ch;
        double freq;
        double strength;
    };
    std::vector<Cand> cands;
    std::vector<double> protected_freqs;
    for (const Channel ch : {Channel::h1, Channel::c13}) {
        for (const auto& line : spectra::transition_table(rho, sys, ch)) {
            if (line.from == protect || line.to == protect) {
                protected_freqs.push_back(line.freq_hz);
            } else {
                cands.push_back({ch, line.freq_hz, std::abs(line.intensity)});
            }
        }
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.strength != b.strength) return a.strength > b.strength;
        return a.freq < b.freq;
    });
    std::vector<SaturationTarget> targets;
    for (const auto& c : cands) {
        if (static_cast<int>(targets.size()) >= sat.max_targets) break;
        bool ok = true;
        for (const double f : protected_freqs) {
            if (std::abs(c.freq - f) < guard) ok = false;
        }
        for (const auto& t : targets) {
            if (t.channel == c.ch && std::abs(c.freq - t.freq_hz) < sigma_f) ok = false;
        }
        if (ok) targets.push_back({c.ch, c.freq});
    }
    return targets;
}

}  // namespace detail

inline ExperimentResult prepare_pseudopure(const SpinSystem& sys, Mode mode,
                                           const MqSettings& mq = {},
                                           const SaturationSettings& sat = {}) {
    ExperimentResult res;
    ExperimentResult step_a = prepare_rho_a(sys, mode, mq);
    DensityMatrix rho = step_a.rho_final;
    res.timeline.push_back({"rho_a", rho});
    res.metrics["rho_a_overlap"] = step_a.metrics["raw_overlap"];

    if (mode == Mode::ideal) {
        // Exact redistribution: keep the trapped |up,u> population,
        // equalize every other population, drop all coherences.
        const int d = static_cast<int>(rho.dim());
        double rest = 0.0;
        for (int i = 1; i < d; ++i) rest += rho.m(i, i).real();
        const double mean_rest = rest / (d - 1);
        Operator out = Operator::Zero(d, d);
        out(0, 0) = rho.m(0, 0).real();
        for (int i = 1; i < d; ++i) out(i, i) = mean_rest;
        rho.m = out;
        rho.kind = StateKind::deviation;
    } else {
        const int protect = detail::protected_eigenstate(sys);
        for (int round = 0; round < sat.n_rounds; ++round) {
            // Re-derive targets from the current populations so each round
            // attacks the largest remaining differences.
            const auto targets = detail::saturation_targets(sys, rho, protect, sat);
            for (const auto& t : targets) {
                pulse::ShapedPulse sp;
                sp.channel = t.channel;
                sp.envelope = pulse::GaussianEnvelope::for_flip(
                    sat.flip_angle, sat.pulse_duration_s);
                sp.carrier_offset_hz = t.freq_hz;
                sp.n_slices = sat.n_slices;
                rho = evolve(rho, pulse::shaped_pulse_operator(sys, sp));
                rho = pulse::apply_crusher(sys, rho,
                                           pulse::GradientCrusher{Channel::all});
            }
            res.timeline.push_back(
                {"saturation_round_" + std::to_string(round + 1), rho});
        }
    }
    res.rho_final = rho;
    res.timeline.push_back({"pseudopure", rho});
    detail::pseudopure_metrics(rho, res);
    if (!(res.metrics["mu"] > 0.0)) {
        throw std::runtime_error(
            "prepare_pseudopure: no trapped-population contrast (mu = " +
            std::to_string(res.metrics["mu"]) + ", lambda = " +
            std::to_string(res.metrics["lambda"]) + ")");
    }

    // Score against the canonical pseudopure deviation.
    const int d = static_cast<int>(rho.dim());
    Operator target = -Operator::Identity(d, d) / double(d);
    target(0, 0) += 1.0;
    const double overlap = normalized_overlap(rho.m, target);
    res.metrics["raw_overlap"] = overlap;
    res.fidelity_vs_oracle = std::clamp(overlap, 0.0, 1.0);
    return res;
}

// Canonical pseudopure deviation |up,u><up,u| - I/128 used as the expansion
// input (unit pure-part weight).
inline DensityMatrix canonical_pseudopure(const SpinSystem& sys) {
    const int d = sys.dim();
    Operator m = -Operator::Identity(d, d) / double(d);
    m(0, 0) += 1.0;
    return make_density(m, StateKind::deviation);
}

// ---------------------------------------------------------------------------
// Step C: expansion into a|all-up> + b|all-down>
// ---------------------------------------------------------------------------

// Closed-form intermediate state after the conditional-Z delay:
// cos(theta/2)|up>(|u>+|d>)/sqrt(2) + sin(theta/2)|down>(|u>-|d>)/sqrt(2).
inline CVector expansion_intermediate(const SpinSystem& sys, double theta) {
    const mq::SigmaBasis basis = mq::sigma_basis(sys);
    CVector psi = CVector::Zero(sys.dim());
    const double a = std::cos(theta / 2.0);
    const double b = std::sin(theta / 2.0);
    psi(basis.u_up) = a / std::sqrt(2.0);
    psi(basis.d_up) = a / std::sqrt(2.0);
    psi(basis.u_down) = b / std::sqrt(2.0);
    psi(basis.d_down) = -b / std::sqrt(2.0);
    return psi;
}

// Expansion oracle in the simulator basis: a|all-up> + b|all-down>.
inline CVector expansion_oracle(const SpinSystem& sys, double theta) {
    const mq::SigmaBasis basis = mq::sigma_basis(sys);
    CVector psi = CVector::Zero(sys.dim());
    psi(basis.u_up) = std::cos(theta / 2.0);
    psi(basis.d_down) = std::sin(theta / 2.0);
    return psi;
}

// Expands the pseudopure carbon state into the GHZ-type superposition.
// The input is the canonical pseudopure deviation; `mode` selects ideal
// subspace rotations or calibrated pulse-level blocks for the expansion
// pulses themselves (step-B imperfections are reported separately by
// prepare_pseudopure).
inline ExperimentResult expand(const SpinSystem& sys, double theta, Mode mode,
                               const MqSettings& mq = {}) {
    if (!std::isfinite(theta) || theta < 0.0 || theta > 2.0 * spinsim::pi) {
        throw std::invalid_argument("expand: theta must lie in [0, 2 pi]");
    }
    ExperimentResult res;
    DensityMatrix rho = canonical_pseudopure(sys);
    res.timeline.push_back({"pseudopure", rho});

    // theta-pulse on the carbon (about +y): |up> -> cos|up> + sin|down>.
    rho = evolve(rho, pulse::hard_pulse_operator(
                          sys, pulse::HardPulse{Channel::c13, theta, spinsim::pi / 2.0}));
    res.timeline.push_back({"theta_pulse", rho});

    // Opening sigma rotation: |u> -> (|u> + |d>)/sqrt(2) in both sectors.
    if (mode == Mode::ideal) {
        const Operator r = mq::sigma_rotation(sys, spinsim::pi / 2.0, spinsim::pi / 2.0);
        rho.m = r * rho.m * r.adjoint();
    } else {
        rho = evolve(rho, pulse::mq_block_operator(
                              sys, pulse::MqBlock{mq.n_cycles, spinsim::pi / 4.0,
                                                  pulse::MqMode::pulse_level, mq.tau_s}));
    }
    res.timeline.push_back({"sigma_open", rho});

    // Conditional-Z delay.
    rho = evolve(rho, detail::conditional_delay_operator(sys, mode));
    res.timeline.push_back({"conditional_delay", rho});
    res.metrics["intermediate_fidelity"] =
        pure_part_fidelity(rho, expansion_intermediate(sys, theta));

    // Closing sigma rotation at 270-degree sigma phase; the ideal mode adds
    // the zero-duration carbon pi z-realignment that completes the map onto
    // the expansion target.
    if (mode == Mode::ideal) {
        const Operator r = mq::sigma_rotation(sys, spinsim::pi / 2.0,
                                              3.0 * spinsim::pi / 2.0);
        const Operator rz = pulse::channel_z_rotation(sys, Channel::c13, spinsim::pi);
        rho.m = rz * (r * rho.m * r.adjoint()) * rz.adjoint();
    } else {
        rho = evolve(rho, pulse::mq_block_operator(
                              sys, pulse::MqBlock{mq.n_cycles, spinsim::pi / 6.0,
                                                  pulse::MqMode::pulse_level, mq.tau_s}));
    }
    res.rho_final = rho;
    res.timeline.push_back({"expanded", rho});

    const CVector oracle = expansion_oracle(sys, theta);
    res.fidelity_vs_oracle = pure_part_fidelity(rho, oracle);

    // Seven-quantum (all-spin) coherence magnitude of the pure part:
    // |ab| for the ideal expansion target.
    const auto [mu_raw, vec] = pure_part(rho);
    (void)vec;
    const double mu = mu_raw * double(sys.dim()) / double(sys.dim() - 1);
    const double seven = mq::project_order(rho, sys, 7, Channel::all).m.norm();
    res.metrics["seven_quantum_magnitude"] =
        (mu > 0.0) ? seven / (std::sqrt(2.0) * mu) : 0.0;
    return res;
}

// ---------------------------------------------------------------------------
// Decoherence-based measurement model
// ---------------------------------------------------------------------------

// Multiplies every all-spin coherence block of order p != 0 by
// exp(-t / T2(|p|)). With apply_t1 set, the order-zero block additionally
// relaxes toward the thermal deviation diagonal with rate 1/T1. Trace and
// Hermiticity are preserved exactly.
inline DensityMatrix measure_model(const DensityMatrix& rho, const SpinSystem& sys,
                                   double t, const RelaxationParams& params = {}) {
    if (!(t >= 0.0) || !std::isfinite(t)) {
        throw std::invalid_argument("measure_model: t must be >= 0");
    }
    params.validate();
    const auto decomp = mq::decompose(rho, sys, Channel::all);
    Operator out = Operator::Zero(rho.dim(), rho.dim());
    for (const auto& [p, comp] : decomp.components) {
        if (p == 0) {
            if (params.apply_t1 && rho.kind == StateKind::deviation) {
                const Operator eq = thermal_deviation_op(sys);
                // Diagonal part relaxes toward equilibrium diagonal.
                Operator eq_diag = Operator::Zero(rho.dim(), rho.dim());
                eq_diag.diagonal() = eq.diagonal();
                const double f = std::exp(-t / params.t1_s);
                out += eq_diag + f * (comp - eq_diag);
            } else {
                out += comp;
            }
        } else {
            out += std::exp(-t / params.t2_for_order(p)) * comp;
        }
    }
    DensityMatrix result;
    result.m = 0.5 * (out + out.adjoint());  // scrub numerical dust
    result.kind = rho.kind;
    return result;
}

}  // namespace spinsim::experiment
