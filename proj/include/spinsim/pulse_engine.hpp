#pragma once

// Pulse-program engine: hard pulses, delays, gradient crushers, shaped
// (Gaussian) pulses, multiple-quantum excitation blocks, and phase-cycled
// program execution with coherence-order filtering.
//
// Conventions
//   * All unitaries act on the full Hilbert space of the SpinSystem.
//   * A pulse of phase phi rotates about the axis (cos phi, sin phi, 0);
//     phase 0 = +x, phase pi/2 = +y.
//   * Event lists are time ordered: events[0] happens first.

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "spinsim/spin_core.hpp"
#include "spinsim/hamiltonian.hpp"
#include "spinsim/mq_coherence.hpp"

namespace spinsim::pulse {

// ---------------------------------------------------------------------------
// Event types
// ---------------------------------------------------------------------------

// Instantaneous rotation of every spin on a channel.
struct HardPulse {
    Channel channel = Channel::h1;
    double flip_angle = 0.0;  // radians
    double phase = 0.0;       // radians, 0 = +x
};

enum class DelayKind {
    full,                      // evolve under the complete Hamiltonian
    decoupled_heteronuclear,   // couplings between unlike species removed
};

struct Delay {
    double duration_s = 0.0;
    DelayKind kind = DelayKind::full;
};

// Idealized pulsed-field-gradient crusher: destroys every coherence of
// nonzero order on the given channel (keeps the order-zero block).
struct GradientCrusher {
    Channel channel = Channel::all;
};

// Gaussian RF envelope, truncated at +-truncation standard deviations.
struct GaussianEnvelope {
    double peak_amp_rad_s = 0.0;  // omega_1 at the center of the pulse
    double duration_s = 0.0;
    double truncation = 3.0;      // half-width in units of sigma

    double sigma() const { return duration_s / (2.0 * truncation); }

    double amplitude(double t) const {
        const double c = duration_s / 2.0;
        const double s = sigma();
        const double u = (t - c) / s;
        return peak_amp_rad_s * std::exp(-0.5 * u * u);
    }

    // Integral of amplitude(t) dt over [0, duration]: the net flip angle
    // delivered on resonance.
    double total_angle() const {
        const double s = sigma();
        return peak_amp_rad_s * s * std::sqrt(2.0 * spinsim::pi) *
               std::erf(truncation / std::sqrt(2.0));
    }

    // Envelope that delivers the requested on-resonance flip angle.
    static GaussianEnvelope for_flip(double flip_angle, double duration_s,
                                     double truncation = 3.0) {
        if (duration_s <= 0.0) {
            throw std::invalid_argument("GaussianEnvelope: duration must be positive");
        }
        if (truncation <= 0.0) {
            throw std::invalid_argument("GaussianEnvelope: truncation must be positive");
        }
        GaussianEnvelope env;
        env.peak_amp_rad_s = 1.0;
        env.duration_s = duration_s;
        env.truncation = truncation;
        env.peak_amp_rad_s = flip_angle / env.total_angle();
        return env;
    }
};

// Frequency-selective soft pulse. The carrier sits carrier_offset_hz away
// from the channel's rotating-frame zero; n_slices controls the time
// discretization of the envelope (the carrier itself is handled exactly in
// a co-rotating frame, so slices only need to resolve the Gaussian shape).
struct ShapedPulse {
    Channel channel = Channel::h1;
    GaussianEnvelope envelope;
    double carrier_offset_hz = 0.0;
    int n_slices = 128;
};

enum class MqMode {
    ideal,        // apply exp(-i H_dq t_eff) directly
    pulse_level,  // eight-pulse phase-alternated supercycle
};

// Double-quantum excitation block (proton channel). One supercycle lasts
// 6*tau_s of wall time and synthesizes the double-quantum average
// Hamiltonian for an effective time 3*tau_s.
struct MqBlock {
    int n_cycles = 1;
    double global_phase = 0.0;  // rotates the effective Hamiltonian's phase
    MqMode mode = MqMode::ideal;
    double tau_s = 0.0;
};

using PulseEvent =
    std::variant<HardPulse, Delay, GradientCrusher, ShapedPulse, MqBlock>;

// Coherence-order selection by phase cycling. The program is executed
// n_steps times with all pulse phases on `channel` advanced by
// phi_k = 2 pi k / n_steps; replica outputs are combined with weights
// exp(-i * target_order * phi_k) / n_steps and the result is Hermitized,
// which keeps exactly the +-target_order coherence orders.
struct PhaseCycle {
    int n_steps = 16;
    int target_order = 0;
    Channel channel = Channel::h1;
};

struct PulseProgram {
    std::vector<PulseEvent> events;
    std::optional<PhaseCycle> cycle;
};

// ---------------------------------------------------------------------------
// Elementary operators
// ---------------------------------------------------------------------------

inline Operator hard_pulse_operator(const SpinSystem& sys, const HardPulse& p) {
    const auto sites = sys.channel_sites(p.channel);
    if (sites.empty()) {
        throw std::invalid_argument("hard_pulse_operator: channel has no sites");
    }
    if (!std::isfinite(p.flip_angle) || !std::isfinite(p.phase)) {
        throw std::invalid_argument("hard_pulse_operator: non-finite angle");
    }
    const Operator fx = total_spin_op(sys.n_spins(), sites, Axis::x);
    const Operator fy = total_spin_op(sys.n_spins(), sites, Axis::y);
    const Operator gen = std::cos(p.phase) * fx + std::sin(p.phase) * fy;
    return propagator(gen, p.flip_angle);
}

inline Operator delay_operator(const SpinSystem& sys, const Delay& d) {
    if (!(d.duration_s >= 0.0) || !std::isfinite(d.duration_s)) {
        throw std::invalid_argument("delay_operator: duration must be >= 0");
    }
    if (d.kind == DelayKind::full) {
        return propagator(build_hamiltonian(sys), d.duration_s);
    }
    SpinSystem cut = sys;
    const int n = sys.n_spins();
    for (int j = 0; j < n; ++j) {
        for (int k = 0; k < n; ++k) {
            if (sys.sites[j].species != sys.sites[k].species) {
                cut.dipolar_hz(j, k) = 0.0;
                cut.jcoupling_hz(j, k) = 0.0;
            }
        }
    }
    return propagator(build_hamiltonian(cut), d.duration_s);
}

// z-rotation by `angle` of every spin on `channel`: exp(-i angle Fz_channel).
// Diagonal, so built directly.
inline Operator channel_z_rotation(const SpinSystem& sys, Channel channel,
                                   double angle) {
    const Eigen::VectorXd m = mq::m_values(sys, channel);
    Operator u = Operator::Zero(sys.dim(), sys.dim());
    for (int i = 0; i < sys.dim(); ++i) {
        u(i, i) = std::exp(Complex(0.0, -angle * m(i)));
    }
    return u;
}

// Projects out all coherence of nonzero order on the channel (ideal crusher
// after which only populations/zero-quantum terms on that channel survive).
inline DensityMatrix apply_crusher(const SpinSystem& sys, const DensityMatrix& rho,
                                   const GradientCrusher& g) {
    return mq::project_order(rho, sys, 0, g.channel);
}

// ---------------------------------------------------------------------------
// Shaped pulse
// ---------------------------------------------------------------------------

namespace detail {

// Propagator over the pulse window in the carrier frame, using a
// fourth-order commutator-free Magnus scheme: each slice is covered by two
// exponentials with the envelope sampled at the two Gauss-Legendre nodes.
inline Operator shaped_pulse_sliced(const Operator& h_frame, const Operator& fx,
                                    const GaussianEnvelope& env, int n_slices) {
    const int dim = static_cast<int>(h_frame.rows());
    const double dt = env.duration_s / n_slices;
    const double node = std::sqrt(3.0) / 6.0;  // Gauss-Legendre offset
    const double wa = 0.25 + node;             // Magnus weights
    const double wb = 0.25 - node;

    Operator u = Operator::Identity(dim, dim);
    Eigen::SelfAdjointEigenSolver<Operator> es;
    for (int i = 0; i < n_slices; ++i) {
        const double t0 = i * dt;
        const double a1 = env.amplitude(t0 + dt * (0.5 - node));
        const double a2 = env.amplitude(t0 + dt * (0.5 + node));
        // First exponential weights the early node more strongly; the
        // second mirrors it. Together they reproduce the time-ordered
        // propagator through fourth order in dt.
        const double amp_first = wa * a1 + wb * a2;
        const double amp_second = wb * a1 + wa * a2;
        for (const double amp : {amp_first, amp_second}) {
            const Operator gen = 0.5 * h_frame + amp * fx;
            es.compute(gen);
            u = (es.eigenvectors() *
                 (es.eigenvalues().array() * (-dt)).unaryExpr([](double x) {
                     return std::exp(Complex(0.0, x));
                 }).matrix().asDiagonal() *
                 es.eigenvectors().adjoint()) *
                u;
        }
    }
    return u;
}

}  // namespace detail

// Lab-frame (rotating-frame of the channel reference) propagator of a
// Gaussian shaped pulse. The carrier offset is removed by transforming into
// the frame rotating at the carrier, where only the smooth envelope is time
// dependent; the returned unitary includes the transformation back.
//
// Convergence is verified by recomputing with twice the slice count: if the
// two propagators differ by more than 1e-6 (Frobenius), a runtime_error is
// thrown rather than silently returning an under-resolved result. The
// finer result is returned.
inline Operator shaped_pulse_operator(const SpinSystem& sys, const ShapedPulse& p) {
    if (p.n_slices < 16) {
        throw std::invalid_argument("shaped_pulse_operator: n_slices must be >= 16");
    }
    if (p.envelope.duration_s <= 0.0) {
        throw std::invalid_argument("shaped_pulse_operator: duration must be positive");
    }
    const auto sites = sys.channel_sites(p.channel);
    if (sites.empty()) {
        throw std::invalid_argument("shaped_pulse_operator: channel has no sites");
    }

    const Operator h_sys = build_hamiltonian(sys);
    const Operator fx = total_spin_op(sys.n_spins(), sites, Axis::x);
    const Operator fz = total_spin_op(sys.n_spins(), sites, Axis::z);

    // The carrier-frame transformation is exact only when the internal
    // Hamiltonian conserves the channel's total z projection.
    const double comm = (h_sys * fz - fz * h_sys).norm();
    if (comm > tol::cross_oracle * (1.0 + h_sys.norm())) {
        throw std::runtime_error(
            "shaped_pulse_operator: Hamiltonian does not conserve channel Fz");
    }

    // Frame rotating with the carrier: psi~ = exp(-i w t Fz) psi gives
    // H~ = H + w Fz, which leaves the coherence displayed at +carrier_offset
    // static (a transition reported at f is driven by a carrier at f).
    const double w_carrier = 2.0 * spinsim::pi * p.carrier_offset_hz;
    const Operator h_frame = h_sys + w_carrier * fz;

    const Operator u_coarse =
        detail::shaped_pulse_sliced(h_frame, fx, p.envelope, p.n_slices);
    const Operator u_fine =
        detail::shaped_pulse_sliced(h_frame, fx, p.envelope, 2 * p.n_slices);

    const double resid = (u_fine - u_coarse).norm();
    if (!(resid < 1e-6)) {
        throw std::runtime_error(
            "shaped_pulse_operator: slicing not converged (doubling residual " +
            std::to_string(resid) + "); increase n_slices");
    }

    // Back from the carrier frame: exp(+i w_carrier T Fz).
    Operator frame_back = Operator::Zero(sys.dim(), sys.dim());
    for (int i = 0; i < sys.dim(); ++i) {
        frame_back(i, i) =
            std::exp(Complex(0.0, w_carrier * p.envelope.duration_s * fz(i, i).real()));
    }
    return frame_back * u_fine;
}

// ---------------------------------------------------------------------------
// Multiple-quantum excitation block
// ---------------------------------------------------------------------------

// Pure double-quantum Hamiltonian among the protons:
//   H_dq = -(1/2) sum_{j<k} 2 pi b_jk (S_j+ S_k+ + S_j- S_k-).
inline Operator build_h_dq(const SpinSystem& sys) {
    const int n = sys.n_spins();
    const auto protons = sys.channel_sites(Channel::h1);
    Operator h = Operator::Zero(sys.dim(), sys.dim());
    for (size_t a = 0; a < protons.size(); ++a) {
        for (size_t b = a + 1; b < protons.size(); ++b) {
            const int j = protons[a];
            const int k = protons[b];
            const double bjk = sys.dipolar_hz(j, k);
            if (bjk == 0.0) continue;
            const Operator pp = single_spin_op(n, j, Axis::plus) *
                                single_spin_op(n, k, Axis::plus);
            h -= spinsim::pi * bjk * (pp + pp.adjoint());
        }
    }
    return h;
}

inline void validate_mq_block(const MqBlock& b) {
    if (b.n_cycles < 1) {
        throw std::invalid_argument("MqBlock: n_cycles must be >= 1");
    }
    if (!(b.tau_s > 0.0) || !std::isfinite(b.tau_s)) {
        throw std::invalid_argument("MqBlock: tau_s must be positive");
    }
}

// Effective double-quantum evolution time synthesized by the block.
inline double mq_effective_time(const MqBlock& b) {
    return 3.0 * b.tau_s * b.n_cycles;
}

// Wall-clock duration of the block.
inline double mq_wall_time(const MqBlock& b) {
    return 6.0 * b.tau_s * b.n_cycles;
}

namespace detail {

// One supercycle of the eight-pulse double-quantum sequence, time ordered.
// fe(t) denotes free evolution for t; p(phi) a proton 90-degree pulse of
// phase phi. Over one cycle the zeroth-order average Hamiltonian is
// 0.5 * H_dq (effective time 3 tau out of 6 tau wall time), heteronuclear
// couplings and proton offsets average to zero, and the net rotation is
// cyclic.
inline Operator mq_supercycle(const SpinSystem& sys, double tau, double phi) {
    const Operator h = build_hamiltonian(sys);
    const Operator fe_half = propagator(h, tau / 2.0);
    const Operator fe_two = propagator(h, 2.0 * tau);
    const Operator p0 =
        hard_pulse_operator(sys, HardPulse{Channel::h1, spinsim::pi / 2.0, phi});
    const Operator p180 = hard_pulse_operator(
        sys, HardPulse{Channel::h1, spinsim::pi / 2.0, phi + spinsim::pi});

    const Operator* seq[] = {
        &fe_half, &p0,   &fe_two, &p180, &fe_half,  // first half
        &p180,    &p180,                            // composite refocusing
        &fe_half, &p0,   &fe_two, &p180, &fe_half,  // second half
        &p0,      &p0,                              // closing rotation
    };
    Operator u = Operator::Identity(sys.dim(), sys.dim());
    for (const Operator* e : seq) {
        u = (*e) * u;
    }
    return u;
}

}  // namespace detail

inline Operator mq_block_operator(const SpinSystem& sys, const MqBlock& b) {
    validate_mq_block(b);
    if (b.mode == MqMode::ideal) {
        const Operator u0 = propagator(build_h_dq(sys), mq_effective_time(b));
        if (b.global_phase == 0.0) return u0;
        const Operator rz = channel_z_rotation(sys, Channel::h1, b.global_phase);
        return rz * u0 * rz.adjoint();
    }
    const Operator cycle = detail::mq_supercycle(sys, b.tau_s, b.global_phase);
    Operator u = Operator::Identity(sys.dim(), sys.dim());
    for (int i = 0; i < b.n_cycles; ++i) {
        u = cycle * u;
    }
    return u;
}

// ---------------------------------------------------------------------------
// Block quality metric and tau calibration
// ---------------------------------------------------------------------------

// How well `u` enacts a 90-degree rotation of the collective two-level
// system spanned by the all-up / all-down proton states: an ideal block
// takes |u> to (|u> + e^{i chi} |d>)/sqrt(2) within each carbon sector.
// F = (|<u|U|u>| + |<d|U|u>|)^2 / 2, minimized over the two carbon sectors.
inline double mq_sigma_fidelity(const SpinSystem& sys, const Operator& u) {
    const mq::SigmaBasis basis = mq::sigma_basis(sys);
    const Eigen::Index pairs[2][2] = {{basis.u_up, basis.d_up},
                                      {basis.u_down, basis.d_down}};
    double fmin = 1.0;
    for (const auto& pair : pairs) {
        const double au = std::abs(u(pair[0], pair[0]));
        const double ad = std::abs(u(pair[1], pair[0]));
        const double f = 0.5 * (au + ad) * (au + ad);
        fmin = std::min(fmin, f);
    }
    return fmin;
}

struct MqCalibration {
    double tau_s = 0.0;          // per-cycle tau achieving the best fidelity
    double sigma_fidelity = 0.0; // metric at the optimum
    double t_effective_s = 0.0;  // 3 * tau * n_cycles at the optimum
};

namespace detail {

// Fidelity of the ideal double-quantum propagator at effective time t,
// evaluated from a precomputed eigendecomposition of H_dq.
inline double ideal_sigma_fidelity_at(const Eigen::VectorXd& evals,
                                      const Operator& evecs,
                                      const mq::SigmaBasis& basis, double t) {
    const Eigen::Index pairs[2][2] = {{basis.u_up, basis.d_up},
                                      {basis.u_down, basis.d_down}};
    double fmin = 1.0;
    for (const auto& pair : pairs) {
        Complex uu = 0.0;
        Complex du = 0.0;
        for (int m = 0; m < evals.size(); ++m) {
            const Complex ph = std::exp(Complex(0.0, -evals(m) * t));
            uu += evecs(pair[0], m) * std::conj(evecs(pair[0], m)) * ph;
            du += evecs(pair[1], m) * std::conj(evecs(pair[0], m)) * ph;
        }
        const double f = 0.5 * std::pow(std::abs(uu) + std::abs(du), 2);
        fmin = std::min(fmin, f);
    }
    return fmin;
}

}  // namespace detail

// Finds the per-cycle tau that best realizes the collective 90-degree
// double-quantum rotation for the given cycle count. The ideal mode scans
// the effective time directly from the eigendecomposition of H_dq; the
// pulse-level mode refines around the ideal optimum.
inline MqCalibration calibrate_mq_tau(const SpinSystem& sys, int n_cycles,
                                      MqMode mode) {
    if (n_cycles < 1) {
        throw std::invalid_argument("calibrate_mq_tau: n_cycles must be >= 1");
    }
    const auto protons = sys.channel_sites(Channel::h1);
    double bmax = 0.0;
    for (size_t a = 0; a < protons.size(); ++a) {
        for (size_t b = a + 1; b < protons.size(); ++b) {
            bmax = std::max(bmax, std::abs(sys.dipolar_hz(protons[a], protons[b])));
        }
    }
    if (bmax == 0.0) {
        throw std::invalid_argument("calibrate_mq_tau: no homonuclear couplings");
    }

    const mq::SigmaBasis basis = mq::sigma_basis(sys);
    Eigen::SelfAdjointEigenSolver<Operator> es(build_h_dq(sys));
    const Eigen::VectorXd& evals = es.eigenvalues();
    const Operator& evecs = es.eigenvectors();

    // Coarse scan of the effective time, then two zoomed refinements.
    double lo = 0.0;
    double hi = 2.5 / bmax;
    double best_t = 0.0;
    double best_f = -1.0;
    for (int round = 0; round < 3; ++round) {
        const int npts = (round == 0) ? 1200 : 60;
        const double step = (hi - lo) / npts;
        for (int i = 1; i <= npts; ++i) {
            const double t = lo + i * step;
            const double f =
                detail::ideal_sigma_fidelity_at(evals, evecs, basis, t);
            if (f > best_f) {
                best_f = f;
                best_t = t;
            }
        }
        lo = std::max(0.0, best_t - step);
        hi = best_t + step;
    }

    MqCalibration cal;
    cal.t_effective_s = best_t;
    cal.tau_s = best_t / (3.0 * n_cycles);
    cal.sigma_fidelity = best_f;
    if (mode == MqMode::ideal) return cal;

    // Pulse-level refinement around the ideal optimum.
    double tlo = 0.85 * cal.tau_s;
    double thi = 1.15 * cal.tau_s;
    double best_tau = cal.tau_s;
    best_f = -1.0;
    for (int round = 0; round < 2; ++round) {
        const int npts = (round == 0) ? 24 : 10;
        const double step = (thi - tlo) / npts;
        for (int i = 0; i <= npts; ++i) {
            const double tau = tlo + i * step;
            MqBlock b{n_cycles, 0.0, MqMode::pulse_level, tau};
            const double f = mq_sigma_fidelity(sys, mq_block_operator(sys, b));
            if (f > best_f) {
                best_f = f;
                best_tau = tau;
            }
        }
        tlo = std::max(1e-9, best_tau - step);
        thi = best_tau + step;
    }
    cal.tau_s = best_tau;
    cal.sigma_fidelity = best_f;
    cal.t_effective_s = 3.0 * best_tau * n_cycles;
    return cal;
}

// ---------------------------------------------------------------------------
// Program execution
// ---------------------------------------------------------------------------

// Total wall-clock time of a program (pulses and crushers are instantaneous).
inline double program_duration(const PulseProgram& prog) {
    double t = 0.0;
    for (const auto& ev : prog.events) {
        if (const auto* d = std::get_if<Delay>(&ev)) {
            t += d->duration_s;
        } else if (const auto* s = std::get_if<ShapedPulse>(&ev)) {
            t += s->envelope.duration_s;
        } else if (const auto* m = std::get_if<MqBlock>(&ev)) {
            t += mq_wall_time(*m);
        }
    }
    return t;
}

namespace detail {

// Applies one event to the state, with every phase-controllable event on
// `shift_channel` advanced by `phase_shift`.
inline DensityMatrix apply_event(const SpinSystem& sys, const PulseEvent& ev,
                                 const DensityMatrix& rho, Channel shift_channel,
                                 double phase_shift) {
    if (const auto* p = std::get_if<HardPulse>(&ev)) {
        HardPulse shifted = *p;
        // A pulse participates in the cycle when its channel overlaps the
        // cycled channel.
        if (p->channel == shift_channel || shift_channel == Channel::all ||
            p->channel == Channel::all) {
            shifted.phase += phase_shift;
        }
        return evolve(rho, hard_pulse_operator(sys, shifted));
    }
    if (const auto* d = std::get_if<Delay>(&ev)) {
        return evolve(rho, delay_operator(sys, *d));
    }
    if (const auto* g = std::get_if<GradientCrusher>(&ev)) {
        return apply_crusher(sys, rho, *g);
    }
    if (const auto* s = std::get_if<ShapedPulse>(&ev)) {
        return evolve(rho, shaped_pulse_operator(sys, *s));
    }
    const auto& b = std::get<MqBlock>(ev);
    MqBlock shifted = b;
    if (shift_channel == Channel::h1 || shift_channel == Channel::all) {
        shifted.global_phase += phase_shift;
    }
    return evolve(rho, mq_block_operator(sys, shifted));
}

// Replica-ready event: the zero-shift operator plus, for phase-shiftable
// events, the z-generator eigenvalues of the event's own channel. Shifting
// the event's phase by phi equals conjugation with exp(-i phi m), so the
// expensive operator is built once and reused across the whole cycle.
struct PreparedEvent {
    bool is_crusher = false;
    GradientCrusher crusher;
    Operator u0;
    bool shiftable = false;
    Eigen::VectorXd mvec;
};

inline std::vector<PreparedEvent> prepare_events(const SpinSystem& sys,
                                                 const std::vector<PulseEvent>& events,
                                                 Channel shift_channel) {
    std::vector<PreparedEvent> out;
    out.reserve(events.size());
    for (const auto& ev : events) {
        PreparedEvent pe;
        if (const auto* p = std::get_if<HardPulse>(&ev)) {
            pe.u0 = hard_pulse_operator(sys, *p);
            if (p->channel == shift_channel || shift_channel == Channel::all ||
                p->channel == Channel::all) {
                pe.shiftable = true;
                pe.mvec = mq::m_values(sys, p->channel);
            }
        } else if (const auto* d = std::get_if<Delay>(&ev)) {
            pe.u0 = delay_operator(sys, *d);
        } else if (const auto* g = std::get_if<GradientCrusher>(&ev)) {
            pe.is_crusher = true;
            pe.crusher = *g;
        } else if (const auto* s = std::get_if<ShapedPulse>(&ev)) {
            pe.u0 = shaped_pulse_operator(sys, *s);
        } else {
            // The excitation block is a train of proton pulses; a global
            // phase advance conjugates it with the proton z-rotation.
            pe.u0 = mq_block_operator(sys, std::get<MqBlock>(ev));
            if (shift_channel == Channel::h1 || shift_channel == Channel::all) {
                pe.shiftable = true;
                pe.mvec = mq::m_values(sys, Channel::h1);
            }
        }
        out.push_back(std::move(pe));
    }
    return out;
}

inline void apply_prepared(const SpinSystem& sys, const PreparedEvent& pe,
                           DensityMatrix& rho, double phase_shift) {
    if (pe.is_crusher) {
        rho = apply_crusher(sys, rho, pe.crusher);
        return;
    }
    if (pe.shiftable && phase_shift != 0.0) {
        CVector d(pe.mvec.size());
        for (Eigen::Index i = 0; i < pe.mvec.size(); ++i) {
            d(i) = std::exp(Complex(0.0, -phase_shift * pe.mvec(i)));
        }
        const Operator u = d.asDiagonal() * pe.u0 * d.conjugate().asDiagonal();
        rho.m = u * rho.m * u.adjoint();
    } else {
        rho.m = pe.u0 * rho.m * pe.u0.adjoint();
    }
}

}  // namespace detail

// Executes a pulse program. Without a phase cycle the events are applied in
// order. With a cycle, the program is executed n_steps times with pulse
// phases on the cycled channel advanced by phi_k = 2 pi k / n_steps, and
// the replica's input state is expressed in the same rotated frame
// (rho_k = Rz(phi_k) rho Rz(-phi_k)), exactly as the state entering the
// filter would appear if everything upstream were phase-shifted alongside.
// The weighted average with weights exp(-i p phi_k) / n_steps plus the
// final Hermitization then equals the analytic +-p coherence projection of
// the uncycled output -- exactly, for any input state.
inline DensityMatrix run_program(const SpinSystem& sys, const PulseProgram& prog,
                                 const DensityMatrix& rho_in) {
    if (rho_in.dim() != sys.dim()) {
        throw std::invalid_argument("run_program: state dimension mismatch");
    }
    if (!prog.cycle) {
        DensityMatrix rho = rho_in;
        for (const auto& ev : prog.events) {
            rho = detail::apply_event(sys, ev, rho, Channel::all, 0.0);
        }
        return rho;
    }

    const PhaseCycle& cyc = *prog.cycle;
    const int max_order = static_cast<int>(sys.channel_sites(cyc.channel).size());
    if (std::abs(cyc.target_order) > max_order) {
        throw std::invalid_argument(
            "run_program: target order exceeds the channel's maximum order");
    }
    if (cyc.n_steps <= 2 * max_order) {
        throw std::invalid_argument(
            "run_program: n_steps must exceed twice the maximum coherence order");
    }

    const int m = cyc.n_steps;
    const int p = cyc.target_order;
    const auto prepared = detail::prepare_events(sys, prog.events, cyc.channel);
    const Eigen::VectorXd mv = mq::m_values(sys, cyc.channel);
    Operator acc = Operator::Zero(sys.dim(), sys.dim());
    for (int k = 0; k < m; ++k) {
        const double phi = 2.0 * spinsim::pi * k / m;
        DensityMatrix rho = rho_in;
        // Co-rotate the input: rho_k = Rz(phi) rho Rz(-phi), elementwise
        // since Rz is diagonal.
        for (Eigen::Index i = 0; i < rho.dim(); ++i) {
            for (Eigen::Index j = 0; j < rho.dim(); ++j) {
                rho.m(i, j) *= std::exp(Complex(0.0, -phi * (mv(i) - mv(j))));
            }
        }
        for (const auto& pe : prepared) {
            detail::apply_prepared(sys, pe, rho, phi);
        }
        const Complex w = std::exp(Complex(0.0, -p * phi)) / double(m);
        acc += w * rho.m;
    }

    DensityMatrix out;
    out.kind = StateKind::deviation;
    if (p == 0) {
        out.m = 0.5 * (acc + acc.adjoint());
        out.kind = rho_in.kind;  // zero-order filtering preserves the trace
    } else {
        // acc holds the -p component of the nominal output; adding its
        // adjoint restores the +p partner (the quadrature-combined pair a
        // receiver detects after the read pulse).
        out.m = acc + acc.adjoint();
    }
    return out;
}

}  // namespace spinsim::pulse
