#pragma once

// Linear-response NMR spectra via two independent routes (eigenbasis
// transition table and Fourier-transformed free-induction decay), peak
// extraction, and peak-count combinatorics.
//
// Conventions
//   * A transition between eigenstates i and j with <i|F+|j> != 0 produces
//     a line at f = (E_j - E_i) / 2 pi with intensity
//     |<i|F+|j>|^2 (rho^e_ii - rho^e_jj); for the thermal state this gives
//     positive absorption lines at the offset frequencies.
//   * Intensities are normalized so the thermal-equilibrium spectrum of the
//     same system integrates to 1 on each channel; lines are rendered as
//     unit-area Lorentzians of the requested FWHM.

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "spinsim/spin_core.hpp"
#include "spinsim/hamiltonian.hpp"

namespace spinsim::spectra {

struct Peak {
    double freq_hz = 0.0;
    double intensity = 0.0;  // signed
    int sign = 0;            // sign of intensity
};

struct Spectrum {
    Channel channel = Channel::h1;
    Eigen::VectorXd freq_hz;    // uniform ascending grid
    Eigen::VectorXd amplitude;  // same length as freq_hz
    std::vector<Peak> peaks;    // sorted by frequency
};

// One allowed single-quantum transition between Hamiltonian eigenstates.
struct TransitionLine {
    double freq_hz = 0.0;
    double intensity = 0.0;  // population-difference weighted, normalized
    int from = 0;            // eigenstate index of the higher-m state (i)
    int to = 0;              // eigenstate index j
};

namespace detail {

inline Operator raising_op(const SpinSystem& sys, Channel channel) {
    const auto sites = sys.channel_sites(channel);
    if (sites.empty()) {
        throw std::invalid_argument("spectra: channel has no sites");
    }
    Operator fp = Operator::Zero(sys.dim(), sys.dim());
    for (int s : sites) {
        fp += single_spin_op(sys.n_spins(), s, Axis::plus);
    }
    return fp;
}

// Sum of line intensities of the thermal-equilibrium state on `channel`,
// used as the per-channel normalization constant (unit integrated thermal
// spectrum). Positive for any system with positive gyromagnetic weights.
inline double thermal_line_sum(const SpinSystem& sys, Channel channel,
                               const Eigen::VectorXd& evals, const Operator& evecs) {
    const Operator rho_th = thermal_deviation_op(sys);
    const Operator fp_e = evecs.adjoint() * raising_op(sys, channel) * evecs;
    double sum = 0.0;
    const int d = sys.dim();
    for (int i = 0; i < d; ++i) {
        const double pi_pop = (evecs.col(i).adjoint() * rho_th * evecs.col(i))(0).real();
        for (int j = 0; j < d; ++j) {
            const double a2 = std::norm(fp_e(i, j));
            if (a2 < 1e-18) continue;
            const double pj_pop = (evecs.col(j).adjoint() * rho_th * evecs.col(j))(0).real();
            sum += a2 * (pi_pop - pj_pop);
        }
    }
    (void)evals;
    return sum;
}

}  // namespace detail

// All single-quantum transitions of the system on a channel, weighted by the
// eigenbasis populations of `rho`. Degenerate transitions (within 1e-6 Hz)
// are merged into single lines; lines below 1e-12 of the strongest are
// dropped. Intensities are normalized by the channel's thermal line sum.
inline std::vector<TransitionLine> transition_table(const DensityMatrix& rho,
                                                    const SpinSystem& sys,
                                                    Channel channel) {
    if (rho.dim() != sys.dim()) {
        throw std::invalid_argument("transition_table: dimension mismatch");
    }
    const Operator h = build_hamiltonian(sys);
    Eigen::SelfAdjointEigenSolver<Operator> es(h);
    const Eigen::VectorXd& evals = es.eigenvalues();
    const Operator& evecs = es.eigenvectors();

    const Operator fp_e = evecs.adjoint() * detail::raising_op(sys, channel) * evecs;
    const Operator rho_e = evecs.adjoint() * rho.m * evecs;

    const double norm_const = detail::thermal_line_sum(sys, channel, evals, evecs);
    if (!(std::abs(norm_const) > 0.0)) {
        throw std::runtime_error("transition_table: thermal normalization vanished");
    }

    std::vector<TransitionLine> raw;
    const int d = sys.dim();
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            const double a2 = std::norm(fp_e(i, j));
            if (a2 < 1e-18) continue;
            TransitionLine line;
            line.freq_hz = (evals(j) - evals(i)) / (2.0 * spinsim::pi);
            line.intensity =
                a2 * (rho_e(i, i).real() - rho_e(j, j).real()) / norm_const;
            line.from = i;
            line.to = j;
            raw.push_back(line);
        }
    }
    std::sort(raw.begin(), raw.end(), [](const TransitionLine& a, const TransitionLine& b) {
        return a.freq_hz < b.freq_hz;
    });

    // Merge degenerate lines.
    std::vector<TransitionLine> merged;
    for (const auto& line : raw) {
        if (!merged.empty() && std::abs(line.freq_hz - merged.back().freq_hz) < 1e-6) {
            merged.back().intensity += line.intensity;
        } else {
            merged.push_back(line);
        }
    }
    double imax = 0.0;
    for (const auto& line : merged) imax = std::max(imax, std::abs(line.intensity));
    std::vector<TransitionLine> out;
    for (const auto& line : merged) {
        if (std::abs(line.intensity) > 1e-12 * imax) out.push_back(line);
    }
    return out;
}

namespace detail {

inline Eigen::VectorXd uniform_grid(double f_max, int n_points) {
    Eigen::VectorXd f(n_points);
    const double step = 2.0 * f_max / n_points;
    for (int k = 0; k < n_points; ++k) {
        f(k) = -f_max + k * step;
    }
    return f;
}

inline void render_lorentzians(const std::vector<TransitionLine>& lines,
                               const Eigen::VectorXd& grid, double broadening_hz,
                               Eigen::VectorXd& amp) {
    const double gamma = broadening_hz / 2.0;  // HWHM
    amp = Eigen::VectorXd::Zero(grid.size());
    for (const auto& line : lines) {
        for (int k = 0; k < grid.size(); ++k) {
            const double df = grid(k) - line.freq_hz;
            amp(k) += line.intensity * (gamma / spinsim::pi) / (df * df + gamma * gamma);
        }
    }
}

}  // namespace detail

// Frequency-domain spectrum from the transition table. f_max_hz = 0 picks
// the grid half-width automatically from the largest transition frequency.
inline Spectrum transition_spectrum(const DensityMatrix& rho, const SpinSystem& sys,
                                    Channel channel, double broadening_hz,
                                    int n_points = 8192, double f_max_hz = 0.0) {
    if (!(broadening_hz > 0.0)) {
        throw std::invalid_argument("transition_spectrum: broadening must be positive");
    }
    if (n_points < 2) {
        throw std::invalid_argument("transition_spectrum: n_points too small");
    }
    const auto lines = transition_table(rho, sys, channel);

    double f_abs_max = 0.0;
    for (const auto& line : lines) f_abs_max = std::max(f_abs_max, std::abs(line.freq_hz));
    if (f_max_hz <= 0.0) {
        f_max_hz = std::max(1.1 * f_abs_max, 20.0 * broadening_hz);
    }

    Spectrum spec;
    spec.channel = channel;
    spec.freq_hz = detail::uniform_grid(f_max_hz, n_points);
    detail::render_lorentzians(lines, spec.freq_hz, broadening_hz, spec.amplitude);
    for (const auto& line : lines) {
        Peak p;
        p.freq_hz = line.freq_hz;
        p.intensity = line.intensity;
        p.sign = (line.intensity >= 0.0) ? 1 : -1;
        spec.peaks.push_back(p);
    }
    return spec;
}

namespace detail {

// In-place iterative radix-2 FFT, X_k = sum_n x_n exp(-2 pi i k n / N).
inline void fft_radix2(std::vector<Complex>& x) {
    const size_t n = x.size();
    if (n == 0 || (n & (n - 1)) != 0) {
        throw std::invalid_argument("fft_radix2: length must be a power of two");
    }
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[i], x[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * spinsim::pi / static_cast<double>(len);
        const Complex wlen(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            Complex w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                const Complex u = x[i + k];
                const Complex v = x[i + k + len / 2] * w;
                x[i + k] = u + v;
                x[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

}  // namespace detail

// Time-domain route: small-angle readout pulse, complex FID sampling of
// Tr(rho(t) F+), exponential apodization matching `broadening_hz`, DFT.
// Peak positions agree with transition_spectrum to within one grid bin when
// the grids coincide (dwell_s = 1 / (2 f_max), same n_points); amplitudes
// agree to leading order in the readout flip angle.
inline Spectrum fid_spectrum(const DensityMatrix& rho, const SpinSystem& sys,
                             Channel channel, double readout_flip, int n_points,
                             double dwell_s, double broadening_hz) {
    if (n_points < 2 || (n_points & (n_points - 1)) != 0) {
        throw std::invalid_argument("fid_spectrum: n_points must be a power of two");
    }
    if (!(dwell_s > 0.0)) {
        throw std::invalid_argument("fid_spectrum: dwell must be positive");
    }
    if (!(broadening_hz > 0.0)) {
        throw std::invalid_argument("fid_spectrum: broadening must be positive");
    }
    const Operator h = build_hamiltonian(sys);
    Eigen::SelfAdjointEigenSolver<Operator> es(h);
    const Eigen::VectorXd& evals = es.eigenvalues();
    const Operator& evecs = es.eigenvectors();

    // Readout pulse about +y on the observed channel.
    const auto sites = sys.channel_sites(channel);
    if (sites.empty()) {
        throw std::invalid_argument("fid_spectrum: channel has no sites");
    }
    const Operator fy = total_spin_op(sys.n_spins(), sites, Axis::y);
    const Operator u_read = propagator(fy, readout_flip);
    const Operator rho_read = u_read * rho.m * u_read.adjoint();

    const Operator fp_e = evecs.adjoint() * detail::raising_op(sys, channel) * evecs;
    const Operator rho_e = evecs.adjoint() * rho_read * evecs;

    // FID as a sparse sum of oscillating terms: s(t) = sum c e^{-i w t}.
    struct Term { double omega; Complex c; };
    std::vector<Term> terms;
    double f_abs_max = 0.0;
    const int d = sys.dim();
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            const Complex c = rho_e(i, j) * fp_e(j, i);
            if (std::abs(c) < 1e-16) continue;
            const double omega = evals(i) - evals(j);
            terms.push_back({omega, c});
            f_abs_max = std::max(f_abs_max, std::abs(omega) / (2.0 * spinsim::pi));
        }
    }
    const double nyquist = 0.5 / dwell_s;
    if (f_abs_max > nyquist) {
        throw std::runtime_error(
            "fid_spectrum: aliasing, max transition frequency " +
            std::to_string(f_abs_max) + " Hz exceeds Nyquist " +
            std::to_string(nyquist) + " Hz");
    }

    const double tau_apod = 1.0 / (spinsim::pi * broadening_hz);
    std::vector<Complex> s(n_points);
    for (int n = 0; n < n_points; ++n) {
        const double t = n * dwell_s;
        Complex v(0.0, 0.0);
        for (const auto& term : terms) {
            v += term.c * std::exp(Complex(0.0, -term.omega * t));
        }
        s[n] = v * std::exp(-t / tau_apod);
    }
    s[0] *= 0.5;  // half-weight first point (trapezoidal DC correction)

    // Positive-exponent DFT via conj(FFT(conj(s))).
    for (auto& v : s) v = std::conj(v);
    detail::fft_radix2(s);
    for (auto& v : s) v = std::conj(v);

    // Wrap to an ascending frequency grid centered at zero.
    Spectrum spec;
    spec.channel = channel;
    spec.freq_hz.resize(n_points);
    spec.amplitude.resize(n_points);
    const double df = 1.0 / (n_points * dwell_s);
    // Deterministic per-channel scale: match the transition route's thermal
    // normalization. The factor 4 calibrates out the one-sided-FT
    // half-Lorentzian (2x) and the 90-degree linear-response coherence
    // amplitude delta/2 (2x), so a 90-degree readout of a population state
    // lands on the transition-spectrum amplitude scale.
    const double norm_const = detail::thermal_line_sum(sys, channel, evals, evecs);
    const double scale = 4.0 * dwell_s / norm_const;
    for (int k = 0; k < n_points; ++k) {
        const int src = (k + n_points / 2) % n_points;  // src index for f < 0 first
        const double f = (src < n_points / 2) ? src * df : (src - n_points) * df;
        spec.freq_hz(k) = f;
        spec.amplitude(k) = s[src].real() * scale;
    }
    return spec;
}

enum class CouplingTopology { dipolar, zz };

// Maximum number of distinct lines in the spectrum of n coupled spins-1/2:
// binomial(2n, n+1) when dipolar couplings mix the Zeeman manifolds,
// n 2^{n-1} when only ZZ couplings are present.
inline long long max_peaks(int n, CouplingTopology topology) {
    if (n < 1) {
        throw std::invalid_argument("max_peaks: n must be >= 1");
    }
    if (topology == CouplingTopology::zz) {
        if (n > 62) throw std::invalid_argument("max_peaks: n too large");
        return static_cast<long long>(n) * (1LL << (n - 1));
    }
    // binomial(2n, n+1), exact integer arithmetic
    if (n > 30) throw std::invalid_argument("max_peaks: n too large");
    unsigned long long result = 1;
    const int top = 2 * n;
    const int k = n - 1;  // binomial(2n, n+1) = binomial(2n, n-1)
    for (int i = 1; i <= k; ++i) {
        result = result * static_cast<unsigned long long>(top - k + i) /
                 static_cast<unsigned long long>(i);
    }
    return static_cast<long long>(result);
}

// Local maxima of |amplitude| above threshold_rel * max|amplitude|.
inline std::vector<Peak> peak_pick(const Spectrum& spec, double threshold_rel) {
    if (!(threshold_rel > 0.0) || !(threshold_rel < 1.0)) {
        throw std::invalid_argument("peak_pick: threshold must be in (0, 1)");
    }
    const int n = static_cast<int>(spec.amplitude.size());
    double amax = 0.0;
    for (int k = 0; k < n; ++k) amax = std::max(amax, std::abs(spec.amplitude(k)));
    std::vector<Peak> peaks;
    if (amax == 0.0) return peaks;
    const double cut = threshold_rel * amax;
    for (int k = 1; k + 1 < n; ++k) {
        const double a = std::abs(spec.amplitude(k));
        if (a < cut) continue;
        if (a > std::abs(spec.amplitude(k - 1)) &&
            a >= std::abs(spec.amplitude(k + 1))) {
            Peak p;
            p.freq_hz = spec.freq_hz(k);
            p.intensity = spec.amplitude(k);
            p.sign = (spec.amplitude(k) >= 0.0) ? 1 : -1;
            peaks.push_back(p);
        }
    }
    return peaks;
}

inline std::string channel_name(Channel c) {
    switch (c) {
        case Channel::c13: return "C13";
        case Channel::h1: return "H1";
        default: return "all";
    }
}

// CSV format: `# channel=<name>` header, then `freq_hz,amplitude` rows.
inline void write_csv(const Spectrum& spec, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("write_csv: cannot open " + path);
    }
    out << "# channel=" << channel_name(spec.channel) << "\n";
    out << "freq_hz,amplitude\n";
    out << std::setprecision(12);
    for (int k = 0; k < spec.freq_hz.size(); ++k) {
        out << spec.freq_hz(k) << "," << spec.amplitude(k) << "\n";
    }
}

}  // namespace spinsim::spectra
