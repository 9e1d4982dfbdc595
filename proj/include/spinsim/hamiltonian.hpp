#pragma once
// Rotating-frame Hamiltonian of the dipolar-coupled cluster.
//
//   H = - sum_i 2*pi*offset_i * S_iZ
//       + sum_{heteronuclear j<k} 2*pi*(b_jk + J_jk) * S_jZ S_kZ
//       + sum_{homonuclear  j<k} 2*pi*b_jk * (S_kZ S_jZ - S_kX S_jX/2 - S_kY S_jY/2)
//
// Heteronuclear couplings are ZZ-only (secular approximation for unlike
// spins); homonuclear couplings carry the full truncated dipolar form.
// All inputs are in Hz; the Hz -> rad/s conversion happens exactly once,
// here. Homonuclear J entries are neglected (they are zero in the preset;
// config validation warns if set).

#include "spin_core.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace spinsim {

enum class Species { c13, h1 };
enum class Channel { c13, h1, all };

inline bool channel_matches(Species s, Channel ch) {
  return ch == Channel::all || (ch == Channel::c13 && s == Species::c13) ||
         (ch == Channel::h1 && s == Species::h1);
}

struct Site {
  Species species;
  double offset_hz = 0.0;  // rotating-frame offset
};

struct SpinSystem {
  std::vector<Site> sites;
  Eigen::MatrixXd dipolar_hz;    // b_jk / 2pi, symmetric, zero diagonal
  Eigen::MatrixXd jcoupling_hz;  // J_jk / 2pi, symmetric, zero diagonal

  int n_spins() const { return static_cast<int>(sites.size()); }
  Eigen::Index dim() const { return Eigen::Index(1) << sites.size(); }

  std::vector<int> channel_sites(Channel ch) const {
    std::vector<int> out;
    for (int i = 0; i < n_spins(); ++i)
      if (channel_matches(sites[i].species, ch)) out.push_back(i);
    return out;
  }
};

inline void check_coupling_matrix(const Eigen::MatrixXd& m, int n, const char* name) {
  if (m.rows() != n || m.cols() != n)
    throw std::invalid_argument(std::string(name) + ": wrong size");
  if ((m - m.transpose()).norm() > 1e-12)
    throw std::invalid_argument(std::string(name) + ": not symmetric");
  for (int i = 0; i < n; ++i)
    if (m(i, i) != 0.0)
      throw std::invalid_argument(std::string(name) + ": nonzero diagonal");
}

inline void validate_system(const SpinSystem& sys) {
  if (sys.sites.empty()) throw std::invalid_argument("SpinSystem: no sites");
  check_coupling_matrix(sys.dipolar_hz, sys.n_spins(), "dipolar_hz");
  check_coupling_matrix(sys.jcoupling_hz, sys.n_spins(), "jcoupling_hz");
}

inline Operator build_hamiltonian(const SpinSystem& sys) {
  validate_system(sys);
  const int n = sys.n_spins();
  const Eigen::Index dim = sys.dim();
  Operator H = Operator::Zero(dim, dim);

  for (int i = 0; i < n; ++i) {
    if (sys.sites[i].offset_hz != 0.0)
      H -= 2.0 * pi * sys.sites[i].offset_hz * single_spin_op(n, i, Axis::z);
  }
  for (int j = 0; j < n; ++j) {
    for (int k = j + 1; k < n; ++k) {
      const double b = sys.dipolar_hz(j, k);
      const double J = sys.jcoupling_hz(j, k);
      if (sys.sites[j].species != sys.sites[k].species) {
        if (b != 0.0 || J != 0.0)
          H += 2.0 * pi * (b + J) * single_spin_op(n, j, Axis::z) *
               single_spin_op(n, k, Axis::z);
      } else if (b != 0.0) {
        H += 2.0 * pi * b *
             (single_spin_op(n, k, Axis::z) * single_spin_op(n, j, Axis::z) -
              0.5 * single_spin_op(n, k, Axis::x) * single_spin_op(n, j, Axis::x) -
              0.5 * single_spin_op(n, k, Axis::y) * single_spin_op(n, j, Axis::y));
      }
    }
  }
  return H;
}

// Seven-site benzene-like preset: site 0 = 13C, sites 1..6 = ring protons.
// H-H couplings follow the hexagon distance ratios r_ortho:r_meta:r_para =
// 1 : sqrt(3) : 2, so b scales as 1 : 3^{-3/2} : 1/8 (b ~ 1/r^3 under
// uniaxial averaging about the C6 axis). C-H couplings come from the caller;
// the only retained J coupling is J(C,H1).
inline SpinSystem benzene_preset(double b_ortho_hz,
                                 const std::vector<double>& b_ch_hz,
                                 double j01_hz) {
  if (b_ortho_hz == 0.0)
    throw std::invalid_argument("benzene_preset: b_ortho must be nonzero");
  if (b_ch_hz.size() != 6)
    throw std::invalid_argument("benzene_preset: need 6 C-H couplings");

  SpinSystem sys;
  sys.sites.resize(7);
  sys.sites[0] = {Species::c13, 0.0};
  for (int k = 1; k <= 6; ++k) sys.sites[k] = {Species::h1, 0.0};

  sys.dipolar_hz = Eigen::MatrixXd::Zero(7, 7);
  sys.jcoupling_hz = Eigen::MatrixXd::Zero(7, 7);

  const double b_meta = b_ortho_hz * std::pow(3.0, -1.5);
  const double b_para = b_ortho_hz / 8.0;
  const double by_class[4] = {0.0, b_ortho_hz, b_meta, b_para};
  for (int j = 1; j <= 6; ++j) {
    for (int k = j + 1; k <= 6; ++k) {
      const int around = std::min(k - j, 6 - (k - j));  // ring distance class
      sys.dipolar_hz(j, k) = sys.dipolar_hz(k, j) = by_class[around];
    }
  }
  for (int k = 1; k <= 6; ++k)
    sys.dipolar_hz(0, k) = sys.dipolar_hz(k, 0) = b_ch_hz[k - 1];
  sys.jcoupling_hz(0, 1) = sys.jcoupling_hz(1, 0) = j01_hz;
  return sys;
}

// Precession rate (rad/s) of the six-quantum proton coherence conditioned on
// the 13C state: Omega = sum_k 2*pi*(b_0k + J_0k)/2 over heteronuclear pairs.
inline double conditional_rate(const SpinSystem& sys) {
  double om = 0.0;
  for (int j = 0; j < sys.n_spins(); ++j)
    for (int k = j + 1; k < sys.n_spins(); ++k)
      if (sys.sites[j].species != sys.sites[k].species)
        om += 2.0 * pi * (sys.dipolar_hz(j, k) + sys.jcoupling_hz(j, k)) / 2.0;
  return om;
}

// gamma(13C) / gamma(1H) = 10.7084 / 42.577 (MHz/T over MHz/T).
inline constexpr double c13_h1_gamma_ratio = 10.7084 / 42.577;

// High-temperature thermal-equilibrium deviation density: each spin
// contributes its Zeeman order weighted by its gyromagnetic ratio relative
// to the proton, sum_k (gamma_k / gamma_H) S_kz. Traceless and diagonal.
inline Operator thermal_deviation_op(const SpinSystem& sys) {
  Operator rho = Operator::Zero(sys.dim(), sys.dim());
  for (int k = 0; k < sys.n_spins(); ++k) {
    const double w =
        (sys.sites[k].species == Species::h1) ? 1.0 : c13_h1_gamma_ratio;
    rho += w * single_spin_op(sys.n_spins(), k, Axis::z);
  }
  return rho;
}

}  // namespace spinsim
