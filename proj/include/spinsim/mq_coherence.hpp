#pragma once
// Coherence-order bookkeeping and the Sigma-subspace algebra over the two
// extreme proton states |u> = |up...up>, |d> = |down...down>.
//
// Coherence order of element (i,j) is p = m_i - m_j, where m is the total
// Z quantum number of the selected channel (proton-only by default; an
// `all` mode serves the seven-quantum analysis).
//
// Sigma operators: Sigma_z = (|u><u| - |d><d|)/2 embedded with identity on
// the 13C factor; Sigma_x = (|u><d| + |d><u|)/2; Sigma_y is fixed by the
// right-handed algebra [Sigma_x, Sigma_y] = i Sigma_z, i.e. the standard
// Pauli y/2 in the (u,d) basis. All three annihilate the orthogonal
// complement of span{|u>,|d>}.

#include "hamiltonian.hpp"
#include "spin_core.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

namespace spinsim {
namespace mq {

// m_i (total channel Z quantum number) for every basis index
inline Eigen::VectorXd m_values(const SpinSystem& sys, Channel ch) {
  const int n = sys.n_spins();
  const std::vector<int> sites = sys.channel_sites(ch);
  Eigen::VectorXd m(sys.dim());
  for (Eigen::Index i = 0; i < sys.dim(); ++i) {
    double acc = 0.0;
    for (int s : sites) acc += site_bit(i, s, n) ? -0.5 : 0.5;
    m(i) = acc;
  }
  return m;
}

struct CoherenceDecomposition {
  std::map<int, Operator> components;  // order p -> block (full-dim matrix)

  Operator reassemble(Eigen::Index dim) const {
    Operator out = Operator::Zero(dim, dim);
    for (const auto& [p, block] : components) out += block;
    return out;
  }
};

inline CoherenceDecomposition decompose(const DensityMatrix& rho,
                                        const SpinSystem& sys, Channel ch) {
  const Eigen::VectorXd m = m_values(sys, ch);
  CoherenceDecomposition dec;
  for (Eigen::Index i = 0; i < rho.dim(); ++i) {
    for (Eigen::Index j = 0; j < rho.dim(); ++j) {
      if (rho.m(i, j) == Complex(0.0, 0.0)) continue;
      const int p = static_cast<int>(std::lround(m(i) - m(j)));
      auto it = dec.components.find(p);
      if (it == dec.components.end())
        it = dec.components.emplace(p, Operator::Zero(rho.dim(), rho.dim())).first;
      it->second(i, j) = rho.m(i, j);
    }
  }
  return dec;
}

// Keep orders +p and -p only (Hermiticity preserved)
inline DensityMatrix project_order(const DensityMatrix& rho,
                                   const SpinSystem& sys, int p, Channel ch) {
  const int nch = static_cast<int>(sys.channel_sites(ch).size());
  if (std::abs(p) > nch)
    throw std::invalid_argument("project_order: |p| exceeds channel size");
  const Eigen::VectorXd m = m_values(sys, ch);
  Operator out = Operator::Zero(rho.dim(), rho.dim());
  for (Eigen::Index i = 0; i < rho.dim(); ++i)
    for (Eigen::Index j = 0; j < rho.dim(); ++j) {
      const int q = static_cast<int>(std::lround(m(i) - m(j)));
      if (q == p || q == -p) out(i, j) = rho.m(i, j);
    }
  return DensityMatrix{std::move(out), rho.kind};
}

// Frobenius norm of the order-p component
inline double order_norm(const DensityMatrix& rho, const SpinSystem& sys,
                         int p, Channel ch) {
  const Eigen::VectorXd m = m_values(sys, ch);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < rho.dim(); ++i)
    for (Eigen::Index j = 0; j < rho.dim(); ++j) {
      const int q = static_cast<int>(std::lround(m(i) - m(j)));
      if (q == p) acc += std::norm(rho.m(i, j));
    }
  return std::sqrt(acc);
}

// -------------------------------------------------------- Sigma subspace

// Indices of |c,u> and |c,d> for both 13C states; layout: site 0 = 13C
// (leftmost factor), sites 1..6 protons. Applies to the 7-spin cluster.
struct SigmaBasis {
  Eigen::Index dim;
  Eigen::Index u_up, d_up;      // 13C up:   |up,u>, |up,d>
  Eigen::Index u_down, d_down;  // 13C down: |down,u>, |down,d>
};

inline SigmaBasis sigma_basis(const SpinSystem& sys) {
  if (sys.n_spins() != 7 || sys.sites[0].species != Species::c13)
    throw std::invalid_argument("sigma ops defined for the 7-spin cluster "
                                "(site 0 = 13C)");
  const Eigen::Index proton_mask = (Eigen::Index(1) << 6) - 1;  // low 6 bits
  const Eigen::Index c_mask = Eigen::Index(1) << 6;
  return SigmaBasis{sys.dim(), 0, proton_mask, c_mask, c_mask | proton_mask};
}

struct SigmaOps {
  Operator sigma_x, sigma_y, sigma_z;
};

inline SigmaOps build_sigma_ops(const SpinSystem& sys) {
  const SigmaBasis b = sigma_basis(sys);
  SigmaOps ops{Operator::Zero(b.dim, b.dim), Operator::Zero(b.dim, b.dim),
               Operator::Zero(b.dim, b.dim)};
  const Eigen::Index us[2] = {b.u_up, b.u_down};
  const Eigen::Index ds[2] = {b.d_up, b.d_down};
  for (int c = 0; c < 2; ++c) {
    ops.sigma_z(us[c], us[c]) = 0.5;
    ops.sigma_z(ds[c], ds[c]) = -0.5;
    ops.sigma_x(us[c], ds[c]) = 0.5;
    ops.sigma_x(ds[c], us[c]) = 0.5;
    ops.sigma_y(us[c], ds[c]) = Complex(0.0, -0.5);
    ops.sigma_y(ds[c], us[c]) = Complex(0.0, 0.5);
  }
  return ops;
}

// exp(-i*angle*(Sigma_x cos(phi) + Sigma_y sin(phi))): SU(2) rotation inside
// span{|u>,|d>} (identity on 13C and on the complement). Closed form of the
// 2x2 exponential per 13C block.
inline Operator sigma_rotation(const SpinSystem& sys, double angle,
                               double axis_phase) {
  const SigmaBasis b = sigma_basis(sys);
  Operator U = Operator::Identity(b.dim, b.dim);
  const double c = std::cos(angle / 2.0), s = std::sin(angle / 2.0);
  const Complex od_ud = -iu * std::exp(Complex(0.0, -axis_phase)) * s;
  const Complex od_du = -iu * std::exp(Complex(0.0, axis_phase)) * s;
  const Eigen::Index us[2] = {b.u_up, b.u_down};
  const Eigen::Index ds[2] = {b.d_up, b.d_down};
  for (int k = 0; k < 2; ++k) {
    U(us[k], us[k]) = c;
    U(ds[k], ds[k]) = c;
    U(us[k], ds[k]) = od_ud;
    U(ds[k], us[k]) = od_du;
  }
  return U;
}

// exp(-i*chi*Sigma_z): z-rotation inside the subspace, identity elsewhere
inline Operator sigma_z_rotation(const SpinSystem& sys, double chi) {
  const SigmaBasis b = sigma_basis(sys);
  Operator U = Operator::Identity(b.dim, b.dim);
  const Complex up = std::exp(Complex(0.0, -chi / 2.0));
  const Complex dn = std::exp(Complex(0.0, chi / 2.0));
  U(b.u_up, b.u_up) = up;
  U(b.u_down, b.u_down) = up;
  U(b.d_up, b.d_up) = dn;
  U(b.d_down, b.d_down) = dn;
  return U;
}

// A global pulse-phase shift phi moves the 6Q coherence phase by 6*phi
inline double sigma_phase_of_global_phase(double global_phase) {
  double p = std::fmod(6.0 * global_phase, 2.0 * pi);
  if (p < 0) p += 2.0 * pi;
  return p;
}

}  // namespace mq
}  // namespace spinsim
