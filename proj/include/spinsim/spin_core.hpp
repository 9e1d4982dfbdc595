#pragma once
// Operator algebra foundation: spin-1/2 operators with tensor embedding,
// Hermitian-eigendecomposition propagators, and state metrics.
//
// Conventions (enforced by tests):
//   * site 0 is the leftmost tensor factor; basis index bit (n-1-site) holds
//     the state of `site`, with bit value 0 = |up>, 1 = |down>.
//   * spin operators carry eigenvalues +/-1/2 (Pauli/2); +/-1 Pauli matrices
//     appear only in the qubit logic layer.

#include <Eigen/Dense>
#include <complex>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace spinsim {

using Complex = std::complex<double>;
using Operator = Eigen::MatrixXcd;   // dense complex dim x dim, dim = 2^n
using CVector = Eigen::VectorXcd;

namespace tol {
inline constexpr double structural = 1e-10;   // internal invariants
inline constexpr double cross_oracle = 1e-8;  // independent-method comparisons
}  // namespace tol

inline constexpr double pi = 3.14159265358979323846;
inline constexpr Complex iu{0.0, 1.0};

// ---------------------------------------------------------------- state types

enum class StateKind { true_state, deviation };

struct DensityMatrix {
  Operator m;
  StateKind kind = StateKind::true_state;

  Eigen::Index dim() const { return m.rows(); }
};

struct StateVector {
  CVector amps;

  Eigen::Index dim() const { return amps.size(); }
};

inline int n_spins_for_dim(Eigen::Index dim) {
  int n = 0;
  Eigen::Index d = 1;
  while (d < dim) { d <<= 1; ++n; }
  if (d != dim || dim < 2)
    throw std::invalid_argument("dimension " + std::to_string(dim) +
                                " is not a power of two >= 2");
  return n;
}

// bit of `site` inside basis index `idx` (0 = up, 1 = down)
inline int site_bit(Eigen::Index idx, int site, int n_spins) {
  return static_cast<int>((idx >> (n_spins - 1 - site)) & 1);
}

inline DensityMatrix make_density(Operator m, StateKind kind) {
  DensityMatrix rho{std::move(m), kind};
  const double herm = (rho.m - rho.m.adjoint()).norm();
  if (herm > tol::structural)
    throw std::invalid_argument("density matrix not Hermitian, residual " +
                                std::to_string(herm));
  const double tr = rho.m.trace().real();
  if (kind == StateKind::true_state) {
    if (std::abs(tr - 1.0) > tol::structural)
      throw std::invalid_argument("true_state trace != 1");
    Eigen::SelfAdjointEigenSolver<Operator> es(rho.m, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -tol::structural)
      throw std::invalid_argument("true_state has negative eigenvalue");
  } else {
    if (std::abs(tr) > tol::structural)
      throw std::invalid_argument("deviation trace != 0");
  }
  return rho;
}

inline StateVector make_state(CVector amps) {
  StateVector psi{std::move(amps)};
  if (std::abs(psi.amps.norm() - 1.0) > 1e-12)
    throw std::invalid_argument("state vector not normalized");
  return psi;
}

// |b><b| as a true state on dim entries
inline DensityMatrix basis_density(Eigen::Index dim, Eigen::Index b) {
  Operator m = Operator::Zero(dim, dim);
  m(b, b) = 1.0;
  return DensityMatrix{std::move(m), StateKind::true_state};
}

// ------------------------------------------------------------- spin operators

enum class Axis { x, y, z, plus, minus };

// Spin operator on `site`, identity elsewhere. Built by bit arithmetic
// (equivalent to the Kronecker chain id x ... x s x ... x id).
inline Operator single_spin_op(int n_spins, int site, Axis axis) {
  if (site < 0 || site >= n_spins)
    throw std::invalid_argument("site " + std::to_string(site) +
                                " out of range for " + std::to_string(n_spins) +
                                " spins");
  const Eigen::Index dim = Eigen::Index(1) << n_spins;
  const Eigen::Index mask = Eigen::Index(1) << (n_spins - 1 - site);
  Operator op = Operator::Zero(dim, dim);
  switch (axis) {
    case Axis::z:
      for (Eigen::Index i = 0; i < dim; ++i)
        op(i, i) = (i & mask) ? -0.5 : 0.5;
      break;
    case Axis::plus:  // S+|down> = |up>
      for (Eigen::Index j = 0; j < dim; ++j)
        if (j & mask) op(j & ~mask, j) = 1.0;
      break;
    case Axis::minus:  // S-|up> = |down>
      for (Eigen::Index j = 0; j < dim; ++j)
        if (!(j & mask)) op(j | mask, j) = 1.0;
      break;
    case Axis::x:
      for (Eigen::Index j = 0; j < dim; ++j)
        op(j ^ mask, j) = 0.5;
      break;
    case Axis::y:
      // y = (plus - minus)/(2i): <up|Sy|down> = -i/2, <down|Sy|up> = +i/2
      for (Eigen::Index j = 0; j < dim; ++j)
        op(j ^ mask, j) = (j & mask) ? Complex(0.0, -0.5) : Complex(0.0, 0.5);
      break;
  }
  return op;
}

// Total spin operator over a set of sites
inline Operator total_spin_op(int n_spins, const std::vector<int>& sites, Axis axis) {
  const Eigen::Index dim = Eigen::Index(1) << n_spins;
  Operator op = Operator::Zero(dim, dim);
  for (int s : sites) op += single_spin_op(n_spins, s, axis);
  return op;
}

// ----------------------------------------------------------------- propagator

// U = exp(-iHt) via Hermitian eigendecomposition (exact for Hermitian H).
inline Operator propagator(const Operator& H, double t) {
  const double herm = (H - H.adjoint()).norm();
  if (herm > 1e-8)
    throw std::invalid_argument("propagator: Hamiltonian not Hermitian, residual " +
                                std::to_string(herm));
  Eigen::SelfAdjointEigenSolver<Operator> es(H);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("propagator: eigendecomposition failed");
  const Eigen::VectorXd& w = es.eigenvalues();
  CVector phases(w.size());
  for (Eigen::Index k = 0; k < w.size(); ++k)
    phases(k) = std::exp(Complex(0.0, -w(k) * t));
  Operator U = es.eigenvectors() * phases.asDiagonal() *
               es.eigenvectors().adjoint();
  const double unit = (U.adjoint() * U - Operator::Identity(U.rows(), U.cols())).norm();
  if (unit > tol::structural)
    throw std::runtime_error("propagator: result not unitary, residual " +
                             std::to_string(unit));
  return U;
}

inline DensityMatrix evolve(const DensityMatrix& rho, const Operator& U) {
  if (rho.dim() != U.rows() || U.rows() != U.cols())
    throw std::invalid_argument("evolve: dimension mismatch");
  return DensityMatrix{U * rho.m * U.adjoint(), rho.kind};
}

inline StateVector evolve(const StateVector& psi, const Operator& U) {
  if (psi.dim() != U.rows())
    throw std::invalid_argument("evolve: dimension mismatch");
  return StateVector{U * psi.amps};
}

// -------------------------------------------------------------------- metrics

// <psi|rho|psi>; defined only for true states (normalize deviations first)
inline double fidelity_pure(const DensityMatrix& rho, const StateVector& psi) {
  if (rho.kind != StateKind::true_state)
    throw std::invalid_argument("fidelity_pure: undefined for deviation densities");
  if (rho.dim() != psi.dim())
    throw std::invalid_argument("fidelity_pure: dimension mismatch");
  const Complex v = psi.amps.adjoint() * rho.m * psi.amps;
  return v.real();
}

// Tr(rho A) for Hermitian A
inline double expectation(const DensityMatrix& rho, const Operator& A) {
  if (rho.dim() != A.rows() || A.rows() != A.cols())
    throw std::invalid_argument("expectation: dimension mismatch");
  if ((A - A.adjoint()).norm() > 1e-8)
    throw std::invalid_argument("expectation: observable not Hermitian");
  const Complex tr = (rho.m * A).trace();
  const double scale = 1.0 + rho.m.norm() * A.norm();
  if (std::abs(tr.imag()) > tol::structural * scale)
    throw std::runtime_error("expectation: imaginary residue " +
                             std::to_string(tr.imag()));
  return tr.real();
}

// Reduced density matrix over `keep` (site indices, original order preserved)
inline DensityMatrix partial_trace(const DensityMatrix& rho,
                                   const std::vector<int>& keep) {
  if (keep.empty())
    throw std::invalid_argument("partial_trace: empty keep set");
  const int n = n_spins_for_dim(rho.dim());
  std::vector<bool> kept(n, false);
  for (int s : keep) {
    if (s < 0 || s >= n) throw std::invalid_argument("partial_trace: bad site");
    if (kept[s]) throw std::invalid_argument("partial_trace: duplicate site");
    kept[s] = true;
  }
  std::vector<int> keep_sorted, traced;
  for (int s = 0; s < n; ++s) (kept[s] ? keep_sorted : traced).push_back(s);
  const int nk = static_cast<int>(keep_sorted.size());
  const int nt = n - nk;
  const Eigen::Index dk = Eigen::Index(1) << nk;
  const Eigen::Index dt = Eigen::Index(1) << nt;

  auto full_index = [&](Eigen::Index a, Eigen::Index t) {
    Eigen::Index idx = 0;
    for (int p = 0; p < nk; ++p)
      if ((a >> (nk - 1 - p)) & 1)
        idx |= Eigen::Index(1) << (n - 1 - keep_sorted[p]);
    for (int p = 0; p < nt; ++p)
      if ((t >> (nt - 1 - p)) & 1)
        idx |= Eigen::Index(1) << (n - 1 - traced[p]);
    return idx;
  };

  Operator out = Operator::Zero(dk, dk);
  for (Eigen::Index a = 0; a < dk; ++a)
    for (Eigen::Index b = 0; b < dk; ++b) {
      Complex acc = 0.0;
      for (Eigen::Index t = 0; t < dt; ++t)
        acc += rho.m(full_index(a, t), full_index(b, t));
      out(a, b) = acc;
    }
  return DensityMatrix{std::move(out), rho.kind};
}

}  // namespace spinsim
