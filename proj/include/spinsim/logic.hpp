#pragma once

// Ideal qubit-circuit oracle: exact complex arithmetic over 2^(n+1)
// amplitudes for the CNOT expansion chain and the polarization-moment
// analysis. Qubit 0 is the control/measured qubit and maps to the most
// significant bit of the basis index (the same ordering the spin simulator
// uses, qubit |0> = spin up).

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "spinsim/spin_core.hpp"

namespace spinsim::logic {

struct QubitCircuitState {
    int n_qubits = 0;
    StateVector state;

    int dim() const { return 1 << n_qubits; }
};

// (a|0> + b|1>) on qubit 0, all others |0>: Eq.-style product state over
// n+1 qubits.
inline QubitCircuitState initial_state(Complex a, Complex b, int n) {
    if (n < 0) {
        throw std::invalid_argument("initial_state: n must be >= 0");
    }
    const double norm2 = std::norm(a) + std::norm(b);
    if (std::abs(norm2 - 1.0) > 1e-12) {
        throw std::invalid_argument("initial_state: |a|^2 + |b|^2 must be 1");
    }
    QubitCircuitState q;
    q.n_qubits = n + 1;
    CVector amps = CVector::Zero(q.dim());
    amps(0) = a;                       // |00...0>
    amps(q.dim() / 2) = b;             // |10...0>, qubit 0 = MSB
    q.state = make_state(amps);
    return q;
}

inline QubitCircuitState cnot(const QubitCircuitState& in, int control, int target) {
    const int n = in.n_qubits;
    if (control < 0 || control >= n || target < 0 || target >= n) {
        throw std::invalid_argument("cnot: qubit index out of range");
    }
    if (control == target) {
        throw std::invalid_argument("cnot: control and target must differ");
    }
    const int cmask = 1 << (n - 1 - control);
    const int tmask = 1 << (n - 1 - target);
    QubitCircuitState out = in;
    CVector amps = CVector::Zero(in.dim());
    for (int idx = 0; idx < in.dim(); ++idx) {
        const int dst = (idx & cmask) ? (idx ^ tmask) : idx;
        amps(dst) = in.state.amps(idx);
    }
    out.state = make_state(amps);
    return out;
}

// CNOT_{0,1}, CNOT_{1,2}, ..., CNOT_{n-2,n-1} in temporal order (each gate
// copies the growing domain one qubit further).
inline QubitCircuitState expand_chain(const QubitCircuitState& in) {
    QubitCircuitState q = in;
    for (int k = 0; k + 1 < in.n_qubits; ++k) {
        q = cnot(q, k, k + 1);
    }
    return q;
}

// Closed-form expansion target a|0...0> + b|1...1>.
inline QubitCircuitState ghz_state(Complex a, Complex b, int n_qubits) {
    if (n_qubits < 1) {
        throw std::invalid_argument("ghz_state: need at least one qubit");
    }
    const double norm2 = std::norm(a) + std::norm(b);
    if (std::abs(norm2 - 1.0) > 1e-12) {
        throw std::invalid_argument("ghz_state: |a|^2 + |b|^2 must be 1");
    }
    QubitCircuitState q;
    q.n_qubits = n_qubits;
    CVector amps = CVector::Zero(q.dim());
    amps(0) = a;
    amps(q.dim() - 1) = b;
    q.state = make_state(amps);
    return q;
}

// <M^k> with M = sum_i sigma_z(i), sigma_z eigenvalues +-1 (so M runs from
// -n_qubits to +n_qubits in steps of 2). M is diagonal in the computational
// basis, so the moment is a weighted sum over basis populations.
inline double polarization_moment(const QubitCircuitState& q, int k) {
    if (k < 1) {
        throw std::invalid_argument("polarization_moment: k must be >= 1");
    }
    double result = 0.0;
    for (int idx = 0; idx < q.dim(); ++idx) {
        const double p = std::norm(q.state.amps(idx));
        if (p == 0.0) continue;
        int ones = 0;
        for (int bit = 0; bit < q.n_qubits; ++bit) {
            if (idx & (1 << bit)) ++ones;
        }
        const double m = q.n_qubits - 2.0 * ones;
        result += p * std::pow(m, k);
    }
    return result;
}

// |psi><psi| in the spin simulator's basis (identical index ordering:
// qubit 0 -> 13C site, qubit |0> -> spin up).
inline DensityMatrix embed_as_density(const QubitCircuitState& q) {
    if (q.n_qubits != 7) {
        throw std::invalid_argument("embed_as_density: expected 7 qubits");
    }
    Operator rho = q.state.amps * q.state.amps.adjoint();
    return make_density(rho, StateKind::true_state);
}

}  // namespace spinsim::logic
