// Coherence-order bookkeeping and collective two-level (Sigma) subspace
// tests. Rotations built in closed form are cross-checked against the
// eigensolver-based propagator applied to the Sigma generators.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "spinsim/mq_coherence.hpp"
#include "spinsim/pulse_engine.hpp"

using namespace spinsim;

namespace {

SpinSystem cluster() {
    return benzene_preset(1000.0, {1600, 250, 100, 60, 100, 250}, 158.0);
}

DensityMatrix random_deviation(Eigen::Index dim, unsigned seed) {
    std::mt19937 gen(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    Operator a(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i)
        for (Eigen::Index j = 0; j < dim; ++j)
            a(i, j) = Complex(dist(gen), dist(gen));
    Operator h = 0.5 * (a + a.adjoint());
    h -= (h.trace() / double(dim)) * Operator::Identity(dim, dim);
    return make_density(h, StateKind::deviation);
}

}  // namespace

TEST_CASE("m_values counts the channel Zeeman quantum number") {
    const SpinSystem sys = cluster();
    const Eigen::VectorXd m_all = mq::m_values(sys, Channel::all);
    const Eigen::VectorXd m_h = mq::m_values(sys, Channel::h1);
    const Eigen::VectorXd m_c = mq::m_values(sys, Channel::c13);
    CHECK(m_all(0) == Catch::Approx(3.5));
    CHECK(m_all(127) == Catch::Approx(-3.5));
    CHECK(m_all(63) == Catch::Approx(-2.5));   // carbon up, protons down
    CHECK(m_all(64) == Catch::Approx(2.5));    // carbon down, protons up
    CHECK(m_h(0) == Catch::Approx(3.0));
    CHECK(m_h(63) == Catch::Approx(-3.0));
    CHECK(m_c(63) == Catch::Approx(0.5));
    CHECK(m_c(64) == Catch::Approx(-0.5));
}

TEST_CASE("decompose splits a state into coherence orders completely") {
    const SpinSystem sys = cluster();
    const DensityMatrix rho = random_deviation(sys.dim(), 301);
    const auto dec = mq::decompose(rho, sys, Channel::all);
    CHECK((dec.reassemble(sys.dim()) - rho.m).norm() < 1e-13);
    // orders on 7 spins span -7..7
    for (const auto& [p, block] : dec.components) {
        CHECK(std::abs(p) <= 7);
        CHECK(block.rows() == sys.dim());
    }
    // Parseval: squared Frobenius norms of the blocks add up
    double acc = 0.0;
    for (const auto& [p, block] : dec.components) acc += block.squaredNorm();
    CHECK(std::sqrt(acc) == Catch::Approx(rho.m.norm()).epsilon(1e-12));
}

TEST_CASE("order_norm satisfies Parseval over all orders") {
    const SpinSystem sys = cluster();
    const DensityMatrix rho = random_deviation(sys.dim(), 302);
    double acc = 0.0;
    for (int p = -7; p <= 7; ++p) {
        const double n = mq::order_norm(rho, sys, p, Channel::all);
        acc += n * n;
    }
    CHECK(std::sqrt(acc) == Catch::Approx(rho.m.norm()).epsilon(1e-12));
    // Hermiticity ties +p and -p norms together
    CHECK(mq::order_norm(rho, sys, 5, Channel::all) ==
          Catch::Approx(mq::order_norm(rho, sys, -5, Channel::all)));
}

TEST_CASE("project_order keeps exactly the +-p orders and is idempotent") {
    const SpinSystem sys = cluster();
    const DensityMatrix rho = random_deviation(sys.dim(), 303);
    const DensityMatrix p6 = mq::project_order(rho, sys, 6, Channel::h1);
    CHECK((p6.m - p6.m.adjoint()).norm() < 1e-13);  // hermitian
    for (int q = -6; q <= 6; ++q) {
        const double n = mq::order_norm(p6, sys, q, Channel::h1);
        if (std::abs(q) == 6) {
            CHECK(n > 0.0);
            CHECK(n == Catch::Approx(mq::order_norm(rho, sys, q, Channel::h1)));
        } else {
            CHECK(n < 1e-14);
        }
    }
    const DensityMatrix twice = mq::project_order(p6, sys, 6, Channel::h1);
    CHECK((twice.m - p6.m).norm() < 1e-14);
    CHECK(p6.kind == rho.kind);

    CHECK_THROWS_AS(mq::project_order(rho, sys, 8, Channel::all),
                    std::invalid_argument);
    CHECK_THROWS_AS(mq::project_order(rho, sys, 7, Channel::h1),
                    std::invalid_argument);
}

TEST_CASE("channel z-rotation multiplies order p by exp(-i p phi)") {
    const SpinSystem sys = cluster();
    const DensityMatrix rho = random_deviation(sys.dim(), 304);
    const double phi = 0.41;
    const Operator rz = pulse::channel_z_rotation(sys, Channel::h1, phi);
    for (int p : {1, 3, 6}) {
        Operator comp = Operator::Zero(sys.dim(), sys.dim());
        const Eigen::VectorXd m = mq::m_values(sys, Channel::h1);
        for (Eigen::Index i = 0; i < sys.dim(); ++i)
            for (Eigen::Index j = 0; j < sys.dim(); ++j)
                if (static_cast<int>(std::lround(m(i) - m(j))) == p)
                    comp(i, j) = rho.m(i, j);
        const Operator rotated = rz * comp * rz.adjoint();
        const Complex factor = std::exp(Complex(0.0, -p * phi));
        INFO("order " << p);
        CHECK((rotated - factor * comp).norm() < 1e-12);
    }
}

TEST_CASE("sigma basis addresses the four collective levels") {
    const SpinSystem sys = cluster();
    const mq::SigmaBasis b = mq::sigma_basis(sys);
    CHECK(b.dim == 128);
    CHECK(b.u_up == 0);     // |carbon up, protons all up>
    CHECK(b.d_up == 63);    // |carbon up, protons all down>
    CHECK(b.u_down == 64);
    CHECK(b.d_down == 127);

    SpinSystem wrong = sys;
    wrong.sites[0].species = Species::h1;
    CHECK_THROWS_AS(mq::sigma_basis(wrong), std::invalid_argument);
}

TEST_CASE("sigma operators close the su(2) algebra on the subspace") {
    const SpinSystem sys = cluster();
    const mq::SigmaOps ops = mq::build_sigma_ops(sys);
    CHECK((ops.sigma_x * ops.sigma_y - ops.sigma_y * ops.sigma_x -
           iu * ops.sigma_z).norm() < 1e-14);
    const Operator s2 = ops.sigma_x * ops.sigma_x + ops.sigma_y * ops.sigma_y +
                        ops.sigma_z * ops.sigma_z;
    // Casimir = 3/4 on the four subspace levels, zero elsewhere
    CHECK(s2.trace().real() == Catch::Approx(3.0));
    CHECK(std::abs(s2(0, 0) - Complex(0.75)) < 1e-14);
    CHECK(std::abs(s2(1, 1)) < 1e-14);
}

TEST_CASE("sigma_rotation matches the exponential of its generator") {
    const SpinSystem sys = cluster();
    const mq::SigmaOps ops = mq::build_sigma_ops(sys);
    for (double angle : {0.3, spinsim::pi / 2.0, 2.2}) {
        for (double phase : {0.0, spinsim::pi / 2.0, 1.1}) {
            const Operator gen =
                std::cos(phase) * ops.sigma_x + std::sin(phase) * ops.sigma_y;
            const Operator ref = propagator(gen, angle);
            const Operator u = mq::sigma_rotation(sys, angle, phase);
            INFO("angle " << angle << " phase " << phase);
            CHECK((u - ref).norm() < 1e-12);
            CHECK((u * u.adjoint() - Operator::Identity(128, 128)).norm() < 1e-12);
        }
    }
    // identity on the complement of the subspace
    const Operator u = mq::sigma_rotation(sys, 1.0, 0.5);
    CHECK(std::abs(u(5, 5) - Complex(1.0)) < 1e-14);
    CHECK(std::abs(u(5, 0)) < 1e-14);
}

TEST_CASE("sigma_z_rotation matches the exponential of sigma_z") {
    const SpinSystem sys = cluster();
    const mq::SigmaOps ops = mq::build_sigma_ops(sys);
    const double chi = 0.83;
    CHECK((mq::sigma_z_rotation(sys, chi) - propagator(ops.sigma_z, chi)).norm() <
          1e-12);
}

TEST_CASE("a 90-degree sigma rotation builds the balanced superposition") {
    const SpinSystem sys = cluster();
    const mq::SigmaBasis b = mq::sigma_basis(sys);
    // axis phase pi / 2: the off-diagonal factor -i exp(+i phase) becomes +1,
    // so |u> -> (|u> + |d>)/sqrt(2) without extra phase
    const Operator u =
        mq::sigma_rotation(sys, spinsim::pi / 2.0, spinsim::pi / 2.0);
    CVector psi = CVector::Zero(sys.dim());
    psi(b.u_up) = 1.0;
    const CVector out = u * psi;
    CHECK(std::abs(out(b.u_up) - Complex(1.0 / std::sqrt(2.0))) < 1e-12);
    CHECK(std::abs(out(b.d_up) - Complex(1.0 / std::sqrt(2.0))) < 1e-12);
}

TEST_CASE("global pulse phase moves the six-quantum phase six-fold") {
    const double deg = spinsim::pi / 180.0;
    CHECK(mq::sigma_phase_of_global_phase(15.0 * deg) ==
          Catch::Approx(90.0 * deg).epsilon(1e-12));
    CHECK(mq::sigma_phase_of_global_phase(45.0 * deg) ==
          Catch::Approx(270.0 * deg).epsilon(1e-12));
    CHECK(mq::sigma_phase_of_global_phase(0.0) == Catch::Approx(0.0).margin(1e-15));
}
