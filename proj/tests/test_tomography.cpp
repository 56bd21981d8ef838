#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

#include "spinmem/errors.hpp"
#include "spinmem/rng.hpp"
#include "spinmem/tomography.hpp"

using namespace spinmem;

namespace {

constexpr double kPi = 3.14159265358979323846;

Eigen::Matrix2cd bloch(double x, double y, double z) {
  Eigen::Matrix2cd rho;
  rho << 0.5 * (1 + z), 0.5 * Complex(x, -y), 0.5 * Complex(x, y), 0.5 * (1 - z);
  return rho;
}

std::vector<Eigen::Matrix2cd> apply_kraus(const std::vector<Eigen::Matrix2cd>& kraus,
                                          const std::vector<Eigen::Matrix2cd>& states) {
  std::vector<Eigen::Matrix2cd> out;
  for (const auto& rho : states) {
    Eigen::Matrix2cd o = Eigen::Matrix2cd::Zero();
    for (const auto& k : kraus) o += k * rho * k.adjoint();
    out.push_back(o);
  }
  return out;
}

}  // namespace

TEST_CASE("pauli measurement sign conventions") {
  const auto ground = DensityOperator::pure(2, 0);
  const PauliVector v = measure_pauli(ground, {0, 1});
  CHECK(v.x == doctest::Approx(0.0));
  CHECK(v.y == doctest::Approx(0.0));
  CHECK(v.z == doctest::Approx(1.0));

  const auto mixed = DensityOperator::maximally_mixed(2);
  const PauliVector m = measure_pauli(mixed, {0, 1});
  CHECK(std::abs(m.x) + std::abs(m.y) + std::abs(m.z) < 1e-12);

  // pi/2 about Y from the ground state lands on +X.
  const Matrix u = (Complex(0, -kPi / 4.0) * pauli_y(2, {0, 1})).exp();
  const DensityOperator rotated(u * ground.matrix() * u.adjoint());
  const PauliVector r = measure_pauli(rotated, {0, 1});
  CHECK(r.x == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(r.y) < 1e-12);
  CHECK(std::abs(r.z) < 1e-12);
}

TEST_CASE("the protocol readout agrees with direct expectations") {
  for (int k = 0; k < 25; ++k) {
    const double theta = 0.25 * k;
    const double phi = 0.4 * k;
    const double r = 0.1 + 0.035 * k;
    const auto rho = DensityOperator::from_bloch(
        2, {0, 1}, r * std::sin(theta) * std::cos(phi), r * std::sin(theta) * std::sin(phi),
        r * std::cos(theta));
    const PauliVector direct = measure_pauli(rho, {0, 1});
    const PauliVector protocol = measure_pauli_protocol(rho, {0, 1});
    CHECK(std::abs(direct.x - protocol.x) < 1e-6);
    CHECK(std::abs(direct.y - protocol.y) < 1e-6);
    CHECK(std::abs(direct.z - protocol.z) < 1e-6);
  }
}

TEST_CASE("state_from_pauli and physicality projection") {
  CHECK((state_from_pauli({0, 0, 0}).rho.matrix() -
         DensityOperator::maximally_mixed(2).matrix())
            .norm() < 1e-14);

  const BlochState plus_x = state_from_pauli({1, 0, 0});
  CHECK(!plus_x.projected);
  CHECK(plus_x.rho.matrix()(0, 1).real() == doctest::Approx(0.5));

  const BlochState shrunk = state_from_pauli({1.2, 0, 0});
  CHECK(shrunk.projected);
  CHECK(shrunk.rho.matrix()(0, 1).real() == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("chi reconstruction on known channels") {
  const auto inputs = qpt_input_states();

  SUBCASE("identity process") {
    const auto rec = reconstruct_chi(inputs, inputs);
    CHECK(std::abs(rec.chi(0, 0).real() - 1.0) < 1e-10);
    CHECK((rec.chi - chi_identity()).norm() < 1e-10);
  }

  SUBCASE("complete dephasing has chi_00 = chi_33 = 1/2") {
    Eigen::Matrix2cd z;
    z << 1, 0, 0, -1;
    std::vector<Eigen::Matrix2cd> outputs;
    for (const auto& rho : inputs) outputs.push_back(0.5 * (rho + z * rho * z));
    const auto rec = reconstruct_chi(inputs, outputs);
    CHECK(rec.chi(0, 0).real() == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(rec.chi(3, 3).real() == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(std::abs(rec.chi(1, 1)) < 1e-10);
    CHECK(std::abs(rec.chi(0, 3)) < 1e-10);
  }

  SUBCASE("the pi/2 X rotation matches its analytic chi") {
    // U = (1 - i X)/sqrt(2): chi_00 = chi_11 = 1/2, chi_01 = i/2.
    Eigen::Matrix2cd x;
    x << 0, 1, 1, 0;
    const Eigen::Matrix2cd u =
        (Eigen::Matrix2cd::Identity() - Complex(0, 1) * x) / std::sqrt(2.0);
    std::vector<Eigen::Matrix2cd> outputs;
    for (const auto& rho : inputs) outputs.push_back(u * rho * u.adjoint());
    const auto rec = reconstruct_chi(inputs, outputs);
    CHECK(rec.chi(0, 0).real() == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(rec.chi(1, 1).real() == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(std::abs(rec.chi(0, 1) - Complex(0, 0.5)) < 1e-10);
    CHECK(std::abs(rec.chi(1, 0) - Complex(0, -0.5)) < 1e-10);
  }

  SUBCASE("a rank-deficient input set is rejected with the directions named") {
    // States spanning only 1 and Z.
    std::vector<Eigen::Matrix2cd> zs = {bloch(0, 0, 1), bloch(0, 0, -1), bloch(0, 0, 0.5),
                                        bloch(0, 0, 0)};
    try {
      reconstruct_chi(zs, zs);
      FAIL("expected a rank-deficiency error");
    } catch (const InvalidArgument& e) {
      const std::string msg = e.what();
      CHECK(msg.find("X") != std::string::npos);
      CHECK(msg.find("Y") != std::string::npos);
    }
  }
}

TEST_CASE("qpt roundtrip recovers analytic chi for random CPTP maps") {
  const auto inputs = qpt_input_states();
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto kraus = random_cptp_kraus(seed);
    const auto outputs = apply_kraus(kraus, inputs);
    const auto rec = reconstruct_chi(inputs, outputs);
    const ProcessMatrix expected = chi_from_kraus(kraus);
    CHECK((rec.chi - expected).norm() < 1e-8);
  }
}

TEST_CASE("cptp projection") {
  SUBCASE("an already physical chi is unchanged") {
    const auto kraus = random_cptp_kraus(7);
    const ProcessMatrix chi = chi_from_kraus(kraus);
    const auto proj = project_cptp(chi);
    CHECK((proj.chi - chi).norm() < 1e-12);
    CHECK(!proj.changed);
  }

  SUBCASE("negative eigenvalues are clamped and the trace renormalized") {
    ProcessMatrix chi = ProcessMatrix::Zero();
    chi(0, 0) = 1.1;
    chi(1, 1) = -0.1;
    const auto proj = project_cptp(chi);
    CHECK(proj.chi(0, 0).real() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(proj.chi(1, 1)) < 1e-12);
    CHECK(proj.changed);
  }

  SUBCASE("random Hermitian perturbations stay close after projection") {
    for (std::uint64_t seed = 0; seed < 120; ++seed) {
      Rng rng(seed + 1000);
      ProcessMatrix delta;
      for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) delta(r, c) = Complex(rng.normal(), rng.normal());
      }
      delta = 0.5 * (delta + delta.adjoint().eval());
      delta *= 0.05 / delta.norm();
      const ProcessMatrix chi = chi_identity() + delta;
      const auto proj = project_cptp(chi);
      Eigen::SelfAdjointEigenSolver<ProcessMatrix> solver(proj.chi);
      CHECK(solver.eigenvalues().minCoeff() > -1e-12);
      CHECK(std::abs(proj.chi.trace().real() - 1.0) < 1e-9);
      CHECK((proj.chi - chi).norm() < 0.1);
    }
  }

  SUBCASE("the zero matrix is rejected") {
    CHECK_THROWS_AS(project_cptp(ProcessMatrix::Zero()), InvalidArgument);
  }
}

TEST_CASE("state fidelity closed forms") {
  const Eigen::Matrix2cd zero = bloch(0, 0, 1);
  const Eigen::Matrix2cd one = bloch(0, 0, -1);
  const Eigen::Matrix2cd px = bloch(1, 0, 0);
  const Eigen::Matrix2cd mixed = bloch(0, 0, 0);

  CHECK(state_fidelity(px, px) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(state_fidelity(zero, one) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(state_fidelity(px, mixed) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("state fidelity is symmetric and monotone under depolarization") {
  Rng rng(2024);
  for (int k = 0; k < 50; ++k) {
    auto rand_state = [&]() {
      double x = rng.normal(), y = rng.normal(), z = rng.normal();
      const double n = std::sqrt(x * x + y * y + z * z);
      const double r = rng.uniform();
      return bloch(r * x / n, r * y / n, r * z / n);
    };
    const Eigen::Matrix2cd a = rand_state();
    const Eigen::Matrix2cd b = rand_state();
    CHECK(std::abs(state_fidelity(a, b) - state_fidelity(b, a)) < 1e-12);

    // Depolarizing b toward the identity cannot move it further from... the
    // fidelity to the maximally mixed state grows monotonically with noise.
    double prev = state_fidelity(bloch(0, 0, 0), b);
    for (double p : {0.2, 0.5, 0.8, 1.0}) {
      const Eigen::Matrix2cd noisy =
          (1.0 - p) * b + p * 0.5 * Eigen::Matrix2cd::Identity();
      const double f = state_fidelity(bloch(0, 0, 0), noisy);
      CHECK(f >= prev - 1e-12);
      prev = f;
    }
  }
}

TEST_CASE("process fidelity and the average state fidelity identity") {
  CHECK(process_fidelity(chi_identity(), chi_identity()) == doctest::Approx(1.0));

  ProcessMatrix dephased = ProcessMatrix::Zero();
  dephased(0, 0) = 0.5;
  dephased(3, 3) = 0.5;
  CHECK(process_fidelity(dephased, chi_identity()) == doctest::Approx(0.5));

  // Full depolarization: (2 * 1/4 + 1)/3 = 1/2.
  ProcessMatrix depol = ProcessMatrix::Identity() * 0.25;
  CHECK(average_state_fidelity(depol) == doctest::Approx(0.5).epsilon(1e-9));

  // The experiment's working point: Fp = 0.63 maps to 0.7533.
  CHECK((2.0 * 0.63 + 1.0) / 3.0 == doctest::Approx(0.7533).epsilon(1e-3));

  SUBCASE("identity holds for 1000 random CPTP maps") {
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      const ProcessMatrix chi = chi_from_kraus(random_cptp_kraus(seed));
      const double direct = average_state_fidelity(chi);
      const double formula = (2.0 * process_fidelity(chi, chi_identity()) + 1.0) / 3.0;
      CHECK(std::abs(direct - formula) < 1e-9);
    }
  }
}
