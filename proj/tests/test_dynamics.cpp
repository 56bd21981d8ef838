#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "spinmem/dynamics.hpp"
#include "spinmem/errors.hpp"
#include "spinmem/hamiltonian.hpp"
#include "spinmem/relaxation.hpp"
#include "spinmem/spectra.hpp"
#include "test_support.hpp"

using namespace spinmem;

namespace {

constexpr double kPi = 3.14159265358979323846;

const EnsembleSpec kSingle = [] {
  EnsembleSpec e;
  e.members = 1;
  return e;
}();

Pulse make_pulse(Channel ch, std::pair<int, int> target, double angle, double phase,
                 double rabi) {
  Pulse p;
  p.channel = ch;
  p.target = target;
  p.nominal_angle_rad = angle;
  p.phase_rad = phase;
  p.rabi_frequency_mhz = rabi;
  return p;
}

}  // namespace

TEST_CASE("density operator invariants are enforced") {
  Matrix bad = Matrix::Identity(3, 3);  // trace 3
  CHECK_THROWS_AS(DensityOperator{bad}, InvalidArgument);

  Matrix neg = Matrix::Zero(2, 2);
  neg(0, 0) = 1.5;
  neg(1, 1) = -0.5;
  CHECK_THROWS_AS(DensityOperator{neg}, InvalidArgument);

  CHECK(DensityOperator::maximally_mixed(3).min_eigenvalue() ==
        doctest::Approx(1.0 / 3.0));
}

TEST_CASE("a pi pulse swaps populations exactly") {
  const WorkingSpace space = WorkingSpace::three_level();
  const auto rho = DensityOperator::pure(3, 0);
  const Pulse p = make_pulse(Channel::Microwave, {0, 1}, kPi, 0.0, 15.625);
  const Matrix u = unitary_for_pulse(space, p, EnsembleMember{}, false);
  const Matrix out = u * rho.matrix() * u.adjoint();
  CHECK(out(0, 0).real() == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(out(1, 1).real() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("two pi/2 pulses of equal phase compose to one pi pulse") {
  const WorkingSpace space = WorkingSpace::three_level();
  const Pulse half = make_pulse(Channel::Microwave, {0, 1}, kPi / 2, 0.7, 15.625);
  const Pulse full = make_pulse(Channel::Microwave, {0, 1}, kPi, 0.7, 15.625);
  const Matrix u_half = unitary_for_pulse(space, half, EnsembleMember{}, false);
  const Matrix u_full = unitary_for_pulse(space, full, EnsembleMember{}, false);
  CHECK((u_half * u_half - u_full).norm() < 1e-12);
}

TEST_CASE("amplitude error follows the scalar Rabi formula") {
  const WorkingSpace space = WorkingSpace::three_level();
  EnsembleMember member;
  member.mw_amplitude_error = 0.10;
  const Pulse p = make_pulse(Channel::Microwave, {0, 1}, kPi, 0.0, 15.625);
  const Matrix u = unitary_for_pulse(space, p, member, false);
  const auto rho = DensityOperator::pure(3, 0);
  const Matrix out = u * rho.matrix() * u.adjoint();
  const double expected = std::pow(std::sin(1.1 * kPi / 2.0), 2);
  CHECK(out(1, 1).real() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("error-free pi pulses are involutive on the target-pair populations") {
  const WorkingSpace space = WorkingSpace::three_level();
  const Pulse p = make_pulse(Channel::RadioFrequency, {1, 2}, kPi, 1.1, 1.0 / 6.0);
  const Matrix u = unitary_for_pulse(space, p, EnsembleMember{}, true);
  Matrix rho = Matrix::Zero(3, 3);
  rho(0, 0) = 0.5;
  rho(1, 1) = 0.3;
  rho(2, 2) = 0.2;
  rho(1, 2) = Complex(0.1, 0.05);  // coherence inside the pair
  rho(2, 1) = std::conj(rho(1, 2));
  const Matrix twice = u * (u * rho * u.adjoint()) * u.adjoint();
  for (int k = 0; k < 3; ++k) {
    CHECK(std::abs(twice(k, k) - rho(k, k)) < 1e-12);
  }
  CHECK(std::abs(twice(1, 2) - rho(1, 2)) < 1e-12);
}

TEST_CASE("pulses reject a target outside the subspace") {
  const WorkingSpace space = WorkingSpace::three_level();
  const Pulse p = make_pulse(Channel::Microwave, {0, 3}, kPi, 0.0, 15.625);
  CHECK_THROWS_AS(unitary_for_pulse(space, p, EnsembleMember{}, false), InvalidArgument);
}

TEST_CASE("lindblad evolution basics") {
  const WorkingSpace space = WorkingSpace::three_level();

  SUBCASE("no channels and no Hamiltonian is the identity map") {
    const auto rho = DensityOperator::from_bloch(3, {0, 1}, 0.3, -0.4, 0.5);
    RelaxationChannels off;
    const auto out = evolve_lindblad(rho, Matrix::Zero(3, 3), space, off, 12.0);
    CHECK((out.matrix() - rho.matrix()).norm() < 1e-13);
  }

  SUBCASE("pure dephasing decays the coherence as exp(-gamma t)") {
    RelaxationChannels ch;
    ch.t2e_s = 20e-6;  // gamma = 1/T2e with T1 off
    const auto rho = DensityOperator::from_bloch(3, {0, 1}, 1.0, 0.0, 0.0);
    const double gamma_per_us = 1e-6 / 20e-6;
    const double t_us = 3.0 / gamma_per_us;
    const auto out = evolve_lindblad(rho, Matrix::Zero(3, 3), space, ch, t_us);
    const double expected = 0.5 * std::exp(-3.0);
    CHECK(std::abs(out.matrix()(0, 1).real() - expected) < 1e-6);
  }

  SUBCASE("population inversion relaxes to the equal mixture at rate 1/T1e") {
    RelaxationChannels ch;
    ch.t1e_s = 50e-6;
    const auto rho = DensityOperator::pure(3, 1);
    // Scalar rate-equation oracle for the population difference:
    // dz/dt = -z/T1e with z = p0 - p1.
    for (double t_us : {10.0, 25.0, 50.0, 100.0}) {
      const auto out = evolve_lindblad(rho, Matrix::Zero(3, 3), space, ch, t_us);
      const double z = (out.matrix()(0, 0) - out.matrix()(1, 1)).real();
      const double expected = -std::exp(-t_us / 50.0);
      CHECK(z == doctest::Approx(expected).epsilon(1e-9));
    }
  }

  SUBCASE("trace is preserved through a dissipative pulse sequence") {
    RelaxationChannels ch{1e-4, 5e-5, 2e-4};
    const auto rho = DensityOperator::from_bloch(3, {0, 1}, 0.7, 0.1, -0.2);
    const auto out = evolve_lindblad(rho, Matrix::Zero(3, 3), space, ch, 37.0);
    CHECK(std::abs(out.matrix().trace().real() - 1.0) < 1e-9);
    CHECK(out.min_eigenvalue() > -1e-9);
  }
}

TEST_CASE("relaxation channel validation") {
  RelaxationChannels bad;
  bad.t1e_s = 1e-5;
  bad.t2e_s = 5e-5;  // exceeds 2 T1e
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("hahn echo refocuses any Gaussian detuning ensemble") {
  const WorkingSpace space = WorkingSpace::three_level();
  RelaxationChannels off;
  EngineOptions opt;
  opt.ideal_pulses = true;
  const auto rho = DensityOperator::pure(3, 0);

  for (double fwhm : {3.0, 12.0, 40.0}) {
    EnsembleSpec ens;
    ens.members = 500;
    ens.electron_detuning_fwhm_mhz = fwhm;
    ens.seed = 21;
    const Sequence seq = build_hahn_echo(2.0);
    const SequenceResult res = run_sequence(space, rho, seq, off, ens, opt);
    CHECK(std::abs(res.echo.x - 1.0) < 1e-3);
    CHECK(std::abs(res.echo.y) < 1e-3);
  }
}

TEST_CASE("mid-sequence dephasing is visible on the timeline") {
  const WorkingSpace space = WorkingSpace::three_level();
  RelaxationChannels off;
  EngineOptions opt;
  opt.ideal_pulses = true;
  EnsembleSpec ens;
  ens.members = 800;
  ens.electron_detuning_fwhm_mhz = 12.0;
  ens.seed = 4;
  const Sequence seq = build_hahn_echo(2.0);
  const SequenceResult res =
      run_sequence(space, DensityOperator::pure(3, 0), seq, off, ens, opt);
  // After the first delay (tau = 2 us, FWHM 12 MHz) the coherence is dead.
  bool found = false;
  for (const auto& p : res.timeline) {
    if (std::abs(p.time_us - 2.0) < 1e-9 && !found) {
      CHECK(std::hypot(p.x, p.y) < 0.05);
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("ideal storage returns the input state") {
  const WorkingSpace space = WorkingSpace::three_level();
  RelaxationChannels off;
  EngineOptions opt;
  opt.ideal_pulses = true;
  const StorageTimings timings;
  const Sequence seq = build_storage_sequence(timings);

  const auto in = DensityOperator::from_bloch(3, {0, 1}, 1.0, 0.0, 0.0);
  const SequenceResult res = run_sequence(space, in, seq, off, kSingle, opt);
  CHECK(std::abs(res.echo.x - 1.0) < 1e-9);
  CHECK(std::abs(res.echo.y) < 1e-9);
  CHECK(std::abs(res.echo.z) < 1e-9);
}

TEST_CASE("stored interval decays with the requested T2n") {
  const WorkingSpace space = WorkingSpace::three_level();
  RelaxationChannels ch;
  ch.t2n_s = 6e-3;
  EngineOptions opt;
  opt.ideal_pulses = true;
  const auto in = DensityOperator::from_bloch(3, {0, 1}, 1.0, 0.0, 0.0);
  StorageTimings timings;

  std::vector<double> times_us, t_s, amp;
  for (int k = 1; k <= 10; ++k) times_us.push_back(1200.0 * k);
  const auto sweep =
      preset_storage_sweep(space, in, timings, times_us, ch, kSingle, opt);
  for (const auto& p : sweep) {
    t_s.push_back(p.storage_time_us * 1e-6);
    amp.push_back(p.amplitude);
  }
  const auto fit = fit_stretched(t_s, amp);
  CHECK(fit.decay.t2_s == doctest::Approx(6e-3).epsilon(0.02));
}

TEST_CASE("tau_n -> 0 is a pass-through memory") {
  const WorkingSpace space = WorkingSpace::three_level();
  RelaxationChannels off;
  EngineOptions opt;
  opt.ideal_pulses = true;
  StorageTimings timings;
  timings.tau_n_us = 1e-6;
  const Sequence seq = build_storage_sequence(timings);
  const auto in = DensityOperator::from_bloch(3, {0, 1}, 0.6, -0.8, 0.0);
  const SequenceResult res = run_sequence(space, in, seq, off, kSingle, opt);
  CHECK(res.echo.x == doctest::Approx(0.6).epsilon(1e-9));
  CHECK(res.echo.y == doctest::Approx(0.8).epsilon(1e-9));  // ideal map flips Y
}

TEST_CASE("omitting the storage rf refocusing pulse kills the echo") {
  const WorkingSpace space = WorkingSpace::three_level();
  RelaxationChannels off;
  EngineOptions opt;
  opt.ideal_pulses = true;
  EnsembleSpec ens;
  ens.members = 3000;
  ens.rf_detuning_fwhm_mhz = 0.24;
  ens.seed = 5;
  StorageTimings timings;
  timings.tau_n_us = 2.5;

  const auto in = DensityOperator::from_bloch(3, {0, 1}, 1.0, 0.0, 0.0);
  const Sequence without = build_storage_sequence(timings, false);
  const SequenceResult res = run_sequence(space, in, without, off, ens, opt);
  CHECK(std::hypot(res.echo.x, res.echo.y) < 0.05);

  const Sequence with_refocus = build_storage_sequence(timings, true);
  const SequenceResult res2 = run_sequence(space, in, with_refocus, off, ens, opt);
  CHECK(std::hypot(res2.echo.x, res2.echo.y) > 0.999);
}

TEST_CASE("ensemble averaging is linear in the state") {
  const WorkingSpace space = WorkingSpace::three_level();
  RelaxationChannels off;
  EngineOptions opt;
  EnsembleSpec ens;
  ens.members = 40;
  ens.electron_detuning_fwhm_mhz = 8.0;
  ens.mw_amplitude_sigma = 0.05;
  ens.seed = 9;
  const Sequence seq = build_hahn_echo(1.0);
  const SequenceResult res =
      run_sequence(space, DensityOperator::pure(3, 0), seq, off, ens, opt);
  // The averaged observables equal the observables of the averaged state.
  const Matrix rho = res.echo_state.matrix();
  const double x = (pauli_x(3, {0, 1}) * rho).trace().real();
  const double y = (pauli_y(3, {0, 1}) * rho).trace().real();
  const double z = (pauli_z(3, {0, 1}) * rho).trace().real();
  CHECK(std::abs(x - res.echo.x) < 1e-12);
  CHECK(std::abs(y - res.echo.y) < 1e-12);
  CHECK(std::abs(z - res.echo.z) < 1e-12);
}

TEST_CASE("composed propagators stay unitary with channels off") {
  const WorkingSpace space = WorkingSpace::three_level();
  EnsembleMember member;
  member.electron_detuning_mhz = 3.0;
  member.rf_detuning_mhz = 0.1;
  member.mw_amplitude_error = 0.02;
  member.rf_amplitude_error = -0.05;
  Matrix u = Matrix::Identity(3, 3);
  const StorageTimings t;
  const Sequence seq = build_storage_sequence(t);
  for (const auto& item : seq.items) {
    if (const Pulse* p = std::get_if<Pulse>(&item)) {
      u = unitary_for_pulse(space, *p, member, false) * u;
    }
  }
  CHECK((u * u.adjoint() - Matrix::Identity(3, 3)).norm() < 1e-10);
}

TEST_CASE("state invariants hold through a noisy dissipative sequence") {
  const WorkingSpace space = WorkingSpace::three_level();
  RelaxationChannels ch{0.42e-3, 50e-6, 0.66e-3};
  EnsembleSpec ens;
  ens.members = 50;
  ens.electron_detuning_fwhm_mhz = 12.0;
  ens.rf_detuning_fwhm_mhz = 0.24;
  ens.mw_amplitude_sigma = 0.015;
  ens.rf_amplitude_sigma = 0.14;
  ens.rf_amplitude_bound = 0.07;
  ens.seed = 33;
  const StorageTimings t;
  const Sequence seq = build_storage_sequence(t);
  const SequenceResult res =
      run_sequence(space, DensityOperator::from_bloch(3, {0, 1}, 0, 1, 0), seq, ch, ens, {});
  const Matrix rho = res.final_state.matrix();
  CHECK(std::abs(rho.trace().real() - 1.0) < 1e-9);
  CHECK((rho - rho.adjoint()).norm() < 1e-10);
  CHECK(res.final_state.min_eigenvalue() > -1e-9);
}

TEST_CASE("rabi presets") {
  const WorkingSpace space = WorkingSpace::three_level();

  SUBCASE("no inhomogeneity: undamped oscillation at the Rabi period") {
    EnsembleSpec ens;
    ens.members = 1;
    const double rabi = 15.625;
    const auto trace =
        preset_rabi(space, Channel::Microwave, {0, 1}, rabi, 3.0 / rabi, 601, ens);
    // <Z> = cos(2 pi Omega t) exactly.
    for (std::size_t k = 0; k < trace.duration_us.size(); ++k) {
      const double expected = std::cos(2.0 * kPi * rabi * trace.duration_us[k]);
      CHECK(std::abs(trace.z[k] - expected) < 1e-6);
    }
  }

  SUBCASE("Gaussian amplitude spread gives a Gaussian envelope") {
    EnsembleSpec ens;
    ens.members = 4000;
    ens.mw_amplitude_sigma = 0.015;
    ens.seed = 3;
    const double rabi = 15.625;
    const auto trace =
        preset_rabi(space, Channel::Microwave, {0, 1}, rabi, 10.0 / rabi, 801, ens);
    // At whole periods <Z> = <cos(2 pi Omega (1+a) t)> ~ exp(-(2 pi Omega
    // sigma t)^2 / 2).
    for (int period : {2, 5, 10}) {
      const double t = period / rabi;
      const std::size_t k = static_cast<std::size_t>(std::round(t / (10.0 / rabi) * 800));
      const double expected = std::exp(-0.5 * std::pow(2 * kPi * rabi * 0.015 * t, 2));
      CHECK(std::abs(trace.z[k] - expected) < 0.03);
    }
  }

  SUBCASE("truncated rf spread keeps oscillating") {
    EnsembleSpec ens;
    ens.members = 4000;
    ens.rf_amplitude_sigma = 0.14;
    ens.rf_amplitude_bound = 0.07;
    ens.seed = 8;
    const double rabi = 1.0 / 6.0;
    const auto trace =
        preset_rabi(space, Channel::RadioFrequency, {1, 2}, rabi, 10.2 / rabi, 1021, ens);
    double late = 0.0;
    for (std::size_t k = trace.z.size() - 110; k < trace.z.size(); ++k) {
      late = std::max(late, std::abs(trace.z[k]));
    }
    CHECK(late > 0.1);
  }
}

TEST_CASE("davies endor peaks line up with the nuclear gaps") {
  const SpinSystem sys = spinmem::testing::nd145_yso();
  const FieldSpec field{561.5, spinmem::testing::working_direction()};
  const auto levels = storage_levels(sys, field, 9700.0, true);
  const Subspace sub = subspace_project(sys, field, levels);

  const double f_upper = std::abs(sub.energies_mhz(1) - sub.energies_mhz(2));
  const double f_lower = std::abs(sub.energies_mhz(0) - sub.energies_mhz(3));
  std::vector<double> grid;
  const double lo = std::min(f_upper, f_lower) - 1.5;
  const double hi = std::max(f_upper, f_lower) + 1.5;
  for (double f = lo; f <= hi; f += 0.02) grid.push_back(f);

  RelaxationChannels off;
  const DaviesTrace trace = preset_davies_endor(sub, grid, 1.0 / 6.0, off, kSingle);
  REQUIRE(trace.peak_frequencies_mhz.size() == 2);
  std::vector<double> gaps = {f_upper, f_lower};
  std::sort(gaps.begin(), gaps.end());
  CHECK(std::abs(trace.peak_frequencies_mhz[0] - gaps[0]) < 0.01);
  CHECK(std::abs(trace.peak_frequencies_mhz[1] - gaps[1]) < 0.01);

  // On resonance the contrast is maximal; far off resonance it vanishes.
  double on_res = 0.0, off_res = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (std::abs(grid[k] - gaps[0]) < 0.011) on_res = std::max(on_res, trace.contrast[k]);
  }
  off_res = std::abs(trace.contrast.front());
  CHECK(on_res > 10.0 * std::max(off_res, 1e-6));
}

TEST_CASE("echoes report at the nominal refocusing time") {
  const WorkingSpace space = WorkingSpace::three_level();
  const Sequence seq = build_hahn_echo(3.0);
  CHECK(seq.echo_time_us == doctest::Approx(6.0));
  RelaxationChannels off;
  const SequenceResult res =
      run_sequence(space, DensityOperator::pure(3, 0), seq, off, kSingle, {});
  CHECK(res.echo.time_us == doctest::Approx(6.0));
}

TEST_CASE("storage timing validation") {
  StorageTimings t;
  t.d1_us = t.tau_e_us;  // rf transfer after refocusing: rejected
  CHECK_THROWS_AS(t.validate(), InvalidArgument);
}
