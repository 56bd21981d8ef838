// Microbenchmarks of the hot paths: Hamiltonian assembly and
// diagonalization, resonance-field searches, the Lindblad propagator, bath
// Monte Carlo trajectories, and chi reconstruction.

#include <benchmark/benchmark.h>

#include "spinmem/dynamics.hpp"
#include "spinmem/relaxation.hpp"
#include "spinmem/spectra.hpp"
#include "spinmem/tomography.hpp"

namespace {

using namespace spinmem;

SpinSystem nd145_yso() {
  SpinSystem sys;
  sys.nuclear_spin = 3.5;
  sys.g.principal_values = {1.49, -0.98, -4.17};
  sys.g.orientation = {192.0, 39.0, 183.0};
  sys.hyperfine_mhz.principal_values = {398.0, 0.1, 827.0};
  sys.hyperfine_mhz.orientation = {154.0, 34.0, 200.0};
  sys.nuclear_g_factor = -0.1874;
  return sys;
}

void hamiltonian_and_eigensystem(benchmark::State& state) {
  const SpinSystem sys = nd145_yso();
  const FieldSpec field{561.5, Eigen::Vector3d::UnitX()};
  for (auto _ : state) {
    benchmark::DoNotOptimize(eigensystem(build_hamiltonian(sys, field)));
  }
}
BENCHMARK(hamiltonian_and_eigensystem);

void field_scan_eigensolves(benchmark::State& state) {
  const SpinSystem sys = nd145_yso();
  const FieldLinearHamiltonian flh =
      field_linear_hamiltonian(sys, Eigen::Vector3d::UnitX());
  double b = 400.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(eigensystem(flh.at(b)));
    b = b < 700.0 ? b + 1.0 : 400.0;
  }
}
BENCHMARK(field_scan_eigensolves);

void resonance_search(benchmark::State& state) {
  const SpinSystem sys = nd145_yso();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        resonance_fields(sys, 9700.0, Eigen::Vector3d::UnitX(), 480.0, 640.0));
  }
}
BENCHMARK(resonance_search)->Unit(benchmark::kMillisecond);

void lindblad_delay_step(benchmark::State& state) {
  const WorkingSpace space = WorkingSpace::three_level();
  RelaxationChannels ch{0.42e-3, 50e-6, 0.66e-3};
  const auto rho = DensityOperator::from_bloch(3, {0, 1}, 1, 0, 0);
  Matrix h = Matrix::Zero(3, 3);
  h(1, 1) = 5.0;
  h(2, 2) = 5.1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(evolve_lindblad(rho, h, space, ch, 2.0));
  }
}
BENCHMARK(lindblad_delay_step);

void storage_sequence_member(benchmark::State& state) {
  const WorkingSpace space = WorkingSpace::three_level();
  RelaxationChannels ch{0.42e-3, 50e-6, 0.66e-3};
  EnsembleSpec ens;
  ens.members = 1;
  ens.electron_detuning_fwhm_mhz = 12.0;
  ens.rf_detuning_fwhm_mhz = 0.15;
  const Sequence seq = build_storage_sequence(StorageTimings{});
  const auto rho = DensityOperator::from_bloch(3, {0, 1}, 1, 0, 0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_sequence(space, rho, seq, ch, ens));
  }
}
BENCHMARK(storage_sequence_member);

void bath_trajectories(benchmark::State& state) {
  BathSpec bath;
  bath.concentration_per_cm3 = 9.4e16;
  bath.g_factor = 1.5;
  bath.t1_bath_s = 0.1245e-3;
  bath.box_spins = 400;
  bath.trajectories = 1000;
  bath.seed = 5;
  std::vector<double> taus;
  for (int k = 1; k <= 16; ++k) taus.push_back(4e-6 * k);
  for (auto _ : state) {
    benchmark::DoNotOptimize(spectral_diffusion_mc(bath, taus));
  }
}
BENCHMARK(bath_trajectories)->Unit(benchmark::kMillisecond);

void chi_reconstruction(benchmark::State& state) {
  const auto inputs = qpt_input_states();
  const auto kraus = random_cptp_kraus(3);
  std::vector<Eigen::Matrix2cd> outputs;
  for (const auto& rho : inputs) {
    Eigen::Matrix2cd out = Eigen::Matrix2cd::Zero();
    for (const auto& k : kraus) out += k * rho * k.adjoint();
    outputs.push_back(out);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(reconstruct_chi(inputs, outputs));
  }
}
BENCHMARK(chi_reconstruction);

}  // namespace

BENCHMARK_MAIN();
