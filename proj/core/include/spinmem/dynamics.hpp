#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "spinmem/hamiltonian.hpp"

namespace spinmem {

// Complex Hermitian unit-trace matrix on the working subspace.
// Invariants: trace 1 to 1e-9, Hermitian to 1e-10, eigenvalues > -1e-9.
class DensityOperator {
 public:
  explicit DensityOperator(Matrix rho);

  // |level><level| on a dim-dimensional space.
  static DensityOperator pure(int dim, int level);
  static DensityOperator maximally_mixed(int dim);
  // (1 + x X + y Y + z Z)/2 embedded on the pair (a, b) of a dim space;
  // remaining population stays out of the pair only if dim == 2, otherwise
  // the state lives entirely on the pair.
  static DensityOperator from_bloch(int dim, std::pair<int, int> pair, double x, double y,
                                    double z);

  const Matrix& matrix() const { return rho_; }
  int dim() const { return static_cast<int>(rho_.rows()); }
  double min_eigenvalue() const;

 private:
  Matrix rho_;
};

// Generalized Pauli operators on a level pair of a larger space; the first
// level of the pair carries Z = +1.
Matrix pauli_x(int dim, std::pair<int, int> pair);
Matrix pauli_y(int dim, std::pair<int, int> pair);
Matrix pauli_z(int dim, std::pair<int, int> pair);

enum class Channel { Microwave, RadioFrequency };

// A resonant rotation on one transition of the working subspace. Durations
// follow from the nominal angle and Rabi frequency; pulses act as hard
// rotations (the generalized Rabi formula handles member detunings), and rf
// pulses additionally expose the state to relaxation for their duration.
struct Pulse {
  Channel channel = Channel::Microwave;
  std::pair<int, int> target{0, 1};  // subspace level indices
  double nominal_angle_rad = 0.0;
  double phase_rad = 0.0;
  double rabi_frequency_mhz = 15.625;
  double carrier_offset_mhz = 0.0;  // drive carrier minus nominal gap

  // theta = 2 pi * Omega * t
  double duration_us() const;

  void validate(int dim) const;
};

struct Delay {
  double duration_us = 0.0;
};

using SequenceItem = std::variant<Pulse, Delay>;

// Ordered timeline plus a readout spec: which transition's coherence is the
// observable and when the echo is expected.
struct Sequence {
  std::vector<SequenceItem> items;
  std::pair<int, int> readout{0, 1};
  double echo_time_us = 0.0;  // position on the delay timeline

  double total_duration_us() const;
  void validate(int dim) const;
};

// Inhomogeneity ensemble. Electron and rf detunings are Gaussian with the
// given FWHM; microwave amplitude errors are Gaussian (relative sigma); rf
// amplitude errors follow a truncated Gaussian (relative sigma, hard bound).
struct EnsembleSpec {
  double electron_detuning_fwhm_mhz = 0.0;
  double rf_detuning_fwhm_mhz = 0.0;
  double mw_amplitude_sigma = 0.0;
  double rf_amplitude_sigma = 0.0;
  double rf_amplitude_bound = 1.0;
  int members = 1;
  std::uint64_t seed = 1;

  void validate() const;
};

// One ensemble member's parameter draw.
struct EnsembleMember {
  double electron_detuning_mhz = 0.0;
  double rf_detuning_mhz = 0.0;
  double mw_amplitude_error = 0.0;  // relative
  double rf_amplitude_error = 0.0;  // relative
};
EnsembleMember draw_member(const EnsembleSpec& spec, std::uint64_t index);

// T1e/T2e/T2n in seconds; infinities switch a channel off.
// Electron pure dephasing runs at 1/T2e - 1/(2 T1e). The electron T1 flips
// on the |1>:|2> pair already relax the |2>:|3> nuclear coherence at
// 1/(4 T1e) in this reduced model, so the nuclear pure-dephasing rate is
// derived as 1/T2n - 1/(4 T1e) to realize the requested T2n exactly.
struct RelaxationChannels {
  double t1e_s = std::numeric_limits<double>::infinity();
  double t2e_s = std::numeric_limits<double>::infinity();
  double t2n_s = std::numeric_limits<double>::infinity();

  void validate() const;
  double electron_flip_rate_per_us() const;      // each direction
  double electron_dephasing_rate_per_us() const; // pure dephasing
  double nuclear_dephasing_rate_per_us() const;  // pure dephasing
};

struct EngineOptions {
  // Treat pulses as infinite-bandwidth rotations (member detunings and
  // carrier offsets ignored during the pulse). Used by idealized oracles.
  bool ideal_pulses = false;
  // Apply relaxation over the rf pulse duration (mw pulses are 3 orders of
  // magnitude shorter and never exposed).
  bool relaxation_during_rf = true;
  // Lindblad step ceiling relative to min(T2e, T2n); the actual step is
  // duration / ceil(duration / max_step).
  double step_fraction = 0.01;
  int threads = 1;
};

// Working-subspace simulation context: level energies are taken into the
// rotating frame, so only member detunings appear in delays. The three
// canonical levels are |1>, |2>, |3> with mw on (0, 1) and rf on (1, 2);
// a fourth level (1, 3)-rf-addressable is supported for Davies ENDOR.
struct WorkingSpace {
  int dim = 3;
  // Frame detunings per level for a given member, in MHz.
  // Level 0: 0; levels in the upper electron manifold: electron detuning;
  // each nuclear step inward adds the rf detuning.
  std::vector<double> electron_weight = {0.0, 1.0, 1.0};
  std::vector<double> nuclear_weight = {0.0, 0.0, 1.0};

  static WorkingSpace three_level();
  static WorkingSpace four_level();  // adds |4> = (lower manifold, nuclear step)
  static WorkingSpace qubit();       // plain two-level space

  Eigen::VectorXd frame_detunings_mhz(const EnsembleMember& member) const;
};

// exp(-i 2 pi H t) with H in MHz, t in µs, acting on a density operator.
Matrix unitary_for_pulse(const WorkingSpace& space, const Pulse& pulse,
                         const EnsembleMember& member, bool ideal_pulse);

// Solves d rho/dt = -i 2 pi [H, rho] + sum_k D[L_k] rho over `duration_us`
// with the fixed-step superoperator exponential. H in MHz.
DensityOperator evolve_lindblad(const DensityOperator& rho, const Matrix& hamiltonian_mhz,
                                const WorkingSpace& space, const RelaxationChannels& channels,
                                double duration_us, double step_fraction = 0.01);

struct TimelinePoint {
  double time_us = 0.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

struct SequenceResult {
  std::vector<TimelinePoint> timeline;  // ensemble-averaged, readout transition
  TimelinePoint echo;                   // at the nominal echo time
  DensityOperator final_state;          // ensemble-averaged
  DensityOperator echo_state;           // ensemble-averaged at the echo time
};

// Runs the sequence for every ensemble member and averages in member-index
// order (deterministic for a given seed, independent of thread count).
SequenceResult run_sequence(const WorkingSpace& space, const DensityOperator& initial,
                            const Sequence& seq, const RelaxationChannels& channels,
                            const EnsembleSpec& ensemble, const EngineOptions& options = {});

// ---- Presets ----------------------------------------------------------

struct StorageTimings {
  double tau_e_us = 2.0;   // half-delay of the electron refocusing block
  double d1_us = 1.0;      // refocusing pi -> transfer rf pi
  double tau_n_us = 10.0;  // half of the stored interval
  double d4_us = 2.0;      // reverse rf pi -> final mw pi
  double mw_rabi_mhz = 15.625;     // 32 ns pi pulse
  double rf_rabi_mhz = 1.0 / 6.0;  // 3 us pi pulse

  void validate() const;
};

// The storage/retrieval sequence:
// pi/2(mw) - tau_e - pi(mw) - d1 - pi(rf) - [electron echo refocuses] -
// pi(mw) - tau_n - pi(rf) - tau_n - pi(mw) - (tau_e - d1) - pi(rf) - d4 -
// pi(mw) - echo. Ideal output equals the input; the stored interval decays
// with T2n.
Sequence build_storage_sequence(const StorageTimings& t, bool include_storage_rf_refocus = true);

// Two-pulse electron echo whose total electron-coherence duration matches
// the storage sequence outside the rf pulse windows; used as the
// normalization reference for tomography.
Sequence build_reference_echo(const StorageTimings& t);

// Plain Hahn echo on the mw transition.
Sequence build_hahn_echo(double tau_us, double mw_rabi_mhz = 15.625);

struct RabiTrace {
  std::vector<double> duration_us;
  std::vector<double> z;  // <Z> on the driven pair
};

// <Z> vs pulse duration on the chosen channel/pair with ensemble-averaged
// amplitude errors and detunings (pulse durations stay far below the
// relaxation scale, so the oscillation itself is driven unitarily).
RabiTrace preset_rabi(const WorkingSpace& space, Channel channel, std::pair<int, int> target,
                      double rabi_mhz, double max_duration_us, int samples,
                      const EnsembleSpec& ensemble, const EngineOptions& options = {});

struct StorageSweepPoint {
  double storage_time_us = 0.0;  // 2 tau_n
  double echo_x = 0.0;
  double echo_y = 0.0;
  double amplitude = 0.0;  // |echo quadrature vector|
};

// Sweeps the stored interval 2 tau_n and reports the retrieved echo.
std::vector<StorageSweepPoint> preset_storage_sweep(
    const WorkingSpace& space, const DensityOperator& input, StorageTimings timings,
    const std::vector<double>& storage_times_us, const RelaxationChannels& channels,
    const EnsembleSpec& ensemble, const EngineOptions& options = {});

struct DaviesTrace {
  std::vector<double> rf_frequency_mhz;
  std::vector<double> contrast;  // echo change caused by the rf pulse
  // Interpolated contrast maxima, one per addressed nuclear transition.
  std::vector<double> peak_frequencies_mhz;
};

// Davies-style ENDOR: selective mw pi inversion, rf pi pulse at the swept
// frequency on the nearest nuclear transition, two-pulse echo detection.
// Peaks sit at the subspace's nuclear gaps.
DaviesTrace preset_davies_endor(const Subspace& subspace, const std::vector<double>& rf_grid_mhz,
                                double rf_rabi_mhz, const RelaxationChannels& channels,
                                const EnsembleSpec& ensemble, double tau_us = 2.0,
                                const EngineOptions& options = {});

}  // namespace spinmem
