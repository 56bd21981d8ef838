#pragma once

#include <array>
#include <vector>

#include "spinmem/dynamics.hpp"

namespace spinmem {

// Pauli expectation values of a qubit state on the readout transition.
struct PauliVector {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

// Direct expectation values on the readout pair.
PauliVector measure_pauli(const DensityOperator& rho, std::pair<int, int> readout);

// The experimental protocol: X and Y read from the echo quadratures, Z by an
// extra pi/2 (about Y) mapping Z onto X. Identical to measure_pauli for
// ideal pulses; kept separate so that the equivalence is testable.
PauliVector measure_pauli_protocol(const DensityOperator& rho, std::pair<int, int> readout);

struct BlochState {
  DensityOperator rho;
  bool projected = false;  // |v| > 1 was shrunk onto the Bloch sphere
};

// rho = (1 + x X + y Y + z Z)/2, radially shrunk into the Bloch ball when
// needed (flag reported).
BlochState state_from_pauli(const PauliVector& v);

// 4x4 complex process matrix in the (1, X, Y, Z) basis.
using ProcessMatrix = Eigen::Matrix4cd;

// The identity process: chi with only the [1,1] component.
ProcessMatrix chi_identity();

// chi of a unitary or Kraus map (for oracles and tests).
ProcessMatrix chi_from_kraus(const std::vector<Eigen::Matrix2cd>& kraus);

// Applies the process matrix to a qubit state.
Eigen::Matrix2cd apply_process(const ProcessMatrix& chi, const Eigen::Matrix2cd& rho);

// Least-squares reconstruction of chi from (input, output) qubit density
// matrix pairs. The input set must span the qubit operator space; the
// deficient Pauli directions are named otherwise. The result is Hermitized;
// trace is normalized when `normalize_trace`.
struct ChiReconstruction {
  ProcessMatrix chi;
  double residual = 0.0;  // rms of the least-squares residual
};
ChiReconstruction reconstruct_chi(const std::vector<Eigen::Matrix2cd>& inputs,
                                  const std::vector<Eigen::Matrix2cd>& outputs,
                                  bool normalize_trace = true);

// The seven cardinal input states used for process tomography:
// +X, -X, +Y, -Y, +Z, -Z and the maximally mixed state.
std::vector<Eigen::Matrix2cd> qpt_input_states();

// Clamp negative eigenvalues to zero and renormalize the trace. Reports the
// Frobenius distance moved.
struct CptpProjection {
  ProcessMatrix chi;
  double distance = 0.0;
  bool changed = false;
};
CptpProjection project_cptp(const ProcessMatrix& chi);

// Uhlmann fidelity Tr(sqrt(sqrt(r2) r1 sqrt(r2)))^2, symmetric in its
// arguments.
double state_fidelity(const Eigen::Matrix2cd& rho1, const Eigen::Matrix2cd& rho2);
double state_fidelity(const DensityOperator& rho1, const DensityOperator& rho2);

// Tr(chi chi_ideal), real part, clamped to [0, 1].
double process_fidelity(const ProcessMatrix& chi, const ProcessMatrix& chi_ideal);

// Mean Uhlmann fidelity between input and output over the six cardinal pure
// states; equals (2 Fp + 1)/3 for any CPTP qubit map.
double average_state_fidelity(const ProcessMatrix& chi);

// Random CPTP qubit channel (Kraus rank 4) for property tests.
std::vector<Eigen::Matrix2cd> random_cptp_kraus(std::uint64_t seed);

// ---- Memory process tomography ------------------------------------------

// Full characterization of the storage/retrieval operation: the seven input
// states are sent through the storage sequence, echo outputs are normalized
// against the two-pulse reference echo and read in the frame in which the
// ideal sequence acts as the identity (the experimental phase convention),
// then chi is reconstructed by least squares.
struct MemoryTomographyResult {
  std::vector<Eigen::Matrix2cd> inputs;
  std::vector<Eigen::Matrix2cd> outputs;      // referenced, frame-corrected
  std::vector<bool> output_projected;         // Bloch-ball projection flags
  double reference_amplitude = 0.0;
  ChiReconstruction reconstruction;           // raw (TP-normalized) chi
  CptpProjection physical;                    // CP-projected chi
  double process_fid = 0.0;                   // Tr(chi chi_ideal), raw chi
  double avg_state_fidelity_formula = 0.0;    // (2 Fp + 1)/3
  double avg_state_fidelity_direct = 0.0;     // mean Uhlmann, measured states
};

MemoryTomographyResult run_memory_tomography(const StorageTimings& timings,
                                             const RelaxationChannels& channels,
                                             const EnsembleSpec& ensemble,
                                             const EngineOptions& options = {});

}  // namespace spinmem
