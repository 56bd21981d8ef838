#pragma once

#include <optional>
#include <string>
#include <vector>

#include "spinmem/spin_system.hpp"

namespace spinmem {

// Static spin Hamiltonian H/h in MHz:
//   H = (muB/h) B n^T g S  +  S^T A I  -  g_n (muN/h) B n . I
// in the |m_S, m_I> product basis, m_S slowest, both descending.
// The nuclear Zeeman term is active only when nuclear_g_factor != 0.
Matrix build_hamiltonian(const SpinSystem& sys, const FieldSpec& field);

struct EigenSystem {
  Eigen::VectorXd energies_mhz;  // ascending
  Matrix vectors;                // columns are orthonormal eigenvectors
};

// Field-linear split H(B) = B * zeeman_unit + field_free for a fixed
// direction. Field scans reuse it instead of rebuilding the operators, and
// zeeman_unit doubles as dH/dB for Hellmann-Feynman derivatives.
struct FieldLinearHamiltonian {
  Matrix zeeman_unit;  // per mT
  Matrix field_free;   // hyperfine part

  Matrix at(double b_mt) const { return b_mt * zeeman_unit + field_free; }
};
FieldLinearHamiltonian field_linear_hamiltonian(const SpinSystem& sys,
                                                const Eigen::Vector3d& direction);

// Diagonalizes a Hermitian operator; rejects inputs whose anti-Hermitian
// part exceeds 1e-10 relative.
EigenSystem eigensystem(const Matrix& hamiltonian);

// Dominant |m_S, m_I> character of each eigenvector, plus the weight of
// that component. The product basis used for labeling is adapted to the
// effective quantization axes: the electron along g^T n (n the field
// direction), the nucleus along the hyperfine field A^T w_e. Labels are
// unassignable (weight below threshold) when a state is strongly mixed even
// in that basis.
struct LevelLabel {
  double m_s = 0.0;
  double m_i = 0.0;
  double weight = 0.0;
  bool assignable = false;
};
std::vector<LevelLabel> level_labels(const SpinSystem& sys,
                                     const Eigen::Vector3d& field_direction,
                                     const EigenSystem& eig, double min_weight = 0.5);

enum class DriveChannel { Microwave, RadioFrequency };

struct Transition {
  int lower = 0;
  int upper = 0;
  double frequency_mhz = 0.0;
  double intensity = 0.0;  // |<upper| O_drive |lower>|^2
  bool forbidden = false;  // intensity below threshold * max intensity
  // Differences of dominant-state labels where both ends are assignable.
  std::optional<double> delta_m_s;
  std::optional<double> delta_m_i;
};

struct TransitionTable {
  std::vector<Transition> entries;  // sorted by frequency
};

// The drive operator whose squared matrix elements give transition
// intensities: the magnetic-moment coupling along the drive direction,
// n^T g S + g_n (muN/muB) n . I, in units of the Bohr magneton. The nuclear
// term matters only for rf intensities with a nonzero nuclear g factor;
// nuclear transitions are otherwise driven through hyperfine mixing.
Matrix drive_operator(const SpinSystem& sys, DriveChannel channel,
                      const Eigen::Vector3d& drive_direction);

TransitionTable transition_table(const SpinSystem& sys, const FieldSpec& field,
                                 DriveChannel channel,
                                 const Eigen::Vector3d& drive_direction,
                                 double forbidden_threshold = 1e-6);

// A reduced operator set on a selection of eigenlevels. Level indices refer
// to the ascending-energy eigenbasis of the full Hamiltonian; mapping back
// to full-space indices is retained.
struct Subspace {
  std::vector<int> full_indices;
  Eigen::VectorXd energies_mhz;  // of the selected levels, selection order
  Matrix hamiltonian;            // diag(energies)
  Matrix mw_drive;               // reduced electron-spin drive operator
  Matrix rf_drive;               // reduced rf drive operator
  std::vector<LevelLabel> labels;

  int dim() const { return static_cast<int>(full_indices.size()); }
};

// Projects the Hamiltonian and both drive operators onto the given levels.
// Drive directions default to D2 (perpendicular to the near-D1 working
// field) for both channels.
Subspace subspace_project(const SpinSystem& sys, const FieldSpec& field,
                          const std::vector<int>& levels,
                          const Eigen::Vector3d& mw_direction = Eigen::Vector3d::UnitY(),
                          const Eigen::Vector3d& rf_direction = Eigen::Vector3d::UnitY());

// The three-level working space of the storage experiment:
// |1> = (lower electron manifold, extremal m_I), |2> = (upper, same m_I),
// |3> = (upper, one nuclear step inward), where the extremal m_I branch is
// the one whose ESR gap is closest to the spectrometer frequency. With
// include_fourth, |4> = (lower, one step inward) is appended (used by the
// Davies ENDOR preset to reach nuclear transitions of both manifolds).
// Requires assignable labels at the working field.
std::vector<int> storage_levels(const SpinSystem& sys, const FieldSpec& field,
                                double mw_frequency_mhz = 9700.0,
                                bool include_fourth = false);

}  // namespace spinmem
