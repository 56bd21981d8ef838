#pragma once

#include <span>
#include <vector>

#include "spinmem/hamiltonian.hpp"

namespace spinmem {

// Gaussian line with given full width at half maximum, in the units of the
// axis it is applied to.
struct LineShapeSpec {
  double fwhm = 1.0;

  void validate() const;
};

// A sampled spectrum. Abscissa strictly increasing; mT for field sweeps,
// MHz for ENDOR. Intensities are non-negative; normalize_max() rescales the
// peak to 1 for presentation (no-op on an all-zero trace).
struct SpectrumTrace {
  std::vector<double> abscissa;
  std::vector<double> intensity;

  SpectrumTrace& normalize_max();
};

// The magnetically inequivalent partner class: both tensors conjugated by a
// 180 degree rotation about the crystal b axis. Involutive.
SpinSystem class_partner(const SpinSystem& sys);

struct ResonanceHit {
  double field_mt = 0.0;
  Transition transition;  // evaluated at field_mt
};

struct ResonanceSearchOptions {
  double grid_step_mt = 1.0;
  double tol_mhz = 1e-9;          // |transition freq - mw freq| at the root
  double forbidden_threshold = 1e-6;
  bool allowed_only = true;
};

// All fields in [range_min, range_max] where a transition crosses the
// spectrometer frequency, found by bracketing sign changes of
// (transition frequency - mw frequency) per level pair on a grid, then
// bisection. Empty result when nothing resonates in range.
std::vector<ResonanceHit> resonance_fields(const SpinSystem& sys, double mw_frequency_mhz,
                                           const Eigen::Vector3d& direction,
                                           double range_min_mt, double range_max_mt,
                                           const ResonanceSearchOptions& options = {});

// Echo-detected field sweep: intensity-weighted Gaussian lines at the
// resonance fields of all systems, summed over allowed transitions.
// The lineshape FWHM is given in the frequency domain (MHz) and converted
// per line using the local |d nu / dB| (central difference, 0.1 mT step).
SpectrumTrace ese_field_sweep(std::span<const SpinSystem> systems, double mw_frequency_mhz,
                              const Eigen::Vector3d& direction,
                              const std::vector<double>& field_grid_mt,
                              const LineShapeSpec& lineshape_mhz);

// ENDOR spectrum at fixed field: Gaussian lines at the rf-active nuclear
// transitions that share a level with the pumped ESR transition. Widths are
// per line in frequency order; a single-element list is broadcast.
// Amplitudes are the relative rf transition intensities.
SpectrumTrace endor_spectrum(const SpinSystem& sys, const FieldSpec& field,
                             std::pair<int, int> pumped_esr_levels,
                             const std::vector<double>& rf_grid_mhz,
                             const std::vector<LineShapeSpec>& lineshapes_mhz);

// Frequencies and intensities of the ENDOR lines themselves (no lineshape),
// sorted by frequency.
struct EndorLine {
  double frequency_mhz = 0.0;
  double intensity = 0.0;
  int lower = 0;
  int upper = 0;
};
std::vector<EndorLine> endor_lines(const SpinSystem& sys, const FieldSpec& field,
                                   std::pair<int, int> pumped_esr_levels);

// Orientation search over a cone: "close to D1" operationalized as the
// direction within the given half-angle that best reproduces the working
// anchors (ESR resonance field and the nuclear doublet on the top-m_I
// levels). Grid search over (polar offset, azimuth), deterministic.
struct OrientationAnchors {
  double mw_frequency_mhz = 9700.0;
  double target_field_mt = 561.5;
  double target_endor_low_mhz = 201.7;
  double target_endor_high_mhz = 202.8;
};
struct OrientationResult {
  Eigen::Vector3d direction = Eigen::Vector3d::UnitX();
  double resonance_field_mt = 0.0;  // of the top-m_I ESR line
  double endor_low_mhz = 0.0;
  double endor_high_mhz = 0.0;
  double score = 0.0;
};
OrientationResult find_working_orientation(const SpinSystem& sys,
                                           const Eigen::Vector3d& cone_axis,
                                           double half_angle_deg,
                                           const OrientationAnchors& anchors = {},
                                           int polar_steps = 5, int azimuth_steps = 24);

}  // namespace spinmem
