#pragma once

#include <vector>

#include "spinmem/spectra.hpp"

namespace spinmem {

// Sample rotation planes: the field turns in the plane perpendicular to the
// named crystal axis.
enum class RotationPlane { PerpD1, PerpD2, PerpB };

// Field direction at `angle_deg` within the plane.
Eigen::Vector3d plane_direction(RotationPlane plane, double angle_deg);

struct RotationPatternPoint {
  RotationPlane plane = RotationPlane::PerpB;
  double angle_deg = 0.0;
  std::vector<double> fields_mt;  // observed line positions, unlabeled
};

struct RotationPattern {
  double mw_frequency_mhz = 9700.0;
  double field_min_mt = 50.0;
  double field_max_mt = 950.0;
  std::vector<RotationPatternPoint> points;

  std::size_t total_positions() const;
  int plane_count() const;
};

// Line positions of the allowed ESR transitions over sample rotations, for
// both magnetically inequivalent classes (they coincide where the classes
// are equivalent). Angles run over [0, 180) with the given step.
RotationPattern simulate_rotation_pattern(const SpinSystem& sys, double mw_frequency_mhz,
                                          const std::vector<RotationPlane>& planes,
                                          double angle_step_deg, double field_min_mt = 50.0,
                                          double field_max_mt = 950.0,
                                          bool include_partner = true);

struct FitOptions {
  int max_iterations = 200;
  double relative_tolerance = 1e-8;  // on the residual change
  double initial_damping = 1e-3;
  double outlier_sigma = 3.0;  // nearest-match rejection, applied at the end
  // Lines closer than this behave as one unresolved peak: model lines and
  // observed positions are collapsed onto cluster centroids before matching
  // (sorting noisy positions of a near-degenerate pair otherwise biases the
  // fit toward configurations that split them).
  double merge_tolerance_mt = 2.5;
};

struct FitResult {
  SpinSystem system;                   // fitted tensors in principal/Euler form
  Eigen::Matrix3d g_matrix;            // fitted Cartesian forms
  Eigen::Matrix3d hyperfine_matrix_mhz;
  double rms_residual_mt = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<double> damping_trace;   // accepted-step damping values
  std::vector<double> uncertainties;   // 12 Cartesian parameters, approximate
};

// Damped least squares on the 12 independent components of the symmetric g
// and A matrices, minimizing squared position residuals with per-iteration
// nearest-position assignment. Needs >= 20 positions spanning >= 2 planes;
// a rank-deficient Jacobian at the starting point is rejected with the
// undetermined parameter directions named.
FitResult fit_tensors(const RotationPattern& pattern, const SpinSystem& initial_guess,
                      const FitOptions& options = {});

}  // namespace spinmem
