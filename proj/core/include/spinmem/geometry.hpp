#pragma once

#include <Eigen/Dense>

namespace spinmem {

// Euler angles in degrees, xzx convention, right-handed active rotations:
// R = Rx(alpha) * Rz(beta) * Rx(gamma).
struct EulerAngles {
  double alpha_deg = 0.0;
  double beta_deg = 0.0;
  double gamma_deg = 0.0;
};

// R = Rx(alpha) Rz(beta) Rx(gamma), with
// Rx(t) = [[1,0,0],[0,cos t,-sin t],[0,sin t,cos t]].
Eigen::Matrix3d euler_to_rotation(const EulerAngles& angles);

// Inverse of euler_to_rotation. Returns the standard branch
// beta in [0, 180), alpha and gamma in [0, 360). Gimbal-degenerate inputs
// (beta = 0 or 180) put the full x rotation into alpha.
EulerAngles euler_from_rotation(const Eigen::Matrix3d& rotation);

// An interaction tensor given by three principal values and the orientation
// of its principal axes relative to the (D1, D2, b) crystal frame.
// Dimensionless for g, MHz for the hyperfine tensor.
struct InteractionTensor {
  Eigen::Vector3d principal_values = Eigen::Vector3d::Zero();
  EulerAngles orientation;
};

// Cartesian form T = R diag(principal) R^T. Symmetric by construction;
// its eigenvalues are the principal values.
Eigen::Matrix3d tensor_to_matrix(const InteractionTensor& tensor);

// Decomposes a symmetric matrix back into principal values + xzx Euler
// angles. Axes are ordered so |v_z| >= |v_x| >= |v_y| (the reporting
// convention used for the crystal tensors) and the rotation is
// canonicalized over the four equivalent axis-sign choices by picking the
// lexicographically smallest (beta, alpha, gamma) triple.
InteractionTensor tensor_from_matrix(const Eigen::Matrix3d& symmetric);

}  // namespace spinmem
