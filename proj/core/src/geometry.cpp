#include "spinmem/geometry.hpp"

#include <array>
#include <cmath>
#include <tuple>

#include "spinmem/constants.hpp"
#include "spinmem/errors.hpp"

namespace spinmem {

namespace {

Eigen::Matrix3d rot_x(double deg) {
  const double t = deg * constants::kDegToRad;
  Eigen::Matrix3d r;
  r << 1, 0, 0,
       0, std::cos(t), -std::sin(t),
       0, std::sin(t), std::cos(t);
  return r;
}

Eigen::Matrix3d rot_z(double deg) {
  const double t = deg * constants::kDegToRad;
  Eigen::Matrix3d r;
  r << std::cos(t), -std::sin(t), 0,
       std::sin(t), std::cos(t), 0,
       0, 0, 1;
  return r;
}

double wrap_360(double deg) {
  double w = std::fmod(deg, 360.0);
  if (w < 0) w += 360.0;
  return w;
}

}  // namespace

Eigen::Matrix3d euler_to_rotation(const EulerAngles& angles) {
  if (!std::isfinite(angles.alpha_deg) || !std::isfinite(angles.beta_deg) ||
      !std::isfinite(angles.gamma_deg)) {
    throw InvalidArgument("euler_to_rotation: angles must be finite");
  }
  return rot_x(angles.alpha_deg) * rot_z(angles.beta_deg) * rot_x(angles.gamma_deg);
}

EulerAngles euler_from_rotation(const Eigen::Matrix3d& rotation) {
  const auto& r = rotation;
  // For R = Rx(a) Rz(b) Rx(g): R(0,0) = cos b, R(1,0) = cos a sin b,
  // R(2,0) = sin a sin b, R(0,1) = -sin b cos g, R(0,2) = sin b sin g.
  const double rad_to_deg = 1.0 / constants::kDegToRad;
  const double sb = std::sqrt(r(0, 1) * r(0, 1) + r(0, 2) * r(0, 2));
  EulerAngles out;
  if (sb > 1e-12) {
    out.beta_deg = std::atan2(sb, r(0, 0)) * rad_to_deg;
    out.alpha_deg = wrap_360(std::atan2(r(2, 0), r(1, 0)) * rad_to_deg);
    out.gamma_deg = wrap_360(std::atan2(r(0, 2), -r(0, 1)) * rad_to_deg);
  } else {
    // beta = 0 or 180: only alpha +/- gamma is defined; put it all in alpha.
    out.beta_deg = r(0, 0) > 0 ? 0.0 : 180.0;
    out.gamma_deg = 0.0;
    out.alpha_deg = wrap_360(std::atan2(r(2, 1), r(1, 1)) * rad_to_deg);
  }
  return out;
}

Eigen::Matrix3d tensor_to_matrix(const InteractionTensor& tensor) {
  const Eigen::Matrix3d r = euler_to_rotation(tensor.orientation);
  return r * tensor.principal_values.asDiagonal() * r.transpose();
}

InteractionTensor tensor_from_matrix(const Eigen::Matrix3d& symmetric) {
  const Eigen::Matrix3d sym = 0.5 * (symmetric + symmetric.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(sym);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("tensor_from_matrix: eigendecomposition failed");
  }
  const Eigen::Vector3d evals = solver.eigenvalues();
  const Eigen::Matrix3d evecs = solver.eigenvectors();

  // Order axes |v_z| >= |v_x| >= |v_y|.
  std::array<int, 3> by_mag = {0, 1, 2};
  std::sort(by_mag.begin(), by_mag.end(), [&](int a, int b) {
    return std::abs(evals(a)) > std::abs(evals(b));
  });
  const int iz = by_mag[0], ix = by_mag[1], iy = by_mag[2];

  Eigen::Vector3d principal(evals(ix), evals(iy), evals(iz));
  Eigen::Matrix3d axes;
  axes.col(0) = evecs.col(ix);
  axes.col(1) = evecs.col(iy);
  axes.col(2) = evecs.col(iz);
  if (axes.determinant() < 0) axes.col(1) *= -1.0;

  // The four sign choices R diag(s) with det +1 describe the same tensor;
  // pick the canonical Euler triple.
  const std::array<Eigen::Vector3d, 4> signs = {
      Eigen::Vector3d(1, 1, 1), Eigen::Vector3d(1, -1, -1),
      Eigen::Vector3d(-1, 1, -1), Eigen::Vector3d(-1, -1, 1)};
  bool have = false;
  EulerAngles best;
  auto key = [](const EulerAngles& e) {
    return std::make_tuple(e.beta_deg, e.alpha_deg, e.gamma_deg);
  };
  for (const auto& s : signs) {
    const Eigen::Matrix3d cand = axes * s.asDiagonal();
    const EulerAngles e = euler_from_rotation(cand);
    if (!have || key(e) < key(best)) {
      best = e;
      have = true;
    }
  }

  InteractionTensor out;
  out.principal_values = principal;
  out.orientation = best;
  return out;
}

}  // namespace spinmem
