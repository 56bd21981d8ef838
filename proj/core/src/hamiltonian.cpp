#include "spinmem/hamiltonian.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <unsupported/Eigen/KroneckerProduct>

#include "spinmem/constants.hpp"
#include "spinmem/errors.hpp"

namespace spinmem {

FieldLinearHamiltonian field_linear_hamiltonian(const SpinSystem& sys,
                                                const Eigen::Vector3d& direction) {
  sys.validate();
  if (std::abs(direction.norm() - 1.0) > 1e-12) {
    throw InvalidArgument("field_linear_hamiltonian: direction must be a unit vector");
  }
  const ProductOperators ops = product_operators(sys);
  const Eigen::Matrix3d g = tensor_to_matrix(sys.g);
  const Eigen::Matrix3d a = tensor_to_matrix(sys.hyperfine_mhz);
  const int d = sys.dim();

  FieldLinearHamiltonian flh;
  // Electron Zeeman per mT: (muB/h) n^T g S.
  const Eigen::Vector3d ng = g.transpose() * direction;
  flh.zeeman_unit = constants::kBohrMagnetonMHzPerMT *
                    (ng(0) * ops.sx + ng(1) * ops.sy + ng(2) * ops.sz);
  // Optional isotropic nuclear Zeeman: -g_n (muN/h) n . I per mT.
  if (sys.nuclear_g_factor != 0.0) {
    flh.zeeman_unit -= sys.nuclear_g_factor * constants::kNuclearMagnetonMHzPerMT *
                       (direction(0) * ops.ix + direction(1) * ops.iy +
                        direction(2) * ops.iz);
  }

  // Hyperfine: S^T A I.
  flh.field_free = Matrix::Zero(d, d);
  const std::array<const Matrix*, 3> s = {&ops.sx, &ops.sy, &ops.sz};
  const std::array<const Matrix*, 3> i = {&ops.ix, &ops.iy, &ops.iz};
  for (int p = 0; p < 3; ++p) {
    for (int q = 0; q < 3; ++q) {
      if (a(p, q) != 0.0) flh.field_free += a(p, q) * (*s[p]) * (*i[q]);
    }
  }
  return flh;
}

Matrix build_hamiltonian(const SpinSystem& sys, const FieldSpec& field) {
  field.validate();
  return field_linear_hamiltonian(sys, field.direction).at(field.magnitude_mt);
}

EigenSystem eigensystem(const Matrix& hamiltonian) {
  const double scale = std::max(hamiltonian.norm(), 1.0);
  if ((hamiltonian - hamiltonian.adjoint()).norm() > 1e-10 * scale) {
    throw InvalidArgument("eigensystem: input is not Hermitian within 1e-10 relative");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(0.5 * (hamiltonian + hamiltonian.adjoint()));
  if (solver.info() != Eigen::Success) {
    throw NumericalError("eigensystem: diagonalization failed");
  }
  return {solver.eigenvalues(), solver.eigenvectors()};
}

namespace {

// Columns: eigenvectors of J . axis in descending-m order.
Matrix axis_basis(double j, const Eigen::Vector3d& axis) {
  const SpinOperators ops = spin_operators(j);
  const Matrix proj = axis(0) * ops.x + axis(1) * ops.y + axis(2) * ops.z;
  Eigen::SelfAdjointEigenSolver<Matrix> solver(proj);
  const int dim = static_cast<int>(2 * j + 1.5);
  Matrix cols(dim, dim);
  for (int k = 0; k < dim; ++k) cols.col(k) = solver.eigenvectors().col(dim - 1 - k);
  return cols;
}

}  // namespace

std::vector<LevelLabel> level_labels(const SpinSystem& sys,
                                     const Eigen::Vector3d& field_direction,
                                     const EigenSystem& eig, double min_weight) {
  // The electron quantizes along g^T n (not along B) for anisotropic g; the
  // nuclear axis follows the hyperfine field A^T w_e of the electron. Labels
  // are dominant components in the product basis built from those axes.
  const Eigen::Matrix3d g = tensor_to_matrix(sys.g);
  const Eigen::Matrix3d a = tensor_to_matrix(sys.hyperfine_mhz);

  const Eigen::Vector3d n = field_direction.normalized();
  Eigen::Vector3d we = g.transpose() * n;
  if (we.norm() < 1e-12) we = n; else we.normalize();
  if (we.dot(n) < 0) we = -we;
  Eigen::Vector3d wn = a.transpose() * we;
  if (wn.norm() < 1e-12) wn = we; else wn.normalize();
  if (wn.dot(we) < 0) wn = -wn;

  const Matrix basis = Eigen::kroneckerProduct(axis_basis(sys.electron_spin, we),
                                               axis_basis(sys.nuclear_spin, wn));
  const Matrix overlap = basis.adjoint() * eig.vectors;

  const int dn = sys.nuclear_dim();
  std::vector<LevelLabel> out(eig.vectors.cols());
  for (int k = 0; k < eig.vectors.cols(); ++k) {
    int arg = 0;
    overlap.col(k).cwiseAbs2().maxCoeff(&arg);
    LevelLabel lab;
    lab.weight = std::norm(overlap(arg, k));
    lab.m_s = sys.electron_spin - arg / dn;
    lab.m_i = sys.nuclear_spin - arg % dn;
    lab.assignable = lab.weight >= min_weight;
    out[k] = lab;
  }
  return out;
}

Matrix drive_operator(const SpinSystem& sys, DriveChannel channel,
                      const Eigen::Vector3d& drive_direction) {
  if (std::abs(drive_direction.norm() - 1.0) > 1e-12) {
    throw InvalidArgument("drive_operator: drive direction must be a unit vector");
  }
  const ProductOperators ops = product_operators(sys);
  const Eigen::Matrix3d g = tensor_to_matrix(sys.g);
  const Eigen::Vector3d ng = g.transpose() * drive_direction;
  Matrix o = ng(0) * ops.sx + ng(1) * ops.sy + ng(2) * ops.sz;
  if (channel == DriveChannel::RadioFrequency && sys.nuclear_g_factor != 0.0) {
    const double ratio =
        constants::kNuclearMagnetonMHzPerMT / constants::kBohrMagnetonMHzPerMT;
    o -= sys.nuclear_g_factor * ratio *
         (drive_direction(0) * ops.ix + drive_direction(1) * ops.iy +
          drive_direction(2) * ops.iz);
  }
  return o;
}

TransitionTable transition_table(const SpinSystem& sys, const FieldSpec& field,
                                 DriveChannel channel,
                                 const Eigen::Vector3d& drive_direction,
                                 double forbidden_threshold) {
  const EigenSystem eig = eigensystem(build_hamiltonian(sys, field));
  const std::vector<LevelLabel> labels = level_labels(sys, field.direction, eig);
  const Matrix o = eig.vectors.adjoint() *
                   drive_operator(sys, channel, drive_direction) * eig.vectors;

  TransitionTable table;
  const int d = sys.dim();
  double max_intensity = 0.0;
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      Transition t;
      t.lower = i;
      t.upper = j;
      t.frequency_mhz = eig.energies_mhz(j) - eig.energies_mhz(i);
      t.intensity = std::norm(o(j, i));
      if (labels[i].assignable && labels[j].assignable) {
        t.delta_m_s = labels[j].m_s - labels[i].m_s;
        t.delta_m_i = labels[j].m_i - labels[i].m_i;
      }
      max_intensity = std::max(max_intensity, t.intensity);
      table.entries.push_back(t);
    }
  }
  for (auto& t : table.entries) {
    t.forbidden = t.intensity < forbidden_threshold * max_intensity;
  }
  std::sort(table.entries.begin(), table.entries.end(),
            [](const Transition& a, const Transition& b) {
              return a.frequency_mhz < b.frequency_mhz;
            });
  return table;
}

Subspace subspace_project(const SpinSystem& sys, const FieldSpec& field,
                          const std::vector<int>& levels,
                          const Eigen::Vector3d& mw_direction,
                          const Eigen::Vector3d& rf_direction) {
  const int d = sys.dim();
  std::set<int> seen;
  for (int lv : levels) {
    if (lv < 0 || lv >= d) {
      throw InvalidArgument("subspace_project: level index out of range");
    }
    if (!seen.insert(lv).second) {
      throw InvalidArgument("subspace_project: duplicate level index");
    }
  }
  if (levels.empty()) throw InvalidArgument("subspace_project: empty level set");

  const EigenSystem eig = eigensystem(build_hamiltonian(sys, field));
  const std::vector<LevelLabel> labels = level_labels(sys, field.direction, eig);
  const int m = static_cast<int>(levels.size());

  Matrix basis(d, m);
  for (int c = 0; c < m; ++c) basis.col(c) = eig.vectors.col(levels[c]);

  Subspace sub;
  sub.full_indices = levels;
  sub.energies_mhz.resize(m);
  for (int c = 0; c < m; ++c) sub.energies_mhz(c) = eig.energies_mhz(levels[c]);
  sub.hamiltonian = sub.energies_mhz.cast<Complex>().asDiagonal();
  sub.mw_drive = basis.adjoint() *
                 drive_operator(sys, DriveChannel::Microwave, mw_direction) * basis;
  sub.rf_drive = basis.adjoint() *
                 drive_operator(sys, DriveChannel::RadioFrequency, rf_direction) * basis;
  sub.labels.reserve(m);
  for (int lv : levels) sub.labels.push_back(labels[lv]);
  return sub;
}

std::vector<int> storage_levels(const SpinSystem& sys, const FieldSpec& field,
                                double mw_frequency_mhz, bool include_fourth) {
  if (sys.nuclear_spin < 0.5) {
    throw InvalidArgument("storage_levels: needs a nuclear spin");
  }
  const EigenSystem eig = eigensystem(build_hamiltonian(sys, field));
  const std::vector<LevelLabel> labels = level_labels(sys, field.direction, eig);
  const double m_s_lower = labels.front().m_s;  // electron label of the ground level

  auto find_level = [&](bool upper_manifold, double m_i) {
    int best = -1;
    double best_weight = 0.0;
    for (std::size_t k = 0; k < labels.size(); ++k) {
      if (!labels[k].assignable) continue;
      const bool in_upper = std::abs(labels[k].m_s - m_s_lower) > 0.25;
      if (in_upper != upper_manifold) continue;
      if (std::abs(labels[k].m_i - m_i) < 0.25 && labels[k].weight > best_weight) {
        best = static_cast<int>(k);
        best_weight = labels[k].weight;
      }
    }
    if (best < 0) {
      throw NumericalError(
          "storage_levels: could not assign |m_S, m_I> labels at this field; "
          "levels are too strongly mixed");
    }
    return best;
  };

  // The pumped transition is the extremal-m_I ESR line closest to the
  // spectrometer frequency; the nuclear step moves one unit toward 0.
  const double top = sys.nuclear_spin;
  double best_mi = top;
  double best_err = std::numeric_limits<double>::infinity();
  for (double m_i : {top, -top}) {
    const int lo = find_level(false, m_i);
    const int up = find_level(true, m_i);
    const double err = std::abs(eig.energies_mhz(up) - eig.energies_mhz(lo) - mw_frequency_mhz);
    if (err < best_err) {
      best_err = err;
      best_mi = m_i;
    }
  }
  const double next_mi = best_mi > 0 ? best_mi - 1.0 : best_mi + 1.0;

  std::vector<int> out = {find_level(false, best_mi), find_level(true, best_mi),
                          find_level(true, next_mi)};
  if (include_fourth) out.push_back(find_level(false, next_mi));
  return out;
}

}  // namespace spinmem
