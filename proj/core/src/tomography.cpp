#include "spinmem/tomography.hpp"

#include <algorithm>
#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

#include "spinmem/constants.hpp"
#include "spinmem/errors.hpp"
#include "spinmem/rng.hpp"

namespace spinmem {

namespace {

const std::array<Eigen::Matrix2cd, 4>& pauli_basis() {
  static const std::array<Eigen::Matrix2cd, 4> basis = [] {
    std::array<Eigen::Matrix2cd, 4> b;
    b[0] = Eigen::Matrix2cd::Identity();
    b[1] << 0, 1, 1, 0;
    b[2] << 0, Complex(0, -1), Complex(0, 1), 0;
    b[3] << 1, 0, 0, -1;
    return b;
  }();
  return basis;
}

}  // namespace

PauliVector measure_pauli(const DensityOperator& rho, std::pair<int, int> readout) {
  const int d = rho.dim();
  if (readout.first < 0 || readout.second < 0 || readout.first >= d || readout.second >= d ||
      readout.first == readout.second) {
    throw InvalidArgument("measure_pauli: invalid readout pair");
  }
  PauliVector v;
  v.x = (pauli_x(d, readout) * rho.matrix()).trace().real();
  v.y = (pauli_y(d, readout) * rho.matrix()).trace().real();
  v.z = (pauli_z(d, readout) * rho.matrix()).trace().real();
  return v;
}

PauliVector measure_pauli_protocol(const DensityOperator& rho, std::pair<int, int> readout) {
  const int d = rho.dim();
  PauliVector direct = measure_pauli(rho, readout);

  // Echo quadratures give X and Y; Z is mapped onto X by a pi/2 about Y:
  // U Z U^dag = X, so reading X on the rotated state returns <Z>.
  const Matrix y_gen = pauli_y(d, readout);
  const Matrix u = (Complex(0, -constants::kPi / 4.0) * y_gen).exp();
  const Matrix rotated = u * rho.matrix() * u.adjoint();
  PauliVector v;
  v.x = direct.x;
  v.y = direct.y;
  v.z = (pauli_x(d, readout) * rotated).trace().real();
  return v;
}

BlochState state_from_pauli(const PauliVector& v) {
  PauliVector w = v;
  bool projected = false;
  const double n = v.norm();
  if (n > 1.0) {
    w.x /= n;
    w.y /= n;
    w.z /= n;
    projected = true;
  }
  return {DensityOperator::from_bloch(2, {0, 1}, w.x, w.y, w.z), projected};
}

ProcessMatrix chi_identity() {
  ProcessMatrix chi = ProcessMatrix::Zero();
  chi(0, 0) = 1.0;
  return chi;
}

ProcessMatrix chi_from_kraus(const std::vector<Eigen::Matrix2cd>& kraus) {
  const auto& basis = pauli_basis();
  ProcessMatrix chi = ProcessMatrix::Zero();
  for (const auto& k : kraus) {
    Eigen::Vector4cd a;
    for (int m = 0; m < 4; ++m) a(m) = 0.5 * (basis[m] * k).trace();
    chi += a * a.adjoint();
  }
  return chi;
}

Eigen::Matrix2cd apply_process(const ProcessMatrix& chi, const Eigen::Matrix2cd& rho) {
  const auto& basis = pauli_basis();
  Eigen::Matrix2cd out = Eigen::Matrix2cd::Zero();
  for (int m = 0; m < 4; ++m) {
    for (int n = 0; n < 4; ++n) {
      out += chi(m, n) * basis[m] * rho * basis[n].adjoint();
    }
  }
  return out;
}

std::vector<Eigen::Matrix2cd> qpt_input_states() {
  auto bloch = [](double x, double y, double z) {
    Eigen::Matrix2cd rho;
    rho << 0.5 * (1 + z), 0.5 * Complex(x, -y), 0.5 * Complex(x, y), 0.5 * (1 - z);
    return rho;
  };
  return {bloch(1, 0, 0),  bloch(-1, 0, 0), bloch(0, 1, 0), bloch(0, -1, 0),
          bloch(0, 0, 1),  bloch(0, 0, -1), bloch(0, 0, 0)};
}

ChiReconstruction reconstruct_chi(const std::vector<Eigen::Matrix2cd>& inputs,
                                  const std::vector<Eigen::Matrix2cd>& outputs,
                                  bool normalize_trace) {
  if (inputs.size() != outputs.size() || inputs.empty()) {
    throw InvalidArgument("reconstruct_chi: need matching non-empty input/output sets");
  }
  const auto& basis = pauli_basis();

  // Rank check: the input states must span the operator space.
  Eigen::MatrixXcd span(4, inputs.size());
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (int m = 0; m < 4; ++m) span(m, k) = 0.5 * (basis[m] * inputs[k]).trace();
  }
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(span);
  const double tol = 1e-9 * svd.singularValues()(0);
  if (svd.singularValues().size() < 4 || svd.singularValues().minCoeff() < tol) {
    // Name the missing Pauli directions.
    Eigen::JacobiSVD<Eigen::MatrixXcd> full(span, Eigen::ComputeFullU);
    std::string missing;
    const char* names[4] = {"1", "X", "Y", "Z"};
    for (int m = 0; m < 4; ++m) {
      const int rank = static_cast<int>(svd.singularValues().size());
      bool covered = false;
      for (int r = 0; r < rank; ++r) {
        if (svd.singularValues()(r) < tol) continue;
        if (std::norm(full.matrixU()(m, r)) > 1e-6) covered = true;
      }
      if (!covered) missing += std::string(missing.empty() ? "" : ", ") + names[m];
    }
    throw InvalidArgument("reconstruct_chi: input states are rank-deficient; undetermined "
                          "directions: " + (missing.empty() ? "(mixed)" : missing));
  }

  // Linear system: vec(rho_out) = sum_mn chi_mn vec(A_m rho_in A_n^dagger).
  const int rows = static_cast<int>(inputs.size()) * 4;
  Eigen::MatrixXcd design(rows, 16);
  Eigen::VectorXcd target(rows);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (int m = 0; m < 4; ++m) {
      for (int n = 0; n < 4; ++n) {
        const Eigen::Matrix2cd op = basis[m] * inputs[k] * basis[n].adjoint();
        for (int e = 0; e < 4; ++e) {
          design(static_cast<int>(k) * 4 + e, m * 4 + n) = op(e % 2, e / 2);
        }
      }
    }
    for (int e = 0; e < 4; ++e) {
      target(static_cast<int>(k) * 4 + e) = outputs[k](e % 2, e / 2);
    }
  }
  const Eigen::VectorXcd sol = design.colPivHouseholderQr().solve(target);
  ChiReconstruction rec;
  for (int m = 0; m < 4; ++m) {
    for (int n = 0; n < 4; ++n) rec.chi(m, n) = sol(m * 4 + n);
  }
  rec.chi = 0.5 * (rec.chi + rec.chi.adjoint().eval());
  if (normalize_trace) {
    const double tr = rec.chi.trace().real();
    if (std::abs(tr) > 1e-12) rec.chi /= tr;
  }
  rec.residual = std::sqrt((design * sol - target).squaredNorm() / rows);
  return rec;
}

CptpProjection project_cptp(const ProcessMatrix& chi) {
  if (chi.norm() < 1e-300) throw InvalidArgument("project_cptp: zero matrix");
  if ((chi - chi.adjoint()).norm() > 1e-9 * chi.norm()) {
    throw InvalidArgument("project_cptp: input must be Hermitian");
  }
  Eigen::SelfAdjointEigenSolver<ProcessMatrix> solver(chi);
  Eigen::Vector4d ev = solver.eigenvalues().cwiseMax(0.0);
  const double tr = ev.sum();
  if (tr <= 0) throw InvalidArgument("project_cptp: no positive part to keep");
  ev /= tr;
  CptpProjection out;
  out.chi = solver.eigenvectors() * ev.asDiagonal() * solver.eigenvectors().adjoint();
  out.distance = (out.chi - chi).norm();
  out.changed = out.distance > 1e-12 * std::max(1.0, chi.norm());
  return out;
}

double state_fidelity(const Eigen::Matrix2cd& rho1, const Eigen::Matrix2cd& rho2) {
  for (const auto* r : {&rho1, &rho2}) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> s(*r, Eigen::EigenvaluesOnly);
    if (s.eigenvalues().minCoeff() < -1e-8) {
      throw InvalidArgument("state_fidelity: input is not positive semidefinite");
    }
  }
  // Qubit closed form of Tr(sqrt(sqrt(r2) r1 sqrt(r2)))^2; exact for pure
  // inputs where the eigendecomposition route loses ~1e-9.
  const double overlap = (rho1 * rho2).trace().real();
  const double det1 = std::max(0.0, rho1.determinant().real());
  const double det2 = std::max(0.0, rho2.determinant().real());
  return std::clamp(overlap + 2.0 * std::sqrt(det1 * det2), 0.0, 1.0);
}

double state_fidelity(const DensityOperator& rho1, const DensityOperator& rho2) {
  if (rho1.dim() != 2 || rho2.dim() != 2) {
    throw InvalidArgument("state_fidelity: qubit states expected");
  }
  return state_fidelity(Eigen::Matrix2cd(rho1.matrix()), Eigen::Matrix2cd(rho2.matrix()));
}

double process_fidelity(const ProcessMatrix& chi, const ProcessMatrix& chi_ideal) {
  const Complex f = (chi * chi_ideal).trace();
  return std::clamp(f.real(), 0.0, 1.0);
}

double average_state_fidelity(const ProcessMatrix& chi) {
  Eigen::SelfAdjointEigenSolver<ProcessMatrix> solver(chi);
  if (solver.eigenvalues().minCoeff() < -1e-8) {
    throw InvalidArgument("average_state_fidelity: chi is not CP (project it first)");
  }
  if (std::abs(chi.trace().real() - 1.0) > 1e-6) {
    throw InvalidArgument("average_state_fidelity: chi must be trace-normalized");
  }
  const auto inputs = qpt_input_states();
  double acc = 0.0;
  for (int k = 0; k < 6; ++k) {  // the six cardinal pure states
    const Eigen::Matrix2cd out = apply_process(chi, inputs[k]);
    acc += state_fidelity(inputs[k], out);
  }
  return acc / 6.0;
}

MemoryTomographyResult run_memory_tomography(const StorageTimings& timings,
                                             const RelaxationChannels& channels,
                                             const EnsembleSpec& ensemble,
                                             const EngineOptions& options) {
  const WorkingSpace space = WorkingSpace::three_level();
  const Sequence storage = build_storage_sequence(timings);
  const Sequence reference = build_reference_echo(timings);

  auto embed = [](const Eigen::Matrix2cd& q) {
    Matrix rho = Matrix::Zero(3, 3);
    rho.topLeftCorner(2, 2) = q;
    return DensityOperator(std::move(rho));
  };

  // Bloch map of the ideal sequence; outputs are read back in this frame
  // (experimentally, the echo phase convention is set the same way by the
  // reference experiment).
  RelaxationChannels no_relax;
  EnsembleSpec single;
  single.members = 1;
  EngineOptions ideal = options;
  ideal.ideal_pulses = true;
  ideal.threads = 1;
  Eigen::Matrix3d ideal_map;
  const double axes[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  for (int c = 0; c < 3; ++c) {
    const auto in = DensityOperator::from_bloch(3, {0, 1}, axes[c][0], axes[c][1], axes[c][2]);
    const auto res = run_sequence(space, in, storage, no_relax, single, ideal);
    ideal_map(0, c) = res.echo.x;
    ideal_map(1, c) = res.echo.y;
    ideal_map(2, c) = res.echo.z;
  }
  const Eigen::Matrix3d frame = ideal_map.inverse();

  MemoryTomographyResult out;
  out.inputs = qpt_input_states();

  // Reference: a plain two-pulse echo of matching electron-coherence
  // duration, +X input.
  const auto ref_res = run_sequence(space, embed(out.inputs[0]), reference, channels,
                                    ensemble, options);
  out.reference_amplitude = ref_res.echo.x;
  if (!(std::abs(out.reference_amplitude) > 1e-6)) {
    throw NumericalError("run_memory_tomography: reference echo vanished");
  }

  double direct_acc = 0.0;
  for (std::size_t k = 0; k < out.inputs.size(); ++k) {
    const auto res = run_sequence(space, embed(out.inputs[k]), storage, channels, ensemble,
                                  options);
    const Eigen::Vector3d raw(res.echo.x, res.echo.y, res.echo.z);
    const Eigen::Vector3d v = frame * raw / out.reference_amplitude;
    Eigen::Matrix2cd rho_out;
    rho_out << 0.5 * (1 + v(2)), 0.5 * Complex(v(0), -v(1)),
               0.5 * Complex(v(0), v(1)), 0.5 * (1 - v(2));
    out.outputs.push_back(rho_out);
    const BlochState state = state_from_pauli({v(0), v(1), v(2)});
    out.output_projected.push_back(state.projected);
    if (k < 6) {
      direct_acc += state_fidelity(out.inputs[k],
                                   Eigen::Matrix2cd(state.rho.matrix()));
    }
  }
  out.avg_state_fidelity_direct = direct_acc / 6.0;

  out.reconstruction = reconstruct_chi(out.inputs, out.outputs);
  out.physical = project_cptp(out.reconstruction.chi);
  out.process_fid = process_fidelity(out.reconstruction.chi, chi_identity());
  out.avg_state_fidelity_formula = (2.0 * out.process_fid + 1.0) / 3.0;
  return out;
}

std::vector<Eigen::Matrix2cd> random_cptp_kraus(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Eigen::Matrix2cd> kraus(4);
  Eigen::Matrix2cd total = Eigen::Matrix2cd::Zero();
  for (auto& k : kraus) {
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 2; ++c) k(r, c) = Complex(rng.normal(), rng.normal());
    }
    total += k.adjoint() * k;
  }
  // Normalize: K_i -> K_i total^{-1/2} gives sum K^dag K = 1.
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> solver(total);
  const Eigen::Matrix2cd inv_sqrt =
      solver.eigenvectors() *
      solver.eigenvalues().cwiseMax(1e-12).cwiseInverse().cwiseSqrt().asDiagonal() *
      solver.eigenvectors().adjoint();
  for (auto& k : kraus) k = k * inv_sqrt;
  return kraus;
}

}  // namespace spinmem
