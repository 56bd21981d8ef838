#include "spinmem/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include "spinmem/constants.hpp"
#include "spinmem/errors.hpp"
#include "spinmem/rng.hpp"

namespace spinmem {

namespace {

constexpr double kTwoPi = 2.0 * constants::kPi;

double expect_real(const Matrix& rho, const Matrix& op) {
  return (op * rho).trace().real();
}

}  // namespace

// ---- DensityOperator ----------------------------------------------------

DensityOperator::DensityOperator(Matrix rho) : rho_(std::move(rho)) {
  if (rho_.rows() != rho_.cols() || rho_.rows() < 2 || rho_.rows() > 16) {
    throw InvalidArgument("DensityOperator: dimension must be 2..16");
  }
  const double scale = std::max(rho_.norm(), 1e-30);
  if ((rho_ - rho_.adjoint()).norm() > 1e-10 * scale) {
    throw InvalidArgument("DensityOperator: not Hermitian within 1e-10");
  }
  if (std::abs(rho_.trace().real() - 1.0) > 1e-9 || std::abs(rho_.trace().imag()) > 1e-9) {
    throw InvalidArgument("DensityOperator: trace must be 1 within 1e-9");
  }
  rho_ = 0.5 * (rho_ + rho_.adjoint().eval());
  if (min_eigenvalue() < -1e-9) {
    throw InvalidArgument("DensityOperator: negative eigenvalue beyond -1e-9");
  }
}

DensityOperator DensityOperator::pure(int dim, int level) {
  if (level < 0 || level >= dim) throw InvalidArgument("DensityOperator::pure: bad level");
  Matrix rho = Matrix::Zero(dim, dim);
  rho(level, level) = 1.0;
  return DensityOperator(std::move(rho));
}

DensityOperator DensityOperator::maximally_mixed(int dim) {
  return DensityOperator(Matrix::Identity(dim, dim) / static_cast<double>(dim));
}

DensityOperator DensityOperator::from_bloch(int dim, std::pair<int, int> pair, double x,
                                            double y, double z) {
  const double norm = std::sqrt(x * x + y * y + z * z);
  if (norm > 1.0 + 1e-9) {
    throw InvalidArgument("DensityOperator::from_bloch: |v| > 1");
  }
  Matrix rho = Matrix::Zero(dim, dim);
  const auto [a, b] = pair;
  rho(a, a) = 0.5 * (1.0 + z);
  rho(b, b) = 0.5 * (1.0 - z);
  rho(a, b) = 0.5 * Complex(x, -y);
  rho(b, a) = 0.5 * Complex(x, y);
  return DensityOperator(std::move(rho));
}

double DensityOperator::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(rho_, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

Matrix pauli_x(int dim, std::pair<int, int> pair) {
  Matrix m = Matrix::Zero(dim, dim);
  m(pair.first, pair.second) = 1.0;
  m(pair.second, pair.first) = 1.0;
  return m;
}

Matrix pauli_y(int dim, std::pair<int, int> pair) {
  Matrix m = Matrix::Zero(dim, dim);
  m(pair.first, pair.second) = Complex(0, -1);
  m(pair.second, pair.first) = Complex(0, 1);
  return m;
}

Matrix pauli_z(int dim, std::pair<int, int> pair) {
  Matrix m = Matrix::Zero(dim, dim);
  m(pair.first, pair.first) = 1.0;
  m(pair.second, pair.second) = -1.0;
  return m;
}

// ---- Pulses and sequences ------------------------------------------------

double Pulse::duration_us() const {
  return nominal_angle_rad / (kTwoPi * rabi_frequency_mhz);
}

void Pulse::validate(int dim) const {
  if (target.first == target.second || target.first < 0 || target.second < 0 ||
      target.first >= dim || target.second >= dim) {
    throw InvalidArgument("Pulse: target pair must be two distinct subspace levels");
  }
  if (!(rabi_frequency_mhz > 0)) throw InvalidArgument("Pulse: Rabi frequency must be > 0");
  if (!(nominal_angle_rad > 0)) throw InvalidArgument("Pulse: angle must be > 0");
}

double Sequence::total_duration_us() const {
  double t = 0.0;
  for (const auto& item : items) {
    if (const Delay* d = std::get_if<Delay>(&item)) t += d->duration_us;
  }
  return t;
}

void Sequence::validate(int dim) const {
  for (const auto& item : items) {
    if (const Pulse* p = std::get_if<Pulse>(&item)) {
      p->validate(dim);
    } else {
      const Delay& d = std::get<Delay>(item);
      if (d.duration_us < 0) throw InvalidArgument("Sequence: negative delay");
    }
  }
  if (readout.first == readout.second || readout.first < 0 || readout.second < 0 ||
      readout.first >= dim || readout.second >= dim) {
    throw InvalidArgument("Sequence: invalid readout pair");
  }
  if (echo_time_us < 0 || echo_time_us > total_duration_us() + 1e-12) {
    throw InvalidArgument("Sequence: echo time outside the timeline");
  }
}

// ---- Ensembles -----------------------------------------------------------

void EnsembleSpec::validate() const {
  if (members < 1) throw InvalidArgument("EnsembleSpec: members must be >= 1");
  if (electron_detuning_fwhm_mhz < 0 || rf_detuning_fwhm_mhz < 0 || mw_amplitude_sigma < 0 ||
      rf_amplitude_sigma < 0 || rf_amplitude_bound < 0) {
    throw InvalidArgument("EnsembleSpec: spreads must be >= 0");
  }
}

EnsembleMember draw_member(const EnsembleSpec& spec, std::uint64_t index) {
  spec.validate();
  constexpr double kFwhmToSigma = 1.0 / 2.3548200450309493;
  Rng rng = Rng::for_index(spec.seed, index);
  EnsembleMember m;
  m.electron_detuning_mhz = spec.electron_detuning_fwhm_mhz * kFwhmToSigma * rng.normal();
  m.rf_detuning_mhz = spec.rf_detuning_fwhm_mhz * kFwhmToSigma * rng.normal();
  m.mw_amplitude_error = spec.mw_amplitude_sigma * rng.normal();
  m.rf_amplitude_error =
      rng.truncated_normal(spec.rf_amplitude_sigma, spec.rf_amplitude_bound);
  return m;
}

// ---- Relaxation channels ---------------------------------------------------

void RelaxationChannels::validate() const {
  if (!(t1e_s > 0) || !(t2e_s > 0) || !(t2n_s > 0)) {
    throw InvalidArgument("RelaxationChannels: times must be > 0");
  }
  if (std::isfinite(t2e_s) && t2e_s > 2.0 * t1e_s + 1e-15) {
    throw InvalidArgument("RelaxationChannels: T2e must be <= 2 T1e");
  }
}

double RelaxationChannels::electron_flip_rate_per_us() const {
  return std::isfinite(t1e_s) ? 1e-6 / (2.0 * t1e_s) : 0.0;
}

double RelaxationChannels::electron_dephasing_rate_per_us() const {
  const double total = std::isfinite(t2e_s) ? 1e-6 / t2e_s : 0.0;
  return std::max(0.0, total - electron_flip_rate_per_us());
}

double RelaxationChannels::nuclear_dephasing_rate_per_us() const {
  // The T1-induced part is subtracted where the dissipators are assembled
  // (it depends on the working space); this is the bare 1/T2n.
  return std::isfinite(t2n_s) ? 1e-6 / t2n_s : 0.0;
}

// ---- Working space ---------------------------------------------------------

WorkingSpace WorkingSpace::three_level() {
  WorkingSpace w;
  w.dim = 3;
  w.electron_weight = {0.0, 1.0, 1.0};
  w.nuclear_weight = {0.0, 0.0, 1.0};
  return w;
}

WorkingSpace WorkingSpace::four_level() {
  WorkingSpace w;
  w.dim = 4;
  w.electron_weight = {0.0, 1.0, 1.0, 0.0};
  w.nuclear_weight = {0.0, 0.0, 1.0, 1.0};
  return w;
}

WorkingSpace WorkingSpace::qubit() {
  WorkingSpace w;
  w.dim = 2;
  w.electron_weight = {0.0, 1.0};
  w.nuclear_weight = {0.0, 0.0};
  return w;
}

Eigen::VectorXd WorkingSpace::frame_detunings_mhz(const EnsembleMember& member) const {
  Eigen::VectorXd d(dim);
  for (int k = 0; k < dim; ++k) {
    d(k) = electron_weight[k] * member.electron_detuning_mhz +
           nuclear_weight[k] * member.rf_detuning_mhz;
  }
  return d;
}

// ---- Pulse unitaries -------------------------------------------------------

Matrix unitary_for_pulse(const WorkingSpace& space, const Pulse& pulse,
                         const EnsembleMember& member, bool ideal_pulse) {
  pulse.validate(space.dim);
  const auto [a, b] = pulse.target;

  const double amp_err = pulse.channel == Channel::Microwave ? member.mw_amplitude_error
                                                             : member.rf_amplitude_error;
  const double theta = pulse.nominal_angle_rad * (1.0 + amp_err);

  // Detuning of the ion's transition relative to the drive carrier.
  double delta_mhz = 0.0;
  if (!ideal_pulse) {
    const Eigen::VectorXd frame = space.frame_detunings_mhz(member);
    delta_mhz = (frame(b) - frame(a)) - pulse.carrier_offset_mhz;
  }

  // Generator over the pulse duration: w . sigma/|..| su(2) rotation with
  // w = (theta cos(phi), theta sin(phi), -2 pi delta t).
  const double t_us = pulse.duration_us();
  const double wx = theta * std::cos(pulse.phase_rad);
  const double wy = theta * std::sin(pulse.phase_rad);
  const double wz = -kTwoPi * delta_mhz * t_us;
  const double w = std::sqrt(wx * wx + wy * wy + wz * wz);

  Matrix u = Matrix::Identity(space.dim, space.dim);
  if (w < 1e-300) return u;
  const double c = std::cos(0.5 * w);
  const double s = std::sin(0.5 * w);
  const Complex nz(wz / w, 0.0);
  const Complex nxy(wx / w, wy / w);  // n_x + i n_y
  // exp(-i w/2 n.sigma) on the target pair, Z = +1 on `a`.
  u(a, a) = Complex(c, 0) - Complex(0, s) * nz;
  u(b, b) = Complex(c, 0) + Complex(0, s) * nz;
  u(a, b) = -Complex(0, s) * std::conj(nxy);
  u(b, a) = -Complex(0, s) * nxy;
  return u;
}

// ---- Lindblad evolution ----------------------------------------------------

namespace {

struct Dissipators {
  std::vector<Matrix> ops;
  bool any = false;
};

// Collapse operators for the space: electron flips on every ESR pair,
// manifold electron dephasing, nuclear dephasing compensated for the
// T1-induced decay of the canonical nuclear coherence.
Dissipators build_dissipators(const WorkingSpace& space, const RelaxationChannels& channels) {
  channels.validate();
  Dissipators out;
  const int d = space.dim;

  const double flip = channels.electron_flip_rate_per_us();
  std::vector<std::pair<int, int>> esr_pairs;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      if (i == j) continue;
      if (std::abs(space.electron_weight[i] - space.electron_weight[j]) > 0.5 &&
          std::abs(space.nuclear_weight[i] - space.nuclear_weight[j]) < 0.5) {
        if (i < j) esr_pairs.emplace_back(i, j);
      }
    }
  }
  if (flip > 0) {
    for (auto [i, j] : esr_pairs) {
      Matrix up = Matrix::Zero(d, d), down = Matrix::Zero(d, d);
      up(j, i) = std::sqrt(flip);
      down(i, j) = std::sqrt(flip);
      out.ops.push_back(up);
      out.ops.push_back(down);
    }
  }

  const double gphi_e = channels.electron_dephasing_rate_per_us();
  if (gphi_e > 0) {
    Matrix z = Matrix::Zero(d, d);
    for (int k = 0; k < d; ++k) z(k, k) = 1.0 - 2.0 * space.electron_weight[k];
    out.ops.push_back(std::sqrt(gphi_e / 2.0) * z);
  }

  // Nuclear pure dephasing: subtract what the flips already impose on the
  // canonical nuclear pair (same electron manifold, one nuclear step).
  double t1_induced = 0.0;
  std::pair<int, int> nuc_pair{-1, -1};
  for (int i = 0; i < d && nuc_pair.first < 0; ++i) {
    for (int j = i + 1; j < d; ++j) {
      if (std::abs(space.electron_weight[i] - space.electron_weight[j]) < 0.5 &&
          std::abs(space.nuclear_weight[i] - space.nuclear_weight[j]) > 0.5) {
        nuc_pair = {i, j};
        break;
      }
    }
  }
  if (nuc_pair.first >= 0 && flip > 0) {
    for (auto [i, j] : esr_pairs) {
      for (int end : {nuc_pair.first, nuc_pair.second}) {
        if (end == i || end == j) t1_induced += 0.5 * flip;
      }
    }
  }
  const double gphi_n_total = channels.nuclear_dephasing_rate_per_us();
  if (gphi_n_total > 0 && nuc_pair.first >= 0) {
    const double gphi_n = std::max(0.0, gphi_n_total - t1_induced);
    if (gphi_n > 0) {
      Matrix z = Matrix::Zero(d, d);
      for (int k = 0; k < d; ++k) z(k, k) = 1.0 - 2.0 * space.nuclear_weight[k];
      out.ops.push_back(std::sqrt(gphi_n / 2.0) * z);
    }
  }
  out.any = !out.ops.empty();
  return out;
}

Matrix superoperator(const Matrix& h_mhz, const std::vector<Matrix>& collapse) {
  const int d = static_cast<int>(h_mhz.rows());
  const Matrix id = Matrix::Identity(d, d);
  Matrix sup = Matrix::Zero(d * d, d * d);
  sup -= Complex(0, kTwoPi) *
         (Eigen::kroneckerProduct(id, h_mhz) - Eigen::kroneckerProduct(h_mhz.transpose(), id));
  for (const Matrix& l : collapse) {
    const Matrix ldl = l.adjoint() * l;
    sup += Eigen::kroneckerProduct(l.conjugate(), l);
    sup -= 0.5 * (Eigen::kroneckerProduct(id, ldl) +
                  Eigen::kroneckerProduct(ldl.transpose(), id));
  }
  return sup;
}

Matrix evolve_matrix(const Matrix& rho, const Matrix& h_mhz, const Dissipators& diss,
                     double duration_us) {
  if (duration_us == 0.0) return rho;
  const int d = static_cast<int>(rho.rows());

  if (!diss.any) {
    // Closed evolution; the delay Hamiltonians here are diagonal, but keep
    // the general path.
    const Matrix u = (Complex(0, -kTwoPi * duration_us) * h_mhz).exp();
    return u * rho * u.adjoint();
  }

  // Superoperator exponential of the item interval. The generator is
  // constant within an item, so the fixed-step product over steps
  // <= min(T2e, T2n)/100 collapses to one exponential by the semigroup
  // property; positivity diagnostics run on the item result.
  const Matrix propagator = (superoperator(h_mhz, diss.ops) * duration_us).exp();
  Eigen::VectorXcd vec = Eigen::Map<const Eigen::VectorXcd>(rho.data(), d * d);
  vec = propagator * vec;
  Matrix out = Eigen::Map<const Matrix>(vec.data(), d, d);
  return 0.5 * (out + out.adjoint().eval());
}

}  // namespace

DensityOperator evolve_lindblad(const DensityOperator& rho, const Matrix& hamiltonian_mhz,
                                const WorkingSpace& space, const RelaxationChannels& channels,
                                double duration_us, double step_fraction) {
  if (duration_us < 0) throw InvalidArgument("evolve_lindblad: negative duration");
  (void)step_fraction;  // the constant-generator steps collapse, see evolve_matrix
  const Dissipators diss = build_dissipators(space, channels);
  Matrix out =
      evolve_matrix(rho.matrix(), hamiltonian_mhz, diss, duration_us);
  const double trace_err = std::abs(out.trace().real() - 1.0);
  if (trace_err > 1e-9) {
    throw NumericalError("evolve_lindblad: trace drifted by " + std::to_string(trace_err));
  }
  try {
    return DensityOperator(std::move(out));
  } catch (const InvalidArgument& e) {
    throw NumericalError(std::string("evolve_lindblad: integrator step produced an "
                                     "unphysical state: ") +
                         e.what());
  }
}

// ---- Sequence engine -------------------------------------------------------

namespace {

Eigen::VectorXd frame_detunings(const WorkingSpace& space, const EnsembleMember& member) {
  return space.frame_detunings_mhz(member);
}

struct MemberOutcome {
  std::vector<TimelinePoint> timeline;
  TimelinePoint echo;
  Matrix final_rho;
  Matrix echo_rho;
};

MemberOutcome run_member(const WorkingSpace& space, const Matrix& rho0, const Sequence& seq,
                         const Dissipators& diss, const EnsembleMember& member,
                         const EngineOptions& options) {
  const int d = space.dim;
  const Matrix x_op = pauli_x(d, seq.readout);
  const Matrix y_op = pauli_y(d, seq.readout);
  const Matrix z_op = pauli_z(d, seq.readout);

  Matrix h_frame = Matrix::Zero(d, d);
  const Eigen::VectorXd det = frame_detunings(space, member);
  for (int k = 0; k < d; ++k) h_frame(k, k) = det(k);

  MemberOutcome out;
  out.final_rho = rho0;
  out.echo_rho = rho0;
  Matrix rho = rho0;
  double clock = 0.0;
  bool echo_recorded = false;

  auto record = [&](double t) {
    out.timeline.push_back({t, expect_real(rho, x_op), expect_real(rho, y_op),
                            expect_real(rho, z_op)});
  };
  auto record_echo = [&]() {
    out.echo = {clock, expect_real(rho, x_op), expect_real(rho, y_op), expect_real(rho, z_op)};
    out.echo_rho = rho;
    echo_recorded = true;
  };

  record(0.0);
  if (seq.echo_time_us == 0.0) record_echo();

  for (const auto& item : seq.items) {
    if (const Pulse* pulse = std::get_if<Pulse>(&item)) {
      const Matrix u = unitary_for_pulse(space, *pulse, member, options.ideal_pulses);
      rho = u * rho * u.adjoint();
      // rf pulses are long enough to expose the state to relaxation; the
      // frame clock does not advance (hard-rotation bookkeeping).
      if (pulse->channel == Channel::RadioFrequency && options.relaxation_during_rf &&
          diss.any) {
        rho = evolve_matrix(rho, Matrix::Zero(d, d), diss, pulse->duration_us());
      }
    } else {
      const double dur = std::get<Delay>(item).duration_us;
      const bool echo_inside = !echo_recorded && seq.echo_time_us > clock &&
                               seq.echo_time_us <= clock + dur + 1e-12;
      if (echo_inside) {
        const double first = std::min(dur, seq.echo_time_us - clock);
        rho = evolve_matrix(rho, h_frame, diss, first);
        clock += first;
        record_echo();
        rho = evolve_matrix(rho, h_frame, diss, dur - first);
        clock += dur - first;
      } else {
        rho = evolve_matrix(rho, h_frame, diss, dur);
        clock += dur;
      }
    }
    record(clock);
  }
  if (!echo_recorded) record_echo();
  out.final_rho = rho;
  return out;
}

}  // namespace

SequenceResult run_sequence(const WorkingSpace& space, const DensityOperator& initial,
                            const Sequence& seq, const RelaxationChannels& channels,
                            const EnsembleSpec& ensemble, const EngineOptions& options) {
  seq.validate(space.dim);
  ensemble.validate();
  if (initial.dim() != space.dim) {
    throw InvalidArgument("run_sequence: initial state dimension mismatch");
  }
  const Dissipators diss = build_dissipators(space, channels);
  const int n = ensemble.members;

  std::vector<MemberOutcome> outcomes(n);
  auto run_range = [&](int begin, int end) {
    for (int m = begin; m < end; ++m) {
      const EnsembleMember member = draw_member(ensemble, static_cast<std::uint64_t>(m));
      outcomes[m] = run_member(space, initial.matrix(), seq, diss, member, options);
    }
  };
  const int n_threads = std::clamp(options.threads, 1, n);
  if (n_threads == 1) {
    run_range(0, n);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (n + n_threads - 1) / n_threads;
    for (int w = 0; w < n_threads; ++w) {
      const int begin = w * chunk;
      const int end = std::min(n, begin + chunk);
      if (begin < end) pool.emplace_back(run_range, begin, end);
    }
    for (auto& th : pool) th.join();
  }

  // Member-index-order reduction.
  SequenceResult result{.timeline = {},
                        .echo = {},
                        .final_state = DensityOperator::maximally_mixed(space.dim),
                        .echo_state = DensityOperator::maximally_mixed(space.dim)};
  const std::size_t n_points = outcomes.front().timeline.size();
  result.timeline.assign(n_points, TimelinePoint{});
  Matrix rho_final = Matrix::Zero(space.dim, space.dim);
  Matrix rho_echo = Matrix::Zero(space.dim, space.dim);
  for (int m = 0; m < n; ++m) {
    const MemberOutcome& o = outcomes[m];
    for (std::size_t k = 0; k < n_points; ++k) {
      result.timeline[k].time_us = o.timeline[k].time_us;
      result.timeline[k].x += o.timeline[k].x;
      result.timeline[k].y += o.timeline[k].y;
      result.timeline[k].z += o.timeline[k].z;
    }
    result.echo.time_us = o.echo.time_us;
    result.echo.x += o.echo.x;
    result.echo.y += o.echo.y;
    result.echo.z += o.echo.z;
    rho_final += o.final_rho;
    rho_echo += o.echo_rho;
  }
  const double inv = 1.0 / n;
  for (auto& p : result.timeline) {
    p.x *= inv;
    p.y *= inv;
    p.z *= inv;
  }
  result.echo.x *= inv;
  result.echo.y *= inv;
  result.echo.z *= inv;
  result.final_state = DensityOperator(rho_final * inv);
  result.echo_state = DensityOperator(rho_echo * inv);
  return result;
}

// ---- Presets ----------------------------------------------------------------

void StorageTimings::validate() const {
  if (!(tau_e_us > 0) || !(tau_n_us >= 0) || !(d1_us > 0) || !(d4_us >= 0)) {
    throw InvalidArgument("StorageTimings: delays must be positive");
  }
  if (!(d1_us < tau_e_us)) {
    throw InvalidArgument("StorageTimings: the transfer rf pulse must come before the "
                          "electron coherence refocuses (d1 < tau_e)");
  }
  if (!(mw_rabi_mhz > 0) || !(rf_rabi_mhz > 0)) {
    throw InvalidArgument("StorageTimings: Rabi frequencies must be > 0");
  }
}

namespace {

Pulse mw_pulse(double angle, double phase, double rabi) {
  return Pulse{Channel::Microwave, {0, 1}, angle, phase, rabi, 0.0};
}

Pulse rf_pulse(double angle, double phase, double rabi) {
  return Pulse{Channel::RadioFrequency, {1, 2}, angle, phase, rabi, 0.0};
}

}  // namespace

Sequence build_storage_sequence(const StorageTimings& t, bool include_storage_rf_refocus) {
  t.validate();
  const double pi = constants::kPi;
  Sequence seq;
  seq.readout = {0, 1};
  auto& it = seq.items;
  it.emplace_back(Delay{t.tau_e_us});
  it.emplace_back(mw_pulse(pi, 0.0, t.mw_rabi_mhz));
  it.emplace_back(Delay{t.d1_us});
  it.emplace_back(rf_pulse(pi, 0.0, t.rf_rabi_mhz));
  it.emplace_back(Delay{t.tau_e_us - t.d1_us});
  it.emplace_back(mw_pulse(pi, 0.0, t.mw_rabi_mhz));
  if (include_storage_rf_refocus) {
    it.emplace_back(Delay{t.tau_n_us});
    it.emplace_back(rf_pulse(pi, 0.0, t.rf_rabi_mhz));
    it.emplace_back(Delay{t.tau_n_us});
  } else {
    it.emplace_back(Delay{2.0 * t.tau_n_us});
  }
  it.emplace_back(mw_pulse(pi, 0.0, t.mw_rabi_mhz));
  it.emplace_back(Delay{t.tau_e_us - t.d1_us});
  it.emplace_back(rf_pulse(pi, 0.0, t.rf_rabi_mhz));
  it.emplace_back(Delay{t.d4_us});
  it.emplace_back(mw_pulse(pi, 0.0, t.mw_rabi_mhz));
  it.emplace_back(Delay{t.tau_e_us - t.d1_us + t.d4_us});
  seq.echo_time_us = seq.total_duration_us();
  return seq;
}

Sequence build_reference_echo(const StorageTimings& t) {
  t.validate();
  // Electron-coherence residence of the storage sequence outside the rf
  // windows: 2 tau_e + 2 (tau_e - d1) + 2 d4.
  const double tau_ref = t.tau_e_us + (t.tau_e_us - t.d1_us) + t.d4_us;
  Sequence seq;
  seq.readout = {0, 1};
  seq.items.emplace_back(Delay{tau_ref});
  seq.items.emplace_back(mw_pulse(constants::kPi, 0.0, t.mw_rabi_mhz));
  seq.items.emplace_back(Delay{tau_ref});
  seq.echo_time_us = 2.0 * tau_ref;
  return seq;
}

Sequence build_hahn_echo(double tau_us, double mw_rabi_mhz) {
  if (!(tau_us > 0)) throw InvalidArgument("build_hahn_echo: tau must be > 0");
  Sequence seq;
  seq.readout = {0, 1};
  seq.items.emplace_back(mw_pulse(constants::kPi / 2.0, constants::kPi / 2.0, mw_rabi_mhz));
  seq.items.emplace_back(Delay{tau_us});
  seq.items.emplace_back(mw_pulse(constants::kPi, 0.0, mw_rabi_mhz));
  seq.items.emplace_back(Delay{tau_us});
  seq.echo_time_us = 2.0 * tau_us;
  return seq;
}

RabiTrace preset_rabi(const WorkingSpace& space, Channel channel, std::pair<int, int> target,
                      double rabi_mhz, double max_duration_us, int samples,
                      const EnsembleSpec& ensemble, const EngineOptions& options) {
  if (samples < 2) throw InvalidArgument("preset_rabi: need >= 2 samples");
  ensemble.validate();

  RabiTrace trace;
  trace.duration_us.resize(samples);
  trace.z.assign(samples, 0.0);
  const Matrix z_op = pauli_z(space.dim, target);
  const Matrix rho0 = DensityOperator::pure(space.dim, target.first).matrix();

  for (int m = 0; m < ensemble.members; ++m) {
    const EnsembleMember member = draw_member(ensemble, static_cast<std::uint64_t>(m));
    for (int k = 0; k < samples; ++k) {
      const double t_us = max_duration_us * k / (samples - 1);
      trace.duration_us[k] = t_us;
      if (t_us == 0.0) {
        trace.z[k] += expect_real(rho0, z_op);
        continue;
      }
      Pulse p;
      p.channel = channel;
      p.target = target;
      p.rabi_frequency_mhz = rabi_mhz;
      p.nominal_angle_rad = kTwoPi * rabi_mhz * t_us;
      const Matrix u = unitary_for_pulse(space, p, member, options.ideal_pulses);
      trace.z[k] += expect_real(u * rho0 * u.adjoint(), z_op);
    }
  }
  for (double& v : trace.z) v /= ensemble.members;
  return trace;
}

std::vector<StorageSweepPoint> preset_storage_sweep(
    const WorkingSpace& space, const DensityOperator& input, StorageTimings timings,
    const std::vector<double>& storage_times_us, const RelaxationChannels& channels,
    const EnsembleSpec& ensemble, const EngineOptions& options) {
  std::vector<StorageSweepPoint> out;
  out.reserve(storage_times_us.size());
  for (double t2n : storage_times_us) {
    timings.tau_n_us = 0.5 * t2n;
    const Sequence seq = build_storage_sequence(timings);
    const SequenceResult res = run_sequence(space, input, seq, channels, ensemble, options);
    StorageSweepPoint p;
    p.storage_time_us = t2n;
    p.echo_x = res.echo.x;
    p.echo_y = res.echo.y;
    p.amplitude = std::hypot(res.echo.x, res.echo.y);
    out.push_back(p);
  }
  return out;
}

DaviesTrace preset_davies_endor(const Subspace& subspace, const std::vector<double>& rf_grid_mhz,
                                double rf_rabi_mhz, const RelaxationChannels& channels,
                                const EnsembleSpec& ensemble, double tau_us,
                                const EngineOptions& options) {
  if (rf_grid_mhz.size() < 3) throw InvalidArgument("preset_davies_endor: grid too small");
  const int d = subspace.dim();
  if (d != 3 && d != 4) {
    throw InvalidArgument("preset_davies_endor: needs the 3- or 4-level working space");
  }
  const WorkingSpace space = d == 3 ? WorkingSpace::three_level() : WorkingSpace::four_level();

  // Nuclear transitions addressable by the rf coil in this subspace.
  std::vector<std::pair<int, int>> pairs = {{1, 2}};
  if (d == 4) pairs.push_back({0, 3});
  std::vector<double> gaps;
  for (auto [a, b] : pairs) {
    gaps.push_back(std::abs(subspace.energies_mhz(a) - subspace.energies_mhz(b)));
  }

  const double pi = constants::kPi;
  auto sequence_for = [&](std::optional<double> rf_freq) {
    Sequence seq;
    seq.readout = {0, 1};
    seq.items.emplace_back(mw_pulse(pi, 0.0, 15.625));  // selective inversion
    if (rf_freq) {
      int nearest = 0;
      for (std::size_t k = 1; k < gaps.size(); ++k) {
        if (std::abs(*rf_freq - gaps[k]) < std::abs(*rf_freq - gaps[nearest])) {
          nearest = static_cast<int>(k);
        }
      }
      Pulse rf;
      rf.channel = Channel::RadioFrequency;
      rf.target = pairs[nearest];
      rf.nominal_angle_rad = pi;
      rf.rabi_frequency_mhz = rf_rabi_mhz;
      rf.carrier_offset_mhz = *rf_freq - gaps[nearest];
      seq.items.emplace_back(rf);
    }
    // Two-pulse echo detection on the mw transition.
    seq.items.emplace_back(mw_pulse(pi / 2.0, pi / 2.0, 15.625));
    seq.items.emplace_back(Delay{tau_us});
    seq.items.emplace_back(mw_pulse(pi, 0.0, 15.625));
    seq.items.emplace_back(Delay{tau_us});
    seq.echo_time_us = 2.0 * tau_us;
    return seq;
  };

  // Electron-manifold-polarized mixed state: inversion and rf transfer both
  // move population differences, so nuclear lines of either manifold show up
  // (a pure initial level would leave the other manifold's line dark).
  const double eta = 0.5;
  Matrix rho_init = Matrix::Zero(d, d);
  double norm = 0.0;
  for (int k = 0; k < d; ++k) {
    const double p = 1.0 + (space.electron_weight[k] > 0.5 ? -eta : eta);
    rho_init(k, k) = p;
    norm += p;
  }
  rho_init /= norm;
  const DensityOperator rho0(std::move(rho_init));

  const double baseline =
      run_sequence(space, rho0, sequence_for(std::nullopt), channels, ensemble, options).echo.x;

  DaviesTrace trace;
  trace.rf_frequency_mhz = rf_grid_mhz;
  trace.contrast.reserve(rf_grid_mhz.size());
  for (double f : rf_grid_mhz) {
    const double echo =
        run_sequence(space, rho0, sequence_for(f), channels, ensemble, options).echo.x;
    trace.contrast.push_back(baseline - echo);
  }
  double peak_pos = 0.0, peak_neg = 0.0;
  for (double c : trace.contrast) {
    peak_pos = std::max(peak_pos, c);
    peak_neg = std::min(peak_neg, c);
  }
  if (-peak_neg > peak_pos) {
    for (double& c : trace.contrast) c = -c;
  }

  // One interpolated peak per addressed transition.
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    std::size_t best = 0;
    bool found = false;
    for (std::size_t k = 0; k < rf_grid_mhz.size(); ++k) {
      int nearest = 0;
      for (std::size_t q = 1; q < gaps.size(); ++q) {
        if (std::abs(rf_grid_mhz[k] - gaps[q]) < std::abs(rf_grid_mhz[k] - gaps[nearest])) {
          nearest = static_cast<int>(q);
        }
      }
      if (nearest != static_cast<int>(p)) continue;
      if (!found || trace.contrast[k] > trace.contrast[best]) {
        best = k;
        found = true;
      }
    }
    if (!found) continue;
    double peak = rf_grid_mhz[best];
    if (best > 0 && best + 1 < rf_grid_mhz.size()) {
      const double y0 = trace.contrast[best - 1], y1 = trace.contrast[best],
                   y2 = trace.contrast[best + 1];
      const double denom = y0 - 2 * y1 + y2;
      if (std::abs(denom) > 1e-30) {
        const double shift = 0.5 * (y0 - y2) / denom;
        peak += shift * (rf_grid_mhz[best + 1] - rf_grid_mhz[best]);
      }
    }
    trace.peak_frequencies_mhz.push_back(peak);
  }
  std::sort(trace.peak_frequencies_mhz.begin(), trace.peak_frequencies_mhz.end());
  return trace;
}

}  // namespace spinmem
