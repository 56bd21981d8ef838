#include "spinmem/relaxation.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include <Eigen/Dense>

#include "spinmem/constants.hpp"
#include "spinmem/errors.hpp"
#include "spinmem/rng.hpp"

namespace spinmem {

void OrbachParams::validate() const {
  if (!(prefactor_per_s > 0)) throw InvalidArgument("OrbachParams: A must be > 0");
  if (!(gap_wavenumber > 0)) throw InvalidArgument("OrbachParams: gap must be > 0");
}

double orbach_t1(const OrbachParams& params, double temperature_k) {
  params.validate();
  if (!(temperature_k > 0)) throw InvalidArgument("orbach_t1: temperature must be > 0");
  const double gap_kelvin = params.gap_wavenumber * constants::kKelvinPerWavenumber;
  return std::exp(gap_kelvin / temperature_k) / params.prefactor_per_s;
}

void StretchedDecay::validate() const {
  if (!(t2_s > 0)) throw InvalidArgument("StretchedDecay: T2 must be > 0");
  if (!(stretch > 0.5) || !(stretch < 3.0)) {
    throw InvalidArgument("StretchedDecay: stretch exponent must lie in (0.5, 3)");
  }
}

double eval_stretched(const StretchedDecay& decay, double t_s) {
  if (t_s < 0) throw InvalidArgument("eval_stretched: t must be >= 0");
  return decay.amplitude * std::exp(-std::pow(t_s / decay.t2_s, decay.stretch));
}

StretchedFitResult fit_stretched(const std::vector<double>& t_s,
                                 const std::vector<double>& amplitude) {
  const int n = static_cast<int>(t_s.size());
  if (n < 5 || amplitude.size() != t_s.size()) {
    throw InvalidArgument("fit_stretched: need >= 5 (t, amplitude) samples");
  }
  for (int k = 1; k < n; ++k) {
    if (t_s[k] <= t_s[k - 1]) throw InvalidArgument("fit_stretched: times must increase");
  }
  const double vmax = *std::max_element(amplitude.begin(), amplitude.end());
  const double vmin = *std::min_element(amplitude.begin(), amplitude.end());
  if (!(vmax > 0) || vmax - vmin < 1e-12 * std::abs(vmax)) {
    throw InvalidArgument("fit_stretched: degenerate all-equal amplitudes");
  }

  // Log-domain data with positivity clamping.
  const double floor = 1e-12 * vmax;
  Eigen::VectorXd y(n);
  for (int k = 0; k < n; ++k) y(k) = std::log(std::max(amplitude[k], floor));

  // Parameters p = (ln V0, ln T2, x).
  auto initial_t2 = [&]() {
    const double target = vmax / std::exp(1.0);
    for (int k = 0; k < n; ++k) {
      if (amplitude[k] < target && t_s[k] > 0) return t_s[k];
    }
    return t_s[n - 1] > 0 ? t_s[n - 1] : 1.0;
  };
  Eigen::Vector3d p(std::log(vmax), std::log(initial_t2()), 1.2);

  auto residuals = [&](const Eigen::Vector3d& q, Eigen::VectorXd& r, Eigen::MatrixXd& jac) {
    const double t2 = std::exp(q(1));
    const double x = q(2);
    for (int k = 0; k < n; ++k) {
      const double u = t_s[k] > 0 ? std::pow(t_s[k] / t2, x) : 0.0;
      r(k) = y(k) - (q(0) - u);
      jac(k, 0) = -1.0;
      jac(k, 1) = -x * u;
      jac(k, 2) = t_s[k] > 0 ? u * std::log(t_s[k] / t2) : 0.0;
    }
    return 0.5 * r.squaredNorm();
  };

  Eigen::VectorXd r(n);
  Eigen::MatrixXd jac(n, 3);
  double cost = residuals(p, r, jac);

  StretchedFitResult out;
  double lambda = 1e-3;
  for (int it = 0; it < 200; ++it) {
    out.iterations = it + 1;
    const Eigen::Matrix3d jtj = jac.transpose() * jac;
    const Eigen::Vector3d g = jac.transpose() * r;
    Eigen::Matrix3d damped = jtj;
    damped.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
    const Eigen::Vector3d step = damped.ldlt().solve(-g);

    Eigen::Vector3d trial = p + step;
    trial(2) = std::clamp(trial(2), 0.501, 2.999);
    Eigen::VectorXd r_trial(n);
    Eigen::MatrixXd jac_trial(n, 3);
    const double trial_cost = residuals(trial, r_trial, jac_trial);

    if (trial_cost < cost) {
      const double rel_drop = (cost - trial_cost) / std::max(cost, 1e-300);
      p = trial;
      r = r_trial;
      jac = jac_trial;
      cost = trial_cost;
      lambda = std::max(lambda * 0.3, 1e-12);
      if (rel_drop < 1e-12 || cost < 1e-24) {
        out.converged = true;
        break;
      }
    } else {
      lambda *= 10.0;
      if (lambda > 1e12) break;
    }
  }

  out.decay.amplitude = std::exp(p(0));
  out.decay.t2_s = std::exp(p(1));
  out.decay.stretch = p(2);
  out.rms_residual = std::sqrt(2.0 * cost / n);
  if (!out.converged && out.rms_residual > 1e-6) {
    // Best-so-far is still reported; callers inspect `converged`.
    out.converged = false;
  } else if (!out.converged) {
    out.converged = true;
  }
  return out;
}

double t2n_composite(double t1e_s, double t2e_s, double kappa) {
  if (!(t1e_s > 0) || !(t2e_s > 0) || !(kappa > 0)) {
    throw InvalidArgument("t2n_composite: all inputs must be > 0");
  }
  return 1.0 / (1.0 / (2.0 * t1e_s) + 1.0 / (kappa * t2e_s));
}

void BathSpec::validate() const {
  if (concentration_per_cm3 < 0) {
    throw InvalidArgument("BathSpec: concentration must be >= 0");
  }
  if (!(t1_bath_s > 0)) throw InvalidArgument("BathSpec: T1_bath must be > 0");
  if (box_spins < 1) throw InvalidArgument("BathSpec: box_spins must be >= 1");
  if (exclusion_radius_nm < 0) throw InvalidArgument("BathSpec: exclusion radius < 0");
}

double dipolar_linewidth_hz(const BathSpec& bath) {
  bath.validate();
  const double n_m3 = bath.concentration_per_cm3 * 1e6;
  const double prefactor = 2.0 * constants::kPi * constants::kPi / (9.0 * std::sqrt(3.0));
  return prefactor * constants::kMu0Over4Pi * bath.g_factor * bath.g_factor *
         constants::kBohrMagnetonJPerT * constants::kBohrMagnetonJPerT * n_m3 /
         constants::kPlanckJs;
}

double spectral_diffusion_estimate(const BathSpec& bath) {
  bath.validate();
  if (bath.concentration_per_cm3 == 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  const double gamma_dd = dipolar_linewidth_hz(bath);
  return std::sqrt(2.0 * bath.t1_bath_s / (constants::kPi * gamma_dd));
}

namespace {

// One bath spin's telegraph history: initial state and flip times in [0, 2*tau_max].
struct Telegraph {
  double coupling_hz = 0.0;  // detuning change on a flip
  int initial = 1;
  std::vector<double> flips;
};

// integral_0^T s(t) dt for the telegraph.
double telegraph_integral(const Telegraph& tg, double t_end) {
  double acc = 0.0;
  double t_prev = 0.0;
  int s = tg.initial;
  for (double tf : tg.flips) {
    if (tf >= t_end) break;
    acc += s * (tf - t_prev);
    t_prev = tf;
    s = -s;
  }
  acc += s * (t_end - t_prev);
  return acc;
}

}  // namespace

SpectralDiffusionCurve spectral_diffusion_mc(const BathSpec& bath,
                                             const std::vector<double>& tau_grid_s,
                                             int threads) {
  bath.validate();
  if (tau_grid_s.size() < 2) {
    throw InvalidArgument("spectral_diffusion_mc: need >= 2 tau grid points");
  }
  if (bath.trajectories < 1000) {
    throw InvalidArgument("spectral_diffusion_mc: need >= 1000 trajectories");
  }

  const int n_tau = static_cast<int>(tau_grid_s.size());
  const int n_traj = bath.trajectories;
  SpectralDiffusionCurve out;
  out.tau_s = tau_grid_s;
  out.amplitude.assign(n_tau, 1.0);

  if (bath.concentration_per_cm3 == 0.0) {
    return out;  // empty bath: perfect refocusing at all tau
  }

  const double n_m3 = bath.concentration_per_cm3 * 1e6;
  const double box_side = std::cbrt(bath.box_spins / n_m3);
  const double r_exc = bath.exclusion_radius_nm * 1e-9;
  const double coupling_const =
      constants::kMu0Over4Pi * bath.g_factor * bath.g_factor *
      constants::kBohrMagnetonJPerT * constants::kBohrMagnetonJPerT / constants::kPlanckJs;
  const double flip_rate = std::isfinite(bath.t1_bath_s) ? 1.0 / (2.0 * bath.t1_bath_s) : 0.0;
  const double t_total = 2.0 * tau_grid_s.back();

  // Per-trajectory echo amplitudes, reduced in index order afterwards so the
  // result does not depend on the thread partition.
  std::vector<double> echo(static_cast<std::size_t>(n_traj) * n_tau);

  auto run_range = [&](int begin, int end) {
    std::vector<Telegraph> spins(bath.box_spins);
    for (int traj = begin; traj < end; ++traj) {
      Rng rng = Rng::for_index(bath.seed, static_cast<std::uint64_t>(traj));
      for (int j = 0; j < bath.box_spins; ++j) {
        Telegraph& tg = spins[j];
        double x, y, z, r;
        do {
          x = rng.uniform(-0.5, 0.5) * box_side;
          y = rng.uniform(-0.5, 0.5) * box_side;
          z = rng.uniform(-0.5, 0.5) * box_side;
          r = std::sqrt(x * x + y * y + z * z);
        } while (r < r_exc);
        const double cos_theta = z / r;
        tg.coupling_hz = coupling_const * (1.0 - 3.0 * cos_theta * cos_theta) / (r * r * r);
        tg.initial = rng.uniform() < 0.5 ? 1 : -1;
        tg.flips.clear();
        double t = rng.exponential(flip_rate);
        while (t < t_total) {
          tg.flips.push_back(t);
          t += rng.exponential(flip_rate);
        }
      }
      for (int k = 0; k < n_tau; ++k) {
        const double tau = tau_grid_s[k];
        double phase = 0.0;
        for (const Telegraph& tg : spins) {
          // detuning is +/- coupling/2; refocused interval integral.
          const double first = telegraph_integral(tg, tau);
          const double both = telegraph_integral(tg, 2.0 * tau);
          phase += constants::kPi * tg.coupling_hz * (2.0 * first - both);
        }
        echo[static_cast<std::size_t>(traj) * n_tau + k] = std::cos(phase);
      }
    }
  };

  const int n_threads = std::clamp(threads, 1, n_traj);
  if (n_threads == 1) {
    run_range(0, n_traj);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (n_traj + n_threads - 1) / n_threads;
    for (int w = 0; w < n_threads; ++w) {
      const int begin = w * chunk;
      const int end = std::min(n_traj, begin + chunk);
      if (begin < end) pool.emplace_back(run_range, begin, end);
    }
    for (auto& th : pool) th.join();
  }

  for (int k = 0; k < n_tau; ++k) {
    double acc = 0.0;
    for (int traj = 0; traj < n_traj; ++traj) {
      acc += echo[static_cast<std::size_t>(traj) * n_tau + k];
    }
    out.amplitude[k] = acc / n_traj;
  }

  // Stretched fit against echo time 2 tau. A non-decaying curve (static or
  // empty bath) has nothing to fit; the flat amplitude is kept instead.
  std::vector<double> echo_time(n_tau);
  for (int k = 0; k < n_tau; ++k) echo_time[k] = 2.0 * tau_grid_s[k];
  try {
    out.fit = fit_stretched(echo_time, out.amplitude);
  } catch (const InvalidArgument&) {
    out.fit.converged = false;
    out.fit.decay.amplitude = out.amplitude.front();
  }
  return out;
}

}  // namespace spinmem
