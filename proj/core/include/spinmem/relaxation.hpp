#pragma once

#include <cstdint>
#include <limits>
#include <vector>

namespace spinmem {

// Orbach spin-lattice relaxation: 1/T1e = A exp(-dE / kB T).
struct OrbachParams {
  double prefactor_per_s = 0.0;   // A
  double gap_wavenumber = 0.0;    // dE in cm^-1

  void validate() const;
};

// T1e in seconds at the given temperature (K).
double orbach_t1(const OrbachParams& params, double temperature_k);

// V(t) = V0 exp(-(t/T2)^x).
struct StretchedDecay {
  double amplitude = 1.0;
  double t2_s = 1.0;
  double stretch = 1.0;

  void validate() const;
};

double eval_stretched(const StretchedDecay& decay, double t_s);

struct StretchedFitResult {
  StretchedDecay decay;
  double rms_residual = 0.0;  // in log-amplitude
  bool converged = false;
  int iterations = 0;
};

// Log-domain damped least squares for (V0, T2, x). Amplitudes are clamped
// to a small positive floor before taking logs; decays spanning decades fit
// stably this way. Needs >= 5 samples with increasing times and rejects
// all-equal amplitudes.
StretchedFitResult fit_stretched(const std::vector<double>& t_s,
                                 const std::vector<double>& amplitude);

// 1/T2n = 1/(2 T1e) + 1/(kappa T2e). Always <= 2 T1e.
double t2n_composite(double t1e_s, double t2e_s, double kappa);

// Dilute dipolar spin bath undergoing T1 flips around a central spin.
struct BathSpec {
  double concentration_per_cm3 = 0.0;
  double g_factor = 2.0;
  double t1_bath_s = 1.0;
  int box_spins = 200;               // bath spins per sampled configuration
  double exclusion_radius_nm = 1.0;  // minimum central-bath distance
  int trajectories = 10000;
  std::uint64_t seed = 1;

  void validate() const;
};

// Analytic sudden-jump estimate of the phase-memory time (seconds, echo
// decay exp(-(2 tau / T_M)^2) in the slow-bath regime):
//   Gamma_dd = (2 pi^2 / 9 sqrt(3)) (mu0/4pi) g^2 muB^2 n / h
//   T_M = sqrt(2 T1_bath / (pi Gamma_dd))
// Zero concentration reports +inf (no dipolar bath).
double spectral_diffusion_estimate(const BathSpec& bath);

// Dipolar half-width Gamma_dd of the bath in Hz (exposed for tests).
double dipolar_linewidth_hz(const BathSpec& bath);

struct SpectralDiffusionCurve {
  std::vector<double> tau_s;       // pulse delay tau; echo forms at 2 tau
  std::vector<double> amplitude;   // ensemble-averaged echo amplitude
  StretchedFitResult fit;          // stretched fit of amplitude vs 2 tau
};

// Sudden-jump Monte Carlo oracle: bath spins placed uniformly at the given
// density in a cubic box around a central spin, each a Poisson telegraph
// with flip rate 1/(2 T1_bath); dipolar detuning
// (mu0/4pi) g^2 muB^2 (1 - 3 cos^2 theta) / (h r^3) per spin; the Hahn echo
// phase is accumulated over the refocused interval and cos(phase) averaged
// over trajectories in index order. Deterministic for a given seed and
// thread count independent.
SpectralDiffusionCurve spectral_diffusion_mc(const BathSpec& bath,
                                             const std::vector<double>& tau_grid_s,
                                             int threads = 1);

}  // namespace spinmem
