#pragma once

namespace spinmem::constants {

// Unit system used throughout: energies and frequencies in MHz, magnetic
// fields in mT, times in µs for pulse sequences and in s for relaxation
// inputs, angles in degrees at API boundaries.
//
// CODATA 2018 values, fixed at compile time and pinned by tests.

// Bohr magneton over Planck constant, MHz per mT.
inline constexpr double kBohrMagnetonMHzPerMT = 13.996245;

// Nuclear magneton over Planck constant, MHz per mT.
inline constexpr double kNuclearMagnetonMHzPerMT = 7.622593e-3;

// hc/k_B: kelvin per wavenumber (cm^-1).
inline constexpr double kKelvinPerWavenumber = 1.438777;

// SI primitives for the dipolar spectral-diffusion estimate.
inline constexpr double kBohrMagnetonJPerT = 9.2740100783e-24;
inline constexpr double kPlanckJs = 6.62607015e-34;
inline constexpr double kMu0Over4Pi = 1.0e-7;  // T^2 m^3 / J

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kDegToRad = kPi / 180.0;

}  // namespace spinmem::constants
