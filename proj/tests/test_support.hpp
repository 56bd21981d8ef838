#pragma once

#include "spinmem/spin_system.hpp"

namespace spinmem::testing {

// The 145Nd:Y2SiO5 center: measured g and hyperfine tensors in the
// (D1, D2, b) frame, plus the 145Nd nuclear g factor.
inline SpinSystem nd145_yso() {
  SpinSystem sys;
  sys.nuclear_spin = 3.5;
  sys.g.principal_values = {1.49, -0.98, -4.17};
  sys.g.orientation = {192.0, 39.0, 183.0};
  sys.hyperfine_mhz.principal_values = {398.0, 0.1, 827.0};
  sys.hyperfine_mhz.orientation = {154.0, 34.0, 200.0};
  sys.nuclear_g_factor = -0.1874;
  return sys;
}

// A working orientation a couple of degrees off D1 (out of the D1-D2 plane,
// so the two classes are inequivalent). The CLI finds one by cone search;
// unit tests pin this one for speed.
inline Eigen::Vector3d working_direction() {
  const double th = 2.0 * M_PI / 180.0;
  const double ph = 315.0 * M_PI / 180.0;
  return {std::cos(th), std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph)};
}

inline SpinSystem isotropic_system(double g, double a_mhz, double nuclear_spin) {
  SpinSystem sys;
  sys.nuclear_spin = nuclear_spin;
  sys.g.principal_values = {g, g, g};
  sys.hyperfine_mhz.principal_values = {a_mhz, a_mhz, a_mhz};
  return sys;
}

}  // namespace spinmem::testing
