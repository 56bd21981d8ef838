#pragma once

#include <complex>

#include <Eigen/Dense>

#include "spinmem/geometry.hpp"

namespace spinmem {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

// Effective electron spin 1/2 coupled to one nuclear spin through an
// anisotropic hyperfine tensor, with an anisotropic Zeeman g tensor.
// The physical model of a paramagnetic rare-earth center.
struct SpinSystem {
  double electron_spin = 0.5;           // fixed S = 1/2
  double nuclear_spin = 0.0;            // half-integer >= 0; 7/2 for 145Nd
  InteractionTensor g;                  // dimensionless
  InteractionTensor hyperfine_mhz;      // MHz
  double nuclear_g_factor = 0.0;        // nuclear Zeeman off by default

  int electron_dim() const { return static_cast<int>(2 * electron_spin + 1.5); }
  int nuclear_dim() const { return static_cast<int>(2 * nuclear_spin + 1.5); }
  int dim() const { return electron_dim() * nuclear_dim(); }

  // Throws InvalidArgument when spins are not half-integers or S != 1/2.
  void validate() const;
};

// Static field: magnitude in mT and a unit direction in the (D1, D2, b)
// crystal frame.
struct FieldSpec {
  double magnitude_mt = 0.0;
  Eigen::Vector3d direction = Eigen::Vector3d::UnitX();

  // Throws unless |direction| = 1 within 1e-12 and magnitude >= 0.
  void validate() const;
};

// Angular momentum matrices for spin j in the descending-m basis
// (m = j, j-1, ..., -j).
struct SpinOperators {
  Matrix x, y, z;
};
SpinOperators spin_operators(double j);

// Operators of the coupled electron-nuclear space, basis |m_S, m_I> with
// m_S the slow index, both descending.
struct ProductOperators {
  Matrix sx, sy, sz;  // electron
  Matrix ix, iy, iz;  // nuclear
};
ProductOperators product_operators(const SpinSystem& sys);

}  // namespace spinmem
