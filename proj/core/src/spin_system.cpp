#include "spinmem/spin_system.hpp"

#include <cmath>

#include <unsupported/Eigen/KroneckerProduct>

#include "spinmem/errors.hpp"

namespace spinmem {

void SpinSystem::validate() const {
  if (electron_spin != 0.5) {
    throw InvalidArgument("SpinSystem: electron spin must be 1/2");
  }
  const double twice_i = 2.0 * nuclear_spin;
  if (nuclear_spin < 0 || std::abs(twice_i - std::round(twice_i)) > 1e-12) {
    throw InvalidArgument("SpinSystem: nuclear spin must be a non-negative half-integer");
  }
}

void FieldSpec::validate() const {
  if (magnitude_mt < 0) {
    throw InvalidArgument("FieldSpec: field magnitude must be >= 0");
  }
  if (std::abs(direction.norm() - 1.0) > 1e-12) {
    throw InvalidArgument("FieldSpec: direction must be a unit vector (|n| = 1 to 1e-12)");
  }
}

SpinOperators spin_operators(double j) {
  const int dim = static_cast<int>(2 * j + 1.5);
  Matrix jp = Matrix::Zero(dim, dim);  // raising operator J+
  Matrix jz = Matrix::Zero(dim, dim);
  for (int k = 0; k < dim; ++k) {
    const double m = j - k;
    jz(k, k) = m;
    if (k + 1 < dim) {
      // <m| J+ |m-1> = sqrt(j(j+1) - m(m-1))
      jp(k, k + 1) = std::sqrt(j * (j + 1) - m * (m - 1));
    }
  }
  SpinOperators ops;
  ops.x = 0.5 * (jp + jp.adjoint());
  ops.y = Complex(0, -0.5) * (jp - jp.adjoint());
  ops.z = jz;
  return ops;
}

ProductOperators product_operators(const SpinSystem& sys) {
  sys.validate();
  const SpinOperators s = spin_operators(sys.electron_spin);
  const SpinOperators i = spin_operators(sys.nuclear_spin);
  const Matrix ide = Matrix::Identity(sys.electron_dim(), sys.electron_dim());
  const Matrix idn = Matrix::Identity(sys.nuclear_dim(), sys.nuclear_dim());

  ProductOperators out;
  out.sx = Eigen::kroneckerProduct(s.x, idn);
  out.sy = Eigen::kroneckerProduct(s.y, idn);
  out.sz = Eigen::kroneckerProduct(s.z, idn);
  out.ix = Eigen::kroneckerProduct(ide, i.x);
  out.iy = Eigen::kroneckerProduct(ide, i.y);
  out.iz = Eigen::kroneckerProduct(ide, i.z);
  return out;
}

}  // namespace spinmem
