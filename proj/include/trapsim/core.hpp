#pragma once

// Shared numeric types, physical constants and error types.

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace trapsim {

using cplx = std::complex<double>;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using Vec3 = Eigen::Vector3d;

inline constexpr double pi = 3.14159265358979323846;
inline constexpr cplx I{0.0, 1.0};

namespace si {
inline constexpr double hbar = 1.054571817e-34;          // J s
inline constexpr double elementary_charge = 1.602176634e-19;  // C
inline constexpr double epsilon0 = 8.8541878128e-12;      // F/m
inline constexpr double atomic_mass = 1.66053906660e-27;  // kg
inline constexpr double coulomb_constant = 1.0 / (4.0 * pi * epsilon0);
}  // namespace si

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on the inputs was violated (bad dimensions, coincident ions, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver gave up. `residual` is the last measured residual.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// The Hessian of an ion crystal has a negative eigenvalue.
class UnstableCrystalError : public Error {
 public:
  UnstableCrystalError(const std::string& what, std::size_t mode, double eigenvalue)
      : Error(what), mode_(mode), eigenvalue_(eigenvalue) {}
  std::size_t mode() const { return mode_; }
  double eigenvalue() const { return eigenvalue_; }

 private:
  std::size_t mode_;
  double eigenvalue_;
};

/// Probability leaked into the top Fock levels of a truncated mode.
class LeakageError : public Error {
 public:
  LeakageError(const std::string& what, double leakage) : Error(what), leakage_(leakage) {}
  double leakage() const { return leakage_; }

 private:
  double leakage_;
};

inline double sqr(double x) { return x * x; }

}  // namespace trapsim
