#pragma once

// Numerical checks of the operator identities the interaction-picture and
// canonical-transformation derivations rely on.

#include "trapsim/hilbert.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <random>
#include <string>
#include <vector>

namespace trapsim::hilbert {

struct IdentityResidual {
  std::string name;
  double max_residual = 0.0;
  int samples = 0;
};

namespace identities {

inline CMatrix lowering(int n_max) { return mode_matrix({ModeOp::Lower, 0.0}, n_max); }

inline CMatrix number(int n_max) { return mode_matrix({ModeOp::Number, 0.0}, n_max); }

/// max |e^{i k sz} s_pm e^{-i k sz} - e^{pm 2 i k} s_pm|
inline double spin_phase(double kappa) {
  const CMatrix sz = spin_matrix({SpinOp::Z, {}});
  const CMatrix u = (I * kappa * sz).exp();
  const CMatrix plus = spin_matrix({SpinOp::Plus, {}});
  const CMatrix minus = spin_matrix({SpinOp::Minus, {}});
  const double rp = (u * plus * u.adjoint() - std::exp(2.0 * I * kappa) * plus).cwiseAbs().maxCoeff();
  const double rm = (u * minus * u.adjoint() - std::exp(-2.0 * I * kappa) * minus).cwiseAbs().maxCoeff();
  return std::max(rp, rm);
}

/// e^{i l n} e^{i x (a + a^dag)} e^{-i l n} vs exp(i x (a e^{-i l} + a^dag e^{i l})), interior block.
inline double mode_rotation(double lambda, double xi, int n_max, int interior) {
  const CMatrix a = lowering(n_max);
  const CMatrix u = (I * lambda * number(n_max)).exp();
  const CMatrix lhs = u * (I * xi * (a + a.adjoint())).exp() * u.adjoint();
  const CMatrix rhs = (I * xi * (a * std::exp(-I * lambda) + a.adjoint() * std::exp(I * lambda))).exp();
  return (lhs - rhs).topLeftCorner(interior, interior).cwiseAbs().maxCoeff();
}

/// U (xi a^dag + xi^* a - k a^dag a) U^dag = |xi|^2/k - k a^dag a with U = D(xi/k)^dag.
inline double canonical_shift(cplx xi, double kappa, int n_max, int interior) {
  const CMatrix a = lowering(n_max);
  const CMatrix h = xi * a.adjoint() + std::conj(xi) * a - kappa * number(n_max);
  const CMatrix d = displacement_matrix(n_max, xi / kappa);
  const CMatrix transformed = d.adjoint() * h * d;
  const CMatrix expect =
      std::norm(xi) / kappa * CMatrix::Identity(n_max + 1, n_max + 1) - kappa * number(n_max);
  return (transformed - expect).topLeftCorner(interior, interior).cwiseAbs().maxCoeff();
}

}  // namespace identities

/// Random-draw residuals of the three identities, each over `samples` draws.
inline std::vector<IdentityResidual> verify_identities(int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };
  std::vector<IdentityResidual> out = {
      {"spin-phase", 0.0, samples}, {"mode-rotation", 0.0, samples}, {"canonical-shift", 0.0, samples}};
  for (int s = 0; s < samples; ++s) {
    out[0].max_residual = std::max(out[0].max_residual, identities::spin_phase(uniform(-pi, pi)));
    out[1].max_residual = std::max(
        out[1].max_residual, identities::mode_rotation(uniform(-pi, pi), uniform(-0.5, 0.5), 40, 20));
    const cplx xi = std::polar(uniform(0.0, 0.5), uniform(-pi, pi));
    const double kappa = (uniform01(rng) < 0.5 ? -1.0 : 1.0) * uniform(0.5, 2.0);
    out[2].max_residual = std::max(out[2].max_residual, identities::canonical_shift(xi, kappa, 40, 20));
  }
  return out;
}

}  // namespace trapsim::hilbert
