#pragma once

// Associated Laguerre polynomials and Fock-basis matrix elements of the
// displacement operator D(lambda) = exp(lambda a^dag - lambda^* a).

#include "trapsim/core.hpp"

#include <cmath>
#include <complex>

namespace trapsim {

/// L_n^(alpha)(x) by the three-term recurrence.
inline double laguerre(int n, int alpha, double x) {
  if (n < 0 || alpha < 0) throw DomainError("laguerre: n and alpha must be non-negative");
  double prev = 1.0;
  if (n == 0) return prev;
  double cur = 1.0 + alpha - x;
  for (int k = 1; k < n; ++k) {
    const double next = ((2.0 * k + 1.0 + alpha - x) * cur - (k + alpha) * prev) / (k + 1.0);
    prev = cur;
    cur = next;
  }
  return cur;
}

inline cplx ipow(cplx z, int k) {
  cplx r = 1.0;
  for (int j = 0; j < k; ++j) r *= z;
  return r;
}

/// log(n!)
inline double log_factorial(int n) { return std::lgamma(n + 1.0); }

/// <n_out| D(lambda) |n_in>
inline cplx displacement_matrix_element(int n_out, int n_in, cplx lambda) {
  if (n_out < 0 || n_in < 0) throw DomainError("displacement_matrix_element: negative Fock index");
  const double x = std::norm(lambda);
  const double gauss = std::exp(-0.5 * x);
  if (lambda == cplx(0.0)) return n_out == n_in ? 1.0 : 0.0;
  if (n_out >= n_in) {
    const int d = n_out - n_in;
    const double mag = std::exp(0.5 * (log_factorial(n_in) - log_factorial(n_out)));
    return gauss * ipow(lambda, d) * mag * laguerre(n_in, d, x);
  }
  const int d = n_in - n_out;
  const double mag = std::exp(0.5 * (log_factorial(n_out) - log_factorial(n_in)));
  return gauss * ipow(-std::conj(lambda), d) * mag * laguerre(n_out, d, x);
}

}  // namespace trapsim
