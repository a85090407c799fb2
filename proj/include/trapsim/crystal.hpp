#pragma once

// Ion-crystal statics and normal modes for arbitrary collections of per-ion
// harmonic wells, plus Lamb-Dicke parameters for a given drive geometry.
//
// Coordinates are stacked the way the mode matrix is indexed: a 3N vector
// holds all x components first, then all y, then all z, i.e. ion i lives at
// (r[i], r[i + N], r[i + 2N]).
//
// Internally the solver uses scaled units with M = 1, omega_ref = 1 and the
// Coulomb length ell = (Q^2 / (4 pi eps0 M omega_ref^2))^(1/3) = 1, where
// omega_ref is the weakest confinement frequency. Public functions take and
// return SI values.

#include "trapsim/core.hpp"
#include "trapsim/csv.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace trapsim::crystal {

struct IonSpecies {
  double mass = 0.0;    // kg
  double charge = 0.0;  // C

  static IonSpecies from_atomic(double mass_u, int charge_e) {
    return {mass_u * si::atomic_mass, charge_e * si::elementary_charge};
  }

  void validate() const {
    if (!(mass > 0.0)) throw DomainError("ion species: mass must be positive");
    if (charge == 0.0) throw DomainError("ion species: charge must be nonzero");
  }

  bool operator==(const IonSpecies&) const = default;
};

/// Harmonic well confining one ion: frequencies (rad/s) along three
/// orthonormal principal axes, centred on `minimum` (m).
struct Well {
  std::array<double, 3> frequencies{};
  std::array<Vec3, 3> axes{Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ()};
  Vec3 minimum = Vec3::Zero();

  bool operator==(const Well& o) const {
    return frequencies == o.frequencies && axes[0] == o.axes[0] && axes[1] == o.axes[1] &&
           axes[2] == o.axes[2] && minimum == o.minimum;
  }
};

struct TrapConfiguration {
  IonSpecies species;
  std::vector<Well> wells;

  std::size_t size() const { return wells.size(); }

  void validate() const {
    species.validate();
    if (wells.empty()) throw DomainError("trap configuration: no ions");
    for (std::size_t i = 0; i < wells.size(); ++i) {
      const auto& w = wells[i];
      for (int j = 0; j < 3; ++j) {
        if (!(w.frequencies[j] > 0.0))
          throw DomainError("trap configuration: well " + std::to_string(i) +
                            " has a non-positive frequency");
        for (int k = 0; k < 3; ++k) {
          const double dot = w.axes[j].dot(w.axes[k]);
          if (std::abs(dot - (j == k ? 1.0 : 0.0)) > 1e-12)
            throw DomainError("trap configuration: axes of well " + std::to_string(i) +
                              " are not orthonormal");
        }
      }
    }
  }

  /// Common linear trap: every ion sees the same well centred at the origin.
  static TrapConfiguration linear(const IonSpecies& species, std::size_t n, double omega_x,
                                  double omega_y, double omega_z) {
    Well w;
    w.frequencies = {omega_x, omega_y, omega_z};
    return {species, std::vector<Well>(n, w)};
  }

  bool operator==(const TrapConfiguration&) const = default;
};

struct CrystalSolution {
  RVector positions;           // 3N, m
  RVector mode_frequencies;    // 3N, rad/s, ascending
  RMatrix mode_matrix;         // 3N x 3N, rows are modes
  RVector hessian_eigenvalues; // 3N, rad^2/s^2
  std::vector<std::string> warnings;

  std::size_t ion_count() const { return static_cast<std::size_t>(positions.size() / 3); }
  std::size_t mode_count() const { return static_cast<std::size_t>(mode_frequencies.size()); }

  Vec3 position(std::size_t i) const {
    const auto n = static_cast<Eigen::Index>(ion_count());
    const auto k = static_cast<Eigen::Index>(i);
    return {positions[k], positions[k + n], positions[k + 2 * n]};
  }
};

/// eta(m, i): Lamb-Dicke parameter of mode m at ion i.
struct LambDickeTensor {
  RMatrix eta;
};

namespace detail {

struct ScaledUnits {
  double omega_ref;
  double length;
  double energy;

  explicit ScaledUnits(const TrapConfiguration& config) {
    omega_ref = std::numeric_limits<double>::infinity();
    for (const auto& w : config.wells)
      for (double f : w.frequencies) omega_ref = std::min(omega_ref, f);
    const double m = config.species.mass;
    const double q2 = sqr(config.species.charge) * si::coulomb_constant;
    length = std::cbrt(q2 / (m * omega_ref * omega_ref));
    energy = m * sqr(omega_ref) * sqr(length);
  }
};

inline Vec3 ion(const RVector& r, std::size_t i, std::size_t n) {
  const auto k = static_cast<Eigen::Index>(i);
  const auto nn = static_cast<Eigen::Index>(n);
  return {r[k], r[k + nn], r[k + 2 * nn]};
}

inline Eigen::Index coord(std::size_t i, int axis, std::size_t n) {
  return static_cast<Eigen::Index>(i + static_cast<std::size_t>(axis) * n);
}

/// Per-ion 3x3 curvature matrix sum_j (omega_j/omega_ref)^2 d_j d_j^T.
inline std::vector<Eigen::Matrix3d> curvatures(const TrapConfiguration& c, const ScaledUnits& u) {
  std::vector<Eigen::Matrix3d> out;
  out.reserve(c.size());
  for (const auto& w : c.wells) {
    Eigen::Matrix3d k = Eigen::Matrix3d::Zero();
    for (int j = 0; j < 3; ++j) k += sqr(w.frequencies[j] / u.omega_ref) * w.axes[j] * w.axes[j].transpose();
    out.push_back(k);
  }
  return out;
}

struct ScaledModel {
  std::size_t n;
  std::vector<Eigen::Matrix3d> curv;
  std::vector<Vec3> minima;  // scaled
  double min_separation;     // scaled

  ScaledModel(const TrapConfiguration& c, const ScaledUnits& u)
      : n(c.size()), curv(curvatures(c, u)), min_separation(1e-12 / u.length) {
    for (const auto& w : c.wells) minima.push_back(w.minimum / u.length);
  }

  void check_separation(const RVector& x) const {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if ((ion(x, i, n) - ion(x, j, n)).norm() <= min_separation)
          throw DomainError("ions " + std::to_string(i) + " and " + std::to_string(j) +
                            " coincide");
  }

  double potential(const RVector& x) const {
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3 d = ion(x, i, n) - minima[i];
      v += 0.5 * d.dot(curv[i] * d);
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) v += 1.0 / (ion(x, i, n) - ion(x, j, n)).norm();
    return v;
  }

  RVector gradient(const RVector& x) const {
    RVector g = RVector::Zero(static_cast<Eigen::Index>(3 * n));
    for (std::size_t i = 0; i < n; ++i) {
      Vec3 gi = curv[i] * (ion(x, i, n) - minima[i]);
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const Vec3 r = ion(x, i, n) - ion(x, j, n);
        gi -= r / std::pow(r.norm(), 3);
      }
      for (int a = 0; a < 3; ++a) g[coord(i, a, n)] = gi[a];
    }
    return g;
  }

  RMatrix hessian(const RVector& x) const {
    const auto dim = static_cast<Eigen::Index>(3 * n);
    RMatrix h = RMatrix::Zero(dim, dim);
    for (std::size_t i = 0; i < n; ++i)
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) h(coord(i, a, n), coord(i, b, n)) += curv[i](a, b);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const Vec3 r = ion(x, i, n) - ion(x, j, n);
        const double d = r.norm();
        const double d5 = std::pow(d, 5);
        for (int a = 0; a < 3; ++a) {
          for (int b = 0; b < 3; ++b) {
            const double t = (3.0 * r[a] * r[b] - (a == b ? d * d : 0.0)) / d5;
            h(coord(i, a, n), coord(i, b, n)) += t;
            h(coord(j, a, n), coord(j, b, n)) += t;
            h(coord(i, a, n), coord(j, b, n)) -= t;
            h(coord(j, a, n), coord(i, b, n)) -= t;
          }
        }
      }
    }
    return h;
  }
};

/// Ions sharing a well minimum are spread at 1.1 ell along the weakest
/// confinement axis, with a small alternating offset along the next weakest
/// axis so a symmetric guess cannot get stuck on a zigzag saddle.
inline RVector initial_guess(const TrapConfiguration& c, const ScaledUnits& u) {
  const std::size_t n = c.size();
  Vec3 weak = Vec3::UnitZ(), second = Vec3::UnitX();
  {
    double best = std::numeric_limits<double>::infinity();
    std::size_t wi = 0;
    int wj = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (int j = 0; j < 3; ++j)
        if (c.wells[i].frequencies[j] < best) {
          best = c.wells[i].frequencies[j];
          wi = i;
          wj = j;
        }
    weak = c.wells[wi].axes[wj];
    double next = std::numeric_limits<double>::infinity();
    for (int j = 0; j < 3; ++j)
      if (j != wj && c.wells[wi].frequencies[j] < next) {
        next = c.wells[wi].frequencies[j];
        second = c.wells[wi].axes[j];
      }
  }
  RVector x(static_cast<Eigen::Index>(3 * n));
  std::vector<bool> placed(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    if (placed[i]) continue;
    std::vector<std::size_t> group;
    const Vec3 pi_ = c.wells[i].minimum / u.length;
    for (std::size_t j = i; j < n; ++j)
      if (!placed[j] && (c.wells[j].minimum / u.length - pi_).norm() < 1e-6) group.push_back(j);
    const double half = 0.5 * static_cast<double>(group.size() - 1);
    for (std::size_t g = 0; g < group.size(); ++g) {
      const double s = (static_cast<double>(g) - half) * 1.1;
      const double wobble = group.size() > 1 ? ((g % 2) ? 1e-3 : -1e-3) : 0.0;
      const Vec3 p = pi_ + s * weak + wobble * second;
      for (int a = 0; a < 3; ++a) x[coord(group[g], a, n)] = p[a];
      placed[group[g]] = true;
    }
  }
  return x;
}

}  // namespace detail

/// V0 + sum_{i<j} Q^2 / (4 pi eps0 |r_i - r_j|), in J.
inline double total_potential(const TrapConfiguration& config, const RVector& positions) {
  config.validate();
  const std::size_t n = config.size();
  if (positions.size() != static_cast<Eigen::Index>(3 * n))
    throw DomainError("total_potential: expected 3N coordinates");
  const detail::ScaledUnits u(config);
  const detail::ScaledModel model(config, u);
  const RVector x = positions / u.length;
  model.check_separation(x);
  return model.potential(x) * u.energy;
}

/// Gradient of total_potential, in N.
inline RVector potential_gradient(const TrapConfiguration& config, const RVector& positions) {
  config.validate();
  const detail::ScaledUnits u(config);
  const detail::ScaledModel model(config, u);
  const RVector x = positions / u.length;
  model.check_separation(x);
  return model.gradient(x) * (u.energy / u.length);
}

struct EquilibriumOptions {
  double gradient_tolerance = 1e-12;  // scaled units
  int max_iterations = 20000;
};

namespace detail {

inline double backtrack(const ScaledModel& m, const RVector& x, const RVector& p, double f,
                        const RVector& g, RVector& x_new, double& f_new) {
  double step = 1.0;
  const double slope = g.dot(p);
  for (int k = 0; k < 60; ++k) {
    x_new = x + step * p;
    bool ok = true;
    for (std::size_t i = 0; i < m.n && ok; ++i)
      for (std::size_t j = i + 1; j < m.n && ok; ++j)
        if ((ion(x_new, i, m.n) - ion(x_new, j, m.n)).norm() <= m.min_separation) ok = false;
    if (ok) {
      f_new = m.potential(x_new);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * slope) return step;
    }
    step *= 0.5;
  }
  return 0.0;
}

}  // namespace detail

/// Local minimum of the total potential (m). Quasi-Newton (BFGS) with the
/// analytic gradient, damped gradient descent as fallback, then Newton
/// polishing with the analytic Hessian down to `gradient_tolerance`.
inline RVector find_equilibrium(const TrapConfiguration& config,
                                const std::optional<RVector>& initial_guess = std::nullopt,
                                const EquilibriumOptions& opts = {}) {
  config.validate();
  const std::size_t n = config.size();
  const detail::ScaledUnits u(config);
  const detail::ScaledModel m(config, u);
  RVector x = initial_guess ? RVector(*initial_guess / u.length) : detail::initial_guess(config, u);
  if (x.size() != static_cast<Eigen::Index>(3 * n))
    throw DomainError("find_equilibrium: initial guess must have 3N coordinates");
  m.check_separation(x);

  const auto dim = x.size();
  double f = m.potential(x);
  RVector g = m.gradient(x);
  RMatrix hinv = RMatrix::Identity(dim, dim);
  RVector x_new(dim);
  double f_new = 0.0;
  int it = 0;
  bool use_descent = false;

  for (; it < opts.max_iterations && g.norm() > 1e-7; ++it) {
    RVector p = use_descent ? RVector(-g) : RVector(-hinv * g);
    if (g.dot(p) >= 0.0) {
      hinv.setIdentity();
      p = -g;
    }
    double step = detail::backtrack(m, x, p, f, g, x_new, f_new);
    if (step == 0.0) {
      if (use_descent) break;
      use_descent = true;  // quasi-Newton stalled
      hinv.setIdentity();
      continue;
    }
    const RVector s = x_new - x;
    const RVector g_new = m.gradient(x_new);
    const RVector y = g_new - g;
    const double sy = s.dot(y);
    if (!use_descent && sy > 1e-300) {
      const double rho = 1.0 / sy;
      const RMatrix id = RMatrix::Identity(dim, dim);
      hinv = (id - rho * s * y.transpose()) * hinv * (id - rho * y * s.transpose()) +
             rho * s * s.transpose();
    }
    x = x_new;
    f = f_new;
    g = g_new;
  }

  // Newton polish.
  for (int k = 0; k < 50 && g.norm() > opts.gradient_tolerance; ++k) {
    const RMatrix h = m.hessian(x);
    Eigen::LDLT<RMatrix> ldlt(h);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) break;
    RVector p = ldlt.solve(-g);
    double step = detail::backtrack(m, x, p, f, g, x_new, f_new);
    RVector g_new = step == 0.0 ? g : m.gradient(x_new);
    if (step == 0.0 || g_new.norm() >= g.norm()) {
      // Line search in energy can stall at round-off; accept a full step if it shrinks the gradient.
      x_new = x + p;
      g_new = m.gradient(x_new);
      if (g_new.norm() >= g.norm()) break;
      f_new = m.potential(x_new);
    }
    x = x_new;
    f = f_new;
    g = g_new;
  }

  const double gnorm = g.norm();
  if (!(gnorm <= opts.gradient_tolerance)) {
    std::ostringstream msg;
    msg << "find_equilibrium: no convergence after " << it << " iterations, gradient norm "
        << gnorm;
    throw ConvergenceError(msg.str(), gnorm);
  }
  Eigen::SelfAdjointEigenSolver<RMatrix> es(m.hessian(x), Eigen::EigenvaluesOnly);
  const double top = es.eigenvalues().cwiseAbs().maxCoeff();
  if (es.eigenvalues()[0] < -1e-9 * top)
    throw ConvergenceError("find_equilibrium: converged to a saddle point", gnorm);
  return x * u.length;
}

/// A = (1/M) d^2V/dr_k dr_l in 1/s^2.
inline RMatrix hessian(const TrapConfiguration& config, const RVector& positions,
                       std::vector<std::string>* warnings = nullptr) {
  config.validate();
  const detail::ScaledUnits u(config);
  const detail::ScaledModel m(config, u);
  const RVector x = positions / u.length;
  m.check_separation(x);
  if (warnings) {
    const double gn = m.gradient(x).norm();
    if (gn > 1e-8) {
      std::ostringstream msg;
      msg << "hessian evaluated away from equilibrium (scaled gradient norm " << gn << ")";
      warnings->push_back(msg.str());
    }
  }
  RMatrix h = m.hessian(x) * sqr(u.omega_ref);
  return 0.5 * (h + h.transpose());
}

struct NormalModes {
  RVector frequencies;   // ascending, rad/s
  RMatrix mode_matrix;   // rows = modes
  RVector eigenvalues;
  std::vector<std::string> warnings;
};

namespace detail {

inline bool lex_greater(const RVector& a, const RVector& b) {
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    if (std::abs(a[k] - b[k]) > 1e-9) return a[k] > b[k];
  }
  return false;
}

inline void fix_sign(Eigen::Ref<RVector> v) {
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (std::abs(v[k]) > 1e-9) {
      if (v[k] < 0) v = -v;
      return;
    }
  }
}

/// Replace an arbitrary orthonormal basis V (columns) of a degenerate
/// eigenspace by a canonical one: project the unit vectors e_0, e_1, ... in
/// order and Gram-Schmidt them. The result depends on the subspace only.
inline RMatrix canonical_basis(const RMatrix& v) {
  const auto dim = v.rows();
  const auto k = v.cols();
  RMatrix out(dim, k);
  Eigen::Index found = 0;
  for (Eigen::Index e = 0; e < dim && found < k; ++e) {
    RVector w = v * v.row(e).transpose();  // P e_e
    for (Eigen::Index j = 0; j < found; ++j) w -= out.col(j).dot(w) * out.col(j);
    for (Eigen::Index j = 0; j < found; ++j) w -= out.col(j).dot(w) * out.col(j);
    const double nrm = w.norm();
    if (nrm > 1e-6) out.col(found++) = w / nrm;
  }
  if (found < k) return v;
  return out;
}

}  // namespace detail

/// Eigen-decomposition of the (symmetric) Hessian into mode frequencies and
/// the orthogonal mode matrix. Degenerate clusters get a canonical basis and
/// each row's first significant component is made positive.
inline NormalModes normal_modes(const RMatrix& a) {
  if (a.rows() != a.cols()) throw DomainError("normal_modes: matrix must be square");
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);
  if (asym > 1e-12 * scale) throw DomainError("normal_modes: matrix is not symmetric");

  Eigen::SelfAdjointEigenSolver<RMatrix> es(0.5 * (a + a.transpose()));
  if (es.info() != Eigen::Success) throw ConvergenceError("normal_modes: eigensolver failed", 0.0);
  RVector lam = es.eigenvalues();
  RMatrix vecs = es.eigenvectors();
  const auto dim = lam.size();
  const double top = lam.cwiseAbs().maxCoeff();

  NormalModes out;
  for (Eigen::Index m = 0; m < dim; ++m) {
    if (lam[m] < -1e-9 * top) {
      std::ostringstream msg;
      msg << "unstable crystal: mode " << m << " has Hessian eigenvalue " << lam[m];
      throw UnstableCrystalError(msg.str(), static_cast<std::size_t>(m), lam[m]);
    }
    if (lam[m] <= 0.0) {
      out.warnings.push_back("marginal mode " + std::to_string(m) + " clamped to zero frequency");
      lam[m] = 0.0;
    }
  }

  RMatrix rows(dim, dim);
  Eigen::Index start = 0;
  while (start < dim) {
    Eigen::Index end = start + 1;
    while (end < dim && std::abs(lam[end] - lam[start]) <= 1e-9 * std::max(top, 1e-300)) ++end;
    const Eigen::Index k = end - start;
    RMatrix block = vecs.middleCols(start, k);
    if (k > 1) block = detail::canonical_basis(block);
    std::vector<RVector> cluster;
    for (Eigen::Index j = 0; j < k; ++j) {
      RVector v = block.col(j);
      detail::fix_sign(v);
      cluster.push_back(v);
    }
    std::stable_sort(cluster.begin(), cluster.end(), detail::lex_greater);
    const double mean = lam.segment(start, k).mean();
    for (Eigen::Index j = 0; j < k; ++j) {
      rows.row(start + j) = cluster[static_cast<std::size_t>(j)].transpose();
      lam[start + j] = mean;
    }
    start = end;
  }

  out.eigenvalues = lam;
  out.frequencies = lam.cwiseSqrt();
  out.mode_matrix = rows;
  return out;
}

inline CrystalSolution solve_crystal(const TrapConfiguration& config,
                                     const std::optional<RVector>& initial_guess = std::nullopt,
                                     const EquilibriumOptions& opts = {}) {
  CrystalSolution s;
  s.positions = find_equilibrium(config, initial_guess, opts);
  const RMatrix a = hessian(config, s.positions, &s.warnings);
  NormalModes modes = normal_modes(a);
  s.mode_frequencies = std::move(modes.frequencies);
  s.mode_matrix = std::move(modes.mode_matrix);
  s.hessian_eigenvalues = std::move(modes.eigenvalues);
  s.warnings.insert(s.warnings.end(), modes.warnings.begin(), modes.warnings.end());
  return s;
}

/// eta(m, i) = sqrt(hbar / (2 M omega_m)) (b_{m,i} k_x + b_{m,i+N} k_y + b_{m,i+2N} k_z)
/// with one effective wavevector (1/m) per ion.
inline LambDickeTensor lamb_dicke(const CrystalSolution& solution, const IonSpecies& species,
                                  std::span<const Vec3> wavevectors) {
  species.validate();
  const std::size_t n = solution.ion_count();
  if (wavevectors.size() != n) throw DomainError("lamb_dicke: need one wavevector per ion");
  const auto modes = static_cast<Eigen::Index>(solution.mode_count());
  LambDickeTensor t;
  t.eta = RMatrix::Zero(modes, static_cast<Eigen::Index>(n));
  for (Eigen::Index m = 0; m < modes; ++m) {
    const double w = solution.mode_frequencies[m];
    double proj_max = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& k = wavevectors[i];
      double proj = 0.0;
      for (int a = 0; a < 3; ++a) proj += solution.mode_matrix(m, detail::coord(i, a, n)) * k[a];
      proj_max = std::max(proj_max, std::abs(proj));
      if (w > 0.0) t.eta(m, static_cast<Eigen::Index>(i)) = std::sqrt(si::hbar / (2.0 * species.mass * w)) * proj;
    }
    if (!(w > 0.0) && proj_max > 0.0)
      throw DomainError("lamb_dicke: drive couples to a zero-frequency mode " + std::to_string(m));
  }
  return t;
}

inline LambDickeTensor lamb_dicke(const CrystalSolution& solution, const IonSpecies& species,
                                  const Vec3& wavevector) {
  std::vector<Vec3> ks(solution.ion_count(), wavevector);
  return lamb_dicke(solution, species, ks);
}

/// Fraction of mode m's displacement that lies along `direction` (unit vector).
inline double mode_weight_along(const CrystalSolution& s, std::size_t m, const Vec3& direction) {
  const std::size_t n = s.ion_count();
  const Vec3 d = direction.normalized();
  double w = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double p = 0.0;
    for (int a = 0; a < 3; ++a) p += s.mode_matrix(static_cast<Eigen::Index>(m), detail::coord(i, a, n)) * d[a];
    w += p * p;
  }
  return w;
}

/// Indices (ascending frequency) of modes polarised along `direction`.
inline std::vector<std::size_t> modes_along(const CrystalSolution& s, const Vec3& direction,
                                            double tol = 1e-9) {
  std::vector<std::size_t> out;
  for (std::size_t m = 0; m < s.mode_count(); ++m)
    if (mode_weight_along(s, m, direction) > 1.0 - tol) out.push_back(m);
  return out;
}

/// Flat CSV: kind,index,values... with kinds "position" (x,y,z), "mode"
/// (omega, then the mode-matrix row) and optionally "eta" (one value per ion).
inline void write_csv(std::ostream& os, const CrystalSolution& s,
                      const LambDickeTensor* eta = nullptr) {
  csv::Writer w(os);
  w.header({"kind", "index", "values"});
  for (std::size_t i = 0; i < s.ion_count(); ++i) {
    const Vec3 p = s.position(i);
    csv::Row r;
    r << "position" << static_cast<unsigned long>(i) << p[0] << p[1] << p[2];
    w.write(r);
  }
  for (std::size_t m = 0; m < s.mode_count(); ++m) {
    csv::Row r;
    r << "mode" << static_cast<unsigned long>(m) << s.mode_frequencies[static_cast<Eigen::Index>(m)];
    for (Eigen::Index k = 0; k < s.mode_matrix.cols(); ++k) r << s.mode_matrix(static_cast<Eigen::Index>(m), k);
    w.write(r);
  }
  if (eta) {
    for (Eigen::Index m = 0; m < eta->eta.rows(); ++m) {
      csv::Row r;
      r << "eta" << static_cast<long>(m);
      for (Eigen::Index i = 0; i < eta->eta.cols(); ++i) r << eta->eta(m, i);
      w.write(r);
    }
  }
}

}  // namespace trapsim::crystal
