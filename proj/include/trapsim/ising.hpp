#pragma once

// Effective quantum Ising model of a z-branch drive plus a transverse field:
//   H = sum_i B_i sx_i + sum_{i != j} J_ij sz_i sz_j (+ sum_i b_i sz_i)
// obtained by displacing every mode by its spin-dependent amount. Energies are
// angular frequencies (hbar = 1).

#include "trapsim/core.hpp"
#include "trapsim/drive.hpp"
#include "trapsim/gate.hpp"
#include "trapsim/hilbert.hpp"

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace trapsim::ising {

using drive::DriveSpec;
using hilbert::SimState;

struct IsingModel {
  RMatrix J;                 // symmetric, zero diagonal
  std::vector<double> bx;    // transverse field per ion
  std::vector<double> bias;  // sz coefficient per ion
  bool compensate = true;    // add -bias, cancelling the bias exactly

  std::size_t ions() const { return bx.size(); }

  void validate() const {
    const auto n = static_cast<Eigen::Index>(bx.size());
    if (J.rows() != n || J.cols() != n) throw DomainError("ising: J must be N x N");
    if (!bias.empty() && bias.size() != bx.size()) throw DomainError("ising: need one bias per ion");
    for (Eigen::Index i = 0; i < n; ++i) {
      if (J(i, i) != 0.0) throw DomainError("ising: J diagonal must be zero");
      for (Eigen::Index j = 0; j < i; ++j)
        if (J(i, j) != J(j, i)) throw DomainError("ising: J must be symmetric");
    }
  }

  /// Net sz field actually applied.
  std::vector<double> net_bias() const {
    if (compensate || bias.empty()) return std::vector<double>(bx.size(), 0.0);
    return bias;
  }

  static IsingModel uniform(std::size_t n, double j, double b) {
    IsingModel m;
    m.J = RMatrix::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n), j);
    m.J.diagonal().setZero();
    m.bx.assign(n, b);
    return m;
  }
};

inline const char* coupling_label(double j) {
  if (j < 0.0) return "ferromagnetic";
  if (j > 0.0) return "antiferromagnetic";
  return "none";
}

namespace detail {

inline void check_drive(const DriveSpec& drive) {
  drive.validate();
  if (drive.branch != drive::Branch::Z) throw DomainError("ising: drive must be on the z-branch");
  for (double d : drive.detunings)
    if (d == 0.0) throw DomainError("ising: zero detuning");
}

/// sum_m Omega_i Omega_j eta_mi eta_mj cos(phi_i - phi_j) / delta_m, diagonal included.
inline RMatrix mode_sum(const DriveSpec& drive) {
  const auto n = static_cast<Eigen::Index>(drive.ions());
  RMatrix s = RMatrix::Zero(n, n);
  for (Eigen::Index m = 0; m < drive.eta.rows(); ++m)
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        s(i, j) += drive.rabi[static_cast<std::size_t>(i)] * drive.rabi[static_cast<std::size_t>(j)] *
                   drive.eta(m, i) * drive.eta(m, j) *
                   std::cos(drive.phase[static_cast<std::size_t>(i)] - drive.phase[static_cast<std::size_t>(j)]) /
                   drive.detunings[static_cast<std::size_t>(m)];
  return 0.5 * (s + s.transpose());
}

}  // namespace detail

/// J_ij = alpha3^2 sum_m Omega_i Omega_j eta_mi eta_mj cos(phi_i - phi_j) / delta_m, i != j.
inline RMatrix coupling_matrix(const DriveSpec& drive) {
  detail::check_drive(drive);
  RMatrix j = drive.alpha[3] * drive.alpha[3] * detail::mode_sum(drive);
  j.diagonal().setZero();
  return j;
}

/// b_i = 2 alpha0 alpha3 sum_j (mode sum)_ij, self-term j = i included.
inline std::vector<double> bias_field(const DriveSpec& drive) {
  detail::check_drive(drive);
  const RMatrix s = detail::mode_sum(drive);
  std::vector<double> b(drive.ions());
  for (std::size_t i = 0; i < b.size(); ++i)
    b[i] = 2.0 * drive.alpha[0] * drive.alpha[3] * s.row(static_cast<Eigen::Index>(i)).sum();
  return b;
}

/// Closed form for a uniform drive when only the centre-of-mass mode has a
/// nonzero ion sum: 2 Omega^2 N alpha0 alpha3 eta_com^2 / delta_com.
inline double com_bias(const DriveSpec& drive, std::size_t com_mode) {
  detail::check_drive(drive);
  const auto m = static_cast<Eigen::Index>(com_mode);
  const double om = drive.rabi.at(0), eta = drive.eta(m, 0);
  return 2.0 * om * om * static_cast<double>(drive.ions()) * drive.alpha[0] * drive.alpha[3] * eta * eta /
         drive.detunings.at(com_mode);
}

inline IsingModel model_from_drive(const DriveSpec& drive, std::vector<double> bx, bool compensate = true) {
  if (bx.size() != drive.ions()) throw DomainError("ising: need one field per ion");
  IsingModel m{coupling_matrix(drive), std::move(bx), bias_field(drive), compensate};
  return m;
}

// ---------------------------------------------------------------------------
// Spin-space matrices

inline hilbert::SpaceSpec spin_space(std::size_t n) {
  hilbert::SpaceSpec s;
  s.n_spins = n;
  return s;
}

inline CMatrix spin_operator(std::size_t n, std::size_t site, hilbert::SpinOp op) {
  return hilbert::embed(spin_space(n), site, hilbert::spin_matrix({op, {}}));
}

inline CMatrix field_hamiltonian(const std::vector<double>& bx) {
  const std::size_t n = bx.size();
  const auto d = static_cast<Eigen::Index>(std::size_t{1} << n);
  CMatrix h = CMatrix::Zero(d, d);
  for (std::size_t i = 0; i < n; ++i) h += bx[i] * spin_operator(n, i, hilbert::SpinOp::X);
  return h;
}

/// Diagonal of sum_{i != j} J_ij sz_i sz_j + sum_i b_i sz_i.
inline RVector ising_diagonal(const RMatrix& j, const std::vector<double>& bias) {
  const auto n = static_cast<std::size_t>(j.rows());
  const auto d = static_cast<Eigen::Index>(std::size_t{1} << n);
  RVector diag = RVector::Zero(d);
  for (Eigen::Index s = 0; s < d; ++s) {
    double e = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      const double za = (s >> a) & 1 ? 1.0 : -1.0;
      if (!bias.empty()) e += bias[a] * za;
      for (std::size_t b = 0; b < n; ++b)
        if (a != b) e += j(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) * za * ((s >> b) & 1 ? 1.0 : -1.0);
    }
    diag[s] = e;
  }
  return diag;
}

/// Spin-space matrix; the bias enters only when `with_bias` is set.
inline CMatrix effective_hamiltonian(const IsingModel& model, bool with_bias = true) {
  model.validate();
  CMatrix h = field_hamiltonian(model.bx);
  const RVector diag = ising_diagonal(model.J, with_bias ? model.net_bias() : std::vector<double>{});
  h.diagonal() += diag.cast<cplx>();
  return h;
}

inline CMatrix field_part(const IsingModel& m) { return field_hamiltonian(m.bx); }

inline CMatrix coupling_part(const IsingModel& m) {
  return ising_diagonal(m.J, {}).cast<cplx>().asDiagonal();
}

/// Product of sx over all spins.
inline CMatrix parity_x(std::size_t n) {
  const auto d = static_cast<Eigen::Index>(std::size_t{1} << n);
  CMatrix p = CMatrix::Zero(d, d);
  for (Eigen::Index s = 0; s < d; ++s) p(d - 1 - s, s) = 1.0;
  return p;
}

/// (|down...down> + e^{i chi} |up...up>)/sqrt(2)
inline CVector ghz_state(std::size_t n, double chi = 0.0) {
  const auto d = static_cast<Eigen::Index>(std::size_t{1} << n);
  CVector v = CVector::Zero(d);
  v[0] = 1.0 / std::sqrt(2.0);
  v[d - 1] = std::exp(I * chi) / std::sqrt(2.0);
  return v;
}

/// R(pi/2, pi/2) applied to |down...down>.
inline CVector all_plus_x(std::size_t n) {
  SimState s = SimState::basis(spin_space(n), 0, {});
  drive::apply_rotation(s, pi / 2, pi / 2);
  return s.amplitudes;
}

struct Spectrum {
  RVector energies;
  CMatrix vectors;  // columns, full spin space
};

/// Eigenpairs of h, restricted to the sx-parity sector `sector` (+1 / -1) when nonzero.
inline Spectrum spectrum(const CMatrix& h, int sector = 0) {
  if (sector == 0) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(h);
    return {es.eigenvalues(), es.eigenvectors()};
  }
  const Eigen::Index d = h.rows();
  CMatrix q = CMatrix::Zero(d, d / 2);
  for (Eigen::Index s = 0; s < d / 2; ++s) {
    q(s, s) = 1.0 / std::sqrt(2.0);
    q(d - 1 - s, s) = static_cast<double>(sector) / std::sqrt(2.0);
  }
  Eigen::SelfAdjointEigenSolver<CMatrix> es(q.adjoint() * h * q);
  return {es.eigenvalues(), q * es.eigenvectors()};
}

// ---------------------------------------------------------------------------
// Ramps

struct Profile {
  enum class Shape { Linear, Exponential, Constant };
  Shape shape = Shape::Constant;
  double start = 1.0;
  double end = 1.0;
  double tau = 0.0;  // exponential time constant (s); > 0 saturating, < 0 accelerating

  double at(double t, double total) const {
    switch (shape) {
      case Shape::Constant:
        return start;
      case Shape::Linear:
        return start + (end - start) * (t / total);
      case Shape::Exponential: {
        const double f = std::expm1(-t / tau) / std::expm1(-total / tau);
        return start + (end - start) * f;
      }
    }
    return start;
  }

  void validate() const {
    if (shape == Shape::Exponential && !(tau != 0.0 && std::isfinite(tau)))
      throw DomainError("ramp: exponential profile needs a finite nonzero tau");
    if (!std::isfinite(start) || !std::isfinite(end)) throw DomainError("ramp: profile values must be finite");
  }
};

inline const char* shape_name(Profile::Shape s) {
  switch (s) {
    case Profile::Shape::Linear:
      return "linear";
    case Profile::Shape::Exponential:
      return "exponential";
    case Profile::Shape::Constant:
      return "constant";
  }
  return "";
}

/// Scales applied to the field and to J of a reference model.
struct RampSchedule {
  double total = 0.0;
  Profile field;
  Profile coupling;
  std::size_t samples = 256;  // trajectory points after t = 0

  void validate() const {
    if (!(total > 0.0)) throw DomainError("ramp: total time must be positive");
    if (samples == 0) throw DomainError("ramp: need at least one sample");
    field.validate();
    coupling.validate();
  }

  static RampSchedule coupling_ramp(double total, std::size_t samples = 256) {
    RampSchedule r;
    r.total = total;
    r.samples = samples;
    r.coupling = {Profile::Shape::Linear, 0.0, 1.0, 0.0};
    return r;
  }

  IsingModel at(const IsingModel& ref, double t) const {
    IsingModel m = ref;
    const double fb = field.at(t, total), fj = coupling.at(t, total);
    for (auto& b : m.bx) b *= fb;
    m.J *= fj;
    for (auto& b : m.bias) b *= fj;
    return m;
  }
};

struct RampSample {
  double t = 0.0;
  double magnetization_z = 0.0;  // mean <sz>
  double magnetization_x = 0.0;  // mean <sx>
  std::vector<double> populations;
  double ghz_fidelity = 0.0;     // (P_0 + P_last)/2 + |rho_0,last|; > 1/2 witnesses entanglement
};

struct GapSample {
  double t = 0.0;
  double gap = 0.0;
};

struct RampResult {
  SimState state;
  std::vector<RampSample> trajectory;
  std::vector<GapSample> gaps;
  double min_gap = 0.0;
  double ground_overlap = 0.0;  // with the ground state of H(T), within the parity sector if conserved
  int sector = 0;
  std::vector<std::string> warnings;
};

struct RampOptions {
  std::size_t snapshot_every = 32;
  hilbert::PropagateOptions propagate;
};

inline RampSample sample_state(const SimState& s, double t) {
  const std::size_t n = s.space.n_spins;
  RampSample r;
  r.t = t;
  r.populations = hilbert::measure_populations(s);
  const CMatrix rho = hilbert::reduced_spin_density(s);
  for (std::size_t i = 0; i < n; ++i) {
    r.magnetization_z += (rho * spin_operator(n, i, hilbert::SpinOp::Z)).trace().real() / static_cast<double>(n);
    r.magnetization_x += (rho * spin_operator(n, i, hilbert::SpinOp::X)).trace().real() / static_cast<double>(n);
  }
  const Eigen::Index last = rho.rows() - 1;
  r.ghz_fidelity = 0.5 * (rho(0, 0).real() + rho(last, last).real()) + std::abs(rho(0, last));
  return r;
}

/// Integrate the spin-only model along the schedule.
inline RampResult adiabatic_run(const IsingModel& model, const RampSchedule& schedule, const CVector& initial,
                                const RampOptions& opts = {}) {
  model.validate();
  schedule.validate();
  const std::size_t n = model.ions();
  const auto space = spin_space(n);
  RampResult r{SimState::from_spins(space, initial), {}, {}, 0.0, 0.0, 0, {}};
  if (std::abs(r.state.amplitudes.norm() - 1.0) > 1e-12) throw DomainError("ramp: initial state is not normalized");

  const CMatrix hb = field_part(model), hj = coupling_part(model);
  const RVector bias = ising_diagonal(RMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)),
                                      model.net_bias());
  const bool has_bias = bias.cwiseAbs().maxCoeff() > 0.0;
  auto h_at = [&](double t) -> CMatrix {
    const double fb = schedule.field.at(t, schedule.total), fj = schedule.coupling.at(t, schedule.total);
    CMatrix h = fb * hb + fj * hj;
    if (has_bias) h.diagonal() += (fj * bias).cast<cplx>();
    return h;
  };

  const CMatrix px = parity_x(n);
  const cplx p = r.state.amplitudes.dot(px * r.state.amplitudes);
  if (!has_bias && std::abs(std::abs(p) - 1.0) < 1e-9) r.sector = p.real() > 0 ? 1 : -1;

  auto snapshot = [&](double t) {
    const Spectrum sp = spectrum(h_at(t), r.sector);
    const double g = sp.energies.size() > 1 ? sp.energies[1] - sp.energies[0] : 0.0;
    r.gaps.push_back({t, g});
  };

  hilbert::DenseGenerator gen(space.dimension(), h_at);
  r.trajectory.push_back(sample_state(r.state, 0.0));
  snapshot(0.0);
  for (std::size_t k = 1; k <= schedule.samples; ++k) {
    const double t0 = schedule.total * static_cast<double>(k - 1) / static_cast<double>(schedule.samples);
    const double t1 = schedule.total * static_cast<double>(k) / static_cast<double>(schedule.samples);
    r.state = hilbert::propagate(gen, r.state, t0, t1, opts.propagate);
    r.trajectory.push_back(sample_state(r.state, t1));
    if (k % opts.snapshot_every == 0 || k == schedule.samples) snapshot(t1);
  }
  r.min_gap = r.gaps.front().gap;
  for (const auto& g : r.gaps) r.min_gap = std::min(r.min_gap, g.gap);

  const Spectrum final_sp = spectrum(h_at(schedule.total), r.sector);
  r.ground_overlap = hilbert::fidelity(final_sp.vectors.col(0), r.state.amplitudes);
  if (final_sp.energies.size() > 1 && final_sp.energies[1] - final_sp.energies[0] < 1e-9 * (1.0 + std::abs(final_sp.energies[0])))
    r.warnings.push_back("final ground state is degenerate; ground-state overlap refers to one member of the manifold");
  if (r.min_gap > 0.0 && schedule.total * r.min_gap < 10.0) {
    std::ostringstream msg;
    msg << "ramp may not be adiabatic: T * min gap = " << schedule.total * r.min_gap;
    r.warnings.push_back(msg.str());
  }
  return r;
}

/// Ramp of J from 0 to its final value spending `time_scale` per e-fold of
/// |J|/|B| above `onset`: J(t) ~ onset (e^{t/time_scale} - 1). Final ratios
/// below e * onset use a linear ramp of duration time_scale.
inline RampSchedule log_uniform_ramp(double ratio, double time_scale, double onset = 0.1,
                                     std::size_t samples = 64) {
  if (!(time_scale > 0.0) || !(onset > 0.0)) throw DomainError("ramp: time scale and onset must be positive");
  const double efolds = std::log1p(ratio / onset);
  if (efolds <= 1.0) return RampSchedule::coupling_ramp(time_scale, samples);
  RampSchedule r;
  r.total = time_scale * efolds;
  r.samples = samples;
  r.coupling = {Profile::Shape::Exponential, 0.0, 1.0, -time_scale};
  return r;
}

/// P(down...down) + P(up...up) after a log-uniform ramp to J = -ratio |B|
/// on all pairs at constant field B (< 0), starting from |+x...+x>.
inline std::vector<double> crossover_curve(std::size_t n, const std::vector<double>& ratios, double field,
                                           double time_scale, std::size_t samples = 64, const RampOptions& opts = {}) {
  if (n < 2) throw DomainError("crossover: need at least two spins");
  std::vector<double> out;
  out.reserve(ratios.size());
  const CVector psi0 = all_plus_x(n);
  for (double r : ratios) {
    if (r < 0.0) throw DomainError("crossover: ratio must be non-negative");
    const IsingModel m = IsingModel::uniform(n, -r * std::abs(field), field);
    const RampResult res = adiabatic_run(m, log_uniform_ramp(r, time_scale, 0.1, samples), psi0, opts);
    const auto& pop = res.trajectory.back().populations;
    out.push_back(pop.front() + pop.back());
  }
  return out;
}

/// Largest finite-difference slope of values against log(ratio).
inline double max_log_slope(const std::vector<double>& ratios, const std::vector<double>& values) {
  double best = 0.0;
  for (std::size_t k = 1; k < ratios.size(); ++k) {
    if (!(ratios[k - 1] > 0.0)) continue;
    best = std::max(best, (values[k] - values[k - 1]) / std::log(ratios[k] / ratios[k - 1]));
  }
  return best;
}

// ---------------------------------------------------------------------------
// Dipolar decay

struct PowerLaw {
  double exponent = 0.0;  // |J| ~ A / d^exponent
  double prefactor = 0.0;
  double r_squared = 0.0;
};

/// Least squares of log|J_ij| against log|i - j| over all pairs i < j.
inline PowerLaw fit_power_law(const RMatrix& j) {
  std::vector<double> x, y;
  for (Eigen::Index a = 0; a < j.rows(); ++a)
    for (Eigen::Index b = a + 1; b < j.cols(); ++b) {
      if (j(a, b) == 0.0) continue;
      x.push_back(std::log(static_cast<double>(b - a)));
      y.push_back(std::log(std::abs(j(a, b))));
    }
  if (x.size() < 2) throw DomainError("power law: need at least two nonzero couplings");
  const auto n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += x[k] / n;
    my += y[k] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxy += (x[k] - mx) * (y[k] - my);
    sxx += (x[k] - mx) * (x[k] - mx);
    syy += (y[k] - my) * (y[k] - my);
  }
  if (sxx == 0.0) throw DomainError("power law: all pairs at the same distance");
  const double slope = sxy / sxx;
  PowerLaw p;
  p.exponent = -slope;
  p.prefactor = std::exp(my - slope * mx);
  p.r_squared = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  return p;
}

// ---------------------------------------------------------------------------
// Full spin-phonon model vs effective model

/// Time-independent spin-phonon Hamiltonian in the frame rotating with each
/// mode at its detuning:
///   H = -sum_m delta_m a_m^dag a_m + sum_{i,m} (xi_im a_m^dag kappa_i + h.c.) + sum_i B_i sx_i,
/// xi_im = i Omega_i eta_mi e^{i phi_i}.
inline hilbert::TermGenerator spin_phonon_generator(const hilbert::SpaceSpec& space, const DriveSpec& drive,
                                                    const std::vector<double>& bx) {
  using hilbert::LocalOp;
  detail::check_drive(drive);
  if (space.n_spins != drive.ions() || space.modes.size() != drive.modes())
    throw DomainError("spin-phonon model: drive does not match the space");
  if (bx.size() != drive.ions()) throw DomainError("spin-phonon model: need one field per ion");
  hilbert::TermGenerator gen(space);
  const std::size_t n = space.n_spins;
  for (std::size_t m = 0; m < drive.modes(); ++m) {
    const int n_max = space.modes[m].n_max;
    const double delta = drive.detunings[m];
    gen.add({nullptr, {LocalOp::from_matrix(n + m, -delta * hilbert::mode_matrix({hilbert::ModeOp::Number, 0.0}, n_max))}});
    const CMatrix raise = hilbert::mode_matrix({hilbert::ModeOp::Raise, 0.0}, n_max);
    for (std::size_t i = 0; i < n; ++i) {
      const double eta = drive.eta(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(i));
      if (eta == 0.0 || drive.rabi[i] == 0.0) continue;
      const cplx xi = I * drive.rabi[i] * eta * std::exp(I * drive.phase[i]);
      const Eigen::Matrix2cd kappa = hilbert::spin_matrix({hilbert::SpinOp::Kappa, drive.alpha});
      gen.add({nullptr, {LocalOp::from_matrix(n + m, xi * raise), LocalOp::from_matrix(i, kappa)}});
      gen.add({nullptr, {LocalOp::from_matrix(n + m, std::conj(xi) * raise.adjoint()), LocalOp::from_matrix(i, kappa)}});
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    if (bx[i] != 0.0) gen.add({nullptr, {LocalOp::from_matrix(i, bx[i] * hilbert::spin_matrix({hilbert::SpinOp::X, {}}))}});
  return gen;
}

struct ComparisonSample {
  double t = 0.0;
  double infidelity = 0.0;           // 1 - <psi_eff| rho_spin |psi_eff>
  double entropy = 0.0;              // spin-motion entanglement entropy of the full state
  double population_difference = 0.0;  // max |P_full - P_eff| in the sz basis
};

struct ComparisonReport {
  std::vector<ComparisonSample> samples;
  double endpoint_infidelity = 0.0;
  double max_entropy = 0.0;
  double coupling_parameter = 0.0;  // max |Omega eta alpha / delta|
  double max_leakage = 0.0;
  std::vector<std::string> warnings;
};

/// Evolve |initial spins> x |0...0> under the full model and the spin-only
/// model (bias not compensated, as in the full model) for `total`, sampling
/// both at `samples` evenly spaced times.
inline ComparisonReport exact_vs_effective(const DriveSpec& drive, const std::vector<double>& bx,
                                           const CVector& initial, double total, int n_max,
                                           std::size_t samples = 16, const hilbert::PropagateOptions& opts = {}) {
  detail::check_drive(drive);
  if (!(total > 0.0)) throw DomainError("exact_vs_effective: total time must be positive");
  if (samples == 0) throw DomainError("exact_vs_effective: need at least one sample");
  hilbert::SpaceSpec full;
  full.n_spins = drive.ions();
  for (std::size_t m = 0; m < drive.modes(); ++m)
    full.modes.push_back({"m" + std::to_string(m), drive.mode_frequencies[m], n_max});
  const auto gen = spin_phonon_generator(full, drive, bx);

  IsingModel model = model_from_drive(drive, bx, false);
  const CMatrix h_eff = effective_hamiltonian(model, true);
  const hilbert::DenseGenerator eff_gen(h_eff.rows(), [h_eff](double) { return h_eff; });

  ComparisonReport rep;
  const double a = std::max(std::abs(drive.alpha[0] + drive.alpha[3]), std::abs(drive.alpha[0] - drive.alpha[3]));
  for (std::size_t m = 0; m < drive.modes(); ++m)
    for (std::size_t i = 0; i < drive.ions(); ++i)
      rep.coupling_parameter =
          std::max(rep.coupling_parameter, std::abs(drive.rabi[i] * drive.eta(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(i)) *
                                                    a / drive.detunings[m]));

  SimState psi = SimState::from_spins(full, initial);
  SimState phi = SimState::from_spins(spin_space(drive.ions()), initial);
  hilbert::PropagateOptions eff_opts = opts;
  for (std::size_t k = 1; k <= samples; ++k) {
    const double t0 = total * static_cast<double>(k - 1) / static_cast<double>(samples);
    const double t1 = total * static_cast<double>(k) / static_cast<double>(samples);
    psi = hilbert::propagate(gen, psi, t0, t1, opts);
    phi = hilbert::propagate(eff_gen, phi, t0, t1, eff_opts);
    const CMatrix rho = hilbert::reduced_spin_density(psi);
    ComparisonSample s;
    s.t = t1;
    s.infidelity = std::max(0.0, 1.0 - (phi.amplitudes.adjoint() * rho * phi.amplitudes)(0, 0).real());
    s.entropy = hilbert::entropy(rho);
    for (Eigen::Index c = 0; c < rho.rows(); ++c)
      s.population_difference = std::max(s.population_difference, std::abs(rho(c, c).real() - std::norm(phi.amplitudes[c])));
    rep.max_entropy = std::max(rep.max_entropy, s.entropy);
    rep.samples.push_back(s);
  }
  rep.endpoint_infidelity = rep.samples.back().infidelity;
  rep.max_leakage = psi.diagnostics.max_leakage;
  if (rep.coupling_parameter > 0.3) {
    std::ostringstream msg;
    msg << "Omega eta alpha / delta = " << rep.coupling_parameter << " is not small; effective model is unreliable";
    rep.warnings.push_back(msg.str());
  }
  return rep;
}

/// Ratio of endpoint infidelities when every Rabi frequency is halved.
inline double infidelity_scaling(const DriveSpec& drive, const std::vector<double>& bx, const CVector& initial,
                                 double total, int n_max, const hilbert::PropagateOptions& opts = {}) {
  DriveSpec half = drive;
  for (auto& r : half.rabi) r *= 0.5;
  const double a = exact_vs_effective(drive, bx, initial, total, n_max, 1, opts).endpoint_infidelity;
  const double b = exact_vs_effective(half, bx, initial, total, n_max, 1, opts).endpoint_infidelity;
  return a / b;
}

}  // namespace trapsim::ising
