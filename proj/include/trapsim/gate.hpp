#pragma once

// Geometric phase gates. The Lamb-Dicke z-branch drive
//   H = sum_{i,m} i Omega_i eta_mi e^{i(phi_i - delta_m t)} a_m^dag kappa_i + h.c.
// is diagonal in the spin z basis, so for each spin configuration s the
// propagator over [t0, t1] is a product of mode displacements times a phase:
//   U_s = prod_m D_m(lambda_ms) e^{i Theta_s}.
// Theta_s splits into sigma_z sigma_z (geometric), sigma_z (dynamic) and
// identity (global) parts.

#include "trapsim/core.hpp"
#include "trapsim/drive.hpp"
#include "trapsim/hilbert.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace trapsim::gate {

using drive::DriveSpec;
using hilbert::SimState;

/// Per spin configuration (index = spin bits) and per mode.
struct PhaseLedger {
  std::size_t n_spins = 0;
  std::size_t n_modes = 0;
  std::vector<std::vector<double>> geometric;  // [config][mode]
  std::vector<std::vector<double>> dynamic;
  std::vector<std::vector<double>> global;
  std::vector<std::vector<cplx>> displacement;
  std::vector<std::string> warnings;

  static PhaseLedger empty(std::size_t n_spins, std::size_t n_modes) {
    PhaseLedger l;
    l.n_spins = n_spins;
    l.n_modes = n_modes;
    const std::size_t c = std::size_t{1} << n_spins;
    l.geometric.assign(c, std::vector<double>(n_modes, 0.0));
    l.dynamic = l.global = l.geometric;
    l.displacement.assign(c, std::vector<cplx>(n_modes, 0.0));
    return l;
  }

  std::size_t configs() const { return geometric.size(); }

  double geometric_total(std::size_t s) const { return sum(geometric[s]); }
  double dynamic_total(std::size_t s) const { return sum(dynamic[s]); }
  double global_total(std::size_t s) const { return sum(global[s]); }
  double phase(std::size_t s) const { return geometric_total(s) + dynamic_total(s) + global_total(s); }

  double max_displacement() const {
    double r = 0.0;
    for (const auto& row : displacement)
      for (auto v : row) r = std::max(r, std::abs(v));
    return r;
  }

 private:
  static double sum(const std::vector<double>& v) {
    double r = 0.0;
    for (double x : v) r += x;
    return r;
  }
};

namespace detail {

/// (e^{-i x} - 1) / delta with x = delta dt, series near x = 0.
inline cplx circle_factor(double delta, double dt) {
  const double x = delta * dt;
  if (std::abs(x) < 1e-4) {
    const cplx ix = I * x;
    return -I * dt * (1.0 - ix / 2.0 + ix * ix / 6.0 - ix * ix * ix / 24.0);
  }
  return (std::exp(-I * x) - 1.0) / delta;
}

/// (x - sin x) / delta^2 with x = delta dt, series near x = 0.
inline double area_factor(double delta, double dt) {
  const double x = delta * dt;
  if (std::abs(x) < 1e-3) {
    const double x2 = x * x;
    return dt * dt * x * (1.0 / 6.0 - x2 / 120.0 + x2 * x2 / 5040.0);
  }
  return (x - std::sin(x)) / (delta * delta);
}

inline double sz(std::uint64_t s, std::size_t i) { return (s >> i) & 1U ? 1.0 : -1.0; }

}  // namespace detail

/// Closed-form propagator of the Lamb-Dicke z-branch drive from t0 to t1.
inline PhaseLedger analytic_propagator(const DriveSpec& drive, double t0, double t1) {
  drive.validate();
  if (drive.branch != drive::Branch::Z)
    throw DomainError("analytic_propagator: drive must be on the z-branch");
  const std::size_t n = drive.ions(), nm = drive.modes();
  PhaseLedger l = PhaseLedger::empty(n, nm);
  const double dt = t1 - t0;
  const double a0 = drive.alpha[0], a3 = drive.alpha[3];
  for (std::size_t m = 0; m < nm; ++m) {
    const double delta = drive.detunings[m];
    if (delta == 0.0) l.warnings.push_back("mode " + std::to_string(m) + " driven on resonance: straight-line displacement");
    const cplx circ = detail::circle_factor(delta, dt) * std::exp(-I * delta * t0);
    const double area = detail::area_factor(delta, dt);
    const auto mm = static_cast<Eigen::Index>(m);
    // A_ij = Omega_i Omega_j eta_mi eta_mj cos(phi_i - phi_j)
    std::vector<double> a(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        a[i * n + j] = drive.rabi[i] * drive.rabi[j] * drive.eta(mm, static_cast<Eigen::Index>(i)) *
                       drive.eta(mm, static_cast<Eigen::Index>(j)) * std::cos(drive.phase[i] - drive.phase[j]);
    for (std::size_t s = 0; s < l.configs(); ++s) {
      cplx lam = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double kappa = a0 + a3 * detail::sz(s, i);
        lam += I * drive.rabi[i] * drive.eta(mm, static_cast<Eigen::Index>(i)) * circ *
               std::exp(I * drive.phase[i]) * kappa;
      }
      double zz = 0.0, z = 0.0, one = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double c = a[i * n + j];
          zz += c * detail::sz(s, i) * detail::sz(s, j);
          z += c * (detail::sz(s, i) + detail::sz(s, j));
          one += c;
        }
      l.displacement[s][m] = lam;
      l.geometric[s][m] = -area * a3 * a3 * zz;
      l.dynamic[s][m] = -area * a0 * a3 * z;
      l.global[s][m] = -area * a0 * a0 * one;
    }
  }
  return l;
}

/// Apply the factored propagator of a ledger to a state (modes of the state
/// are the modes of the drive).
inline void apply_ledger(SimState& state, const PhaseLedger& l) {
  const auto& space = state.space;
  if (space.n_spins != l.n_spins || space.modes.size() != l.n_modes)
    throw DomainError("apply_ledger: ledger does not match the state space");
  const std::size_t sd = space.spin_dimension();
  const auto rest = static_cast<Eigen::Index>(space.dimension() / sd);
  Eigen::Map<CMatrix> psi(state.amplitudes.data(), static_cast<Eigen::Index>(sd), rest);
  for (std::size_t s = 0; s < sd; ++s) {
    hilbert::SpaceSpec motion = space;
    motion.n_spins = 0;
    SimState part{motion, psi.row(static_cast<Eigen::Index>(s)).transpose(), {}};
    for (std::size_t m = 0; m < l.n_modes; ++m) {
      const cplx lam = l.displacement[s][m];
      if (lam == cplx(0.0)) continue;
      hilbert::apply_local(part, m, hilbert::displacement_matrix(space.modes[m].n_max, lam));
    }
    psi.row(static_cast<Eigen::Index>(s)) = std::exp(I * l.phase(s)) * part.amplitudes.transpose();
  }
}

// ---------------------------------------------------------------------------
// Pulse programs

struct Rotation {
  double theta = 0.0;
  double phi = 0.0;
  std::vector<std::size_t> ions;  // empty: all
};

struct Displacement {
  DriveSpec drive;
  double duration = 0.0;
};

struct Idle {
  double duration = 0.0;
};

using Segment = std::variant<Rotation, Displacement, Idle>;

struct PulseProgram {
  std::vector<Segment> segments;

  void validate() const {
    for (const auto& seg : segments) {
      if (const auto* d = std::get_if<Displacement>(&seg)) {
        if (!(d->duration >= 0.0)) throw DomainError("program: negative duration");
        d->drive.validate();
      } else if (const auto* i = std::get_if<Idle>(&seg)) {
        if (!(i->duration >= 0.0)) throw DomainError("program: negative duration");
      }
    }
  }

  /// Sum of displacement durations (rotations and idle gaps excluded).
  double gate_time() const {
    double t = 0.0;
    for (const auto& seg : segments)
      if (const auto* d = std::get_if<Displacement>(&seg)) t += d->duration;
    return t;
  }
};

enum class Engine { Analytic, Integrate, Both };

inline const char* engine_name(Engine e) {
  switch (e) {
    case Engine::Analytic:
      return "analytic";
    case Engine::Integrate:
      return "integrate";
    case Engine::Both:
      return "both";
  }
  return "";
}

struct ProgramOptions {
  bool lamb_dicke = true;  // Hamiltonian used by the integrating engine
  hilbert::PropagateOptions propagate;
};

struct ProgramResult {
  SimState state;
  std::optional<SimState> integrated;        // engine = both
  std::optional<PhaseLedger> ledger;         // indexed by the configuration before the first displacement
  std::optional<double> engine_overlap;      // |<analytic|integrated>|^2
  double gate_time = 0.0;
  double clock = 0.0;
  std::vector<std::string> warnings;
};

namespace detail {

/// Spin configurations reached from s by a perfect pi pulse on the listed ions.
inline std::uint64_t flip(std::uint64_t s, std::size_t n, const std::vector<std::size_t>& ions) {
  if (ions.empty()) return s ^ ((std::uint64_t{1} << n) - 1);
  for (auto i : ions) s ^= std::uint64_t{1} << i;
  return s;
}

}  // namespace detail

/// Run the segments in order. The drive clock starts at 0 and advances with
/// displacement and idle segments; rotations are instantaneous.
///
/// The ledger accumulates, per initial spin configuration s, the phases of the
/// configuration s is mapped to by the pi pulses applied so far. Rotations
/// other than pi pulses between two displacements break this bookkeeping and
/// are reported as a warning.
inline ProgramResult run_program(const PulseProgram& program, const SimState& initial, Engine engine,
                                 const ProgramOptions& opts = {}) {
  program.validate();
  ProgramResult r{initial, std::nullopt, std::nullopt, std::nullopt, program.gate_time(), 0.0, {}};
  const bool analytic = engine != Engine::Integrate;
  const bool integrate = engine != Engine::Analytic;
  SimState a = initial;
  SimState b = initial;
  const std::size_t n = initial.space.n_spins;
  std::vector<std::uint64_t> frame(std::size_t{1} << n);
  for (std::size_t s = 0; s < frame.size(); ++s) frame[s] = s;
  bool seen_displacement = false, tracking = true;
  double t = 0.0;

  for (const auto& seg : program.segments) {
    if (const auto* rot = std::get_if<Rotation>(&seg)) {
      if (analytic) drive::apply_rotation(a, rot->theta, rot->phi, rot->ions);
      if (integrate) drive::apply_rotation(b, rot->theta, rot->phi, rot->ions);
      if (seen_displacement) {
        const double turns = rot->theta / pi;
        const double nearest = std::round(turns);
        if (std::abs(turns - nearest) < 1e-12) {
          if (static_cast<long long>(nearest) % 2 != 0)
            for (auto& f : frame) f = detail::flip(f, n, rot->ions);
        } else {
          tracking = false;
        }
      }
    } else if (const auto* idle = std::get_if<Idle>(&seg)) {
      t += idle->duration;
    } else if (const auto* d = std::get_if<Displacement>(&seg)) {
      if (d->drive.branch != drive::Branch::Z && analytic)
        throw DomainError("run_program: the analytic engine needs z-branch drives");
      if (d->drive.ions() != n || d->drive.modes() != initial.space.modes.size())
        throw DomainError("run_program: drive does not match the state space");
      if (!tracking) {
        r.warnings.push_back("ledger: rotation other than a pi pulse between displacements; ledger is not comparable across segments");
        tracking = true;
      }
      if (analytic) {
        const PhaseLedger seg_ledger = analytic_propagator(d->drive, t, t + d->duration);
        apply_ledger(a, seg_ledger);
        if (!r.ledger) r.ledger = PhaseLedger::empty(n, d->drive.modes());
        for (std::size_t s = 0; s < frame.size(); ++s) {
          const std::uint64_t c = frame[s];
          for (std::size_t m = 0; m < seg_ledger.n_modes; ++m) {
            r.ledger->geometric[s][m] += seg_ledger.geometric[c][m];
            r.ledger->dynamic[s][m] += seg_ledger.dynamic[c][m];
            r.ledger->global[s][m] += seg_ledger.global[c][m];
            r.ledger->displacement[s][m] += seg_ledger.displacement[c][m];
          }
        }
        for (const auto& w : seg_ledger.warnings) r.warnings.push_back(w);
      }
      if (integrate) {
        const auto gen = drive::branch_generator(b.space, d->drive, opts.lamb_dicke);
        b = hilbert::propagate(gen, b, t, t + d->duration, opts.propagate);
      }
      seen_displacement = true;
      t += d->duration;
    }
  }
  r.clock = t;
  if (engine == Engine::Integrate) {
    r.state = b;
  } else {
    r.state = a;
    if (engine == Engine::Both) {
      r.engine_overlap = hilbert::fidelity(a.amplitudes, b.amplitudes);
      r.integrated = b;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Readout

/// Bell state (|down down> + i |up up>)/sqrt(2) on the first two spins.
inline CVector bell_target(std::size_t n_spins = 2) {
  CVector v = CVector::Zero(static_cast<Eigen::Index>(std::size_t{1} << n_spins));
  v[0] = 1.0 / std::sqrt(2.0);
  v[3] = I / std::sqrt(2.0);
  return v;
}

/// <target| rho_spin |target>
inline double spin_fidelity(const SimState& state, const CVector& target) {
  const CMatrix rho = hilbert::reduced_spin_density(state);
  return (target.adjoint() * rho * target)(0, 0).real();
}

/// For each analysis phase: apply R(pi/2, phi) to spins 0 and 1, return <sz sz>.
inline std::vector<double> parity_scan(const SimState& state, const std::vector<double>& phases) {
  if (state.space.n_spins < 2) throw DomainError("parity_scan: need two spins");
  std::vector<double> out;
  out.reserve(phases.size());
  for (double phi : phases) {
    SimState s = state;
    drive::apply_rotation(s, pi / 2, phi, {0, 1});
    const CMatrix rho = hilbert::reduced_density(s, {0, 1});
    out.push_back((rho(0, 0) + rho(3, 3) - rho(1, 1) - rho(2, 2)).real());
  }
  return out;
}

struct Fringe {
  double offset = 0.0;
  double contrast = 0.0;  // amplitude of the cos(2 phi) component
  double phase = 0.0;
};

/// Least-squares fit of values ~ offset + c cos(2 phi + p).
inline Fringe fit_fringe(const std::vector<double>& phases, const std::vector<double>& values) {
  if (phases.size() != values.size() || phases.size() < 3)
    throw DomainError("fit_fringe: need at least three matching samples");
  Eigen::MatrixXd a(static_cast<Eigen::Index>(phases.size()), 3);
  Eigen::VectorXd y(static_cast<Eigen::Index>(phases.size()));
  for (std::size_t k = 0; k < phases.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    a(kk, 0) = 1.0;
    a(kk, 1) = std::cos(2 * phases[k]);
    a(kk, 2) = std::sin(2 * phases[k]);
    y[kk] = values[k];
  }
  const Eigen::Vector3d c = a.colPivHouseholderQr().solve(y);
  return {c[0], std::hypot(c[1], c[2]), std::atan2(-c[2], c[1])};
}

/// (P_dd + P_uu)/2 + C/2, the usual Bell-fidelity estimate from populations and parity contrast.
inline double fidelity_estimate(const SimState& state, double contrast) {
  const CMatrix rho = hilbert::reduced_density(state, {0, 1});
  return 0.5 * (rho(0, 0).real() + rho(3, 3).real()) + 0.5 * contrast;
}

// ---------------------------------------------------------------------------
// Commensurate two-mode gate check

struct CommensurateReport {
  double gate_time = 0.0;
  double detuning_ratio = 0.0;              // delta_b / delta_a
  bool commensurate = false;
  double max_residual_displacement = 0.0;
  double geometric_a = 0.0;                  // mode a, configuration du
  double geometric_b = 0.0;                  // mode b, configuration dd
  double differential = 0.0;                 // geometric_a - geometric_b
  double dynamic_b = 0.0;                    // mode b, configuration dd
  double dynamic_ratio = 0.0;                // |dynamic_b / geometric_b|
  std::vector<std::string> warnings;
};

/// Two-ion gate using two modes at once: mode a (stretch-like, sets
/// T_g = |2 pi / delta_a|) and mode b (centre-of-mass-like).
inline CommensurateReport commensurate_phase_check(const DriveSpec& drive, std::size_t mode_a,
                                                   std::size_t mode_b) {
  drive.validate();
  if (drive.ions() != 2) throw DomainError("commensurate_phase_check: needs two ions");
  CommensurateReport r;
  const double da = drive.detunings.at(mode_a), db = drive.detunings.at(mode_b);
  r.gate_time = std::abs(2 * pi / da);
  r.detuning_ratio = db / da;
  r.commensurate = std::abs(r.detuning_ratio - std::round(r.detuning_ratio)) < 1e-9;
  const PhaseLedger l = analytic_propagator(drive, 0.0, r.gate_time);
  r.max_residual_displacement = l.max_displacement();
  if (!r.commensurate || r.max_residual_displacement > 1e-10) {
    std::ostringstream msg;
    msg << "closure failure: detuning ratio " << r.detuning_ratio << ", residual displacement "
        << r.max_residual_displacement;
    r.warnings.push_back(msg.str());
  }
  const std::size_t dd = 0b00, du = 0b10;
  r.geometric_a = l.geometric[du][mode_a] - l.geometric[dd][mode_a];
  r.geometric_b = l.geometric[dd][mode_b] - l.geometric[du][mode_b];
  r.differential = r.geometric_a - r.geometric_b;
  r.dynamic_b = l.dynamic[dd][mode_b];
  r.dynamic_ratio = std::abs(r.dynamic_b / r.geometric_b);
  return r;
}

}  // namespace trapsim::gate
