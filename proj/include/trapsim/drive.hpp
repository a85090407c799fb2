#pragma once

// Laser-ion coupling in the interaction picture: sideband Rabi rates, the
// two-level closed-form solution, carrier rotations and the two RWA branches
// of the drive Hamiltonian.

#include "trapsim/core.hpp"
#include "trapsim/hilbert.hpp"
#include "trapsim/special.hpp"

#include <array>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace trapsim::drive {

/// Omega_{n',n} = Omega e^{-eta^2/2} eta^{|n'-n|} sqrt(n_<!/n_>!) L_{n_<}^{|n'-n|}(eta^2)
inline double rabi_rate(int n_out, int n_in, double omega, double eta) {
  if (n_out < 0 || n_in < 0) throw DomainError("rabi_rate: negative Fock index");
  const int lo = std::min(n_out, n_in), hi = std::max(n_out, n_in), d = hi - lo;
  if (eta == 0.0) return d == 0 ? omega : 0.0;
  const double mag = std::exp(0.5 * (log_factorial(lo) - log_factorial(hi)));
  return omega * std::exp(-0.5 * eta * eta) * std::pow(eta, d) * mag * laguerre(lo, d, eta * eta);
}

/// Two-level problem |down, n> <-> |up, n'>: detuning delta, coupling Y, time t.
struct RabiProblem {
  double delta = 0.0;
  cplx coupling = 0.0;
  double t = 0.0;
};

/// Y_{n',n} = -i Omega_{n',n} (a1 - i a2) i^{|n'-n|} e^{i phi}
inline cplx rabi_coupling(int n_out, int n_in, double omega, double eta, double alpha1,
                          double alpha2, double phi) {
  const int d = std::abs(n_out - n_in);
  return -I * rabi_rate(n_out, n_in, omega, eta) * cplx(alpha1, -alpha2) *
         ipow(I, d) * std::exp(I * phi);
}

/// delta = (omega_I - omega_updown) - (n' - n) omega
inline double rabi_detuning(double drive_detuning, int n_out, int n_in, double mode_frequency) {
  return drive_detuning - (n_out - n_in) * mode_frequency;
}

/// Warning text when the problem leaves the resolved-sideband regime.
inline std::optional<std::string> resolved_sideband_warning(const RabiProblem& p,
                                                            double mode_frequency) {
  if (std::abs(p.delta) < mode_frequency / 5 && std::abs(p.coupling) < mode_frequency / 5)
    return std::nullopt;
  std::ostringstream msg;
  msg << "outside the resolved-sideband regime: |delta| = " << std::abs(p.delta)
      << ", |Y| = " << std::abs(p.coupling) << ", mode frequency " << mode_frequency;
  return msg.str();
}

/// Propagator of (c_up, c_down). The amplitudes obey
///   dc_up/dt = Y e^{-i delta t} c_down,   dc_down/dt = -Y^* e^{i delta t} c_up.
inline Eigen::Matrix2cd rabi_matrix(const RabiProblem& p) {
  const double x = std::sqrt(0.25 * p.delta * p.delta + std::norm(p.coupling));
  const double t = p.t;
  const double c = std::cos(x * t);
  const double sinc = x * t == 0.0 ? t : std::sin(x * t) / x;  // sin(X t) / X
  const cplx em = std::exp(-0.5 * I * p.delta * t), ep = std::exp(0.5 * I * p.delta * t);
  Eigen::Matrix2cd u;
  u(0, 0) = (c + 0.5 * p.delta * I * sinc) * em;
  u(0, 1) = p.coupling * sinc * em;
  u(1, 0) = -std::conj(p.coupling) * sinc * ep;
  u(1, 1) = (c - 0.5 * p.delta * I * sinc) * ep;
  return u;
}

inline Eigen::Vector2cd rabi_solution(const RabiProblem& p, const Eigen::Vector2cd& c_start) {
  return rabi_matrix(p) * c_start;
}

/// Equivalent two-level Hamiltonian in the library's (down, up) order.
inline Eigen::Matrix2cd rabi_hamiltonian(const RabiProblem& p, double t) {
  Eigen::Matrix2cd h = Eigen::Matrix2cd::Zero();
  h(1, 0) = I * p.coupling * std::exp(-I * p.delta * t);
  h(0, 1) = std::conj(h(1, 0));
  return h;
}

/// Carrier rotation R(theta, phi) acting on (c_up, c_down).
inline Eigen::Matrix2cd rotation(double theta, double phi) {
  const double c = std::cos(0.5 * theta), s = std::sin(0.5 * theta);
  Eigen::Matrix2cd r;
  r << c, -I * std::exp(I * phi) * s, -I * std::exp(-I * phi) * s, c;
  return r;
}

/// The same rotation in the library's (down, up) order.
inline Eigen::Matrix2cd rotation_local(double theta, double phi) {
  const Eigen::Matrix2cd r = rotation(theta, phi);
  Eigen::Matrix2cd out;
  out << r(1, 1), r(1, 0), r(0, 1), r(0, 0);
  return out;
}

/// Apply R(theta, phi) to each listed spin (all spins when `ions` is empty).
inline void apply_rotation(hilbert::SimState& state, double theta, double phi,
                           const std::vector<std::size_t>& ions = {}) {
  const CMatrix r = rotation_local(theta, phi);
  if (ions.empty()) {
    for (std::size_t i = 0; i < state.space.n_spins; ++i) hilbert::apply_local(state, i, r);
  } else {
    for (auto i : ions) {
      if (i >= state.space.n_spins) throw DomainError("rotation: ion index out of range");
      hilbert::apply_local(state, i, r);
    }
  }
}

enum class Branch { Z, XY };

inline const char* branch_name(Branch b) { return b == Branch::Z ? "z" : "xy"; }

/// One laser drive acting on all ions of a crystal.
///
/// Mode m of the drive is mode m of the Hilbert space it is used with; eta is
/// (modes x ions). For the z-branch the per-mode detunings are
/// delta_m = omega_I - omega_m; for the xy-branch `detuning` is
/// omega_I - omega_updown.
struct DriveSpec {
  Branch branch = Branch::Z;
  std::vector<double> rabi;     // Omega^(i), rad/s
  std::vector<double> phase;    // phi^(i), rad
  std::array<double, 4> alpha{};
  RMatrix eta;                  // modes x ions
  std::vector<double> mode_frequencies;  // omega_m, rad/s
  std::vector<double> detunings;         // z-branch delta_m
  double detuning = 0.0;                 // xy-branch omega_I - omega_updown

  std::size_t ions() const { return rabi.size(); }
  std::size_t modes() const { return static_cast<std::size_t>(eta.rows()); }

  /// Drive frequency omega_I implied by a z-branch drive (first mode).
  double drive_frequency() const { return detunings.at(0) + mode_frequencies.at(0); }

  void validate() const {
    const std::size_t n = rabi.size();
    if (phase.size() != n) throw DomainError("drive: need one phase per ion");
    if (static_cast<std::size_t>(eta.cols()) != n)
      throw DomainError("drive: Lamb-Dicke tensor has wrong number of ions");
    if (mode_frequencies.size() != modes())
      throw DomainError("drive: need one frequency per mode");
    if (branch == Branch::Z) {
      if (alpha[1] != 0.0 || alpha[2] != 0.0)
        throw DomainError("drive: z-branch requires alpha1 = alpha2 = 0");
      if (detunings.size() != modes()) throw DomainError("drive: need one detuning per mode");
      const double w_i = modes() ? drive_frequency() : 0.0;
      for (std::size_t m = 0; m < modes(); ++m) {
        const double scale = std::max(std::abs(mode_frequencies[m]), 1.0);
        if (std::abs(detunings[m] + mode_frequencies[m] - w_i) > 1e-9 * scale)
          throw DomainError("drive: detunings are not those of a single drive frequency");
      }
    } else {
      if (alpha[0] != 0.0 || alpha[3] != 0.0)
        throw DomainError("drive: xy-branch requires alpha0 = alpha3 = 0");
    }
  }

  /// Per-ion diagonal of kappa for spin bit `up`: alpha0 +- alpha3.
  double kappa(bool up) const { return alpha[0] + (up ? alpha[3] : -alpha[3]); }

  /// z-branch drive from a drive frequency and the mode frequencies.
  static DriveSpec z_branch(std::vector<double> rabi, std::vector<double> phase, double alpha0,
                            double alpha3, RMatrix eta, std::vector<double> mode_frequencies,
                            double drive_frequency) {
    DriveSpec d;
    d.branch = Branch::Z;
    d.rabi = std::move(rabi);
    d.phase = std::move(phase);
    d.alpha = {alpha0, 0.0, 0.0, alpha3};
    d.eta = std::move(eta);
    d.mode_frequencies = std::move(mode_frequencies);
    for (double w : d.mode_frequencies) d.detunings.push_back(drive_frequency - w);
    return d;
  }
};

namespace detail {

inline void check_space(const hilbert::SpaceSpec& space, const DriveSpec& drive) {
  drive.validate();
  if (space.n_spins != drive.ions()) throw DomainError("drive: ion count differs from the space");
  if (space.modes.size() != drive.modes()) throw DomainError("drive: mode count differs from the space");
}

inline hilbert::LocalOp spin_op(std::size_t site, const Eigen::Matrix2cd& m) {
  return hilbert::LocalOp::from_matrix(site, m);
}

}  // namespace detail

/// Adds the branch Hamiltonian of `drive` to a term generator.
///   z-branch:  sum_i Omega_i e^{i(phi_i - omega_I t)} prod_m D_m(i eta_mi e^{i omega_m t}) kappa_i + h.c.
///   z-branch, Lamb-Dicke form:  sum_{i,m} i Omega_i eta_mi e^{i(phi_i - delta_m t)} a_m^dag kappa_i + h.c.
///   xy-branch: sum_i (Omega_i/2) e^{i(phi_i - Delta t)} (a1 - i a2) prod_m D_m(...) sigma+_i + h.c.
/// `t_offset` shifts the drive clock: the terms are those at time t + t_offset.
inline void add_branch_terms(hilbert::TermGenerator& gen, const DriveSpec& drive,
                             bool lamb_dicke = false, double t_offset = 0.0) {
  using hilbert::LocalOp;
  const auto& space = gen.space();
  detail::check_space(space, drive);
  const std::size_t n = space.n_spins;
  for (std::size_t i = 0; i < n; ++i) {
    const double om = drive.rabi[i];
    if (om == 0.0) continue;
    const double phi = drive.phase[i];
    const auto ii = static_cast<Eigen::Index>(i);
    if (drive.branch == Branch::Z) {
      hilbert::SpinFactor kf{hilbert::SpinOp::Kappa, drive.alpha};
      const LocalOp kappa = detail::spin_op(i, hilbert::spin_matrix(kf));
      if (lamb_dicke) {
        for (std::size_t m = 0; m < drive.modes(); ++m) {
          const double eta = drive.eta(static_cast<Eigen::Index>(m), ii);
          if (eta == 0.0) continue;
          const int n_max = space.modes[m].n_max;
          const double delta = drive.detunings[m];
          const cplx amp = I * om * eta;
          auto c = [amp, phi, delta, t_offset](double t) {
            return amp * std::exp(I * (phi - delta * (t + t_offset)));
          };
          auto cc = [c](double t) { return std::conj(c(t)); };
          const std::size_t site = n + m;
          gen.add({c, {LocalOp::from_matrix(site, hilbert::mode_matrix({hilbert::ModeOp::Raise, 0.0}, n_max)), kappa}});
          gen.add({cc, {LocalOp::from_matrix(site, hilbert::mode_matrix({hilbert::ModeOp::Lower, 0.0}, n_max)), kappa}});
        }
      } else {
        const double w_i = drive.drive_frequency();
        std::vector<LocalOp> fwd{kappa}, back{kappa};
        for (std::size_t m = 0; m < drive.modes(); ++m) {
          const double eta = drive.eta(static_cast<Eigen::Index>(m), ii);
          if (eta == 0.0) continue;
          const int n_max = space.modes[m].n_max;
          const double w = drive.mode_frequencies[m];
          // Frame phase e^{i w (o - i) (t + t_offset)} is folded into the matrix for the offset.
          CMatrix d = hilbert::displacement_matrix(n_max, I * eta * std::exp(I * w * t_offset));
          fwd.push_back(LocalOp::from_matrix(n + m, d, w));
          back.push_back(LocalOp::from_matrix(n + m, d.adjoint(), w));
        }
        auto c = [om, phi, w_i, t_offset](double t) { return om * std::exp(I * (phi - w_i * (t + t_offset))); };
        auto cc = [c](double t) { return std::conj(c(t)); };
        gen.add({c, fwd});
        gen.add({cc, back});
      }
    } else {
      if (lamb_dicke) throw DomainError("drive: the Lamb-Dicke form is defined for the z-branch only");
      const cplx a = cplx(drive.alpha[1], -drive.alpha[2]);
      if (a == cplx(0.0)) continue;
      std::vector<LocalOp> fwd{detail::spin_op(i, hilbert::spin_matrix({hilbert::SpinOp::Plus, {}}))};
      std::vector<LocalOp> back{detail::spin_op(i, hilbert::spin_matrix({hilbert::SpinOp::Minus, {}}))};
      for (std::size_t m = 0; m < drive.modes(); ++m) {
        const double eta = drive.eta(static_cast<Eigen::Index>(m), ii);
        if (eta == 0.0) continue;
        const int n_max = space.modes[m].n_max;
        const double w = drive.mode_frequencies[m];
        CMatrix d = hilbert::displacement_matrix(n_max, I * eta * std::exp(I * w * t_offset));
        fwd.push_back(LocalOp::from_matrix(n + m, d, w));
        back.push_back(LocalOp::from_matrix(n + m, d.adjoint(), w));
      }
      const double big_delta = drive.detuning;
      auto c = [om, phi, a, big_delta, t_offset](double t) {
        return 0.5 * om * a * std::exp(I * (phi - big_delta * (t + t_offset)));
      };
      auto cc = [c](double t) { return std::conj(c(t)); };
      gen.add({c, fwd});
      gen.add({cc, back});
    }
  }
}

inline hilbert::TermGenerator branch_generator(const hilbert::SpaceSpec& space, const DriveSpec& drive,
                                               bool lamb_dicke = false, double t_offset = 0.0) {
  hilbert::TermGenerator gen(space);
  add_branch_terms(gen, drive, lamb_dicke, t_offset);
  return gen;
}

/// Dense interaction-picture Hamiltonian at time t (rad/s).
inline CMatrix build_branch_hamiltonian(const hilbert::SpaceSpec& space, const DriveSpec& drive,
                                        double t, bool lamb_dicke = false) {
  return branch_generator(space, drive, lamb_dicke).dense(t);
}

}  // namespace trapsim::drive
