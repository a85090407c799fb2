#include "trapsim/gate.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace trapsim;
using namespace trapsim::gate;
using drive::DriveSpec;
using hilbert::SimState;
using hilbert::SpaceSpec;

namespace {

// Two ions, modes given as per-ion eta rows.
DriveSpec two_ion_drive(double omega, std::vector<std::array<double, 2>> eta_rows, std::vector<double> mode_freqs,
                        double w_i, double a0, double a3, std::array<double, 2> phases = {0.0, 0.0}) {
  RMatrix eta(static_cast<Eigen::Index>(eta_rows.size()), 2);
  for (std::size_t m = 0; m < eta_rows.size(); ++m) {
    eta(static_cast<Eigen::Index>(m), 0) = eta_rows[m][0];
    eta(static_cast<Eigen::Index>(m), 1) = eta_rows[m][1];
  }
  return DriveSpec::z_branch({omega, omega}, {phases[0], phases[1]}, a0, a3, eta, std::move(mode_freqs), w_i);
}

SpaceSpec space_for(const DriveSpec& d, int n_max) {
  SpaceSpec s;
  s.n_spins = d.ions();
  for (std::size_t m = 0; m < d.modes(); ++m) s.modes.push_back({"m" + std::to_string(m), d.mode_frequencies[m], n_max});
  return s;
}

// Stretch-only two-ion gate: Omega eta / delta = 1/6, alpha3 = 3/2.
DriveSpec single_mode_gate(double a0 = 0.0) {
  const double w = 20.0, delta = 1.0, eta = 0.05;
  return two_ion_drive(delta / (6 * eta), {{eta, -eta}}, {w}, w + delta, a0, 1.5);
}

double wrap(double x) { return std::remainder(x, 2 * pi); }

}  // namespace

TEST(GateFactors, SeriesMatchesClosedFormNearCrossover) {
  for (double x : {2e-4, 5e-4, 2e-3}) {
    const double delta = 3.0, dt = x / delta;
    const cplx exact = (std::exp(-I * x) - 1.0) / delta;
    EXPECT_LT(std::abs(detail::circle_factor(delta, dt) - exact), 1e-13);
    EXPECT_NEAR(detail::area_factor(delta, dt), (x - std::sin(x)) / (delta * delta), 1e-15);
  }
  EXPECT_LT(std::abs(detail::circle_factor(0.0, 2.0) + 2.0 * I), 1e-15);
  EXPECT_EQ(detail::area_factor(0.0, 2.0), 0.0);
}

TEST(GateLedger, SingleModeDifferentialPhase) {
  const DriveSpec d = single_mode_gate();
  const double t = 2 * pi / d.detunings[0];
  const PhaseLedger l = analytic_propagator(d, 0.0, t);
  EXPECT_LT(l.max_displacement(), 1e-12);
  // configurations: bit i = ion i up
  EXPECT_NEAR(l.phase(0b10) - l.phase(0b11), -pi / 2, 1e-12);
  EXPECT_NEAR(l.phase(0b01) - l.phase(0b00), -pi / 2, 1e-12);
  EXPECT_NEAR(l.phase(0b11), 0.0, 1e-15);
}

TEST(GateLedger, PhasesDecomposeIntoSigmaZTerms) {
  // Direct double sum of -G sum_ij Omega^2 eta_i eta_j kappa_i kappa_j cos(dphi) per mode.
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  DriveSpec d = two_ion_drive(1.3, {{0.07, 0.07}, {0.05, -0.05}}, {10.0, 17.0}, 12.0, u(rng), 1.0 + u(rng),
                              {u(rng), u(rng)});
  const double t0 = 0.4, t1 = 2.9;
  const PhaseLedger l = analytic_propagator(d, t0, t1);
  for (std::size_t s = 0; s < 4; ++s)
    for (std::size_t m = 0; m < 2; ++m) {
      const double delta = d.detunings[m], x = delta * (t1 - t0);
      const double g = (x - std::sin(x)) / (delta * delta);
      double phase = 0.0;
      for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j)
          phase -= g * d.rabi[i] * d.rabi[j] * d.eta(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(i)) *
                   d.eta(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(j)) * d.kappa((s >> i) & 1U) *
                   d.kappa((s >> j) & 1U) * std::cos(d.phase[i] - d.phase[j]);
      EXPECT_NEAR(l.geometric[s][m] + l.dynamic[s][m] + l.global[s][m], phase, 1e-13);
    }
}

TEST(GateEngines, AnalyticMatchesIntegrationOfLambDickeHamiltonian) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int draw = 0; draw < 3; ++draw) {
    const DriveSpec d = two_ion_drive(4.0 + u(rng), {{0.06, 0.06}, {0.05, -0.05}}, {10.0, 12.0}, 11.2 + 0.3 * u(rng),
                                      0.3 * u(rng), 1.0, {u(rng), u(rng)});
    const SpaceSpec s = space_for(d, 14);
    CVector spins(4);
    for (int k = 0; k < 4; ++k) spins[k] = cplx(u(rng), u(rng));
    spins.normalize();
    PulseProgram prog;
    prog.segments = {Displacement{d, 1.7 + u(rng)}, Rotation{pi / 2, 0.3, {1}}, Displacement{d, 0.8}};
    ProgramOptions o;
    o.propagate.tol = 1e-11;
    const ProgramResult r = run_program(prog, SimState::from_spins(s, spins), Engine::Both, o);
    ASSERT_TRUE(r.engine_overlap.has_value());
    EXPECT_GT(*r.engine_overlap, 1.0 - 1e-8);
    EXPECT_FALSE(r.warnings.empty());
  }
}

TEST(GateEngines, DisplacementWithoutClosureEntanglesMotion) {
  const DriveSpec d = single_mode_gate();
  const SpaceSpec s = space_for(d, 12);
  PulseProgram prog;
  prog.segments = {Rotation{pi / 2, pi / 2, {}}, Displacement{d, pi / d.detunings[0]}};
  const ProgramResult r = run_program(prog, SimState::basis(s, 0, {0}), Engine::Analytic);
  EXPECT_GT(hilbert::spin_motion_entropy(r.state), 0.1);
  prog.segments[1] = Displacement{d, 2 * pi / d.detunings[0]};
  const ProgramResult closed = run_program(prog, SimState::basis(s, 0, {0}), Engine::Analytic);
  EXPECT_LT(hilbert::spin_motion_entropy(closed.state), 1e-10);
}

TEST(GateProgram, SingleModeGateMakesBellState) {
  const DriveSpec d = single_mode_gate();
  const SpaceSpec s = space_for(d, 12);
  PulseProgram prog;
  prog.segments = {Rotation{pi / 2, pi / 2, {}}, Displacement{d, 2 * pi / d.detunings[0]},
                   Rotation{pi / 2, pi / 2, {}}};
  const ProgramResult r = run_program(prog, SimState::basis(s, 0, {0}), Engine::Both);
  EXPECT_GT(*r.engine_overlap, 1.0 - 1e-8);
  const CMatrix rho = hilbert::reduced_spin_density(r.state);
  EXPECT_NEAR(rho(0, 0).real() + rho(3, 3).real(), 1.0, 1e-10);
  EXPECT_NEAR(std::abs(rho(0, 3)), 0.5, 1e-10);

  std::vector<double> phases;
  for (int k = 0; k < 16; ++k) phases.push_back(pi * k / 16);
  const Fringe f = fit_fringe(phases, parity_scan(r.state, phases));
  EXPECT_NEAR(f.contrast, 1.0, 1e-9);
  EXPECT_NEAR(fidelity_estimate(r.state, f.contrast), 1.0, 1e-9);
}

TEST(GateProgram, FringeFitRecoversParameters) {
  std::vector<double> phi, v;
  for (int k = 0; k < 9; ++k) {
    phi.push_back(0.37 * k);
    v.push_back(0.1 + 0.6 * std::cos(2 * phi.back() + 0.8));
  }
  const Fringe f = fit_fringe(phi, v);
  EXPECT_NEAR(f.offset, 0.1, 1e-12);
  EXPECT_NEAR(f.contrast, 0.6, 1e-12);
  EXPECT_NEAR(f.phase, 0.8, 1e-12);
}

TEST(GateCommensurate, TwoModeClosureAndDynamicRatio) {
  const double ds = -2 * pi * 266e3;
  const double w_com = 6 * std::abs(ds) / (std::sqrt(3.0) - 1), w_str = std::sqrt(3.0) * w_com;
  const double eta_c = 0.08, eta_s = 0.06;
  DriveSpec d = two_ion_drive(1.0, {{eta_c, eta_c}, {eta_s, -eta_s}}, {w_com, w_str}, w_str + ds, -0.25, 1.25);
  EXPECT_NEAR(d.detunings[0], 5 * std::abs(ds), 1e-6);
  CommensurateReport r = commensurate_phase_check(d, 1, 0);
  EXPECT_TRUE(r.commensurate);
  EXPECT_LT(r.max_residual_displacement, 1e-10);
  EXPECT_NEAR(r.dynamic_ratio, 0.4, 1e-12);
  // Phase scales with Omega^2.
  const double scale = std::sqrt((pi / 2) / r.differential);
  d.rabi = {scale, scale};
  r = commensurate_phase_check(d, 1, 0);
  EXPECT_NEAR(r.differential, pi / 2, 1e-12);
  EXPECT_TRUE(r.warnings.empty());

  const double w_i = d.drive_frequency();
  d.detunings[0] *= 1.01;
  d.mode_frequencies[0] = w_i - d.detunings[0];
  r = commensurate_phase_check(d, 1, 0);
  EXPECT_FALSE(r.commensurate);
  EXPECT_FALSE(r.warnings.empty());
}

TEST(GateProgram, EchoedTwoPulseGateCancelsDynamicPhase) {
  const double c = 2.0, dc = -c / 2;
  const double w_com = 30.0, w_roc = w_com - c;
  const double eta_c = 0.05, eta_r = 0.04;
  DriveSpec d = two_ion_drive(1.0, {{eta_c, eta_c}, {eta_r, -eta_r}}, {w_com, w_roc}, w_com + dc, -0.25, 1.25);
  const double t = 2 * pi / std::abs(dc);
  const PhaseLedger one = analytic_propagator(d, 0.0, t);
  const double scale = std::sqrt((-pi / 4) / (one.geometric_total(0b01) - one.geometric_total(0b00)));
  d.rabi = {scale, scale};
  const SpaceSpec s = space_for(d, 12);
  PulseProgram prog;
  prog.segments = {Rotation{pi / 2, pi / 2, {}}, Displacement{d, t}, Rotation{pi, pi / 2, {}}, Displacement{d, t},
                   Rotation{pi / 2, pi / 2, {}}};
  const ProgramResult r = run_program(prog, SimState::basis(s, 0, {0, 0}), Engine::Both);
  EXPECT_GT(*r.engine_overlap, 1.0 - 1e-8);
  EXPECT_NEAR(r.gate_time, 2 * t, 1e-12);
  ASSERT_TRUE(r.ledger.has_value());
  for (std::size_t cfg = 0; cfg < 4; ++cfg) {
    EXPECT_NEAR(r.ledger->dynamic[cfg][0], 0.0, 1e-12);
    EXPECT_NEAR(r.ledger->dynamic[cfg][1], 0.0, 1e-12);
  }
  EXPECT_NEAR(wrap(r.ledger->geometric_total(0b01) - r.ledger->geometric_total(0b00)), -pi / 2, 1e-12);
  const CMatrix rho = hilbert::reduced_spin_density(r.state);
  EXPECT_NEAR(rho(0, 0).real() + rho(3, 3).real(), 1.0, 1e-10);
  EXPECT_NEAR(std::abs(rho(0, 3)), 0.5, 1e-10);
}

TEST(GateProgram, RejectsMismatchedDrive) {
  const DriveSpec d = single_mode_gate();
  SpaceSpec s = space_for(d, 4);
  s.modes.push_back({"extra", 3.0, 2});
  PulseProgram prog;
  prog.segments = {Displacement{d, 1.0}};
  EXPECT_THROW(run_program(prog, SimState::basis(s, 0, {0, 0}), Engine::Analytic), DomainError);
  prog.segments = {Idle{-1.0}};
  EXPECT_THROW(prog.validate(), DomainError);
}
