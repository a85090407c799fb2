#include "trapsim/drive.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace trapsim;
using namespace trapsim::drive;
using hilbert::SimState;
using hilbert::SpaceSpec;

namespace {

SpaceSpec one_ion_one_mode(int n_max, double w) {
  SpaceSpec s;
  s.n_spins = 1;
  s.modes = {{"m", w, n_max}};
  return s;
}

DriveSpec xy_drive(double omega, double eta, double w, double detuning, double phi = 0.0) {
  DriveSpec d;
  d.branch = Branch::XY;
  d.rabi = {omega};
  d.phase = {phi};
  d.alpha = {0, 1, 0, 0};
  d.eta = RMatrix::Constant(1, 1, eta);
  d.mode_frequencies = {w};
  d.detuning = detuning;
  return d;
}

double max_abs(const CMatrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST(RabiRate, ZeroEtaLeavesOnlyCarrier) {
  EXPECT_EQ(rabi_rate(3, 3, 2.0, 0.0), 2.0);
  EXPECT_EQ(rabi_rate(4, 3, 2.0, 0.0), 0.0);
  EXPECT_EQ(rabi_rate(2, 3, 2.0, 0.0), 0.0);
}

TEST(RabiRate, GroundCarrierValue) {
  EXPECT_NEAR(rabi_rate(0, 0, 1.0, 0.3), std::exp(-0.045), 1e-15);
}

TEST(RabiRate, LambDickeLimitIsFirstOrder) {
  for (int n = 1; n < 6; ++n) {
    double prev_red = 0, prev_blue = 0, prev_car = 0;
    for (double eta : {0.02, 0.01}) {
      const double red = std::abs(rabi_rate(n - 1, n, 1.0, eta) / (eta * std::sqrt(n)) - 1);
      const double blue = std::abs(rabi_rate(n + 1, n, 1.0, eta) / (eta * std::sqrt(n + 1.0)) - 1);
      const double car = std::abs(rabi_rate(n, n, 1.0, eta) - 1);
      EXPECT_LT(red, 10 * (n + 1) * eta * eta);
      EXPECT_LT(blue, 10 * (n + 1) * eta * eta);
      EXPECT_LT(car, 10 * (n + 1) * eta * eta);
      if (prev_red > 0) {
        EXPECT_NEAR(prev_red / red, 4.0, 0.1);
        EXPECT_NEAR(prev_blue / blue, 4.0, 0.1);
        EXPECT_NEAR(prev_car / car, 4.0, 0.1);
      }
      prev_red = red;
      prev_blue = blue;
      prev_car = car;
    }
  }
}

TEST(RabiRate, SidebandSymmetry) {
  for (int a = 0; a < 8; ++a)
    for (int b = 0; b < 8; ++b) EXPECT_EQ(rabi_rate(a, b, 1.3, 0.27), rabi_rate(b, a, 1.3, 0.27));
}

TEST(RabiSolution, ResonantPiPulseTransfers) {
  const RabiProblem p{0.0, cplx(0.0, -2.0), pi / 4};
  const Eigen::Vector2cd c = rabi_solution(p, Eigen::Vector2cd(0, 1));
  EXPECT_NEAR(std::norm(c[0]), 1.0, 1e-15);
  EXPECT_NEAR(std::norm(c[1]), 0.0, 1e-15);
}

TEST(RabiSolution, DetunedMaximumIsHalf) {
  const double y = 1.0;
  const double x = std::sqrt(2.0) * y;
  RabiProblem p{2 * y, y, pi / (2 * x)};
  EXPECT_NEAR(std::norm(rabi_solution(p, Eigen::Vector2cd(0, 1))[0]), 0.5, 1e-15);
  double best = 0;
  for (int k = 0; k <= 1000; ++k) {
    p.t = 4.0 * k / 1000;
    best = std::max(best, std::norm(rabi_solution(p, Eigen::Vector2cd(0, 1))[0]));
  }
  EXPECT_NEAR(best, 0.5, 1e-6);
}

TEST(RabiSolution, MatchesIntegrationAndIsUnitary) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SpaceSpec s;
  s.n_spins = 1;
  double worst = 0, worst_unitary = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const RabiProblem p{3 * u(rng), cplx(u(rng), u(rng)), 4 * std::abs(u(rng))};
    const Eigen::Matrix2cd m = rabi_matrix(p);
    worst_unitary = std::max(worst_unitary, max_abs(m * m.adjoint() - Eigen::Matrix2cd::Identity()));
    Eigen::Vector2cd c0(cplx(u(rng), u(rng)), cplx(u(rng), u(rng)));
    c0.normalize();
    const Eigen::Vector2cd c1 = rabi_solution(p, c0);
    hilbert::DenseGenerator g(2, [&](double t) { return CMatrix(rabi_hamiltonian(p, t)); });
    SimState st{s, CVector(2), {}};
    st.amplitudes << c0[1], c0[0];
    const SimState out = hilbert::propagate(g, st, 0.0, p.t);
    worst = std::max({worst, std::abs(out.amplitudes[1] - c1[0]), std::abs(out.amplitudes[0] - c1[1])});
  }
  EXPECT_LT(worst, 1e-8);
  EXPECT_LT(worst_unitary, 1e-12);
}

TEST(Rotation, IdentityAndUnitarity) {
  EXPECT_LT(max_abs(rotation(0.0, 1.2) - Eigen::Matrix2cd::Identity()), 1e-16);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int k = 0; k < 20; ++k) {
    const Eigen::Matrix2cd r = rotation(u(rng), u(rng));
    EXPECT_LT(max_abs(r * r.adjoint() - Eigen::Matrix2cd::Identity()), 1e-12);
  }
}

TEST(Rotation, HalfPiFromDownGivesPlusX) {
  // (c_up, c_down)
  const Eigen::Vector2cd out = rotation(pi / 2, pi / 2) * Eigen::Vector2cd(0, 1);
  EXPECT_NEAR(std::abs(out[0] - 1 / std::sqrt(2.0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(out[1] - 1 / std::sqrt(2.0)), 0.0, 1e-15);
}

TEST(Rotation, PiPulseFromDown) {
  const double phi = 0.7;
  const Eigen::Vector2cd out = rotation(pi, phi) * Eigen::Vector2cd(0, 1);
  EXPECT_LT(std::abs(out[0] - (-I * std::exp(I * phi))), 1e-15);
  EXPECT_LT(std::abs(out[1]), 1e-15);
}

TEST(Rotation, LocalOrderEmbedding) {
  SpaceSpec s;
  s.n_spins = 2;
  SimState st = SimState::basis(s, 0, {});
  apply_rotation(st, pi / 2, pi / 2);
  for (int k = 0; k < 4; ++k) EXPECT_LT(std::abs(st.amplitudes[k] - 0.5), 1e-15);
  SimState one = SimState::basis(s, 0, {});
  apply_rotation(one, pi, 0.3, {1});
  EXPECT_LT(std::abs(one.amplitudes[2] - (-I * std::exp(I * 0.3))), 1e-15);
}

TEST(Branch, ZeroRabiGivesZeroMatrix) {
  const SpaceSpec s = one_ion_one_mode(4, 10.0);
  const DriveSpec d = xy_drive(0.0, 0.1, 10.0, 10.0);
  EXPECT_EQ(max_abs(build_branch_hamiltonian(s, d, 0.3)), 0.0);
}

TEST(Branch, HamiltoniansAreHermitian) {
  SpaceSpec s;
  s.n_spins = 2;
  s.modes = {{"a", 5.0, 4}, {"b", 8.0, 3}};
  RMatrix eta(2, 2);
  eta << 0.1, 0.1, 0.12, -0.12;
  const DriveSpec z = DriveSpec::z_branch({1.0, 0.8}, {0.0, 0.4}, -0.5, 1.5, eta, {5.0, 8.0}, 6.0);
  DriveSpec xy = z;
  xy.branch = Branch::XY;
  xy.alpha = {0, 0.6, 0.8, 0};
  xy.detuning = 5.0;
  for (double t : {0.0, 0.37, 2.1}) {
    for (bool ld : {false, true}) {
      const CMatrix h = build_branch_hamiltonian(s, z, t, ld);
      EXPECT_LT(max_abs(h - h.adjoint()), 1e-10 * max_abs(h));
    }
    const CMatrix h = build_branch_hamiltonian(s, xy, t);
    EXPECT_LT(max_abs(h - h.adjoint()), 1e-10 * max_abs(h));
  }
  EXPECT_THROW(build_branch_hamiltonian(s, xy, 0.0, true), DomainError);
}

TEST(Branch, BlueSidebandCouplingsMatchRabiRates) {
  const double w = 10.0, om = 0.3, eta = 0.2, phi = 0.4;
  const int n_max = 12;
  const SpaceSpec s = one_ion_one_mode(n_max, w);
  const DriveSpec d = xy_drive(om, eta, w, w, phi);
  for (double t : {0.0, 0.91}) {
    const CMatrix h = build_branch_hamiltonian(s, d, t);
    for (int n = 0; n < n_max; ++n) {
      const auto up = static_cast<Eigen::Index>(s.index(1, {n + 1}));
      const auto down = static_cast<Eigen::Index>(s.index(0, {n}));
      const cplx y = rabi_coupling(n + 1, n, om, eta, 1.0, 0.0, phi);
      EXPECT_LT(std::abs(h(up, down) - I * y), 1e-10) << n;
      EXPECT_NEAR(std::abs(h(up, down)), rabi_rate(n + 1, n, om, eta), 1e-10);
    }
  }
}

TEST(Branch, ZBranchForceRatio) {
  SpaceSpec s;
  s.n_spins = 1;
  s.modes = {{"m", 5.0, 3}};
  const DriveSpec d = DriveSpec::z_branch({1.0}, {0.0}, -0.5, 1.5, RMatrix::Constant(1, 1, 0.1), {5.0}, 5.2);
  EXPECT_DOUBLE_EQ(d.kappa(true), 1.0);
  EXPECT_DOUBLE_EQ(d.kappa(false), -2.0);
  // The a^dag coupling from |down,0> to |down,1> is -2 times the one from |up,0> to |up,1>.
  const CMatrix h = build_branch_hamiltonian(s, d, 0.0, true);
  const cplx dn = h(static_cast<Eigen::Index>(s.index(0, {1})), static_cast<Eigen::Index>(s.index(0, {0})));
  const cplx upc = h(static_cast<Eigen::Index>(s.index(1, {1})), static_cast<Eigen::Index>(s.index(1, {0})));
  EXPECT_LT(std::abs(dn + 2.0 * upc), 1e-15);
  EXPECT_LT(std::abs(upc - I * 0.1), 1e-15);
}

TEST(Branch, CoefficientMismatchRejected) {
  DriveSpec d = xy_drive(1.0, 0.1, 10.0, 0.0);
  d.alpha[3] = 0.5;
  EXPECT_THROW(d.validate(), DomainError);
  DriveSpec z = DriveSpec::z_branch({1.0}, {0.0}, 0.0, 1.0, RMatrix::Constant(1, 1, 0.1), {5.0}, 5.2);
  z.alpha[1] = 0.2;
  EXPECT_THROW(z.validate(), DomainError);
  z.alpha[1] = 0.0;
  z.detunings[0] = 1.0;
  z.mode_frequencies.push_back(1.0);
  EXPECT_THROW(z.validate(), DomainError);
}

TEST(Branch, CarrierOnlyDriveLeavesMotionAlone) {
  SpaceSpec s;
  s.n_spins = 2;
  s.modes = {{"a", 5.0, 3}, {"b", 7.0, 3}};
  DriveSpec d;
  d.branch = Branch::XY;
  d.rabi = {0.8, 1.1};
  d.phase = {0.0, 0.5};
  d.alpha = {0, 1, 0, 0};
  d.eta = RMatrix::Zero(2, 2);
  d.mode_frequencies = {5.0, 7.0};
  d.detuning = 0.3;
  // Motion in a superposition of |0,1> and |1,0>.
  SimState st{s, CVector::Zero(static_cast<Eigen::Index>(s.dimension())), {}};
  st.amplitudes[static_cast<Eigen::Index>(s.index(0, {0, 1}))] = 0.6;
  st.amplitudes[static_cast<Eigen::Index>(s.index(0, {1, 0}))] = 0.8;
  auto mode_pops = [&](const SimState& x) {
    std::vector<double> p(s.dimension() / 4, 0.0);
    for (std::size_t k = 0; k < s.dimension(); ++k) p[k / 4] += std::norm(x.amplitudes[static_cast<Eigen::Index>(k)]);
    return p;
  };
  const auto before = mode_pops(st);
  hilbert::PropagateOptions o;
  o.leakage_threshold = 1.0;
  const SimState out = hilbert::propagate(branch_generator(s, d), st, 0.0, 3.0, o);
  const auto after = mode_pops(out);
  for (std::size_t k = 0; k < before.size(); ++k) EXPECT_NEAR(after[k], before[k], 1e-10);
  EXPECT_GT(1.0 - measure_populations(out)[0], 0.1);
}

TEST(Branch, BlueSidebandDynamicsFollowClosedForm) {
  // Resolved sideband: w >> Omega. Compare |down,0> -> |up,1> population with the two-level solution.
  const double w = 200.0, om = 1.0, eta = 0.1;
  const SpaceSpec s = one_ion_one_mode(6, w);
  const DriveSpec d = xy_drive(om, eta, w, w);
  const RabiProblem p{rabi_detuning(w, 1, 0, w), rabi_coupling(1, 0, om, eta, 1, 0, 0), 0.0};
  const double t = pi / (2 * std::abs(p.coupling));
  hilbert::PropagateOptions o;
  o.leakage_threshold = 1.0;
  o.tol = 1e-9;
  const SimState out = hilbert::propagate(branch_generator(s, d), SimState::basis(s, 0, {0}), 0.0, t, o);
  RabiProblem pt = p;
  pt.t = t;
  const Eigen::Vector2cd c = rabi_solution(pt, Eigen::Vector2cd(0, 1));
  EXPECT_NEAR(std::norm(out.amplitudes[static_cast<Eigen::Index>(s.index(1, {1}))]), std::norm(c[0]), 2e-2);
  EXPECT_FALSE(resolved_sideband_warning(p, w).has_value());
  EXPECT_TRUE(resolved_sideband_warning(RabiProblem{50.0, 1.0, 0.0}, w).has_value());
}
