#include "trapsim/crystal.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace trapsim;
using namespace trapsim::crystal;

namespace {

const IonSpecies kCa = IonSpecies::from_atomic(40.0, 1);
constexpr double kOmegaZ = 2 * pi * 1.0e6;

TrapConfiguration chain(std::size_t n, double radial_factor = 5.0) {
  return TrapConfiguration::linear(kCa, n, radial_factor * kOmegaZ, radial_factor * 1.1 * kOmegaZ,
                                   kOmegaZ);
}

double coulomb_length(double omega) {
  return std::cbrt(si::coulomb_constant * sqr(kCa.charge) / (kCa.mass * omega * omega));
}

double max_abs(const RMatrix& m) { return m.cwiseAbs().maxCoeff(); }

// Minimal Nelder-Mead, used as a derivative-free oracle.
RVector nelder_mead(const std::function<double(const RVector&)>& f, RVector x0, double scale) {
  const auto n = x0.size();
  std::vector<RVector> s(static_cast<std::size_t>(n + 1), x0);
  for (Eigen::Index k = 0; k < n; ++k) s[static_cast<std::size_t>(k + 1)][k] += scale;
  std::vector<double> fv;
  for (auto& p : s) fv.push_back(f(p));
  for (int it = 0; it < 20000; ++it) {
    std::vector<std::size_t> order(s.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return fv[a] < fv[b]; });
    std::vector<RVector> s2;
    std::vector<double> f2;
    for (auto o : order) {
      s2.push_back(s[o]);
      f2.push_back(fv[o]);
    }
    s = s2;
    fv = f2;
    if (std::abs(fv.back() - fv.front()) < 1e-16 * (1 + std::abs(fv.front())) &&
        (s.back() - s.front()).norm() < 1e-11)
      break;
    RVector c = RVector::Zero(n);
    for (std::size_t k = 0; k + 1 < s.size(); ++k) c += s[k];
    c /= static_cast<double>(n);
    const RVector xr = c + (c - s.back());
    const double fr = f(xr);
    if (fr < fv.front()) {
      const RVector xe = c + 2.0 * (c - s.back());
      const double fe = f(xe);
      if (fe < fr) {
        s.back() = xe;
        fv.back() = fe;
      } else {
        s.back() = xr;
        fv.back() = fr;
      }
    } else if (fr < fv[fv.size() - 2]) {
      s.back() = xr;
      fv.back() = fr;
    } else {
      const RVector xc = c + 0.5 * (s.back() - c);
      const double fc = f(xc);
      if (fc < fv.back()) {
        s.back() = xc;
        fv.back() = fc;
      } else {
        for (std::size_t k = 1; k < s.size(); ++k) {
          s[k] = s[0] + 0.5 * (s[k] - s[0]);
          fv[k] = f(s[k]);
        }
      }
    }
  }
  return s.front();
}

}  // namespace

TEST(TotalPotential, SingleIonAtMinimumIsZero) {
  TrapConfiguration c = chain(1);
  c.wells[0].minimum = Vec3(1e-6, -2e-6, 3e-6);
  RVector x(3);
  x << 1e-6, -2e-6, 3e-6;
  EXPECT_DOUBLE_EQ(total_potential(c, x), 0.0);
}

TEST(TotalPotential, TwoIonScanHasSingleMinimum) {
  const TrapConfiguration c = chain(2);
  const double ell = coulomb_length(kOmegaZ);
  int minima = 0;
  double prev2 = 0, prev1 = 0;
  double best_d = 0;
  const int steps = 2000;
  for (int k = 0; k <= steps; ++k) {
    const double d = ell * (0.2 + 3.0 * k / steps);
    RVector x = RVector::Zero(6);
    x[4] = -d / 2;
    x[5] = d / 2;
    const double v = total_potential(c, x);
    if (k >= 2 && prev1 < prev2 && prev1 < v) {
      ++minima;
      best_d = ell * (0.2 + 3.0 * (k - 1) / steps);
    }
    prev2 = prev1;
    prev1 = v;
  }
  EXPECT_EQ(minima, 1);
  EXPECT_NEAR(best_d / (std::cbrt(2.0) * ell), 1.0, 2e-3);
}

TEST(TotalPotential, CommonShiftLeavesEnergyUnchanged) {
  TrapConfiguration c = chain(3);
  RVector x(9);
  x << 0.1e-6, 0, -0.1e-6, 0.2e-6, 0, 0, -5e-6, 0, 5e-6;
  const double v0 = total_potential(c, x);
  const Vec3 shift(2e-6, -1e-6, 7e-6);
  for (auto& w : c.wells) w.minimum += shift;
  for (int i = 0; i < 3; ++i)
    for (int a = 0; a < 3; ++a) x[i + 3 * a] += shift[a];
  EXPECT_NEAR(total_potential(c, x), v0, 1e-12 * std::abs(v0));
}

TEST(TotalPotential, CoincidentIonsRejected) {
  const TrapConfiguration c = chain(2);
  EXPECT_THROW(total_potential(c, RVector::Zero(6)), DomainError);
}

TEST(TrapConfiguration, ValidationRejectsBadAxesAndFrequencies) {
  TrapConfiguration c = chain(1);
  c.wells[0].axes[1] = Vec3(1, 1, 0).normalized();
  EXPECT_THROW(c.validate(), DomainError);
  c = chain(1);
  c.wells[0].frequencies[2] = 0.0;
  EXPECT_THROW(c.validate(), DomainError);
  c = chain(1);
  c.species.mass = 0.0;
  EXPECT_THROW(c.validate(), DomainError);
}

TEST(Equilibrium, SingleIonSitsAtMinimum) {
  TrapConfiguration c = chain(1);
  c.wells[0].minimum = Vec3(3e-6, 0, -1e-6);
  const RVector x = find_equilibrium(c);
  EXPECT_NEAR(x[0], 3e-6, 1e-18);
  EXPECT_NEAR(x[1], 0.0, 1e-18);
  EXPECT_NEAR(x[2], -1e-6, 1e-18);
}

TEST(Equilibrium, TwoIonsMatchBisectionOracle) {
  const TrapConfiguration c = chain(2);
  // dV/dd = M w^2 d / 2 - k Q^2 / d^2
  const double k = si::coulomb_constant * sqr(kCa.charge);
  auto dv = [&](double d) { return kCa.mass * sqr(kOmegaZ) * d / 2 - k / (d * d); };
  double lo = 1e-7, hi = 1e-4;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (dv(mid) > 0 ? hi : lo) = mid;
  }
  const double d = 0.5 * (lo + hi);
  const RVector x = find_equilibrium(c);
  EXPECT_NEAR(std::abs(x[5] - x[4]) / d, 1.0, 1e-12);
  EXPECT_NEAR(x[4] + x[5], 0.0, 1e-12 * d);
  EXPECT_NEAR(x[0], 0.0, 1e-12 * d);
  EXPECT_NEAR(x[2], 0.0, 1e-12 * d);
}

TEST(Equilibrium, ThreeIonsMatchMultistartSimplexOracle) {
  const TrapConfiguration c = chain(3);
  const double ell = coulomb_length(kOmegaZ);
  // Axial potential in units of M w_z^2 ell^2.
  auto v = [](const RVector& z) {
    double e = 0.5 * z.squaredNorm();
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j) e += 1.0 / std::abs(z[i] - z[j]);
    return e;
  };
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  RVector best;
  double best_v = 1e300;
  for (int s = 0; s < 20; ++s) {
    RVector z0(3);
    for (int i = 0; i < 3; ++i) z0[i] = u(rng);
    const RVector z = nelder_mead(v, z0, 0.3);
    if (v(z) < best_v) {
      best_v = v(z);
      best = z;
    }
  }
  std::sort(best.data(), best.data() + 3);
  const RVector x = find_equilibrium(c);
  std::vector<double> zs = {x[6] / ell, x[7] / ell, x[8] / ell};
  std::sort(zs.begin(), zs.end());
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(zs[static_cast<std::size_t>(i)], best[i], 1e-7);
  EXPECT_NEAR(zs[1], 0.0, 1e-12);
  EXPECT_NEAR(zs[0], -zs[2], 1e-12);
  // Known closed form: outer ions at (5/4)^(1/3) ell.
  EXPECT_NEAR(zs[2], std::cbrt(5.0 / 4.0), 1e-12);
}

TEST(Equilibrium, GradientBelowToleranceAndMinimum) {
  const TrapConfiguration c = chain(4);
  const RVector x = find_equilibrium(c);
  const double ell = coulomb_length(kOmegaZ);
  const double scale = kCa.mass * sqr(kOmegaZ) * ell;  // force unit
  EXPECT_LT(potential_gradient(c, x).norm() / scale, 1e-12);
  const NormalModes modes = normal_modes(hessian(c, x));
  EXPECT_GT(modes.eigenvalues.minCoeff(), 0.0);
}

TEST(Equilibrium, NonConvergenceReportsGradient) {
  const TrapConfiguration c = chain(3);
  EquilibriumOptions opts;
  opts.max_iterations = 1;
  opts.gradient_tolerance = 1e-300;
  try {
    find_equilibrium(c, std::nullopt, opts);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_GT(e.residual(), 0.0);
  }
}

TEST(Equilibrium, ZigzagWhenRadialConfinementIsWeak) {
  TrapConfiguration c = TrapConfiguration::linear(kCa, 3, 1.2 * kOmegaZ, 3.0 * kOmegaZ, kOmegaZ);
  const CrystalSolution s = solve_crystal(c);
  EXPECT_GT(s.hessian_eigenvalues.minCoeff(), 0.0);
  const double spread = std::abs(s.position(0).x() - s.position(1).x()) +
                        std::abs(s.position(1).x() - s.position(2).x());
  EXPECT_GT(spread, 1e-7);
}

TEST(Hessian, IsotropicSingleIon) {
  const TrapConfiguration c = TrapConfiguration::linear(kCa, 1, kOmegaZ, kOmegaZ, kOmegaZ);
  const RMatrix a = hessian(c, RVector::Zero(3));
  EXPECT_LT(max_abs(a - sqr(kOmegaZ) * RMatrix::Identity(3, 3)), 1e-12 * sqr(kOmegaZ));
}

TEST(Hessian, MatchesFiniteDifferencesOnRandomConfigurations) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> f(1.0, 3.0);
  for (int trial = 0; trial < 10; ++trial) {
    TrapConfiguration c{kCa, {}};
    for (int i = 0; i < 3; ++i) {
      Well w;
      w.frequencies = {f(rng) * kOmegaZ, f(rng) * kOmegaZ, f(rng) * kOmegaZ};
      const Eigen::Quaterniond q = Eigen::Quaterniond(u(rng), u(rng), u(rng), u(rng)).normalized();
      const Eigen::Matrix3d r = q.toRotationMatrix();
      w.axes = {r.col(0), r.col(1), r.col(2)};
      w.minimum = Vec3(u(rng), u(rng), 10.0 * i + u(rng)) * 1e-6;
      c.wells.push_back(w);
    }
    const RVector x = find_equilibrium(c);
    const RMatrix a = hessian(c, x);
    const double h = 1e-10;
    RMatrix fd(9, 9);
    for (int k = 0; k < 9; ++k) {
      RVector xp = x, xm = x;
      xp[k] += h;
      xm[k] -= h;
      fd.col(k) = (potential_gradient(c, xp) - potential_gradient(c, xm)) / (2 * h * kCa.mass);
    }
    EXPECT_LT(max_abs(a - fd) / max_abs(a), 1e-6) << "trial " << trial;
    EXPECT_LT(max_abs(a - a.transpose()), 1e-12 * max_abs(a));
  }
}

TEST(Hessian, TwoIonAxialBlockEigenvalues) {
  const TrapConfiguration c = chain(2);
  const RVector x = find_equilibrium(c);
  const RMatrix a = hessian(c, x);
  const Eigen::Matrix2d axial = a.block(4, 4, 2, 2);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(axial);
  EXPECT_NEAR(es.eigenvalues()[0] / sqr(kOmegaZ), 1.0, 1e-10);
  EXPECT_NEAR(es.eigenvalues()[1] / sqr(kOmegaZ), 3.0, 1e-10);
}

TEST(Hessian, WarnsAwayFromEquilibrium) {
  const TrapConfiguration c = chain(2);
  RVector x = find_equilibrium(c);
  x[5] *= 1.1;
  std::vector<std::string> warnings;
  hessian(c, x, &warnings);
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(NormalModes, SingleIonModesAreWellFrequencies) {
  const TrapConfiguration c = TrapConfiguration::linear(kCa, 1, 3 * kOmegaZ, 2 * kOmegaZ, kOmegaZ);
  const CrystalSolution s = solve_crystal(c);
  EXPECT_NEAR(s.mode_frequencies[0] / kOmegaZ, 1.0, 1e-12);
  EXPECT_NEAR(s.mode_frequencies[1] / kOmegaZ, 2.0, 1e-12);
  EXPECT_NEAR(s.mode_frequencies[2] / kOmegaZ, 3.0, 1e-12);
  RMatrix perm = RMatrix::Zero(3, 3);
  perm(0, 2) = perm(1, 1) = perm(2, 0) = 1.0;
  EXPECT_LT(max_abs(s.mode_matrix - perm), 1e-12);
}

TEST(NormalModes, IsotropicIonGetsIdentityBasis) {
  const TrapConfiguration c = TrapConfiguration::linear(kCa, 1, kOmegaZ, kOmegaZ, kOmegaZ);
  const CrystalSolution s = solve_crystal(c);
  EXPECT_LT(max_abs(s.mode_matrix - RMatrix::Identity(3, 3)), 1e-12);
}

TEST(NormalModes, DegenerateBasisIndependentOfInputRotation) {
  // Same symmetric matrix expressed with two different degenerate bases.
  RMatrix a = RMatrix::Zero(4, 4);
  a.diagonal() << 1.0, 2.0, 2.0, 3.0;
  Eigen::Matrix2d rot;
  rot << std::cos(0.3), -std::sin(0.3), std::sin(0.3), std::cos(0.3);
  RMatrix q = RMatrix::Identity(4, 4);
  Eigen::Matrix4d full = Eigen::Matrix4d::Identity();
  full.block(1, 1, 2, 2) = rot;
  const RMatrix rotated = full * a * full.transpose();
  const NormalModes m1 = normal_modes(a);
  const NormalModes m2 = normal_modes(rotated);
  EXPECT_LT(max_abs(m1.mode_matrix - q), 1e-12);
  // Degenerate block of the rotated matrix spans the same subspace: canonical basis is again e1, e2.
  EXPECT_LT(max_abs(m2.mode_matrix.block(1, 0, 2, 4) - q.block(1, 0, 2, 4)), 1e-12);
}

TEST(NormalModes, SignConventionFirstSignificantComponentPositive) {
  const CrystalSolution s = solve_crystal(chain(4));
  for (Eigen::Index m = 0; m < s.mode_matrix.rows(); ++m) {
    for (Eigen::Index k = 0; k < s.mode_matrix.cols(); ++k) {
      if (std::abs(s.mode_matrix(m, k)) > 1e-9) {
        EXPECT_GT(s.mode_matrix(m, k), 0.0) << "mode " << m;
        break;
      }
    }
  }
}

TEST(NormalModes, TwoIonAxialModes) {
  const CrystalSolution s = solve_crystal(chain(2));
  const auto axial = modes_along(s, Vec3::UnitZ());
  ASSERT_EQ(axial.size(), 2u);
  const auto com = static_cast<Eigen::Index>(axial[0]);
  const auto str = static_cast<Eigen::Index>(axial[1]);
  EXPECT_NEAR(s.mode_frequencies[com] / kOmegaZ, 1.0, 1e-10);
  EXPECT_NEAR(s.mode_frequencies[str] / s.mode_frequencies[com], std::sqrt(3.0), 1e-10);
  const double r = 1 / std::sqrt(2.0);
  EXPECT_NEAR(s.mode_matrix(com, 4), r, 1e-10);
  EXPECT_NEAR(s.mode_matrix(com, 5), r, 1e-10);
  EXPECT_NEAR(s.mode_matrix(str, 4), r, 1e-10);
  EXPECT_NEAR(s.mode_matrix(str, 5), -r, 1e-10);
}

TEST(NormalModes, ThreeIonAxialRatios) {
  const CrystalSolution s = solve_crystal(chain(3));
  const auto axial = modes_along(s, Vec3::UnitZ());
  ASSERT_EQ(axial.size(), 3u);
  const double w0 = s.mode_frequencies[static_cast<Eigen::Index>(axial[0])];
  EXPECT_NEAR(w0 / kOmegaZ, 1.0, 1e-10);
  EXPECT_NEAR(s.mode_frequencies[static_cast<Eigen::Index>(axial[1])] / w0, std::sqrt(3.0), 1e-10);
  EXPECT_NEAR(s.mode_frequencies[static_cast<Eigen::Index>(axial[2])] / w0, std::sqrt(29.0 / 5.0), 1e-10);
}

TEST(NormalModes, NegativeEigenvalueIsUnstable) {
  RMatrix a = RMatrix::Zero(3, 3);
  a.diagonal() << 1.0, -0.5, 2.0;
  try {
    normal_modes(a);
    FAIL() << "expected UnstableCrystalError";
  } catch (const UnstableCrystalError& e) {
    EXPECT_EQ(e.mode(), 0u);
    EXPECT_DOUBLE_EQ(e.eigenvalue(), -0.5);
  }
}

TEST(NormalModes, MarginalEigenvalueClampedWithWarning) {
  RMatrix a = RMatrix::Zero(3, 3);
  a.diagonal() << 1.0, -1e-12, 2.0;
  const NormalModes m = normal_modes(a);
  EXPECT_EQ(m.frequencies[0], 0.0);
  EXPECT_EQ(m.warnings.size(), 1u);
}

TEST(NormalModes, AsymmetricInputRejected) {
  RMatrix a = RMatrix::Identity(2, 2);
  a(0, 1) = 0.1;
  EXPECT_THROW(normal_modes(a), DomainError);
}

TEST(CrystalProperties, ModeMatrixOrthogonal) {
  for (std::size_t n = 1; n <= 5; ++n) {
    const CrystalSolution s = solve_crystal(chain(n));
    const auto dim = static_cast<Eigen::Index>(3 * n);
    EXPECT_LT(max_abs(s.mode_matrix * s.mode_matrix.transpose() - RMatrix::Identity(dim, dim)), 1e-10);
    std::mt19937_64 rng(n);
    std::normal_distribution<double> g;
    RVector v(dim);
    for (auto& e : v) e = g(rng);
    EXPECT_LT((s.mode_matrix.transpose() * (s.mode_matrix * v) - v).norm(), 1e-10 * v.norm());
  }
}

TEST(CrystalProperties, LinearChainMatchesTextbookHessian) {
  for (std::size_t n = 2; n <= 5; ++n) {
    const CrystalSolution s = solve_crystal(chain(n));
    const double ell = coulomb_length(kOmegaZ);
    std::vector<double> u(n);
    for (std::size_t i = 0; i < n; ++i) u[i] = s.position(i).z() / ell;
    const double wx = 5.0, wy = 5.5;
    const auto ni = static_cast<Eigen::Index>(n);
    RMatrix a = RMatrix::Zero(3 * ni, 3 * ni);
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      double sum = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const auto jj = static_cast<Eigen::Index>(j);
        const double c3 = 1.0 / std::pow(std::abs(u[i] - u[j]), 3);
        sum += c3;
        a(2 * ni + ii, 2 * ni + jj) = -2 * c3;
        a(ii, jj) = c3;
        a(ni + ii, ni + jj) = c3;
      }
      a(2 * ni + ii, 2 * ni + ii) = 1 + 2 * sum;
      a(ii, ii) = wx * wx - sum;
      a(ni + ii, ni + ii) = wy * wy - sum;
    }
    Eigen::SelfAdjointEigenSolver<RMatrix> es(a);
    for (Eigen::Index m = 0; m < 3 * ni; ++m) {
      EXPECT_NEAR(s.mode_frequencies[m] / kOmegaZ, std::sqrt(es.eigenvalues()[m]), 1e-10);
      // Same eigenvector up to sign.
      const double overlap = std::abs(s.mode_matrix.row(m).dot(es.eigenvectors().col(m)));
      EXPECT_NEAR(overlap, 1.0, 1e-10);
    }
  }
}

TEST(CrystalProperties, FrequencyScaling) {
  const double sfac = 1.7;
  const CrystalSolution a = solve_crystal(chain(4));
  TrapConfiguration c = chain(4);
  for (auto& w : c.wells)
    for (auto& f : w.frequencies) f *= sfac;
  const CrystalSolution b = solve_crystal(c);
  for (Eigen::Index m = 0; m < 12; ++m)
    EXPECT_NEAR(b.mode_frequencies[m] / (sfac * a.mode_frequencies[m]), 1.0, 1e-8);
  for (std::size_t i = 0; i + 1 < 4; ++i) {
    const double da = (a.position(i + 1) - a.position(i)).norm();
    const double db = (b.position(i + 1) - b.position(i)).norm();
    EXPECT_NEAR(db / (da * std::pow(sfac, -2.0 / 3.0)), 1.0, 1e-8);
  }
}

TEST(LambDicke, OrthogonalWavevectorGivesZero) {
  const CrystalSolution s = solve_crystal(chain(2));
  const LambDickeTensor t = lamb_dicke(s, kCa, Vec3(0, 1e7, 0));
  for (auto m : modes_along(s, Vec3::UnitZ()))
    for (Eigen::Index i = 0; i < 2; ++i) EXPECT_NEAR(t.eta(static_cast<Eigen::Index>(m), i), 0.0, 1e-12);
}

TEST(LambDicke, SingleIonFormula) {
  const TrapConfiguration c = TrapConfiguration::linear(kCa, 1, 3 * kOmegaZ, 2 * kOmegaZ, kOmegaZ);
  const CrystalSolution s = solve_crystal(c);
  const double k = 2 * pi / 729e-9;
  const LambDickeTensor t = lamb_dicke(s, kCa, Vec3(k, 0, 0));
  EXPECT_NEAR(t.eta(2, 0), k * std::sqrt(si::hbar / (2 * kCa.mass * 3 * kOmegaZ)), 1e-15);
  EXPECT_EQ(t.eta(0, 0), 0.0);
}

TEST(LambDicke, TwoIonComAndStretchSymmetry) {
  const CrystalSolution s = solve_crystal(chain(2));
  const LambDickeTensor t = lamb_dicke(s, kCa, Vec3(0, 0, 2 * pi / 729e-9 * std::sqrt(2.0)));
  const auto axial = modes_along(s, Vec3::UnitZ());
  const auto com = static_cast<Eigen::Index>(axial[0]);
  const auto str = static_cast<Eigen::Index>(axial[1]);
  EXPECT_NEAR(t.eta(com, 0), t.eta(com, 1), 1e-14);
  EXPECT_NEAR(t.eta(str, 0), -t.eta(str, 1), 1e-14);
  EXPECT_GT(std::abs(t.eta(str, 0)), 0.01);
}

TEST(CrystalCsv, ContainsPositionsModesAndEta) {
  const CrystalSolution s = solve_crystal(chain(2));
  const LambDickeTensor t = lamb_dicke(s, kCa, Vec3(0, 0, 1e7));
  std::ostringstream os;
  write_csv(os, s, &t);
  const std::string out = os.str();
  EXPECT_EQ(out.rfind("kind,index,values\n", 0), 0u);
  EXPECT_EQ(std::count(out.begin(), out.end(), '\n'), 1 + 2 + 6 + 6);
  EXPECT_NE(out.find("\nmode,5,"), std::string::npos);
  EXPECT_NE(out.find("\neta,0,"), std::string::npos);
}
