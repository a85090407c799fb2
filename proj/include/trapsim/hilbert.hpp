#pragma once

// Truncated spin (x) Fock Hilbert space.
//
// Basis order: spins first, spin 0 fastest, each spin ordered (down, up);
// then modes, mode 0 fastest, each in Fock order |0>, ..., |n_max>. A basis
// index therefore reads  s + 2^N (n_0 + (n_max_0 + 1)(n_1 + ...))  where bit i
// of s is set when spin i is up.
//
// Hamiltonians are in angular-frequency units (hbar = 1): i d/dt psi = H psi.

#include "trapsim/core.hpp"
#include "trapsim/csv.hpp"
#include "trapsim/special.hpp"

#include <boost/numeric/odeint.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <memory>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace trapsim::hilbert {

inline std::size_t default_dimension_cap() {
  if (const char* env = std::getenv("TRAPSIM_DIM_CAP")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::size_t{1} << 20;
}

struct ModeSpec {
  std::string label;
  double frequency = 0.0;  // rad/s
  int n_max = 1;

  bool operator==(const ModeSpec&) const = default;
};

struct SpaceSpec {
  std::size_t n_spins = 0;
  std::vector<ModeSpec> modes;
  std::size_t dimension_cap = default_dimension_cap();

  std::size_t spin_dimension() const { return std::size_t{1} << n_spins; }
  std::size_t site_count() const { return n_spins + modes.size(); }

  std::size_t site_dimension(std::size_t site) const {
    return site < n_spins ? 2 : static_cast<std::size_t>(modes[site - n_spins].n_max + 1);
  }

  /// Index stride of a site (spin i -> i, mode m -> n_spins + m).
  std::size_t stride(std::size_t site) const {
    std::size_t s = 1;
    for (std::size_t k = 0; k < site; ++k) s *= site_dimension(k);
    return s;
  }

  std::size_t dimension() const {
    std::size_t d = spin_dimension();
    for (const auto& m : modes) d *= static_cast<std::size_t>(m.n_max + 1);
    return d;
  }

  void validate() const {
    if (n_spins > 20) throw DomainError("space: too many spins");
    double d = std::ldexp(1.0, static_cast<int>(n_spins));
    for (const auto& m : modes) {
      if (m.n_max < 1) throw DomainError("space: mode '" + m.label + "' needs n_max >= 1");
      d *= m.n_max + 1.0;
    }
    if (d > static_cast<double>(dimension_cap)) {
      std::ostringstream msg;
      msg << "space: dimension " << d << " exceeds cap " << dimension_cap;
      throw DomainError(msg.str());
    }
  }

  std::size_t index(std::uint64_t spins, const std::vector<int>& fock) const {
    if (fock.size() != modes.size()) throw DomainError("space: Fock tuple has wrong length");
    std::size_t idx = 0;
    for (std::size_t m = modes.size(); m-- > 0;) {
      if (fock[m] < 0 || fock[m] > modes[m].n_max) throw DomainError("space: Fock index out of range");
      idx = idx * static_cast<std::size_t>(modes[m].n_max + 1) + static_cast<std::size_t>(fock[m]);
    }
    return idx * spin_dimension() + static_cast<std::size_t>(spins);
  }

  std::pair<std::uint64_t, std::vector<int>> decode(std::size_t idx) const {
    const std::uint64_t spins = idx % spin_dimension();
    idx /= spin_dimension();
    std::vector<int> fock(modes.size());
    for (std::size_t m = 0; m < modes.size(); ++m) {
      const auto d = static_cast<std::size_t>(modes[m].n_max + 1);
      fock[m] = static_cast<int>(idx % d);
      idx /= d;
    }
    return {spins, fock};
  }

  bool operator==(const SpaceSpec& o) const { return n_spins == o.n_spins && modes == o.modes; }
};

/// "du" means spin 0 down, spin 1 up.
inline std::string spin_label(std::uint64_t spins, std::size_t n_spins) {
  std::string s;
  for (std::size_t i = 0; i < n_spins; ++i) s += (spins >> i) & 1U ? 'u' : 'd';
  return s;
}

inline std::string basis_label(const SpaceSpec& space, std::size_t idx) {
  const auto [spins, fock] = space.decode(idx);
  std::string s = spin_label(spins, space.n_spins) + "|";
  for (std::size_t m = 0; m < fock.size(); ++m) s += (m ? "," : "") + std::to_string(fock[m]);
  return s;
}

struct Diagnostics {
  double max_norm_drift = 0.0;
  std::size_t renormalizations = 0;
  double max_leakage = 0.0;
  std::vector<std::string> warnings;
};

struct SimState {
  SpaceSpec space;
  CVector amplitudes;
  Diagnostics diagnostics;

  static SimState basis(const SpaceSpec& space, std::uint64_t spins, const std::vector<int>& fock) {
    space.validate();
    SimState s{space, CVector::Zero(static_cast<Eigen::Index>(space.dimension())), {}};
    s.amplitudes[static_cast<Eigen::Index>(space.index(spins, fock))] = 1.0;
    return s;
  }

  /// Spin state (2^N amplitudes) times the motional ground state.
  static SimState from_spins(const SpaceSpec& space, const CVector& spin_amplitudes) {
    space.validate();
    if (spin_amplitudes.size() != static_cast<Eigen::Index>(space.spin_dimension()))
      throw DomainError("state: spin amplitude vector has wrong length");
    SimState s{space, CVector::Zero(static_cast<Eigen::Index>(space.dimension())), {}};
    s.amplitudes.head(spin_amplitudes.size()) = spin_amplitudes;
    return s;
  }
};

// ---------------------------------------------------------------------------
// Local operators

enum class SpinOp { Identity, X, Y, Z, Plus, Minus, Kappa };
enum class ModeOp { Identity, Lower, Raise, Number, Displace };

struct SpinFactor {
  SpinOp op = SpinOp::Identity;
  std::array<double, 4> alpha{};  // used by Kappa: a0 1 + a1 sx + a2 sy + a3 sz
};

struct ModeFactor {
  ModeOp op = ModeOp::Identity;
  cplx lambda = 0.0;  // used by Displace
};

struct OperatorSpec {
  std::vector<SpinFactor> spins;
  std::vector<ModeFactor> modes;
  cplx coefficient = 1.0;
};

/// Matrix of a single-spin operator in local (down, up) order. sigma_+ and
/// sigma_- have entries 2, so that sigma_+ = sigma_x + i sigma_y.
inline Eigen::Matrix2cd spin_matrix(const SpinFactor& f) {
  Eigen::Matrix2cd m = Eigen::Matrix2cd::Zero();
  switch (f.op) {
    case SpinOp::Identity:
      m.setIdentity();
      break;
    case SpinOp::X:
      m(0, 1) = m(1, 0) = 1.0;
      break;
    case SpinOp::Y:
      m(0, 1) = I;
      m(1, 0) = -I;
      break;
    case SpinOp::Z:
      m(0, 0) = -1.0;
      m(1, 1) = 1.0;
      break;
    case SpinOp::Plus:
      m(1, 0) = 2.0;
      break;
    case SpinOp::Minus:
      m(0, 1) = 2.0;
      break;
    case SpinOp::Kappa:
      m(0, 0) = f.alpha[0] - f.alpha[3];
      m(1, 1) = f.alpha[0] + f.alpha[3];
      m(0, 1) = f.alpha[1] + I * f.alpha[2];
      m(1, 0) = f.alpha[1] - I * f.alpha[2];
      break;
  }
  return m;
}

/// Fock cutoff for displacements up to |lambda|: leakage past it stays below about 1e-10.
inline int truncation_for(double lambda) {
  return static_cast<int>(std::ceil(lambda * lambda + 6.0 * lambda + 10.0));
}

inline CMatrix displacement_matrix(int n_max, cplx lambda) {
  CMatrix d(n_max + 1, n_max + 1);
  for (int o = 0; o <= n_max; ++o)
    for (int i = 0; i <= n_max; ++i) d(o, i) = displacement_matrix_element(o, i, lambda);
  return d;
}

inline CMatrix mode_matrix(const ModeFactor& f, int n_max) {
  const int d = n_max + 1;
  CMatrix m = CMatrix::Zero(d, d);
  switch (f.op) {
    case ModeOp::Identity:
      m.setIdentity();
      break;
    case ModeOp::Lower:
      for (int n = 1; n <= n_max; ++n) m(n - 1, n) = std::sqrt(static_cast<double>(n));
      break;
    case ModeOp::Raise:
      for (int n = 0; n < n_max; ++n) m(n + 1, n) = std::sqrt(n + 1.0);
      break;
    case ModeOp::Number:
      for (int n = 0; n <= n_max; ++n) m(n, n) = n;
      break;
    case ModeOp::Displace:
      m = displacement_matrix(n_max, f.lambda);
      break;
  }
  return m;
}

inline CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Dense operator on the full space. Missing trailing factors are identities.
inline CMatrix build_operator(const SpaceSpec& space, const OperatorSpec& spec) {
  space.validate();
  if (spec.spins.size() > space.n_spins || spec.modes.size() > space.modes.size())
    throw DomainError("build_operator: more factors than sites in the space");
  CMatrix out = CMatrix::Identity(1, 1) * spec.coefficient;
  for (std::size_t i = 0; i < space.n_spins; ++i) {
    const SpinFactor f = i < spec.spins.size() ? spec.spins[i] : SpinFactor{};
    out = kron(spin_matrix(f), out);
  }
  for (std::size_t m = 0; m < space.modes.size(); ++m) {
    const ModeFactor f = m < spec.modes.size() ? spec.modes[m] : ModeFactor{};
    out = kron(mode_matrix(f, space.modes[m].n_max), out);
  }
  return out;
}

/// Single-site operator embedded in the full space.
inline CMatrix embed(const SpaceSpec& space, std::size_t site, const CMatrix& local) {
  if (site >= space.site_count() || local.rows() != static_cast<Eigen::Index>(space.site_dimension(site)))
    throw DomainError("embed: local operator does not match the site");
  CMatrix out = CMatrix::Identity(1, 1);
  for (std::size_t k = 0; k < space.site_count(); ++k) {
    const auto d = static_cast<Eigen::Index>(space.site_dimension(k));
    out = kron(k == site ? local : CMatrix(CMatrix::Identity(d, d)), out);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Matrix-free Hamiltonians

/// Sparse operator on one site. With a frame frequency w the entry (o, i)
/// carries an extra factor exp(i w (o - i) t), i.e. the operator is
/// conjugated by exp(i w t n).
struct LocalOp {
  std::size_t site = 0;
  std::vector<std::pair<int, int>> index;
  std::vector<cplx> value;
  double frame_frequency = 0.0;

  static LocalOp from_matrix(std::size_t site, const CMatrix& m, double frame = 0.0) {
    LocalOp op;
    op.site = site;
    op.frame_frequency = frame;
    for (Eigen::Index o = 0; o < m.rows(); ++o)
      for (Eigen::Index i = 0; i < m.cols(); ++i)
        if (m(o, i) != cplx(0.0)) {
          op.index.emplace_back(static_cast<int>(o), static_cast<int>(i));
          op.value.push_back(m(o, i));
        }
    return op;
  }

  CMatrix dense(std::size_t dim, double t) const {
    CMatrix m = CMatrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    for (std::size_t k = 0; k < index.size(); ++k) {
      const auto [o, i] = index[k];
      m(o, i) += value[k] * std::exp(I * (frame_frequency * (o - i) * t));
    }
    return m;
  }
};

/// coefficient(t) * (product of local operators on distinct sites).
struct ProductTerm {
  std::function<cplx(double)> coefficient;
  std::vector<LocalOp> factors;
};

class Generator {
 public:
  virtual ~Generator() = default;
  virtual std::size_t dimension() const = 0;
  /// out = H(t) in
  virtual void apply(double t, const cplx* in, cplx* out) const = 0;

  CMatrix dense(double t) const {
    const auto d = static_cast<Eigen::Index>(dimension());
    CMatrix m(d, d);
    CVector e = CVector::Zero(d);
    CVector col(d);
    for (Eigen::Index k = 0; k < d; ++k) {
      e[k] = 1.0;
      apply(t, e.data(), col.data());
      m.col(k) = col;
      e[k] = 0.0;
    }
    return m;
  }
};

class DenseGenerator : public Generator {
 public:
  DenseGenerator(std::size_t dim, std::function<CMatrix(double)> h) : dim_(dim), h_(std::move(h)) {}
  std::size_t dimension() const override { return dim_; }
  void apply(double t, const cplx* in, cplx* out) const override {
    const CMatrix h = h_(t);
    const auto d = static_cast<Eigen::Index>(dim_);
    Eigen::Map<CVector>(out, d).noalias() = h * Eigen::Map<const CVector>(in, d);
  }

 private:
  std::size_t dim_;
  std::function<CMatrix(double)> h_;
};

class TermGenerator : public Generator {
 public:
  explicit TermGenerator(SpaceSpec space) : space_(std::move(space)), dim_(space_.dimension()) {
    space_.validate();
  }

  void add(ProductTerm term) {
    for (const auto& f : term.factors) {
      if (f.site >= space_.site_count()) throw DomainError("term: site out of range");
      const auto d = static_cast<int>(space_.site_dimension(f.site));
      for (const auto& [o, i] : f.index)
        if (o < 0 || i < 0 || o >= d || i >= d) throw DomainError("term: local index out of range");
    }
    terms_.push_back(std::move(term));
  }

  const SpaceSpec& space() const { return space_; }
  const std::vector<ProductTerm>& terms() const { return terms_; }
  std::size_t dimension() const override { return dim_; }

  void apply(double t, const cplx* in, cplx* out) const override {
    std::fill(out, out + dim_, cplx(0.0));
    std::vector<cplx> a(dim_), b(dim_);
    for (const auto& term : terms_) {
      const cplx c = term.coefficient ? term.coefficient(t) : cplx(1.0);
      if (c == cplx(0.0)) continue;
      const cplx* src = in;
      for (const auto& f : term.factors) {
        apply_local(f, t, src, b.data());
        std::swap(a, b);
        src = a.data();
      }
      for (std::size_t k = 0; k < dim_; ++k) out[k] += c * src[k];
    }
  }

 private:
  void apply_local(const LocalOp& f, double t, const cplx* in, cplx* out) const {
    std::fill(out, out + dim_, cplx(0.0));
    const std::size_t s = space_.stride(f.site);
    const std::size_t d = space_.site_dimension(f.site);
    const std::size_t block = s * d;
    for (std::size_t k = 0; k < f.index.size(); ++k) {
      const auto [o, i] = f.index[k];
      cplx v = f.value[k];
      if (f.frame_frequency != 0.0 && o != i) v *= std::exp(I * (f.frame_frequency * (o - i) * t));
      const std::size_t oo = static_cast<std::size_t>(o) * s, ii = static_cast<std::size_t>(i) * s;
      for (std::size_t hi = 0; hi < dim_; hi += block)
        for (std::size_t lo = 0; lo < s; ++lo) out[hi + oo + lo] += v * in[hi + ii + lo];
    }
  }

  SpaceSpec space_;
  std::size_t dim_;
  std::vector<ProductTerm> terms_;
};

// ---------------------------------------------------------------------------
// Observables on states

/// Probability in the top two Fock levels, maximised over modes.
inline double leakage(const SpaceSpec& space, const CVector& psi) {
  double worst = 0.0;
  for (std::size_t m = 0; m < space.modes.size(); ++m) {
    const int n_max = space.modes[m].n_max;
    const std::size_t site = space.n_spins + m;
    const std::size_t s = space.stride(site);
    const auto d = static_cast<std::size_t>(n_max + 1);
    double p = 0.0;
    for (std::size_t k = 0; k < space.dimension(); ++k) {
      const auto n = static_cast<int>((k / s) % d);
      if (n >= std::max(1, n_max - 1)) p += std::norm(psi[static_cast<Eigen::Index>(k)]);
    }
    worst = std::max(worst, p);
  }
  return worst;
}

/// Spin-configuration probabilities (index = spin bits), modes traced out.
inline std::vector<double> measure_populations(const SimState& state) {
  const std::size_t sd = state.space.spin_dimension();
  std::vector<double> p(sd, 0.0);
  for (Eigen::Index k = 0; k < state.amplitudes.size(); ++k)
    p[static_cast<std::size_t>(k) % sd] += std::norm(state.amplitudes[k]);
  return p;
}

/// Uniform double in [0, 1) from the top 53 bits of one generator draw.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Multinomial draw of `shots` projective spin measurements.
inline std::vector<std::uint64_t> sample_shots(const SimState& state, std::uint64_t shots,
                                               std::uint64_t seed) {
  if (shots < 1) throw DomainError("sample_shots: need at least one shot");
  const auto p = measure_populations(state);
  std::vector<double> cdf(p.size());
  std::partial_sum(p.begin(), p.end(), cdf.begin());
  std::mt19937_64 rng(seed);
  std::vector<std::uint64_t> counts(p.size(), 0);
  for (std::uint64_t k = 0; k < shots; ++k) {
    const double u = uniform01(rng) * cdf.back();
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    if (it == cdf.end()) --it;
    while (p[static_cast<std::size_t>(it - cdf.begin())] == 0.0 && it != cdf.begin()) --it;
    ++counts[static_cast<std::size_t>(it - cdf.begin())];
  }
  return counts;
}

/// Spin reduced density matrix, motion traced out.
inline CMatrix reduced_spin_density(const SimState& state) {
  const auto sd = static_cast<Eigen::Index>(state.space.spin_dimension());
  const Eigen::Index rest = state.amplitudes.size() / sd;
  const Eigen::Map<const CMatrix> psi(state.amplitudes.data(), sd, rest);
  return psi * psi.adjoint();
}

/// Reduced density matrix of a subset of spins (motion and other spins traced out).
inline CMatrix reduced_density(const SimState& state, const std::vector<std::size_t>& keep) {
  const CMatrix rho = reduced_spin_density(state);
  const std::size_t n = state.space.n_spins;
  for (auto k : keep)
    if (k >= n) throw DomainError("reduced_density: spin index out of range");
  const auto dk = static_cast<Eigen::Index>(std::size_t{1} << keep.size());
  CMatrix out = CMatrix::Zero(dk, dk);
  auto sub = [&](std::uint64_t s) {
    std::uint64_t r = 0;
    for (std::size_t j = 0; j < keep.size(); ++j) r |= ((s >> keep[j]) & 1U) << j;
    return r;
  };
  auto others = [&](std::uint64_t s) {
    for (auto k : keep) s &= ~(std::uint64_t{1} << k);
    return s;
  };
  for (Eigen::Index a = 0; a < rho.rows(); ++a)
    for (Eigen::Index b = 0; b < rho.cols(); ++b)
      if (others(static_cast<std::uint64_t>(a)) == others(static_cast<std::uint64_t>(b)))
        out(static_cast<Eigen::Index>(sub(static_cast<std::uint64_t>(a))),
            static_cast<Eigen::Index>(sub(static_cast<std::uint64_t>(b)))) += rho(a, b);
  return out;
}

/// von Neumann entropy (nats) of a density matrix.
inline double entropy(const CMatrix& rho) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (rho + rho.adjoint()), Eigen::EigenvaluesOnly);
  double s = 0.0;
  for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) {
    const double p = es.eigenvalues()[k];
    if (p > 1e-300) s -= p * std::log(p);
  }
  return s;
}

/// Spin-motion entanglement entropy of a pure state.
inline double spin_motion_entropy(const SimState& state) { return entropy(reduced_spin_density(state)); }

/// Apply a unitary to one site in place.
inline void apply_local(SimState& state, std::size_t site, const CMatrix& u) {
  const auto& space = state.space;
  if (site >= space.site_count() || u.rows() != static_cast<Eigen::Index>(space.site_dimension(site)))
    throw DomainError("apply_local: operator does not match the site");
  const std::size_t s = space.stride(site), d = space.site_dimension(site), dim = space.dimension();
  CVector out = CVector::Zero(state.amplitudes.size());
  for (std::size_t hi = 0; hi < dim; hi += s * d)
    for (std::size_t lo = 0; lo < s; ++lo)
      for (std::size_t o = 0; o < d; ++o) {
        cplx acc = 0.0;
        for (std::size_t i = 0; i < d; ++i)
          acc += u(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(i)) *
                 state.amplitudes[static_cast<Eigen::Index>(hi + i * s + lo)];
        out[static_cast<Eigen::Index>(hi + o * s + lo)] = acc;
      }
  state.amplitudes = std::move(out);
}

/// |<a|b>|^2
inline double fidelity(const CVector& a, const CVector& b) { return std::norm(a.dot(b)); }

// ---------------------------------------------------------------------------
// Propagation

struct PropagateOptions {
  double tol = 1e-10;
  double leakage_threshold = 1e-6;
  bool check_hermitian = true;
  double initial_step = 0.0;  // 0: pick from the span
};

namespace detail {

inline void check_hermitian(const Generator& h, double t0, double t1) {
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> g;
  const auto d = static_cast<Eigen::Index>(h.dimension());
  CVector u(d), v(d), hu(d), hv(d);
  for (int sample = 0; sample < 3; ++sample) {
    const double t = t0 + (t1 - t0) * (sample / 2.0);
    for (Eigen::Index k = 0; k < d; ++k) {
      u[k] = cplx(g(rng), g(rng));
      v[k] = cplx(g(rng), g(rng));
    }
    h.apply(t, u.data(), hu.data());
    h.apply(t, v.data(), hv.data());
    const cplx lhs = u.dot(hv), rhs = hu.dot(v);
    const double scale = std::max({hu.norm() * v.norm(), hv.norm() * u.norm(), 1e-300});
    if (std::abs(lhs - rhs) > 1e-10 * scale) {
      std::ostringstream msg;
      msg << "propagate: generator is not Hermitian at t = " << t << " (relative defect "
          << std::abs(lhs - rhs) / scale << ")";
      throw DomainError(msg.str());
    }
  }
}

}  // namespace detail

/// Adaptive Runge-Kutta-Fehlberg 7(8) integration of i psi' = H(t) psi.
inline SimState propagate(const Generator& h, SimState state, double t0, double t1,
                          const PropagateOptions& opts = {}) {
  namespace ode = boost::numeric::odeint;
  using Vec = std::vector<cplx>;
  const std::size_t dim = h.dimension();
  if (dim != static_cast<std::size_t>(state.amplitudes.size()))
    throw DomainError("propagate: generator and state dimensions differ");
  if (t1 == t0) return state;
  if (opts.check_hermitian) detail::check_hermitian(h, t0, t1);

  Vec psi(state.amplitudes.data(), state.amplitudes.data() + dim);
  auto rhs = [&h](const Vec& x, Vec& dxdt, double t) {
    h.apply(t, x.data(), dxdt.data());
    for (auto& v : dxdt) v *= -I;
  };
  double max_leak = state.diagnostics.max_leakage;
  bool monitor = !state.space.modes.empty();
  auto observer = [&](const Vec& x, double) {
    if (!monitor) return;
    max_leak = std::max(max_leak, leakage(state.space, Eigen::Map<const CVector>(x.data(), static_cast<Eigen::Index>(dim))));
  };
  auto stepper = ode::make_controlled(opts.tol, opts.tol, ode::runge_kutta_fehlberg78<Vec>());
  const double dt0 = opts.initial_step > 0.0 ? opts.initial_step : (t1 - t0) / 100.0;
  ode::integrate_adaptive(stepper, rhs, psi, t0, t1, dt0, observer);

  state.amplitudes = Eigen::Map<const CVector>(psi.data(), static_cast<Eigen::Index>(dim));
  const double nrm = state.amplitudes.norm();
  const double drift = std::abs(nrm - 1.0);
  state.diagnostics.max_norm_drift = std::max(state.diagnostics.max_norm_drift, drift);
  if (drift > 1e-12) {
    state.amplitudes /= nrm;
    ++state.diagnostics.renormalizations;
  }
  state.diagnostics.max_leakage = max_leak;
  if (max_leak > opts.leakage_threshold) {
    std::ostringstream msg;
    msg << "propagate: Fock-space leakage " << max_leak << " exceeds threshold "
        << opts.leakage_threshold;
    throw LeakageError(msg.str(), max_leak);
  }
  return state;
}

/// CSV snapshot: index, basis label, re, im.
inline void write_state_csv(std::ostream& os, const SimState& state) {
  csv::Writer w(os);
  w.header({"index", "label", "re", "im"});
  for (Eigen::Index k = 0; k < state.amplitudes.size(); ++k) {
    csv::Row r;
    r << static_cast<long>(k) << basis_label(state.space, static_cast<std::size_t>(k))
      << state.amplitudes[k].real() << state.amplitudes[k].imag();
    w.write(r);
  }
}

}  // namespace trapsim::hilbert
