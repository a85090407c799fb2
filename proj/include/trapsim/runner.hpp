#pragma once

// Executes parsed scenarios and renders their outputs. Every CSV is produced
// as a string first so runs can be compared byte for byte.

#include "trapsim/crystal.hpp"
#include "trapsim/csv.hpp"
#include "trapsim/drive.hpp"
#include "trapsim/gate.hpp"
#include "trapsim/hilbert.hpp"
#include "trapsim/identities.hpp"
#include "trapsim/ising.hpp"
#include "trapsim/scenario.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#ifndef TRAPSIM_VERSION
#define TRAPSIM_VERSION "0.0.0"
#endif

namespace trapsim::runner {

using scenario::Scenario;

struct Settings {
  double tol = 1e-6;                 // invariant tolerance
  double propagate_tol = 1e-10;      // integrator tolerance
  std::optional<std::string> engine;  // overrides experiment.engine
  std::optional<std::uint64_t> seed;  // overrides experiment.seed
  std::size_t jobs = 1;

  /// Defaults with TRAPSIM_TOL applied.
  static Settings from_environment() {
    Settings s;
    if (const char* env = std::getenv("TRAPSIM_TOL")) {
      double v = 0.0;
      if (!units::parse_number(env, v) || !(v > 0.0)) throw DomainError("TRAPSIM_TOL must be a positive number");
      s.tol = v;
    }
    return s;
  }
};

struct Check {
  std::string name;
  double value = 0.0;
  double limit = 0.0;
  bool pass = true;
};

struct Outcome {
  std::string kind;
  std::vector<std::pair<std::string, double>> summary;
  std::map<std::string, std::string> files;  // file name -> contents
  std::vector<std::string> warnings;
  std::vector<Check> checks;

  bool ok() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
  }

  double value(const std::string& key) const {
    for (const auto& [k, v] : summary)
      if (k == key) return v;
    throw DomainError("summary has no entry '" + key + "'");
  }

  bool has(const std::string& key) const {
    return std::any_of(summary.begin(), summary.end(), [&](const auto& p) { return p.first == key; });
  }
};

namespace detail {

inline Vec3 axis_vector(const std::string& along) {
  if (along == "x") return Vec3::UnitX();
  if (along == "y") return Vec3::UnitY();
  return Vec3::UnitZ();
}

inline std::vector<double> expand(const std::vector<double>& v, std::size_t n, double fallback) {
  if (v.empty()) return std::vector<double>(n, fallback);
  if (v.size() == 1) return std::vector<double>(n, v[0]);
  return v;
}

struct Built {
  crystal::CrystalSolution crystal;
  std::optional<drive::DriveSpec> drive;
  std::vector<std::size_t> crystal_modes;  // crystal index of each drive mode
  std::size_t reference = 0;               // drive mode the detuning refers to
};

inline Built build(const Scenario& s) {
  Built b;
  b.crystal = crystal::solve_crystal(s.trap.configuration());
  if (!s.drive) return b;
  const auto& d = *s.drive;
  const auto along = crystal::modes_along(b.crystal, axis_vector(d.modes.along));
  if (along.empty()) throw DomainError("drive.modes: no modes along " + d.modes.along);
  if (d.modes.pick.empty()) {
    b.crystal_modes = along;
  } else {
    for (auto p : d.modes.pick) {
      if (p >= along.size()) throw DomainError("drive.modes.pick: index " + std::to_string(p) + " out of range");
      b.crystal_modes.push_back(along[p]);
    }
  }
  if (d.detuning_mode >= b.crystal_modes.size()) throw DomainError("drive.detuning.mode: index out of range");
  b.reference = d.detuning_mode;

  const std::size_t n = s.trap.ions;
  const RMatrix eta_all = crystal::lamb_dicke(b.crystal, s.trap.species, d.wavevector).eta;
  RMatrix eta(static_cast<Eigen::Index>(b.crystal_modes.size()), static_cast<Eigen::Index>(n));
  std::vector<double> freqs;
  for (std::size_t m = 0; m < b.crystal_modes.size(); ++m) {
    const auto cm = static_cast<Eigen::Index>(b.crystal_modes[m]);
    eta.row(static_cast<Eigen::Index>(m)) = eta_all.row(cm);
    freqs.push_back(b.crystal.mode_frequencies[cm]);
  }
  const auto rabi = expand(d.rabi, n, 0.0);
  const auto phase = expand(d.phase, n, 0.0);
  if (d.branch == drive::Branch::Z) {
    const double w_i = d.drive_frequency ? *d.drive_frequency : freqs[b.reference] + *d.detuning;
    b.drive = drive::DriveSpec::z_branch(rabi, phase, d.alpha[0], d.alpha[3], eta, freqs, w_i);
  } else {
    drive::DriveSpec x;
    x.branch = drive::Branch::XY;
    x.rabi = rabi;
    x.phase = phase;
    x.alpha = d.alpha;
    x.eta = eta;
    x.mode_frequencies = freqs;
    x.detuning = *d.detuning;
    b.drive = x;
  }
  b.drive->alpha = d.alpha;
  b.drive->validate();
  return b;
}

inline hilbert::SpaceSpec gate_space(const drive::DriveSpec& d, int n_max) {
  hilbert::SpaceSpec s;
  s.n_spins = d.ions();
  for (std::size_t m = 0; m < d.modes(); ++m) s.modes.push_back({"m" + std::to_string(m), d.mode_frequencies[m], n_max});
  return s;
}

inline gate::Engine engine_from(const std::string& name) {
  if (name == "integrate") return gate::Engine::Integrate;
  if (name == "both") return gate::Engine::Both;
  if (name == "analytic") return gate::Engine::Analytic;
  throw DomainError("unknown engine '" + name + "' (analytic, integrate, both)");
}

inline gate::PulseProgram make_program(const Scenario& s, const drive::DriveSpec& d, std::size_t reference,
                                       double duration_scale = 1.0) {
  gate::PulseProgram p;
  for (const auto& st : s.program) {
    switch (st.kind) {
      case scenario::Step::Kind::Rotate:
        p.segments.push_back(gate::Rotation{st.theta, st.phi, st.ions});
        break;
      case scenario::Step::Kind::Displace: {
        const double t = st.duration ? *st.duration : *st.loops * 2 * pi / std::abs(d.detunings.at(reference));
        p.segments.push_back(gate::Displacement{d, t * duration_scale});
        break;
      }
      case scenario::Step::Kind::Idle:
        p.segments.push_back(gate::Idle{*st.duration});
        break;
    }
  }
  return p;
}

class Table {
 public:
  explicit Table(std::vector<std::string> header) { w_.header(header); }
  void row(const csv::Row& r) { w_.write(r); }
  std::string str() const { return os_.str(); }

 private:
  std::ostringstream os_;
  csv::Writer w_{os_};
};

inline std::string summary_csv(const std::vector<std::pair<std::string, double>>& summary) {
  Table t({"key", "value"});
  for (const auto& [k, v] : summary) {
    csv::Row r;
    r << k << v;
    t.row(r);
  }
  return t.str();
}

/// (P_0 + P_last)/2 + |rho_0,last| on spins 0 and 1: Bell fidelity maximised over the relative phase.
inline double bell_fidelity(const hilbert::SimState& state) {
  const CMatrix rho = hilbert::reduced_density(state, {0, 1});
  return 0.5 * (rho(0, 0).real() + rho(3, 3).real()) + std::abs(rho(0, 3));
}

inline void add_check(Outcome& o, const std::string& name, double value, double limit) {
  o.checks.push_back({name, value, limit, value <= limit});
}

inline void norm_check(Outcome& o, const hilbert::SimState& s, double tol) {
  add_check(o, "norm_drift", std::abs(s.amplitudes.norm() - 1.0), tol);
}

inline void append(std::vector<std::string>& out, const std::vector<std::string>& in, const std::string& prefix = "") {
  for (const auto& w : in) out.push_back(prefix + w);
}

// ---------------------------------------------------------------------------
// Experiment kinds

inline void run_modes(const Scenario& s, const Built& b, Outcome& o) {
  const auto& c = b.crystal;
  Table t({"index", "frequency", "frequency_hz", "axis", "ratio_to_lowest"});
  const char* names[] = {"x", "y", "z"};
  std::map<std::string, double> lowest;
  std::map<std::string, int> seen;
  for (std::size_t m = 0; m < c.mode_count(); ++m) {
    std::string axis = "mixed";
    for (int a = 0; a < 3; ++a)
      if (crystal::mode_weight_along(c, m, Vec3::Unit(a)) > 1.0 - 1e-9) axis = names[a];
    const double w = c.mode_frequencies[static_cast<Eigen::Index>(m)];
    if (!lowest.count(axis)) lowest[axis] = w;
    const double ratio = w / lowest[axis];
    csv::Row r;
    r << static_cast<unsigned long>(m) << w << w / (2 * pi) << axis << ratio;
    t.row(r);
    o.summary.push_back({axis + ".ratio." + std::to_string(seen[axis]++), ratio});
  }
  o.files["modes.csv"] = t.str();
  std::ostringstream crystal_csv;
  if (b.drive) {
    const auto eta = crystal::lamb_dicke(c, s.trap.species, s.drive->wavevector);
    crystal::write_csv(crystal_csv, c, &eta);
  } else {
    crystal::write_csv(crystal_csv, c);
  }
  o.files["crystal.csv"] = crystal_csv.str();
  o.summary.insert(o.summary.begin(), {"mode_count", static_cast<double>(c.mode_count())});
}

inline void run_rabi(const Scenario& s, const Built& b, const Settings& st, Outcome& o) {
  const auto& d = *b.drive;
  const auto& r = *s.rabi;
  const auto m = static_cast<Eigen::Index>(b.reference);
  const int n_out = r.n_in + r.sideband;
  const double eta = d.eta(m, 0), w_m = d.mode_frequencies[b.reference];
  drive::RabiProblem p;
  p.delta = drive::rabi_detuning(d.detuning, n_out, r.n_in, w_m);
  p.coupling = drive::rabi_coupling(n_out, r.n_in, d.rabi[0], eta, d.alpha[1], d.alpha[2], d.phase[0]);
  if (auto w = drive::resolved_sideband_warning(p, w_m)) o.warnings.push_back(*w);

  const std::string engine = st.engine.value_or(s.experiment.engine);
  const bool integrate = engine != "analytic";
  hilbert::PropagateOptions opts;
  opts.tol = st.propagate_tol;
  hilbert::SpaceSpec two;
  two.n_spins = 1;
  const hilbert::DenseGenerator gen(2, [p](double t) -> CMatrix { return drive::rabi_hamiltonian(p, t); });
  hilbert::SimState psi = hilbert::SimState::basis(two, 0, {});

  Table t(integrate ? std::vector<std::string>{"t", "p_up", "p_down", "p_up_integrated"}
                    : std::vector<std::string>{"t", "p_up", "p_down"});
  Table plot({"t", "fluorescence"});
  double max_err = 0.0, t_prev = 0.0;
  for (std::size_t k = 0; k <= r.samples; ++k) {
    const double t_k = r.duration * static_cast<double>(k) / static_cast<double>(std::max<std::size_t>(r.samples, 1));
    drive::RabiProblem pk = p;
    pk.t = t_k;
    const Eigen::Vector2cd c = drive::rabi_solution(pk, Eigen::Vector2cd(0.0, 1.0));
    const double p_up = std::norm(c[0]), p_down = std::norm(c[1]);
    csv::Row row;
    row << t_k << p_up << p_down;
    if (integrate) {
      if (t_k > t_prev) psi = hilbert::propagate(gen, psi, t_prev, t_k, opts);
      t_prev = t_k;
      max_err = std::max({max_err, std::abs(psi.amplitudes[1] - c[0]), std::abs(psi.amplitudes[0] - c[1])});
      row << std::norm(psi.amplitudes[1]);
    }
    t.row(row);
    csv::Row pr;
    pr << t_k << p_down;
    plot.row(pr);
  }
  o.files["rabi.csv"] = t.str();
  if (std::count(s.output.formats.begin(), s.output.formats.end(), "plot")) o.files["plot_rabi.csv"] = plot.str();
  o.summary = {{"n_in", static_cast<double>(r.n_in)},
               {"n_out", static_cast<double>(n_out)},
               {"eta", eta},
               {"rabi_rate", std::abs(p.coupling)},
               {"detuning", p.delta},
               {"generalized_rabi", std::sqrt(0.25 * p.delta * p.delta + std::norm(p.coupling))}};
  if (integrate) {
    o.summary.push_back({"max_amplitude_error", max_err});
    add_check(o, "rabi_closed_form_vs_integration", max_err, st.tol);
    norm_check(o, psi, st.tol);
  }
}

/// Upper bound on |lambda| over a program: circle diameter per displacement, summed.
inline double displacement_bound(const drive::DriveSpec& d, std::size_t displacements) {
  const double kappa = std::max(std::abs(d.kappa(true)), std::abs(d.kappa(false)));
  double best = 0.0;
  for (std::size_t m = 0; m < d.modes(); ++m) {
    double force = 0.0;
    for (std::size_t i = 0; i < d.ions(); ++i)
      force += std::abs(d.rabi[i] * d.eta(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(i))) * kappa;
    best = std::max(best, 2.0 * force / std::abs(d.detunings[m]));
  }
  return best * static_cast<double>(std::max<std::size_t>(displacements, 1));
}

/// Fock tuples of a thermal state (mean occupation nbar per mode) and their weights.
inline std::vector<std::pair<std::vector<int>, double>> thermal_tuples(double nbar, std::size_t modes, int& cut,
                                                                      double& dropped) {
  cut = 0;
  dropped = 0.0;
  if (nbar <= 0.0) return {{std::vector<int>(modes, 0), 1.0}};
  const double q = nbar / (nbar + 1.0);
  while (std::pow(q, cut + 1) * static_cast<double>(modes) > 1e-4) ++cut;
  std::vector<std::pair<std::vector<int>, double>> out;
  std::vector<int> fock(modes, 0);
  double total = 0.0;
  while (true) {
    double w = 1.0;
    for (int k : fock) w *= (1.0 - q) * std::pow(q, k);
    out.push_back({fock, w});
    total += w;
    std::size_t m = 0;
    while (m < modes && ++fock[m] > cut) fock[m++] = 0;
    if (m == modes) break;
  }
  dropped = 1.0 - total;
  for (auto& p : out) p.second /= total;
  return out;
}

struct Mixture {
  CMatrix rho01;
  std::vector<double> populations;
  std::vector<double> parity;
  std::optional<double> engine_overlap;
  double norm_drift = 0.0;
  std::optional<gate::PhaseLedger> ledger;
  double gate_time = 0.0;
  std::vector<std::string> warnings;
};

inline Mixture run_mixture(const gate::PulseProgram& program, const hilbert::SpaceSpec& space,
                           const std::vector<std::pair<std::vector<int>, double>>& tuples, gate::Engine engine,
                           const gate::ProgramOptions& popts, const std::vector<double>& phases) {
  Mixture mx;
  mx.rho01 = CMatrix::Zero(4, 4);
  mx.populations.assign(space.spin_dimension(), 0.0);
  mx.parity.assign(phases.size(), 0.0);
  for (const auto& [fock, w] : tuples) {
    const auto res = gate::run_program(program, hilbert::SimState::basis(space, 0, fock), engine, popts);
    if (!mx.ledger) {
      mx.ledger = res.ledger;
      mx.gate_time = res.gate_time;
      append(mx.warnings, res.warnings);
    }
    append(mx.warnings, res.state.diagnostics.warnings);
    if (space.n_spins >= 2) {
      mx.rho01 += w * hilbert::reduced_density(res.state, {0, 1});
      const auto par = gate::parity_scan(res.state, phases);
      for (std::size_t k = 0; k < phases.size(); ++k) mx.parity[k] += w * par[k];
    }
    const auto pop = hilbert::measure_populations(res.state);
    for (std::size_t c = 0; c < pop.size(); ++c) mx.populations[c] += w * pop[c];
    if (res.engine_overlap) mx.engine_overlap = std::min(mx.engine_overlap.value_or(1.0), *res.engine_overlap);
    mx.norm_drift = std::max(mx.norm_drift, std::abs(res.state.amplitudes.norm() - 1.0));
  }
  return mx;
}

inline void run_gate(const Scenario& s, const Built& b, const Settings& st, Outcome& o) {
  drive::DriveSpec d = *b.drive;
  const std::size_t n = d.ions();
  gate::ProgramOptions popts;
  popts.propagate.tol = st.propagate_tol;
  const std::uint64_t du = 0b01, dd = 0b00;

  if (s.drive->target_phase) {
    if (n < 2) throw DomainError("drive.target_phase needs two ions");
    const auto probe_space = gate_space(d, 1);
    const auto probe = gate::run_program(make_program(s, d, b.reference),
                                         hilbert::SimState::basis(probe_space, 0, std::vector<int>(d.modes(), 0)),
                                         gate::Engine::Analytic, popts);
    const double actual = probe.ledger->geometric_total(du) - probe.ledger->geometric_total(dd);
    const double ratio = *s.drive->target_phase / actual;
    if (!(ratio > 0.0) || !std::isfinite(ratio))
      throw DomainError("drive.target_phase: the program's differential phase has the opposite sign or vanishes");
    for (auto& r : d.rabi) r *= std::sqrt(ratio);
  }

  const auto program = make_program(s, d, b.reference);
  std::size_t displacements = 0;
  for (const auto& seg : program.segments) displacements += std::holds_alternative<gate::Displacement>(seg);
  int cut = 0;
  double dropped = 0.0;
  const auto tuples = thermal_tuples(s.experiment.nbar, d.modes(), cut, dropped);
  int n_max = s.experiment.n_max;
  if (n_max == 0) n_max = hilbert::truncation_for(displacement_bound(d, displacements)) + cut;
  if (cut > n_max) throw DomainError("experiment.n_max is below the thermal cutoff " + std::to_string(cut));
  if (dropped > 0.0) {
    std::ostringstream msg;
    msg << "thermal state truncated at n = " << cut << " per mode; dropped weight " << dropped;
    o.warnings.push_back(msg.str());
  }
  const auto space = gate_space(d, n_max);

  std::vector<double> phases;
  if (n >= 2)
    for (std::size_t k = 0; k < s.experiment.parity_points; ++k)
      phases.push_back(pi * static_cast<double>(k) / static_cast<double>(s.experiment.parity_points));
  const auto engine = engine_from(st.engine.value_or(s.experiment.engine));
  const Mixture mx = run_mixture(program, space, tuples, engine, popts, phases);
  append(o.warnings, mx.warnings);

  const auto& l = *mx.ledger;
  Table lt({"config", "mode", "geometric", "dynamic", "global", "displacement_re", "displacement_im"});
  for (std::size_t c = 0; c < l.configs(); ++c)
    for (std::size_t m = 0; m < l.n_modes; ++m) {
      csv::Row r;
      r << hilbert::spin_label(c, n) << static_cast<unsigned long>(m) << l.geometric[c][m] << l.dynamic[c][m]
        << l.global[c][m] << l.displacement[c][m].real() << l.displacement[c][m].imag();
      lt.row(r);
    }
  o.files["ledger.csv"] = lt.str();

  double ratio_ref = 0.0, max_dyn = 0.0, first_dyn = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    ratio_ref = std::max(ratio_ref, std::abs(d.rabi[i] * d.eta(static_cast<Eigen::Index>(b.reference), static_cast<Eigen::Index>(i)) /
                                             d.detunings[b.reference]));
  for (std::size_t c = 0; c < l.configs(); ++c)
    for (std::size_t m = 0; m < l.n_modes; ++m) max_dyn = std::max(max_dyn, std::abs(l.dynamic[c][m]));
  for (const auto& seg : program.segments)
    if (const auto* disp = std::get_if<gate::Displacement>(&seg)) {
      const auto one = gate::analytic_propagator(disp->drive, 0.0, disp->duration);
      for (const auto& row : one.dynamic)
        for (double v : row) first_dyn = std::max(first_dyn, std::abs(v));
      break;
    }
  o.summary = {{"gate_time", mx.gate_time},
               {"n_max", static_cast<double>(n_max)},
               {"rabi_frequency", d.rabi[0]},
               {"rabi_eta_over_detuning", ratio_ref},
               {"max_residual_displacement", l.max_displacement()},
               {"max_abs_dynamic_phase", max_dyn},
               {"first_pulse_max_abs_dynamic_phase", first_dyn}};
  if (n >= 2) {
    const CMatrix& rho = mx.rho01;
    o.summary.push_back({"differential_geometric_phase", l.geometric_total(du) - l.geometric_total(dd)});
    o.summary.push_back({"bell_fidelity", 0.5 * (rho(0, 0).real() + rho(3, 3).real()) + std::abs(rho(0, 3))});
    Table pt({"phi", "parity"});
    for (std::size_t k = 0; k < phases.size(); ++k) {
      csv::Row r;
      r << phases[k] << mx.parity[k];
      pt.row(r);
    }
    o.files["parity.csv"] = pt.str();
    if (phases.size() >= 3) {
      const auto f = gate::fit_fringe(phases, mx.parity);
      o.summary.push_back({"parity_contrast", f.contrast});
      o.summary.push_back({"fidelity_estimate", 0.5 * (rho(0, 0).real() + rho(3, 3).real()) + 0.5 * f.contrast});
    }
  }
  for (std::size_t c = 0; c < mx.populations.size(); ++c)
    o.summary.push_back({"p_" + hilbert::spin_label(c, n), mx.populations[c]});
  if (n == 2 && d.modes() == 2) {
    const auto rep = gate::commensurate_phase_check(d, b.reference, 1 - b.reference);
    append(o.warnings, rep.warnings);
    o.summary.push_back({"detuning_ratio", rep.detuning_ratio});
    o.summary.push_back({"single_pulse_differential", rep.differential});
    o.summary.push_back({"single_pulse_residual_displacement", rep.max_residual_displacement});
    o.summary.push_back({"dynamic_ratio", rep.dynamic_ratio});
  }
  if (mx.engine_overlap) {
    o.summary.push_back({"engine_overlap", *mx.engine_overlap});
    add_check(o, "engine_disagreement", 1.0 - *mx.engine_overlap, st.tol);
  }
  add_check(o, "norm_drift", mx.norm_drift, st.tol);

  if (s.experiment.shots > 0) {
    // Sampling only reads populations, so a spin-only state with amplitudes sqrt(P) stands in for the mixture.
    hilbert::SimState pop_state{ising::spin_space(n), CVector::Zero(static_cast<Eigen::Index>(mx.populations.size())), {}};
    for (std::size_t c = 0; c < mx.populations.size(); ++c)
      pop_state.amplitudes[static_cast<Eigen::Index>(c)] = std::sqrt(std::max(0.0, mx.populations[c]));
    const auto counts = hilbert::sample_shots(pop_state, s.experiment.shots, st.seed.value_or(s.experiment.seed));
    Table sh({"config", "count"});
    for (std::size_t c = 0; c < counts.size(); ++c) {
      csv::Row r;
      r << hilbert::spin_label(c, n) << static_cast<unsigned long>(counts[c]);
      sh.row(r);
    }
    o.files["shots.csv"] = sh.str();
  }

  if (std::count(s.output.formats.begin(), s.output.formats.end(), "plot")) {
    // Fluorescence (ions in the bright state |down>) against total displacement time.
    Table pt({"total_displacement_time", "fluorescence"});
    const std::size_t points = 64;
    for (std::size_t k = 0; k <= points; ++k) {
      const double f = static_cast<double>(k) / points;
      const auto mk = run_mixture(make_program(s, d, b.reference, f), space, tuples, gate::Engine::Analytic, popts, {});
      double bright = 0.0;
      for (std::size_t c = 0; c < mk.populations.size(); ++c)
        bright += mk.populations[c] * static_cast<double>(n - static_cast<std::size_t>(std::popcount(c)));
      csv::Row r;
      r << mk.gate_time << bright;
      pt.row(r);
    }
    o.files["plot_evolution.csv"] = pt.str();
  }
}

struct IsingSetup {
  ising::IsingModel model;
  double field = 0.0;
  double duration = 0.0;
};

inline double field_magnitude(const Scenario& s, double max_j) {
  const auto& is = *s.ising;
  if (is.field) return *is.field;
  if (is.ratio && max_j > 0.0) return -max_j / *is.ratio;
  throw DomainError("ising: give field, or ratio with drive couplings");
}

inline IsingSetup ising_setup(const Scenario& s, const Built& b) {
  const auto& is = *s.ising;
  IsingSetup r;
  if (is.couplings == "uniform") {
    if (!is.field || !is.ratio) throw DomainError("ising: uniform couplings need field and ratio");
    r.field = *is.field;
    const double j = (is.order == "ferromagnetic" ? -1.0 : 1.0) * *is.ratio * std::abs(r.field);
    r.model = ising::IsingModel::uniform(is.spins, j, r.field);
  } else {
    const RMatrix J = ising::coupling_matrix(*b.drive);
    r.field = field_magnitude(s, J.cwiseAbs().maxCoeff());
    r.model = ising::model_from_drive(*b.drive, std::vector<double>(b.drive->ions(), r.field), is.compensate);
  }
  if (r.field == 0.0) throw DomainError("ising: field must be nonzero");
  if (is.duration)
    r.duration = *is.duration;
  else if (is.duration_field)
    r.duration = *is.duration_field / std::abs(r.field);
  else
    throw DomainError("ising: give duration or duration_field");
  return r;
}

inline void run_ising_ramp(const Scenario& s, const Built& b, const Settings& st, Outcome& o) {
  const auto& is = *s.ising;
  const auto setup = ising_setup(s, b);
  const std::size_t n = setup.model.ions();
  ising::RampSchedule sched;
  sched.total = setup.duration;
  sched.samples = is.samples;
  if (is.ramp == "linear")
    sched.coupling = {ising::Profile::Shape::Linear, 0.0, 1.0, 0.0};
  else if (is.ramp == "exponential")
    sched.coupling = {ising::Profile::Shape::Exponential, 0.0, 1.0, *is.tau_field / std::abs(setup.field)};
  else
    sched.coupling = {ising::Profile::Shape::Constant, 1.0, 1.0, 0.0};
  ising::RampOptions opts;
  opts.propagate.tol = st.propagate_tol;
  const auto res = ising::adiabatic_run(setup.model, sched, ising::all_plus_x(n), opts);
  append(o.warnings, res.warnings);

  std::vector<std::string> head = {"t", "magnetization_z", "magnetization_x", "ghz_fidelity"};
  for (std::size_t c = 0; c < (std::size_t{1} << n); ++c) head.push_back("p_" + hilbert::spin_label(c, n));
  Table rt(head);
  for (const auto& smp : res.trajectory) {
    csv::Row r;
    r << smp.t << smp.magnetization_z << smp.magnetization_x << smp.ghz_fidelity;
    for (double p : smp.populations) r << p;
    rt.row(r);
  }
  o.files["ramp.csv"] = rt.str();
  Table gt({"t", "gap"});
  for (const auto& g : res.gaps) {
    csv::Row r;
    r << g.t << g.gap;
    gt.row(r);
  }
  o.files["gaps.csv"] = gt.str();
  Table jt = [&] {
    std::vector<std::string> h = {"ion"};
    for (std::size_t j = 0; j < n; ++j) h.push_back(std::to_string(j));
    return Table(h);
  }();
  for (std::size_t i = 0; i < n; ++i) {
    csv::Row r;
    r << static_cast<unsigned long>(i);
    for (std::size_t j = 0; j < n; ++j) r << setup.model.J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    jt.row(r);
  }
  o.files["couplings.csv"] = jt.str();

  const auto& pop = res.trajectory.back().populations;
  const double ghz = hilbert::fidelity(ising::ghz_state(n), res.state.amplitudes);
  double p_mixed_min = 1.0, p_mixed_max = 0.0;
  for (std::size_t c = 1; c + 1 < pop.size(); ++c) {
    p_mixed_min = std::min(p_mixed_min, pop[c]);
    p_mixed_max = std::max(p_mixed_max, pop[c]);
  }
  o.summary = {{"spins", static_cast<double>(n)},
               {"field", setup.field},
               {"max_abs_coupling", setup.model.J.cwiseAbs().maxCoeff()},
               {"coupling_ratio", setup.model.J.cwiseAbs().maxCoeff() / std::abs(setup.field)},
               {"duration", setup.duration},
               {"ghz_overlap", ghz},
               {"p_aligned", pop.front() + pop.back()},
               {"p_mixed_min", p_mixed_min},
               {"p_mixed_max", p_mixed_max},
               {"ground_overlap", res.ground_overlap},
               {"min_gap", res.min_gap},
               {"adiabaticity", setup.duration * res.min_gap},
               {"magnetization_x", res.trajectory.back().magnetization_x}};
  if (n >= 2) {
    std::vector<double> phases;
    for (std::size_t k = 0; k < s.experiment.parity_points; ++k)
      phases.push_back(pi * static_cast<double>(k) / static_cast<double>(s.experiment.parity_points));
    o.summary.push_back({"parity_contrast", gate::fit_fringe(phases, gate::parity_scan(res.state, phases)).contrast});
  }
  for (std::size_t c = 0; c < pop.size(); ++c) o.summary.push_back({"p_" + hilbert::spin_label(c, n), pop[c]});
  norm_check(o, res.state, st.tol);
}

inline void run_ising_crossover(const Scenario& s, const Settings& st, Outcome& o) {
  const auto& is = *s.ising;
  if (!is.field) throw DomainError("ising-crossover needs ising.field");
  const double b = *is.field, ts = is.time_scale_field / std::abs(b);
  ising::RampOptions opts;
  opts.propagate.tol = st.propagate_tol;
  const auto values = ising::crossover_curve(is.spins, is.ratios, b, ts, is.samples, opts);
  Table t({"ratio", "p_aligned", "p_aligned_ground_state"});
  for (std::size_t k = 0; k < is.ratios.size(); ++k) {
    const auto m = ising::IsingModel::uniform(is.spins, -is.ratios[k] * std::abs(b), b);
    const auto sp = ising::spectrum(ising::effective_hamiltonian(m), 1);
    const CVector g = sp.vectors.col(0);
    const double oracle = std::norm(g[0]) + std::norm(g[g.size() - 1]);
    csv::Row r;
    r << is.ratios[k] << values[k] << oracle;
    t.row(r);
  }
  o.files["crossover.csv"] = t.str();
  o.summary = {{"spins", static_cast<double>(is.spins)},
               {"max_log_slope", ising::max_log_slope(is.ratios, values)},
               {"p_aligned_first", values.front()},
               {"p_aligned_last", values.back()}};
}

inline void run_ising_couplings(const Scenario& s, const Built& b, Outcome& o) {
  const auto& d = *b.drive;
  const RMatrix J = ising::coupling_matrix(d);
  const std::size_t n = d.ions();
  std::vector<std::string> h = {"ion"};
  for (std::size_t j = 0; j < n; ++j) h.push_back(std::to_string(j));
  Table jt(h);
  for (std::size_t i = 0; i < n; ++i) {
    csv::Row r;
    r << static_cast<unsigned long>(i);
    for (std::size_t j = 0; j < n; ++j) r << J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    jt.row(r);
  }
  o.files["J.csv"] = jt.str();
  Table pt({"i", "j", "distance", "coupling", "label"});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double jij = J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      csv::Row r;
      r << static_cast<unsigned long>(i) << static_cast<unsigned long>(j)
        << (b.crystal.position(i) - b.crystal.position(j)).norm() << jij << ising::coupling_label(jij);
      pt.row(r);
    }
  o.files["pairs.csv"] = pt.str();
  const auto bias = ising::bias_field(d);
  Table bt({"ion", "bias"});
  for (std::size_t i = 0; i < n; ++i) {
    csv::Row r;
    r << static_cast<unsigned long>(i) << bias[i];
    bt.row(r);
  }
  o.files["bias.csv"] = bt.str();
  o.summary = {{"spins", static_cast<double>(n)}, {"max_abs_coupling", J.cwiseAbs().maxCoeff()}};
  if (n >= 3) {
    const auto fit = ising::fit_power_law(J);
    o.summary.push_back({"power_law_exponent", fit.exponent});
    o.summary.push_back({"power_law_prefactor", fit.prefactor});
    o.summary.push_back({"power_law_r_squared", fit.r_squared});
  }
  (void)s;
}

inline void run_exact_vs_effective(const Scenario& s, const Built& b, const Settings& st, Outcome& o) {
  const auto& is = *s.ising;
  const auto& d = *b.drive;
  if (!is.field) throw DomainError("exact-vs-effective needs ising.field");
  const double field = *is.field;
  double total = 0.0;
  if (is.duration)
    total = *is.duration;
  else if (is.duration_field)
    total = *is.duration_field / std::abs(field);
  else
    throw DomainError("exact-vs-effective needs ising.duration or ising.duration_field");
  const std::vector<double> bx(d.ions(), field);
  const CVector psi0 = ising::all_plus_x(d.ions());
  hilbert::PropagateOptions opts;
  opts.tol = st.propagate_tol;
  const int n_max = s.experiment.n_max > 0 ? s.experiment.n_max : hilbert::truncation_for(displacement_bound(d, 1));
  const auto rep = ising::exact_vs_effective(d, bx, psi0, total, n_max, is.samples, opts);
  append(o.warnings, rep.warnings);
  Table t({"t", "infidelity", "entropy", "population_difference"});
  for (const auto& smp : rep.samples) {
    csv::Row r;
    r << smp.t << smp.infidelity << smp.entropy << smp.population_difference;
    t.row(r);
  }
  o.files["comparison.csv"] = t.str();
  o.summary = {{"n_max", static_cast<double>(n_max)},
               {"coupling_parameter", rep.coupling_parameter},
               {"endpoint_infidelity", rep.endpoint_infidelity},
               {"max_entropy", rep.max_entropy},
               {"max_leakage", rep.max_leakage}};
  add_check(o, "leakage", rep.max_leakage, opts.leakage_threshold);
  if (s.experiment.scaling) {
    drive::DriveSpec half = d;
    for (auto& r : half.rabi) r *= 0.5;
    const auto h = ising::exact_vs_effective(half, bx, psi0, total, n_max, 1, opts);
    o.summary.push_back({"endpoint_infidelity_half", h.endpoint_infidelity});
    o.summary.push_back({"infidelity_ratio", rep.endpoint_infidelity / h.endpoint_infidelity});
  }
}

}  // namespace detail

/// Run one scenario without touching the filesystem.
inline Outcome execute(const Scenario& s, const Settings& st = Settings::from_environment()) {
  Outcome o;
  o.kind = s.experiment.kind;
  const auto b = detail::build(s);
  detail::append(o.warnings, b.crystal.warnings);
  const auto& k = s.experiment.kind;
  if (k == "modes")
    detail::run_modes(s, b, o);
  else if (k == "rabi")
    detail::run_rabi(s, b, st, o);
  else if (k == "gate")
    detail::run_gate(s, b, st, o);
  else if (k == "ising-ramp")
    detail::run_ising_ramp(s, b, st, o);
  else if (k == "ising-crossover")
    detail::run_ising_crossover(s, st, o);
  else if (k == "ising-couplings")
    detail::run_ising_couplings(s, b, o);
  else if (k == "exact-vs-effective")
    detail::run_exact_vs_effective(s, b, st, o);
  else
    throw DomainError("unknown experiment kind '" + k + "'");
  o.files["summary.csv"] = detail::summary_csv(o.summary);
  std::sort(o.warnings.begin(), o.warnings.end());
  o.warnings.erase(std::unique(o.warnings.begin(), o.warnings.end()), o.warnings.end());
  return o;
}

// ---------------------------------------------------------------------------
// Writing

inline nlohmann::json manifest(const Scenario& s, const Outcome& o, const Settings& st, double wall_time) {
  nlohmann::json j;
  j["scenario"] = s.name;
  j["kind"] = o.kind;
  j["scenario_hash"] = scenario::scenario_hash(s);
  j["version"] = TRAPSIM_VERSION;
  j["wall_time_s"] = wall_time;
  j["seed"] = st.seed.value_or(s.experiment.seed);
  j["tolerances"] = {{"invariant", st.tol}, {"integrator", st.propagate_tol}};
  j["warnings"] = o.warnings;
  auto checks = nlohmann::json::array();
  for (const auto& c : o.checks) checks.push_back({{"name", c.name}, {"value", c.value}, {"limit", c.limit}, {"pass", c.pass}});
  j["checks"] = checks;
  auto files = nlohmann::json::array();
  for (const auto& [name, content] : o.files)
    files.push_back({{"name", name}, {"fnv1a", scenario::hex64(scenario::fnv1a(content))}});
  j["files"] = files;
  j["status"] = o.ok() ? "ok" : "invariant breach";
  return j;
}

inline void write_outcome(const std::filesystem::path& dir, const Scenario& s, const Outcome& o, const Settings& st,
                          double wall_time) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, content] : o.files) {
    std::ofstream f(dir / name, std::ios::binary);
    f << content;
    if (!f) throw Error("cannot write " + (dir / name).string());
  }
  std::ofstream m(dir / "manifest.json");
  m << manifest(s, o, st, wall_time).dump(2) << "\n";
  std::ofstream c(dir / "scenario.yaml");
  c << scenario::serialize(s);
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Execute and write; returns 0 on success, 1 when an invariant check fails.
inline int run(const Scenario& s, const std::filesystem::path& out, const Settings& st = Settings::from_environment()) {
  const auto t0 = std::chrono::steady_clock::now();
  const Outcome o = execute(s, st);
  write_outcome(out, s, o, st, seconds_since(t0));
  return o.ok() ? 0 : 1;
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepPoint {
  std::vector<std::string> values;  // one per axis
  Scenario scenario;
  Outcome outcome;
  std::string error;
};

/// Cartesian product of the axes applied to the raw document.
inline std::vector<SweepPoint> expand_sweep(const YAML::Node& root, const std::vector<scenario::SweepAxis>& axes) {
  std::size_t total = 1;
  for (const auto& a : axes) total *= a.values.size();
  std::vector<SweepPoint> points;
  for (std::size_t k = 0; k < total; ++k) {
    YAML::Node doc = YAML::Clone(root);
    if (doc["experiment"] && doc["experiment"]["sweep"]) doc["experiment"].remove("sweep");
    SweepPoint p;
    std::size_t rem = k;
    for (std::size_t a = axes.size(); a-- > 0;) {
      const auto& ax = axes[a];
      const std::size_t idx = rem % ax.values.size();
      rem /= ax.values.size();
      p.values.insert(p.values.begin(), ax.values[idx]);
      scenario::set_path(doc, ax.parameter, ax.values[idx]);
    }
    p.scenario = scenario::from_node(doc);
    points.push_back(std::move(p));
  }
  return points;
}

/// Run all points on at most `jobs` worker threads; results keep sweep order.
inline void run_points(std::vector<SweepPoint>& points, const Settings& st) {
  const std::size_t workers = std::max<std::size_t>(1, std::min(st.jobs, points.size()));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k; (k = next++) < points.size();) {
      try {
        points[k].outcome = execute(points[k].scenario, st);
      } catch (const std::exception& e) {
        points[k].error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
}

/// One row per point: axis values, then the summary of each point (blank where a
/// point lacks a key).
inline std::string sweep_table(const std::vector<scenario::SweepAxis>& axes, const std::vector<SweepPoint>& points) {
  std::vector<std::string> head = {"point"};
  for (const auto& a : axes) head.push_back(a.parameter);
  std::vector<std::string> keys;
  for (const auto& p : points)
    for (const auto& kv : p.outcome.summary)
      if (std::find(keys.begin(), keys.end(), kv.first) == keys.end()) keys.push_back(kv.first);
  for (const auto& k : keys) head.push_back(k);
  head.push_back("status");
  detail::Table t(head);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    csv::Row r;
    r << static_cast<unsigned long>(i);
    for (const auto& v : p.values) r << v;
    for (const auto& k : keys) {
      if (p.error.empty() && p.outcome.has(k))
        r << p.outcome.value(k);
      else
        r << "";
    }
    r << (p.error.empty() ? (p.outcome.ok() ? "ok" : "invariant breach") : "error: " + p.error);
    t.row(r);
  }
  return t.str();
}

/// Sweep the scenario text over `axes` (the file's own axes when empty) and
/// write sweep.csv plus one subdirectory per point.
inline int run_sweep(const std::string& text, std::vector<scenario::SweepAxis> axes, const std::filesystem::path& out,
                     const Settings& st = Settings::from_environment()) {
  const auto t0 = std::chrono::steady_clock::now();
  const YAML::Node root = scenario::load_text(text);
  const Scenario base = scenario::from_node(root);
  if (axes.empty()) axes = base.experiment.sweep;
  auto points = expand_sweep(root, axes);
  run_points(points, st);
  std::filesystem::create_directories(out);
  {
    std::ofstream f(out / "sweep.csv", std::ios::binary);
    f << sweep_table(axes, points);
  }
  int status = 0;
  std::vector<std::string> warnings;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (!p.error.empty()) {
      warnings.push_back("point " + std::to_string(i) + ": " + p.error);
      status = 1;
      continue;
    }
    char name[32];
    std::snprintf(name, sizeof name, "point_%03zu", i);
    write_outcome(out / name, p.scenario, p.outcome, st, 0.0);
    if (!p.outcome.ok()) status = 1;
  }
  nlohmann::json j;
  j["scenario"] = base.name;
  j["kind"] = "sweep";
  j["scenario_hash"] = scenario::scenario_hash(base);
  j["version"] = TRAPSIM_VERSION;
  j["wall_time_s"] = seconds_since(t0);
  j["tolerances"] = {{"invariant", st.tol}, {"integrator", st.propagate_tol}};
  j["points"] = points.size();
  j["jobs"] = st.jobs;
  j["warnings"] = warnings;
  j["status"] = status == 0 ? "ok" : "failed";
  std::ofstream m(out / "manifest.json");
  m << j.dump(2) << "\n";
  return status;
}

// ---------------------------------------------------------------------------
// Self-verification

/// Operator identities plus a handful of invariants with known closed forms.
inline std::vector<Check> verify_suite(std::uint64_t seed, int draws = 100) {
  std::vector<Check> out;
  for (const auto& r : hilbert::verify_identities(draws, seed))
    out.push_back({"identity: " + r.name, r.max_residual, 1e-8, r.max_residual < 1e-8});

  const auto species = crystal::IonSpecies::from_atomic(9.0121831, 1);
  const auto two = crystal::solve_crystal(crystal::TrapConfiguration::linear(species, 2, 2 * pi * 10e6, 2 * pi * 10e6, 2 * pi * 1e6));
  const auto ax = crystal::modes_along(two, Vec3::UnitZ());
  const double e2 = std::abs(two.mode_frequencies[static_cast<Eigen::Index>(ax.at(1))] /
                                 two.mode_frequencies[static_cast<Eigen::Index>(ax.at(0))] -
                             std::sqrt(3.0));
  out.push_back({"two-ion stretch/com ratio", e2, 1e-10, e2 < 1e-10});

  std::mt19937_64 rng(seed);
  double unitarity = 0.0;
  for (int k = 0; k < 10; ++k) {
    const cplx lambda(0.5 * (hilbert::uniform01(rng) - 0.5), 0.5 * (hilbert::uniform01(rng) - 0.5));
    const CMatrix d = hilbert::displacement_matrix(40, lambda);
    unitarity = std::max(unitarity, (d.leftCols(13).adjoint() * d.leftCols(13) -
                                     CMatrix::Identity(13, 13)).cwiseAbs().maxCoeff());
  }
  out.push_back({"displacement unitarity (interior)", unitarity, 1e-8, unitarity < 1e-8});

  double rabi_err = 0.0;
  for (int k = 0; k < 10; ++k) {
    drive::RabiProblem p;
    p.delta = 2.0 * (hilbert::uniform01(rng) - 0.5);
    p.coupling = cplx(hilbert::uniform01(rng), hilbert::uniform01(rng) - 0.5);
    p.t = 5.0 * hilbert::uniform01(rng);
    const Eigen::Matrix2cd u = drive::rabi_matrix(p);
    rabi_err = std::max(rabi_err, (u.adjoint() * u - Eigen::Matrix2cd::Identity()).cwiseAbs().maxCoeff());
  }
  out.push_back({"rabi propagator unitarity", rabi_err, 1e-12, rabi_err < 1e-12});
  return out;
}

}  // namespace trapsim::runner
