#pragma once

// Declarative experiment files (YAML). Every physical value carries a unit;
// unknown keys are rejected with the offending line.

#include "trapsim/core.hpp"
#include "trapsim/crystal.hpp"
#include "trapsim/drive.hpp"
#include "trapsim/ising.hpp"
#include "trapsim/units.hpp"

#include <yaml-cpp/yaml.h>

#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace trapsim::scenario {

using units::Dimension;

class SchemaError : public DomainError {
 public:
  SchemaError(const std::string& field, int line, const std::string& what)
      : DomainError(field + (line >= 0 ? " (line " + std::to_string(line + 1) + ")" : "") + ": " + what),
        field_(field),
        line_(line) {}
  const std::string& field() const { return field_; }
  int line() const { return line_; }

 private:
  std::string field_;
  int line_;
};

// ---------------------------------------------------------------------------
// Schema types

struct Trap {
  crystal::IonSpecies species;
  std::size_t ions = 0;
  std::optional<std::array<double, 3>> linear;  // omega_x, omega_y, omega_z
  std::vector<crystal::Well> wells;

  crystal::TrapConfiguration configuration() const {
    if (linear) return crystal::TrapConfiguration::linear(species, ions, (*linear)[0], (*linear)[1], (*linear)[2]);
    return {species, wells};
  }
  bool operator==(const Trap&) const = default;
};

struct ModeSelection {
  std::string along = "z";        // x | y | z
  std::vector<std::size_t> pick;  // indices into the selection (ascending frequency); empty: all
  bool operator==(const ModeSelection&) const = default;
};

struct Drive {
  drive::Branch branch = drive::Branch::Z;
  std::vector<double> rabi;   // one value (all ions) or one per ion
  std::vector<double> phase;
  std::array<double, 4> alpha{};
  Vec3 wavevector = Vec3::Zero();
  ModeSelection modes;
  std::size_t detuning_mode = 0;          // reference mode, index into the selection
  std::optional<double> detuning;          // omega_I - omega_ref (z) or omega_I - omega_updown (xy)
  std::optional<double> drive_frequency;   // alternative to detuning (z-branch)
  std::optional<double> target_phase;      // rescale Omega for this differential geometric phase

  bool operator==(const Drive& o) const {
    return branch == o.branch && rabi == o.rabi && phase == o.phase && alpha == o.alpha &&
           wavevector == o.wavevector && modes == o.modes && detuning_mode == o.detuning_mode &&
           detuning == o.detuning && drive_frequency == o.drive_frequency && target_phase == o.target_phase;
  }
};

struct Step {
  enum class Kind { Rotate, Displace, Idle };
  Kind kind = Kind::Idle;
  double theta = 0.0;
  double phi = 0.0;
  std::vector<std::size_t> ions;
  std::optional<double> duration;
  std::optional<double> loops;  // displace: multiples of 2 pi / |reference detuning|
  bool operator==(const Step&) const = default;
};

struct SweepAxis {
  std::string parameter;            // dotted path into the document, e.g. drive.rabi
  std::vector<std::string> values;  // substituted verbatim
  bool operator==(const SweepAxis&) const = default;
};

struct Rabi {
  int sideband = 0;  // -1 red, 0 carrier, +1 blue
  int n_in = 0;
  double duration = 0.0;
  std::size_t samples = 50;
  bool operator==(const Rabi&) const = default;
};

struct Ising {
  // Coupling source: "drive" (J from the drive block) or "uniform" (J = -ratio |B| ferro / +ratio |B| antiferro).
  std::string couplings = "drive";
  std::string order = "ferromagnetic";  // uniform couplings only
  std::size_t spins = 2;                // uniform couplings only
  std::optional<double> field;          // B_x (< 0: |+x...> is the field ground state)
  std::optional<double> ratio;          // |J|max / |B|; fixes B (drive) or J (uniform)
  std::optional<double> duration;
  std::optional<double> duration_field;  // duration in units of 1/|B|
  std::string ramp = "linear";           // linear | exponential | constant (coupling profile)
  std::optional<double> tau_field;       // exponential time constant in units of 1/|B|
  bool compensate = true;
  std::size_t samples = 256;
  std::vector<double> ratios;            // crossover
  double time_scale_field = 10.0;        // crossover: time per e-fold, units of 1/|B|
  bool operator==(const Ising&) const = default;
};

struct Experiment {
  std::string kind;  // modes | rabi | gate | ising-ramp | ising-crossover | ising-couplings | exact-vs-effective
  std::string engine = "analytic";
  int n_max = 0;  // 0: pick from the largest displacement
  double nbar = 0.0;  // gate: thermal mean occupation of every mode
  std::uint64_t shots = 0;
  std::uint64_t seed = 1;
  std::size_t parity_points = 32;
  bool scaling = false;  // exact-vs-effective: repeat with Omega halved
  std::vector<SweepAxis> sweep;
  bool operator==(const Experiment&) const = default;
};

struct Output {
  std::string directory;
  std::vector<std::string> formats = {"csv"};
  bool operator==(const Output&) const = default;
};

struct Scenario {
  std::string name;
  Trap trap;
  std::optional<Drive> drive;
  std::vector<Step> program;
  Experiment experiment;
  std::optional<Rabi> rabi;
  std::optional<Ising> ising;
  Output output;
  bool operator==(const Scenario&) const = default;
};

inline const std::set<std::string>& known_kinds() {
  static const std::set<std::string> k = {"modes",           "rabi",           "gate",
                                          "ising-ramp",      "ising-crossover", "ising-couplings",
                                          "exact-vs-effective"};
  return k;
}

// ---------------------------------------------------------------------------
// Reading

namespace detail {

inline int line_of(const YAML::Node& n) { return n.Mark().line; }

/// Map node with key bookkeeping: every key must be consumed.
class Fields {
 public:
  Fields(const YAML::Node& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.IsMap()) throw SchemaError(path_, line_of(node_), "expected a mapping");
  }

  const std::string& path() const { return path_; }
  std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  std::optional<YAML::Node> get(const std::string& key) {
    used_.insert(key);
    const YAML::Node n = node_[key];
    if (!n.IsDefined() || n.IsNull()) return std::nullopt;
    return n;
  }

  YAML::Node need(const std::string& key) {
    auto n = get(key);
    if (!n) throw SchemaError(sub(key), line_of(node_), "required field is missing");
    return *n;
  }

  void finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      const auto key = it->first.as<std::string>();
      if (!used_.count(key)) throw SchemaError(sub(key), line_of(it->first), "unknown key");
    }
  }

 private:
  YAML::Node node_;
  std::string path_;
  std::set<std::string> used_;
};

inline std::string scalar(const YAML::Node& n, const std::string& path) {
  if (!n.IsScalar()) throw SchemaError(path, line_of(n), "expected a scalar");
  return n.Scalar();
}

inline double quantity(const YAML::Node& n, const std::string& path, Dimension d) {
  try {
    return units::parse(scalar(n, path), d);
  } catch (const SchemaError&) {
    throw;
  } catch (const DomainError& e) {
    throw SchemaError(path, line_of(n), e.what());
  }
}

/// Scalar or sequence of quantities.
inline std::vector<double> quantities(const YAML::Node& n, const std::string& path, Dimension d) {
  std::vector<double> out;
  if (n.IsSequence()) {
    for (std::size_t k = 0; k < n.size(); ++k) out.push_back(quantity(n[k], path + "." + std::to_string(k), d));
  } else {
    out.push_back(quantity(n, path, d));
  }
  return out;
}

inline std::int64_t integer(const YAML::Node& n, const std::string& path) {
  const std::string s = scalar(n, path);
  std::int64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw SchemaError(path, line_of(n), "expected an integer");
  return v;
}

inline std::size_t count(const YAML::Node& n, const std::string& path) {
  const auto v = integer(n, path);
  if (v < 0) throw SchemaError(path, line_of(n), "must be non-negative");
  return static_cast<std::size_t>(v);
}

inline bool boolean(const YAML::Node& n, const std::string& path) {
  const std::string s = scalar(n, path);
  if (s == "true") return true;
  if (s == "false") return false;
  throw SchemaError(path, line_of(n), "expected true or false");
}

inline std::string choice(const YAML::Node& n, const std::string& path, const std::set<std::string>& allowed) {
  const std::string s = scalar(n, path);
  if (!allowed.count(s)) {
    std::string list;
    for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
    throw SchemaError(path, line_of(n), "'" + s + "' is not one of: " + list);
  }
  return s;
}

inline Vec3 vec3(const YAML::Node& n, const std::string& path, Dimension d) {
  if (!n.IsSequence() || n.size() != 3) throw SchemaError(path, line_of(n), "expected a list of three values");
  return {quantity(n[0], path + ".0", d), quantity(n[1], path + ".1", d), quantity(n[2], path + ".2", d)};
}

inline std::vector<std::size_t> indices(const YAML::Node& n, const std::string& path) {
  std::vector<std::size_t> out;
  if (!n.IsSequence()) throw SchemaError(path, line_of(n), "expected a list of indices");
  for (std::size_t k = 0; k < n.size(); ++k) out.push_back(count(n[k], path + "." + std::to_string(k)));
  return out;
}

inline Trap read_trap(const YAML::Node& node) {
  Fields f(node, "trap");
  Trap t;
  {
    Fields s(f.need("species"), "trap.species");
    t.species.mass = quantity(s.need("mass"), s.sub("mass"), Dimension::Mass);
    t.species.charge = quantity(s.need("charge"), s.sub("charge"), Dimension::Charge);
    s.finish();
  }
  if (auto lin = f.get("linear")) {
    Fields l(*lin, "trap.linear");
    t.linear = std::array<double, 3>{quantity(l.need("x"), l.sub("x"), Dimension::Frequency),
                                     quantity(l.need("y"), l.sub("y"), Dimension::Frequency),
                                     quantity(l.need("z"), l.sub("z"), Dimension::Frequency)};
    l.finish();
    t.ions = count(f.need("ions"), "trap.ions");
    if (f.get("wells")) throw SchemaError("trap.wells", line_of(node), "give either linear or wells, not both");
  } else if (auto wells = f.get("wells")) {
    if (!wells->IsSequence() || wells->size() == 0) throw SchemaError("trap.wells", line_of(*wells), "expected a list");
    for (std::size_t k = 0; k < wells->size(); ++k) {
      const std::string p = "trap.wells." + std::to_string(k);
      Fields w((*wells)[k], p);
      crystal::Well well;
      const Vec3 fr = vec3(w.need("frequencies"), w.sub("frequencies"), Dimension::Frequency);
      well.frequencies = {fr[0], fr[1], fr[2]};
      if (auto axes = w.get("axes")) {
        if (!axes->IsSequence() || axes->size() != 3) throw SchemaError(w.sub("axes"), line_of(*axes), "expected three axes");
        for (std::size_t a = 0; a < 3; ++a)
          well.axes[a] = vec3((*axes)[a], w.sub("axes") + "." + std::to_string(a), Dimension::Dimensionless);
      }
      well.minimum = vec3(w.need("minimum"), w.sub("minimum"), Dimension::Length);
      w.finish();
      t.wells.push_back(well);
    }
    if (auto n = f.get("ions")) {
      if (count(*n, "trap.ions") != t.wells.size())
        throw SchemaError("trap.ions", line_of(*n), "does not match the number of wells");
    }
    t.ions = t.wells.size();
  } else {
    throw SchemaError("trap", line_of(node), "needs either linear or wells");
  }
  f.finish();
  if (t.ions == 0) throw SchemaError("trap.ions", line_of(node), "must be at least 1");
  return t;
}

inline Drive read_drive(const YAML::Node& node) {
  Fields f(node, "drive");
  Drive d;
  d.branch = choice(f.need("branch"), "drive.branch", {"z", "xy"}) == "z" ? drive::Branch::Z : drive::Branch::XY;
  d.rabi = quantities(f.need("rabi"), "drive.rabi", Dimension::Frequency);
  if (auto p = f.get("phase")) d.phase = quantities(*p, "drive.phase", Dimension::Angle);
  {
    const YAML::Node a = f.need("alpha");
    if (!a.IsSequence() || a.size() != 4) throw SchemaError("drive.alpha", line_of(a), "expected four coefficients");
    for (std::size_t k = 0; k < 4; ++k)
      d.alpha[k] = quantity(a[k], "drive.alpha." + std::to_string(k), Dimension::Dimensionless);
  }
  d.wavevector = vec3(f.need("wavevector"), "drive.wavevector", Dimension::Wavenumber);
  if (auto m = f.get("modes")) {
    Fields ms(*m, "drive.modes");
    d.modes.along = choice(ms.need("along"), ms.sub("along"), {"x", "y", "z"});
    if (auto p = ms.get("pick")) d.modes.pick = indices(*p, ms.sub("pick"));
    ms.finish();
  }
  if (auto det = f.get("detuning")) {
    if (det->IsMap()) {
      Fields df(*det, "drive.detuning");
      d.detuning_mode = count(df.need("mode"), df.sub("mode"));
      d.detuning = quantity(df.need("value"), df.sub("value"), Dimension::Frequency);
      df.finish();
    } else {
      d.detuning = quantity(*det, "drive.detuning", Dimension::Frequency);
    }
  }
  if (auto w = f.get("drive_frequency")) d.drive_frequency = quantity(*w, "drive.drive_frequency", Dimension::Frequency);
  if (auto t = f.get("target_phase")) d.target_phase = quantity(*t, "drive.target_phase", Dimension::Angle);
  f.finish();
  if (d.detuning.has_value() == d.drive_frequency.has_value())
    throw SchemaError("drive.detuning", line_of(node), "give exactly one of detuning and drive_frequency");
  if (d.branch == drive::Branch::XY && d.drive_frequency)
    throw SchemaError("drive.drive_frequency", line_of(node), "the xy-branch takes a detuning");
  return d;
}

inline std::vector<Step> read_program(const YAML::Node& node) {
  if (!node.IsSequence()) throw SchemaError("program", line_of(node), "expected a list of steps");
  std::vector<Step> out;
  for (std::size_t k = 0; k < node.size(); ++k) {
    const std::string p = "program." + std::to_string(k);
    const YAML::Node item = node[k];
    if (!item.IsMap() || item.size() != 1) throw SchemaError(p, line_of(item), "each step is a single-key mapping");
    const std::string key = item.begin()->first.as<std::string>();
    const YAML::Node body = item.begin()->second;
    Step s;
    Fields f(body, p + "." + key);
    if (key == "rotate") {
      s.kind = Step::Kind::Rotate;
      s.theta = quantity(f.need("theta"), f.sub("theta"), Dimension::Angle);
      s.phi = quantity(f.need("phi"), f.sub("phi"), Dimension::Angle);
      if (auto ions = f.get("ions")) s.ions = indices(*ions, f.sub("ions"));
    } else if (key == "displace") {
      s.kind = Step::Kind::Displace;
      if (auto t = f.get("duration")) s.duration = quantity(*t, f.sub("duration"), Dimension::Time);
      if (auto l = f.get("loops")) s.loops = quantity(*l, f.sub("loops"), Dimension::Dimensionless);
      if (s.duration.has_value() == s.loops.has_value())
        throw SchemaError(f.path(), line_of(body), "give exactly one of duration and loops");
    } else if (key == "idle") {
      s.kind = Step::Kind::Idle;
      s.duration = quantity(f.need("duration"), f.sub("duration"), Dimension::Time);
    } else {
      throw SchemaError(p + "." + key, line_of(item), "unknown step (rotate, displace, idle)");
    }
    f.finish();
    out.push_back(s);
  }
  return out;
}

inline Experiment read_experiment(const YAML::Node& node) {
  Fields f(node, "experiment");
  Experiment e;
  e.kind = choice(f.need("kind"), "experiment.kind", known_kinds());
  if (auto n = f.get("engine")) e.engine = choice(*n, "experiment.engine", {"analytic", "integrate", "both"});
  if (auto n = f.get("n_max")) {
    if (n->IsScalar() && n->Scalar() == "auto") e.n_max = 0;
    else if ((e.n_max = static_cast<int>(count(*n, "experiment.n_max"))) < 1)
      throw SchemaError("experiment.n_max", line_of(*n), "expected a positive count or auto");
  }
  if (auto n = f.get("thermal_nbar")) {
    e.nbar = quantity(*n, "experiment.thermal_nbar", Dimension::Dimensionless);
    if (!(e.nbar >= 0.0)) throw SchemaError("experiment.thermal_nbar", line_of(*n), "expected a non-negative mean occupation");
  }
  if (auto n = f.get("shots")) e.shots = count(*n, "experiment.shots");
  if (auto n = f.get("seed")) e.seed = count(*n, "experiment.seed");
  if (auto n = f.get("parity_points")) e.parity_points = count(*n, "experiment.parity_points");
  if (auto n = f.get("scaling")) e.scaling = boolean(*n, "experiment.scaling");
  if (auto sw = f.get("sweep")) {
    if (!sw->IsSequence()) throw SchemaError("experiment.sweep", line_of(*sw), "expected a list of axes");
    for (std::size_t k = 0; k < sw->size(); ++k) {
      const std::string p = "experiment.sweep." + std::to_string(k);
      Fields a((*sw)[k], p);
      SweepAxis axis;
      axis.parameter = scalar(a.need("parameter"), a.sub("parameter"));
      const YAML::Node vals = a.need("values");
      if (!vals.IsSequence() || vals.size() == 0) throw SchemaError(a.sub("values"), line_of(vals), "expected a non-empty list");
      for (std::size_t v = 0; v < vals.size(); ++v) axis.values.push_back(scalar(vals[v], a.sub("values")));
      a.finish();
      e.sweep.push_back(axis);
    }
  }
  f.finish();
  return e;
}

inline Rabi read_rabi(const YAML::Node& node) {
  Fields f(node, "rabi");
  Rabi r;
  const std::string sb = choice(f.need("sideband"), "rabi.sideband", {"red", "carrier", "blue"});
  r.sideband = sb == "red" ? -1 : sb == "blue" ? 1 : 0;
  if (auto n = f.get("n_in")) r.n_in = static_cast<int>(count(*n, "rabi.n_in"));
  r.duration = quantity(f.need("duration"), "rabi.duration", Dimension::Time);
  if (auto n = f.get("samples")) r.samples = count(*n, "rabi.samples");
  f.finish();
  if (r.n_in + r.sideband < 0) throw SchemaError("rabi.n_in", line_of(node), "red sideband needs n_in >= 1");
  return r;
}

inline Ising read_ising(const YAML::Node& node) {
  Fields f(node, "ising");
  Ising s;
  if (auto n = f.get("couplings")) s.couplings = choice(*n, "ising.couplings", {"drive", "uniform"});
  if (auto n = f.get("order")) s.order = choice(*n, "ising.order", {"ferromagnetic", "antiferromagnetic"});
  if (auto n = f.get("spins")) s.spins = count(*n, "ising.spins");
  if (auto n = f.get("field")) s.field = quantity(*n, "ising.field", Dimension::Frequency);
  if (auto n = f.get("ratio")) s.ratio = quantity(*n, "ising.ratio", Dimension::Dimensionless);
  if (auto n = f.get("duration")) s.duration = quantity(*n, "ising.duration", Dimension::Time);
  if (auto n = f.get("duration_field")) s.duration_field = quantity(*n, "ising.duration_field", Dimension::Dimensionless);
  if (auto n = f.get("ramp")) s.ramp = choice(*n, "ising.ramp", {"linear", "exponential", "constant"});
  if (auto n = f.get("tau_field")) s.tau_field = quantity(*n, "ising.tau_field", Dimension::Dimensionless);
  if (auto n = f.get("compensate")) s.compensate = boolean(*n, "ising.compensate");
  if (auto n = f.get("samples")) s.samples = count(*n, "ising.samples");
  if (auto n = f.get("ratios")) s.ratios = quantities(*n, "ising.ratios", Dimension::Dimensionless);
  if (auto n = f.get("time_scale_field"))
    s.time_scale_field = quantity(*n, "ising.time_scale_field", Dimension::Dimensionless);
  f.finish();
  if (s.duration && s.duration_field)
    throw SchemaError("ising.duration", line_of(node), "give at most one of duration and duration_field");
  if (s.ramp == "exponential" && !s.tau_field)
    throw SchemaError("ising.tau_field", line_of(node), "exponential ramp needs tau_field");
  return s;
}

inline void check_consistency(const Scenario& s) {
  const auto& kind = s.experiment.kind;
  const bool needs_drive = kind == "rabi" || kind == "gate" || kind == "ising-couplings" ||
                           kind == "exact-vs-effective" || (kind == "ising-ramp" && s.ising && s.ising->couplings == "drive");
  if (needs_drive && !s.drive) throw SchemaError("drive", -1, "experiment kind '" + kind + "' needs a drive block");
  if (kind == "rabi") {
    if (!s.rabi) throw SchemaError("rabi", -1, "experiment kind 'rabi' needs a rabi block");
    if (s.trap.ions != 1) throw SchemaError("trap.ions", -1, "rabi experiments use a single ion");
    if (s.drive->branch != drive::Branch::XY) throw SchemaError("drive.branch", -1, "rabi experiments use the xy-branch");
  }
  if (kind == "gate") {
    if (s.program.empty()) throw SchemaError("program", -1, "gate experiments need a program");
    if (s.drive->branch != drive::Branch::Z) throw SchemaError("drive.branch", -1, "gate experiments use the z-branch");
  }
  if (kind.rfind("ising", 0) == 0 || kind == "exact-vs-effective") {
    if (kind != "ising-couplings" && !s.ising)
      throw SchemaError("ising", -1, "experiment kind '" + kind + "' needs an ising block");
    if (s.drive && s.drive->branch != drive::Branch::Z && needs_drive)
      throw SchemaError("drive.branch", -1, "Ising experiments use the z-branch");
  }
  if (kind == "ising-crossover" && s.ising->ratios.empty())
    throw SchemaError("ising.ratios", -1, "crossover needs a list of ratios");
  if (s.drive) {
    const auto& d = *s.drive;
    const std::size_t n = s.trap.ions;
    if (d.rabi.size() != 1 && d.rabi.size() != n) throw SchemaError("drive.rabi", -1, "give one value or one per ion");
    if (!d.phase.empty() && d.phase.size() != 1 && d.phase.size() != n)
      throw SchemaError("drive.phase", -1, "give one value or one per ion");
    for (const auto& st : s.program)
      for (auto i : st.ions)
        if (i >= n) throw SchemaError("program", -1, "rotation ion index out of range");
  }
}

}  // namespace detail

/// Parse a document already loaded into a YAML node.
inline Scenario from_node(const YAML::Node& root) {
  detail::Fields f(root, "");
  Scenario s;
  s.name = detail::scalar(f.need("name"), "name");
  s.trap = detail::read_trap(f.need("trap"));
  if (auto d = f.get("drive")) s.drive = detail::read_drive(*d);
  if (auto p = f.get("program")) s.program = detail::read_program(*p);
  s.experiment = detail::read_experiment(f.need("experiment"));
  if (auto r = f.get("rabi")) s.rabi = detail::read_rabi(*r);
  if (auto r = f.get("ising")) s.ising = detail::read_ising(*r);
  if (auto o = f.get("output")) {
    detail::Fields of(*o, "output");
    if (auto d = of.get("directory")) s.output.directory = detail::scalar(*d, "output.directory");
    if (auto fm = of.get("formats")) {
      s.output.formats.clear();
      if (!fm->IsSequence()) throw SchemaError("output.formats", detail::line_of(*fm), "expected a list");
      for (std::size_t k = 0; k < fm->size(); ++k)
        s.output.formats.push_back(detail::choice((*fm)[k], "output.formats", {"csv", "plot"}));
    }
    of.finish();
  }
  f.finish();
  detail::check_consistency(s);
  return s;
}

inline YAML::Node load_text(const std::string& text) {
  try {
    return YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw SchemaError("document", e.mark.line, e.msg);
  }
}

inline Scenario parse_text(const std::string& text) { return from_node(load_text(text)); }

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open scenario file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Scenario parse_scenario(const std::string& path) { return parse_text(read_file(path)); }

// ---------------------------------------------------------------------------
// Writing (canonical form: SI units, 17 significant digits, fixed key order)

namespace detail {

inline std::string q(double v, Dimension d) { return units::format(v, d); }

inline void emit_list(YAML::Emitter& e, const std::vector<double>& v, Dimension d) {
  e << YAML::Flow << YAML::BeginSeq;
  for (double x : v) e << q(x, d);
  e << YAML::EndSeq;
}

inline void emit_vec3(YAML::Emitter& e, const Vec3& v, Dimension d) {
  e << YAML::Flow << YAML::BeginSeq << q(v[0], d) << q(v[1], d) << q(v[2], d) << YAML::EndSeq;
}

}  // namespace detail

inline std::string serialize(const Scenario& s) {
  using detail::q;
  YAML::Emitter e;
  e << YAML::BeginMap;
  e << YAML::Key << "name" << YAML::Value << s.name;
  e << YAML::Key << "trap" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "species" << YAML::Value << YAML::BeginMap << YAML::Key << "mass" << YAML::Value
    << q(s.trap.species.mass, Dimension::Mass) << YAML::Key << "charge" << YAML::Value
    << q(s.trap.species.charge, Dimension::Charge) << YAML::EndMap;
  if (s.trap.linear) {
    e << YAML::Key << "ions" << YAML::Value << s.trap.ions;
    e << YAML::Key << "linear" << YAML::Value << YAML::BeginMap;
    const char* names[] = {"x", "y", "z"};
    for (int k = 0; k < 3; ++k) e << YAML::Key << names[k] << YAML::Value << q((*s.trap.linear)[k], Dimension::Frequency);
    e << YAML::EndMap;
  } else {
    e << YAML::Key << "wells" << YAML::Value << YAML::BeginSeq;
    for (const auto& w : s.trap.wells) {
      e << YAML::BeginMap << YAML::Key << "frequencies" << YAML::Value;
      detail::emit_vec3(e, {w.frequencies[0], w.frequencies[1], w.frequencies[2]}, Dimension::Frequency);
      e << YAML::Key << "axes" << YAML::Value << YAML::BeginSeq;
      for (const auto& a : w.axes) detail::emit_vec3(e, a, Dimension::Dimensionless);
      e << YAML::EndSeq << YAML::Key << "minimum" << YAML::Value;
      detail::emit_vec3(e, w.minimum, Dimension::Length);
      e << YAML::EndMap;
    }
    e << YAML::EndSeq;
  }
  e << YAML::EndMap;

  if (s.drive) {
    const auto& d = *s.drive;
    e << YAML::Key << "drive" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "branch" << YAML::Value << drive::branch_name(d.branch);
    e << YAML::Key << "rabi" << YAML::Value;
    detail::emit_list(e, d.rabi, Dimension::Frequency);
    if (!d.phase.empty()) {
      e << YAML::Key << "phase" << YAML::Value;
      detail::emit_list(e, d.phase, Dimension::Angle);
    }
    e << YAML::Key << "alpha" << YAML::Value;
    detail::emit_list(e, {d.alpha[0], d.alpha[1], d.alpha[2], d.alpha[3]}, Dimension::Dimensionless);
    e << YAML::Key << "wavevector" << YAML::Value;
    detail::emit_vec3(e, d.wavevector, Dimension::Wavenumber);
    e << YAML::Key << "modes" << YAML::Value << YAML::BeginMap << YAML::Key << "along" << YAML::Value << d.modes.along;
    if (!d.modes.pick.empty()) e << YAML::Key << "pick" << YAML::Value << YAML::Flow << d.modes.pick;
    e << YAML::EndMap;
    if (d.detuning)
      e << YAML::Key << "detuning" << YAML::Value << YAML::BeginMap << YAML::Key << "mode" << YAML::Value
        << d.detuning_mode << YAML::Key << "value" << YAML::Value << q(*d.detuning, Dimension::Frequency)
        << YAML::EndMap;
    if (d.drive_frequency) e << YAML::Key << "drive_frequency" << YAML::Value << q(*d.drive_frequency, Dimension::Frequency);
    if (d.target_phase) e << YAML::Key << "target_phase" << YAML::Value << q(*d.target_phase, Dimension::Angle);
    e << YAML::EndMap;
  }

  if (!s.program.empty()) {
    e << YAML::Key << "program" << YAML::Value << YAML::BeginSeq;
    for (const auto& st : s.program) {
      e << YAML::BeginMap;
      switch (st.kind) {
        case Step::Kind::Rotate:
          e << YAML::Key << "rotate" << YAML::Value << YAML::BeginMap << YAML::Key << "theta" << YAML::Value
            << q(st.theta, Dimension::Angle) << YAML::Key << "phi" << YAML::Value << q(st.phi, Dimension::Angle);
          if (!st.ions.empty()) e << YAML::Key << "ions" << YAML::Value << YAML::Flow << st.ions;
          e << YAML::EndMap;
          break;
        case Step::Kind::Displace:
          e << YAML::Key << "displace" << YAML::Value << YAML::BeginMap;
          if (st.duration) e << YAML::Key << "duration" << YAML::Value << q(*st.duration, Dimension::Time);
          if (st.loops) e << YAML::Key << "loops" << YAML::Value << q(*st.loops, Dimension::Dimensionless);
          e << YAML::EndMap;
          break;
        case Step::Kind::Idle:
          e << YAML::Key << "idle" << YAML::Value << YAML::BeginMap << YAML::Key << "duration" << YAML::Value
            << q(*st.duration, Dimension::Time) << YAML::EndMap;
          break;
      }
      e << YAML::EndMap;
    }
    e << YAML::EndSeq;
  }

  const auto& x = s.experiment;
  e << YAML::Key << "experiment" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "kind" << YAML::Value << x.kind;
  e << YAML::Key << "engine" << YAML::Value << x.engine;
  if (x.n_max > 0) e << YAML::Key << "n_max" << YAML::Value << x.n_max;
  else e << YAML::Key << "n_max" << YAML::Value << "auto";
  if (x.nbar > 0.0) e << YAML::Key << "thermal_nbar" << YAML::Value << units::format(x.nbar, Dimension::Dimensionless);
  e << YAML::Key << "shots" << YAML::Value << x.shots;
  e << YAML::Key << "seed" << YAML::Value << x.seed;
  e << YAML::Key << "parity_points" << YAML::Value << x.parity_points;
  e << YAML::Key << "scaling" << YAML::Value << (x.scaling ? "true" : "false");
  if (!x.sweep.empty()) {
    e << YAML::Key << "sweep" << YAML::Value << YAML::BeginSeq;
    for (const auto& a : x.sweep)
      e << YAML::BeginMap << YAML::Key << "parameter" << YAML::Value << a.parameter << YAML::Key << "values"
        << YAML::Value << YAML::Flow << a.values << YAML::EndMap;
    e << YAML::EndSeq;
  }
  e << YAML::EndMap;

  if (s.rabi) {
    const auto& r = *s.rabi;
    e << YAML::Key << "rabi" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "sideband" << YAML::Value << (r.sideband < 0 ? "red" : r.sideband > 0 ? "blue" : "carrier");
    e << YAML::Key << "n_in" << YAML::Value << r.n_in;
    e << YAML::Key << "duration" << YAML::Value << q(r.duration, Dimension::Time);
    e << YAML::Key << "samples" << YAML::Value << r.samples;
    e << YAML::EndMap;
  }

  if (s.ising) {
    const auto& i = *s.ising;
    e << YAML::Key << "ising" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "couplings" << YAML::Value << i.couplings;
    e << YAML::Key << "order" << YAML::Value << i.order;
    e << YAML::Key << "spins" << YAML::Value << i.spins;
    if (i.field) e << YAML::Key << "field" << YAML::Value << q(*i.field, Dimension::Frequency);
    if (i.ratio) e << YAML::Key << "ratio" << YAML::Value << q(*i.ratio, Dimension::Dimensionless);
    if (i.duration) e << YAML::Key << "duration" << YAML::Value << q(*i.duration, Dimension::Time);
    if (i.duration_field) e << YAML::Key << "duration_field" << YAML::Value << q(*i.duration_field, Dimension::Dimensionless);
    e << YAML::Key << "ramp" << YAML::Value << i.ramp;
    if (i.tau_field) e << YAML::Key << "tau_field" << YAML::Value << q(*i.tau_field, Dimension::Dimensionless);
    e << YAML::Key << "compensate" << YAML::Value << (i.compensate ? "true" : "false");
    e << YAML::Key << "samples" << YAML::Value << i.samples;
    if (!i.ratios.empty()) {
      e << YAML::Key << "ratios" << YAML::Value;
      detail::emit_list(e, i.ratios, Dimension::Dimensionless);
    }
    e << YAML::Key << "time_scale_field" << YAML::Value << q(i.time_scale_field, Dimension::Dimensionless);
    e << YAML::EndMap;
  }

  e << YAML::Key << "output" << YAML::Value << YAML::BeginMap;
  if (!s.output.directory.empty()) e << YAML::Key << "directory" << YAML::Value << s.output.directory;
  e << YAML::Key << "formats" << YAML::Value << YAML::Flow << s.output.formats;
  e << YAML::EndMap;
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Hash of the canonical form.
inline std::string scenario_hash(const Scenario& s) { return hex64(fnv1a(serialize(s))); }

// ---------------------------------------------------------------------------
// Sweep substitution on the raw document

/// Replace the scalar at a dotted path (map keys, sequence indices).
inline void set_path(YAML::Node root, const std::string& path, const std::string& value) {
  std::vector<std::string> parts;
  std::stringstream ss(path);
  for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
  if (parts.empty()) throw DomainError("sweep: empty parameter path");
  std::vector<YAML::Node> chain{root};
  for (std::size_t k = 0; k < parts.size(); ++k) {
    YAML::Node cur = chain.back();
    YAML::Node next;
    if (cur.IsSequence()) {
      std::size_t idx = 0;
      const auto res = std::from_chars(parts[k].data(), parts[k].data() + parts[k].size(), idx);
      if (res.ec != std::errc() || idx >= cur.size()) throw DomainError("sweep: invalid axis reference '" + path + "'");
      next = cur[idx];
    } else if (cur.IsMap()) {
      if (!cur[parts[k]].IsDefined()) throw DomainError("sweep: invalid axis reference '" + path + "'");
      next = cur[parts[k]];
    } else {
      throw DomainError("sweep: invalid axis reference '" + path + "'");
    }
    chain.push_back(next);
  }
  chain.back() = value;
}

}  // namespace trapsim::scenario
