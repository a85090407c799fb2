// trapsim: run scenario files.

#include "trapsim/runner.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace trapsim;

struct Common {
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> tol;
  std::optional<std::string> engine;
  std::size_t jobs = 1;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--out", c.out, "Output directory (default: output.directory or out/<name>)");
  app->add_option("--seed", c.seed, "Override experiment.seed");
  app->add_option("--tol", c.tol, "Invariant tolerance");
  app->add_option("--engine", c.engine, "Gate engine")->check(CLI::IsMember({"analytic", "integrate", "both"}));
  app->add_option("--jobs", c.jobs, "Worker threads for sweeps")->check(CLI::PositiveNumber);
}

runner::Settings settings(const Common& c) {
  auto s = runner::Settings::from_environment();
  if (c.tol) s.tol = *c.tol;
  s.engine = c.engine;
  s.seed = c.seed;
  s.jobs = c.jobs;
  return s;
}

std::string out_dir(const Common& c, const scenario::Scenario& s) {
  if (!c.out.empty()) return c.out;
  if (!s.output.directory.empty()) return s.output.directory;
  return "out/" + s.name;
}

bool kind_matches(const std::string& verb, const std::string& kind) {
  if (verb == "run") return true;
  if (verb == "ising") return kind.rfind("ising", 0) == 0 || kind == "exact-vs-effective";
  return verb == kind;
}

int run_file(const std::string& verb, const std::string& path, const Common& c) {
  const auto s = scenario::parse_scenario(path);
  if (!kind_matches(verb, s.experiment.kind))
    throw DomainError("'" + verb + "' cannot run a scenario of kind '" + s.experiment.kind + "' (use 'run')");
  const auto dir = out_dir(c, s);
  const auto st = settings(c);
  const auto t0 = std::chrono::steady_clock::now();
  const auto o = runner::execute(s, st);
  runner::write_outcome(dir, s, o, st, runner::seconds_since(t0));
  for (const auto& [k, v] : o.summary) std::cout << k << " = " << csv::format_double(v) << "\n";
  for (const auto& w : o.warnings) std::cerr << "warning: " << w << "\n";
  for (const auto& chk : o.checks)
    if (!chk.pass) std::cerr << "invariant breach: " << chk.name << " = " << chk.value << " > " << chk.limit << "\n";
  std::cout << "wrote " << dir << "\n";
  return o.ok() ? 0 : 1;
}

std::vector<scenario::SweepAxis> parse_axes(const std::vector<std::string>& specs) {
  std::vector<scenario::SweepAxis> axes;
  for (const auto& spec : specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw DomainError("--axis expects path=v1,v2,...; got '" + spec + "'");
    scenario::SweepAxis a;
    a.parameter = spec.substr(0, eq);
    std::stringstream ss(spec.substr(eq + 1));
    for (std::string v; std::getline(ss, v, ',');) a.values.push_back(std::string(units::trim(v)));
    if (a.values.empty()) throw DomainError("--axis '" + a.parameter + "' has no values");
    axes.push_back(a);
  }
  return axes;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trapped-ion spin-motion simulator"};
  app.require_subcommand(1);
  Common common;
  std::string path;
  std::vector<std::string> axes;

  for (const char* verb : {"modes", "rabi", "gate", "ising", "run"}) {
    auto* sub = app.add_subcommand(verb, std::string("Run a scenario") + (std::string(verb) == "run" ? "" : " of kind " + std::string(verb)));
    sub->add_option("scenario", path, "Scenario file")->required()->check(CLI::ExistingFile);
    add_common(sub, common);
  }
  auto* sweep = app.add_subcommand("sweep", "Cartesian parameter sweep");
  sweep->add_option("scenario", path, "Scenario file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--axis", axes, "Sweep axis path=v1,v2,... (repeatable; default: experiment.sweep)");
  add_common(sweep, common);
  auto* verify = app.add_subcommand("verify", "Operator identities and invariant suite");
  add_common(verify, common);

  CLI11_PARSE(app, argc, argv);

  try {
    if (verify->parsed()) {
      const auto checks = runner::verify_suite(common.seed.value_or(1));
      bool ok = true;
      const std::string dir = common.out.empty() ? "out/verify" : common.out;
      std::filesystem::create_directories(dir);
      std::ofstream f(std::filesystem::path(dir) / "verify.csv");
      csv::Writer w(f);
      w.header({"check", "value", "limit", "pass"});
      for (const auto& c : checks) {
        csv::Row r;
        r << c.name << c.value << c.limit << (c.pass ? "true" : "false");
        w.write(r);
        std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << " " << csv::format_double(c.value) << "\n";
        ok = ok && c.pass;
      }
      return ok ? 0 : 1;
    }
    if (sweep->parsed()) {
      const std::string text = scenario::read_file(path);
      const auto s = scenario::parse_text(text);
      const auto dir = out_dir(common, s);
      const int status = runner::run_sweep(text, parse_axes(axes), dir, settings(common));
      std::cout << "wrote " << dir << "\n";
      return status;
    }
    for (auto* sub : app.get_subcommands()) return run_file(sub->get_name(), path, common);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
