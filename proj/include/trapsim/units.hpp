#pragma once

// Quantities with explicit unit suffixes, e.g. "26 kHz", "3.2 um", "90 deg".
// Frequencies given in Hz are angular: "26 kHz" is 2 pi * 26e3 rad/s.

#include "trapsim/core.hpp"

#include <charconv>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace trapsim::units {

enum class Dimension { Dimensionless, Frequency, Time, Length, Mass, Charge, Angle, Wavenumber };

inline const char* dimension_name(Dimension d) {
  switch (d) {
    case Dimension::Dimensionless:
      return "dimensionless";
    case Dimension::Frequency:
      return "frequency";
    case Dimension::Time:
      return "time";
    case Dimension::Length:
      return "length";
    case Dimension::Mass:
      return "mass";
    case Dimension::Charge:
      return "charge";
    case Dimension::Angle:
      return "angle";
    case Dimension::Wavenumber:
      return "wavenumber";
  }
  return "";
}

/// Canonical unit used when writing a quantity back out (factor 1).
inline const char* canonical_unit(Dimension d) {
  switch (d) {
    case Dimension::Dimensionless:
      return "";
    case Dimension::Frequency:
      return "rad/s";
    case Dimension::Time:
      return "s";
    case Dimension::Length:
      return "m";
    case Dimension::Mass:
      return "kg";
    case Dimension::Charge:
      return "C";
    case Dimension::Angle:
      return "rad";
    case Dimension::Wavenumber:
      return "1/m";
  }
  return "";
}

struct UnitEntry {
  std::string_view symbol;
  Dimension dimension;
  double factor;
};

inline const std::vector<UnitEntry>& unit_table() {
  static const std::vector<UnitEntry> table = {
      {"rad/s", Dimension::Frequency, 1.0},
      {"Hz", Dimension::Frequency, 2 * pi},
      {"kHz", Dimension::Frequency, 2 * pi * 1e3},
      {"MHz", Dimension::Frequency, 2 * pi * 1e6},
      {"GHz", Dimension::Frequency, 2 * pi * 1e9},
      {"s", Dimension::Time, 1.0},
      {"ms", Dimension::Time, 1e-3},
      {"us", Dimension::Time, 1e-6},
      {"ns", Dimension::Time, 1e-9},
      {"m", Dimension::Length, 1.0},
      {"mm", Dimension::Length, 1e-3},
      {"um", Dimension::Length, 1e-6},
      {"nm", Dimension::Length, 1e-9},
      {"kg", Dimension::Mass, 1.0},
      {"u", Dimension::Mass, si::atomic_mass},
      {"C", Dimension::Charge, 1.0},
      {"e", Dimension::Charge, si::elementary_charge},
      {"rad", Dimension::Angle, 1.0},
      {"deg", Dimension::Angle, pi / 180.0},
      {"pi", Dimension::Angle, pi},
      {"1/m", Dimension::Wavenumber, 1.0},
      {"1/um", Dimension::Wavenumber, 1e6},
      {"1/nm", Dimension::Wavenumber, 1e9},
  };
  return table;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

inline bool parse_number(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

/// Parse "<number> <unit>" into SI (angular) units; throws DomainError with a
/// message naming the expected dimension.
inline double parse(std::string_view text, Dimension want) {
  const std::string_view s = trim(text);
  double value = 0.0;
  if (want == Dimension::Dimensionless) {
    if (parse_number(s, value)) return value;
    throw DomainError("expected a dimensionless number, got '" + std::string(s) + "'");
  }
  const auto space = s.find_last_of(" \t");
  if (space == std::string_view::npos) {
    if (parse_number(s, value))
      throw DomainError("missing unit on '" + std::string(s) + "' (expected a " + dimension_name(want) + ")");
    throw DomainError("cannot parse quantity '" + std::string(s) + "'");
  }
  const std::string_view number = trim(s.substr(0, space)), unit = trim(s.substr(space + 1));
  if (!parse_number(number, value)) throw DomainError("cannot parse number in '" + std::string(s) + "'");
  for (const auto& e : unit_table()) {
    if (e.symbol != unit) continue;
    if (e.dimension != want)
      throw DomainError("unit '" + std::string(unit) + "' is a " + dimension_name(e.dimension) + ", expected a " +
                        dimension_name(want));
    return value * e.factor;
  }
  throw DomainError("unknown unit '" + std::string(unit) + "'");
}

/// "%.17g <canonical unit>"
inline std::string format(double value, Dimension d) {
  if (value == 0.0) value = 0.0;
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  std::string out = buf;
  const std::string unit = canonical_unit(d);
  if (!unit.empty()) out += " " + unit;
  return out;
}

}  // namespace trapsim::units
