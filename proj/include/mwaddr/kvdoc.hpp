#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "units.hpp"

// Plain-text key/value documents with [section] and [section.sub] headers.
//
//   # comment
//   [apparatus]
//   guiding_field = 3 G
//   gradient_slope = 671 Hz/(um*A)
//
// Values may carry a unit suffix; quantities are converted to the library's internal
// units on read and written back in base units using the shortest exact representation.
namespace mwaddr::kv {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

struct Entry {
  std::string key;
  std::string value;
  int line = 0;
};

struct Section {
  std::string name;
  std::vector<Entry> entries;

  const Entry* find(std::string_view key) const {
    for (const auto& e : entries) {
      if (e.key == key) return &e;
    }
    return nullptr;
  }

  void set(std::string key, std::string value) {
    for (auto& e : entries) {
      if (e.key == key) {
        e.value = std::move(value);
        return;
      }
    }
    entries.push_back({std::move(key), std::move(value), 0});
  }
};

struct Document {
  std::vector<Section> sections;

  const Section* find(std::string_view name) const {
    for (const auto& s : sections) {
      if (s.name == name) return &s;
    }
    return nullptr;
  }

  Section& section(std::string_view name) {
    for (auto& s : sections) {
      if (s.name == name) return s;
    }
    sections.push_back({std::string(name), {}});
    return sections.back();
  }
};

inline Document parse(std::string_view text) {
  Document doc;
  Section* current = nullptr;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
      }
      const std::string name = trim(std::string_view(line).substr(1, line.size() - 2));
      if (doc.find(name)) {
        throw ConfigError("line " + std::to_string(line_no) + ": duplicate section [" + name + "]");
      }
      doc.sections.push_back({name, {}});
      current = &doc.sections.back();
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    if (!current) {
      throw ConfigError("line " + std::to_string(line_no) + ": key outside of a section");
    }
    Entry e{trim(std::string_view(line).substr(0, eq)), trim(std::string_view(line).substr(eq + 1)),
            line_no};
    if (e.key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (current->find(e.key)) {
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + e.key + "'");
    }
    current->entries.push_back(std::move(e));
  }
  return doc;
}

inline std::string serialize(const Document& doc) {
  std::string out;
  for (std::size_t i = 0; i < doc.sections.size(); ++i) {
    if (i) out += '\n';
    out += '[' + doc.sections[i].name + "]\n";
    for (const auto& e : doc.sections[i].entries) out += e.key + " = " + e.value + '\n';
  }
  return out;
}

/// Physical dimension of a configuration value.
enum class Dimension {
  dimensionless,
  length,            // m
  time,              // s
  frequency,         // Hz (cyclic)
  angular_frequency, // rad/s
  field,             // G
  current,           // A
  temperature,       // K
  velocity,          // m/s
  mass,              // kg
  gradient_slope,    // Hz/(m A)
};

inline const char* base_unit(Dimension d) {
  switch (d) {
    case Dimension::dimensionless: return "";
    case Dimension::length: return "m";
    case Dimension::time: return "s";
    case Dimension::frequency: return "Hz";
    case Dimension::angular_frequency: return "rad/s";
    case Dimension::field: return "G";
    case Dimension::current: return "A";
    case Dimension::temperature: return "K";
    case Dimension::velocity: return "m/s";
    case Dimension::mass: return "kg";
    case Dimension::gradient_slope: return "Hz/(m*A)";
  }
  return "";
}

namespace detail {
struct UnitFactor {
  std::string_view name;
  Dimension dim;
  double factor;
};

inline constexpr UnitFactor unit_table[] = {
    {"m", Dimension::length, 1.0},
    {"mm", Dimension::length, 1e-3},
    {"um", Dimension::length, 1e-6},
    {"nm", Dimension::length, 1e-9},
    {"s", Dimension::time, 1.0},
    {"ms", Dimension::time, 1e-3},
    {"us", Dimension::time, 1e-6},
    {"ns", Dimension::time, 1e-9},
    {"Hz", Dimension::frequency, 1.0},
    {"kHz", Dimension::frequency, 1e3},
    {"MHz", Dimension::frequency, 1e6},
    {"GHz", Dimension::frequency, 1e9},
    {"rad/s", Dimension::angular_frequency, 1.0},
    {"Hz", Dimension::angular_frequency, 2.0 * units::pi},
    {"kHz", Dimension::angular_frequency, 2.0 * units::pi * 1e3},
    {"MHz", Dimension::angular_frequency, 2.0 * units::pi * 1e6},
    {"G", Dimension::field, 1.0},
    {"mG", Dimension::field, 1e-3},
    {"uG", Dimension::field, 1e-6},
    {"T", Dimension::field, 1e4},
    {"A", Dimension::current, 1.0},
    {"mA", Dimension::current, 1e-3},
    {"K", Dimension::temperature, 1.0},
    {"mK", Dimension::temperature, 1e-3},
    {"uK", Dimension::temperature, 1e-6},
    {"nK", Dimension::temperature, 1e-9},
    {"m/s", Dimension::velocity, 1.0},
    {"mm/s", Dimension::velocity, 1e-3},
    {"um/s", Dimension::velocity, 1e-6},
    {"nm/s", Dimension::velocity, 1e-9},
    {"kg", Dimension::mass, 1.0},
    {"u", Dimension::mass, 1.66053906660e-27},
    {"Hz/(m*A)", Dimension::gradient_slope, 1.0},
    {"Hz/(um*A)", Dimension::gradient_slope, 1e6},
};
}  // namespace detail

inline double parse_number(std::string_view text, std::string_view key) {
  const std::string t = trim(text);
  double value = 0.0;
  const auto* first = t.data();
  const auto* last = t.data() + t.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) {
    throw ConfigError("invalid number for '" + std::string(key) + "': '" + t + "'");
  }
  return value;
}

/// Parses "<number> [unit]" into base units of the given dimension.
inline double parse_quantity(std::string_view text, Dimension dim, std::string_view key) {
  const std::string t = trim(text);
  const auto space = t.find_first_of(" \t");
  const std::string number = space == std::string::npos ? t : t.substr(0, space);
  const std::string unit = space == std::string::npos ? std::string() : trim(t.substr(space));
  const double value = parse_number(number, key);
  if (unit.empty()) return value;
  if (dim == Dimension::dimensionless) {
    throw ConfigError("'" + std::string(key) + "' is dimensionless but has unit '" + unit + "'");
  }
  for (const auto& u : detail::unit_table) {
    if (u.dim == dim && u.name == unit) return value * u.factor;
  }
  throw ConfigError("unknown unit '" + unit + "' for '" + std::string(key) + "' (expected " +
                    base_unit(dim) + " or a scaled variant)");
}

/// Shortest representation that parses back to the same double.
inline std::string format_number(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string format_quantity(double v, Dimension dim) {
  if (dim == Dimension::angular_frequency) {
    // Written in Hz when some nearby cyclic value converts back to exactly v.
    const double f = 2.0 * units::pi;
    const double h = v / f;
    for (double c : {h, std::nextafter(h, HUGE_VAL), std::nextafter(h, -HUGE_VAL)}) {
      if (c * f == v) return format_number(c) + " Hz";
    }
  }
  std::string s = format_number(v);
  if (dim != Dimension::dimensionless) {
    s += ' ';
    s += base_unit(dim);
  }
  return s;
}

/// Reads typed values out of a section, rejecting any key that was not consumed.
class SectionReader {
public:
  explicit SectionReader(const Section* section) : section_(section) {}

  bool present() const { return section_ != nullptr; }

  template <class Fn>
  void with(std::string_view key, Fn&& fn) {
    if (!section_) return;
    if (const Entry* e = section_->find(key)) {
      used_.emplace_back(key);
      fn(e->value);
    }
  }

  void quantity(std::string_view key, Dimension dim, double& target, double scale = 1.0) {
    with(key, [&](const std::string& v) { target = parse_quantity(v, dim, key) * scale; });
  }

  void integer(std::string_view key, long& target) {
    with(key, [&](const std::string& v) {
      const double d = parse_number(v, key);
      if (d != std::floor(d)) throw ConfigError("'" + std::string(key) + "' must be an integer");
      target = static_cast<long>(d);
    });
  }

  void unsigned64(std::string_view key, unsigned long long& target) {
    with(key, [&](const std::string& v) {
      const std::string t = trim(v);
      const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), target);
      if (ec != std::errc() || ptr != t.data() + t.size()) {
        throw ConfigError("'" + std::string(key) + "' must be a non-negative integer");
      }
    });
  }

  void text(std::string_view key, std::string& target) {
    with(key, [&](const std::string& v) { target = v; });
  }

  /// Throws naming the first key that no reader call consumed.
  void finish() const {
    if (!section_) return;
    for (const auto& e : section_->entries) {
      if (std::find(used_.begin(), used_.end(), e.key) == used_.end()) {
        throw ConfigError("unknown key '" + e.key + "' in section [" + section_->name + "]");
      }
    }
  }

private:
  const Section* section_;
  std::vector<std::string> used_;
};

}  // namespace mwaddr::kv
