#pragma once

// INI-style experiment configuration: "[section]" headers, "key = value"
// lines, '#' or ';' comments. Every section and key must be known.

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "biotcr/mesh.hpp"
#include "biotcr/solver.hpp"

namespace biotcr {

using IniData = std::map<std::string, std::map<std::string, std::string>>;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::string strip_comment(const std::string& s) {
  const auto k = s.find_first_of("#;");
  return k == std::string::npos ? s : s.substr(0, k);
}

}  // namespace detail

inline IniData parse_ini(std::istream& is, const std::string& source) {
  IniData data;
  std::string line, section;
  int lineno = 0;
  auto fail = [&](const std::string& what) {
    throw ConfigError(source + ":" + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(is, line)) {
    ++lineno;
    line = detail::trim(detail::strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("malformed section header '" + line + "'");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (section.empty()) fail("empty section name");
      if (data.count(section)) fail("duplicate section [" + section + "]");
      data[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected 'key = value', got '" + line + "'");
    if (section.empty()) fail("key outside of any section");
    const std::string key = detail::trim(line.substr(0, eq)), value = detail::trim(line.substr(eq + 1));
    if (key.empty()) fail("empty key");
    if (value.empty()) fail("empty value for '" + key + "'");
    if (!data[section].emplace(key, value).second) fail("duplicate key '" + key + "' in [" + section + "]");
  }
  return data;
}

// ------------------------------------------------------------ value parsing

inline double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw ConfigError(where + ": not a number: '" + s + "'");
  return v;
}

inline long parse_int(const std::string& s, const std::string& where) {
  long v = 0;
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw ConfigError(where + ": not an integer: '" + s + "'");
  return v;
}

inline bool parse_bool(const std::string& s, const std::string& where) {
  if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
  if (s == "false" || s == "no" || s == "off" || s == "0") return false;
  throw ConfigError(where + ": not a boolean: '" + s + "'");
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s + ",") {
    if (ch == ',' || ch == ' ' || ch == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  return out;
}

inline std::vector<double> parse_double_list(const std::string& s, const std::string& where) {
  std::vector<double> v;
  for (const auto& item : split_list(s)) v.push_back(parse_double(item, where));
  if (v.empty()) throw ConfigError(where + ": empty list");
  return v;
}

/// "2, 3, 5" or "2..5".
inline std::vector<int> parse_level_list(const std::string& s, const std::string& where) {
  std::vector<int> v;
  if (const auto k = s.find(".."); k != std::string::npos) {
    const long a = parse_int(detail::trim(s.substr(0, k)), where), b = parse_int(detail::trim(s.substr(k + 2)), where);
    if (b < a) throw ConfigError(where + ": empty range '" + s + "'");
    for (long l = a; l <= b; ++l) v.push_back(static_cast<int>(l));
  } else {
    for (const auto& item : split_list(s)) v.push_back(static_cast<int>(parse_int(item, where)));
  }
  if (v.empty()) throw ConfigError(where + ": empty list");
  return v;
}

// ------------------------------------------------------------------ config

struct ParameterGrid {
  std::vector<double> lambda, kappa_bar, sigma, alpha;
};

struct ExperimentConfig {
  std::string case_id = "trig";
  StructuredKind mesh_kind = StructuredKind::right_split;
  std::vector<int> levels{3};  // level l means n = 2^l cells per side
  std::string mesh_file;       // optional: refined uniformly l times instead
  MaterialParams params;
  ParameterGrid grid;          // empty entries fall back to params
  DGConfig dg;
  RhsKind rhs = RhsKind::smoothed;
  bool compare_plain = false;
  double tolerance = kResidualTolerance;
  bool sweep_infsup = true;
  int threads = 0;             // 0: hardware concurrency
  std::string out_dir = ".";
  std::string prefix;
  bool vtk = true;

  void validate() const {
    params.validate();
    if (levels.empty()) throw ConfigError("mesh.levels: at least one level is required");
    for (int l : levels)
      if (l < 1 || l > 10) throw ConfigError("mesh.levels: level " + std::to_string(l) + " outside 1..10");
    for (std::size_t i = 1; i < levels.size(); ++i)
      if (levels[i] <= levels[i - 1]) throw ConfigError("mesh.levels: levels must increase");
    if (!(tolerance > 0.0)) throw ConfigError("solver.tolerance must be > 0");
    if (threads < 0) throw ConfigError("sweep.threads must be >= 0");
    if (!(dg.eta > 0.0)) throw ConfigError("dg.eta must be > 0");
    auto check = [](const std::vector<double>& v, const char* name) {
      for (double x : v)
        if (!std::isfinite(x)) throw ConfigError(std::string("grid.") + name + ": non-finite entry");
    };
    check(grid.lambda, "lambda");
    check(grid.kappa_bar, "kappa_bar");
    check(grid.sigma, "sigma");
    check(grid.alpha, "alpha");
  }

  /// Cartesian product lambda x kappa_bar x sigma x alpha.
  std::vector<MaterialParams> grid_points() const {
    auto pick = [](const std::vector<double>& v, double fallback) {
      return v.empty() ? std::vector<double>{fallback} : v;
    };
    std::vector<MaterialParams> out;
    for (double l : pick(grid.lambda, params.lambda))
      for (double k : pick(grid.kappa_bar, params.kappa_bar))
        for (double s : pick(grid.sigma, params.sigma))
          for (double a : pick(grid.alpha, params.alpha)) {
            MaterialParams p = params;
            p.lambda = l;
            p.kappa_bar = k;
            p.sigma = s;
            p.alpha = a;
            out.push_back(p);
          }
    return out;
  }
};

inline ExperimentConfig config_from_ini(const IniData& ini, const std::string& source) {
  ExperimentConfig c;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, std::map<std::string, Setter>> schema{
      {"case", {{"name", [&](auto& v, auto&) { c.case_id = v; }}}},
      {"mesh",
       {{"kind", [&](auto& v, auto&) { c.mesh_kind = parse_structured_kind(v); }},
        {"levels", [&](auto& v, auto& w) { c.levels = parse_level_list(v, w); }},
        {"file", [&](auto& v, auto&) { c.mesh_file = v; }}}},
      {"params",
       {{"mu", [&](auto& v, auto& w) { c.params.mu = parse_double(v, w); }},
        {"lambda", [&](auto& v, auto& w) { c.params.lambda = parse_double(v, w); }},
        {"alpha", [&](auto& v, auto& w) { c.params.alpha = parse_double(v, w); }},
        {"sigma", [&](auto& v, auto& w) { c.params.sigma = parse_double(v, w); }},
        {"kappa_bar", [&](auto& v, auto& w) { c.params.kappa_bar = parse_double(v, w); }},
        {"tau", [&](auto& v, auto& w) { c.params.tau = parse_double(v, w); }}}},
      {"grid",
       {{"lambda", [&](auto& v, auto& w) { c.grid.lambda = parse_double_list(v, w); }},
        {"kappa_bar", [&](auto& v, auto& w) { c.grid.kappa_bar = parse_double_list(v, w); }},
        {"sigma", [&](auto& v, auto& w) { c.grid.sigma = parse_double_list(v, w); }},
        {"alpha", [&](auto& v, auto& w) { c.grid.alpha = parse_double_list(v, w); }}}},
      {"dg",
       {{"eta", [&](auto& v, auto& w) { c.dg.eta = parse_double(v, w); }},
        {"min_stability", [&](auto& v, auto& w) { c.dg.min_stability = parse_double(v, w); }}}},
      {"solver",
       {{"rhs",
         [&](auto& v, auto& w) {
           if (v == "smoothed") c.rhs = RhsKind::smoothed;
           else if (v == "plain") c.rhs = RhsKind::plain;
           else throw ConfigError(w + ": expected smoothed or plain, got '" + v + "'");
         }},
        {"compare_plain", [&](auto& v, auto& w) { c.compare_plain = parse_bool(v, w); }},
        {"tolerance", [&](auto& v, auto& w) { c.tolerance = parse_double(v, w); }}}},
      {"sweep",
       {{"infsup", [&](auto& v, auto& w) { c.sweep_infsup = parse_bool(v, w); }},
        {"threads", [&](auto& v, auto& w) { c.threads = static_cast<int>(parse_int(v, w)); }}}},
      {"output",
       {{"dir", [&](auto& v, auto&) { c.out_dir = v; }},
        {"prefix", [&](auto& v, auto&) { c.prefix = v; }},
        {"vtk", [&](auto& v, auto& w) { c.vtk = parse_bool(v, w); }}}},
  };
  for (const auto& [section, keys] : ini) {
    const auto s = schema.find(section);
    if (s == schema.end()) throw ConfigError(source + ": unknown section [" + section + "]");
    for (const auto& [key, value] : keys) {
      const auto k = s->second.find(key);
      if (k == s->second.end()) throw ConfigError(source + ": unknown key '" + key + "' in [" + section + "]");
      try {
        k->second(value, source + ": " + section + "." + key);
      } catch (const std::invalid_argument& e) {
        // parse_structured_kind and friends throw plain invalid_argument
        if (dynamic_cast<const ConfigError*>(&e)) throw;
        throw ConfigError(source + ": " + section + "." + key + ": " + e.what());
      }
    }
  }
  c.validate();
  return c;
}

inline ExperimentConfig parse_config(std::istream& is, const std::string& source = "<config>") {
  return config_from_ini(parse_ini(is, source), source);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(is, path);
}

}  // namespace biotcr
