#pragma once

// Experiment configuration files.
//
//   # comment
//   family = sweep_delta
//   problem.n = 1000
//   noise.delta_grid = linspace(0, 0.1, 10)
//
// A JSON document with the same keys, either dotted or nested, is accepted as
// well. `to_text` writes a file that parses back to the same configuration.

#include "experiments.hpp"

#include <json.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace noisy_cg::config {

using experiments::ExperimentConfig;

struct config_error : std::invalid_argument {
  config_error(std::string key, const std::string& msg)
      : std::invalid_argument(key.empty() ? msg : key + ": " + msg), key(std::move(key)) {}
  std::string key;
};

struct config_not_found : std::runtime_error {
  explicit config_not_found(const std::string& path)
      : std::runtime_error("config not found: " + path) {}
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i)
    if (i == s.size() || s[i] == sep) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  double out = 0;
  const char* b = v.data();
  const char* e = v.data() + v.size();
  if (!v.empty() && *b == '+') ++b;
  auto [ptr, ec] = std::from_chars(b, e, out);
  if (ec != std::errc() || ptr != e || v.empty())
    throw config_error(key, "expected a number, got '" + v + "'");
  return out;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec == std::errc() && ptr == v.data() + v.size() && !v.empty()) return out;
  // Accept integral values written in floating-point form, e.g. 1e3.
  const double d = parse_double(key, v);
  if (!(d >= 0) || d != std::floor(d) || d > 9.0e15)
    throw config_error(key, "expected a nonnegative integer, got '" + v + "'");
  return std::uint64_t(d);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw config_error(key, "expected true or false, got '" + v + "'");
}

/// Comma-separated numbers, `linspace(a, b, k)`, or a mix of both.
inline std::vector<double> parse_list(const std::string& key, const std::string& raw) {
  std::vector<double> out;
  std::string v = trim(raw);
  if (v.size() >= 2 && v.front() == '[' && v.back() == ']') v = trim(v.substr(1, v.size() - 2));
  if (v.empty()) return out;
  std::size_t i = 0;
  while (i < v.size()) {
    if (v.compare(i, 9, "linspace(") == 0) {
      const auto close = v.find(')', i);
      if (close == std::string::npos) throw config_error(key, "unterminated linspace(");
      const auto args = split(std::string_view(v).substr(i + 9, close - i - 9), ',');
      if (args.size() != 3) throw config_error(key, "linspace takes (start, stop, count)");
      const double a = parse_double(key, args[0]), b = parse_double(key, args[1]);
      const auto k = parse_uint(key, args[2]);
      if (k < 1) throw config_error(key, "linspace count must be >= 1");
      for (std::uint64_t j = 0; j < k; ++j)
        out.push_back(k == 1 ? a : (j + 1 == k ? b : a + (b - a) * double(j) / double(k - 1)));
      i = close + 1;
    } else {
      auto comma = v.find(',', i);
      if (comma == std::string::npos) comma = v.size();
      const auto item = trim(std::string_view(v).substr(i, comma - i));
      if (item.empty()) throw config_error(key, "empty list entry");
      out.push_back(parse_double(key, item));
      i = comma;
    }
    while (i < v.size() && (v[i] == ' ' || v[i] == '\t')) ++i;
    if (i < v.size()) {
      if (v[i] != ',') throw config_error(key, "malformed list '" + raw + "'");
      ++i;
      while (i < v.size() && (v[i] == ' ' || v[i] == '\t')) ++i;
      if (i == v.size()) throw config_error(key, "trailing comma");
    }
  }
  return out;
}

inline std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += experiments::fmt(v[i]);
  }
  return s;
}

template <class E>
E parse_enum(const std::string& key, const std::string& v,
             std::initializer_list<std::pair<const char*, E>> table) {
  std::string allowed;
  for (const auto& [name, e] : table) {
    if (v == name) return e;
    allowed += allowed.empty() ? name : std::string("|") + name;
  }
  throw config_error(key, "unknown value '" + v + "' (expected " + allowed + ")");
}

}  // namespace detail

/// Applies one key/value pair. Unknown keys are errors.
inline void set_value(ExperimentConfig& c, const std::string& key, const std::string& raw) {
  using namespace detail;
  using experiments::Family;
  using experiments::GridParam;
  using experiments::Representation;
  using experiments::StopKind;
  const std::string v = trim(raw);
  auto& p = c.problem;
  auto& n = c.noise;

  if (key == "family")
    c.family = parse_enum<Family>(key, v, {{"trajectory", Family::trajectory},
                                           {"sweep_delta", Family::sweep_delta},
                                           {"sweep_r", Family::sweep_r},
                                           {"compare", Family::compare}});
  else if (key == "problem.n") p.n = std::size_t(parse_uint(key, v));
  else if (key == "problem.lambda_max") p.lambda_max = parse_double(key, v);
  else if (key == "problem.spectrum")
    p.decay = parse_enum<linops::Decay>(key, v, {{"geometric", linops::Decay::geometric},
                                                 {"power", linops::Decay::power}});
  else if (key == "problem.condition")
    p.condition = v == "auto" ? experiments::ProblemSpec::auto_condition : parse_double(key, v);
  else if (key == "problem.rate") p.rate = parse_double(key, v);
  else if (key == "problem.floor") p.floor = parse_double(key, v);
  else if (key == "problem.representation")
    p.representation = parse_enum<Representation>(
        key, v, {{"diagonal", Representation::diagonal}, {"dense", Representation::dense}});
  else if (key == "problem.operator_seed") p.operator_seed = parse_uint(key, v);
  else if (key == "problem.r") p.r = parse_double(key, v);
  else if (key == "problem.r_grid") p.r_grid = parse_list(key, v);
  else if (key == "noise.kind")
    n.kind = parse_enum<noise::Kind>(key, v, {{"exact", noise::Kind::exact},
                                              {"adversarial_b", noise::Kind::adversarial_b},
                                              {"stochastic_b", noise::Kind::stochastic_b},
                                              {"matrix", noise::Kind::matrix},
                                              {"combined", noise::Kind::combined}});
  else if (key == "noise.vector")
    n.combined_vector = parse_enum<noise::VectorKind>(
        key, v, {{"adversarial", noise::VectorKind::adversarial},
                 {"stochastic", noise::VectorKind::stochastic}});
  else if (key == "noise.delta_a") n.delta_a = parse_double(key, v);
  else if (key == "noise.delta_b") n.delta_b = parse_double(key, v);
  else if (key == "noise.delta_grid") n.delta_grid = parse_list(key, v);
  else if (key == "noise.grid_param") {
    if (v == "auto")
      n.grid_param.reset();
    else
      n.grid_param = parse_enum<GridParam>(
          key, v, {{"delta_a", GridParam::delta_a}, {"delta_b", GridParam::delta_b}});
  } else if (key == "noise.resample")
    n.resample = parse_enum<noise::Resample>(
        key, v, {{"fixed_per_run", noise::Resample::fixed_per_run},
                 {"each_iteration", noise::Resample::each_iteration}});
  else if (key == "noise.fixed_magnitudes") n.fixed_magnitudes = parse_bool(key, v);
  else if (key == "solver.beta")
    c.solver.beta = parse_enum<solvers::BetaFormula>(
        key, v, {{"conjugacy", solvers::BetaFormula::conjugacy},
                 {"fletcher_reeves", solvers::BetaFormula::fletcher_reeves}});
  else if (key == "solver.curvature_tol") c.solver.curvature_tol = parse_double(key, v);
  else if (key == "solver.stop") {
    c.solver.stop.clear();
    if (v != "none" && !v.empty())
      for (const auto& item : split(v, ','))
        c.solver.stop.push_back(parse_enum<StopKind>(
            key, item, {{"grad_norm", StopKind::grad_norm}, {"nemirovsky", StopKind::nemirovsky}}));
  } else if (key == "solver.eps") c.solver.eps = parse_double(key, v);
  else if (key == "run.budget") c.budget = parse_double(key, v);
  else if (key == "run.seeds") {
    c.seeds.clear();
    const std::string body = v.size() >= 2 && v.front() == '[' ? v.substr(1, v.size() - 2) : v;
    for (const auto& item : split(body, ','))
      if (!item.empty()) c.seeds.push_back(parse_uint(key, item));
  } else if (key == "run.tail_fraction") c.tail_fraction = parse_double(key, v);
  else if (key == "run.output_dir") c.output_dir = v;
  else
    throw config_error(key, "unknown key");
}

/// Parses `key = value` lines onto `base`.
inline void apply_text(ExperimentConfig& c, const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("", "line " + std::to_string(lineno) + ": expected key = value");
    const auto key = detail::trim(std::string_view(line).substr(0, eq));
    if (key.empty()) throw config_error("", "line " + std::to_string(lineno) + ": empty key");
    set_value(c, key, line.substr(eq + 1));
  }
}

namespace detail {

inline std::string json_scalar(const nlohmann::json& j, const std::string& key) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_boolean()) return j.get<bool>() ? "true" : "false";
  if (j.is_number_unsigned()) return std::to_string(j.get<std::uint64_t>());
  if (j.is_number_integer()) return std::to_string(j.get<std::int64_t>());
  if (j.is_number_float()) return experiments::fmt(j.get<double>());
  throw config_error(key, "unsupported JSON value");
}

inline void flatten(const nlohmann::json& j, const std::string& prefix,
                    std::vector<std::pair<std::string, std::string>>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      flatten(*it, key, out);
    } else if (it->is_array()) {
      std::string s;
      for (const auto& e : *it) s += (s.empty() ? "" : ", ") + json_scalar(e, key);
      out.emplace_back(key, s);
    } else {
      out.emplace_back(key, json_scalar(*it, key));
    }
  }
}

}  // namespace detail

inline void apply_json(ExperimentConfig& c, const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw config_error("", std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw config_error("", "JSON config must be an object");
  std::vector<std::pair<std::string, std::string>> kv;
  detail::flatten(j, "", kv);
  for (const auto& [k, v] : kv) set_value(c, k, v);
}

/// Parses text in either format; JSON is recognized by a leading '{'.
inline ExperimentConfig parse(const std::string& text,
                              const std::vector<std::string>& overrides = {}) {
  ExperimentConfig c;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{')
    apply_json(c, text);
  else
    apply_text(c, text);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw config_error(o, "override must be key=value");
    set_value(c, detail::trim(std::string_view(o).substr(0, eq)), o.substr(eq + 1));
  }
  try {
    c.validate();
  } catch (const config_error&) {
    throw;
  } catch (const std::invalid_argument& e) {
    const std::string what = e.what();
    throw config_error(what.substr(0, what.find(':')), what.substr(what.find(':') + 2));
  }
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path,
                                    const std::vector<std::string>& overrides = {}) {
  std::ifstream f(path, std::ios::binary);
  if (!f || std::filesystem::is_directory(path)) throw config_not_found(path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str(), overrides);
}

/// Resolved configuration in key = value form; parse(to_text(c)) == c.
inline std::string to_text(const ExperimentConfig& c) {
  using experiments::fmt;
  using experiments::to_string;
  std::ostringstream os;
  const auto& p = c.problem;
  const auto& n = c.noise;
  os << "family = " << to_string(c.family) << '\n';
  os << "problem.n = " << p.n << '\n';
  os << "problem.lambda_max = " << fmt(p.lambda_max) << '\n';
  os << "problem.spectrum = " << (p.decay == linops::Decay::geometric ? "geometric" : "power") << '\n';
  os << "problem.condition = "
     << (p.condition == experiments::ProblemSpec::auto_condition ? std::string("auto") : fmt(p.condition))
     << '\n';
  os << "problem.rate = " << fmt(p.rate) << '\n';
  os << "problem.floor = " << fmt(p.floor) << '\n';
  os << "problem.representation = " << to_string(p.representation) << '\n';
  os << "problem.operator_seed = " << p.operator_seed << '\n';
  os << "problem.r = " << fmt(p.r) << '\n';
  os << "problem.r_grid = " << detail::join(p.r_grid) << '\n';
  os << "noise.kind = " << noise::to_string(n.kind) << '\n';
  os << "noise.vector = " << noise::to_string(n.combined_vector) << '\n';
  os << "noise.delta_a = " << fmt(n.delta_a) << '\n';
  os << "noise.delta_b = " << fmt(n.delta_b) << '\n';
  os << "noise.delta_grid = " << detail::join(n.delta_grid) << '\n';
  os << "noise.grid_param = " << (n.grid_param ? to_string(*n.grid_param) : "auto") << '\n';
  os << "noise.resample = " << noise::to_string(n.resample) << '\n';
  os << "noise.fixed_magnitudes = " << (n.fixed_magnitudes ? "true" : "false") << '\n';
  os << "solver.beta = " << solvers::to_string(c.solver.beta) << '\n';
  os << "solver.curvature_tol = " << fmt(c.solver.curvature_tol) << '\n';
  os << "solver.stop = ";
  if (c.solver.stop.empty()) os << "none";
  for (std::size_t i = 0; i < c.solver.stop.size(); ++i)
    os << (i ? ", " : "")
       << (c.solver.stop[i] == experiments::StopKind::grad_norm ? "grad_norm" : "nemirovsky");
  os << '\n';
  os << "solver.eps = " << fmt(c.solver.eps) << '\n';
  os << "run.budget = " << fmt(c.budget) << '\n';
  os << "run.seeds = ";
  for (std::size_t i = 0; i < c.seeds.size(); ++i) os << (i ? ", " : "") << c.seeds[i];
  os << '\n';
  os << "run.tail_fraction = " << fmt(c.tail_fraction) << '\n';
  os << "run.output_dir = " << c.output_dir << '\n';
  return os.str();
}

}  // namespace noisy_cg::config
