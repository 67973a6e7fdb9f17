// Run configuration: a sectioned key = value text format.
//
//   # comment to end of line
//   [problem]   r = 100   gamma = 2
//   [model]     b = "x"   sigma = "1.4142135623730951*x"
//   [mode.1]    psi = "0.5*x^2 - 0.3*x + 1"
//   [cost.1.2]  g = "0.5*|x| + 0.1"
//
// Tokens are section headers in brackets, keys, '=', and values. A value is a
// double-quoted string or a bare word ending at whitespace or '#'. Any number of
// pairs may share a line. Unknown sections and keys, duplicate keys, and diagonal
// cost entries are errors; parsing fails before anything is computed.
#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "modeswitch/expr.hpp"
#include "modeswitch/fd_solver.hpp"
#include "modeswitch/grid.hpp"
#include "modeswitch/problem.hpp"

namespace modeswitch {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Scheme { Picard, Penalized, Both };

inline std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::Picard: return "picard";
    case Scheme::Penalized: return "penalized";
    case Scheme::Both: return "both";
  }
  return "?";
}

inline std::optional<Scheme> parse_scheme(std::string_view s) {
  if (s == "picard") return Scheme::Picard;
  if (s == "penalized") return Scheme::Penalized;
  if (s == "both") return Scheme::Both;
  return std::nullopt;
}

struct GridSpec {
  double x_min = 0.0;
  double x_max = 0.0;
  std::size_t n_nodes = 0;
  Spacing spacing = Spacing::Uniform;
};

struct SolverSpec {
  Scheme scheme = Scheme::Both;
  SolveConfig solve;
  double residual_tol = 1e-6;   // complementarity, relative to 1 + sup|v|
  double violation_tol = 1e-8;  // obstacle violation, relative to 1 + sup|v|
  double agreement_tol = 1e-7;  // picard vs penalized, relative to 1 + sup|v|
};

struct OracleSpec {
  bool enabled = false;
  std::optional<double> eps;  // defaults to the solver's outer_tol
  int n_steps = 2000;
  double tail_constant = 1.0;
  std::vector<double> probes;
  double tol = 0.02;  // relative
};

struct StrategySpec {
  bool enabled = false;
  double x0 = 0.0;
  int start_mode = 0;  // 0-based
  std::size_t n_paths = 100000;
  double dt = 1e-4;
  std::uint64_t seed = 1;
  std::optional<double> horizon;  // defaults to horizon_for_tolerance(eps = outer_tol)
  double allowance = 0.01;       // relative discretization allowance
  double region_tol = -1.0;      // negative: 1e-6 (1 + sup|v|)
  unsigned threads = 0;
  int tau_max_n = 20;
};

struct OutputSpec {
  std::string directory = "out";
  bool emit_plots = false;
};

struct RunSpec {
  SwitchingProblem problem;
  GridSpec grid;
  SolverSpec solver;
  OracleSpec oracle;
  StrategySpec strategy;
  OutputSpec output;
};

namespace detail {

struct Token {
  enum Kind { Section, Word, String, Equals } kind;
  std::string text;
  int line;
};

inline std::vector<Token> tokenize(std::string_view src) {
  std::vector<Token> out;
  int line = 1;
  std::size_t i = 0;
  while (i < src.size()) {
    const char c = src[i];
    if (c == '\n') {
      ++line;
      ++i;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '#') {
      while (i < src.size() && src[i] != '\n') ++i;
    } else if (c == '=') {
      out.push_back({Token::Equals, "=", line});
      ++i;
    } else if (c == '[') {
      const std::size_t close = src.find(']', i);
      const std::size_t nl = src.find('\n', i);
      if (close == std::string_view::npos || (nl != std::string_view::npos && nl < close)) {
        throw ConfigError("line " + std::to_string(line) + ": unterminated section header");
      }
      out.push_back({Token::Section, std::string(src.substr(i + 1, close - i - 1)), line});
      i = close + 1;
    } else if (c == '"') {
      const std::size_t close = src.find('"', i + 1);
      const std::size_t nl = src.find('\n', i);
      if (close == std::string_view::npos || (nl != std::string_view::npos && nl < close)) {
        throw ConfigError("line " + std::to_string(line) + ": unterminated string");
      }
      out.push_back({Token::String, std::string(src.substr(i + 1, close - i - 1)), line});
      i = close + 1;
    } else {
      std::size_t e = i;
      while (e < src.size() && !std::isspace(static_cast<unsigned char>(src[e])) && src[e] != '#' && src[e] != '=' &&
             src[e] != '[' && src[e] != '"') {
        ++e;
      }
      out.push_back({Token::Word, std::string(src.substr(i, e - i)), line});
      i = e;
    }
  }
  return out;
}

struct Entry {
  std::string value;
  int line;
  bool used = false;
};

struct Section {
  std::string name;
  int line;
  std::map<std::string, Entry> keys;
};

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    parts.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

/// Reads typed values out of one section, recording which keys were consumed.
class SectionReader {
 public:
  explicit SectionReader(Section& s) : s_(s) {}

  const std::string& name() const { return s_.name; }
  bool has(const std::string& key) const { return s_.keys.count(key) != 0; }

  std::string where(const std::string& key) const {
    const auto it = s_.keys.find(key);
    const int line = it == s_.keys.end() ? s_.line : it->second.line;
    return "line " + std::to_string(line) + ": [" + s_.name + "] " + key;
  }

  const std::string& raw(const std::string& key) {
    const auto it = s_.keys.find(key);
    if (it == s_.keys.end()) {
      throw ConfigError("line " + std::to_string(s_.line) + ": missing required key '" + key + "' in section [" +
                        s_.name + "]");
    }
    it->second.used = true;
    return it->second.value;
  }

  double number(const std::string& key) {
    const std::string v = trim(raw(key));
    return to_number(v, key);
  }
  double number(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

  long long integer(const std::string& key) {
    const std::string v = trim(raw(key));
    long long out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
      // Accept integral values written in floating notation, e.g. 1e5.
      const double d = to_number(v, key);
      if (d != std::floor(d) || std::abs(d) > 9.0e15) throw ConfigError(where(key) + ": expected an integer, got '" + v + "'");
      return static_cast<long long>(d);
    }
    return out;
  }
  long long integer(const std::string& key, long long fallback) { return has(key) ? integer(key) : fallback; }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const std::string v = trim(raw(key));
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError(where(key) + ": expected true or false, got '" + v + "'");
  }

  std::string text(const std::string& key, const std::string& fallback) { return has(key) ? trim(raw(key)) : fallback; }

  Expr expression(const std::string& key) {
    const std::string v = raw(key);
    try {
      return Expr::parse(v);
    } catch (const ParseError& e) {
      throw ConfigError(where(key) + ": malformed expression at offset " + std::to_string(e.offset()) + ": " + e.what());
    }
  }

  std::vector<double> number_list(const std::string& key) {
    std::vector<double> out;
    for (const auto& part : split(raw(key), ',')) {
      const std::string t = trim(part);
      if (t.empty()) throw ConfigError(where(key) + ": empty list element");
      out.push_back(to_number(t, key));
    }
    return out;
  }

  void reject_unused() const {
    for (const auto& [k, e] : s_.keys) {
      if (!e.used) throw ConfigError("line " + std::to_string(e.line) + ": unknown key '" + k + "' in section [" + s_.name + "]");
    }
  }

 private:
  double to_number(const std::string& v, const std::string& key) const {
    double out = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out)) {
      throw ConfigError(where(key) + ": expected a number, got '" + v + "'");
    }
    return out;
  }

  Section& s_;
};

inline std::vector<Section> parse_sections(std::string_view src) {
  const auto tokens = tokenize(src);
  std::vector<Section> sections;
  std::map<std::string, std::size_t> index;
  Section* cur = nullptr;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const Token& t = tokens[i];
    if (t.kind == Token::Section) {
      const std::string name = trim(t.text);
      if (name.empty()) throw ConfigError("line " + std::to_string(t.line) + ": empty section name");
      const auto it = index.find(name);
      if (it == index.end()) {
        index[name] = sections.size();
        sections.push_back({name, t.line, {}});
        cur = &sections.back();
      } else {
        cur = &sections[it->second];
      }
      continue;
    }
    if (t.kind != Token::Word) {
      throw ConfigError("line " + std::to_string(t.line) + ": expected a key, got '" + t.text + "'");
    }
    if (cur == nullptr) throw ConfigError("line " + std::to_string(t.line) + ": key '" + t.text + "' outside any section");
    if (i + 1 >= tokens.size() || tokens[i + 1].kind != Token::Equals) {
      throw ConfigError("line " + std::to_string(t.line) + ": expected '=' after key '" + t.text + "'");
    }
    if (i + 2 >= tokens.size() || (tokens[i + 2].kind != Token::Word && tokens[i + 2].kind != Token::String)) {
      throw ConfigError("line " + std::to_string(t.line) + ": missing value for key '" + t.text + "'");
    }
    if (cur->keys.count(t.text)) {
      throw ConfigError("line " + std::to_string(t.line) + ": duplicate key '" + t.text + "' in section [" + cur->name + "]");
    }
    cur->keys[t.text] = {tokens[i + 2].text, t.line};
    i += 2;
  }
  return sections;
}

/// Parses "N" or "N.M" suffixes of mode and cost sections as positive integers.
inline std::optional<int> positive_index(std::string_view s) {
  int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || v < 1) return std::nullopt;
  return v;
}

}  // namespace detail

inline RunSpec parse_config(std::string_view text) {
  auto sections = detail::parse_sections(text);
  std::map<std::string, detail::Section*> by_name;
  std::map<int, detail::Section*> modes;
  std::map<std::pair<int, int>, detail::Section*> costs;
  for (auto& s : sections) {
    const auto parts = detail::split(s.name, '.');
    const std::string where = "line " + std::to_string(s.line) + ": section [" + s.name + "]";
    if (parts[0] == "mode" && parts.size() == 2) {
      const auto i = detail::positive_index(parts[1]);
      if (!i) throw ConfigError(where + ": mode index must be a positive integer");
      modes[*i] = &s;
    } else if (parts[0] == "cost" && parts.size() == 3) {
      const auto i = detail::positive_index(parts[1]);
      const auto j = detail::positive_index(parts[2]);
      if (!i || !j) throw ConfigError(where + ": cost indices must be positive integers");
      if (*i == *j) throw ConfigError(where + ": diagonal cost entries are not allowed (i == j)");
      costs[{*i, *j}] = &s;
    } else if (parts.size() == 1 && (s.name == "problem" || s.name == "model" || s.name == "grid" ||
                                      s.name == "solver" || s.name == "oracle" || s.name == "strategy" ||
                                      s.name == "output")) {
      by_name[s.name] = &s;
    } else {
      throw ConfigError(where + ": unknown section");
    }
  }
  auto required = [&](const std::string& name) -> detail::Section& {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw ConfigError("missing required section [" + name + "]");
    return *it->second;
  };
  std::map<std::string, detail::Section> absent;  // stand-ins for omitted optional sections
  auto optional_section = [&](const std::string& name) -> detail::Section& {
    const auto it = by_name.find(name);
    if (it != by_name.end()) return *it->second;
    return absent.try_emplace(name, detail::Section{name, 0, {}}).first->second;
  };

  if (modes.empty()) throw ConfigError("no [mode.N] sections: at least one mode is required");
  const int m = static_cast<int>(modes.size());
  if (modes.rbegin()->first != m) throw ConfigError("mode sections must be numbered 1.." + std::to_string(m) + " without gaps");

  // [problem]
  detail::SectionReader prob(required("problem"));
  const double r = prob.number("r");
  const long long gamma = prob.integer("gamma", 0);
  prob.reject_unused();

  // [model]
  detail::SectionReader model_sec(required("model"));
  DiffusionModel model{model_sec.expression("b"), model_sec.expression("sigma")};
  model_sec.reject_unused();

  // [mode.N]
  std::vector<Expr> psi;
  std::vector<std::optional<Expr>> boundary;
  for (auto& [i, sec] : modes) {
    detail::SectionReader rd(*sec);
    psi.push_back(rd.expression("psi"));
    boundary.push_back(rd.has("boundary") ? std::optional<Expr>(rd.expression("boundary")) : std::nullopt);
    rd.reject_unused();
  }

  // [cost.i.j]
  std::vector<std::vector<Expr>> cost(static_cast<std::size_t>(m), std::vector<Expr>(static_cast<std::size_t>(m)));
  for (auto& [ij, sec] : costs) {
    if (ij.first > m || ij.second > m) {
      throw ConfigError("line " + std::to_string(sec->line) + ": section [" + sec->name + "] refers to a mode beyond " +
                        std::to_string(m));
    }
    detail::SectionReader rd(*sec);
    cost[ij.first - 1][ij.second - 1] = rd.expression("g");
    rd.reject_unused();
  }
  for (int i = 1; i <= m; ++i) {
    for (int j = 1; j <= m; ++j) {
      if (i != j && !costs.count({i, j})) {
        throw ConfigError("missing cost section [cost." + std::to_string(i) + "." + std::to_string(j) + "]");
      }
    }
  }

  std::optional<SwitchingProblem> problem;
  try {
    problem.emplace(r, psi, cost, model, static_cast<int>(gamma));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("[problem]: ") + e.what());
  }

  // [grid]
  GridSpec grid;
  {
    detail::SectionReader rd(required("grid"));
    grid.x_min = rd.number("x_min");
    grid.x_max = rd.number("x_max");
    const long long n = rd.integer("n_nodes");
    if (n < 3) throw ConfigError(rd.where("n_nodes") + ": at least 3 nodes are required");
    grid.n_nodes = static_cast<std::size_t>(n);
    const std::string sp = rd.text("spacing", "uniform");
    if (sp == "uniform") {
      grid.spacing = Spacing::Uniform;
    } else if (sp == "log" || sp == "logarithmic") {
      grid.spacing = Spacing::Logarithmic;
    } else {
      throw ConfigError(rd.where("spacing") + ": expected \"uniform\" or \"log\", got '" + sp + "'");
    }
    if (!(grid.x_min < grid.x_max)) throw ConfigError(rd.where("x_max") + ": x_min must be below x_max");
    if (grid.spacing == Spacing::Logarithmic && !(grid.x_min > 0.0)) {
      throw ConfigError(rd.where("spacing") + ": log spacing needs x_min > 0");
    }
    rd.reject_unused();
  }

  // [solver]
  SolverSpec solver;
  {
    detail::SectionReader rd(optional_section("solver"));
    const std::string scheme = rd.text("scheme", "both");
    const auto sc = parse_scheme(scheme);
    if (!sc) throw ConfigError(rd.where("scheme") + ": expected picard, penalized or both, got '" + scheme + "'");
    solver.scheme = *sc;
    solver.solve.outer_tol = rd.number("outer_tol", solver.solve.outer_tol);
    solver.solve.max_outer = static_cast<int>(rd.integer("max_outer", solver.solve.max_outer));
    solver.solve.max_policy_iters = static_cast<int>(rd.integer("max_policy_iters", solver.solve.max_policy_iters));
    if (rd.has("penalty_schedule")) solver.solve.penalty_schedule = rd.number_list("penalty_schedule");
    const std::string bnd = rd.text("boundary", "zero_curvature");
    if (bnd == "zero_curvature") {
      solver.solve.boundary = BoundaryKind::ZeroCurvature;
    } else if (bnd == "dirichlet") {
      solver.solve.boundary = BoundaryKind::Dirichlet;
      for (int i = 0; i < m; ++i) {
        if (!boundary[i]) {
          throw ConfigError("missing required key 'boundary' in section [mode." + std::to_string(i + 1) +
                            "] (needed by solver boundary = dirichlet)");
        }
        solver.solve.dirichlet.push_back(*boundary[i]);
      }
    } else {
      throw ConfigError(rd.where("boundary") + ": expected zero_curvature or dirichlet, got '" + bnd + "'");
    }
    solver.residual_tol = rd.number("residual_tol", solver.residual_tol);
    solver.violation_tol = rd.number("violation_tol", solver.violation_tol);
    solver.agreement_tol = rd.number("agreement_tol", solver.agreement_tol);
    try {
      solver.solve.check();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("[solver]: ") + e.what());
    }
    rd.reject_unused();
  }

  // [oracle]
  OracleSpec oracle;
  {
    detail::SectionReader rd(optional_section("oracle"));
    oracle.enabled = rd.boolean("enabled", false);
    if (rd.has("eps")) oracle.eps = rd.number("eps");
    oracle.n_steps = static_cast<int>(rd.integer("n_steps", oracle.n_steps));
    oracle.tail_constant = rd.number("tail_constant", oracle.tail_constant);
    if (rd.has("probes")) oracle.probes = rd.number_list("probes");
    oracle.tol = rd.number("tol", oracle.tol);
    if (oracle.enabled && oracle.probes.empty()) throw ConfigError("missing required key 'probes' in section [oracle]");
    if (oracle.n_steps < 1) throw ConfigError(rd.where("n_steps") + ": must be at least 1");
    rd.reject_unused();
  }

  // [strategy]
  StrategySpec strat;
  {
    detail::SectionReader rd(optional_section("strategy"));
    strat.enabled = rd.boolean("enabled", false);
    if (strat.enabled || rd.has("x0")) strat.x0 = rd.number("x0");
    const long long start = rd.integer("start_mode", 1);
    if (start < 1 || start > m) throw ConfigError(rd.where("start_mode") + ": must be between 1 and " + std::to_string(m));
    strat.start_mode = static_cast<int>(start - 1);
    const long long paths = rd.integer("n_paths", static_cast<long long>(strat.n_paths));
    if (paths < 1) throw ConfigError(rd.where("n_paths") + ": must be positive");
    strat.n_paths = static_cast<std::size_t>(paths);
    strat.dt = rd.number("dt", strat.dt);
    if (!(strat.dt > 0.0)) throw ConfigError(rd.where("dt") + ": must be positive");
    const long long seed = rd.integer("seed", 1);
    if (seed < 0) throw ConfigError(rd.where("seed") + ": must be non-negative");
    strat.seed = static_cast<std::uint64_t>(seed);
    if (rd.has("horizon")) strat.horizon = rd.number("horizon");
    strat.allowance = rd.number("allowance", strat.allowance);
    strat.region_tol = rd.number("region_tol", strat.region_tol);
    const long long threads = rd.integer("threads", 0);
    if (threads < 0) throw ConfigError(rd.where("threads") + ": must be non-negative");
    strat.threads = static_cast<unsigned>(threads);
    strat.tau_max_n = static_cast<int>(rd.integer("tau_max_n", strat.tau_max_n));
    if (strat.tau_max_n < 1) throw ConfigError(rd.where("tau_max_n") + ": must be at least 1");
    rd.reject_unused();
  }

  // [output]
  OutputSpec output;
  {
    detail::SectionReader rd(optional_section("output"));
    output.directory = rd.text("directory", output.directory);
    output.emit_plots = rd.boolean("emit_plots", false);
    rd.reject_unused();
  }

  return RunSpec{std::move(*problem), grid, solver, oracle, strat, output};
}

inline RunSpec load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace modeswitch
