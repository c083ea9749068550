// Copyright 2026 The kdisagg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kdisagg/error.hpp"
#include "kdisagg/io.hpp"
#include "kdisagg/problem.hpp"

namespace kdisagg {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Variable {
  std::string name;
  double lb = 0;
  double ub = kInf;
  bool binary = false;

  friend bool operator==(const Variable&, const Variable&) = default;
};

struct Term {
  std::size_t var = 0;
  double coef = 0;

  friend bool operator==(const Term&, const Term&) = default;
};

enum class Sense { le, ge, eq };

struct Constraint {
  std::string name;
  std::vector<Term> terms;
  Sense sense = Sense::le;
  double rhs = 0;

  friend bool operator==(const Constraint&, const Constraint&) = default;
};

/// A minimization MILP. Variables appear in order of first use (objective,
/// then constraints), which is also the order an LP file reintroduces them.
struct MilpModel {
  std::string objective_name = "obj";
  std::vector<Term> objective;
  std::vector<Variable> vars;
  std::vector<Constraint> constraints;

  std::size_t add_var(std::string name, double lb, double ub, bool binary) {
    index_[name] = vars.size();
    vars.push_back({std::move(name), lb, ub, binary});
    return vars.size() - 1;
  }

  std::optional<std::size_t> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t count_binaries() const {
    std::size_t n = 0;
    for (const auto& v : vars) n += v.binary;
    return n;
  }

  double objective_value(const std::vector<double>& x) const {
    double s = 0;
    for (const auto& t : objective) s += t.coef * x[t.var];
    return s;
  }

  friend bool operator==(const MilpModel& a, const MilpModel& b) {
    return a.objective_name == b.objective_name && a.objective == b.objective &&
           a.vars == b.vars && a.constraints == b.constraints;
  }

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

inline std::string x_name(std::size_t k, std::size_t g) {
  return "x_" + std::to_string(k) + "_" + std::to_string(g);
}

inline std::string y_name(std::size_t i, std::size_t j, std::size_t u, std::size_t g) {
  return "y_" + std::to_string(i) + "_" + std::to_string(j) + "_" + std::to_string(u) + "_" +
         std::to_string(g);
}

/// The placement MILP. Parallel edges between the same (i, j) share one y
/// per GPU pair with their costs summed.
inline MilpModel build_milp(const PlacementProblem& p) {
  p.validate();
  const std::size_t K = p.node_count(), G = p.gpu_count();
  MilpModel m;
  std::size_t z = 0;
  if (p.objective == Objective::throughput) z = m.add_var("z", 0, kInf, false);

  std::vector<std::vector<std::size_t>> x(K, std::vector<std::size_t>(G));
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t g = 0; g < G; ++g) {
      double lb = 0, ub = 1;
      if (G == 1) lb = 1;
      if (p.pins[k]) lb = ub = static_cast<std::size_t>(*p.pins[k]) == g ? 1 : 0;
      x[k][g] = m.add_var(x_name(k, g), lb, ub, true);
    }

  // (i, j) -> summed per-pair cost coefficients
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::vector<double>>> pairs;
  for (const auto& e : p.edges) {
    auto& c = pairs[{e.src, e.dst}];
    if (c.empty()) c.assign(G, std::vector<double>(G, 0));
    for (std::size_t u = 0; u < G; ++u)
      for (std::size_t g = 0; g < G; ++g)
        if (u != g) c[u][g] += e.weight * p.comm_cost(u, g, e.bytes);
  }
  struct YVar {
    std::size_t var, i, j, u, g;
    double cost;
  };
  std::vector<YVar> ys;
  for (const auto& [ij, c] : pairs)
    for (std::size_t u = 0; u < G; ++u)
      for (std::size_t g = 0; g < G; ++g)
        if (u != g)
          ys.push_back({m.add_var(y_name(ij.first, ij.second, u, g), 0, 1, true), ij.first,
                        ij.second, u, g, c[u][g]});

  if (p.objective == Objective::throughput) {
    m.objective.push_back({z, 1});
  } else {
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t g = 0; g < G; ++g) m.objective.push_back({x[k][g], p.t[k][g]});
    for (const auto& y : ys) m.objective.push_back({y.var, y.cost});
  }

  for (std::size_t k = 0; k < K; ++k) {
    Constraint c{"assign_" + std::to_string(k), {}, Sense::eq, 1};
    for (std::size_t g = 0; g < G; ++g) c.terms.push_back({x[k][g], 1});
    m.constraints.push_back(std::move(c));
  }
  for (const auto& y : ys) {
    const std::string tag = m.vars[y.var].name.substr(2);
    m.constraints.push_back({"src_" + tag, {{y.var, 1}, {x[y.i][y.u], -1}}, Sense::le, 0});
    m.constraints.push_back({"dst_" + tag, {{y.var, 1}, {x[y.j][y.g], -1}}, Sense::le, 0});
    m.constraints.push_back(
        {"both_" + tag, {{y.var, 1}, {x[y.i][y.u], -1}, {x[y.j][y.g], -1}}, Sense::ge, -1});
  }
  if (p.objective == Objective::throughput) {
    for (std::size_t g = 0; g < G; ++g) {
      Constraint c{"compute_" + std::to_string(g), {{z, 1}}, Sense::ge, 0};
      for (std::size_t k = 0; k < K; ++k) c.terms.push_back({x[k][g], -p.t[k][g]});
      m.constraints.push_back(std::move(c));
    }
    for (std::size_t g = 0; g < G; ++g) {
      Constraint c{"comm_" + std::to_string(g), {{z, 1}}, Sense::ge, 0};
      for (const auto& y : ys)
        if (y.g == g) c.terms.push_back({y.var, -y.cost});
      m.constraints.push_back(std::move(c));
    }
  }
  return m;
}

/// Full variable vector for an assignment: x, y = x*x, z = objective.
inline std::vector<double> solution_vector(const MilpModel& m, const PlacementProblem& p,
                                           const std::vector<int>& assign) {
  std::vector<double> v(m.vars.size(), 0);
  for (std::size_t i = 0; i < m.vars.size(); ++i) {
    const std::string& n = m.vars[i].name;
    if (n == "z") {
      v[i] = evaluate(p, assign).objective_value;
      continue;
    }
    std::vector<std::size_t> idx;
    std::istringstream ss(n.substr(2));
    std::string part;
    while (std::getline(ss, part, '_')) idx.push_back(std::stoul(part));
    if (n[0] == 'x') v[i] = assign[idx[0]] == static_cast<int>(idx[1]) ? 1 : 0;
    else
      v[i] = (assign[idx[0]] == static_cast<int>(idx[2]) &&
              assign[idx[1]] == static_cast<int>(idx[3]))
                 ? 1
                 : 0;
  }
  return v;
}

/// Names of violated constraints and bounds at `v`.
inline std::vector<std::string> violations(const MilpModel& m, const std::vector<double>& v,
                                           double tol = 1e-9) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < m.vars.size(); ++i) {
    if (v[i] < m.vars[i].lb - tol || v[i] > m.vars[i].ub + tol) out.push_back(m.vars[i].name);
    if (m.vars[i].binary && v[i] != 0 && v[i] != 1) out.push_back(m.vars[i].name);
  }
  for (const auto& c : m.constraints) {
    double lhs = 0, scale = std::abs(c.rhs);
    for (const auto& t : c.terms) {
      lhs += t.coef * v[t.var];
      scale = std::max(scale, std::abs(t.coef * v[t.var]));
    }
    const double eps = tol * std::max(1.0, scale);
    const bool ok = c.sense == Sense::le   ? lhs <= c.rhs + eps
                    : c.sense == Sense::ge ? lhs >= c.rhs - eps
                                           : std::abs(lhs - c.rhs) <= eps;
    if (!ok) out.push_back(c.name);
  }
  return out;
}

/// Pointwise y = x*x check of a placement's derived linearization against the
/// cut edges the placement reports.
inline bool linearization_holds(const MilpModel& m, const PlacementProblem& p,
                                const Placement& pl) {
  auto v = solution_vector(m, p, pl.assign);
  std::set<std::string> cut;
  for (const auto& c : pl.cut) cut.insert(y_name(c.src, c.dst, c.from, c.to));
  for (std::size_t i = 0; i < m.vars.size(); ++i) {
    const auto& n = m.vars[i].name;
    if (n[0] != 'y') continue;
    if ((v[i] == 1) != (cut.count(n) == 1)) return false;
  }
  return violations(m, v).empty() &&
         std::abs(m.objective_value(v) - pl.objective_value) <=
             1e-9 * std::max(1.0, std::abs(pl.objective_value));
}

// ---- LP text format ---------------------------------------------------------

namespace detail {

inline void write_terms(std::ostream& os, const MilpModel& m, const std::vector<Term>& terms) {
  std::size_t on_line = 0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const double c = terms[i].coef;
    const bool neg = std::signbit(c);
    if (i == 0) os << (neg ? "- " : "");
    else os << (neg ? " - " : " + ");
    os << format_double(std::abs(c)) << ' ' << m.vars[terms[i].var].name;
    if (++on_line == 8 && i + 1 < terms.size()) {
      os << "\n   ";
      on_line = 0;
    }
  }
}

inline const char* sense_text(Sense s) {
  return s == Sense::le ? "<=" : s == Sense::ge ? ">=" : "=";
}

}  // namespace detail

/// CPLEX LP text. Throughput models minimize the auxiliary z that bounds
/// every per-GPU compute and communication load from above.
inline std::string to_lp(const MilpModel& m, const std::string& comment = {}) {
  std::ostringstream os;
  os << "\\ kdisagg placement model v1" << (comment.empty() ? "" : " " + comment) << '\n';
  os << "Minimize\n " << m.objective_name << ": ";
  if (m.objective.empty()) os << '0';
  detail::write_terms(os, m, m.objective);
  os << "\nSubject To\n";
  for (const auto& c : m.constraints) {
    os << ' ' << c.name << ": ";
    detail::write_terms(os, m, c.terms);
    os << ' ' << detail::sense_text(c.sense) << ' ' << format_double(c.rhs) << '\n';
  }
  os << "Bounds\n";
  for (const auto& v : m.vars) {
    const double dlb = 0, dub = v.binary ? 1 : kInf;
    if (v.lb == dlb && v.ub == dub) continue;
    if (v.lb == v.ub) {
      os << ' ' << v.name << " = " << format_double(v.lb) << '\n';
    } else {
      os << ' ' << (std::isinf(v.lb) ? "-inf" : format_double(v.lb)) << " <= " << v.name
         << " <= " << (std::isinf(v.ub) ? "+inf" : format_double(v.ub)) << '\n';
    }
  }
  os << "Binaries\n";
  std::size_t on_line = 0;
  for (const auto& v : m.vars) {
    if (!v.binary) continue;
    os << (on_line == 0 ? " " : " ") << v.name;
    if (++on_line == 10) {
      os << '\n';
      on_line = 0;
    }
  }
  if (on_line) os << '\n';
  os << "End\n";
  return os.str();
}

namespace detail {

struct LpLexer {
  std::vector<std::pair<std::string, std::size_t>> tokens;  // (token, line)
  std::size_t pos = 0;

  explicit LpLexer(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
      ++no;
      auto cut = line.find('\\');
      if (cut != std::string::npos) line.resize(cut);
      std::size_t i = 0;
      while (i < line.size()) {
        char c = line[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
          ++i;
        } else if (c == '<' || c == '>' || c == '=') {
          std::string op(1, c);
          if (i + 1 < line.size() && line[i + 1] == '=') op += '=';
          if (op == "<") op = "<=";
          if (op == ">") op = ">=";
          if (op == "==") op = "=";
          if (op == "=<") op = "<=";
          tokens.emplace_back(op, no);
          i += (i + 1 < line.size() && line[i + 1] == '=') ? 2 : 1;
        } else if (c == '+' || c == '-') {
          // signs stand alone unless they prefix inf
          if (line.compare(i + 1, 3, "inf") == 0) {
            tokens.emplace_back(std::string(1, c) + "inf", no);
            i += 4;
          } else {
            tokens.emplace_back(std::string(1, c), no);
            ++i;
          }
        } else if (c == ':') {
          tokens.emplace_back(":", no);
          ++i;
        } else {
          std::size_t j = i;
          while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j])) &&
                 line[j] != ':' && line[j] != '<' && line[j] != '>' && line[j] != '=' &&
                 !((line[j] == '+' || line[j] == '-') && j > i &&
                   line[j - 1] != 'e' && line[j - 1] != 'E'))
            ++j;
          tokens.emplace_back(line.substr(i, j - i), no);
          i = j;
        }
      }
    }
  }

  bool done() const { return pos >= tokens.size(); }
  const std::string& peek(std::size_t ahead = 0) const {
    static const std::string empty;
    return pos + ahead < tokens.size() ? tokens[pos + ahead].first : empty;
  }
  std::size_t line() const { return pos < tokens.size() ? tokens[pos].second : 0; }
  std::string next() { return tokens.at(pos++).first; }
};

inline std::optional<double> lp_number(const std::string& s) {
  if (s == "inf" || s == "+inf" || s == "infinity") return kInf;
  if (s == "-inf" || s == "-infinity") return -kInf;
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline bool is_section(const LpLexer& lx) {
  const std::string t = lower(lx.peek());
  if (t == "subject" && lower(lx.peek(1)) == "to") return true;
  return t == "st" || t == "s.t." || t == "bounds" || t == "binaries" || t == "binary" ||
         t == "bin" || t == "generals" || t == "general" || t == "end";
}

}  // namespace detail

/// Reads the LP subset that to_lp writes (plus the common keyword aliases).
inline MilpModel parse_lp(const std::string& text) {
  detail::LpLexer lx(text);
  MilpModel m;
  auto fail = [&](const std::string& what) -> ParseError {
    return ParseError(lx.line(), 0, "LP: " + what);
  };
  auto var = [&](const std::string& name) {
    if (auto i = m.find(name)) return *i;
    return m.add_var(name, 0, kInf, false);
  };
  // Reads "[sign] [coef] name" terms until a relational operator or section.
  auto terms = [&]() {
    std::vector<Term> out;
    while (!lx.done() && !detail::is_section(lx)) {
      const std::string& t = lx.peek();
      if (t == "<=" || t == ">=" || t == "=") break;
      if (lx.peek(1) == ":" ) break;  // next constraint's name
      double sign = 1;
      if (t == "+" || t == "-") {
        sign = lx.next() == "-" ? -1 : 1;
      }
      double coef = 1;
      if (auto n = detail::lp_number(lx.peek())) {
        coef = *n;
        lx.next();
        const std::string& after = lx.peek();
        if (lx.done() || detail::is_section(lx) || after == "<=" || after == ">=" ||
            after == "=" || after == "+" || after == "-" || lx.peek(1) == ":")
          continue;  // constant term
      }
      if (lx.done()) throw fail("dangling coefficient");
      std::string name = lx.next();
      if (detail::lp_number(name)) throw fail("expected a variable, found '" + name + "'");
      out.push_back({var(name), sign * coef});
    }
    return out;
  };

  if (lx.done()) throw fail("empty file");
  const std::string sense = detail::lower(lx.next());
  if (sense != "minimize" && sense != "minimise" && sense != "min")
    throw fail("expected Minimize");
  if (lx.peek(1) == ":") {
    m.objective_name = lx.next();
    lx.next();
  }
  m.objective = terms();

  std::string section = detail::lower(lx.peek());
  if (section == "subject") {
    lx.next();
    lx.next();
  } else if (section == "st" || section == "s.t.") {
    lx.next();
  } else {
    throw fail("expected Subject To");
  }
  while (!lx.done() && !detail::is_section(lx)) {
    Constraint c;
    if (lx.peek(1) == ":") {
      c.name = lx.next();
      lx.next();
    } else {
      c.name = "c" + std::to_string(m.constraints.size());
    }
    c.terms = terms();
    const std::string op = lx.done() ? "" : lx.next();
    if (op == "<=") c.sense = Sense::le;
    else if (op == ">=") c.sense = Sense::ge;
    else if (op == "=") c.sense = Sense::eq;
    else throw fail("constraint '" + c.name + "' lacks a relational operator");
    double sign = 1;
    if (lx.peek() == "-" || lx.peek() == "+") sign = lx.next() == "-" ? -1 : 1;
    auto rhs = detail::lp_number(lx.done() ? "" : lx.next());
    if (!rhs) throw fail("constraint '" + c.name + "' lacks a right-hand side");
    c.rhs = sign * *rhs;
    m.constraints.push_back(std::move(c));
  }

  std::vector<std::string> binaries;
  while (!lx.done()) {
    const std::string head = detail::lower(lx.next());
    if (head == "end") break;
    if (head == "bounds") {
      while (!lx.done() && !detail::is_section(lx)) {
        // forms: name = v | name >= v | name <= v | lo <= name <= hi | name free
        auto signed_number = [&]() -> std::optional<double> {
          double sign = 1;
          if (lx.peek() == "-" || lx.peek() == "+") sign = lx.next() == "-" ? -1 : 1;
          auto v = detail::lp_number(lx.peek());
          if (v) lx.next();
          return v ? std::optional<double>(sign * *v) : std::nullopt;
        };
        std::size_t save = lx.pos;
        if (auto lo = signed_number()) {
          if (lx.next() != "<=") throw fail("malformed bound");
          auto& v = m.vars[var(lx.next())];
          v.lb = *lo;
          if (lx.peek() == "<=") {
            lx.next();
            auto hi = signed_number();
            if (!hi) throw fail("malformed bound");
            v.ub = *hi;
          }
          continue;
        }
        lx.pos = save;
        auto& v = m.vars[var(lx.next())];
        const std::string op = detail::lower(lx.next());
        if (op == "free") {
          v.lb = -kInf;
          v.ub = kInf;
          continue;
        }
        auto val = signed_number();
        if (!val) throw fail("malformed bound on '" + v.name + "'");
        if (op == "=") v.lb = v.ub = *val;
        else if (op == ">=") v.lb = *val;
        else if (op == "<=") v.ub = *val;
        else throw fail("malformed bound on '" + v.name + "'");
      }
    } else if (head == "binaries" || head == "binary" || head == "bin") {
      while (!lx.done() && !detail::is_section(lx)) binaries.push_back(lx.next());
    } else if (head == "generals" || head == "general") {
      while (!lx.done() && !detail::is_section(lx)) lx.next();
    } else {
      throw fail("unexpected '" + head + "'");
    }
  }
  for (const auto& b : binaries) {
    auto& v = m.vars[var(b)];
    v.binary = true;
    // binaries default to [0, 1] unless a bound section narrowed them
    if (std::isinf(v.ub)) v.ub = 1;
  }
  return m;
}

}  // namespace kdisagg
