#pragma once
//
// Line-oriented configuration format:
//
//   # comment                     (also ';' at line start)
//   [section]                     sections: problem, coefficients,
//                                 measure1, measure2, run
//   key = value                   scalars, expressions, bracketed
//                                 expression vectors [a, b] and row-major
//                                 matrices [[a, b], [c, d]]
//
// Every diagnostic carries the 1-based line (and column for expressions).
// Unknown keys are errors; missing keys default to zero / library defaults.
//

#include <cctype>
#include <charconv>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "sidemc/expression.hpp"
#include "sidemc/problem.hpp"
#include "sidemc/solver.hpp"

namespace sidemc {

/// Run-control block of a configuration.
struct RunConfig {
  std::uint64_t seed = 1;
  std::size_t inner = 100;
  SchemeParams params;
  double time = -1.0;  ///< solve time; defaults to the horizon T
  double grid_lo = -1.0, grid_hi = 1.0;
  int grid_n = 21;
  bool interlace = false;
  double delta = 0.0;     ///< large-jump threshold (enables interlacing)
  double eta1_bar = -1.0; ///< truncated contraction bound; defaults to eta1
  std::string oracle = "transport";  ///< oracle for `converge`
  std::vector<int> steps_list = {50, 100, 200};
  std::vector<std::size_t> m_list = {16, 64, 256};

  std::vector<Vec> query_grid(int d1) const {
    std::vector<Vec> g;
    for (int i = 0; i < grid_n; ++i) {
      const double v = grid_n == 1
                           ? grid_lo
                           : grid_lo + (grid_hi - grid_lo) * i / (grid_n - 1);
      g.push_back(Vec::Constant(d1, v));
    }
    return g;
  }
};

struct ConfigDocument {
  ProblemSpec spec;
  RunConfig run;
  std::string source_text;  ///< verbatim input, embedded in manifests
};

namespace detail {

struct RawEntry {
  std::string value;
  int line = 0;
  int value_column = 0;  ///< 1-based column where the value starts
  bool used = false;
};

using RawSection = std::multimap<std::string, RawEntry>;

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

/// Split a bracketed list "[a, b, c]" on top-level commas.
inline std::vector<std::string> split_bracket_list(const std::string& text,
                                                   int line) {
  const std::string body = trim(text);
  if (body.size() < 2 || body.front() != '[' || body.back() != ']') {
    throw ParseError("expected a bracketed list '[...]'", line, 1);
  }
  std::vector<std::string> parts;
  int depth = 0;
  std::string cur;
  for (std::size_t i = 1; i + 1 < body.size(); ++i) {
    const char c = body[i];
    if (c == '[' || c == '(') ++depth;
    if (c == ']' || c == ')') --depth;
    if (c == ',' && depth == 0) {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (depth != 0) throw ParseError("unbalanced brackets in list", line, 1);
  if (!trim(cur).empty() || !parts.empty()) parts.push_back(trim(cur));
  return parts;
}

inline double parse_double(const RawEntry& e) {
  const std::string v = trim(e.value);
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
    throw ParseError("expected a number, got '" + v + "'", e.line,
                     e.value_column);
  }
  return out;
}

inline long long parse_int(const RawEntry& e) {
  const std::string v = trim(e.value);
  long long out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
    throw ParseError("expected an integer, got '" + v + "'", e.line,
                     e.value_column);
  }
  return out;
}

/// Shared payload for expression-backed fields.
struct ExprBundle {
  std::vector<Expression> exprs;
  int rows = 0, cols = 0;
};

inline std::vector<Expression> parse_expr_vector(const RawEntry& e, int n,
                                                 int d1,
                                                 const std::string& key) {
  const auto parts = split_bracket_list(e.value, e.line);
  if (static_cast<int>(parts.size()) != n) {
    throw ParseError(key + ": expected " + std::to_string(n) +
                         " entries, got " + std::to_string(parts.size()),
                     e.line, e.value_column);
  }
  std::vector<Expression> out;
  for (const std::string& p : parts) {
    out.push_back(parse_expression(p, d1, e.line, e.value_column));
  }
  return out;
}

inline std::vector<Expression> parse_expr_matrix(const RawEntry& e, int rows,
                                                 int cols, int d1,
                                                 const std::string& key) {
  const auto row_texts = split_bracket_list(e.value, e.line);
  if (static_cast<int>(row_texts.size()) != rows) {
    throw ParseError(key + ": expected " + std::to_string(rows) +
                         " rows, got " + std::to_string(row_texts.size()),
                     e.line, e.value_column);
  }
  std::vector<Expression> out;  // row-major
  for (const std::string& row : row_texts) {
    RawEntry re{row, e.line, e.value_column, true};
    const auto cells = split_bracket_list(re.value, e.line);
    if (static_cast<int>(cells.size()) != cols) {
      throw ParseError(key + ": expected " + std::to_string(cols) +
                           " columns, got " + std::to_string(cells.size()),
                       e.line, e.value_column);
    }
    for (const std::string& cell : cells) {
      out.push_back(parse_expression(cell, d1, e.line, e.value_column));
    }
  }
  return out;
}

inline bool all_zero(const std::vector<Expression>& v) {
  for (const Expression& e : v) {
    if (!e.is_literal_zero()) return false;
  }
  return true;
}

inline bool any_x(const std::vector<Expression>& v) {
  for (const Expression& e : v) {
    if (e.depends_on_x()) return true;
  }
  return false;
}

inline void forbid_z(const std::vector<Expression>& v, const RawEntry& e,
                     const std::string& key) {
  for (const Expression& ex : v) {
    if (ex.depends_on_z()) {
      throw ParseError(key + ": the mark variable z is only available in "
                             "jump coefficients",
                       e.line, e.value_column);
    }
  }
}

inline VectorField build_vector_field(const RawEntry& e, int n, int d1,
                                      const std::string& key) {
  auto exprs = std::make_shared<const std::vector<Expression>>(
      parse_expr_vector(e, n, d1, key));
  forbid_z(*exprs, e, key);
  if (all_zero(*exprs)) return VectorField::zero(n, key);
  VectorField f = VectorField::of(
      n,
      [exprs](double t, const Vec& x, Vec& out) {
        for (int i = 0; i < static_cast<int>(exprs->size()); ++i) {
          out[i] = (*exprs)[static_cast<std::size_t>(i)].eval(t, x, 0.0);
        }
      },
      !any_x(*exprs), key);
  return f;
}

inline MatrixField build_matrix_field(const RawEntry& e, int rows, int cols,
                                      int d1, const std::string& key) {
  auto exprs = std::make_shared<const std::vector<Expression>>(
      parse_expr_matrix(e, rows, cols, d1, key));
  forbid_z(*exprs, e, key);
  if (all_zero(*exprs)) return MatrixField::zero(rows, cols, key);
  return MatrixField::of(
      rows, cols,
      [exprs, cols](double t, const Vec& x, Mat& out) {
        for (int r = 0; r < out.rows(); ++r) {
          for (int c = 0; c < cols; ++c) {
            out(r, c) = (*exprs)[static_cast<std::size_t>(r * cols + c)].eval(
                t, x, 0.0);
          }
        }
      },
      !any_x(*exprs), key);
}

inline VectorJumpField build_vector_jump_field(const RawEntry& e, int n,
                                               int d1,
                                               const std::string& key) {
  auto exprs = std::make_shared<const std::vector<Expression>>(
      parse_expr_vector(e, n, d1, key));
  if (all_zero(*exprs)) return VectorJumpField::zero(n, key);
  return VectorJumpField::of(
      n,
      [exprs](double t, const Vec& x, double z, Vec& out) {
        for (int i = 0; i < static_cast<int>(exprs->size()); ++i) {
          out[i] = (*exprs)[static_cast<std::size_t>(i)].eval(t, x, z);
        }
      },
      !any_x(*exprs), key);
}

inline MatrixJumpField build_matrix_jump_field(const RawEntry& e, int rows,
                                               int cols, int d1,
                                               const std::string& key) {
  auto exprs = std::make_shared<const std::vector<Expression>>(
      parse_expr_matrix(e, rows, cols, d1, key));
  if (all_zero(*exprs)) return MatrixJumpField::zero(rows, cols, key);
  return MatrixJumpField::of(
      rows, cols,
      [exprs, cols](double t, const Vec& x, double z, Mat& out) {
        for (int r = 0; r < out.rows(); ++r) {
          for (int c = 0; c < cols; ++c) {
            out(r, c) = (*exprs)[static_cast<std::size_t>(r * cols + c)].eval(
                t, x, z);
          }
        }
      },
      !any_x(*exprs), key);
}

inline std::function<double(double)> build_envelope(const RawEntry& e,
                                                    const std::string& key) {
  const Expression ex =
      parse_expression(trim(e.value), 0, e.line, e.value_column);
  if (ex.depends_on_x() || ex.depends_on_t()) {
    throw ParseError(key + ": envelopes may only depend on z", e.line,
                     e.value_column);
  }
  return [ex](double z) { return ex.eval(0.0, Vec(), z); };
}

inline SetTag parse_tag(const std::string& tag, int line) {
  if (tag == "D") return SetTag::D;
  if (tag == "E") return SetTag::E;
  if (tag == "V") return SetTag::V;
  throw ParseError("unknown mark-set tag '" + tag + "' (want D, E, or V)",
                   line, 1);
}

}  // namespace detail

inline ConfigDocument parse_config(const std::string& text) {
  using detail::RawEntry;
  std::map<std::string, detail::RawSection> sections;
  {
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    std::string current;
    while (std::getline(in, raw)) {
      ++line_no;
      if (!raw.empty() && raw.back() == '\r') raw.pop_back();
      const std::string line = detail::trim(raw);
      if (line.empty() || line[0] == '#' || line[0] == ';') continue;
      if (line.front() == '[') {
        if (line.back() != ']') {
          throw ParseError("malformed section header", line_no, 1);
        }
        current = detail::trim(line.substr(1, line.size() - 2));
        if (current != "problem" && current != "coefficients" &&
            current != "measure1" && current != "measure2" &&
            current != "run") {
          throw ParseError("unknown section '" + current + "'", line_no, 1);
        }
        sections[current];
        continue;
      }
      const std::size_t eq = raw.find('=');
      if (current.empty() || eq == std::string::npos) {
        throw ParseError("expected 'key = value' inside a section", line_no,
                         1);
      }
      const std::string key = detail::trim(raw.substr(0, eq));
      if (key.empty()) throw ParseError("empty key", line_no, 1);
      std::size_t vstart = eq + 1;
      while (vstart < raw.size() &&
             std::isspace(static_cast<unsigned char>(raw[vstart]))) {
        ++vstart;
      }
      sections[current].emplace(
          key, RawEntry{detail::trim(raw.substr(eq + 1)), line_no,
                        static_cast<int>(vstart) + 1, false});
    }
  }

  const auto take = [&](const std::string& sec,
                        const std::string& key) -> RawEntry* {
    auto s = sections.find(sec);
    if (s == sections.end()) return nullptr;
    auto it = s->second.find(key);
    if (it == s->second.end()) return nullptr;
    if (s->second.count(key) > 1) {
      throw ParseError("duplicate key '" + key + "' in section [" + sec + "]",
                       it->second.line, 1);
    }
    it->second.used = true;
    return &it->second;
  };

  ConfigDocument doc;
  doc.source_text = text;

  // --- [problem] ---
  int d1 = 1, d2 = 1, channels = 1;
  double alpha = 2.0, T = 1.0;
  if (RawEntry* e = take("problem", "d1")) d1 = static_cast<int>(detail::parse_int(*e));
  if (RawEntry* e = take("problem", "d2")) d2 = static_cast<int>(detail::parse_int(*e));
  if (RawEntry* e = take("problem", "channels")) {
    channels = static_cast<int>(detail::parse_int(*e));
  }
  if (RawEntry* e = take("problem", "alpha")) alpha = detail::parse_double(*e);
  if (RawEntry* e = take("problem", "T")) T = detail::parse_double(*e);
  doc.spec = ProblemSpec::zero(d1, d2, channels, alpha, T);
  CoefficientSet& cs = doc.spec.coefficients;
  if (RawEntry* e = take("problem", "theta")) cs.theta = detail::parse_double(*e);
  if (RawEntry* e = take("problem", "theta_prime")) {
    doc.spec.theta_prime = detail::parse_double(*e);
  }
  if (RawEntry* e = take("problem", "beta_prime")) {
    doc.spec.beta_prime = detail::parse_double(*e);
  }
  if (RawEntry* e = take("problem", "eta1")) cs.eta[0] = detail::parse_double(*e);
  if (RawEntry* e = take("problem", "eta2")) cs.eta[1] = detail::parse_double(*e);
  if (RawEntry* e = take("problem", "N0")) cs.N0 = detail::parse_double(*e);
  if (RawEntry* e = take("problem", "xi")) cs.growth.xi = detail::parse_double(*e);
  if (RawEntry* e = take("problem", "zeta")) cs.growth.zeta = detail::parse_double(*e);

  // --- [coefficients] ---
  if (RawEntry* e = take("coefficients", "b")) {
    cs.b = detail::build_vector_field(*e, d1, d1, "b");
  }
  if (RawEntry* e = take("coefficients", "c")) {
    cs.c = detail::build_matrix_field(*e, d2, d2, d1, "c");
  }
  if (RawEntry* e = take("coefficients", "f")) {
    cs.f = detail::build_vector_field(*e, d2, d1, "f");
  }
  if (RawEntry* e = take("coefficients", "g")) {
    cs.g = detail::build_matrix_field(*e, d2, channels, d1, "g");
  }
  if (RawEntry* e = take("coefficients", "h")) {
    cs.h = detail::build_vector_jump_field(*e, d2, d1, "h");
  }
  if (RawEntry* e = take("coefficients", "phi")) {
    doc.spec.phi = detail::build_vector_field(*e, d2, d1, "phi");
  }
  for (int k = 0; k < 2; ++k) {
    const std::string sk = std::to_string(k + 1);
    if (RawEntry* e = take("coefficients", "sigma" + sk)) {
      cs.sigma[k] = detail::build_matrix_field(*e, d1, channels, d1,
                                               "sigma" + sk);
    }
    if (RawEntry* e = take("coefficients", "H" + sk)) {
      cs.H[k] = detail::build_vector_jump_field(*e, d1, d1, "H" + sk);
    }
    if (RawEntry* e = take("coefficients", "rho" + sk)) {
      cs.rho[k] = detail::build_matrix_jump_field(*e, d2, d2, d1, "rho" + sk);
    }
    for (int r = 1; r <= channels; ++r) {
      const std::string key = "upsilon" + sk + "_" + std::to_string(r);
      if (RawEntry* e = take("coefficients", key)) {
        cs.upsilon[k][static_cast<std::size_t>(r - 1)] =
            detail::build_matrix_field(*e, d2, d2, d1, key);
      }
    }
    if (RawEntry* e = take("coefficients", "K" + sk)) {
      cs.growth.K[k] = detail::build_envelope(*e, "K" + sk);
    }
    if (RawEntry* e = take("coefficients", "Kbar" + sk)) {
      cs.growth.Kbar[k] = detail::build_envelope(*e, "Kbar" + sk);
    }
    if (RawEntry* e = take("coefficients", "l" + sk)) {
      cs.growth.l[k] = detail::build_envelope(*e, "l" + sk);
    }
  }

  // --- [measure1] / [measure2] ---
  for (int k = 0; k < 2; ++k) {
    const std::string sec = "measure" + std::to_string(k + 1);
    auto s = sections.find(sec);
    if (s == sections.end()) continue;
    JumpMeasureSpec& m = doc.spec.measures[k];
    for (auto& [key, entry] : s->second) {
      if (key == "atom") {
        entry.used = true;
        std::istringstream fs(entry.value);
        double z = 0.0, rate = 0.0;
        std::string tag;
        if (!(fs >> z >> rate >> tag)) {
          throw ParseError("atom: expected 'z rate TAG'", entry.line,
                           entry.value_column);
        }
        m.mode = JumpMeasureSpec::Mode::finite_atoms;
        m.atoms.push_back({z, rate, detail::parse_tag(tag, entry.line)});
      } else if (key == "segment") {
        entry.used = true;
        std::istringstream fs(entry.value);
        double lo = 0.0, hi = 0.0;
        std::string tag;
        if (!(fs >> lo >> hi >> tag)) {
          throw ParseError("segment: expected 'z_lo z_hi TAG rate-expr'",
                           entry.line, entry.value_column);
        }
        std::string expr_text;
        std::getline(fs, expr_text);
        const Expression rate = parse_expression(
            detail::trim(expr_text), 0, entry.line, entry.value_column);
        if (rate.depends_on_x() || rate.depends_on_t()) {
          throw ParseError("segment: rate may only depend on z", entry.line,
                           entry.value_column);
        }
        m.mode = JumpMeasureSpec::Mode::density;
        m.segments.push_back(
            {lo, hi, detail::parse_tag(tag, entry.line),
             [rate](double z) { return rate.eval(0.0, Vec(), z); }});
      } else if (key == "cutoff") {
        entry.used = true;
        m.small_jump_cutoff = detail::parse_double(entry);
      } else if (key == "panels") {
        entry.used = true;
        m.quadrature_panels = static_cast<int>(detail::parse_int(entry));
      }
    }
  }
  if (!doc.spec.measures[1].empty()) {
    for (const JumpAtom& a : doc.spec.measures[1].atoms) {
      if (a.tag == SetTag::V) {
        throw ParseError("measure2: the large-jump set V exists only for "
                         "the observed family", 1, 1);
      }
    }
  }

  // --- [run] ---
  RunConfig& run = doc.run;
  if (RawEntry* e = take("run", "seed")) {
    run.seed = static_cast<std::uint64_t>(detail::parse_int(*e));
  }
  if (RawEntry* e = take("run", "inner")) {
    run.inner = static_cast<std::size_t>(detail::parse_int(*e));
  }
  if (RawEntry* e = take("run", "steps")) {
    run.params.n_steps = static_cast<int>(detail::parse_int(*e));
  }
  if (RawEntry* e = take("run", "threads")) {
    run.params.threads = static_cast<int>(detail::parse_int(*e));
  }
  if (RawEntry* e = take("run", "mesh_points")) {
    run.params.mesh_points = static_cast<int>(detail::parse_int(*e));
  }
  if (RawEntry* e = take("run", "discard_cap")) {
    run.params.discard_cap = detail::parse_double(*e);
  }
  if (RawEntry* e = take("run", "time")) run.time = detail::parse_double(*e);
  if (RawEntry* e = take("run", "grid")) {
    std::istringstream fs(e->value);
    if (!(fs >> run.grid_lo >> run.grid_hi >> run.grid_n) || run.grid_n < 1) {
      throw ParseError("grid: expected 'lo hi n'", e->line, e->value_column);
    }
  }
  if (RawEntry* e = take("run", "delta")) {
    run.delta = detail::parse_double(*e);
    run.interlace = true;
  }
  if (RawEntry* e = take("run", "eta1_bar")) {
    run.eta1_bar = detail::parse_double(*e);
  }
  if (RawEntry* e = take("run", "oracle")) run.oracle = detail::trim(e->value);
  if (RawEntry* e = take("run", "steps_list")) {
    run.steps_list.clear();
    std::istringstream fs(e->value);
    int v = 0;
    while (fs >> v) run.steps_list.push_back(v);
  }
  if (RawEntry* e = take("run", "m_list")) {
    run.m_list.clear();
    std::istringstream fs(e->value);
    std::size_t v = 0;
    while (fs >> v) run.m_list.push_back(v);
  }
  if (run.time < 0.0) run.time = T;
  if (run.eta1_bar < 0.0) run.eta1_bar = cs.eta[0];

  // Reject unknown keys with their positions.
  for (const auto& [sec, entries] : sections) {
    for (const auto& [key, entry] : entries) {
      if (!entry.used) {
        throw ParseError("unknown key '" + key + "' in section [" + sec + "]",
                         entry.line, 1);
      }
    }
  }
  doc.spec.validate();
  return doc;
}

}  // namespace sidemc
