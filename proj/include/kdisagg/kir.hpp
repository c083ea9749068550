// Copyright 2026 The kdisagg Authors
// SPDX-License-Identifier: Apache-2.0

// Kernel IR: a small PTX subset that is just rich enough to find every global
// memory instruction of a kernel and to re-emit the kernel after
// instrumentation. The grammar is documented in docs/kir-format.md.

#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "kdisagg/error.hpp"

namespace kdisagg {

enum class ParamKind { buffer_handle, scalar };

struct Param {
  std::string name;
  std::string type;  // ".u64", ".f32", ...
  ParamKind kind = ParamKind::scalar;

  friend bool operator==(const Param&, const Param&) = default;
};

enum class Opcode { load_global, store_global, atomic_global, other };

/// Direction of a memory instruction's access. Atomics both read and write.
enum class AccessClass { read, write, read_write };

inline bool is_memory(Opcode op) { return op != Opcode::other; }

inline AccessClass access_class(Opcode op) {
  switch (op) {
    case Opcode::load_global: return AccessClass::read;
    case Opcode::store_global: return AccessClass::write;
    default: return AccessClass::read_write;
  }
}

inline const char* to_string(AccessClass c) {
  switch (c) {
    case AccessClass::read: return "read";
    case AccessClass::write: return "write";
    default: return "read-write";
  }
}

struct MemoryOperand {
  std::string base;  // register or parameter name
  std::int64_t offset = 0;

  friend bool operator==(const MemoryOperand&, const MemoryOperand&) = default;
};

struct Instruction {
  std::size_t index = 0;
  Opcode opcode = Opcode::other;
  std::string guard;     // "@%p1" / "@!%p1", or empty
  std::string mnemonic;  // "ld.global.f32"
  std::vector<std::string> operands;
  unsigned access_width = 0;  // bytes, memory opcodes only
  std::optional<MemoryOperand> address;
  /// Buffer parameters the address register is derived from.
  std::set<std::string> roots;
  std::string comment;  // trailing "//" comment without the marker
  std::size_t line = 0;

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

/// One line of a kernel body, kept so the kernel can be printed back.
struct BodyLine {
  enum class Kind { instruction, directive, label, comment, blank };
  Kind kind = Kind::blank;
  std::string text;             // verbatim text for non-instructions
  std::size_t instruction = 0;  // index into KernelIR::instructions

  friend bool operator==(const BodyLine&, const BodyLine&) = default;
};

struct KernelIR {
  std::vector<std::string> preamble;  // .version/.target/comments before the entry
  bool visible = true;
  std::string name;
  std::vector<Param> params;
  std::vector<Instruction> instructions;
  std::vector<BodyLine> body;

  std::size_t memory_instruction_count() const {
    return static_cast<std::size_t>(std::count_if(
        instructions.begin(), instructions.end(),
        [](const Instruction& i) { return is_memory(i.opcode); }));
  }

  const Param* find_param(std::string_view n) const {
    for (const auto& p : params)
      if (p.name == n) return &p;
    return nullptr;
  }

  friend bool operator==(const KernelIR&, const KernelIR&) = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return s;
}

inline bool starts_with(std::string_view s, std::string_view p) {
  return s.substr(0, p.size()) == p;
}

inline bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '$' ||
         c == '%';
}

inline bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$' ||
         c == '%' || c == '.';
}

inline Opcode classify(std::string_view mnemonic) {
  if (starts_with(mnemonic, "ld.global")) return Opcode::load_global;
  if (starts_with(mnemonic, "st.global")) return Opcode::store_global;
  if (starts_with(mnemonic, "atom.global")) return Opcode::atomic_global;
  return Opcode::other;
}

/// Bytes moved by one execution of a memory mnemonic; 0 if not derivable.
inline unsigned mnemonic_width(std::string_view mnemonic) {
  static const std::map<std::string_view, unsigned> kTypes = {
      {"u8", 1},  {"s8", 1},  {"b8", 1},    {"u16", 2},   {"s16", 2},
      {"b16", 2}, {"f16", 2}, {"bf16", 2},  {"u32", 4},   {"s32", 4},
      {"b32", 4}, {"f32", 4}, {"f16x2", 4}, {"bf16x2", 4}, {"u64", 8},
      {"s64", 8}, {"b64", 8}, {"f64", 8},   {"b128", 16}};
  unsigned lanes = 1;
  unsigned width = 0;
  std::size_t pos = 0;
  while (pos <= mnemonic.size()) {
    std::size_t dot = mnemonic.find('.', pos);
    if (dot == std::string_view::npos) dot = mnemonic.size();
    std::string_view part = mnemonic.substr(pos, dot - pos);
    if (part == "v2") lanes = 2;
    else if (part == "v4") lanes = 4;
    else if (auto it = kTypes.find(part); it != kTypes.end()) width = it->second;
    pos = dot + 1;
  }
  return width * lanes;
}

inline bool valid_width(unsigned w) {
  return w == 1 || w == 2 || w == 4 || w == 8 || w == 16;
}

/// Splits on commas that are not nested in [] or {}.
inline std::vector<std::string> split_operands(std::string_view s) {
  std::vector<std::string> out;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c == '[' || c == '{') ++depth;
    else if (c == ']' || c == '}') --depth;
    else if (c == ',' && depth == 0) {
      out.emplace_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  auto last = trim(s.substr(start));
  if (!last.empty() || !out.empty()) out.emplace_back(last);
  return out;
}

inline std::optional<std::int64_t> parse_int(std::string_view s) {
  bool neg = false;
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
    neg = s.front() == '-';
    s.remove_prefix(1);
  }
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    base = 16;
    s.remove_prefix(2);
  }
  if (s.empty()) return std::nullopt;
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return neg ? -v : v;
}

/// Parses "[base]", "[base+off]" or "[base-off]".
inline std::optional<MemoryOperand> parse_address(std::string_view op) {
  if (op.size() < 3 || op.front() != '[' || op.back() != ']') return std::nullopt;
  std::string_view inner = trim(op.substr(1, op.size() - 2));
  MemoryOperand m;
  std::size_t sign = inner.find_first_of("+-", 1);
  if (sign == std::string_view::npos) {
    m.base = std::string(inner);
  } else {
    m.base = std::string(trim(inner.substr(0, sign)));
    auto off = parse_int(trim(inner.substr(sign + 1)));
    if (!off) return std::nullopt;
    m.offset = inner[sign] == '-' ? -*off : *off;
  }
  if (m.base.empty() || !is_ident_start(m.base.front())) return std::nullopt;
  for (char c : m.base)
    if (!is_ident_char(c)) return std::nullopt;
  return m;
}

inline bool is_register(std::string_view s) { return !s.empty() && s.front() == '%'; }

/// Character cursor with line/column tracking for the entry header.
class Cursor {
 public:
  explicit Cursor(std::string_view text) : text_(text) {}

  bool done() const { return pos_ >= text_.size(); }
  char peek() const { return done() ? '\0' : text_[pos_]; }
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }
  std::size_t pos() const { return pos_; }

  void advance() {
    if (done()) return;
    if (text_[pos_] == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    ++pos_;
  }

  void skip_space_and_comments() {
    while (!done()) {
      if (std::isspace(static_cast<unsigned char>(peek()))) {
        advance();
      } else if (text_.substr(pos_, 2) == "//") {
        while (!done() && peek() != '\n') advance();
      } else {
        break;
      }
    }
  }

  std::string word() {
    std::string out;
    while (!done() && (is_ident_char(peek()))) {
      out.push_back(peek());
      advance();
    }
    return out;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(line_, column_, what);
  }

  void expect(char c, const char* what) {
    skip_space_and_comments();
    if (peek() != c) fail(std::string("expected ") + what);
    advance();
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t column_ = 1;
};

inline std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      if (start < text.size()) lines.push_back(text.substr(start));
      break;
    }
    std::string_view l = text.substr(start, nl - start);
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    lines.push_back(l);
    start = nl + 1;
  }
  return lines;
}

inline std::size_t indent_of(std::string_view line) {
  std::size_t n = 0;
  while (n < line.size() && std::isspace(static_cast<unsigned char>(line[n]))) ++n;
  return n;
}

}  // namespace detail

/// Parses one kernel in the PTX subset. Throws ParseError on malformed input.
inline KernelIR parse_kernel(std::string_view text) {
  using namespace detail;
  KernelIR k;
  auto lines = split_lines(text);

  // Preamble: everything before the line holding ".entry".
  std::size_t header_line = 0;
  for (; header_line < lines.size(); ++header_line) {
    auto t = trim(lines[header_line]);
    if (t.find(".entry") != std::string_view::npos && !starts_with(t, "//")) break;
    if (!t.empty() && !starts_with(t, "//") && !starts_with(t, ".version") &&
        !starts_with(t, ".target") && !starts_with(t, ".address_size"))
      throw ParseError(header_line + 1, indent_of(lines[header_line]) + 1,
                       "unexpected text before kernel entry");
    k.preamble.emplace_back(t);
  }
  if (header_line == lines.size())
    throw ParseError(lines.size() + 1, 1, "missing '.entry' header");

  // Header, tokenized from the start of the header line.
  std::size_t offset = 0;
  for (std::size_t i = 0; i < header_line; ++i) {
    offset = text.find('\n', offset);
    offset = offset == std::string_view::npos ? text.size() : offset + 1;
  }
  Cursor cur(text.substr(offset));
  auto at = [&](std::size_t l, std::size_t c, const std::string& what) {
    throw ParseError(l + header_line, c, what);
  };
  cur.skip_space_and_comments();
  std::string w = cur.word();
  k.visible = false;
  if (w == ".visible") {
    k.visible = true;
    cur.skip_space_and_comments();
    w = cur.word();
  }
  if (w != ".entry") at(cur.line(), cur.column(), "expected '.entry'");
  cur.skip_space_and_comments();
  if (!is_ident_start(cur.peek()) || cur.peek() == '%')
    at(cur.line(), cur.column(), "expected kernel name");
  k.name = cur.word();
  cur.expect('(', "'(' after kernel name");
  cur.skip_space_and_comments();
  if (cur.peek() != ')') {
    while (true) {
      cur.skip_space_and_comments();
      std::size_t pl = cur.line(), pc = cur.column();
      if (cur.word() != ".param") at(pl, pc, "expected '.param'");
      cur.skip_space_and_comments();
      std::size_t tl = cur.line(), tc = cur.column();
      std::string type = cur.word();
      if (type.size() < 2 || type.front() != '.') at(tl, tc, "expected parameter type");
      cur.skip_space_and_comments();
      std::size_t nl = cur.line(), nc = cur.column();
      std::string name = cur.word();
      if (name.empty() || name.front() == '.' || name.front() == '%')
        at(nl, nc, "expected parameter name");
      if (k.find_param(name)) at(nl, nc, "duplicate parameter '" + name + "'");
      Param p{name, type,
              (type == ".u64" || type == ".b64" || type == ".s64")
                  ? ParamKind::buffer_handle
                  : ParamKind::scalar};
      k.params.push_back(std::move(p));
      cur.skip_space_and_comments();
      if (cur.peek() == ',') {
        cur.advance();
        continue;
      }
      if (cur.peek() == ')') break;
      at(cur.line(), cur.column(), "expected ',' or ')' in parameter list");
    }
  }
  cur.expect(')', "')'");
  cur.expect('{', "'{' opening the kernel body");
  std::size_t body_first = cur.line() + header_line;  // 1-based line of '{'
  // Rest of the '{' line must be empty.
  {
    std::string_view brace_line = lines[body_first - 1];
    auto after = trim(brace_line.substr(brace_line.find('{') + 1));
    if (!after.empty() && !starts_with(after, "//"))
      throw ParseError(body_first, brace_line.find('{') + 2,
                       "body must start on the line after '{'");
  }

  std::map<std::string, std::set<std::string>> derived;
  bool closed = false;
  for (std::size_t li = body_first; li < lines.size(); ++li) {
    std::size_t lineno = li + 1;
    std::string_view raw = lines[li];
    std::string_view t = trim(raw);
    std::size_t col0 = indent_of(raw) + 1;
    if (closed) {
      if (!t.empty() && !starts_with(t, "//"))
        throw ParseError(lineno, col0, "text after closing '}'");
      continue;
    }
    if (t == "}") {
      closed = true;
      continue;
    }
    if (t.empty()) {
      k.body.push_back({BodyLine::Kind::blank, "", 0});
      continue;
    }
    if (starts_with(t, "//")) {
      k.body.push_back({BodyLine::Kind::comment, std::string(t), 0});
      continue;
    }
    if (t.front() == '.') {
      if (t.back() != ';') throw ParseError(lineno, col0 + t.size(), "expected ';'");
      k.body.push_back({BodyLine::Kind::directive, std::string(t), 0});
      continue;
    }
    if (t.back() == ':' && t.find(' ') == std::string_view::npos) {
      k.body.push_back({BodyLine::Kind::label, std::string(t), 0});
      continue;
    }

    Instruction ins;
    ins.index = k.instructions.size();
    ins.line = lineno;
    std::string_view rest = t;
    if (auto c = rest.find("//"); c != std::string_view::npos) {
      ins.comment = std::string(trim(rest.substr(c + 2)));
      rest = trim(rest.substr(0, c));
    }
    if (rest.empty() || rest.back() != ';')
      throw ParseError(lineno, col0 + rest.size(), "expected ';' at end of instruction");
    rest = trim(rest.substr(0, rest.size() - 1));
    if (!rest.empty() && rest.front() == '@') {
      std::size_t sp = rest.find_first_of(" \t");
      if (sp == std::string_view::npos)
        throw ParseError(lineno, col0, "guard without instruction");
      ins.guard = std::string(rest.substr(0, sp));
      rest = trim(rest.substr(sp));
    }
    std::size_t sp = rest.find_first_of(" \t");
    ins.mnemonic = std::string(rest.substr(0, sp));
    if (ins.mnemonic.empty() || !std::isalpha(static_cast<unsigned char>(ins.mnemonic[0])))
      throw ParseError(lineno, col0, "expected instruction mnemonic");
    if (sp != std::string_view::npos) ins.operands = split_operands(rest.substr(sp));
    for (const auto& op : ins.operands)
      if (op.empty()) throw ParseError(lineno, col0, "empty operand");
    ins.opcode = classify(ins.mnemonic);

    // Locate the address operand (first bracketed operand).
    std::size_t addr_pos = ins.operands.size();
    for (std::size_t i = 0; i < ins.operands.size(); ++i) {
      if (!ins.operands[i].empty() && ins.operands[i].front() == '[') {
        addr_pos = i;
        auto m = parse_address(ins.operands[i]);
        if (!m) {
          auto c = raw.find(ins.operands[i]);
          throw ParseError(lineno, c == std::string_view::npos ? col0 : c + 1,
                           "malformed address operand '" + ins.operands[i] + "'");
        }
        ins.address = std::move(m);
        break;
      }
    }

    auto roots_of = [&](const std::string& name) -> std::set<std::string> {
      if (is_register(name)) {
        auto it = derived.find(name);
        return it == derived.end() ? std::set<std::string>{} : it->second;
      }
      if (const Param* p = k.find_param(name); p && p->kind == ParamKind::buffer_handle)
        return {name};
      return {};
    };

    if (is_memory(ins.opcode)) {
      ins.access_width = mnemonic_width(ins.mnemonic);
      if (!valid_width(ins.access_width))
        throw ParseError(lineno, col0 + ins.guard.size() + (ins.guard.empty() ? 0 : 1),
                         "cannot derive access width of '" + ins.mnemonic + "'");
      if (!ins.address)
        throw ParseError(lineno, col0, "memory instruction without address operand");
      ins.roots = roots_of(ins.address->base);
      if (ins.roots.empty()) {
        auto c = raw.find(ins.address->base);
        throw ParseError(lineno, c == std::string_view::npos ? col0 : c + 1,
                         "address '" + ins.address->base +
                             "' is not derived from a buffer parameter");
      }
    }

    // Register derivation: the destination inherits the roots of its sources.
    bool has_dest = !ins.operands.empty() && is_register(ins.operands[0]) &&
                    !starts_with(ins.mnemonic, "st.") && addr_pos != 0;
    if (has_dest) {
      std::set<std::string> roots;
      if (starts_with(ins.mnemonic, "ld.param") && ins.address) {
        roots = roots_of(ins.address->base);
      } else {
        for (std::size_t i = 1; i < ins.operands.size(); ++i) {
          const auto& op = ins.operands[i];
          auto src = (i == addr_pos && ins.address) ? roots_of(ins.address->base)
                                                    : roots_of(op);
          roots.insert(src.begin(), src.end());
        }
      }
      if (roots.empty()) derived.erase(ins.operands[0]);
      else derived[ins.operands[0]] = std::move(roots);
    }

    k.body.push_back({BodyLine::Kind::instruction, "", ins.index});
    k.instructions.push_back(std::move(ins));
  }
  if (!closed) throw ParseError(lines.size() + 1, 1, "missing closing '}'");
  return k;
}

inline std::string format_instruction(const Instruction& ins) {
  std::string s;
  if (!ins.guard.empty()) s += ins.guard + " ";
  s += ins.mnemonic;
  for (std::size_t i = 0; i < ins.operands.size(); ++i) {
    s += i == 0 ? " " : ", ";
    s += ins.operands[i];
  }
  s += ';';
  if (!ins.comment.empty()) s += " // " + ins.comment;
  return s;
}

namespace detail {

inline void print_header(std::ostringstream& os, const KernelIR& k,
                         const std::vector<Param>& params) {
  for (const auto& l : k.preamble) os << l << '\n';
  if (k.visible) os << ".visible ";
  os << ".entry " << k.name << '(';
  if (!params.empty()) {
    os << '\n';
    for (std::size_t i = 0; i < params.size(); ++i) {
      os << "    .param " << params[i].type << ' ' << params[i].name;
      os << (i + 1 < params.size() ? ",\n" : "\n");
    }
  }
  os << ")\n{\n";
}

inline void print_body_line(std::ostringstream& os, const KernelIR& k,
                            const BodyLine& b) {
  switch (b.kind) {
    case BodyLine::Kind::blank: os << '\n'; break;
    case BodyLine::Kind::label: os << b.text << '\n'; break;
    case BodyLine::Kind::instruction:
      os << "    " << format_instruction(k.instructions[b.instruction]) << '\n';
      break;
    default: os << "    " << b.text << '\n'; break;
  }
}

}  // namespace detail

/// Canonical text form; parse_kernel(print_kernel(k)) == k up to line numbers.
inline std::string print_kernel(const KernelIR& k) {
  std::ostringstream os;
  detail::print_header(os, k, k.params);
  for (const auto& b : k.body) detail::print_body_line(os, k, b);
  os << "}\n";
  return os.str();
}

}  // namespace kdisagg
