#pragma once

// Normalized x86-64 disassembly: one instruction per line, `ADDR: MNEMONIC OPERANDS`.
// Intel operand order. Accepts objdump -M intel output lines directly: symbol
// annotations (`<foo+0x10>`), trailing `#` comments and label lines are ignored.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace specpht {

class DisasmError : public std::runtime_error {
 public:
  DisasmError(std::size_t line, const std::string& reason)
      : std::runtime_error("line " + std::to_string(line) + ": " + reason), line_(line), reason_(reason) {}
  std::size_t line() const { return line_; }
  const std::string& reason() const { return reason_; }

 private:
  std::size_t line_;
  std::string reason_;
};

/// A register view. `canon` names the full architectural register (e.g. "rdx"
/// for dl/dh/dx/edx); `shift` is the bit offset of the view inside it.
struct RegView {
  std::string name;
  std::string canon;
  unsigned width = 64;
  unsigned shift = 0;
  bool gpr = false;

  bool operator==(const RegView& o) const { return name == o.name; }
};

struct MemRef {
  std::string base;   // canonical, empty if none
  std::string index;  // canonical, empty if none
  unsigned scale = 1;
  std::int64_t disp = 0;
  unsigned size = 0;  // bytes, 0 if unspecified
  std::string segment;
};

struct DisasmOperand {
  enum class Kind : std::uint8_t { Reg, Imm, Mem };
  Kind kind = Kind::Imm;
  RegView reg;
  std::int64_t imm = 0;
  MemRef mem;

  bool is_reg() const { return kind == Kind::Reg; }
  bool is_imm() const { return kind == Kind::Imm; }
  bool is_mem() const { return kind == Kind::Mem; }
};

struct DisasmRecord {
  std::uint64_t addr = 0;
  std::string prefix;
  std::string mnemonic;
  std::vector<DisasmOperand> operands;
  std::size_t line = 0;
};

namespace disasm {

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline const std::map<std::string, RegView>& register_table() {
  static const std::map<std::string, RegView> table = [] {
    std::map<std::string, RegView> t;
    auto add = [&](const std::string& n, const std::string& c, unsigned w, unsigned s, bool gpr) {
      t[n] = RegView{n, c, w, s, gpr};
    };
    const char* legacy[] = {"a", "b", "c", "d"};
    for (const char* l : legacy) {
      const std::string x(l);
      add("r" + x + "x", "r" + x + "x", 64, 0, true);
      add("e" + x + "x", "r" + x + "x", 32, 0, true);
      add(x + "x", "r" + x + "x", 16, 0, true);
      add(x + "l", "r" + x + "x", 8, 0, true);
      add(x + "h", "r" + x + "x", 8, 8, true);
    }
    const char* idx[] = {"si", "di", "bp", "sp"};
    for (const char* l : idx) {
      const std::string x(l);
      add("r" + x, "r" + x, 64, 0, true);
      add("e" + x, "r" + x, 32, 0, true);
      add(x, "r" + x, 16, 0, true);
      add(x + "l", "r" + x, 8, 0, true);
    }
    for (int i = 8; i <= 15; ++i) {
      const std::string r = "r" + std::to_string(i);
      add(r, r, 64, 0, true);
      add(r + "d", r, 32, 0, true);
      add(r + "w", r, 16, 0, true);
      add(r + "b", r, 8, 0, true);
      add(r + "l", r, 8, 0, true);
    }
    add("rip", "rip", 64, 0, false);
    add("eip", "rip", 32, 0, false);
    // Pseudo index registers objdump prints for a SIB byte with no index.
    add("riz", "riz", 64, 0, false);
    add("eiz", "riz", 32, 0, false);
    for (int i = 0; i < 32; ++i) {
      for (const char* p : {"xmm", "ymm", "zmm"}) {
        const std::string n = p + std::to_string(i);
        add(n, n, 128, 0, false);
      }
    }
    for (int i = 0; i < 8; ++i) {
      add("mm" + std::to_string(i), "mm" + std::to_string(i), 64, 0, false);
      add("k" + std::to_string(i), "k" + std::to_string(i), 64, 0, false);
      add("st(" + std::to_string(i) + ")", "st(" + std::to_string(i) + ")", 80, 0, false);
    }
    add("st", "st(0)", 80, 0, false);
    for (int i = 0; i < 16; ++i) {
      add("cr" + std::to_string(i), "cr" + std::to_string(i), 64, 0, false);
      add("db" + std::to_string(i), "db" + std::to_string(i), 64, 0, false);
      add("dr" + std::to_string(i), "dr" + std::to_string(i), 64, 0, false);
    }
    for (int i = 0; i < 8; ++i) {
      add("bnd" + std::to_string(i), "bnd" + std::to_string(i), 128, 0, false);
      add("tmm" + std::to_string(i), "tmm" + std::to_string(i), 8192, 0, false);
    }
    for (const char* s : {"cs", "ds", "es", "fs", "gs", "ss"}) add(s, s, 16, 0, false);
    return t;
  }();
  return table;
}

inline std::optional<RegView> find_register(const std::string& name) {
  const auto& t = register_table();
  const auto it = t.find(name);
  if (it == t.end()) return std::nullopt;
  return it->second;
}

inline std::optional<std::int64_t> parse_number(const std::string& tok, bool bare_hex) {
  std::string s = tok;
  bool neg = false;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    neg = s[0] == '-';
    s = s.substr(1);
  }
  if (s.empty()) return std::nullopt;
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && s[1] == 'x') {
    base = 16;
    s = s.substr(2);
  } else if (bare_hex) {
    base = 16;
  }
  std::size_t pos = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(s, &pos, base);
  } catch (const std::logic_error&) {
    return std::nullopt;
  }
  if (pos != s.size()) return std::nullopt;
  const auto sv = static_cast<std::int64_t>(v);
  return neg ? -sv : sv;
}

inline unsigned size_keyword(const std::string& w) {
  static const std::map<std::string, unsigned> sizes{{"byte", 1},    {"word", 2},     {"dword", 4},
                                                     {"qword", 8},   {"tbyte", 10},   {"xmmword", 16},
                                                     {"oword", 16},  {"ymmword", 32}, {"zmmword", 64},
                                                     {"fword", 6}};
  const auto it = sizes.find(w);
  return it == sizes.end() ? 0 : it->second;
}

inline bool is_branch_mnemonic(const std::string& m) {
  return !m.empty() && (m[0] == 'j' || m == "call" || m == "xbegin" || m.rfind("loop", 0) == 0);
}

inline DisasmOperand parse_memory(std::string s, std::size_t line) {
  DisasmOperand op;
  op.kind = DisasmOperand::Kind::Mem;
  std::istringstream words(s);
  std::string w;
  std::vector<std::string> parts;
  while (words >> w) parts.push_back(w);
  std::size_t i = 0;
  if (i < parts.size() && size_keyword(parts[i]) != 0) {
    op.mem.size = size_keyword(parts[i]);
    ++i;
    if (i < parts.size() && parts[i] == "ptr") ++i;
  }
  std::string rest;
  for (; i < parts.size(); ++i) rest += parts[i];
  const auto colon = rest.find(':');
  if (colon != std::string::npos) {
    op.mem.segment = rest.substr(0, colon);
    if (!find_register(op.mem.segment)) throw DisasmError(line, "bad segment '" + op.mem.segment + "'");
    rest = rest.substr(colon + 1);
  }
  if (rest.empty()) throw DisasmError(line, "empty memory operand");
  if (rest.front() != '[') {
    // Absolute form such as fs:0x28.
    const auto v = parse_number(rest, false);
    if (!v) throw DisasmError(line, "bad memory operand '" + s + "'");
    op.mem.disp = *v;
    return op;
  }
  if (rest.back() != ']') throw DisasmError(line, "unterminated memory operand");
  const std::string inner = rest.substr(1, rest.size() - 2);
  if (inner.empty()) throw DisasmError(line, "empty memory operand");
  std::size_t p = 0;
  while (p < inner.size()) {
    int sign = 1;
    if (inner[p] == '+' || inner[p] == '-') {
      sign = inner[p] == '-' ? -1 : 1;
      ++p;
    }
    std::size_t q = p;
    while (q < inner.size() && inner[q] != '+' && inner[q] != '-') ++q;
    const std::string term = inner.substr(p, q - p);
    p = q;
    if (term.empty()) throw DisasmError(line, "bad memory operand '" + s + "'");
    const auto star = term.find('*');
    if (star != std::string::npos) {
      const auto r = find_register(term.substr(0, star));
      const auto sc = parse_number(term.substr(star + 1), false);
      if (!r || !sc || sign < 0 || (*sc != 1 && *sc != 2 && *sc != 4 && *sc != 8) || !op.mem.index.empty()) {
        throw DisasmError(line, "bad index term '" + term + "'");
      }
      op.mem.index = r->canon;
      op.mem.scale = static_cast<unsigned>(*sc);
    } else if (const auto r = find_register(term)) {
      if (sign < 0) throw DisasmError(line, "negated register in memory operand");
      if (op.mem.base.empty()) op.mem.base = r->canon;
      else if (op.mem.index.empty()) op.mem.index = r->canon;
      else throw DisasmError(line, "too many registers in memory operand");
    } else if (const auto v = parse_number(term, false)) {
      op.mem.disp += sign * *v;
    } else {
      throw DisasmError(line, "bad memory term '" + term + "'");
    }
  }
  return op;
}

inline DisasmOperand parse_operand(const std::string& raw, bool branch, std::size_t line) {
  const std::string s = trim(raw);
  if (s.empty()) throw DisasmError(line, "empty operand");
  if (s.find('[') != std::string::npos || s.find(" ptr") != std::string::npos ||
      (s.find(':') != std::string::npos && s.find('(') == std::string::npos)) {
    return parse_memory(s, line);
  }
  if (const auto r = find_register(s)) {
    DisasmOperand op;
    op.kind = DisasmOperand::Kind::Reg;
    op.reg = *r;
    return op;
  }
  if (const auto v = parse_number(s, branch)) {
    DisasmOperand op;
    op.kind = DisasmOperand::Kind::Imm;
    op.imm = *v;
    return op;
  }
  throw DisasmError(line, "bad operand '" + s + "'");
}

inline bool is_prefix(const std::string& w) {
  static const char* prefixes[] = {"rep",  "repz", "repnz", "repe", "repne", "lock", "bnd",
                                   "notrack", "data16", "addr32", "xacquire", "xrelease", "cs", "ds", "es", "fs", "gs", "ss"};
  if (w == "rex" || w.rfind("rex.", 0) == 0) return true;
  return std::find_if(std::begin(prefixes), std::end(prefixes), [&](const char* p) { return w == p; }) !=
         std::end(prefixes);
}

inline std::vector<std::string> split_operands(const std::string& s) {
  std::vector<std::string> out;
  int depth = 0;
  std::string cur;
  for (char c : s) {
    if (c == '[' || c == '(') ++depth;
    if (c == ']' || c == ')') --depth;
    if (c == ',' && depth == 0) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty() || !out.empty()) out.push_back(cur);
  return out;
}

}  // namespace disasm

/// Parses one instruction line. Returns nullopt for blank, comment and label lines.
inline std::optional<DisasmRecord> parse_disasm_line(const std::string& raw, std::size_t line) {
  std::string s = raw;
  if (const auto h = s.find('#'); h != std::string::npos) s = s.substr(0, h);
  if (const auto sc = s.find(';'); sc != std::string::npos) s = s.substr(0, sc);
  s = disasm::lower(disasm::trim(s));
  if (s.empty() || s == "...") return std::nullopt;
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw DisasmError(line, "missing 'ADDR:'");
  std::string addr_tok = disasm::trim(s.substr(0, colon));
  std::string body = disasm::trim(s.substr(colon + 1));
  // objdump banners: "prog:     file format elf64-x86-64", "disassembly of section .text:"
  if (body.rfind("file format", 0) == 0 || addr_tok.rfind("disassembly of section", 0) == 0) return std::nullopt;
  // objdump label line: "0000000000401000 <main>:"
  if (const auto lt = addr_tok.find(" <"); lt != std::string::npos && body.empty() && addr_tok.back() == '>') {
    return std::nullopt;
  }
  if (addr_tok.rfind("0x", 0) == 0) addr_tok = addr_tok.substr(2);
  const auto addr = disasm::parse_number(addr_tok, true);
  if (!addr || *addr < 0) throw DisasmError(line, "bad address '" + addr_tok + "'");
  if (const auto lt = body.find('<'); lt != std::string::npos) body = disasm::trim(body.substr(0, lt));
  // "fneni(8087 only)", "frstpm(287 only)"
  if (const auto only = body.find(" only)"); only != std::string::npos) body.erase(body.rfind('(', only));
  if (body.rfind(".byte", 0) == 0) body = "(bad)";
  if (body.empty()) throw DisasmError(line, "missing mnemonic");

  DisasmRecord rec;
  rec.addr = static_cast<std::uint64_t>(*addr);
  rec.line = line;
  std::istringstream in(body);
  std::string word;
  in >> word;
  while (disasm::is_prefix(word)) {
    rec.prefix += (rec.prefix.empty() ? "" : " ") + word;
    if (!(in >> word)) break;
  }
  if (disasm::is_prefix(word)) {
    // Bare prefix line such as "rep" on its own: keep it as the mnemonic.
    rec.mnemonic = word;
    rec.prefix.clear();
    return rec;
  }
  if (word != "(bad)" && (word.empty() || !std::isalpha(static_cast<unsigned char>(word[0])) ||
      !std::all_of(word.begin(), word.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '-'; }))) {
    throw DisasmError(line, "bad mnemonic '" + word + "'");
  }
  rec.mnemonic = word;
  if (word == "(bad)") return rec;
  std::string rest;
  std::getline(in, rest);
  rest = disasm::trim(rest);
  if (!rest.empty()) {
    const bool branch = disasm::is_branch_mnemonic(rec.mnemonic);
    for (auto o : disasm::split_operands(rest)) {
      // AVX-512 masking, broadcast and rounding decorations carry no data flow we track.
      for (auto b = o.find('{'); b != std::string::npos; b = o.find('{')) {
        const auto e = o.find('}', b);
        o.erase(b, e == std::string::npos ? std::string::npos : e - b + 1);
      }
      o = disasm::trim(o);
      if (o.empty()) continue;
      // objdump prints `?` for an operand it cannot decode; keep the line as an opaque instruction.
      if (o == "?" || o == "(bad)") {
        rec.mnemonic = "(bad)";
        rec.operands.clear();
        return rec;
      }
      rec.operands.push_back(disasm::parse_operand(o, branch, line));
    }
  }
  return rec;
}

/// Parses a whole listing; addresses must be strictly increasing.
inline std::vector<DisasmRecord> parse_disasm(std::istream& in) {
  std::vector<DisasmRecord> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    auto rec = parse_disasm_line(text, line);
    if (!rec) continue;
    if (!out.empty() && rec->addr <= out.back().addr) throw DisasmError(line, "address not strictly increasing");
    out.push_back(std::move(*rec));
  }
  return out;
}

inline std::vector<DisasmRecord> parse_disasm_text(const std::string& text) {
  std::istringstream in(text);
  return parse_disasm(in);
}

inline std::string format_operand(const DisasmOperand& op) {
  std::ostringstream os;
  switch (op.kind) {
    case DisasmOperand::Kind::Reg: os << op.reg.name; break;
    case DisasmOperand::Kind::Imm:
      if (op.imm < 0) os << "-0x" << std::hex << static_cast<std::uint64_t>(-op.imm);
      else os << "0x" << std::hex << op.imm;
      break;
    case DisasmOperand::Kind::Mem: {
      static const std::map<unsigned, std::string> names{{1, "byte"},     {2, "word"},     {4, "dword"},
                                                         {8, "qword"},    {10, "tbyte"},   {16, "xmmword"},
                                                         {32, "ymmword"}, {64, "zmmword"}, {6, "fword"}};
      if (op.mem.size != 0) os << names.at(op.mem.size) << " ptr ";
      if (!op.mem.segment.empty()) os << op.mem.segment << ':';
      os << '[';
      bool first = true;
      if (!op.mem.base.empty()) {
        os << op.mem.base;
        first = false;
      }
      if (!op.mem.index.empty()) {
        os << (first ? "" : "+") << op.mem.index << '*' << op.mem.scale;
        first = false;
      }
      if (op.mem.disp != 0 || first) {
        if (op.mem.disp < 0) os << "-0x" << std::hex << static_cast<std::uint64_t>(-op.mem.disp);
        else os << (first ? "" : "+") << "0x" << std::hex << op.mem.disp;
      }
      os << ']';
      break;
    }
  }
  return os.str();
}

inline std::string format_record(const DisasmRecord& r) {
  std::ostringstream os;
  os << std::hex << r.addr << ": ";
  if (!r.prefix.empty()) os << r.prefix << ' ';
  os << r.mnemonic;
  for (std::size_t i = 0; i < r.operands.size(); ++i) {
    os << (i == 0 ? " " : ", ");
    if (disasm::is_branch_mnemonic(r.mnemonic) && r.operands[i].is_imm()) os << std::hex << r.operands[i].imm;
    else os << format_operand(r.operands[i]);
  }
  return os.str();
}

}  // namespace specpht
