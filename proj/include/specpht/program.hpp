#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "specpht/history.hpp"

namespace specpht {

class ProgramError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kNumRegisters = 16;

enum class InstrKind : std::uint8_t { CondBranch, IndirectBranch, Jump, Load, Store, Alu, TimerRead, Halt };

inline std::string_view to_string(InstrKind k) {
  switch (k) {
    case InstrKind::CondBranch: return "CondBranch";
    case InstrKind::IndirectBranch: return "IndirectBranch";
    case InstrKind::Jump: return "Jump";
    case InstrKind::Load: return "Load";
    case InstrKind::Store: return "Store";
    case InstrKind::Alu: return "Alu";
    case InstrKind::TimerRead: return "TimerRead";
    case InstrKind::Halt: return "Halt";
  }
  return "?";
}

struct Operand {
  enum class Kind : std::uint8_t { None, Reg, Imm };
  Kind kind = Kind::None;
  int reg = 0;
  std::int64_t imm = 0;

  static Operand r(int reg) { return Operand{Kind::Reg, reg, 0}; }
  static Operand i(std::int64_t v) { return Operand{Kind::Imm, 0, v}; }
  bool present() const { return kind != Kind::None; }

  friend bool operator==(const Operand&, const Operand&) = default;
};

enum class CmpOp : std::uint8_t { NonZero, Zero, Lt, Le, Gt, Ge, Eq, Ne };

/// Branch condition; the branch is taken when it holds.
struct Condition {
  Operand lhs;
  CmpOp op = CmpOp::NonZero;
  Operand rhs;

  friend bool operator==(const Condition&, const Condition&) = default;
};

enum class AluOp : std::uint8_t { Mov, Add, Sub, And, Or, Xor, Shl, Shr };

struct Instruction {
  std::uint64_t id = 0;  // static sequence number within the process
  InstrKind kind = InstrKind::Halt;
  Address addr = 0;
  std::optional<Address> static_target;
  std::optional<Condition> condition;
  int dst = -1;
  AluOp op = AluOp::Mov;
  Operand a;      // Alu first source / Store value / IndirectBranch target register
  Operand b;      // Alu second source
  Operand base;   // Load/Store address base
  Operand index;  // Load/Store address index
  std::uint32_t resolve_delay = 0;
  int process_id = 0;

  bool is_branch() const {
    return kind == InstrKind::CondBranch || kind == InstrKind::IndirectBranch || kind == InstrKind::Jump;
  }

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

/// One process: code in sequence order (fall-through = next in order) plus initial memory.
class ProcessImage {
 public:
  ProcessImage() = default;
  explicit ProcessImage(int pid) : pid_(pid) {}

  int pid() const { return pid_; }

  void add(Instruction ins) {
    ins.process_id = pid_;
    if (by_addr_.contains(ins.addr)) {
      throw ProgramError("process " + std::to_string(pid_) + ": duplicate address " + hex(ins.addr));
    }
    for (const auto& existing : code_) {
      if (existing.id == ins.id) {
        throw ProgramError("process " + std::to_string(pid_) + ": duplicate seq " + std::to_string(ins.id));
      }
    }
    code_.push_back(ins);
    std::stable_sort(code_.begin(), code_.end(), [](const auto& x, const auto& y) { return x.id < y.id; });
    by_addr_.clear();
    for (std::size_t i = 0; i < code_.size(); ++i) by_addr_[code_[i].addr] = i;
  }

  void set_memory(std::int64_t addr, std::int64_t value) { memory_[addr] = value; }

  const std::vector<Instruction>& code() const { return code_; }
  const std::map<std::int64_t, std::int64_t>& memory() const { return memory_; }

  std::optional<std::size_t> position(Address addr) const {
    auto it = by_addr_.find(addr);
    if (it == by_addr_.end()) return std::nullopt;
    return it->second;
  }

  const Instruction* at_address(Address addr) const {
    auto p = position(addr);
    return p ? &code_[*p] : nullptr;
  }

  Address entry() const {
    if (code_.empty()) throw ProgramError("process " + std::to_string(pid_) + " has no code");
    return code_.front().addr;
  }

  static std::string hex(Address a) {
    std::ostringstream os;
    os << "0x" << std::hex << a;
    return os.str();
  }

 private:
  int pid_ = 0;
  std::vector<Instruction> code_;
  std::unordered_map<Address, std::size_t> by_addr_;
  std::map<std::int64_t, std::int64_t> memory_;
};

/// One scheduled invocation: run `pid` from its entry with some registers preset.
struct ScheduleEntry {
  int pid = 0;
  std::vector<std::pair<int, std::int64_t>> registers;
  friend bool operator==(const ScheduleEntry&, const ScheduleEntry&) = default;
};

using Schedule = std::vector<ScheduleEntry>;

struct Program {
  std::map<int, ProcessImage> processes;
  Schedule schedule;  // from `.run` lines; may be empty

  ProcessImage& process(int pid) {
    auto it = processes.find(pid);
    if (it == processes.end()) it = processes.emplace(pid, ProcessImage(pid)).first;
    return it->second;
  }
};

namespace detail {

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

inline std::int64_t parse_int(const std::string& text) {
  std::size_t used = 0;
  std::int64_t v = 0;
  try {
    v = std::stoll(text, &used, 0);
  } catch (const std::logic_error&) {
    throw ProgramError("bad integer '" + text + "'");
  }
  if (used != text.size()) throw ProgramError("bad integer '" + text + "'");
  return v;
}

inline Address parse_addr(const std::string& text) {
  std::size_t used = 0;
  Address v = 0;
  try {
    v = std::stoull(text, &used, 0);
  } catch (const std::logic_error&) {
    throw ProgramError("bad address '" + text + "'");
  }
  if (used != text.size()) throw ProgramError("bad address '" + text + "'");
  return v;
}

inline int parse_reg(const std::string& text) {
  if (text.size() < 2 || (text[0] != 'r' && text[0] != 'R')) throw ProgramError("bad register '" + text + "'");
  const auto n = parse_int(text.substr(1));
  if (n < 0 || n >= kNumRegisters) throw ProgramError("register out of range '" + text + "'");
  return static_cast<int>(n);
}

/// `rN` or `#imm`.
inline Operand parse_operand(const std::string& text) {
  if (text.empty()) throw ProgramError("empty operand");
  if (text[0] == '#') return Operand::i(parse_int(text.substr(1)));
  return Operand::r(parse_reg(text));
}

inline std::string operand_text(const Operand& o) {
  if (o.kind == Operand::Kind::Reg) return "r" + std::to_string(o.reg);
  return "#" + std::to_string(o.imm);
}

inline Condition parse_condition(const std::string& text) {
  static const std::array<std::pair<std::string_view, CmpOp>, 6> ops{{
      {">=", CmpOp::Ge}, {"<=", CmpOp::Le}, {"==", CmpOp::Eq}, {"!=", CmpOp::Ne}, {"<", CmpOp::Lt}, {">", CmpOp::Gt}}};
  for (const auto& [tok, op] : ops) {
    if (auto pos = text.find(tok); pos != std::string::npos) {
      return Condition{parse_operand(text.substr(0, pos)), op, parse_operand(text.substr(pos + tok.size()))};
    }
  }
  if (!text.empty() && text[0] == '!') return Condition{parse_operand(text.substr(1)), CmpOp::Zero, {}};
  return Condition{parse_operand(text), CmpOp::NonZero, {}};
}

inline std::string condition_text(const Condition& c) {
  switch (c.op) {
    case CmpOp::NonZero: return operand_text(c.lhs);
    case CmpOp::Zero: return "!" + operand_text(c.lhs);
    case CmpOp::Lt: return operand_text(c.lhs) + "<" + operand_text(c.rhs);
    case CmpOp::Le: return operand_text(c.lhs) + "<=" + operand_text(c.rhs);
    case CmpOp::Gt: return operand_text(c.lhs) + ">" + operand_text(c.rhs);
    case CmpOp::Ge: return operand_text(c.lhs) + ">=" + operand_text(c.rhs);
    case CmpOp::Eq: return operand_text(c.lhs) + "==" + operand_text(c.rhs);
    case CmpOp::Ne: return operand_text(c.lhs) + "!=" + operand_text(c.rhs);
  }
  return {};
}

inline InstrKind parse_kind(const std::string& text) {
  const auto t = lower(text);
  if (t == "condbranch" || t == "cbr") return InstrKind::CondBranch;
  if (t == "indirectbranch" || t == "ibr") return InstrKind::IndirectBranch;
  if (t == "jump" || t == "jmp") return InstrKind::Jump;
  if (t == "load") return InstrKind::Load;
  if (t == "store") return InstrKind::Store;
  if (t == "alu") return InstrKind::Alu;
  if (t == "timerread" || t == "timer") return InstrKind::TimerRead;
  if (t == "halt") return InstrKind::Halt;
  throw ProgramError("unknown instruction kind '" + text + "'");
}

inline AluOp parse_alu_op(const std::string& text) {
  const auto t = lower(text);
  if (t == "mov") return AluOp::Mov;
  if (t == "add") return AluOp::Add;
  if (t == "sub") return AluOp::Sub;
  if (t == "and") return AluOp::And;
  if (t == "or") return AluOp::Or;
  if (t == "xor") return AluOp::Xor;
  if (t == "shl") return AluOp::Shl;
  if (t == "shr") return AluOp::Shr;
  throw ProgramError("unknown alu op '" + text + "'");
}

inline std::string_view alu_op_text(AluOp op) {
  constexpr std::array<std::string_view, 8> names{"mov", "add", "sub", "and", "or", "xor", "shl", "shr"};
  return names[static_cast<std::size_t>(op)];
}

inline void check_well_formed(const Instruction& ins) {
  const auto where = "instruction seq " + std::to_string(ins.id) + ": ";
  switch (ins.kind) {
    case InstrKind::CondBranch:
      if (!ins.condition) throw ProgramError(where + "CondBranch needs cond=");
      if (!ins.static_target) throw ProgramError(where + "CondBranch needs a target");
      break;
    case InstrKind::Jump:
      if (!ins.static_target) throw ProgramError(where + "Jump needs a target");
      break;
    case InstrKind::IndirectBranch:
      if (ins.a.kind != Operand::Kind::Reg) throw ProgramError(where + "IndirectBranch needs src=<reg>");
      break;
    case InstrKind::Load:
      if (ins.dst < 0 || !ins.base.present()) throw ProgramError(where + "Load needs dst= and base=");
      break;
    case InstrKind::Store:
      if (!ins.a.present() || !ins.base.present()) throw ProgramError(where + "Store needs src= and base=");
      break;
    case InstrKind::Alu:
      if (ins.dst < 0 || !ins.a.present()) throw ProgramError(where + "Alu needs dst= and a=");
      if (ins.op != AluOp::Mov && !ins.b.present()) throw ProgramError(where + "Alu op needs b=");
      break;
    case InstrKind::TimerRead:
      if (ins.dst < 0) throw ProgramError(where + "TimerRead needs dst=");
      break;
    case InstrKind::Halt:
      break;
  }
}

/// `#` opens a comment at line start or after whitespace; `#imm` inside a token is an immediate.
inline std::string strip_comment(const std::string& line) {
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '#' && (i == 0 || std::isspace(static_cast<unsigned char>(line[i - 1])))) return line.substr(0, i);
  }
  return line;
}

inline std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  for (std::string tok; is >> tok;) out.push_back(tok);
  return out;
}

}  // namespace detail

/// Parses one instruction line: `pid seq kind addr [target] [key=value ...]`.
inline Instruction parse_instruction(const std::string& line) {
  const auto toks = detail::split_ws(line);
  if (toks.size() < 4) throw ProgramError("expected `pid seq kind addr ...`");
  Instruction ins;
  ins.process_id = static_cast<int>(detail::parse_int(toks[0]));
  ins.id = static_cast<std::uint64_t>(detail::parse_int(toks[1]));
  ins.kind = detail::parse_kind(toks[2]);
  ins.addr = detail::parse_addr(toks[3]);
  for (std::size_t i = 4; i < toks.size(); ++i) {
    const auto& t = toks[i];
    const auto eq = t.find('=');
    // `cond=r1==r2` splits at the first '='.
    if (eq == std::string::npos) {
      if (ins.static_target) throw ProgramError("unexpected token '" + t + "'");
      ins.static_target = detail::parse_addr(t);
      continue;
    }
    const auto key = t.substr(0, eq);
    const auto value = t.substr(eq + 1);
    if (key == "cond") ins.condition = detail::parse_condition(value);
    else if (key == "delay") ins.resolve_delay = static_cast<std::uint32_t>(detail::parse_int(value));
    else if (key == "dst") ins.dst = detail::parse_reg(value);
    else if (key == "op") ins.op = detail::parse_alu_op(value);
    else if (key == "a" || key == "src") ins.a = detail::parse_operand(value);
    else if (key == "b") ins.b = detail::parse_operand(value);
    else if (key == "base") ins.base = detail::parse_operand(value);
    else if (key == "index") ins.index = detail::parse_operand(value);
    else if (key == "target") ins.static_target = detail::parse_addr(value);
    else throw ProgramError("unknown key '" + key + "'");
  }
  detail::check_well_formed(ins);
  return ins;
}

inline std::string format_instruction(const Instruction& ins) {
  std::ostringstream os;
  os << ins.process_id << ' ' << ins.id << ' ' << to_string(ins.kind) << ' ' << ProcessImage::hex(ins.addr);
  if (ins.static_target) os << ' ' << ProcessImage::hex(*ins.static_target);
  if (ins.condition) os << " cond=" << detail::condition_text(*ins.condition);
  if (ins.dst >= 0) os << " dst=r" << ins.dst;
  if (ins.kind == InstrKind::Alu) os << " op=" << detail::alu_op_text(ins.op);
  if (ins.a.present()) os << (ins.kind == InstrKind::Alu ? " a=" : " src=") << detail::operand_text(ins.a);
  if (ins.b.present()) os << " b=" << detail::operand_text(ins.b);
  if (ins.base.present()) os << " base=" << detail::operand_text(ins.base);
  if (ins.index.present()) os << " index=" << detail::operand_text(ins.index);
  if (ins.resolve_delay) os << " delay=" << ins.resolve_delay;
  return os.str();
}

/// Parses a whole program. Besides instruction lines it accepts
/// `.data pid addr v0 [v1 ...]` and `.run pid [rN=value ...]`; `#` starts a comment.
inline Program parse_program(std::istream& in) {
  Program prog;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::strip_comment(line);
    auto toks = detail::split_ws(line);
    if (toks.empty()) continue;
    try {
      if (toks[0] == ".data") {
        if (toks.size() < 4) throw ProgramError("expected `.data pid addr v0 ...`");
        auto& p = prog.process(static_cast<int>(detail::parse_int(toks[1])));
        auto addr = detail::parse_int(toks[2]);
        for (std::size_t i = 3; i < toks.size(); ++i) p.set_memory(addr++, detail::parse_int(toks[i]));
      } else if (toks[0] == ".run") {
        if (toks.size() < 2) throw ProgramError("expected `.run pid [rN=value ...]`");
        ScheduleEntry e{static_cast<int>(detail::parse_int(toks[1])), {}};
        for (std::size_t i = 2; i < toks.size(); ++i) {
          const auto eq = toks[i].find('=');
          if (eq == std::string::npos) throw ProgramError("expected rN=value, got '" + toks[i] + "'");
          e.registers.emplace_back(detail::parse_reg(toks[i].substr(0, eq)),
                                   detail::parse_int(toks[i].substr(eq + 1)));
        }
        prog.schedule.push_back(std::move(e));
      } else {
        auto ins = parse_instruction(line);
        prog.process(ins.process_id).add(ins);
      }
    } catch (const ProgramError& e) {
      throw ProgramError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return prog;
}

inline Program parse_program_text(const std::string& text) {
  std::istringstream in(text);
  return parse_program(in);
}

inline Program load_program(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ProgramError("cannot open program file: " + path);
  return parse_program(in);
}

inline std::string format_program(const Program& prog) {
  std::ostringstream os;
  for (const auto& [pid, image] : prog.processes) {
    for (const auto& [addr, value] : image.memory()) os << ".data " << pid << ' ' << addr << ' ' << value << '\n';
    for (const auto& ins : image.code()) os << format_instruction(ins) << '\n';
  }
  for (const auto& e : prog.schedule) {
    os << ".run " << e.pid;
    for (const auto& [r, v] : e.registers) os << " r" << r << '=' << v;
    os << '\n';
  }
  return os.str();
}

/// Fluent helper for building process images in code.
class ProgramBuilder {
 public:
  ProgramBuilder(int pid, Address base) : image_(pid), next_addr_(base) {}

  Address here() const { return next_addr_; }
  void org(Address addr) { next_addr_ = addr; }

  Address emit(Instruction ins) {
    ins.id = next_id_++;
    ins.addr = next_addr_;
    next_addr_ += 4;
    image_.add(ins);
    return ins.addr;
  }

  Address cond_branch(Condition c, Address target, std::uint32_t delay = 0) {
    Instruction i;
    i.kind = InstrKind::CondBranch;
    i.condition = c;
    i.static_target = target;
    i.resolve_delay = delay;
    return emit(i);
  }
  Address jump(Address target) {
    Instruction i;
    i.kind = InstrKind::Jump;
    i.static_target = target;
    return emit(i);
  }
  Address indirect(int reg, std::uint32_t delay = 0) {
    Instruction i;
    i.kind = InstrKind::IndirectBranch;
    i.a = Operand::r(reg);
    i.resolve_delay = delay;
    return emit(i);
  }
  Address load(int dst, Operand base, Operand index = {}) {
    Instruction i;
    i.kind = InstrKind::Load;
    i.dst = dst;
    i.base = base;
    i.index = index;
    return emit(i);
  }
  Address store(Operand value, Operand base, Operand index = {}) {
    Instruction i;
    i.kind = InstrKind::Store;
    i.a = value;
    i.base = base;
    i.index = index;
    return emit(i);
  }
  Address alu(int dst, AluOp op, Operand a, Operand b = {}) {
    Instruction i;
    i.kind = InstrKind::Alu;
    i.dst = dst;
    i.op = op;
    i.a = a;
    i.b = b;
    return emit(i);
  }
  Address timer(int dst) {
    Instruction i;
    i.kind = InstrKind::TimerRead;
    i.dst = dst;
    return emit(i);
  }
  Address halt() { return emit(Instruction{}); }

  /// Patches the static target of an already emitted branch.
  void patch_target(Address branch, Address target);

  void data(std::int64_t addr, std::int64_t value) { image_.set_memory(addr, value); }

  ProcessImage& image() { return image_; }
  ProcessImage take() { return std::move(image_); }

 private:
  ProcessImage image_;
  Address next_addr_;
  std::uint64_t next_id_ = 0;
};

inline void ProgramBuilder::patch_target(Address branch, Address target) {
  ProcessImage rebuilt(image_.pid());
  for (auto ins : image_.code()) {
    if (ins.addr == branch) ins.static_target = target;
    rebuilt.add(ins);
  }
  for (const auto& [a, v] : image_.memory()) rebuilt.set_memory(a, v);
  image_ = std::move(rebuilt);
}

}  // namespace specpht
