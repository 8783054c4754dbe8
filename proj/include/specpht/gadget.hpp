#pragma once

// Static transmitter/trigger gadget scanner over normalized disassembly.
//
// Rules (heuristic, reproducible only against this project's own corpus):
//  * A straight-line run ends after any control-transfer instruction. Runs do
//    not split at incoming branch targets, so appending records never removes
//    a site.
//  * v2: at the start of every run the tracked registers hold attacker-chosen
//    arguments (the secret itself or a pointer to it). Taint follows register
//    copies (mov/movzx/movsx/lea) and loads through a tainted pointer. Any
//    other write clears it. A TEST on a tainted register or on memory through
//    a tainted pointer, followed by a Jcc with only flag-preserving
//    instructions between, is a site.
//  * ss: a v2 site whose first B instructions on the taken and fall-through
//    paths have disjoint dominant port sets.
//  * v1: CMP on a register plus Jcc (bounds check), then within W
//    instructions on either path a load indexed by that register, then a
//    flag-setting CMP/TEST of the loaded value followed by a Jcc.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "specpht/config.hpp"
#include "specpht/disasm.hpp"

namespace specpht {

enum class GadgetScan : std::uint8_t { V1, V2, SS };

inline const char* to_string(GadgetScan s) {
  switch (s) {
    case GadgetScan::V1: return "v1";
    case GadgetScan::V2: return "v2";
    case GadgetScan::SS: return "ss";
  }
  return "?";
}

/// How the branch condition exposes the secret.
enum class TestKind : std::uint8_t { BitTest, MaskTest, ZeroTest };

inline const char* to_string(TestKind k) {
  switch (k) {
    case TestKind::BitTest: return "bit-test";
    case TestKind::MaskTest: return "mask-test";
    case TestKind::ZeroTest: return "zero-test";
  }
  return "?";
}

struct GadgetSite {
  std::uint64_t addr = 0;    // TEST (v2/ss) or bounds-check Jcc (v1)
  std::uint64_t branch = 0;  // the Jcc whose direction encodes the secret
  GadgetScan scan = GadgetScan::V2;
  TestKind test = TestKind::ZeroTest;
  std::string reg;     // tracked (v2) or compared (v1) register, upper case
  bool memory = false; // secret read from memory rather than the register value
  std::set<unsigned> bits;

  auto key() const { return std::make_pair(addr, scan); }
};

struct ScanOptions {
  std::vector<std::string> registers{"rdi", "rsi", "rdx", "rcx"};
  unsigned window = 16;    // v1 search window W
  unsigned ss_prefix = 8;  // SS path prefix B
  bool v1 = true;
  bool v2 = true;
  bool ss = true;

  void set_mode(const std::string& m) {
    v1 = v2 = ss = false;
    if (m == "all") v1 = v2 = ss = true;
    else if (m == "v1") v1 = true;
    else if (m == "v2") v2 = true;
    else if (m == "ss") v2 = ss = true;
    else throw ConfigError("scan mode must be v1, v2, ss or all");
  }

  void set_registers(const std::string& csv) {
    registers.clear();
    std::stringstream in(csv);
    std::string r;
    while (std::getline(in, r, ',')) {
      r = disasm::lower(disasm::trim(r));
      const auto v = disasm::find_register(r);
      if (!v || !v->gpr) throw ConfigError("not a general-purpose register: " + r);
      registers.push_back(v->canon);
    }
    if (registers.empty()) throw ConfigError("--registers needs at least one register");
  }
};

namespace gadget {

inline bool is_cond_jump(const std::string& m) {
  return m.size() > 1 && m[0] == 'j' && m != "jmp" && m != "jcxz" && m != "jecxz" && m != "jrcxz";
}

inline bool is_control(const std::string& m) {
  static const std::set<std::string> ctl{"jmp",  "call", "ret",  "retq",   "iret", "iretq", "syscall", "sysret",
                                         "hlt",  "ud2",  "int3", "int",    "loop", "loope", "loopne", "jcxz",
                                         "jecxz", "jrcxz", "leave", "sysenter", "sysexit"};
  return is_cond_jump(m) || ctl.count(m) != 0;
}

inline bool preserves_flags(const std::string& m) {
  static const std::set<std::string> keep{
      "mov",   "movzx",  "movsx",  "movsxd", "movabs", "lea",    "push",   "pop",    "nop",    "xchg",
      "bswap", "not",    "movd",   "movq",   "movaps", "movups", "movdqa", "movdqu", "movapd", "movupd",
      "movss", "movsd",  "endbr64", "endbr32", "cdqe",  "cqo",   "cdq",    "cwde",   "cbw",    "cwd",
      "prefetcht0", "prefetcht1", "prefetcht2", "prefetchnta", "pxor", "xorps", "pshufd", "vmovdqu", "vmovdqa",
      "lfence", "mfence", "sfence", "pause"};
  if (keep.count(m) != 0) return true;
  if (m.rfind("cmov", 0) == 0 || m.rfind("set", 0) == 0) return true;
  return false;
}

/// Mnemonics whose first operand is read, not written.
inline bool reads_only(const std::string& m) {
  static const std::set<std::string> ro{"cmp", "test", "push", "bt", "nop", "ucomiss", "ucomisd", "comiss",
                                        "comisd", "ptest", "prefetcht0", "prefetcht1", "prefetcht2", "prefetchnta"};
  return ro.count(m) != 0 || is_control(m);
}

/// Canonical registers written implicitly.
inline std::vector<std::string> implicit_writes(const DisasmRecord& r) {
  const auto& m = r.mnemonic;
  if ((m == "mul" || m == "imul" || m == "div" || m == "idiv") && r.operands.size() == 1) return {"rax", "rdx"};
  if (m == "cqo" || m == "cdq" || m == "cwd") return {"rdx"};
  if (m == "cdqe" || m == "cwde" || m == "cbw") return {"rax"};
  if (m == "rdtsc" || m == "rdtscp" || m == "rdpid") return {"rax", "rdx", "rcx"};
  if (m == "cpuid") return {"rax", "rbx", "rcx", "rdx"};
  if (m == "xchg" && r.operands.size() == 2 && r.operands[1].is_reg()) return {r.operands[1].reg.canon};
  static const std::set<std::string> string_ops{"stosb", "stosw", "stosd", "stosq", "movsb", "movsw",
                                                "movsq", "lodsb", "lodsw", "lodsd", "lodsq", "scasb",
                                                "scasw", "scasd", "scasq", "cmpsb", "cmpsw", "cmpsq"};
  if (string_ops.count(m) != 0 || ((m == "movsd" || m == "cmpsd") && r.operands.empty())) {
    return {"rax", "rdi", "rsi", "rcx"};
  }
  return {};
}

inline std::optional<std::uint64_t> direct_target(const DisasmRecord& r) {
  if (r.operands.size() == 1 && r.operands[0].is_imm()) return static_cast<std::uint64_t>(r.operands[0].imm);
  return std::nullopt;
}

inline std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

/// Forward copy-taint from one tracked root.
struct Taint {
  std::string root;
  bool deref = false;                  // holds a value loaded through the root pointer
  std::optional<std::int64_t> bits;    // bit offset of this register's bit 0 within the leaked value
  std::optional<std::int64_t> bytes;   // pointer offset into the secret, if this is a pointer
};

inline std::set<unsigned> leak_bits(std::optional<std::int64_t> base, std::uint64_t mask) {
  std::set<unsigned> out;
  if (!base) return out;
  for (unsigned k = 0; k < 64; ++k) {
    if (((mask >> k) & 1) == 0) continue;
    const std::int64_t b = *base + k;
    if (b >= 0 && b < 64) out.insert(static_cast<unsigned>(b));
  }
  return out;
}

inline std::uint64_t width_mask(unsigned width_bits) {
  return width_bits >= 64 ? ~0ULL : ((1ULL << width_bits) - 1);
}

}  // namespace gadget

/// Mnemonic to execution-port map, modeled loosely on public Skylake tables.
/// Ports are a bitmask over p0..p7. Memory operands add load (p2,p3) or store
/// (p2,p3,p4,p7) ports.
class PortTable {
 public:
  PortTable() {
    const auto p = [](std::initializer_list<int> ports) {
      std::uint8_t m = 0;
      for (int x : ports) m = static_cast<std::uint8_t>(m | (1u << x));
      return m;
    };
    const auto alu = p({0, 1, 5, 6});
    for (const char* m : {"add", "sub", "and", "or", "xor", "inc", "dec", "neg", "not", "cmp", "test", "mov",
                          "movzx", "movsx", "movsxd", "movabs", "adc", "sbb", "xchg", "cdqe", "cwde", "cbw"}) {
      table_[m] = alu;
    }
    for (const char* m : {"shl", "shr", "sar", "sal", "rol", "ror", "jmp", "bt", "bts", "btr", "btc", "cqo",
                          "cdq", "cwd"}) {
      table_[m] = p({0, 6});
    }
    for (const char* m : {"imul", "mul", "popcnt", "lzcnt", "tzcnt", "bsf", "bsr", "crc32", "pdep", "pext"}) {
      table_[m] = p({1});
    }
    for (const char* m : {"div", "idiv", "aesenc", "aesdec", "aesenclast", "aesdeclast", "pmuludq", "pmulld",
                          "sqrtsd", "sqrtss", "divsd", "divss"}) {
      table_[m] = p({0});
    }
    for (const char* m : {"pshufb", "pshufd", "shufps", "shufpd", "punpcklbw", "punpckhbw", "punpckldq",
                          "punpcklqdq", "palignr", "pinsrq", "pinsrd", "movd", "movq", "pextrq", "pextrd",
                          "vpermq", "vperm2i128", "vinserti128", "vextracti128", "pslldq", "psrldq"}) {
      table_[m] = p({5});
    }
    for (const char* m : {"paddd", "paddq", "psubd", "pxor", "pand", "por", "xorps", "andps", "orps", "movdqa",
                          "movdqu", "movaps", "movups", "vpxor", "vpaddd", "vpand", "vpor"}) {
      table_[m] = p({0, 1, 5});
    }
    for (const char* m : {"addsd", "addss", "mulsd", "mulss", "subsd", "subss", "vfmadd231sd", "vfmadd231ps"}) {
      table_[m] = p({0, 1});
    }
    table_["lea"] = p({1, 5});
    table_["push"] = p({2, 3, 4, 7});
    table_["pop"] = p({2, 3});
    table_["call"] = p({2, 3, 4, 6, 7});
    table_["ret"] = p({2, 3, 6});
    table_["retq"] = table_["ret"];
    for (const char* m : {"nop", "endbr64", "endbr32", "lfence", "pause"}) table_[m] = 0;
  }

  /// Port mask for one record, or nullopt if the mnemonic is unknown.
  std::optional<std::uint8_t> ports(const DisasmRecord& r) const {
    std::uint8_t m = 0;
    const auto& mn = r.mnemonic;
    if (const auto it = table_.find(mn); it != table_.end()) m = it->second;
    else if (gadget::is_cond_jump(mn) || mn.rfind("cmov", 0) == 0 || mn.rfind("set", 0) == 0) m = 0b01000001;
    else return std::nullopt;
    if (mn == "lea" || mn == "nop" || mn.rfind("prefetch", 0) == 0) return m;
    for (std::size_t i = 0; i < r.operands.size(); ++i) {
      if (!r.operands[i].is_mem()) continue;
      const bool store = i == 0 && !gadget::reads_only(mn);
      m = static_cast<std::uint8_t>(m | (store ? 0b10011100 : 0b00001100));
    }
    return m;
  }

 private:
  std::map<std::string, std::uint8_t> table_;
};

inline const PortTable& default_port_table() {
  static const PortTable t;
  return t;
}

/// Ports with the highest usage count over a path.
inline std::uint8_t dominant_ports(const std::vector<std::uint8_t>& masks) {
  unsigned count[8] = {};
  for (auto m : masks) {
    for (int p = 0; p < 8; ++p) count[p] += (m >> p) & 1u;
  }
  const unsigned best = *std::max_element(std::begin(count), std::end(count));
  if (best == 0) return 0;
  std::uint8_t out = 0;
  for (int p = 0; p < 8; ++p) {
    if (count[p] == best) out = static_cast<std::uint8_t>(out | (1u << p));
  }
  return out;
}

inline std::string format_ports(std::uint8_t m) {
  std::string s = "{";
  for (int p = 0; p < 8; ++p) {
    if ((m >> p) & 1u) s += (s.size() > 1 ? "," : "") + std::string("p") + std::to_string(p);
  }
  return s + "}";
}

class GadgetScanner {
 public:
  explicit GadgetScanner(std::vector<DisasmRecord> records, ScanOptions opts = {},
                         const PortTable& ports = default_port_table())
      : records_(std::move(records)), opts_(std::move(opts)), ports_(ports) {
    for (std::size_t i = 0; i < records_.size(); ++i) by_addr_[records_[i].addr] = i;
  }

  const std::vector<DisasmRecord>& records() const { return records_; }

  std::vector<GadgetSite> scan_v2() const {
    std::vector<GadgetSite> out;
    std::map<std::string, gadget::Taint> taint;
    std::optional<GadgetSite> pending;  // last TEST on tainted data, waiting for its Jcc
    auto reset = [&] {
      taint.clear();
      for (const auto& r : opts_.registers) taint[r] = gadget::Taint{r, false, 0, 0};
      pending.reset();
    };
    reset();
    for (const auto& rec : records_) {
      const auto& m = rec.mnemonic;
      if (gadget::is_cond_jump(m) && pending) {
        pending->branch = rec.addr;
        out.push_back(*pending);
      }
      if (gadget::is_control(m)) {
        reset();
        continue;
      }
      if (m == "test" && rec.operands.size() == 2) {
        pending = classify_test(rec, taint);
      } else if (!gadget::preserves_flags(m)) {
        pending.reset();
      }
      propagate(rec, taint);
    }
    return out;
  }

  /// Port-contention baseline: subset of the given v2 sites.
  std::vector<GadgetSite> scan_ss(const std::vector<GadgetSite>& v2) const {
    std::vector<GadgetSite> out;
    for (const auto& s : v2) {
      const std::size_t j = by_addr_.at(s.branch);
      const auto taken = gadget::direct_target(records_[j]);
      if (!taken) continue;
      const auto fall = path_ports(j + 1);
      const auto tk = by_addr_.count(*taken) ? path_ports(by_addr_.at(*taken)) : std::nullopt;
      if (!fall || !tk) continue;
      const auto a = dominant_ports(*fall);
      const auto b = dominant_ports(*tk);
      if (a != 0 && b != 0 && (a & b) == 0) {
        GadgetSite ss = s;
        ss.scan = GadgetScan::SS;
        out.push_back(ss);
      }
    }
    return out;
  }

  std::vector<GadgetSite> scan_smotherspectre() const { return scan_ss(scan_v2()); }

  std::vector<GadgetSite> scan_v1() const {
    std::vector<GadgetSite> out;
    for (std::size_t j = 0; j < records_.size(); ++j) {
      if (!gadget::is_cond_jump(records_[j].mnemonic)) continue;
      const auto cmp = flag_setter(j);
      if (!cmp) continue;
      const auto& c = records_[*cmp];
      if (c.mnemonic != "cmp" || c.operands.size() != 2) continue;
      std::vector<std::string> compared;
      for (const auto& o : c.operands) {
        if (o.is_reg() && o.reg.gpr) compared.push_back(o.reg.canon);
      }
      if (compared.empty()) continue;
      std::optional<GadgetSite> found;
      std::vector<std::size_t> starts{j + 1};
      if (const auto t = gadget::direct_target(records_[j]); t && by_addr_.count(*t)) starts.push_back(by_addr_.at(*t));
      for (std::size_t start : starts) {
        for (const auto& reg : compared) {
          if (found) break;
          found = follow_v1(start, reg);
          if (found) {
            found->addr = records_[j].addr;
            found->reg = gadget::upper(reg);
          }
        }
      }
      if (found) out.push_back(*found);
    }
    return out;
  }

  std::size_t unknown_mnemonics() const {
    std::set<std::string> seen;
    for (const auto& r : records_) {
      if (!ports_.ports(r)) seen.insert(r.mnemonic);
    }
    return seen.size();
  }

 private:
  std::vector<DisasmRecord> records_;
  ScanOptions opts_;
  const PortTable& ports_;
  std::map<std::uint64_t, std::size_t> by_addr_;

  std::optional<std::size_t> flag_setter(std::size_t j) const {
    for (std::size_t k = j; k-- > 0;) {
      const auto& m = records_[k].mnemonic;
      if (gadget::is_control(m)) return std::nullopt;
      if (!gadget::preserves_flags(m)) return k;
    }
    return std::nullopt;
  }

  /// Port masks of up to B instructions from `start`, stopping after a control
  /// transfer. Nullopt if the input ends before the path is complete.
  std::optional<std::vector<std::uint8_t>> path_ports(std::size_t start) const {
    std::vector<std::uint8_t> out;
    for (std::size_t k = start; k < records_.size() && out.size() < opts_.ss_prefix; ++k) {
      out.push_back(ports_.ports(records_[k]).value_or(0));
      if (gadget::is_control(records_[k].mnemonic)) return out;
    }
    if (out.size() < opts_.ss_prefix) return std::nullopt;
    return out;
  }

  static std::optional<GadgetSite> classify_test(const DisasmRecord& rec,
                                                 const std::map<std::string, gadget::Taint>& taint) {
    const auto& a = rec.operands[0];
    const auto& b = rec.operands[1];
    GadgetSite site;
    site.addr = rec.addr;
    site.scan = GadgetScan::V2;
    std::optional<std::int64_t> base_bit;
    std::uint64_t width = 64;
    if (a.is_reg()) {
      const auto it = taint.find(a.reg.canon);
      if (it == taint.end()) return std::nullopt;
      const auto& t = it->second;
      // A derived pointer (root plus offset) carries no secret bits itself.
      if (!t.deref && !t.bits) return std::nullopt;
      site.reg = gadget::upper(t.root);
      site.memory = t.deref;
      if (t.bits) base_bit = *t.bits + a.reg.shift;
      width = a.reg.width;
      if (b.is_reg()) {
        site.test = b.reg.canon == a.reg.canon && b.reg.shift == a.reg.shift ? TestKind::ZeroTest : TestKind::MaskTest;
        return site;
      }
    } else if (a.is_mem()) {
      const auto it = taint.find(a.mem.base);
      if (a.mem.base.empty() || it == taint.end() || it->second.deref || !it->second.bytes) return std::nullopt;
      site.reg = gadget::upper(it->second.root);
      site.memory = true;
      if (a.mem.index.empty()) base_bit = 8 * (*it->second.bytes + a.mem.disp);
      width = a.mem.size == 0 ? 64 : 8 * a.mem.size;
      if (!b.is_imm()) {
        site.test = TestKind::MaskTest;
        return site;
      }
    } else {
      return std::nullopt;
    }
    if (!b.is_imm()) return std::nullopt;
    const std::uint64_t mask = static_cast<std::uint64_t>(b.imm) & gadget::width_mask(static_cast<unsigned>(width));
    if (mask == 0) return std::nullopt;
    if (std::popcount(mask) == 1) {
      site.test = TestKind::BitTest;
      site.bits = gadget::leak_bits(base_bit, mask);
    } else {
      site.test = TestKind::MaskTest;
    }
    return site;
  }

  static void propagate(const DisasmRecord& rec, std::map<std::string, gadget::Taint>& taint) {
    const auto& m = rec.mnemonic;
    for (const auto& r : gadget::implicit_writes(rec)) taint.erase(r);
    if (rec.operands.empty() || gadget::reads_only(m) || !rec.operands[0].is_reg()) return;
    const auto& dst = rec.operands[0].reg;
    const bool copy = m == "mov" || m == "movzx" || m == "movsx" || m == "movsxd";
    std::optional<gadget::Taint> next;
    if (rec.operands.size() == 2) {
      const auto& src = rec.operands[1];
      if (copy && src.is_reg()) {
        if (const auto it = taint.find(src.reg.canon); it != taint.end()) {
          next = it->second;
          if (next->bits) *next->bits += src.reg.shift;
          if (src.reg.width < 64 || src.reg.shift != 0) next->bytes.reset();
        }
      } else if (copy && src.is_mem() && src.mem.index.empty()) {
        if (const auto it = taint.find(src.mem.base); it != taint.end() && !it->second.deref && it->second.bytes) {
          next = gadget::Taint{it->second.root, true, 8 * (*it->second.bytes + src.mem.disp), std::nullopt};
        }
      } else if (copy && src.is_mem()) {
        if (const auto it = taint.find(src.mem.base); it != taint.end() && !it->second.deref && it->second.bytes) {
          next = gadget::Taint{it->second.root, true, std::nullopt, std::nullopt};
        }
      } else if (m == "lea" && src.is_mem() && !src.mem.base.empty()) {
        if (const auto it = taint.find(src.mem.base); it != taint.end() && !it->second.deref && it->second.bytes) {
          next = gadget::Taint{it->second.root, false, std::nullopt, std::nullopt};
          if (src.mem.index.empty()) next->bytes = *it->second.bytes + src.mem.disp;
          if (src.mem.index.empty() && src.mem.disp == 0) next->bits = it->second.bits;
        }
      }
    }
    taint.erase(dst.canon);
    if (next) taint[dst.canon] = *next;
  }

  /// Walks up to W instructions from `start` looking for load-then-branch on `reg`.
  std::optional<GadgetSite> follow_v1(std::size_t start, const std::string& reg) const {
    std::set<std::string> index_regs{reg};
    std::map<std::string, std::int64_t> loaded;  // canonical register -> bit offset 0
    std::optional<GadgetSite> pending;
    std::size_t k = start;
    for (unsigned steps = 0; steps < opts_.window && k < records_.size(); ++steps) {
      const auto& rec = records_[k];
      const auto& m = rec.mnemonic;
      if (gadget::is_cond_jump(m) && pending) {
        pending->branch = rec.addr;
        return pending;
      }
      if (m == "jmp") {
        const auto t = gadget::direct_target(rec);
        if (!t || !by_addr_.count(*t)) return std::nullopt;
        k = by_addr_.at(*t);
        continue;
      }
      if (gadget::is_control(m) && !gadget::is_cond_jump(m)) return std::nullopt;
      auto indexed = [&](const DisasmOperand& o) {
        return o.is_mem() && (index_regs.count(o.mem.base) != 0 || index_regs.count(o.mem.index) != 0);
      };
      if ((m == "cmp" || m == "test") && rec.operands.size() == 2) {
        const auto& a = rec.operands[0];
        const auto& b = rec.operands[1];
        const bool on_loaded = (a.is_reg() && loaded.count(a.reg.canon)) || indexed(a) || indexed(b);
        if (on_loaded) {
          GadgetSite s;
          s.scan = GadgetScan::V1;
          s.memory = true;
          s.test = TestKind::MaskTest;
          if (m == "test" && a.is_reg() && b.is_reg() && a.reg == b.reg) s.test = TestKind::ZeroTest;
          if (m == "cmp" && b.is_imm() && b.imm == 0) s.test = TestKind::ZeroTest;
          if (m == "test" && b.is_imm()) {
            const auto mask = static_cast<std::uint64_t>(b.imm);
            if (std::popcount(mask) == 1) {
              s.test = TestKind::BitTest;
              s.bits = gadget::leak_bits(a.is_reg() ? std::int64_t{a.reg.shift} : std::int64_t{0}, mask);
            }
          }
          pending = s;
        } else {
          pending.reset();
        }
      } else if (!gadget::preserves_flags(m)) {
        pending.reset();
      }
      // Propagate register copies and loads.
      for (const auto& r : gadget::implicit_writes(rec)) {
        index_regs.erase(r);
        loaded.erase(r);
      }
      if (!rec.operands.empty() && rec.operands[0].is_reg() && !gadget::reads_only(m)) {
        const auto& dst = rec.operands[0].reg.canon;
        const bool copy = m == "mov" || m == "movzx" || m == "movsx" || m == "movsxd";
        bool idx = false;
        bool load = false;
        if (copy && rec.operands.size() == 2) {
          const auto& src = rec.operands[1];
          if (src.is_reg()) {
            idx = index_regs.count(src.reg.canon) != 0;
            load = loaded.count(src.reg.canon) != 0;
          } else if (indexed(src)) {
            load = true;
          }
        }
        index_regs.erase(dst);
        loaded.erase(dst);
        if (idx) index_regs.insert(dst);
        if (load) loaded[dst] = 0;
      }
      ++k;
    }
    return std::nullopt;
  }
};

struct GadgetReport {
  std::string binary_name;
  std::size_t v1_count = 0;
  std::size_t v2_count = 0;
  std::size_t smotherspectre_count = 0;
  std::map<std::string, std::set<unsigned>> bit_offsets;     // from v2 bit-test sites
  std::map<std::string, std::set<unsigned>> ss_bit_offsets;  // from ss bit-test sites
  std::vector<GadgetSite> sites;
  std::size_t unknown_mnemonics = 0;
  std::size_t records = 0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["binary_name"] = binary_name;
    j["records"] = records;
    j["v1_count"] = v1_count;
    j["v2_count"] = v2_count;
    j["smotherspectre_count"] = smotherspectre_count;
    auto offsets = [](const std::map<std::string, std::set<unsigned>>& m) {
      nlohmann::ordered_json o = nlohmann::ordered_json::object();
      for (const auto& [reg, bits] : m) o[reg] = std::vector<unsigned>(bits.begin(), bits.end());
      return o;
    };
    j["bit_offsets"] = offsets(bit_offsets);
    j["ss_bit_offsets"] = offsets(ss_bit_offsets);
    j["gadget_sites"] = nlohmann::ordered_json::array();
    for (const auto& s : sites) {
      std::ostringstream a, b;
      a << "0x" << std::hex << s.addr;
      b << "0x" << std::hex << s.branch;
      j["gadget_sites"].push_back({{"addr", a.str()},
                                   {"branch", b.str()},
                                   {"scan", to_string(s.scan)},
                                   {"classification", to_string(s.test)},
                                   {"register", s.reg},
                                   {"source", s.memory ? "memory" : "register"},
                                   {"bits", std::vector<unsigned>(s.bits.begin(), s.bits.end())}});
    }
    j["diagnostics"] = {{"unknown_mnemonics", unknown_mnemonics}};
    return j;
  }

  static void write_csv_header(std::ostream& os) { os << "binary,addr,branch,scan,classification,register,source,bits\n"; }

  void write_csv_rows(std::ostream& os) const {
    for (const auto& s : sites) {
      os << binary_name << ",0x" << std::hex << s.addr << ",0x" << s.branch << std::dec << ',' << to_string(s.scan)
         << ',' << to_string(s.test) << ',' << s.reg << ',' << (s.memory ? "memory" : "register") << ',';
      bool first = true;
      for (unsigned b : s.bits) {
        os << (first ? "" : ";") << b;
        first = false;
      }
      os << '\n';
    }
  }

  std::string csv() const {
    std::ostringstream os;
    write_csv_header(os);
    write_csv_rows(os);
    return os.str();
  }
};

/// Aggregates sites from the individual scans into a report.
inline GadgetReport make_report(const std::string& name, const std::vector<GadgetSite>& v1,
                                const std::vector<GadgetSite>& v2, const std::vector<GadgetSite>& ss) {
  GadgetReport r;
  r.binary_name = name;
  r.v1_count = v1.size();
  r.v2_count = v2.size();
  r.smotherspectre_count = ss.size();
  for (const auto* list : {&v1, &v2, &ss}) r.sites.insert(r.sites.end(), list->begin(), list->end());
  std::sort(r.sites.begin(), r.sites.end(), [](const GadgetSite& a, const GadgetSite& b) { return a.key() < b.key(); });
  for (const auto& s : v2) {
    if (s.test == TestKind::BitTest) r.bit_offsets[s.reg].insert(s.bits.begin(), s.bits.end());
  }
  for (const auto& s : ss) {
    if (s.test == TestKind::BitTest) r.ss_bit_offsets[s.reg].insert(s.bits.begin(), s.bits.end());
  }
  return r;
}

inline GadgetReport scan_records(const std::string& name, std::vector<DisasmRecord> records, const ScanOptions& opts = {}) {
  GadgetScanner sc(std::move(records), opts);
  std::vector<GadgetSite> v1, v2, ss;
  if (opts.v1) v1 = sc.scan_v1();
  if (opts.v2 || opts.ss) v2 = sc.scan_v2();
  if (opts.ss) ss = sc.scan_ss(v2);
  if (!opts.v2) v2.clear();
  auto r = make_report(name, v1, v2, ss);
  r.unknown_mnemonics = sc.unknown_mnemonics();
  r.records = sc.records().size();
  return r;
}

inline GadgetReport scan_file(const std::string& path, const ScanOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  auto name = path.substr(path.find_last_of('/') + 1);
  if (const auto dot = name.rfind('.'); dot != std::string::npos) name = name.substr(0, dot);
  return scan_records(name, parse_disasm(in), opts);
}

}  // namespace specpht
