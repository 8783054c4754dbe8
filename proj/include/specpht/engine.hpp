#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "specpht/config.hpp"
#include "specpht/policy.hpp"
#include "specpht/predictor.hpp"
#include "specpht/program.hpp"

namespace specpht {

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EngineConfig {
  UpdatePolicy policy = UpdatePolicy::SpeculativeResolveTime;
  std::uint64_t obfuscation_seed = 0;
  unsigned max_inflight_branches = 48;
  unsigned rob_size = 224;
  /// Ticks a fetched Halt may wait for older branches before the run is aborted.
  std::uint64_t drain_limit = 100000;
  std::uint64_t max_ticks_per_invocation = 10000000;
  /// Restore the GHR to the mispredicted branch's checkpoint on squash.
  bool ghr_repair_on_squash = true;
  bool record_trace = false;

  bool apply(const std::string& key, const std::string& value) {
    auto u = [&] { return detail::parse_u64(key, value); };
    auto flag = [&] {
      if (value == "true" || value == "1") return true;
      if (value == "false" || value == "0") return false;
      throw ConfigError("expected boolean for '" + key + "'");
    };
    if (key == "policy") policy = parse_update_policy(value);
    else if (key == "obfuscation_seed") obfuscation_seed = u();
    else if (key == "max_inflight_branches") max_inflight_branches = static_cast<unsigned>(u());
    else if (key == "rob_size") rob_size = static_cast<unsigned>(u());
    else if (key == "drain_limit") drain_limit = u();
    else if (key == "max_ticks_per_invocation") max_ticks_per_invocation = u();
    else if (key == "ghr_repair_on_squash") ghr_repair_on_squash = flag();
    else if (key == "record_trace") record_trace = flag();
    else return false;
    return true;
  }

  void validate() const {
    if (max_inflight_branches < 1) throw ConfigError("max_inflight_branches must be >= 1");
    if (rob_size < 1) throw ConfigError("rob_size must be >= 1");
  }
};

struct TraceEvent {
  std::uint64_t tick = 0;
  std::string event;
  std::uint64_t seq = 0;
  std::string detail;
};

inline std::string format_trace(const std::vector<TraceEvent>& events) {
  std::ostringstream os;
  for (const auto& e : events) os << e.tick << ' ' << e.event << ' ' << e.seq << ' ' << e.detail << '\n';
  return os.str();
}

/// A dynamic instance of a conditional or indirect branch.
struct BranchRecord {
  std::uint64_t seq = 0;
  int pid = 0;
  Address addr = 0;
  InstrKind kind = InstrKind::CondBranch;
  Mode mode = Mode::OneLevel;
  std::uint64_t index = 0;
  Direction predicted = Direction::Taken;
  Direction actual = Direction::Taken;
  std::optional<Address> predicted_target;
  Address actual_target = 0;
  bool mispredicted = false;
  bool resolved = false;
  std::uint64_t fetch_tick = 0;
  std::uint64_t resolve_tick = 0;
  std::optional<std::uint64_t> parent;
};

using RegisterFile = std::array<std::int64_t, kNumRegisters>;

struct InvocationResult {
  int pid = 0;
  std::uint64_t start_tick = 0;
  std::uint64_t end_tick = 0;
  RegisterFile registers{};
  std::vector<BranchRecord> committed;
  std::vector<BranchRecord> squashed;
  std::uint64_t squashes = 0;

  /// Committed records of the branch at `addr`, in program order.
  std::vector<BranchRecord> at(Address addr) const {
    std::vector<BranchRecord> out;
    for (const auto& b : committed) {
      if (b.addr == addr) out.push_back(b);
    }
    return out;
  }

  /// Squashed records of the branch at `addr`.
  std::vector<BranchRecord> squashed_at(Address addr) const {
    std::vector<BranchRecord> out;
    for (const auto& b : squashed) {
      if (b.addr == addr) out.push_back(b);
    }
    return out;
  }
};

struct ProcessCounts {
  std::uint64_t invocations = 0;
  std::uint64_t predictions = 0;
  std::uint64_t mispredictions = 0;
  std::uint64_t squashes = 0;
  std::uint64_t committed_branches = 0;
  std::uint64_t committed_mispredictions = 0;
};

/// Tick-driven executor for the processes of one Program sharing one core's predictor.
///
/// Each tick resolves due branches (oldest first), commits in order, then fetches
/// one instruction. Instructions execute at fetch against speculative registers
/// and memory; each branch checkpoints registers, the store undo position and the
/// GHR so a misprediction can roll architectural state back. Predictor state is
/// not rolled back except as the update policy dictates.
class Engine {
 public:
  Engine(Program program, PredictorState predictor, EngineConfig cfg = {})
      : program_(std::move(program)),
        ps_(std::move(predictor)),
        cfg_(cfg),
        policy_(cfg.policy, cfg.obfuscation_seed) {
    cfg_.validate();
    for (const auto& [pid, image] : program_.processes) memory_[pid] = image.memory();
  }

  Engine(Program program, const PredictorConfig& pcfg, EngineConfig cfg = {})
      : Engine(std::move(program), PredictorState(pcfg), cfg) {}

  PredictorState& predictor() { return ps_; }
  const PredictorState& predictor() const { return ps_; }
  const EngineConfig& config() const { return cfg_; }
  const Program& program() const { return program_; }
  const PolicyState& policy_state() const { return policy_; }
  std::uint64_t now() const { return now_; }

  const std::map<std::int64_t, std::int64_t>& memory(int pid) const { return memory_.at(pid); }
  void poke(int pid, std::int64_t addr, std::int64_t value) { memory_.at(pid)[addr] = value; }

  const std::vector<TraceEvent>& trace() const { return trace_; }
  const std::map<int, ProcessCounts>& counts() const { return counts_; }

  /// Runs `pid` from its entry until its Halt commits.
  InvocationResult invoke(int pid, const std::vector<std::pair<int, std::int64_t>>& preset = {}) {
    auto it = program_.processes.find(pid);
    if (it == program_.processes.end()) throw ConfigError("schedule references unknown process " + std::to_string(pid));
    image_ = &it->second;
    pid_ = pid;
    mem_ = &memory_[pid];
    regs_.fill(0);
    for (const auto& [r, v] : preset) {
      if (r < 0 || r >= kNumRegisters) throw ConfigError("bad register index in schedule");
      regs_[static_cast<std::size_t>(r)] = v;
    }
    rob_.clear();
    undo_.clear();
    unresolved_ = 0;
    pc_ = image_->entry();
    fetch_halted_ = false;
    wait_indirect_ = false;
    halt_fetch_tick_.reset();

    InvocationResult res;
    res.pid = pid;
    res.start_tick = now_;
    current_ = &res;
    auto& pc_counts = counts_[pid];
    ++pc_counts.invocations;
    emit("invoke", 0, "pid=" + std::to_string(pid));

    bool done = false;
    while (!done) {
      if (now_ - res.start_tick > cfg_.max_ticks_per_invocation) {
        throw SimulationError("process " + std::to_string(pid) + " exceeded max_ticks_per_invocation");
      }
      resolve_due();
      done = commit_ready();
      if (!done) {
        check_drain();
        fetch();
      }
      ++now_;
    }
    res.end_tick = now_;
    res.registers = regs_;
    undo_.clear();
    policy_.retire_before(next_seq_);
    current_ = nullptr;
    return res;
  }

  /// Runs every schedule entry in order.
  std::vector<InvocationResult> run(const Schedule& schedule) {
    for (const auto& e : schedule) {
      if (!program_.processes.contains(e.pid)) {
        throw ConfigError("schedule references unknown process " + std::to_string(e.pid));
      }
    }
    std::vector<InvocationResult> out;
    for (const auto& e : schedule) out.push_back(invoke(e.pid, e.registers));
    return out;
  }

  nlohmann::ordered_json summary_json() const {
    nlohmann::ordered_json j;
    j["policy"] = std::string(to_string(cfg_.policy));
    j["ticks"] = now_;
    nlohmann::ordered_json procs = nlohmann::ordered_json::object();
    for (const auto& [pid, c] : counts_) {
      procs[std::to_string(pid)] = {{"invocations", c.invocations},
                                    {"predictions", c.predictions},
                                    {"mispredictions", c.mispredictions},
                                    {"squashes", c.squashes},
                                    {"committed_branches", c.committed_branches},
                                    {"committed_mispredictions", c.committed_mispredictions}};
    }
    j["processes"] = procs;
    return j;
  }

 private:
  struct Slot {
    std::uint64_t seq = 0;
    const Instruction* ins = nullptr;
    bool needs_resolve = false;
    bool resolved = true;
    BranchRecord br;
    bool btb_hit = false;
    std::optional<Address> correct_next;
    RegisterFile regs{};
    std::size_t undo_pos = 0;
    GlobalHistoryRegister ghr_before;
  };

  struct Undo {
    std::int64_t addr;
    std::optional<std::int64_t> old;
  };

  void emit(const char* event, std::uint64_t seq, std::string detail) {
    if (cfg_.record_trace) trace_.push_back(TraceEvent{now_, event, seq, std::move(detail)});
  }

  std::int64_t value(const Operand& o) const {
    switch (o.kind) {
      case Operand::Kind::Reg: return regs_[static_cast<std::size_t>(o.reg)];
      case Operand::Kind::Imm: return o.imm;
      case Operand::Kind::None: return 0;
    }
    return 0;
  }

  bool holds(const Condition& c) const {
    const auto l = value(c.lhs);
    const auto r = value(c.rhs);
    switch (c.op) {
      case CmpOp::NonZero: return l != 0;
      case CmpOp::Zero: return l == 0;
      case CmpOp::Lt: return l < r;
      case CmpOp::Le: return l <= r;
      case CmpOp::Gt: return l > r;
      case CmpOp::Ge: return l >= r;
      case CmpOp::Eq: return l == r;
      case CmpOp::Ne: return l != r;
    }
    return false;
  }

  static std::int64_t alu(AluOp op, std::int64_t a, std::int64_t b) {
    const auto ua = static_cast<std::uint64_t>(a);
    const auto ub = static_cast<std::uint64_t>(b);
    switch (op) {
      case AluOp::Mov: return a;
      case AluOp::Add: return static_cast<std::int64_t>(ua + ub);
      case AluOp::Sub: return static_cast<std::int64_t>(ua - ub);
      case AluOp::And: return a & b;
      case AluOp::Or: return a | b;
      case AluOp::Xor: return a ^ b;
      case AluOp::Shl: return static_cast<std::int64_t>(ua << (ub & 63));
      case AluOp::Shr: return static_cast<std::int64_t>(ua >> (ub & 63));
    }
    return 0;
  }

  std::int64_t effective(const Instruction& ins) const {
    return static_cast<std::int64_t>(static_cast<std::uint64_t>(value(ins.base)) +
                                     static_cast<std::uint64_t>(value(ins.index)));
  }

  std::optional<Address> fallthrough(const Instruction& ins) const {
    const auto pos = image_->position(ins.addr);
    if (!pos || *pos + 1 >= image_->code().size()) return std::nullopt;
    return image_->code()[*pos + 1].addr;
  }

  bool speculative() const { return unresolved_ > 0; }

  const Slot* oldest_unresolved() const {
    for (const auto& s : rob_) {
      if (!s.resolved) return &s;
    }
    return nullptr;
  }

  static std::string describe(const Slot& s) {
    return "seq " + std::to_string(s.seq) + " (" + std::string(to_string(s.ins->kind)) + " at " +
           ProcessImage::hex(s.ins->addr) + ")";
  }

  void check_drain() {
    if (!halt_fetch_tick_ || !speculative()) return;
    if (now_ - *halt_fetch_tick_ > cfg_.drain_limit) {
      throw SimulationError("unresolved branch at Halt: " + describe(*oldest_unresolved()));
    }
  }

  void fetch() {
    if (fetch_halted_ || wait_indirect_) return;
    if (rob_.size() >= cfg_.rob_size || unresolved_ >= cfg_.max_inflight_branches) return;
    if (!pc_) {
      if (speculative()) return;
      throw SimulationError("process " + std::to_string(pid_) + " fell off the end of its code");
    }
    const Instruction* ins = image_->at_address(*pc_);
    if (!ins) {
      if (speculative()) return;
      throw SimulationError("process " + std::to_string(pid_) + " fetched unmapped address " + ProcessImage::hex(*pc_));
    }

    Slot s;
    s.seq = next_seq_++;
    s.ins = ins;
    emit("fetch", s.seq, "pid=" + std::to_string(pid_) + " addr=" + ProcessImage::hex(ins->addr) +
                             " kind=" + std::string(to_string(ins->kind)));
    switch (ins->kind) {
      case InstrKind::Alu:
        regs_[static_cast<std::size_t>(ins->dst)] = alu(ins->op, value(ins->a), value(ins->b));
        pc_ = fallthrough(*ins);
        break;
      case InstrKind::Load: {
        const auto a = effective(*ins);
        auto it = mem_->find(a);
        regs_[static_cast<std::size_t>(ins->dst)] = it == mem_->end() ? 0 : it->second;
        pc_ = fallthrough(*ins);
        break;
      }
      case InstrKind::Store: {
        const auto a = effective(*ins);
        auto it = mem_->find(a);
        undo_.push_back(Undo{a, it == mem_->end() ? std::nullopt : std::optional<std::int64_t>(it->second)});
        (*mem_)[a] = value(ins->a);
        pc_ = fallthrough(*ins);
        break;
      }
      case InstrKind::TimerRead:
        regs_[static_cast<std::size_t>(ins->dst)] = static_cast<std::int64_t>(now_);
        pc_ = fallthrough(*ins);
        break;
      case InstrKind::Halt:
        fetch_halted_ = true;
        halt_fetch_tick_ = now_;
        break;
      case InstrKind::Jump:
        ps_.ghr().insert_taken(*ins->static_target);
        pc_ = ins->static_target;
        break;
      case InstrKind::CondBranch:
      case InstrKind::IndirectBranch:
        fetch_branch(s);
        break;
    }
    rob_.push_back(std::move(s));
  }

  void fetch_branch(Slot& s) {
    const Instruction& ins = *s.ins;
    BranchRecord& b = s.br;
    b.seq = s.seq;
    b.pid = pid_;
    b.addr = ins.addr;
    b.kind = ins.kind;
    b.fetch_tick = now_;
    b.resolve_tick = now_ + ins.resolve_delay;
    if (const Slot* p = youngest_unresolved()) b.parent = p->seq;
    s.needs_resolve = true;
    s.resolved = false;
    s.regs = regs_;
    s.undo_pos = undo_.size();
    s.ghr_before = ps_.ghr();
    ++unresolved_;
    ++counts_[pid_].predictions;

    if (ins.kind == InstrKind::CondBranch) {
      b.mode = ps_.mode_for(ins.addr);
      b.index = ps_.index_for(b.mode, ins.addr);
      b.predicted = policy_.visible(ps_, b.mode, b.index, pid_).predict();
      b.actual = holds(*ins.condition) ? Direction::Taken : Direction::NotTaken;
      b.actual_target = *ins.static_target;
      s.correct_next = b.actual == Direction::Taken ? ins.static_target : fallthrough(ins);
      if (b.predicted == Direction::Taken) {
        ps_.ghr().insert_taken(*ins.static_target);
        pc_ = ins.static_target;
      } else {
        pc_ = fallthrough(ins);
      }
      emit("predict", s.seq, std::string("mode=") + std::string(to_string(b.mode)) + " index=" +
                                 std::to_string(b.index) + " dir=" + to_char(b.predicted));
    } else {
      b.actual_target = static_cast<Address>(value(ins.a));
      s.correct_next = b.actual_target;
      b.predicted_target = ps_.btb().lookup(ins.addr);
      if (b.predicted_target) {
        s.btb_hit = true;
        ps_.ghr().insert_taken(*b.predicted_target);
        pc_ = b.predicted_target;
        emit("predict", s.seq, "btb=" + ProcessImage::hex(*b.predicted_target));
      } else {
        wait_indirect_ = true;
        pc_.reset();
        emit("predict", s.seq, "btb=miss");
      }
    }
  }

  const Slot* youngest_unresolved() const {
    for (auto it = rob_.rbegin(); it != rob_.rend(); ++it) {
      if (!it->resolved) return &*it;
    }
    return nullptr;
  }

  void resolve_due() {
    for (std::size_t i = 0; i < rob_.size(); ++i) {
      Slot& s = rob_[i];
      if (s.resolved || s.br.resolve_tick > now_) continue;
      resolve(i);
    }
    if (!speculative()) undo_.clear();
  }

  void resolve(std::size_t i) {
    Slot& s = rob_[i];
    BranchRecord& b = s.br;
    s.resolved = true;
    --unresolved_;
    if (b.kind == InstrKind::CondBranch) {
      b.mispredicted = b.predicted != b.actual;
      policy_.on_resolve(ps_, PhtTouch{b.mode, b.index, b.actual, b.seq, pid_});
      emit("resolve", s.seq, std::string("actual=") + to_char(b.actual) + " mispredicted=" +
                                 (b.mispredicted ? "1" : "0"));
    } else {
      ps_.btb().update(b.addr, b.actual_target);
      b.mispredicted = s.btb_hit && *b.predicted_target != b.actual_target;
      emit("resolve", s.seq, "target=" + ProcessImage::hex(b.actual_target) + " mispredicted=" +
                                 (b.mispredicted ? "1" : "0"));
      if (!s.btb_hit) {
        ps_.ghr().insert_taken(b.actual_target);
        pc_ = b.actual_target;
        wait_indirect_ = false;
      }
    }
    if (b.mispredicted) {
      ++counts_[pid_].mispredictions;
      squash_younger(i);
    }
  }

  void squash_younger(std::size_t i) {
    Slot& s = rob_[i];
    for (std::size_t j = i + 1; j < rob_.size(); ++j) {
      if (rob_[j].needs_resolve) {
        emit("squash", rob_[j].seq, "by=" + std::to_string(s.seq));
        if (!rob_[j].resolved) --unresolved_;
        rob_[j].br.resolved = rob_[j].resolved;
        current_->squashed.push_back(rob_[j].br);
      }
    }
    rob_.resize(i + 1);
    ++counts_[pid_].squashes;
    ++current_->squashes;

    regs_ = s.regs;
    while (undo_.size() > s.undo_pos) {
      const Undo u = undo_.back();
      undo_.pop_back();
      if (u.old) (*mem_)[u.addr] = *u.old;
      else mem_->erase(u.addr);
    }
    policy_.on_squash(ps_, s.seq);

    const bool taken = s.br.kind == InstrKind::IndirectBranch || s.br.actual == Direction::Taken;
    if (cfg_.ghr_repair_on_squash) ps_.ghr() = s.ghr_before;
    if (taken && (cfg_.ghr_repair_on_squash || s.br.kind == InstrKind::IndirectBranch ||
                  s.br.predicted == Direction::NotTaken)) {
      ps_.ghr().insert_taken(s.br.actual_target);
    }
    pc_ = s.correct_next;
    fetch_halted_ = false;
    halt_fetch_tick_.reset();
    wait_indirect_ = false;
  }

  /// Returns true once the Halt commits.
  bool commit_ready() {
    while (!rob_.empty() && rob_.front().resolved) {
      Slot s = std::move(rob_.front());
      rob_.pop_front();
      if (s.needs_resolve) {
        s.br.resolved = true;
        const BranchRecord& b = s.br;
        if (b.kind == InstrKind::CondBranch) {
          policy_.on_commit(ps_, PhtTouch{b.mode, b.index, b.actual, b.seq, pid_});
          ps_.train_selector(b.addr, b.mode, b.mispredicted, b.actual);
        }
        auto& c = counts_[pid_];
        ++c.committed_branches;
        c.committed_mispredictions += b.mispredicted;
        current_->committed.push_back(b);
        emit("commit", s.seq, "addr=" + ProcessImage::hex(b.addr));
      }
      policy_.retire_before(rob_.empty() ? next_seq_ : rob_.front().seq);
      if (s.ins->kind == InstrKind::Halt) {
        emit("commit", s.seq, "halt");
        return true;
      }
    }
    return false;
  }

  Program program_;
  PredictorState ps_;
  EngineConfig cfg_;
  PolicyState policy_;
  std::map<int, std::map<std::int64_t, std::int64_t>> memory_;
  std::vector<TraceEvent> trace_;
  std::map<int, ProcessCounts> counts_;
  std::uint64_t now_ = 0;
  std::uint64_t next_seq_ = 1;

  // Per-invocation state.
  const ProcessImage* image_ = nullptr;
  int pid_ = 0;
  std::map<std::int64_t, std::int64_t>* mem_ = nullptr;
  InvocationResult* current_ = nullptr;
  RegisterFile regs_{};
  std::deque<Slot> rob_;
  std::vector<Undo> undo_;
  unsigned unresolved_ = 0;
  std::optional<Address> pc_;
  bool fetch_halted_ = false;
  bool wait_indirect_ = false;
  std::optional<std::uint64_t> halt_fetch_tick_;
};

struct RunOutput {
  std::vector<TraceEvent> trace;
  PredictorState predictor;
  std::vector<InvocationResult> invocations;
  nlohmann::ordered_json summary;
};

/// Runs `schedule` (or the program's own `.run` schedule when empty) on a fresh engine.
inline RunOutput run(const Program& program, const Schedule& schedule, EngineConfig cfg,
                     const PredictorState& predictor) {
  cfg.record_trace = true;
  Engine e(program, predictor, cfg);
  auto inv = e.run(schedule.empty() ? program.schedule : schedule);
  return RunOutput{e.trace(), e.predictor(), std::move(inv), e.summary_json()};
}

}  // namespace specpht
