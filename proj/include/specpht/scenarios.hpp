#pragma once

#include <cstdint>
#include <vector>

#include "specpht/engine.hpp"

namespace specpht {

/// Bounds-checked parent branch guarding a load and a child branch on the loaded value:
///
///   parent: if (x >= size) goto done      (slow operand, long resolve delay)
///           v = array[x]
///   child:  if (v != 0) goto join         (fast operand)
///           ...
///   done:   halt
///
/// With the parent trained on in-bound x and then fed an out-of-bound x, the
/// child executes and resolves on the squashed path.
struct NestedScenario {
  Program program;
  int pid = 1;
  Address parent = 0;
  Address child = 0;
  std::int64_t array_base = 0x2000;
  std::int64_t size = 4;
  std::int64_t out_of_bound = 16;
};

inline NestedScenario make_nested_scenario(std::int64_t secret, std::uint32_t parent_delay = 60,
                                           std::uint32_t child_delay = 2) {
  NestedScenario s;
  ProgramBuilder b(s.pid, 0x1000);
  s.parent = b.cond_branch({Operand::r(1), CmpOp::Ge, Operand::r(2)}, 0, parent_delay);
  b.load(3, Operand::i(s.array_base), Operand::r(1));
  s.child = b.cond_branch({Operand::r(3), CmpOp::NonZero, {}}, 0, child_delay);
  b.alu(4, AluOp::Mov, Operand::i(1));
  const Address join = b.alu(5, AluOp::Mov, Operand::i(2));
  const Address done = b.halt();
  b.patch_target(s.parent, done);
  b.patch_target(s.child, join);
  for (std::int64_t i = 0; i < s.size; ++i) b.data(s.array_base + i, 0);
  b.data(s.array_base + s.out_of_bound, secret);
  s.program.processes.emplace(s.pid, b.take());
  return s;
}

struct NestedOutcome {
  PredictorState before;  // after in-bound training, right before the out-of-bound call
  PredictorState after;
  InvocationResult attack;
  std::vector<TraceEvent> trace;
};

/// Trains the parent with `training_calls` in-bound calls, then makes one out-of-bound call.
inline NestedOutcome run_nested_scenario(const NestedScenario& s, EngineConfig cfg,
                                         const PredictorConfig& pcfg = {}, int training_calls = 8) {
  cfg.record_trace = true;
  Engine e(s.program, pcfg, cfg);
  for (int i = 0; i < training_calls; ++i) e.invoke(s.pid, {{1, i % s.size}, {2, s.size}});
  NestedOutcome out{e.predictor(), e.predictor(), {}, {}};
  out.attack = e.invoke(s.pid, {{1, s.out_of_bound}, {2, s.size}});
  out.after = e.predictor();
  out.trace = e.trace();
  return out;
}

/// PHT entries whose counter differs between two predictor states.
struct PhtDiff {
  Mode table;
  std::uint64_t index;
  unsigned before;
  unsigned after;
};

inline std::vector<PhtDiff> diff_pht(const PredictorState& a, const PredictorState& b) {
  std::vector<PhtDiff> out;
  for (Mode m : {Mode::OneLevel, Mode::HistoryBased}) {
    const auto& ta = a.table(m);
    const auto& tb = b.table(m);
    for (std::size_t i = 0; i < ta.size(); ++i) {
      if (ta[i].value() != tb[i].value()) out.push_back(PhtDiff{m, i, ta[i].value(), tb[i].value()});
    }
  }
  return out;
}

}  // namespace specpht
