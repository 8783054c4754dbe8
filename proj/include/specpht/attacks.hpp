#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "specpht/engine.hpp"
#include "specpht/latency.hpp"
#include "specpht/predictor.hpp"
#include "specpht/program.hpp"

namespace specpht {

class AttackError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ProbeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TransmissionError : public std::runtime_error {
 public:
  TransmissionError(std::size_t bit, const std::string& what)
      : std::runtime_error("bit " + std::to_string(bit) + ": " + what), bit_(bit) {}
  std::size_t bit() const { return bit_; }

 private:
  std::size_t bit_;
};

inline Direction parse_direction(char c) {
  if (c == 'T' || c == 't') return Direction::Taken;
  if (c == 'N' || c == 'n') return Direction::NotTaken;
  throw std::invalid_argument(std::string("direction must be T or N, got '") + c + "'");
}

inline std::vector<Direction> parse_directions(const std::string& s) {
  std::vector<Direction> out;
  for (char c : s) out.push_back(parse_direction(c));
  return out;
}

enum class VictimShape : std::uint8_t {
  BoundsCheck,    // conditional bounds check guards the transmitter
  IndirectCall,   // indirect call whose BTB entry the attacker poisons
};

struct AttackConfig {
  Mode mode = Mode::OneLevel;
  Address victim_base = 0x400000;
  /// Attacker code sits at victim_base + offset: every PHT, selector and BTB
  /// index bit (and the partial BTB tag) matches the victim's.
  Address attacker_offset = 0x10000000;
  std::int64_t array1 = 0x2000;
  std::int64_t array1_size = 4;
  /// Secret bit i lives at array1[secret_offset + i].
  std::int64_t secret_offset = 16;
  std::uint32_t trigger_delay = 60;
  std::uint32_t transmitter_delay = 2;
  unsigned warmups = 5;
  Direction training = Direction::Taken;
  std::uint64_t seed = 1;
  /// Perturbs one entry of the attacker's GHR preamble (must be < ghr_depth - 1).
  std::optional<unsigned> corrupt_preamble_entry;
  /// One-level covert channel: randomize_reset every this many bits.
  unsigned reset_cadence = 1;
  /// IndirectCall shape: poison the BTB before each trigger.
  bool poison = true;
  /// IndirectCall shape: poison with the benign path instead of the gadget.
  bool benign_poison = false;
};

/// Addresses of the victim / attacker processes.
struct AttackLayout {
  unsigned depth = 12;
  Address victim_base = 0;
  Address attacker_base = 0;
  Address trigger = 0;      // bounds-check branch or indirect call
  Address transmitter = 0;  // branch on the secret-dependent value
  Address congruent = 0;    // attacker's branch sharing the transmitter's PHT entry
  Address gadget = 0;       // IndirectCall: transmitter gadget entry
  Address benign = 0;       // IndirectCall: architectural call target
  Address poisoner = 0;     // IndirectCall: attacker's BTB-congruent indirect branch
  std::int64_t fptr = 0x3000;
};

inline constexpr int kVictimPid = 1;
inline constexpr int kAttackerPid = 2;
inline constexpr int kPoisonerPid = 3;

namespace detail {

/// `depth` chained direct jumps. With `corrupt = i`, jump i detours through a
/// landing pad whose address differs in the GHR bits; the pad then skips the
/// next jump, so exactly one history entry differs from the clean preamble.
inline void emit_preamble(ProgramBuilder& b, unsigned depth, std::optional<unsigned> corrupt) {
  const Address base = b.here();
  if (corrupt && *corrupt + 1 >= depth) throw AttackError("corrupt_preamble_entry must be < ghr_depth - 1");
  std::optional<std::pair<Address, Address>> pad;  // (address, its jump target)
  for (unsigned i = 0; i < depth; ++i) {
    const Address next = base + 4 * (i + 1);
    if (corrupt && *corrupt == i) {
      const Address land = base + 0x800 + 4 * ((i + 2) & 3);
      pad = std::make_pair(land, base + 4 * (i + 2));
      b.jump(land);
    } else {
      b.jump(next);
    }
  }
  if (pad) {
    const Address resume = b.here();
    b.org(pad->first);
    b.jump(pad->second);
    b.org(resume);
  }
}

inline Program build_attack_program(VictimShape shape, const AttackConfig& cfg, const PredictorConfig& pcfg,
                                    const std::vector<int>& secret, AttackLayout& L) {
  L.depth = pcfg.ghr_depth;
  L.victim_base = cfg.victim_base;
  L.attacker_base = cfg.victim_base + cfg.attacker_offset;
  const Address o = 4 * static_cast<Address>(L.depth);
  Program prog;

  ProgramBuilder v(kVictimPid, L.victim_base);
  emit_preamble(v, L.depth, std::nullopt);
  // The preamble's pad (if any) is never emitted for the victim, so code continues at base + o.
  if (shape == VictimShape::BoundsCheck) {
    L.trigger = v.cond_branch({Operand::r(1), CmpOp::Ge, Operand::r(2)}, 0, cfg.trigger_delay);
    v.load(3, Operand::i(cfg.array1), Operand::r(1));
    L.transmitter = v.cond_branch({Operand::r(3), CmpOp::Zero, {}}, 0, cfg.transmitter_delay);
    v.alu(4, AluOp::Mov, Operand::i(1));
    const Address join = v.alu(5, AluOp::Mov, Operand::i(2));
    const Address done = v.halt();
    v.patch_target(L.trigger, done);
    v.patch_target(L.transmitter, join);
  } else {
    v.load(6, Operand::i(L.fptr));
    L.trigger = v.indirect(6, cfg.trigger_delay);
    L.benign = v.alu(4, AluOp::Mov, Operand::i(1));
    v.halt();
    L.gadget = v.load(3, Operand::i(cfg.array1), Operand::r(1));
    L.transmitter = v.cond_branch({Operand::r(3), CmpOp::Zero, {}}, 0, cfg.transmitter_delay);
    v.alu(4, AluOp::Mov, Operand::i(1));
    const Address join = v.halt();
    v.patch_target(L.transmitter, join);
    v.data(L.fptr, static_cast<std::int64_t>(L.benign));
  }
  for (std::int64_t j = 0; j < cfg.array1_size; ++j) v.data(cfg.array1 + j, j & 1);
  for (std::size_t i = 0; i < secret.size(); ++i) {
    v.data(cfg.array1 + cfg.secret_offset + static_cast<std::int64_t>(i), secret[i]);
  }
  prog.processes.emplace(kVictimPid, v.take());

  // Attacker: same preamble, then its branch at the transmitter's offset.
  ProgramBuilder a(kAttackerPid, L.attacker_base);
  emit_preamble(a, L.depth, cfg.corrupt_preamble_entry);
  const Address want = L.attacker_base + (L.transmitter - L.victim_base);
  if (shape == VictimShape::IndirectCall) {
    // Mirror the victim's speculative path: one taken edge landing on the gadget offset.
    a.alu(0, AluOp::Mov, Operand::i(0));
    a.jump(L.attacker_base + (L.gadget - L.victim_base));
    a.halt();
  }
  while (a.here() < want) a.alu(0, AluOp::Mov, Operand::i(0));
  L.congruent = a.cond_branch({Operand::r(1), CmpOp::NonZero, {}}, want + 4);
  a.halt();
  if (L.congruent != want) throw AttackError("attacker layout does not line up with the transmitter");
  prog.processes.emplace(kAttackerPid, a.take());

  if (shape == VictimShape::IndirectCall) {
    ProgramBuilder p(kPoisonerPid, L.attacker_base + o);
    p.alu(0, AluOp::Mov, Operand::i(0));
    L.poisoner = p.indirect(6);
    p.halt();
    p.org(L.benign);
    p.halt();
    p.org(L.gadget);
    p.halt();
    prog.processes.emplace(kPoisonerPid, p.take());
  }
  return prog;
}

}  // namespace detail

/// One simulated core running a victim (or trojan), an attacker (or spy) and,
/// for the IndirectCall shape, a BTB poisoner.
class AttackLab {
 public:
  AttackLab(VictimShape shape, const std::vector<int>& secret, const AttackConfig& cfg,
            const PredictorConfig& pcfg = {}, EngineConfig ecfg = {}, const LatencyModel& lat = {})
      : shape_(shape),
        cfg_(cfg),
        engine_(detail::build_attack_program(shape, cfg, pcfg, secret, layout_), pcfg, [&] {
          ecfg.record_trace = false;
          return ecfg;
        }()),
        sampler_(lat),
        rng_(cfg.seed) {
    const auto& pc = engine_.predictor().config();
    if (index_one_level(layout_.congruent, pc) != index_one_level(layout_.transmitter, pc)) {
      throw AttackError("attacker branch is not congruent with the transmitter");
    }
    if (shape == VictimShape::IndirectCall) {
      const auto& btb = engine_.predictor().btb();
      if (btb.index(layout_.poisoner) != btb.index(layout_.trigger) ||
          btb.tag(layout_.poisoner) != btb.tag(layout_.trigger)) {
        throw AttackError("attacker indirect branch is not BTB-congruent with the victim's call");
      }
    }
  }

  Engine& engine() { return engine_; }
  PredictorState& predictor() { return engine_.predictor(); }
  const AttackLayout& layout() const { return layout_; }
  const AttackConfig& config() const { return cfg_; }
  LatencySampler& sampler() { return sampler_; }

  /// Counter width of the PHT serving the attack mode.
  unsigned width() const {
    const auto& pc = engine_.predictor().config();
    return cfg_.mode == Mode::OneLevel ? pc.one_level_bits : pc.history_bits;
  }
  unsigned training_runs() const { return (1u << width()) - 1; }
  unsigned probe_runs() const { return 1u << (width() - 1); }

  /// Attacker executes its congruent branch once (after its GHR preamble).
  BranchRecord attacker_exec(Direction d) {
    const auto r = engine_.invoke(kAttackerPid, {{1, d == Direction::Taken ? 1 : 0}});
    const auto recs = r.at(layout_.congruent);
    if (recs.size() != 1) throw AttackError("attacker branch did not commit exactly once");
    return recs.front();
  }

  /// Attacker's observation of one execution through the latency channel.
  ProbeOutcome attacker_probe(Direction d, std::int64_t* latency = nullptr) {
    const auto rec = attacker_exec(d);
    const auto lat = sampler_.measure(rec.mispredicted ? ProbeOutcome::Mispredict : ProbeOutcome::Correct);
    if (latency) *latency = lat;
    return classify(lat, sampler_.model());
  }

  /// In-bound victim call whose transmitter outcome is `bv`; keeps the bounds check trained.
  InvocationResult victim_warmup(Direction bv) {
    if (shape_ != VictimShape::BoundsCheck) throw AttackError("warmup calls need the bounds-check victim");
    const std::int64_t x = bv == Direction::Taken ? 0 : 1;  // array1[x] == 0 makes the branch taken
    return engine_.invoke(kVictimPid, {{1, x}, {2, cfg_.array1_size}});
  }

  /// Out-of-bound call reading secret element `i`; the transmitter must resolve on the squashed path.
  InvocationResult victim_trigger(std::size_t i) {
    const std::int64_t x = cfg_.secret_offset + static_cast<std::int64_t>(i);
    InvocationResult r;
    if (shape_ == VictimShape::BoundsCheck) {
      r = engine_.invoke(kVictimPid, {{1, x}, {2, cfg_.array1_size}});
    } else {
      if (cfg_.poison) {
        const Address tgt = cfg_.benign_poison ? layout_.benign : layout_.gadget;
        engine_.invoke(kPoisonerPid, {{6, static_cast<std::int64_t>(tgt)}});
        if (engine_.predictor().btb().lookup(layout_.trigger) != tgt) {
          throw AttackError("trial " + std::to_string(i) + ": poisoned BTB entry evicted before the victim ran");
        }
      }
      r = engine_.invoke(kVictimPid, {{1, x}});
      if (cfg_.poison) {
        const auto calls = r.at(layout_.trigger);
        const Address tgt = cfg_.benign_poison ? layout_.benign : layout_.gadget;
        if (calls.empty() || calls.front().predicted_target != tgt) {
          throw AttackError("trial " + std::to_string(i) + ": poisoned BTB entry evicted before the victim ran");
        }
      }
    }
    const bool reaches_gadget = shape_ == VictimShape::BoundsCheck || (cfg_.poison && !cfg_.benign_poison);
    if (reaches_gadget) {
      bool resolved = false;
      for (const auto& b : r.squashed_at(layout_.transmitter)) resolved = resolved || b.resolved;
      if (!resolved) {
        throw AttackError("trial " + std::to_string(i) +
                          ": transmitter was squashed before it resolved (check trigger/transmitter delays)");
      }
    }
    return r;
  }

  Mode slot_mode() const { return engine_.predictor().mode_for(layout_.congruent); }

  /// Puts the shared selector slot into the attack mode: a scramble for
  /// OneLevel, a scramble plus a TNTNTN exercise for HistoryBased.
  void establish_mode() {
    engine_.predictor().randomize_reset(rng_());
    if (cfg_.mode == Mode::HistoryBased) {
      for (char c : std::string("TNTNTN")) attacker_exec(parse_direction(c));
      if (slot_mode() != Mode::HistoryBased) throw AttackError("exercise sequence did not reach history mode");
    }
  }

  void scramble() { engine_.predictor().randomize_reset(rng_()); }

 private:
  VictimShape shape_;
  AttackConfig cfg_;
  AttackLayout layout_;
  Engine engine_;
  LatencySampler sampler_;
  std::mt19937_64 rng_;
};

/// Bit carried by the transmitter outcome: the victim branches when the byte is zero.
inline int bit_from_outcome(Direction transmitter) { return transmitter == Direction::NotTaken ? 1 : 0; }

/// Step-3 decoding: the probe mispredicts iff the transmitter went the Step-1 way.
inline Direction inferred_outcome(ProbeOutcome decode_probe, Direction step1) {
  return decode_probe == ProbeOutcome::Mispredict ? step1 : opposite(step1);
}

struct AttackResult {
  std::vector<int> recovered;
  std::vector<int> ground_truth;
  std::size_t trials = 0;
  std::size_t errors = 0;
  LatencyTrace trace;

  double accuracy() const {
    return trials == 0 ? 1.0 : static_cast<double>(trials - errors) / static_cast<double>(trials);
  }

  nlohmann::ordered_json to_json() const {
    return {{"recovered", recovered}, {"ground_truth", ground_truth}, {"accuracy", accuracy()},
            {"trials", trials}, {"errors", errors}};
  }
};

inline void score(AttackResult& r) {
  r.trials = r.ground_truth.size();
  r.errors = 0;
  for (std::size_t i = 0; i < r.trials; ++i) r.errors += r.recovered[i] != r.ground_truth[i];
}

/// Side channel against a victim holding `secret`: per bit, presets the shared
/// entry (Step 1), triggers one transient transmitter execution (Step 2) and
/// decodes from the 2^(n-1)-th probe (Step 3).
inline AttackResult side_channel(VictimShape shape, const std::vector<int>& secret, const AttackConfig& cfg,
                                 const PredictorConfig& pcfg = {}, const EngineConfig& ecfg = {},
                                 const LatencyModel& lat = {}) {
  AttackLab lab(shape, secret, cfg, pcfg, ecfg, lat);
  AttackResult res;
  res.ground_truth = secret;
  const Direction d = cfg.training;
  for (std::size_t i = 0; i < secret.size(); ++i) {
    if (cfg.mode == Mode::OneLevel || i == 0) lab.establish_mode();
    if (shape == VictimShape::BoundsCheck) {
      for (unsigned w = 0; w < cfg.warmups; ++w) lab.victim_warmup(d);
    }
    if (lab.slot_mode() != cfg.mode) throw AttackError("trial " + std::to_string(i) + ": prediction mode drifted");
    for (unsigned k = 0; k < lab.training_runs(); ++k) lab.attacker_exec(d);
    lab.victim_trigger(i);
    ProbeOutcome last = ProbeOutcome::Correct;
    std::int64_t latency = 0;
    for (unsigned k = 0; k < lab.probe_runs(); ++k) last = lab.attacker_probe(opposite(d), &latency);
    res.trace.push(latency);
    res.recovered.push_back(bit_from_outcome(inferred_outcome(last, d)));
  }
  score(res);
  return res;
}

/// Covert channel: the trojan (victim process, message as its secret) and the
/// spy (attacker process) run the chained protocol. Each bit's inference phase
/// is extended to 2^n - 1 executions so it leaves the entry saturated the other
/// way, which serves as the next bit's preset.
inline AttackResult covert_send_receive(const std::vector<int>& message, const AttackConfig& cfg,
                                        const PredictorConfig& pcfg = {}, const EngineConfig& ecfg = {},
                                        const LatencyModel& lat = {}) {
  AttackResult res;
  res.ground_truth = message;
  if (message.empty()) return res;
  if (cfg.reset_cadence == 0) throw ConfigError("reset_cadence must be >= 1");
  AttackLab lab(VictimShape::BoundsCheck, message, cfg, pcfg, ecfg, lat);
  Direction d = Direction::Taken;
  for (std::size_t i = 0; i < message.size(); ++i) {
    const bool fresh = i == 0 || (cfg.mode == Mode::OneLevel && i % cfg.reset_cadence == 0);
    if (fresh) {
      if (i == 0 || cfg.mode == Mode::OneLevel) lab.establish_mode();
      for (unsigned k = 0; k < lab.training_runs(); ++k) lab.attacker_exec(d);
    }
    if (lab.slot_mode() != cfg.mode) throw TransmissionError(i, "prediction mode drifted");
    for (unsigned w = 0; w < cfg.warmups; ++w) lab.victim_warmup(d);
    lab.victim_trigger(i);
    ProbeOutcome decode = ProbeOutcome::Correct;
    for (unsigned k = 0; k < lab.training_runs(); ++k) {
      std::int64_t latency = 0;
      const auto o = lab.attacker_probe(opposite(d), &latency);
      if (k + 1 == lab.probe_runs()) {
        decode = o;
        res.trace.push(latency);
      }
    }
    if (lab.slot_mode() != cfg.mode) throw TransmissionError(i, "prediction mode drifted");
    res.recovered.push_back(bit_from_outcome(inferred_outcome(decode, d)));
    d = opposite(d);
  }
  score(res);
  return res;
}

/// One cell of the Step-1 / transmitter-outcome state diagram: returns whether
/// the 2^(n-1)-th probe mispredicts when the shared entry starts at `initial`.
inline bool decode_probe_mispredicts(Mode mode, Direction step1, Direction transmitter, unsigned initial,
                                     const PredictorConfig& pcfg = {}, const EngineConfig& ecfg = {}) {
  AttackConfig cfg;
  cfg.mode = mode;
  cfg.training = step1;
  AttackLab lab(VictimShape::BoundsCheck, {bit_from_outcome(transmitter)}, cfg, pcfg, ecfg);
  lab.establish_mode();
  BranchRecord tx;
  for (unsigned w = 0; w < cfg.warmups; ++w) tx = lab.victim_warmup(step1).at(lab.layout().transmitter).back();
  lab.predictor().entry(tx.mode, tx.index).set(initial);
  for (unsigned k = 0; k < lab.training_runs(); ++k) lab.attacker_exec(step1);
  lab.victim_trigger(0);
  bool last = false;
  for (unsigned k = 0; k < lab.probe_runs(); ++k) last = lab.attacker_exec(opposite(step1)).mispredicted;
  return last;
}

struct ProbeConfig {
  Address target_branch = 0;
  std::string sequence_train = "TTTTTTTT";
  std::string sequence_test = "NNNN";
  unsigned test_K = 6;

  void validate() const {
    if (test_K <= 4) throw ConfigError("test_K must be > 4");
    if (test_K > sequence_train.size() + sequence_test.size()) throw ConfigError("test_K exceeds the sequence");
  }
};

struct ModeProbeResult {
  Mode mode = Mode::OneLevel;
  std::vector<ProbeOutcome> observed;
  unsigned last_k_mispredictions = 0;
  LatencyTrace trace;
};

/// Runs the test sequence through `exec` (one execution of the target branch,
/// returning the measured latency) and classifies the misprediction signature.
inline ModeProbeResult probe_mode(const std::function<std::int64_t(Direction)>& exec, const ProbeConfig& pc,
                                  const LatencyModel& model, unsigned one_level_bits, unsigned history_bits) {
  pc.validate();
  ModeProbeResult r;
  for (Direction d : parse_directions(pc.sequence_train + pc.sequence_test)) {
    const auto lat = exec(d);
    r.trace.push(lat);
    r.observed.push_back(classify(lat, model));
  }
  for (std::size_t i = r.observed.size() - pc.test_K; i < r.observed.size(); ++i) {
    r.last_k_mispredictions += r.observed[i] == ProbeOutcome::Mispredict;
  }
  const unsigned one = 1u << (one_level_bits - 1);
  const unsigned hist = 1u << (history_bits - 1);
  if (one != hist && r.last_k_mispredictions == hist) r.mode = Mode::HistoryBased;
  else if (one != hist && r.last_k_mispredictions == one) r.mode = Mode::OneLevel;
  else throw ProbeError("ambiguous signature: " + std::to_string(r.last_k_mispredictions) + " mispredictions");
  return r;
}

/// probe_mode on the attacker's congruent branch of a lab.
inline ModeProbeResult probe_mode(AttackLab& lab, const ProbeConfig& pc = {}) {
  const auto& c = lab.predictor().config();
  return probe_mode(
      [&](Direction d) {
        const auto rec = lab.attacker_exec(d);
        return lab.sampler().measure(rec.mispredicted ? ProbeOutcome::Mispredict : ProbeOutcome::Correct);
      },
      pc, lab.sampler().model(), c.one_level_bits, c.history_bits);
}

struct GhrDepthProbe {
  unsigned depth = 0;
  std::vector<bool> collision;  // collision[N-1] for N = 1..max_N
};

namespace detail {

/// Trainer and prober run `junk` jumps, then `n` shared preamble jumps, then the
/// target. Their junk differs only in the most recent jump's target bits.
inline ProcessImage ghr_probe_image(int pid, Address target, unsigned junk, unsigned n, bool prober) {
  ProgramBuilder b(pid, 0x700000);
  const Address first = target - 16 * static_cast<Address>(n);
  const Address entry = prober ? first + 4 : first;
  for (unsigned i = 0; i < junk; ++i) b.jump(i + 1 == junk ? entry : b.here() + 4);
  for (unsigned k = 0; k < n; ++k) {
    b.org((k == 0 ? entry : first + 16 * k));
    b.jump(first + 16 * (k + 1));
  }
  b.org(target);
  b.cond_branch({Operand::r(1), CmpOp::NonZero, {}}, target + 4);
  b.halt();
  return b.take();
}

}  // namespace detail

/// Finds the smallest preamble length N whose taken branches fully determine
/// the target's history index (observed as a cross-process collision).
inline GhrDepthProbe probe_ghr_depth(const PredictorConfig& pcfg, EngineConfig ecfg, unsigned max_N,
                                     std::uint64_t seed = 1) {
  if (max_N == 0) throw ProbeError("max_N must be >= 1");
  ecfg.record_trace = false;
  const Address target = 0x610000;
  const unsigned trains = (1u << pcfg.history_bits) - 1;
  const unsigned probes = 1u << (pcfg.history_bits - 1);
  PredictorState ps(pcfg);
  ps.randomize_reset(seed);
  GhrDepthProbe out;
  bool setup_done = false;
  for (unsigned n = 1; n <= max_N; ++n) {
    Program prog;
    prog.processes.emplace(kAttackerPid, detail::ghr_probe_image(kAttackerPid, target, max_N, n, false));
    prog.processes.emplace(kPoisonerPid, detail::ghr_probe_image(kPoisonerPid, target, max_N, n, true));
    Engine e(prog, ps, ecfg);
    auto run = [&](int pid, Direction d) {
      return e.invoke(pid, {{1, d == Direction::Taken ? 1 : 0}}).at(target).at(0).mispredicted;
    };
    if (!setup_done) {
      for (char c : std::string("TNTNTN")) run(kAttackerPid, parse_direction(c));
      if (e.predictor().mode_for(target) != Mode::HistoryBased) throw ProbeError("target not in history mode");
      setup_done = true;
    }
    bool collide = true;
    for (Direction d : {Direction::Taken, Direction::NotTaken}) {
      for (unsigned k = 0; k < trains; ++k) run(kAttackerPid, d);
      bool all = true;
      for (unsigned k = 0; k < probes; ++k) all = run(kPoisonerPid, opposite(d)) && all;
      collide = collide && all;
    }
    out.collision.push_back(collide);
    ps = e.predictor();
    if (collide) {
      out.depth = n;
      return out;
    }
  }
  throw ProbeError("no collision up to N = " + std::to_string(max_N));
}

}  // namespace specpht
