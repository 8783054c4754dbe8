#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

#include "specpht/btb.hpp"
#include "specpht/config.hpp"
#include "specpht/counter.hpp"
#include "specpht/history.hpp"

namespace specpht {

enum class Mode : std::uint8_t { OneLevel, HistoryBased };

inline std::string_view to_string(Mode m) {
  return m == Mode::OneLevel ? "OneLevel" : "HistoryBased";
}

/// Tournament state for one selector slot. The accumulator only ever grows
/// until the next randomize_reset; reaching the threshold latches HistoryBased.
struct SelectorEntry {
  Mode mode = Mode::OneLevel;
  unsigned mispredict_accumulator = 0;
  std::optional<Direction> last_outcome;
  friend bool operator==(const SelectorEntry&, const SelectorEntry&) = default;
};

struct Prediction {
  Direction direction = Direction::Taken;
  Mode mode = Mode::OneLevel;
  std::uint64_t index = 0;
  friend bool operator==(const Prediction&, const Prediction&) = default;
};

/// The hybrid predictor of one simulated core: both PHTs, GHR, BTB and the
/// tournament selector.
class PredictorState {
 public:
  PredictorState() : PredictorState(PredictorConfig{}) {}

  explicit PredictorState(const PredictorConfig& cfg)
      : cfg_(cfg), ghr_(cfg), btb_(cfg) {
    cfg_.validate();
    one_level_.assign(cfg_.pht_entries_one_level,
                      SaturatingCounter(cfg_.one_level_bits, 1u << (cfg_.one_level_bits - 1)));
    history_.assign(cfg_.pht_entries_history,
                    SaturatingCounter(cfg_.history_bits, 1u << (cfg_.history_bits - 1)));
    selector_.assign(cfg_.selector_scope == SelectorScope::Global ? 1 : cfg_.pht_entries_one_level,
                     SelectorEntry{});
  }

  const PredictorConfig& config() const { return cfg_; }

  std::uint64_t index_for(Mode m, Address addr) const {
    return m == Mode::OneLevel ? index_one_level(addr, cfg_) : index_history(addr, ghr_, cfg_);
  }

  std::size_t selector_slot(Address addr) const {
    return cfg_.selector_scope == SelectorScope::Global ? 0 : index_one_level(addr, cfg_);
  }
  const SelectorEntry& selector(Address addr) const { return selector_[selector_slot(addr)]; }
  Mode mode_for(Address addr) const { return selector(addr).mode; }

  std::vector<SaturatingCounter>& table(Mode m) { return m == Mode::OneLevel ? one_level_ : history_; }
  const std::vector<SaturatingCounter>& table(Mode m) const {
    return m == Mode::OneLevel ? one_level_ : history_;
  }
  SaturatingCounter& entry(Mode m, std::uint64_t index) { return table(m).at(index); }
  const SaturatingCounter& entry(Mode m, std::uint64_t index) const { return table(m).at(index); }

  GlobalHistoryRegister& ghr() { return ghr_; }
  const GlobalHistoryRegister& ghr() const { return ghr_; }
  BranchTargetBuffer& btb() { return btb_; }
  const BranchTargetBuffer& btb() const { return btb_; }

  /// Consults the PHT of the mode currently selected for `addr`.
  Prediction predict(Address addr) const {
    const Mode m = mode_for(addr);
    const auto idx = index_for(m, addr);
    return Prediction{entry(m, idx).predict(), m, idx};
  }

  void train_pht(Mode m, std::uint64_t index, Direction outcome) { entry(m, index).update(outcome); }

  /// Feeds one committed resolution into the tournament selector.
  void train_selector(Address addr, Mode used, bool mispredicted, Direction outcome) {
    SelectorEntry& s = selector_[selector_slot(addr)];
    if (s.mode == Mode::OneLevel && used == Mode::OneLevel && mispredicted) {
      const bool counts = cfg_.selector_rule == SelectorRule::Every || s.last_outcome != outcome;
      if (counts && ++s.mispredict_accumulator >= cfg_.transition_threshold) {
        s.mode = Mode::HistoryBased;
      }
    }
    s.last_outcome = outcome;
  }

  /// Non-speculative resolution of a conditional branch whose prediction was
  /// made against the current GHR: trains the PHT entry of `mode_used`, the
  /// selector, and (when taken) the GHR.
  void record_resolution(Address addr, Direction outcome, Mode mode_used, bool was_mispredicted,
                         Address target) {
    train_pht(mode_used, index_for(mode_used, addr), outcome);
    train_selector(addr, mode_used, was_mispredicted, outcome);
    if (outcome == Direction::Taken) ghr_.insert_taken(target);
  }

  /// predict + record_resolution in one step; returns the prediction made.
  Prediction execute(Address addr, Direction outcome, Address target) {
    const Prediction p = predict(addr);
    record_resolution(addr, outcome, p.mode, p.direction != outcome, target);
    return p;
  }

  /// Stands in for a long run of random-outcome branches: every selector slot
  /// goes back to OneLevel and both PHTs plus the GHR are scrambled from `seed`.
  void randomize_reset(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto* t : {&one_level_, &history_}) {
      for (auto& c : *t) c.set(static_cast<unsigned>(rng() & c.max()));
    }
    for (std::size_t i = 0; i < cfg_.ghr_depth; ++i) ghr_.insert_taken(rng());
    std::fill(selector_.begin(), selector_.end(), SelectorEntry{});
  }

  /// Forces HistoryBased for `addr`'s slot (test and experiment setup helper).
  void force_mode(Address addr, Mode m) {
    SelectorEntry& s = selector_[selector_slot(addr)];
    s.mode = m;
    if (m == Mode::OneLevel) s.mispredict_accumulator = 0;
  }

  friend bool operator==(const PredictorState&, const PredictorState&) = default;

 private:
  PredictorConfig cfg_;
  std::vector<SaturatingCounter> one_level_;
  std::vector<SaturatingCounter> history_;
  GlobalHistoryRegister ghr_;
  BranchTargetBuffer btb_;
  std::vector<SelectorEntry> selector_;
};

}  // namespace specpht
