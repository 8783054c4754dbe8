#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "specpht/config.hpp"
#include "specpht/predictor.hpp"

namespace specpht {

enum class UpdatePolicy : std::uint8_t {
  SpeculativeResolveTime,
  CommitTime,
  RestoreOnSquash,
  ShadowPht,
  ObfuscateOnSquash,
};

inline constexpr UpdatePolicy kAllPolicies[] = {
    UpdatePolicy::SpeculativeResolveTime, UpdatePolicy::CommitTime, UpdatePolicy::RestoreOnSquash,
    UpdatePolicy::ShadowPht, UpdatePolicy::ObfuscateOnSquash};

inline std::string_view to_string(UpdatePolicy p) {
  switch (p) {
    case UpdatePolicy::SpeculativeResolveTime: return "SpeculativeResolveTime";
    case UpdatePolicy::CommitTime: return "CommitTime";
    case UpdatePolicy::RestoreOnSquash: return "RestoreOnSquash";
    case UpdatePolicy::ShadowPht: return "ShadowPht";
    case UpdatePolicy::ObfuscateOnSquash: return "ObfuscateOnSquash";
  }
  return "?";
}

/// Accepts the variant names case-insensitively, with or without dashes/underscores.
inline UpdatePolicy parse_update_policy(std::string_view text) {
  std::string norm;
  for (char c : text) {
    if (c == '-' || c == '_') continue;
    norm.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  for (UpdatePolicy p : kAllPolicies) {
    std::string name;
    for (char c : to_string(p)) name.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (name == norm) return p;
  }
  if (norm == "speculative" || norm == "resolve") return UpdatePolicy::SpeculativeResolveTime;
  if (norm == "commit") return UpdatePolicy::CommitTime;
  if (norm == "restore") return UpdatePolicy::RestoreOnSquash;
  if (norm == "shadow") return UpdatePolicy::ShadowPht;
  if (norm == "obfuscate") return UpdatePolicy::ObfuscateOnSquash;
  throw ConfigError("unknown update policy: " + std::string(text));
}

/// One conditional-branch PHT update, identified by the dynamic sequence
/// number of the branch that produced it.
struct PhtTouch {
  Mode table = Mode::OneLevel;
  std::uint64_t index = 0;
  Direction outcome = Direction::Taken;
  std::uint64_t seq = 0;
  int pid = 0;
};

/// Journal of speculative updates with per-index undo.
class RestoreJournal {
 public:
  struct Record {
    PhtTouch touch;
    unsigned prior = 0;
  };

  void apply(PredictorState& ps, const PhtTouch& t) {
    auto& c = ps.entry(t.table, t.index);
    records_.push_back(Record{t, c.value()});
    c.update(t.outcome);
  }

  /// Undoes every update made by a branch with seq > `keep_upto`: each index
  /// touched since the first squashed record goes back to its value just
  /// before that record, then the surviving updates are replayed in order.
  void squash_after(PredictorState& ps, std::uint64_t keep_upto) {
    auto first = std::find_if(records_.begin(), records_.end(),
                              [&](const Record& r) { return r.touch.seq > keep_upto; });
    if (first == records_.end()) return;
    std::set<std::pair<Mode, std::uint64_t>> restored;
    for (auto it = first; it != records_.end(); ++it) {
      const auto key = std::make_pair(it->touch.table, it->touch.index);
      if (restored.insert(key).second) ps.entry(key.first, key.second).set(it->prior);
    }
    std::vector<Record> tail(first, records_.end());
    records_.erase(first, records_.end());
    for (const auto& r : tail) {
      if (r.touch.seq <= keep_upto) apply(ps, r.touch);
    }
  }

  /// Drops records that can no longer be squashed.
  void retire_before(std::uint64_t oldest_live_seq) {
    std::erase_if(records_, [&](const Record& r) { return r.touch.seq < oldest_live_seq; });
  }

  void clear() { records_.clear(); }
  const std::vector<Record>& records() const { return records_; }

 private:
  std::vector<Record> records_;
};

/// Per-process speculative copies of PHT entries. A lookup by the owning
/// process sees the most recent write (last writer wins); other processes
/// see the main table.
class ShadowTable {
 public:
  struct Write {
    PhtTouch touch;
    SaturatingCounter value;
  };

  SaturatingCounter visible(const PredictorState& ps, Mode m, std::uint64_t idx, int pid) const {
    auto it = stacks_.find(Key{m, idx, pid});
    if (it == stacks_.end() || it->second.empty()) return ps.entry(m, idx);
    return it->second.back().value;
  }

  void write(const PredictorState& ps, const PhtTouch& t) {
    auto v = visible(ps, t.table, t.index, t.pid).updated(t.outcome);
    stacks_[Key{t.table, t.index, t.pid}].push_back(Write{t, v});
  }

  /// Commit of `seq`: its update is folded into the main table.
  void merge(PredictorState& ps, std::uint64_t seq) {
    for (auto it = stacks_.begin(); it != stacks_.end();) {
      auto& st = it->second;
      for (auto w = st.begin(); w != st.end(); ++w) {
        if (w->touch.seq == seq) {
          ps.train_pht(w->touch.table, w->touch.index, w->touch.outcome);
          st.erase(w);
          break;
        }
      }
      it = st.empty() ? stacks_.erase(it) : std::next(it);
    }
  }

  void discard_after(std::uint64_t keep_upto) {
    for (auto it = stacks_.begin(); it != stacks_.end();) {
      std::erase_if(it->second, [&](const Write& w) { return w.touch.seq > keep_upto; });
      it = it->second.empty() ? stacks_.erase(it) : std::next(it);
    }
  }

  bool empty() const { return stacks_.empty(); }
  void clear() { stacks_.clear(); }

 private:
  using Key = std::tuple<Mode, std::uint64_t, int>;
  std::map<Key, std::vector<Write>> stacks_;
};

/// Overwrites the entries touched by squashed branches with seeded noise.
class Obfuscator {
 public:
  explicit Obfuscator(std::uint64_t seed = 0) : rng_(seed) {}

  void apply(PredictorState& ps, const PhtTouch& t) {
    ps.train_pht(t.table, t.index, t.outcome);
    marked_.push_back(t);
  }

  void squash_after(PredictorState& ps, std::uint64_t keep_upto) {
    for (const auto& t : marked_) {
      if (t.seq <= keep_upto) continue;
      auto& c = ps.entry(t.table, t.index);
      c.set(static_cast<unsigned>(rng_() & c.max()));
    }
    std::erase_if(marked_, [&](const PhtTouch& t) { return t.seq > keep_upto; });
  }

  /// Obfuscates an explicit set of entries (empty set is the identity).
  static void obfuscate(PredictorState& ps, const std::vector<std::pair<Mode, std::uint64_t>>& marked,
                        std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (const auto& [m, idx] : marked) {
      auto& c = ps.entry(m, idx);
      c.set(static_cast<unsigned>(rng() & c.max()));
    }
  }

  void retire_before(std::uint64_t oldest_live_seq) {
    std::erase_if(marked_, [&](const PhtTouch& t) { return t.seq < oldest_live_seq; });
  }

 private:
  std::mt19937_64 rng_;
  std::vector<PhtTouch> marked_;
};

/// Dispatches PHT reads and the resolve / commit / squash hooks of the active policy.
class PolicyState {
 public:
  explicit PolicyState(UpdatePolicy p = UpdatePolicy::SpeculativeResolveTime, std::uint64_t obfuscation_seed = 0)
      : policy_(p), obfuscator_(obfuscation_seed) {}

  UpdatePolicy policy() const { return policy_; }

  SaturatingCounter visible(const PredictorState& ps, Mode m, std::uint64_t idx, int pid) const {
    if (policy_ == UpdatePolicy::ShadowPht) return shadow_.visible(ps, m, idx, pid);
    return ps.entry(m, idx);
  }

  void on_resolve(PredictorState& ps, const PhtTouch& t) {
    switch (policy_) {
      case UpdatePolicy::SpeculativeResolveTime: ps.train_pht(t.table, t.index, t.outcome); break;
      case UpdatePolicy::CommitTime: break;
      case UpdatePolicy::RestoreOnSquash: journal_.apply(ps, t); break;
      case UpdatePolicy::ShadowPht: shadow_.write(ps, t); break;
      case UpdatePolicy::ObfuscateOnSquash: obfuscator_.apply(ps, t); break;
    }
  }

  void on_commit(PredictorState& ps, const PhtTouch& t) {
    if (policy_ == UpdatePolicy::CommitTime) ps.train_pht(t.table, t.index, t.outcome);
    else if (policy_ == UpdatePolicy::ShadowPht) shadow_.merge(ps, t.seq);
  }

  /// All branches younger than `keep_upto` were squashed.
  void on_squash(PredictorState& ps, std::uint64_t keep_upto) {
    if (policy_ == UpdatePolicy::RestoreOnSquash) journal_.squash_after(ps, keep_upto);
    else if (policy_ == UpdatePolicy::ShadowPht) shadow_.discard_after(keep_upto);
    else if (policy_ == UpdatePolicy::ObfuscateOnSquash) obfuscator_.squash_after(ps, keep_upto);
  }

  void retire_before(std::uint64_t oldest_live_seq) {
    journal_.retire_before(oldest_live_seq);
    obfuscator_.retire_before(oldest_live_seq);
  }

  const RestoreJournal& journal() const { return journal_; }
  const ShadowTable& shadow() const { return shadow_; }

 private:
  UpdatePolicy policy_;
  RestoreJournal journal_;
  ShadowTable shadow_;
  Obfuscator obfuscator_;
};

}  // namespace specpht
