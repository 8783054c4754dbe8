#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <vector>

#include "specpht/config.hpp"

namespace specpht {

using Address = std::uint64_t;

/// Global history: the partial target bits of the most recent `ghr_depth`
/// taken branches. Not-taken resolutions never touch it.
class GlobalHistoryRegister {
 public:
  GlobalHistoryRegister() = default;
  explicit GlobalHistoryRegister(const PredictorConfig& cfg)
      : entries_(cfg.ghr_depth, 0),
        bits_(cfg.target_bits_per_entry),
        shift_(cfg.alignment_shift) {}

  void insert_taken(Address target) {
    entries_.pop_front();
    entries_.push_back(static_cast<std::uint32_t>((target >> shift_) & mask()));
  }

  /// Oldest first.
  const std::deque<std::uint32_t>& entries() const { return entries_; }
  std::uint32_t newest() const { return entries_.back(); }
  std::size_t depth() const { return entries_.size(); }
  unsigned bits_per_entry() const { return bits_; }

  void assign(const std::vector<std::uint32_t>& oldest_first) {
    for (std::size_t i = 0; i < entries_.size() && i < oldest_first.size(); ++i) {
      entries_[i] = oldest_first[i] & mask();
    }
  }

  void clear() { std::fill(entries_.begin(), entries_.end(), 0u); }

  /// XOR-folds the concatenated history bits down to `width` bits. Bit j of the
  /// entry at position p (newest = 0) lands on bit (p * B + j) mod width.
  std::uint64_t fold(unsigned width) const {
    std::uint64_t acc = 0;
    const std::size_t n = entries_.size();
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint64_t e = entries_[n - 1 - i];
      for (unsigned j = 0; j < bits_; ++j) {
        if ((e >> j) & 1u) acc ^= std::uint64_t{1} << ((i * bits_ + j) % width);
      }
    }
    return acc;
  }

  friend bool operator==(const GlobalHistoryRegister&, const GlobalHistoryRegister&) = default;

 private:
  std::uint32_t mask() const { return (1u << bits_) - 1; }

  std::deque<std::uint32_t> entries_;
  unsigned bits_ = 2;
  unsigned shift_ = 2;
};

inline std::uint64_t index_one_level(Address addr, const PredictorConfig& cfg) {
  return (addr >> cfg.alignment_shift) & (cfg.pht_entries_one_level - 1);
}

inline std::uint64_t index_history(Address addr, const GlobalHistoryRegister& ghr,
                                   const PredictorConfig& cfg) {
  const std::uint64_t folded = ghr.fold(cfg.history_index_bits());
  return ((addr >> cfg.alignment_shift) ^ folded ^ cfg.index_salt) & (cfg.pht_entries_history - 1);
}

}  // namespace specpht
