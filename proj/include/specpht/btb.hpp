#pragma once

#include <bit>
#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "specpht/config.hpp"
#include "specpht/history.hpp"

namespace specpht {

/// Direct-mapped, per-core branch target buffer. Entries carry no process id,
/// so any process can hit on a slot written by another one.
class BranchTargetBuffer {
 public:
  struct Slot {
    bool valid = false;
    std::uint64_t tag = 0;
    Address target = 0;
    friend bool operator==(const Slot&, const Slot&) = default;
  };

  BranchTargetBuffer() = default;
  explicit BranchTargetBuffer(const PredictorConfig& cfg)
      : slots_(cfg.btb_entries),
        shift_(cfg.alignment_shift),
        index_bits_(static_cast<unsigned>(std::countr_zero(cfg.btb_entries))),
        tag_bits_(cfg.btb_tag_bits) {}

  std::size_t index(Address addr) const { return (addr >> shift_) & (slots_.size() - 1); }

  std::uint64_t tag(Address addr) const {
    const std::uint64_t t = addr >> (shift_ + index_bits_);
    return tag_bits_ == 0 || tag_bits_ >= 64 ? t : t & ((std::uint64_t{1} << tag_bits_) - 1);
  }

  std::optional<Address> lookup(Address addr) const {
    const Slot& s = slots_[index(addr)];
    if (s.valid && s.tag == tag(addr)) return s.target;
    return std::nullopt;
  }

  void update(Address addr, Address target) { slots_[index(addr)] = Slot{true, tag(addr), target}; }

  void invalidate(Address addr) { slots_[index(addr)] = Slot{}; }
  void clear() { std::fill(slots_.begin(), slots_.end(), Slot{}); }

  const std::vector<Slot>& slots() const { return slots_; }

  friend bool operator==(const BranchTargetBuffer&, const BranchTargetBuffer&) = default;

 private:
  std::vector<Slot> slots_;
  unsigned shift_ = 2;
  unsigned index_bits_ = 0;
  unsigned tag_bits_ = 0;
};

}  // namespace specpht
