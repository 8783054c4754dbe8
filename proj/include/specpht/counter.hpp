#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace specpht {

enum class Direction : std::uint8_t { Taken, NotTaken };

inline constexpr Direction opposite(Direction d) {
  return d == Direction::Taken ? Direction::NotTaken : Direction::Taken;
}

inline constexpr char to_char(Direction d) { return d == Direction::Taken ? 'T' : 'N'; }

inline std::string_view to_string(Direction d) {
  return d == Direction::Taken ? "Taken" : "NotTaken";
}

/// n-bit saturating counter. 0 is strongly taken, 2^n - 1 strongly not-taken;
/// values below 2^(n-1) predict taken.
class SaturatingCounter {
 public:
  SaturatingCounter() = default;

  explicit SaturatingCounter(unsigned width, unsigned value = 0) : width_(width), value_(value) {
    if (width < 2 || width > 16) {
      throw std::invalid_argument("counter width must be in [2, 16], got " + std::to_string(width));
    }
    if (value > max()) {
      throw std::invalid_argument("counter value " + std::to_string(value) + " exceeds " +
                                  std::to_string(max()));
    }
  }

  static SaturatingCounter strongly(Direction d, unsigned width) {
    SaturatingCounter c(width);
    if (d == Direction::NotTaken) c.value_ = c.max();
    return c;
  }

  unsigned width() const { return width_; }
  unsigned value() const { return value_; }
  unsigned max() const { return (1u << width_) - 1; }

  Direction predict() const {
    return value_ < (1u << (width_ - 1)) ? Direction::Taken : Direction::NotTaken;
  }

  bool is_strong() const { return value_ == 0 || value_ == max(); }

  void update(Direction outcome) {
    if (outcome == Direction::Taken) {
      if (value_ > 0) --value_;
    } else if (value_ < max()) {
      ++value_;
    }
  }

  SaturatingCounter updated(Direction outcome) const {
    SaturatingCounter c = *this;
    c.update(outcome);
    return c;
  }

  void set(unsigned value) {
    if (value > max()) throw std::invalid_argument("counter value out of range");
    value_ = value;
  }

  friend bool operator==(const SaturatingCounter&, const SaturatingCounter&) = default;

 private:
  unsigned width_ = 2;
  unsigned value_ = 0;
};

}  // namespace specpht
