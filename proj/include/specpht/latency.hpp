#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "specpht/config.hpp"

namespace specpht {

enum class ProbeOutcome : std::uint8_t { Correct, Mispredict };

enum class NoiseKind : std::uint8_t { None, Uniform, Gaussian };

struct LatencyModel {
  std::int64_t base_latency = 10;
  std::int64_t mispredict_penalty = 40;
  NoiseKind noise = NoiseKind::None;
  std::int64_t uniform_width = 0;
  double gaussian_sigma = 0.0;
  std::uint64_t seed = 0;

  static LatencyModel noiseless() { return {}; }
  static LatencyModel uniform(std::int64_t width, std::uint64_t seed) {
    LatencyModel m;
    m.noise = NoiseKind::Uniform;
    m.uniform_width = width;
    m.seed = seed;
    return m;
  }
  static LatencyModel gaussian(double sigma, std::uint64_t seed) {
    LatencyModel m;
    m.noise = NoiseKind::Gaussian;
    m.gaussian_sigma = sigma;
    m.seed = seed;
    return m;
  }

  /// Classification threshold: latencies strictly above it read as Mispredict.
  double threshold() const { return static_cast<double>(base_latency) + static_cast<double>(mispredict_penalty) / 2.0; }

  void validate() const {
    if (mispredict_penalty <= 0) throw ConfigError("mispredict_penalty must be > 0");
    if (base_latency < 0) throw ConfigError("base_latency must be >= 0");
    if (uniform_width < 0) throw ConfigError("noise width must be >= 0");
    if (gaussian_sigma < 0) throw ConfigError("noise sigma must be >= 0");
  }

  bool apply(const std::string& key, const std::string& value) {
    if (key == "base_latency") base_latency = static_cast<std::int64_t>(detail::parse_u64(key, value));
    else if (key == "mispredict_penalty") mispredict_penalty = static_cast<std::int64_t>(detail::parse_u64(key, value));
    else if (key == "noise") {
      if (value == "none") noise = NoiseKind::None;
      else if (value == "uniform") noise = NoiseKind::Uniform;
      else if (value == "gaussian") noise = NoiseKind::Gaussian;
      else throw ConfigError("noise must be none, uniform or gaussian");
    } else if (key == "noise_width") uniform_width = static_cast<std::int64_t>(detail::parse_u64(key, value));
    else if (key == "noise_sigma") {
      try {
        gaussian_sigma = std::stod(value);
      } catch (const std::logic_error&) {
        throw ConfigError("bad number for noise_sigma: " + value);
      }
    } else if (key == "noise_seed") seed = detail::parse_u64(key, value);
    else return false;
    return true;
  }
};

/// Draws measured latencies from a model; owns the noise generator.
class LatencySampler {
 public:
  explicit LatencySampler(const LatencyModel& m) : model_(m), rng_(m.seed) { model_.validate(); }

  const LatencyModel& model() const { return model_; }

  std::int64_t measure(ProbeOutcome o) {
    const std::int64_t clean =
        model_.base_latency + (o == ProbeOutcome::Mispredict ? model_.mispredict_penalty : 0);
    switch (model_.noise) {
      case NoiseKind::None: return clean;
      case NoiseKind::Uniform: {
        std::uniform_int_distribution<std::int64_t> d(-model_.uniform_width, model_.uniform_width);
        return std::max<std::int64_t>(0, clean + d(rng_));
      }
      case NoiseKind::Gaussian: {
        std::normal_distribution<double> d(0.0, model_.gaussian_sigma);
        return std::max<std::int64_t>(0, clean + std::llround(d(rng_)));
      }
    }
    return clean;
  }

 private:
  LatencyModel model_;
  std::mt19937_64 rng_;
};

struct LatencySample {
  std::uint64_t probe_index = 0;
  std::int64_t latency = 0;
};

class LatencyTrace {
 public:
  void add(std::uint64_t probe_index, std::int64_t latency) {
    if (!samples_.empty() && probe_index <= samples_.back().probe_index) {
      throw std::invalid_argument("probe indices must be strictly increasing");
    }
    samples_.push_back(LatencySample{probe_index, latency});
  }

  /// Appends with the next probe index.
  void push(std::int64_t latency) { add(samples_.empty() ? 0 : samples_.back().probe_index + 1, latency); }

  const std::vector<LatencySample>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }

  void write_csv(std::ostream& os) const {
    os << "probe_index,latency\n";
    for (const auto& s : samples_) os << s.probe_index << ',' << s.latency << '\n';
  }

  std::string csv() const {
    std::ostringstream os;
    write_csv(os);
    return os.str();
  }

 private:
  std::vector<LatencySample> samples_;
};

inline ProbeOutcome classify(std::int64_t latency, const LatencyModel& m) {
  return static_cast<double>(latency) > m.threshold() ? ProbeOutcome::Mispredict : ProbeOutcome::Correct;
}

inline std::vector<ProbeOutcome> classify(const LatencyTrace& trace, const LatencyModel& m) {
  std::vector<ProbeOutcome> out;
  out.reserve(trace.size());
  for (const auto& s : trace.samples()) out.push_back(classify(s.latency, m));
  return out;
}

}  // namespace specpht
