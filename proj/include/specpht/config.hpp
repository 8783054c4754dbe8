#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

namespace specpht {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using KeyValues = std::map<std::string, std::string>;

/// Which one-level mispredictions advance the tournament accumulator.
enum class SelectorRule : std::uint8_t {
  /// Only mispredictions whose outcome differs from the branch's previous
  /// outcome (counter warm-up along a run of equal outcomes is not counted).
  PatternChange,
  /// Every one-level misprediction.
  Every,
};

/// Whether the accumulator and mode are tracked per one-level index or once per core.
enum class SelectorScope : std::uint8_t { PerBranch, Global };

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used, 0);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError("bad integer for '" + key + "': '" + text + "'");
  }
}

}  // namespace detail

/// Reads `key = value` lines. `#` starts a comment; blank lines are skipped.
inline KeyValues read_key_values(std::istream& in) {
  KeyValues kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    auto key = detail::trim(line.substr(0, eq));
    auto value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    kv[key] = value;
  }
  return kv;
}

inline KeyValues read_key_values_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  return read_key_values(in);
}

struct PredictorConfig {
  unsigned one_level_bits = 2;
  unsigned history_bits = 3;
  std::uint64_t pht_entries_one_level = 1024;
  std::uint64_t pht_entries_history = 4096;
  unsigned ghr_depth = 12;
  unsigned target_bits_per_entry = 2;
  std::uint64_t btb_entries = 512;
  /// Partial BTB tag width; 0 keeps every address bit above the index.
  unsigned btb_tag_bits = 16;
  unsigned transition_threshold = 3;
  std::uint64_t index_salt = 0;
  /// Instruction alignment: address bits below this are ignored by all indexing.
  unsigned alignment_shift = 2;
  SelectorRule selector_rule = SelectorRule::PatternChange;
  SelectorScope selector_scope = SelectorScope::PerBranch;

  unsigned ghr_bits() const { return ghr_depth * target_bits_per_entry; }
  unsigned history_index_bits() const { return std::countr_zero(pht_entries_history); }
  unsigned one_level_index_bits() const { return std::countr_zero(pht_entries_one_level); }

  void validate() const {
    auto pow2 = [](std::uint64_t v, const char* name) {
      if (v == 0 || !std::has_single_bit(v)) {
        throw ConfigError(std::string(name) + " must be a power of two");
      }
    };
    pow2(pht_entries_one_level, "pht_entries_one_level");
    pow2(pht_entries_history, "pht_entries_history");
    pow2(btb_entries, "btb_entries");
    if (one_level_bits < 2 || one_level_bits > 16) throw ConfigError("one_level_bits must be in [2, 16]");
    if (history_bits < 2 || history_bits > 16) throw ConfigError("history_bits must be in [2, 16]");
    if (ghr_depth < 1) throw ConfigError("ghr_depth must be >= 1");
    if (target_bits_per_entry < 1 || target_bits_per_entry > history_index_bits()) {
      throw ConfigError("target_bits_per_entry must be in [1, log2(pht_entries_history)]");
    }
    if (transition_threshold < 1) throw ConfigError("transition_threshold must be >= 1");
    if (alignment_shift > 16) throw ConfigError("alignment_shift must be <= 16");
  }

  /// Applies one key; returns false when the key is not a predictor field.
  bool apply(const std::string& key, const std::string& value) {
    auto u = [&] { return detail::parse_u64(key, value); };
    auto un = [&] { return static_cast<unsigned>(u()); };
    if (key == "one_level_bits") one_level_bits = un();
    else if (key == "history_bits") history_bits = un();
    else if (key == "pht_entries_one_level") pht_entries_one_level = u();
    else if (key == "pht_entries_history") pht_entries_history = u();
    else if (key == "ghr_depth") ghr_depth = un();
    else if (key == "target_bits_per_entry") target_bits_per_entry = un();
    else if (key == "btb_entries") btb_entries = u();
    else if (key == "btb_tag_bits") btb_tag_bits = un();
    else if (key == "transition_threshold") transition_threshold = un();
    else if (key == "index_salt") index_salt = u();
    else if (key == "alignment_shift") alignment_shift = un();
    else if (key == "selector_rule") {
      if (value == "pattern_change") selector_rule = SelectorRule::PatternChange;
      else if (value == "every") selector_rule = SelectorRule::Every;
      else throw ConfigError("selector_rule must be pattern_change or every");
    } else if (key == "selector_scope") {
      if (value == "per_branch") selector_scope = SelectorScope::PerBranch;
      else if (value == "global") selector_scope = SelectorScope::Global;
      else throw ConfigError("selector_scope must be per_branch or global");
    } else return false;
    return true;
  }

  friend bool operator==(const PredictorConfig&, const PredictorConfig&) = default;
};

/// Builds a config from defaults plus every recognised key; unknown keys are errors.
inline PredictorConfig predictor_config_from(const KeyValues& kv) {
  PredictorConfig cfg;
  for (const auto& [k, v] : kv) {
    if (!cfg.apply(k, v)) throw ConfigError("unknown predictor config key: " + k);
  }
  cfg.validate();
  return cfg;
}

inline PredictorConfig load_predictor_config(const std::string& path) {
  return predictor_config_from(read_key_values_file(path));
}

}  // namespace specpht
