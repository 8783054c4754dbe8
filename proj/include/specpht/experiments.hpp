#pragma once

// One function per CLI subcommand. Each takes a fully resolved Experiment,
// writes its artifacts under `out_dir` and returns the JSON summary.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "specpht/attacks.hpp"
#include "specpht/gadget.hpp"
#include "specpht/scenarios.hpp"

namespace specpht {

using Json = nlohmann::ordered_json;

/// Everything a subcommand needs. Precedence: CLI flags > config file > defaults.
struct Experiment {
  std::string name;
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "out";
  PredictorConfig predictor;
  EngineConfig engine;
  LatencyModel latency;
  AttackConfig attack;
  KeyValues params;  // subcommand-specific keys not consumed by the above
  std::ostream* log = &std::cout;

  /// Routes each key to the first structure that accepts it.
  void apply(const KeyValues& kv) {
    for (const auto& [k, v] : kv) {
      if (predictor.apply(k, v) || engine.apply(k, v) || latency.apply(k, v)) continue;
      if (k == "seed") seed = detail::parse_u64(k, v);
      else params[k] = v;
    }
  }

  std::string param(const std::string& key, const std::string& fallback) const {
    const auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  }

  std::uint64_t param_u64(const std::string& key, std::uint64_t fallback) const {
    const auto it = params.find(key);
    return it == params.end() ? fallback : detail::parse_u64(key, it->second);
  }

  /// Seeds every stochastic component from the experiment seed.
  void finalize() {
    predictor.validate();
    engine.validate();
    latency.validate();
    attack.seed = seed;
    if (engine.obfuscation_seed == 0) engine.obfuscation_seed = seed ^ 0x9e3779b97f4a7c15ULL;
    if (latency.noise != NoiseKind::None && latency.seed == 0) latency.seed = seed + 1;
    if (params.count("warmups")) attack.warmups = static_cast<unsigned>(param_u64("warmups", 5));
    if (params.count("trigger_delay")) attack.trigger_delay = static_cast<std::uint32_t>(param_u64("trigger_delay", 60));
    if (params.count("transmitter_delay")) {
      attack.transmitter_delay = static_cast<std::uint32_t>(param_u64("transmitter_delay", 2));
    }
    if (params.count("reset_cadence")) attack.reset_cadence = static_cast<unsigned>(param_u64("reset_cadence", 1));
    if (params.count("mode")) attack.mode = parse_mode(param("mode", "one-level"));
  }

  std::filesystem::path artifact(const std::string& file) const {
    std::filesystem::create_directories(out_dir);
    return out_dir / file;
  }

  static Mode parse_mode(const std::string& s) {
    if (s == "one-level" || s == "onelevel" || s == "one_level" || s == "1level") return Mode::OneLevel;
    if (s == "history" || s == "history-based" || s == "history_based") return Mode::HistoryBased;
    throw ConfigError("mode must be one-level or history");
  }
};

namespace experiments {

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << text;
}

inline void write_json(const std::filesystem::path& p, const Json& j) { write_text(p, j.dump(2) + "\n"); }

inline std::vector<int> parse_bits(const std::string& s) {
  std::vector<int> out;
  for (char c : s) {
    if (c == '0' || c == '1') out.push_back(c - '0');
    else if (c != ',' && c != ' ') throw ConfigError("bit string may only contain 0 and 1");
  }
  return out;
}

inline std::vector<int> random_bits(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<int> v(n);
  for (auto& b : v) b = static_cast<int>(rng() & 1);
  return v;
}

inline std::string bits_text(const std::vector<int>& v) {
  std::string s;
  for (int b : v) s += static_cast<char>('0' + b);
  return s;
}

inline std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

/// Prints `key : value` rows for the scalar members of a JSON object.
inline void print_table(std::ostream& os, const std::string& title, const Json& j) {
  os << title << '\n';
  for (const auto& [k, v] : j.items()) {
    if (v.is_structured()) continue;
    os << "  " << std::left << std::setw(32) << k << ' ' << (v.is_string() ? v.get<std::string>() : v.dump()) << '\n';
  }
}

/// Secret from `secret=0101...` or `bits=N` random bits from the seed.
inline std::vector<int> secret_from(const Experiment& ex, std::size_t default_bits) {
  if (ex.params.count("secret")) return parse_bits(ex.param("secret", ""));
  return random_bits(ex.param_u64("bits", default_bits), ex.seed);
}

inline Json attack_json(const Experiment& ex, const AttackResult& r) {
  Json j;
  j["experiment"] = ex.name;
  j["seed"] = ex.seed;
  j["policy"] = to_string(ex.engine.policy);
  j["mode"] = to_string(ex.attack.mode);
  j["bits"] = r.trials;
  j["errors"] = r.errors;
  j["accuracy"] = r.accuracy();
  j["recovered"] = bits_text(r.recovered);
  j["ground_truth"] = bits_text(r.ground_truth);
  return j;
}

}  // namespace experiments

/// Nested-speculation experiment: does the squashed child's update persist?
inline Json cmd_speculative_update(const Experiment& ex) {
  const auto secret = static_cast<std::int64_t>(ex.param_u64("secret_value", 1));
  const auto s = make_nested_scenario(secret, static_cast<std::uint32_t>(ex.param_u64("parent_delay", 60)),
                                      static_cast<std::uint32_t>(ex.param_u64("child_delay", 2)));
  PredictorState ps(ex.predictor);
  ps.randomize_reset(ex.seed);
  EngineConfig cfg = ex.engine;
  cfg.record_trace = true;
  Engine e(s.program, ps, cfg);
  const int training = static_cast<int>(ex.param_u64("training_calls", 8));
  for (int i = 0; i < training; ++i) e.invoke(s.pid, {{1, i % s.size}, {2, s.size}});
  const PredictorState before = e.predictor();
  const auto attack = e.invoke(s.pid, {{1, s.out_of_bound}, {2, s.size}});
  const auto child = attack.squashed_at(s.child);

  Json j;
  j["experiment"] = ex.name;
  j["seed"] = ex.seed;
  j["policy"] = to_string(ex.engine.policy);
  j["child_resolved_on_squashed_path"] = !child.empty() && child.front().resolved;
  bool persisted = false;
  if (!child.empty()) {
    const auto& c = child.front();
    const unsigned b = before.entry(c.mode, c.index).value();
    const unsigned a = e.predictor().entry(c.mode, c.index).value();
    persisted = a != b;
    j["child_table"] = to_string(c.mode);
    j["child_index"] = c.index;
    j["child_entry_before"] = b;
    j["child_entry_after"] = a;
  }
  j["verdict"] = persisted ? "persisted" : "not persisted";
  Json diffs = Json::array();
  for (const auto& d : diff_pht(before, e.predictor())) {
    diffs.push_back({{"table", to_string(d.table)}, {"index", d.index}, {"before", d.before}, {"after", d.after}});
  }
  j["pht_diff"] = diffs;
  experiments::write_json(ex.artifact("speculative_update.json"), j);
  experiments::write_text(ex.artifact("speculative_update_trace.txt"), format_trace(e.trace()));
  experiments::print_table(*ex.log, "speculative-update", j);
  return j;
}

/// Prediction-mode probe on the attacker's branch after an optional exercise.
inline Json cmd_probe_mode(const Experiment& ex) {
  AttackLab lab(VictimShape::BoundsCheck, {0}, ex.attack, ex.predictor, ex.engine, ex.latency);
  lab.establish_mode();
  const std::string exercise = ex.param("exercise", "");
  for (Direction d : parse_directions(exercise)) lab.attacker_exec(d);
  ProbeConfig pc;
  pc.sequence_train = ex.param("sequence_train", pc.sequence_train);
  pc.sequence_test = ex.param("sequence_test", pc.sequence_test);
  pc.test_K = static_cast<unsigned>(ex.param_u64("test_k", pc.test_K));
  pc.target_branch = lab.layout().congruent;
  const auto r = probe_mode(lab, pc);
  Json j;
  j["experiment"] = ex.name;
  j["seed"] = ex.seed;
  j["target_branch"] = experiments::hex(pc.target_branch);
  j["exercise"] = exercise;
  j["mode"] = to_string(r.mode);
  j["last_k_mispredictions"] = r.last_k_mispredictions;
  std::string obs;
  for (auto o : r.observed) obs += o == ProbeOutcome::Mispredict ? 'M' : 'C';
  j["observed"] = obs;
  experiments::write_json(ex.artifact("probe_mode.json"), j);
  experiments::write_text(ex.artifact("probe_mode_latency.csv"), r.trace.csv());
  experiments::print_table(*ex.log, "probe-mode", j);
  return j;
}

/// Smallest number of taken branches that fixes the target's history index.
inline Json cmd_probe_ghr(const Experiment& ex) {
  const auto max_n = static_cast<unsigned>(ex.param_u64("max_n", 20));
  const auto r = probe_ghr_depth(ex.predictor, ex.engine, max_n, ex.seed);
  Json j;
  j["experiment"] = ex.name;
  j["seed"] = ex.seed;
  j["max_n"] = max_n;
  j["ghr_depth"] = r.depth;
  std::ostringstream csv;
  csv << "n,collision\n";
  for (std::size_t i = 0; i < r.collision.size(); ++i) csv << i + 1 << ',' << (r.collision[i] ? 1 : 0) << '\n';
  experiments::write_json(ex.artifact("probe_ghr.json"), j);
  experiments::write_text(ex.artifact("probe_ghr.csv"), csv.str());
  experiments::print_table(*ex.log, "probe-ghr", j);
  return j;
}

inline Json cmd_covert(const Experiment& ex) {
  const auto message = experiments::secret_from(ex, 1024);
  const auto r = covert_send_receive(message, ex.attack, ex.predictor, ex.engine, ex.latency);
  auto j = experiments::attack_json(ex, r);
  j["reset_cadence"] = ex.attack.reset_cadence;
  experiments::write_json(ex.artifact("covert.json"), j);
  experiments::write_text(ex.artifact("covert_latency.csv"), r.trace.csv());
  experiments::print_table(*ex.log, "covert", j);
  return j;
}

inline Json run_side_channel(const Experiment& ex, VictimShape shape, const std::string& stem) {
  const auto secret = experiments::secret_from(ex, 64);
  AttackConfig cfg = ex.attack;
  if (ex.params.count("poison")) cfg.poison = ex.param("poison", "true") == "true";
  if (ex.params.count("benign_poison")) cfg.benign_poison = ex.param("benign_poison", "false") == "true";
  const auto r = side_channel(shape, secret, cfg, ex.predictor, ex.engine, ex.latency);
  auto j = experiments::attack_json(ex, r);
  if (shape == VictimShape::IndirectCall) {
    j["poison"] = cfg.poison;
    j["benign_poison"] = cfg.benign_poison;
  }
  experiments::write_json(ex.artifact(stem + ".json"), j);
  experiments::write_text(ex.artifact(stem + "_latency.csv"), r.trace.csv());
  experiments::print_table(*ex.log, stem, j);
  return j;
}

inline Json cmd_sidechannel_v1(const Experiment& ex) {
  return run_side_channel(ex, VictimShape::BoundsCheck, "sidechannel_v1");
}

inline Json cmd_sidechannel_v2(const Experiment& ex) {
  return run_side_channel(ex, VictimShape::IndirectCall, "sidechannel_v2");
}

/// Runs the workload and the v1 side channel under each update policy.
inline Json cmd_defense_eval(const Experiment& ex) {
  const std::string path = ex.param("workload", std::string(SPECPHT_DATA_DIR) + "/workloads/nested_loop.prog");
  const Program prog = load_program(path);
  std::vector<UpdatePolicy> policies(std::begin(kAllPolicies), std::end(kAllPolicies));
  if (ex.params.count("only_policy")) policies = {parse_update_policy(ex.param("only_policy", ""))};
  const auto secret = experiments::random_bits(ex.param_u64("bits", 64), ex.seed);

  Json j;
  j["experiment"] = ex.name;
  j["seed"] = ex.seed;
  j["workload"] = std::filesystem::path(path).filename().string();
  Json rows = Json::array();
  std::ostringstream csv;
  csv << "policy,mispredictions,committed_mispredictions,squashes,ticks,sidechannel_accuracy\n";
  std::map<UpdatePolicy, std::uint64_t> mis;
  *ex.log << std::left << std::setw(26) << "policy" << std::setw(16) << "mispredictions" << std::setw(10) << "squashes"
          << std::setw(10) << "ticks" << "v1 accuracy\n";
  for (UpdatePolicy p : policies) {
    EngineConfig cfg = ex.engine;
    cfg.policy = p;
    PredictorState ps(ex.predictor);
    ps.randomize_reset(ex.seed);
    Engine e(prog, ps, cfg);
    e.run(prog.schedule);
    ProcessCounts total;
    for (const auto& [pid, c] : e.counts()) {
      total.mispredictions += c.mispredictions;
      total.committed_mispredictions += c.committed_mispredictions;
      total.squashes += c.squashes;
    }
    mis[p] = total.committed_mispredictions;
    const double acc = side_channel(VictimShape::BoundsCheck, secret, ex.attack, ex.predictor, cfg).accuracy();
    rows.push_back({{"policy", to_string(p)},
                    {"mispredictions", total.mispredictions},
                    {"committed_mispredictions", total.committed_mispredictions},
                    {"squashes", total.squashes},
                    {"ticks", e.now()},
                    {"sidechannel_accuracy", acc}});
    csv << to_string(p) << ',' << total.mispredictions << ',' << total.committed_mispredictions << ','
        << total.squashes << ',' << e.now() << ',' << acc << '\n';
    *ex.log << std::left << std::setw(26) << to_string(p) << std::setw(16) << total.committed_mispredictions
            << std::setw(10) << total.squashes << std::setw(10) << e.now() << acc << '\n';
  }
  j["policies"] = rows;
  if (mis.count(UpdatePolicy::SpeculativeResolveTime) && mis.count(UpdatePolicy::CommitTime)) {
    j["resolve_beats_commit"] = mis[UpdatePolicy::SpeculativeResolveTime] < mis[UpdatePolicy::CommitTime];
  }
  experiments::write_json(ex.artifact("defense_eval.json"), j);
  experiments::write_text(ex.artifact("defense_eval.csv"), csv.str());
  return j;
}

/// Scans files (or every *.s in directories). A manifest.json next to the
/// inputs is checked for exact agreement.
inline Json cmd_scan(const Experiment& ex, const std::vector<std::string>& inputs, const ScanOptions& opts) {
  std::vector<std::filesystem::path> files;
  std::optional<std::filesystem::path> manifest;
  for (const auto& in : inputs) {
    const std::filesystem::path p(in);
    if (std::filesystem::is_directory(p)) {
      std::vector<std::filesystem::path> found;
      for (const auto& e : std::filesystem::directory_iterator(p)) {
        if (e.path().extension() == ".s") found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
      if (std::filesystem::exists(p / "manifest.json")) manifest = p / "manifest.json";
    } else if (std::filesystem::exists(p)) {
      files.push_back(p);
    } else {
      throw ConfigError("no such input: " + in);
    }
  }
  Json j;
  j["experiment"] = ex.name;
  j["window"] = opts.window;
  std::vector<std::string> regs;
  for (const auto& r : opts.registers) regs.push_back(gadget::upper(r));
  j["registers"] = regs;
  Json reports = Json::array();
  std::ostringstream csv;
  GadgetReport::write_csv_header(csv);
  std::size_t v1 = 0, v2 = 0, ss = 0;
  std::map<std::string, GadgetReport> by_file;
  *ex.log << std::left << std::setw(24) << "binary" << std::setw(8) << "v1" << std::setw(8) << "v2" << "ss\n";
  for (const auto& f : files) {
    const auto rep = scan_file(f.string(), opts);
    reports.push_back(rep.to_json());
    rep.write_csv_rows(csv);
    v1 += rep.v1_count;
    v2 += rep.v2_count;
    ss += rep.smotherspectre_count;
    by_file[f.filename().string()] = rep;
    *ex.log << std::left << std::setw(24) << rep.binary_name << std::setw(8) << rep.v1_count << std::setw(8)
            << rep.v2_count << rep.smotherspectre_count << '\n';
  }
  j["totals"] = {{"v1", v1}, {"v2", v2}, {"smotherspectre", ss}};
  j["reports"] = reports;
  if (manifest) {
    std::ifstream in(*manifest);
    const auto man = nlohmann::json::parse(in);
    bool match = true;
    for (const auto& entry : man.at("files")) {
      const auto it = by_file.find(entry.at("file").get<std::string>());
      if (it == by_file.end()) {
        match = false;
        continue;
      }
      for (auto [key, scan] : {std::pair{"v1", GadgetScan::V1}, {"v2", GadgetScan::V2}, {"ss", GadgetScan::SS}}) {
        std::set<std::string> want, got;
        for (const auto& a : entry.at(key)) want.insert(a.get<std::string>());
        for (const auto& s : it->second.sites) {
          if (s.scan == scan) got.insert(experiments::hex(s.addr));
        }
        const bool enabled = scan == GadgetScan::V1 ? opts.v1 : scan == GadgetScan::V2 ? opts.v2 : opts.ss;
        if (enabled && want != got) match = false;
      }
    }
    j["manifest_match"] = match;
    *ex.log << "manifest match: " << (match ? "yes" : "no") << '\n';
  }
  experiments::write_json(ex.artifact("report.json"), j);
  experiments::write_text(ex.artifact("report.csv"), csv.str());
  return j;
}

}  // namespace specpht
