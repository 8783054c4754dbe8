// specpht command-line runner: one subcommand per experiment.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "specpht/experiments.hpp"

using namespace specpht;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string policy;
  std::vector<std::string> sets;
};

/// Flag values recorded as config keys so they layer over the file.
struct Overrides {
  KeyValues kv;
  void bind(CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
    sub->add_option_function<std::string>(flag, [this, key](const std::string& v) { kv[key] = v; }, help);
  }
};

Experiment build(const std::string& name, const Globals& g, const Overrides& o) {
  Experiment ex;
  ex.name = name;
  KeyValues kv;
  if (!g.config.empty()) kv = read_key_values_file(g.config);
  for (const auto& s : g.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    kv[s.substr(0, eq)] = s.substr(eq + 1);
  }
  for (const auto& [k, v] : o.kv) kv[k] = v;
  if (g.seed) kv["seed"] = std::to_string(*g.seed);
  if (!g.policy.empty()) kv["policy"] = g.policy;
  ex.apply(kv);
  ex.out_dir = g.out;
  ex.finalize();
  return ex;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"specpht: speculative PHT update simulator and experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "seed for every stochastic choice");
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_option("--policy", g.policy, "update policy (speculative-resolve, commit, restore, shadow, obfuscate)");
  app.add_option("--set", g.sets, "extra key=value override (repeatable)");

  Overrides o;
  auto* spec = app.add_subcommand("speculative-update", "nested-speculation persistence experiment");
  o.bind(spec, "--secret-value", "secret_value", "value at the out-of-bound slot");
  o.bind(spec, "--training-calls", "training_calls", "in-bound calls before the attack call");

  auto* pmode = app.add_subcommand("probe-mode", "detect the active prediction mode");
  o.bind(pmode, "--exercise", "exercise", "outcome string run before probing, e.g. TNTNTN");
  o.bind(pmode, "--test-k", "test_k", "executions counted at the end of the sequence");

  auto* pghr = app.add_subcommand("probe-ghr", "find the number of taken branches that fix the history");
  o.bind(pghr, "--max-n", "max_n", "largest preamble length to try");

  auto* covert = app.add_subcommand("covert", "covert channel between trojan and spy");
  o.bind(covert, "--bits", "bits", "random message length");
  o.bind(covert, "--message", "secret", "explicit message as 0/1 string");
  o.bind(covert, "--mode", "mode", "one-level or history");
  o.bind(covert, "--reset-cadence", "reset_cadence", "one-level: bits between re-randomizations");

  auto* v1 = app.add_subcommand("sidechannel-v1", "bounds-check side channel");
  auto* v2 = app.add_subcommand("sidechannel-v2", "indirect-call side channel with BTB poisoning");
  for (auto* s : {v1, v2}) {
    o.bind(s, "--bits", "bits", "random secret length");
    o.bind(s, "--secret", "secret", "explicit secret as 0/1 string");
    o.bind(s, "--mode", "mode", "one-level or history");
  }
  o.bind(v2, "--poison", "poison", "true or false");
  o.bind(v2, "--benign-poison", "benign_poison", "true or false");

  auto* defense = app.add_subcommand("defense-eval", "compare update policies");
  o.bind(defense, "--workload", "workload", "program file");
  o.bind(defense, "--bits", "bits", "side-channel secret length per policy");
  o.bind(defense, "--only", "only_policy", "evaluate one policy");

  auto* scan = app.add_subcommand("scan", "gadget scanner over normalized disassembly");
  std::vector<std::string> inputs;
  std::string registers = "rdi,rsi,rdx,rcx";
  unsigned window = 16;
  unsigned prefix = 8;
  std::string scan_mode = "all";
  scan->add_option("inputs", inputs, "files or directories (default: bundled corpus)");
  scan->add_option("--registers", registers, "tracked registers")->capture_default_str();
  scan->add_option("--window", window, "v1 search window")->capture_default_str();
  scan->add_option("--ss-prefix", prefix, "instructions compared per path")->capture_default_str();
  scan->add_option("--mode", scan_mode, "v1, v2, ss or all")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    const Experiment ex = build(name, g, o);
    if (name == "speculative-update") cmd_speculative_update(ex);
    else if (name == "probe-mode") cmd_probe_mode(ex);
    else if (name == "probe-ghr") cmd_probe_ghr(ex);
    else if (name == "covert") cmd_covert(ex);
    else if (name == "sidechannel-v1") cmd_sidechannel_v1(ex);
    else if (name == "sidechannel-v2") cmd_sidechannel_v2(ex);
    else if (name == "defense-eval") cmd_defense_eval(ex);
    else if (name == "scan") {
      ScanOptions opts;
      opts.set_registers(registers);
      opts.set_mode(scan_mode);
      opts.window = window;
      opts.ss_prefix = prefix;
      if (inputs.empty()) inputs.push_back(std::string(SPECPHT_DATA_DIR) + "/corpus");
      cmd_scan(ex, inputs, opts);
    }
    std::cout << "artifacts: " << ex.out_dir.string() << '\n';
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
