// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria. Expected values come from small oracles in this
// file, never from the code under test.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "specpht/experiments.hpp"

using namespace specpht;

namespace {

constexpr Direction T = Direction::Taken;
constexpr Direction N = Direction::NotTaken;

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void criterion(int id, const std::string& title, double budget_s, const std::function<void(Verdict&)>& body) {
  Verdict v;
  const auto start = std::chrono::steady_clock::now();
  try {
    body(v);
  } catch (const std::exception& e) {
    v.pass = false;
    v.detail << " [exception: " << e.what() << "]";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (secs >= budget_s) {
    v.pass = false;
    v.detail << " [over budget " << budget_s << " s]";
  }
  failures += !v.pass;
  std::cout << "AC" << std::setw(2) << std::left << id << ' ' << (v.pass ? "PASS" : "FAIL") << "  " << title << " --"
            << v.detail.str() << " (" << std::fixed << std::setprecision(2) << secs << " s)" << std::endl;
}

// Oracle: an n-bit counter as an explicit state list, taken half first.
int oracle_mispredictions_until_stable(unsigned n, int state, Direction d, int steps) {
  const int last = (1 << n) - 1;
  int mis = 0;
  for (int i = 0; i < steps; ++i) {
    const bool predicts_taken = state < (1 << (n - 1));
    mis += predicts_taken != (d == T);
    state = d == T ? std::max(0, state - 1) : std::min(last, state + 1);
  }
  return mis;
}

// Oracle: tournament selector with a 2-bit one-level counter, counting only
// mispredictions that follow a change of outcome; sticky once it reaches 3.
bool oracle_flips(int init, const std::vector<Direction>& seq) {
  int state = init;
  int counted = 0;
  std::optional<Direction> last;
  for (Direction d : seq) {
    if (counted >= 3) break;
    const bool predicts_taken = state < 2;
    if (predicts_taken != (d == T) && last != d) ++counted;
    state = d == T ? std::max(0, state - 1) : std::min(3, state + 1);
    last = d;
  }
  return counted >= 3;
}

std::vector<int> random_bits(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<int> v(n);
  for (auto& b : v) b = static_cast<int>(rng() & 1);
  return v;
}

AttackConfig mode_cfg(Mode m) {
  AttackConfig c;
  c.mode = m;
  return c;
}

EngineConfig with_policy(UpdatePolicy p) {
  EngineConfig e;
  e.policy = p;
  return e;
}

std::string fmt(double x) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << x;
  return os.str();
}

// Random listings for the subset-law property.
std::vector<DisasmRecord> random_listing(std::mt19937_64& rng, std::size_t n) {
  static const char* regs[] = {"rdi", "rsi", "rdx", "rcx", "rax", "rbx", "dl", "cl", "sil", "al"};
  static const char* bodies[] = {"imul rax, rbx", "popcnt rcx, rax", "pshufb xmm0, xmm1", "add eax, 1",
                                 "shl rax, 1", "nop", "mov r9, rdx", "lea r9, [rdi+0x1]", "crc32 eax, ebx"};
  static const char* jcc[] = {"je", "jne", "js", "jb"};
  std::ostringstream text;
  for (std::size_t i = 0; i < n; ++i) {
    text << std::hex << 0x600000 + 4 * i << ": " << std::dec;
    switch (rng() % 8) {
      case 0: text << "test " << regs[rng() % std::size(regs)] << ", 0x" << std::hex << (1u << (rng() % 8)); break;
      case 1: {
        const char* r = regs[rng() % 4];
        text << "test " << r << ", " << r;
        break;
      }
      case 2: text << "movzx edx, byte ptr [" << regs[rng() % 4] << "]"; break;
      case 3: text << jcc[rng() % std::size(jcc)] << ' ' << std::hex << 0x600000 + 4 * (rng() % n); break;
      case 4: text << (rng() % 3 == 0 ? "ret" : bodies[rng() % std::size(bodies)]); break;
      default: text << bodies[rng() % std::size(bodies)];
    }
    text << '\n';
  }
  return parse_disasm_text(text.str());
}

std::map<std::string, std::string> read_dir(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    out[e.path().filename().string()] = s.str();
  }
  return out;
}

}  // namespace

int main() {
  criterion(1, "misprediction signatures", 1.0, [](Verdict& v) {
    for (unsigned n : {2u, 3u, 4u}) {
      const int expected = oracle_mispredictions_until_stable(n, 0, N, 1 << (n + 1));
      // Through the real predictor: one-level table for n = 2, history table otherwise.
      PredictorConfig cfg;
      cfg.one_level_bits = 2;
      cfg.history_bits = n;
      const Mode m = n == 2 ? Mode::OneLevel : Mode::HistoryBased;
      PredictorState p(cfg);
      const Address a = 0x400100;
      p.force_mode(a, m);
      p.entry(m, p.index_for(m, a)).set(0);
      int got = 0;
      for (int i = 0; i < (1 << (n + 1)); ++i) got += p.execute(a, N, a + 4).direction != N;
      v.detail << " n=" << n << ":" << got;
      v.check(got == expected, "n=" + std::to_string(n) + " oracle");
      v.check(got == (1 << (n - 1)), "n=" + std::to_string(n) + " equals 2^(n-1)");
    }
    v.check(oracle_mispredictions_until_stable(2, 0, N, 16) == 2, "n=2 gives 2");
    v.check(oracle_mispredictions_until_stable(3, 0, N, 16) == 4, "n=3 gives 4");
  });

  criterion(2, "mode transition at three mispredictions", 1.0, [](Verdict& v) {
    int cases = 0;
    for (int init = 0; init < 4; ++init) {
      for (int len = 1; len <= 8; ++len) {
        for (int mask = 0; mask < (1 << len); ++mask) {
          std::vector<Direction> seq;
          for (int i = 0; i < len; ++i) seq.push_back((mask >> i) & 1 ? T : N);
          PredictorState p;
          const Address a = 0x400100;
          p.entry(Mode::OneLevel, p.index_for(Mode::OneLevel, a)).set(static_cast<unsigned>(init));
          for (Direction d : seq) p.execute(a, d, a + 4);
          const Mode want = oracle_flips(init, seq) ? Mode::HistoryBased : Mode::OneLevel;
          v.check(p.mode_for(a) == want, "init " + std::to_string(init) + " mask " + std::to_string(mask));
          ++cases;
        }
      }
      PredictorState p;
      const Address a = 0x400200;
      p.entry(Mode::OneLevel, p.index_for(Mode::OneLevel, a)).set(static_cast<unsigned>(init));
      for (char c : std::string("TNTNTN")) p.execute(a, c == 'T' ? T : N, a + 4);
      v.check(p.mode_for(a) == Mode::HistoryBased, "TNTNTN from " + std::to_string(init));
    }
    v.detail << " " << cases << " sequences, TNTNTN flips from all 4 states";
  });

  criterion(3, "GHR collision threshold", 5.0, [](Verdict& v) {
    for (unsigned depth : {4u, 8u, 12u, 16u}) {
      PredictorConfig cfg;
      cfg.ghr_depth = depth;
      const auto r = probe_ghr_depth(cfg, {}, 20, 7);
      v.detail << " " << depth << "->" << r.depth;
      v.check(r.depth == depth, "depth " + std::to_string(depth));
    }
  });

  criterion(4, "step-1 / transmitter state diagram", 1.0, [](Verdict& v) {
    int cases = 0;
    for (Mode m : {Mode::OneLevel, Mode::HistoryBased}) {
      const unsigned n = m == Mode::OneLevel ? 2 : 3;
      for (Direction step1 : {T, N}) {
        for (Direction tx : {T, N}) {
          for (unsigned init = 0; init < (1u << n); ++init) {
            const bool got = decode_probe_mispredicts(m, step1, tx, init);
            v.check(got == (tx == step1), std::string(to_string(m)) + " " + to_char(step1) + to_char(tx));
            ++cases;
          }
        }
      }
    }
    v.detail << " " << cases << " cases (both directions x both outcomes x every initial state)";
  });

  criterion(5, "speculative update persistence", 1.0, [](Verdict& v) {
    const auto s = make_nested_scenario(1);
    for (UpdatePolicy p : {UpdatePolicy::SpeculativeResolveTime, UpdatePolicy::CommitTime,
                           UpdatePolicy::RestoreOnSquash, UpdatePolicy::ShadowPht}) {
      const auto o = run_nested_scenario(s, with_policy(p));
      const auto child = o.attack.squashed_at(s.child);
      v.check(!child.empty() && child.front().resolved, std::string(to_string(p)) + ": child resolved speculatively");
      if (child.empty()) continue;
      const auto& c = child.front();
      const bool moved = o.before.entry(c.mode, c.index) != o.after.entry(c.mode, c.index);
      // Every changed entry other than the committed parent's own update.
      const auto parent = o.attack.at(s.parent);
      std::size_t foreign = 0;
      for (const auto& d : diff_pht(o.before, o.after)) {
        const bool is_parent = !parent.empty() && d.table == parent.front().mode && d.index == parent.front().index;
        foreign += !is_parent;
      }
      if (p == UpdatePolicy::SpeculativeResolveTime) {
        v.check(moved, "resolve-time child entry moved");
      } else {
        v.check(!moved && foreign == 0, std::string(to_string(p)) + " identical to snapshot");
      }
      v.detail << ' ' << to_string(p) << (moved ? ":moved" : ":unchanged");
    }
  });

  criterion(6, "covert channel", 10.0, [](Verdict& v) {
    const auto msg = random_bits(1024, 2024);
    for (Mode m : {Mode::OneLevel, Mode::HistoryBased}) {
      const auto r = covert_send_receive(msg, mode_cfg(m));
      v.detail << ' ' << to_string(m) << " errors=" << r.errors;
      v.check(r.errors == 0 && r.recovered == msg, std::string(to_string(m)) + " noiseless");
    }
    double prev = -1;
    for (double sigma : {10.0, 20.0, 40.0}) {
      const auto r = covert_send_receive(msg, mode_cfg(Mode::HistoryBased), {}, {}, LatencyModel::gaussian(sigma, 99));
      const double rate = 1.0 - r.accuracy();
      v.detail << " sigma" << sigma << "=" << fmt(rate);
      v.check(rate > 0.0, "positive error rate");
      v.check(rate > prev, "increasing in sigma");
      prev = rate;
    }
  });

  criterion(7, "side channel", 30.0, [](Verdict& v) {
    const std::vector<int> listing{1, 1, 0, 1, 1, 1, 0, 0, 0, 1};
    for (Mode m : {Mode::OneLevel, Mode::HistoryBased}) {
      v.check(side_channel(VictimShape::BoundsCheck, listing, mode_cfg(m)).recovered == listing,
              std::string(to_string(m)) + " listing secret");
      const auto secret = random_bits(500, 500 + static_cast<int>(m));
      const auto r = side_channel(VictimShape::BoundsCheck, secret, mode_cfg(m));
      v.detail << ' ' << to_string(m) << "=" << fmt(r.accuracy());
      v.check(r.accuracy() == 1.0, std::string(to_string(m)) + " 500 trials exact");
    }
    const auto secret = random_bits(500, 77);
    for (UpdatePolicy p : {UpdatePolicy::CommitTime, UpdatePolicy::RestoreOnSquash, UpdatePolicy::ShadowPht,
                           UpdatePolicy::ObfuscateOnSquash}) {
      for (Mode m : {Mode::OneLevel, Mode::HistoryBased}) {
        const double acc = side_channel(VictimShape::BoundsCheck, secret, mode_cfg(m), {}, with_policy(p)).accuracy();
        v.detail << ' ' << to_string(p) << '/' << (m == Mode::OneLevel ? "1L" : "H") << "=" << fmt(acc);
        v.check(acc >= 0.45 && acc <= 0.55, std::string(to_string(p)) + " at chance");
      }
    }
  });

  criterion(8, "indirect-call variant", 10.0, [](Verdict& v) {
    const std::vector<int> planted{1, 0, 1, 1, 0, 0, 1, 0};
    for (Mode m : {Mode::OneLevel, Mode::HistoryBased}) {
      const auto r = side_channel(VictimShape::IndirectCall, planted, mode_cfg(m));
      v.detail << ' ' << to_string(m) << ' ' << (r.trials - r.errors) << "/8";
      v.check(r.recovered == planted, std::string(to_string(m)) + " 8/8");
    }
    auto cfg = mode_cfg(Mode::OneLevel);
    cfg.poison = false;
    const auto secret = random_bits(500, 808);
    const double acc = side_channel(VictimShape::IndirectCall, secret, cfg).accuracy();
    v.detail << " unpoisoned=" << fmt(acc);
    v.check(acc >= 0.45 && acc <= 0.55, "unpoisoned at chance");
  });

  criterion(9, "gadget scanner", 10.0, [](Verdict& v) {
    const std::string dir = std::string(SPECPHT_DATA_DIR) + "/corpus/";
    std::ifstream in(dir + "manifest.json");
    const auto man = nlohmann::json::parse(in);
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& entry : man.at("files")) {
      const auto rep = scan_file(dir + entry.at("file").get<std::string>());
      for (auto [key, scan] : {std::pair{"v1", GadgetScan::V1}, {"v2", GadgetScan::V2}, {"ss", GadgetScan::SS}}) {
        std::set<std::uint64_t> want, got;
        for (const auto& a : entry.at(key)) want.insert(std::stoull(a.get<std::string>(), nullptr, 16));
        for (const auto& s : rep.sites) {
          if (s.scan == scan) got.insert(s.addr);
        }
        for (auto a : got) (want.count(a) ? tp : fp)++;
        for (auto a : want) fn += got.count(a) == 0;
      }
    }
    const double precision = tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    v.detail << " precision=" << fmt(precision) << " recall=" << fmt(recall);
    v.check(tp > 0 && fp == 0 && fn == 0, "manifest agreement");
    std::mt19937_64 rng(1000);
    std::size_t violations = 0, ss_sites = 0;
    for (int t = 0; t < 1000; ++t) {
      GadgetScanner sc(random_listing(rng, 48));
      const auto v2 = sc.scan_v2();
      const auto ss = sc.scan_smotherspectre();
      ss_sites += ss.size();
      for (const auto& s : ss) {
        const bool found = std::any_of(v2.begin(), v2.end(), [&](const GadgetSite& x) { return x.addr == s.addr; });
        violations += !found;
      }
    }
    v.detail << " subset-law violations=" << violations << " over 1000 inputs (" << ss_sites << " ss sites)";
    v.check(violations == 0 && ss_sites > 0, "subset law");
  });

  criterion(10, "resolve-time update beats commit-time on nested loop", 5.0, [](Verdict& v) {
    const auto prog = load_program(std::string(SPECPHT_DATA_DIR) + "/workloads/nested_loop.prog");
    std::map<UpdatePolicy, std::uint64_t> mis;
    for (UpdatePolicy p : {UpdatePolicy::SpeculativeResolveTime, UpdatePolicy::CommitTime}) {
      PredictorState ps;
      ps.randomize_reset(1);
      Engine e(prog, ps, with_policy(p));
      e.run(prog.schedule);
      mis[p] = e.counts().at(1).mispredictions;
      v.detail << ' ' << to_string(p) << "=" << mis[p];
    }
    v.check(mis[UpdatePolicy::SpeculativeResolveTime] < mis[UpdatePolicy::CommitTime], "strictly fewer");
  });

  criterion(11, "determinism of every subcommand", 60.0, [](Verdict& v) {
    const auto root = std::filesystem::temp_directory_path() / ("specpht_accept_" + std::to_string(::getpid()));
    std::ostringstream sink;
    const std::vector<std::pair<std::string, std::function<void(const Experiment&)>>> cmds{
        {"speculative-update", [](const Experiment& e) { cmd_speculative_update(e); }},
        {"probe-mode", [](const Experiment& e) { cmd_probe_mode(e); }},
        {"probe-ghr", [](const Experiment& e) { cmd_probe_ghr(e); }},
        {"covert", [](const Experiment& e) { cmd_covert(e); }},
        {"sidechannel-v1", [](const Experiment& e) { cmd_sidechannel_v1(e); }},
        {"sidechannel-v2", [](const Experiment& e) { cmd_sidechannel_v2(e); }},
        {"defense-eval", [](const Experiment& e) { cmd_defense_eval(e); }},
        {"scan", [](const Experiment& e) {
           cmd_scan(e, {std::string(SPECPHT_DATA_DIR) + "/corpus"}, ScanOptions{});
         }},
    };
    for (const auto& [name, fn] : cmds) {
      std::map<std::string, std::string> runs[2];
      for (int k = 0; k < 2; ++k) {
        Experiment ex;
        ex.name = name;
        ex.seed = 12345;
        ex.log = &sink;
        ex.latency = LatencyModel::gaussian(5.0, 0);
        ex.out_dir = root / (name + "_" + std::to_string(k));
        ex.finalize();
        fn(ex);
        runs[k] = read_dir(ex.out_dir);
      }
      const bool same = !runs[0].empty() && runs[0] == runs[1];
      v.check(same, name);
      v.detail << ' ' << name << (same ? ":same" : ":differs");
    }
    std::filesystem::remove_all(root);
  });

  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
  return failures;
}
