#include <gtest/gtest.h>

#include <sstream>
#include <vector>

#include "specpht/predictor.hpp"

using namespace specpht;

namespace {

constexpr Direction T = Direction::Taken;
constexpr Direction N = Direction::NotTaken;

PredictorConfig small_config() {
  PredictorConfig cfg;
  cfg.pht_entries_one_level = 16;
  cfg.pht_entries_history = 16;
  cfg.ghr_depth = 4;
  cfg.target_bits_per_entry = 2;
  cfg.btb_entries = 16;
  return cfg;
}

int run_sequence(PredictorState& p, Address addr, const std::string& seq) {
  int mis = 0;
  for (char c : seq) {
    const Direction d = c == 'T' ? T : N;
    mis += p.execute(addr, d, addr + 0x40).direction != d;
  }
  return mis;
}

}  // namespace

TEST(IndexOneLevel, MaskedAddressBits) {
  PredictorConfig cfg;
  cfg.alignment_shift = 0;
  cfg.pht_entries_one_level = 1024;
  EXPECT_EQ(index_one_level(0x400010, cfg), 0x10u);
  EXPECT_EQ(index_one_level(0x400010, cfg), index_one_level(0x400010, cfg));
  // Differs only above the ten index bits.
  EXPECT_EQ(index_one_level(0x400010, cfg), index_one_level(0x7c00010, cfg));

  PredictorConfig aligned;
  EXPECT_EQ(index_one_level(0x400010, aligned), 0x4u);
  EXPECT_EQ(index_one_level(0x400010, aligned), index_one_level(0x400010 + (1024 << 2), aligned));
}

TEST(IndexHistory, ZeroHistoryIsAddressOnly) {
  PredictorConfig cfg;
  GlobalHistoryRegister ghr(cfg);
  for (Address a : {0x400000ull, 0x400124ull, 0x7fff0ull}) {
    EXPECT_EQ(index_history(a, ghr, cfg), (a >> 2) & (cfg.pht_entries_history - 1));
  }
}

TEST(IndexHistory, EqualInputsCollide) {
  PredictorConfig cfg;
  GlobalHistoryRegister a(cfg), b(cfg);
  for (Address t : {0x10ull, 0x24ull, 0x38ull}) b.insert_taken(t);  // stale content
  for (int i = 0; i < 12; ++i) {
    a.insert_taken(0x1000 + 4 * i);
    b.insert_taken(0x1000 + 4 * i);
  }
  EXPECT_EQ(a, b);
  EXPECT_EQ(index_history(0x400200, a, cfg), index_history(0x400200, b, cfg));
}

TEST(IndexHistory, SingleEntryPerturbationAlwaysMovesIndex) {
  // Exhaustive over every 4-entry history and every single-entry change, at a
  // 16-entry table, for every address that maps to a distinct slot.
  const PredictorConfig cfg = small_config();
  const unsigned depth = cfg.ghr_depth;
  const unsigned values = 1u << cfg.target_bits_per_entry;
  unsigned total = 1;
  for (unsigned i = 0; i < depth; ++i) total *= values;
  for (unsigned content = 0; content < total; ++content) {
    std::vector<std::uint32_t> base;
    for (unsigned i = 0, c = content; i < depth; ++i, c /= values) base.push_back(c % values);
    for (unsigned pos = 0; pos < depth; ++pos) {
      for (unsigned v = 0; v < values; ++v) {
        if (v == base[pos]) continue;
        auto changed = base;
        changed[pos] = v;
        GlobalHistoryRegister g1(cfg), g2(cfg);
        g1.assign(base);
        g2.assign(changed);
        for (Address a = 0; a < 16 * 4; a += 4) {
          ASSERT_NE(index_history(a, g1, cfg), index_history(a, g2, cfg));
        }
      }
    }
  }
}

TEST(Ghr, InsertAndEvict) {
  PredictorConfig cfg;
  GlobalHistoryRegister g(cfg);
  g.insert_taken(0x40000c);
  EXPECT_EQ(g.newest(), (0x40000cu >> 2) & 3u);
  GlobalHistoryRegister fresh(cfg);
  std::vector<Address> targets;
  for (int i = 0; i < 12; ++i) targets.push_back(0x401000 + 4 * (i * 7 % 5));
  for (Address t : targets) {
    g.insert_taken(t);
    fresh.insert_taken(t);
  }
  EXPECT_EQ(g, fresh);  // twelve inserts fully determine the contents
  GlobalHistoryRegister h(cfg);
  h.insert_taken(0x4);  // entry value 1
  for (int i = 0; i < 12; ++i) h.insert_taken(0);
  for (auto e : h.entries()) EXPECT_EQ(e, 0u);
}

TEST(Ghr, NotTakenResolutionLeavesHistory) {
  PredictorState p;
  const auto before = p.ghr();
  p.execute(0x400100, N, 0x400200);
  EXPECT_EQ(p.ghr(), before);
  p.execute(0x400100, T, 0x400204);
  EXPECT_NE(p.ghr(), before);
}

TEST(SelectAndPredict, UsesSelectedTable) {
  PredictorState p;
  const Address a = 0x400100;
  p.entry(Mode::OneLevel, index_one_level(a, p.config())).set(0);
  p.entry(Mode::HistoryBased, p.index_for(Mode::HistoryBased, a)).set(7);
  auto pr = p.predict(a);
  EXPECT_EQ(pr.mode, Mode::OneLevel);
  EXPECT_EQ(pr.direction, T);

  p.force_mode(a, Mode::HistoryBased);
  p.entry(Mode::HistoryBased, p.index_for(Mode::HistoryBased, a)).set(5);
  pr = p.predict(a);
  EXPECT_EQ(pr.mode, Mode::HistoryBased);
  EXPECT_EQ(pr.direction, N);

  p.randomize_reset(3);
  EXPECT_EQ(p.predict(a).mode, Mode::OneLevel);
}

TEST(RecordResolution, ThirdMispredictionFlips) {
  PredictorConfig cfg;
  cfg.selector_rule = SelectorRule::Every;
  PredictorState p(cfg);
  const Address a = 0x400100;
  p.entry(Mode::OneLevel, index_one_level(a, cfg)).set(0);
  // ST: N, N mispredict; then the counter predicts N and T mispredicts.
  EXPECT_EQ(run_sequence(p, a, "NN"), 2);
  EXPECT_EQ(p.mode_for(a), Mode::OneLevel);
  EXPECT_EQ(p.selector(a).mispredict_accumulator, 2u);
  EXPECT_EQ(run_sequence(p, a, "T"), 1);
  EXPECT_EQ(p.mode_for(a), Mode::HistoryBased);
}

TEST(RecordResolution, AlternatingSequenceFlipsFromEveryInitialState) {
  for (auto rule : {SelectorRule::PatternChange, SelectorRule::Every}) {
    for (unsigned init = 0; init < 4; ++init) {
      PredictorConfig cfg;
      cfg.selector_rule = rule;
      PredictorState p(cfg);
      const Address a = 0x400100;
      p.entry(Mode::OneLevel, index_one_level(a, cfg)).set(init);
      SaturatingCounter alone(2, init);
      int one_level_mis = 0;
      for (char c : std::string("TNTNTN")) {
        const Direction d = c == 'T' ? T : N;
        one_level_mis += alone.predict() != d;
        alone.update(d);
      }
      EXPECT_TRUE(one_level_mis == 3 || one_level_mis == 6) << init;
      run_sequence(p, a, "TNTNTN");
      EXPECT_EQ(p.mode_for(a), Mode::HistoryBased) << init;
    }
  }
}

TEST(RecordResolution, WarmupMispredictionsDoNotCountUnderPatternChange) {
  PredictorState p;
  const Address a = 0x400100;
  p.entry(Mode::OneLevel, index_one_level(a, p.config())).set(3);
  EXPECT_EQ(run_sequence(p, a, "TT"), 2);  // only the first follows a change
  EXPECT_EQ(p.selector(a).mispredict_accumulator, 1u);
  EXPECT_EQ(p.mode_for(a), Mode::OneLevel);
}

TEST(RecordResolution, HistoryModeMispredictionsDoNotAccumulate) {
  PredictorState p;
  const Address a = 0x400100;
  p.force_mode(a, Mode::HistoryBased);
  run_sequence(p, a, "TNTNTNTN");
  EXPECT_EQ(p.selector(a).mispredict_accumulator, 0u);
  EXPECT_EQ(p.mode_for(a), Mode::HistoryBased);
}

TEST(RecordResolution, PerBranchSelectorIsolatesOtherBranches) {
  PredictorState p;
  run_sequence(p, 0x400100, "TNTNTN");
  EXPECT_EQ(p.mode_for(0x400100), Mode::HistoryBased);
  EXPECT_EQ(p.mode_for(0x400104), Mode::OneLevel);

  PredictorConfig global;
  global.selector_scope = SelectorScope::Global;
  PredictorState g(global);
  run_sequence(g, 0x400100, "TNTNTN");
  EXPECT_EQ(g.mode_for(0x400104), Mode::HistoryBased);
}

TEST(RecordResolution, AccumulatorNeverDecreasesBetweenResets) {
  std::mt19937_64 rng(11);
  PredictorState p;
  p.randomize_reset(5);
  const Address a = 0x400300;
  unsigned last = 0;
  for (int i = 0; i < 200; ++i) {
    p.execute(a, rng() & 1 ? T : N, a + 8);
    ASSERT_GE(p.selector(a).mispredict_accumulator, last);
    last = p.selector(a).mispredict_accumulator;
  }
}

TEST(RandomizeReset, DeterministicAndOneLevel) {
  PredictorState a, b;
  run_sequence(a, 0x400100, "TNTNTN");
  a.randomize_reset(42);
  b.randomize_reset(42);
  EXPECT_EQ(a.table(Mode::OneLevel), b.table(Mode::OneLevel));
  EXPECT_EQ(a.table(Mode::HistoryBased), b.table(Mode::HistoryBased));
  EXPECT_EQ(a.ghr(), b.ghr());
  EXPECT_EQ(a.mode_for(0x400100), Mode::OneLevel);
  PredictorState c;
  c.randomize_reset(43);
  EXPECT_NE(a.table(Mode::OneLevel), c.table(Mode::OneLevel));
}

TEST(RandomizeReset, TrainedStrongThenNotTakenShowsTwoMispredictions) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    PredictorState p;
    p.randomize_reset(seed);
    const Address a = 0x400500;
    run_sequence(p, a, "TTTT");
    EXPECT_EQ(run_sequence(p, a, "NNNNNN"), 2) << seed;
    EXPECT_EQ(p.mode_for(a), Mode::OneLevel);
  }
}

TEST(Btb, LookupAndPoisoning) {
  PredictorConfig cfg;
  BranchTargetBuffer btb(cfg);
  EXPECT_FALSE(btb.lookup(0x400100).has_value());
  btb.update(0x400100, 0x401000);
  ASSERT_TRUE(btb.lookup(0x400100).has_value());
  EXPECT_EQ(*btb.lookup(0x400100), 0x401000u);
  // Another process at a congruent address (same index and partial tag).
  const Address congruent = 0x400100 + (Address{1} << (2 + 9 + 16));
  EXPECT_EQ(btb.lookup(congruent).value_or(0), 0x401000u);
  // Same index, different tag: miss.
  EXPECT_FALSE(btb.lookup(0x400100 + (512 << 2)).has_value());
  btb.update(0x400100 + (512 << 2), 0x402000);
  EXPECT_FALSE(btb.lookup(0x400100).has_value());
}

TEST(Config, KeyValueFileRoundTrip) {
  std::istringstream in(
      "# predictor\n"
      "ghr_depth = 8\n"
      "target_bits_per_entry = 3  # B_t\n"
      "pht_entries_history = 0x2000\n"
      "selector_rule = every\n");
  const auto cfg = predictor_config_from(read_key_values(in));
  EXPECT_EQ(cfg.ghr_depth, 8u);
  EXPECT_EQ(cfg.target_bits_per_entry, 3u);
  EXPECT_EQ(cfg.ghr_bits(), 24u);
  EXPECT_EQ(cfg.pht_entries_history, 0x2000u);
  EXPECT_EQ(cfg.selector_rule, SelectorRule::Every);
  EXPECT_EQ(cfg.one_level_bits, 2u);
}

TEST(Config, Errors) {
  std::istringstream unknown("bogus = 1\n");
  EXPECT_THROW(predictor_config_from(read_key_values(unknown)), ConfigError);
  std::istringstream bad_pow2("pht_entries_history = 1000\n");
  EXPECT_THROW(predictor_config_from(read_key_values(bad_pow2)), ConfigError);
  std::istringstream threshold("transition_threshold = 0\n");
  EXPECT_THROW(predictor_config_from(read_key_values(threshold)), ConfigError);
  std::istringstream noeq("ghr_depth 12\n");
  EXPECT_THROW(read_key_values(noeq), ConfigError);
}
