#include <gtest/gtest.h>

#include <random>

#include "specpht/attacks.hpp"

using namespace specpht;

namespace {

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

EngineConfig policy(UpdatePolicy p) {
  EngineConfig e;
  e.policy = p;
  return e;
}

const std::vector<int> kListingSecret{1, 1, 0, 1, 1, 1, 0, 0, 0, 1};

}  // namespace

TEST(SideChannel, RecoversListingSecretInBothModes) {
  for (Mode m : {Mode::OneLevel, Mode::HistoryBased}) {
    const auto r = side_channel(VictimShape::BoundsCheck, kListingSecret, mode_cfg(m));
    EXPECT_EQ(r.recovered, kListingSecret) << to_string(m);
    EXPECT_EQ(r.errors, 0u);
    EXPECT_EQ(r.trace.size(), kListingSecret.size());
  }
}

TEST(SideChannel, DecodeProbeIndexFollowsCounterWidth) {
  AttackLab one(VictimShape::BoundsCheck, {0}, mode_cfg(Mode::OneLevel));
  AttackLab hist(VictimShape::BoundsCheck, {0}, mode_cfg(Mode::HistoryBased));
  EXPECT_EQ(one.probe_runs(), 2u);
  EXPECT_EQ(hist.probe_runs(), 4u);
  EXPECT_EQ(one.training_runs(), 3u);
  EXPECT_EQ(hist.training_runs(), 7u);
}

TEST(SideChannel, RandomSecretsNoiselessAreExact) {
  for (Mode m : {Mode::OneLevel, Mode::HistoryBased}) {
    const auto secret = random_bits(120, 17);
    auto cfg = mode_cfg(m);
    cfg.seed = 5;
    const auto r = side_channel(VictimShape::BoundsCheck, secret, cfg);
    EXPECT_EQ(r.errors, 0u) << to_string(m);
  }
}

TEST(SideChannel, MitigationsDecodeOnlyTheTrainedDirection) {
  for (UpdatePolicy p : {UpdatePolicy::CommitTime, UpdatePolicy::RestoreOnSquash, UpdatePolicy::ShadowPht}) {
    const auto r = side_channel(VictimShape::BoundsCheck, kListingSecret, mode_cfg(Mode::OneLevel), {}, policy(p));
    for (int b : r.recovered) EXPECT_EQ(b, 0) << to_string(p);
  }
}

TEST(SideChannel, ObfuscationDecodesAtChance) {
  const auto secret = random_bits(300, 4);
  const auto r = side_channel(VictimShape::BoundsCheck, secret, mode_cfg(Mode::OneLevel), {},
                              policy(UpdatePolicy::ObfuscateOnSquash));
  EXPECT_GT(r.accuracy(), 0.35);
  EXPECT_LT(r.accuracy(), 0.65);
}

TEST(SideChannel, SlowTransmitterIsAnAttackError) {
  auto cfg = mode_cfg(Mode::OneLevel);
  cfg.transmitter_delay = 100;
  EXPECT_THROW(side_channel(VictimShape::BoundsCheck, {1, 0}, cfg), AttackError);
}

TEST(SideChannel, CorruptedPreambleLosesTheCollision) {
  std::mt19937_64 rng(31);
  const auto secret = random_bits(64, 8);
  for (int trial = 0; trial < 6; ++trial) {
    auto cfg = mode_cfg(Mode::HistoryBased);
    cfg.victim_base = 0x400000 + 0x10000 * (rng() % 64) + 4 * (rng() % 64);
    cfg.corrupt_preamble_entry = static_cast<unsigned>(rng() % 11);
    const auto r = side_channel(VictimShape::BoundsCheck, secret, cfg);
    for (int b : r.recovered) EXPECT_EQ(b, 0);
    EXPECT_GT(r.accuracy(), 0.3);
    EXPECT_LT(r.accuracy(), 0.7);
    cfg.corrupt_preamble_entry.reset();
    EXPECT_EQ(side_channel(VictimShape::BoundsCheck, secret, cfg).errors, 0u);
  }
}

TEST(SideChannelV2, PoisonedBtbRecoversSecret) {
  const std::vector<int> secret{1, 0, 1, 1, 0, 0, 1, 0};
  for (Mode m : {Mode::OneLevel, Mode::HistoryBased}) {
    const auto r = side_channel(VictimShape::IndirectCall, secret, mode_cfg(m));
    EXPECT_EQ(r.recovered, secret) << to_string(m);
  }
}

TEST(SideChannelV2, UnpoisonedAndBenignPoisonSeeOnlyThePreset) {
  const std::vector<int> secret{1, 0, 1, 1, 0, 0, 1, 0};
  auto cfg = mode_cfg(Mode::OneLevel);
  cfg.poison = false;
  for (int b : side_channel(VictimShape::IndirectCall, secret, cfg).recovered) EXPECT_EQ(b, 0);
  cfg.poison = true;
  cfg.benign_poison = true;
  AttackLab lab(VictimShape::IndirectCall, secret, cfg);
  lab.establish_mode();
  for (unsigned k = 0; k < lab.training_runs(); ++k) lab.attacker_exec(Direction::Taken);
  const auto idx = index_one_level(lab.layout().congruent, lab.predictor().config());
  const auto before = lab.predictor().entry(Mode::OneLevel, idx);
  lab.victim_trigger(0);
  EXPECT_EQ(lab.predictor().entry(Mode::OneLevel, idx), before);
}

TEST(Covert, TransmitsShortMessage) {
  for (Mode m : {Mode::OneLevel, Mode::HistoryBased}) {
    const auto r = covert_send_receive({0, 1, 0}, mode_cfg(m));
    EXPECT_EQ(r.recovered, (std::vector<int>{0, 1, 0})) << to_string(m);
  }
}

TEST(Covert, EmptyMessage) {
  const auto r = covert_send_receive({}, mode_cfg(Mode::HistoryBased));
  EXPECT_TRUE(r.recovered.empty());
  EXPECT_EQ(r.errors, 0u);
}

TEST(Covert, RandomMessageBothModes) {
  const auto msg = random_bits(256, 99);
  for (Mode m : {Mode::OneLevel, Mode::HistoryBased}) {
    EXPECT_EQ(covert_send_receive(msg, mode_cfg(m)).errors, 0u) << to_string(m);
  }
}

TEST(Covert, SparseResetsDriftOutOfOneLevelMode) {
  auto cfg = mode_cfg(Mode::OneLevel);
  cfg.reset_cadence = 64;
  try {
    covert_send_receive(random_bits(64, 1), cfg);
    FAIL() << "expected TransmissionError";
  } catch (const TransmissionError& e) {
    EXPECT_GT(e.bit(), 0u);
    EXPECT_LT(e.bit(), 64u);
  }
}

TEST(Covert, NoiseCausesErrors) {
  const auto msg = random_bits(256, 3);
  const auto r = covert_send_receive(msg, mode_cfg(Mode::HistoryBased), {}, {}, LatencyModel::gaussian(20.0, 7));
  EXPECT_GT(r.errors, 0u);
}

TEST(StateDiagram, DecodeProbeMispredictsIffTransmitterMatchedStep1) {
  for (Mode m : {Mode::OneLevel, Mode::HistoryBased}) {
    const unsigned n = m == Mode::OneLevel ? 2 : 3;
    for (Direction step1 : {Direction::Taken, Direction::NotTaken}) {
      for (Direction tx : {Direction::Taken, Direction::NotTaken}) {
        for (unsigned init = 0; init < (1u << n); ++init) {
          EXPECT_EQ(decode_probe_mispredicts(m, step1, tx, init), tx == step1)
              << to_string(m) << " step1=" << to_char(step1) << " tx=" << to_char(tx) << " init=" << init;
        }
      }
    }
  }
}

TEST(ProbeMode, FreshResetReadsOneLevel) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto cfg = mode_cfg(Mode::OneLevel);
    cfg.seed = seed;
    AttackLab lab(VictimShape::BoundsCheck, {0}, cfg);
    lab.establish_mode();
    const auto r = probe_mode(lab);
    EXPECT_EQ(r.mode, Mode::OneLevel) << seed;
    EXPECT_EQ(r.last_k_mispredictions, 2u);
  }
}

TEST(ProbeMode, AlternatingExerciseReadsHistory) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto cfg = mode_cfg(Mode::OneLevel);
    cfg.seed = seed;
    AttackLab lab(VictimShape::BoundsCheck, {0}, cfg);
    lab.establish_mode();
    for (char c : std::string("TNTNTN")) lab.attacker_exec(parse_direction(c));
    const auto r = probe_mode(lab);
    EXPECT_EQ(r.mode, Mode::HistoryBased) << seed;
    EXPECT_EQ(r.last_k_mispredictions, 4u);
  }
}

TEST(ProbeMode, TwoMispredictionExerciseStaysOneLevel) {
  AttackLab lab(VictimShape::BoundsCheck, {0}, mode_cfg(Mode::OneLevel));
  lab.establish_mode();
  // From weakly-not-taken: T mispredicts, N mispredicts, then the run settles.
  const auto idx = index_one_level(lab.layout().congruent, lab.predictor().config());
  lab.predictor().entry(Mode::OneLevel, idx).set(2);
  unsigned misses = 0;
  for (char c : std::string("TNNN")) misses += lab.attacker_exec(parse_direction(c)).mispredicted;
  EXPECT_EQ(misses, 2u);
  EXPECT_EQ(lab.slot_mode(), Mode::OneLevel);
}

TEST(ProbeMode, RejectsShortTestWindow) {
  AttackLab lab(VictimShape::BoundsCheck, {0}, mode_cfg(Mode::OneLevel));
  ProbeConfig pc;
  pc.test_K = 4;
  EXPECT_THROW(probe_mode(lab, pc), ConfigError);
}

TEST(ProbeGhrDepth, FindsConfiguredDepth) {
  for (unsigned depth : {4u, 8u, 12u}) {
    PredictorConfig pc;
    pc.ghr_depth = depth;
    const auto r = probe_ghr_depth(pc, {}, 20);
    EXPECT_EQ(r.depth, depth);
    for (unsigned n = 1; n < depth; ++n) EXPECT_FALSE(r.collision[n - 1]);
  }
}

TEST(ProbeGhrDepth, TooSmallSearchIsAProbeError) {
  PredictorConfig pc;
  EXPECT_THROW(probe_ghr_depth(pc, {}, 8), ProbeError);
}
