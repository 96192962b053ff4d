#include "prosody_mi/features.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "prosody_mi/error.hpp"
#include "test_util.hpp"

namespace pm = prosody_mi;
namespace corpus = prosody_mi::corpus;
namespace features = prosody_mi::features;

namespace {

constexpr int kFs = 16000;

// Three words of steady sawtooth "voice" at 100, 150 and 200 Hz separated by
// silence, 0.25 s each, pauses 0.125 s and 0.
struct Synthetic {
  corpus::Utterance utt;
  std::vector<double> samples;
};

Synthetic make_synthetic() {
  Synthetic s;
  s.utt.utterance_id = "spk_1";
  s.utt.sample_rate_hz = kFs;
  const double starts[] = {0.125, 0.5, 0.75};
  const double freqs[] = {100.0, 150.0, 200.0};
  const char* words[] = {"alpha", "beta", "cat"};
  s.samples.assign(kFs, 0.0);
  for (int w = 0; w < 3; ++w) {
    corpus::WordToken t;
    t.utterance_id = "spk_1";
    t.index_in_utterance = w;
    t.text = words[w];
    t.start_s = starts[w];
    t.end_s = starts[w] + 0.25;
    s.utt.tokens.push_back(t);
    const auto a = static_cast<std::size_t>(t.start_s * kFs);
    const auto b = static_cast<std::size_t>(t.end_s * kFs);
    for (std::size_t i = a; i < b; ++i) {
      s.samples[i] = 0.4 * (2.0 * std::fmod(freqs[w] * (i - a) / kFs, 1.0) - 1.0);
    }
  }
  return s;
}

}  // namespace

TEST(Extract, ScalarFeatures) {
  const auto s = make_synthetic();
  corpus::Lexicon lex;
  lex.add("alpha", 2, 0);
  const auto recs = features::extract_utterance(s.utt, s.samples, kFs, lex, {3.0, 1.0, 2.0}, {});
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_NEAR(recs[0].duration_per_syllable, 0.125, 1e-12);
  EXPECT_EQ(recs[0].syllable_source, corpus::SyllableSource::kLexicon);
  EXPECT_EQ(recs[2].syllable_source, corpus::SyllableSource::kHeuristic);
  EXPECT_NEAR(recs[0].pause_after_s, 0.125, 1e-12);
  EXPECT_EQ(recs[1].pause_after_s, 0.0);
  EXPECT_EQ(recs[2].pause_after_s, 0.0);
  EXPECT_EQ(recs[0].prominence_relative, 0.0);
  EXPECT_DOUBLE_EQ(recs[1].prominence_relative, -2.0);
  EXPECT_DOUBLE_EQ(recs[2].prominence_relative, 0.0);
  for (const auto& r : recs) EXPECT_TRUE(std::isfinite(r.energy));
}

TEST(Extract, SteadyPitchGivesConstantContour) {
  const auto s = make_synthetic();
  const auto recs = features::extract_utterance(s.utt, s.samples, kFs, {}, {}, {});
  const double expected[] = {100.0, 150.0, 200.0};
  for (int w = 0; w < 3; ++w) {
    ASSERT_EQ(recs[w].f0_dct.size(), 8u);
    // 10 * mean log2 f0 for an orthonormal DCT over 100 points.
    EXPECT_NEAR(recs[w].f0_dct[0] / 10.0, std::log2(expected[w]), 0.05) << w;
    EXPECT_TRUE(std::isnan(recs[w].prominence));
  }
}

TEST(Extract, SilentUtteranceLosesF0Only) {
  auto s = make_synthetic();
  std::fill(s.samples.begin(), s.samples.end(), 0.0);
  const auto recs = features::extract_utterance(s.utt, s.samples, kFs, {}, {}, {});
  for (const auto& r : recs) {
    for (double c : r.f0_dct) EXPECT_TRUE(std::isnan(c));
    EXPECT_NEAR(r.energy, std::log(1e-8), 1e-9);
  }
}

TEST(Extract, ProminenceLengthMismatch) {
  const auto s = make_synthetic();
  EXPECT_THROW(features::extract_utterance(s.utt, s.samples, kFs, {}, {1.0}, {}),
               pm::ValidationError);
}

TEST(Table, ZScoreAndRoundTrip) {
  const auto s = make_synthetic();
  features::FeatureTable table;
  table.dct_k = 4;
  features::ExtractionParams params;
  params.dct_k = 4;
  table.records = features::extract_utterance(s.utt, s.samples, kFs, {}, {1.0, 2.0, 4.0}, params);
  std::set<corpus::TokenKey> train;
  for (const auto& r : table.records) train.insert(r.key);
  features::apply_zscore(table, train, {"energy", "duration_per_syllable", "prominence_relative"});
  double mean = 0.0;
  for (const auto& r : table.records) mean += r.energy;
  EXPECT_NEAR(mean / 3.0, 0.0, 1e-12);
  EXPECT_TRUE(features::feature_is_zscored(table, "energy"));
  EXPECT_FALSE(features::feature_is_zscored(table, "pause"));

  pm::testing::TempDir dir;
  features::write_feature_table(dir.file("f.csv"), dir.file("z.json"), table, "digest=abc seed=1");
  const auto text = pm::testing::read_bytes(dir.file("f.csv"));
  EXPECT_EQ(text.rfind("# digest=abc seed=1\nutterance_id,index_in_utterance,energy,"
                       "duration_per_syllable,pause_after_s,prominence,prominence_relative,"
                       "f0_dct_0,f0_dct_1,f0_dct_2,f0_dct_3\n",
                       0),
            0u);
  const auto back = features::read_feature_table(dir.file("f.csv"), dir.file("z.json"));
  ASSERT_EQ(back.records.size(), 3u);
  EXPECT_EQ(back.dct_k, 4);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.records[i].energy, table.records[i].energy);
    EXPECT_EQ(back.records[i].f0_dct, table.records[i].f0_dct);
  }
  EXPECT_EQ(back.zscore.at("energy").mean, table.zscore.at("energy").mean);

  features::write_feature_table(dir.file("g.csv"), dir.file("y.json"), back, "digest=abc seed=1");
  EXPECT_EQ(pm::testing::read_bytes(dir.file("g.csv")), text);
}

TEST(Table, ConstantTrainColumnRejected) {
  features::FeatureTable table;
  table.dct_k = 0;
  for (int i = 0; i < 3; ++i) {
    features::ProsodyRecord r;
    r.key = {"u", i};
    r.energy = 1.0;
    table.records.push_back(r);
  }
  std::set<corpus::TokenKey> train{{"u", 0}, {"u", 1}, {"u", 2}};
  EXPECT_THROW(features::apply_zscore(table, train, {"energy"}), pm::DegenerateDataError);
}

TEST(Table, TargetsSkipMissingValues) {
  features::FeatureTable table;
  table.dct_k = 2;
  for (int i = 0; i < 3; ++i) {
    features::ProsodyRecord r;
    r.key = {"u", i};
    r.pause_after_s = 0.1 * i;
    r.f0_dct = {1.0, 2.0};
    table.records.push_back(r);
  }
  table.records[1].f0_dct[1] = std::nan("");
  const auto f0 = features::target_table(table, "f0");
  EXPECT_EQ(f0.size(), 2u);
  EXPECT_EQ(f0.count({"u", 1}), 0u);
  const auto pause = features::target_table(table, "pause");
  EXPECT_EQ(pause.size(), 3u);
  EXPECT_THROW(features::target_table(table, "loudness"), pm::ParameterError);
  EXPECT_EQ(features::canonical_feature_name("relative_prominence"), "prominence_relative");
}
