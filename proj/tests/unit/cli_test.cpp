#include <cmath>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "commands.hpp"
#include "pipeline_config.hpp"
#include "prosody_mi/baseline.hpp"
#include "prosody_mi/corpus.hpp"
#include "prosody_mi/error.hpp"
#include "prosody_mi/features.hpp"
#include "synthetic_corpus.hpp"
#include "test_util.hpp"

namespace pm = prosody_mi;
namespace cli = prosody_mi::cli;
namespace fs = std::filesystem;
using pm::testing::read_bytes;
using pm::testing::TempDir;
using pm::testing::write_text;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "prosody-mi");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Replaces `from` with `to` in the config file next to the corpus.
void edit_config(const fs::path& config, const std::string& from, const std::string& to) {
  auto text = read_bytes(config.string());
  const auto pos = text.find(from);
  ASSERT_NE(pos, std::string::npos) << from;
  text.replace(pos, from.size(), to);
  write_text(config.string(), text);
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) {
      files[fs::relative(e.path(), root).string()] = read_bytes(e.path().string());
    }
  }
  return files;
}

}  // namespace

// ------------------------------------------------------------------ config

TEST(Config, SyntheticConfigParsesAndResolvesPaths) {
  TempDir dir;
  const auto path = cli::write_synthetic_corpus(dir.path());
  const auto c = cli::load_config(path.string());
  EXPECT_EQ(c.corpus.alignments, (dir.path() / "corpus/alignments.jsonl").string());
  EXPECT_EQ(c.output_dir, (dir.path() / "out").string());
  EXPECT_EQ(c.extraction.dct_k, 4);
  EXPECT_EQ(c.folds, 2);
  EXPECT_EQ(c.embeddings.size(), 3u);
  EXPECT_EQ(c.digest, cli::sha256_hex(read_bytes(path.string())));
  EXPECT_EQ(c.family_for("pause", 1).kind, pm::predictor::FamilyKind::kGammaScalar);
  EXPECT_EQ(c.family_for("f0", 4).kind, pm::predictor::FamilyKind::kGaussianDiagVector);
  EXPECT_EQ(c.family_for("energy", 1).kind, pm::predictor::FamilyKind::kGaussianScalar);
  EXPECT_NE(c.provenance().find("seed=1"), std::string::npos);
}

TEST(Config, Sha256KnownVectors) {
  EXPECT_EQ(cli::sha256_hex(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(cli::sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Config, MissingLexiconFailsBeforeAnyOutput) {
  TempDir dir;
  const auto path = cli::write_synthetic_corpus(dir.path());
  fs::remove(dir.path() / "corpus/lexicon.csv");
  try {
    cli::load_config(path.string());
    FAIL() << "expected ParameterError";
  } catch (const pm::ParameterError& e) {
    EXPECT_NE(std::string(e.what()).find("corpus.lexicon"), std::string::npos);
  }
  const auto r = run({"extract", "--config", path.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(fs::exists(dir.path() / "out"));
}

TEST(Config, RejectsOutOfRangeValues) {
  TempDir dir;
  const auto path = cli::write_synthetic_corpus(dir.path());
  const auto original = read_bytes(path.string());
  const std::vector<std::pair<std::string, std::string>> edits = {
      {"\"dct_k\": 4", "\"dct_k\": 200"},
      {"\"dct_k\": 4", "\"dct_k\": 0"},
      {"\"folds\": 2", "\"folds\": 1"},
      {"\"n_trials\": 3", "\"n_trials\": 0"},
      {"\"n\": 4000", "\"n\": 10"},
      {"\"threshold\": 0.15", "\"threshold\": 1.5"},
      {"\"alignment_format\": \"json\"", "\"alignment_format\": \"xml\""},
      {"\"zscore\": true", "\"zscore\": true, \"colour\": 1"},
      {"\"zscore\": true", "\"zscore\": \"yes\""},
      {"\"current\": \"embeddings", "\"sideways\": \"embeddings"},
      {"\"lr_min\": 0.001", "\"lr_min\": 0.1"},
  };
  for (const auto& [from, to] : edits) {
    write_text(path.string(), original);
    edit_config(path, from, to);
    EXPECT_THROW(cli::load_config(path.string()), pm::ParameterError) << to;
  }
  write_text(path.string(), "{ not json");
  EXPECT_THROW(cli::load_config(path.string()), pm::ParameterError);
  EXPECT_THROW(cli::load_config((dir.path() / "absent.json").string()), pm::ParameterError);
}

TEST(Config, Overrides) {
  TempDir dir;
  auto c = cli::load_config(cli::write_synthetic_corpus(dir.path()).string());
  cli::apply_overrides(c, 99, std::string("elsewhere/./x"));
  EXPECT_EQ(c.seed, 99u);
  EXPECT_EQ(c.output_dir, "elsewhere/x");
  EXPECT_THROW(cli::apply_overrides(c, std::nullopt, std::string()), pm::ParameterError);
}

// ------------------------------------------------------------------ exit codes

TEST(Cli, ExitCodes) {
  EXPECT_EQ(cli::exit_code(pm::ErrorKind::kConfig), 2);
  EXPECT_EQ(cli::exit_code(pm::ErrorKind::kData), 3);
  EXPECT_EQ(cli::exit_code(pm::ErrorKind::kNumeric), 4);

  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"extract"}).code, 2);
  const auto help = run({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("estimate"), std::string::npos);
  EXPECT_EQ(run({"extract", "--config", "/nonexistent/config.json"}).code, 2);
}

TEST(Cli, EstimateWithoutEmbeddingForContextIsConfigError) {
  TempDir dir;
  const auto path = cli::write_synthetic_corpus(dir.path());
  edit_config(path, ",\n    \"bidirectional\": \"embeddings/bidirectional.bin\"", "");
  ASSERT_EQ(run({"extract", "--config", path.string()}).code, 0);
  const auto r = run({"estimate", "--config", path.string(), "--feature", "energy",
                      "--context", "bidirectional"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("bidirectional"), std::string::npos);
  EXPECT_EQ(run({"estimate", "--config", path.string(), "--feature", "loudness", "--context",
                 "current"})
                .code,
            2);
}

TEST(Cli, EstimateBeforeExtractIsConfigError) {
  TempDir dir;
  const auto path = cli::write_synthetic_corpus(dir.path());
  const auto r = run({"estimate", "--config", path.string(), "--feature", "energy",
                      "--context", "current"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("run extract first"), std::string::npos);
}

TEST(Cli, MismatchedEmbeddingContextIsConfigError) {
  TempDir dir;
  const auto path = cli::write_synthetic_corpus(dir.path());
  edit_config(path, "\"past\": \"embeddings/past.bin\"", "\"past\": \"embeddings/current.bin\"");
  ASSERT_EQ(run({"extract", "--config", path.string()}).code, 0);
  const auto r = run({"estimate", "--config", path.string(), "--feature", "energy",
                      "--context", "past"});
  EXPECT_EQ(r.code, 2);
}

TEST(Cli, CorruptAlignmentIsDataError) {
  TempDir dir;
  const auto path = cli::write_synthetic_corpus(dir.path());
  write_text((dir.path() / "corpus/alignments.jsonl").string(), "{\"utterance_id\": 3\n");
  const auto r = run({"extract", "--config", path.string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
}

TEST(Cli, TooManyUnreadableAudioFilesAbortExtraction) {
  TempDir dir;
  const auto path = cli::write_synthetic_corpus(dir.path());
  write_text((dir.path() / "corpus/audio/syn03.wav").string(), "RIFF");
  // One of ten utterances dropped: 10% is still tolerated.
  const auto ok = run({"extract", "--config", path.string()});
  EXPECT_EQ(ok.code, 0) << ok.err;
  EXPECT_NE(ok.out.find("1 dropped"), std::string::npos);
  write_text((dir.path() / "corpus/audio/syn04.wav").string(), "RIFF");
  EXPECT_EQ(run({"extract", "--config", path.string()}).code, 3);
}

// ------------------------------------------------------------------ pipeline

TEST(Pipeline, ExtractWritesTableAndStats) {
  TempDir dir;
  const auto path = cli::write_synthetic_corpus(dir.path());
  std::ostringstream log;
  const auto c = cli::load_config(path.string());
  const auto summary = cli::cmd_extract(c, log);
  EXPECT_EQ(summary.n_utterances, 10u);
  EXPECT_EQ(summary.n_dropped, 0u);
  EXPECT_EQ(summary.n_tokens, 160u);
  EXPECT_EQ(summary.feature_counts.at("energy"), 160u);
  EXPECT_GT(summary.zero_pause_fraction, 0.5);
  EXPECT_LT(summary.zero_pause_fraction, 0.9);

  const cli::OutputLayout out{c.output_dir};
  const auto csv = read_bytes(out.features_csv().string());
  EXPECT_EQ(csv.rfind("# " + c.provenance() + "\n", 0), 0u);
  const auto table = pm::features::read_feature_table(out.features_csv().string(),
                                                      out.zscore_json().string());
  EXPECT_EQ(table.dct_k, 4);
  EXPECT_TRUE(pm::features::feature_is_zscored(table, "energy"));
  EXPECT_FALSE(pm::features::feature_is_zscored(table, "pause_after_s"));

  // Durations and pauses sit on the alignment grid: per utterance they sum to
  // the span from the first word onset to the last word offset.
  const auto utts = pm::corpus::load_alignment(c.corpus.alignments,
                                               pm::corpus::AlignmentFormat::kJson);
  const auto& stats = table.zscore.at("duration_per_syllable");
  for (const auto& u : utts) {
    double total = 0.0;
    for (const auto& rec : table.records) {
      if (rec.key.utterance_id != u.utterance_id) continue;
      const auto& tok = u.tokens[static_cast<std::size_t>(rec.key.index_in_utterance)];
      const double dur = rec.duration_per_syllable * stats.std + stats.mean;
      EXPECT_NEAR(dur * static_cast<double>(std::lround(tok.duration_s() / dur)),
                  tok.duration_s(), 1e-9);
      total += tok.duration_s() + rec.pause_after_s;
    }
    EXPECT_EQ(total, u.tokens.back().end_s - u.tokens.front().start_s) << u.utterance_id;
  }
}

TEST(Pipeline, EstimateAndReportAreByteIdenticalAcrossRuns) {
  TempDir a, b;
  std::map<std::string, std::string> snaps[2];
  int i = 0;
  for (const auto* dir : {&a, &b}) {
    const auto path = cli::write_synthetic_corpus(dir->path()).string();
    ASSERT_EQ(run({"extract", "--config", path}).code, 0);
    for (const char* f : {"energy", "pause", "f0"}) {
      for (const char* ctx : {"current", "bidirectional"}) {
        const auto r = run({"estimate", "--config", path, "--feature", f, "--context", ctx});
        ASSERT_EQ(r.code, 0) << r.err;
      }
    }
    const auto r = run({"report", "--config", path});
    ASSERT_EQ(r.code, 0) << r.err;
    snaps[i++] = snapshot(dir->path() / "out");
  }
  EXPECT_EQ(snaps[0].size(), snaps[1].size());
  for (const auto& [name, bytes] : snaps[0]) {
    ASSERT_TRUE(snaps[1].count(name)) << name;
    EXPECT_EQ(bytes, snaps[1].at(name)) << name;
  }
  EXPECT_TRUE(snaps[0].count("estimates/energy__current_word/mi.csv"));
  EXPECT_TRUE(snaps[0].count("estimates/f0_dct__bidirectional/head.bin"));
  EXPECT_TRUE(snaps[0].count("report/report.csv"));
  EXPECT_TRUE(snaps[0].count("report/correlations.csv"));
  EXPECT_NE(snaps[0].at("estimates/pause_after_s__current_word/mi.csv").find("target_shift_s"),
            std::string::npos);
}

TEST(Pipeline, SeedOverrideChangesResults) {
  TempDir dir;
  const auto path = cli::write_synthetic_corpus(dir.path()).string();
  ASSERT_EQ(run({"extract", "--config", path}).code, 0);
  const std::vector<std::string> est = {"estimate", "--config", path, "--feature", "energy",
                                        "--context", "current"};
  ASSERT_EQ(run(est).code, 0);
  const auto mi = dir.path() / "out/estimates/energy__current_word/mi.csv";
  const auto first = read_bytes(mi.string());
  auto with_seed = est;
  with_seed.insert(with_seed.end(), {"--seed", "5"});
  ASSERT_EQ(run(with_seed).code, 0);
  const auto second = read_bytes(mi.string());
  EXPECT_NE(first, second);
  EXPECT_NE(second.find("seed=5"), std::string::npos);
}

TEST(Pipeline, OutOverrideRedirectsOutputs) {
  TempDir dir;
  const auto path = cli::write_synthetic_corpus(dir.path()).string();
  const auto alt = (dir.path() / "alt").string();
  ASSERT_EQ(run({"extract", "--config", path, "--out", alt}).code, 0);
  EXPECT_TRUE(fs::exists(dir.path() / "alt/features.csv"));
  EXPECT_FALSE(fs::exists(dir.path() / "out"));
}

TEST(Pipeline, ReportWithoutEstimatesIsConfigError) {
  TempDir dir;
  const auto path = cli::write_synthetic_corpus(dir.path()).string();
  ASSERT_EQ(run({"extract", "--config", path}).code, 0);
  EXPECT_EQ(run({"report", "--config", path}).code, 2);
}

TEST(Pipeline, ValidateWritesOneRowPerInstance) {
  TempDir dir;
  const auto path = cli::write_synthetic_corpus(dir.path()).string();
  edit_config(path, "\"n\": 4000", "\"n\": 3000");
  const auto r = run({"validate", "--config", path});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = read_bytes((dir.path() / "out/validation.csv").string());
  const auto lines = std::count(csv.begin(), csv.end(), '\n');
  EXPECT_EQ(lines, static_cast<long>(pm::baseline::default_validation_suite().size()) + 2);
  EXPECT_NE(csv.find("oracle"), std::string::npos);
}

// A feature table with energy planted as a two-component mixture keyed to the
// current word: the estimate must land near the quadrature value.
TEST(Pipeline, PlantedMixtureMatchesQuadratureOracle) {
  TempDir dir;
  cli::SyntheticCorpusOptions opt;
  opt.n_utterances = 250;
  const auto path = cli::write_synthetic_corpus(dir.path(), opt);
  auto c = cli::load_config(path.string());
  c.n_trials = 4;
  c.search.max_epochs = 100;
  c.search.lr_min = 3e-3;
  c.folds = 10;
  std::ostringstream log;
  cli::cmd_extract(c, log);

  const cli::OutputLayout out{c.output_dir};
  auto table = pm::features::read_feature_table(out.features_csv().string(),
                                                out.zscore_json().string());
  const auto emb =
      pm::corpus::read_embeddings((dir.path() / "embeddings/current.bin").string());
  std::map<pm::corpus::TokenKey, int> word;
  for (std::size_t r = 0; r < emb.row_token_ids.size(); ++r) {
    Eigen::Index j = 0;
    emb.rows.row(static_cast<Eigen::Index>(r)).maxCoeff(&j);
    word[emb.row_token_ids[r]] = static_cast<int>(j);
  }
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z(0.0, 1.0);
  double n_low = 0;
  for (auto& rec : table.records) {
    const bool low = word.at(rec.key) < 3;
    n_low += low;
    rec.energy = (low ? -1.0 : 1.0) + z(rng);
  }
  table.zscore.erase("energy");
  pm::features::write_feature_table(out.features_csv().string(), out.zscore_json().string(),
                                    table);

  const auto est = cli::cmd_estimate(c, "energy", pm::corpus::ContextType::kCurrentWord, log);
  const double p = n_low / static_cast<double>(table.records.size());
  const std::vector<double> probs{p, 1.0 - p}, means{-1.0, 1.0}, sds{1.0, 1.0};
  const double oracle = pm::baseline::quadrature_mi_oracle(probs, means, sds);
  EXPECT_NEAR(est.mi.mi_nats, oracle, 0.05) << log.str();
  EXPECT_GT(est.n_test, 700u);
}
