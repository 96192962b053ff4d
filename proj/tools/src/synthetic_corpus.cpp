#include "synthetic_corpus.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <random>
#include <vector>

#include <fmt/format.h>

#include "prosody_mi/corpus.hpp"
#include "prosody_mi/error.hpp"
#include "prosody_mi/wav.hpp"

namespace prosody_mi::cli {

namespace fs = std::filesystem;

namespace {

struct Word {
  const char* text;
  int syllables;
  double f0_hz;
  double amplitude;
};

// Four entries appear in the lexicon; "banana" and "strength" fall back to
// the vowel-group heuristic.
constexpr std::array<Word, 6> kVocab{{
    {"the", 1, 110.0, 0.20},
    {"table", 2, 140.0, 0.45},
    {"river", 2, 180.0, 0.30},
    {"magnificent", 4, 125.0, 0.60},
    {"banana", 3, 160.0, 0.25},
    {"strength", 1, 200.0, 0.50},
}};

constexpr double kGrid = 1.0 / 64.0;

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

struct Token {
  int word = 0;
  double start = 0.0;
  double end = 0.0;
  double f0 = 0.0;
  double glide = 0.0;  // octaves across the word
  double bend = 0.0;   // octaves at mid-word relative to the chord
  double amplitude = 0.0;
};

}  // namespace

fs::path write_synthetic_corpus(const fs::path& dir, const SyntheticCorpusOptions& opt) {
  if (opt.n_utterances < 5 || opt.words_per_utterance < 2) {
    throw ParameterError("synthetic corpus needs >= 5 utterances of >= 2 words");
  }
  const fs::path corpus_dir = dir / "corpus";
  const fs::path audio_dir = corpus_dir / "audio";
  const fs::path emb_dir = dir / "embeddings";
  fs::create_directories(audio_dir);
  fs::create_directories(emb_dir);

  std::mt19937_64 rng(opt.seed);
  std::uniform_int_distribution<int> pick_word(0, static_cast<int>(kVocab.size()) - 1);
  std::uniform_int_distribution<int> jitter(0, 3);
  std::bernoulli_distribution has_pause(0.3);
  std::uniform_int_distribution<int> pause_len(2, 10);
  std::normal_distribution<double> noise(0.0, 1.0);

  const int v = static_cast<int>(kVocab.size());
  std::vector<corpus::Utterance> utts;
  std::vector<std::vector<Token>> all_tokens;
  std::string prominence_csv = "utterance_id,index_in_utterance,prominence\n";
  std::string surprisal_csv = "utterance_id,index_in_utterance,surprisal\n";
  std::string splits_csv = "utterance_id,split\n";

  for (int u = 0; u < opt.n_utterances; ++u) {
    const std::string id = fmt::format("syn{:02d}", u);
    std::vector<int> ids(static_cast<std::size_t>(opt.words_per_utterance));
    for (auto& w : ids) w = pick_word(rng);

    std::vector<Token> tokens;
    double t = 8 * kGrid;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto& w = kVocab[static_cast<std::size_t>(ids[i])];
      Token tok;
      tok.word = ids[i];
      tok.start = t;
      tok.end = t + (8.0 * w.syllables + jitter(rng)) * kGrid;
      // Pitch follows the previous word, loudness anticipates the next one.
      const int prev = i > 0 ? ids[i - 1] : 0;
      const int next = i + 1 < ids.size() ? ids[i + 1] : 0;
      tok.f0 = w.f0_hz * std::pow(2.0, 0.08 * prev + 0.02 * noise(rng));
      tok.glide = 0.05 * (tok.word - 2.5) + 0.08 * noise(rng);
      tok.bend = 0.06 * noise(rng);
      tok.amplitude = w.amplitude * (1.0 + 0.12 * next) * std::exp(0.05 * noise(rng));
      t = tok.end + (has_pause(rng) ? pause_len(rng) * kGrid : 0.0);
      tokens.push_back(tok);
    }
    const double total = t + 8 * kGrid;

    wav::Audio audio;
    audio.sample_rate_hz = opt.sample_rate_hz;
    audio.samples.assign(static_cast<std::size_t>(std::llround(total * opt.sample_rate_hz)), 0.0);
    for (const auto& tok : tokens) {
      const auto a = static_cast<std::size_t>(std::llround(tok.start * opt.sample_rate_hz));
      const auto b = static_cast<std::size_t>(std::llround(tok.end * opt.sample_rate_hz));
      double phase = 0.0;
      for (std::size_t n = a; n < b; ++n) {
        const double tau = static_cast<double>(n - a) / static_cast<double>(b - a) - 0.5;
        const double octave = tok.glide * tau + tok.bend * (1.0 - 4.0 * tau * tau);
        phase += tok.f0 * std::exp2(octave) / opt.sample_rate_hz;
        phase -= std::floor(phase);
        audio.samples[n] = tok.amplitude * (2.0 * phase - 1.0);
      }
    }
    const std::string wav_name = id + ".wav";
    wav::write_pcm16((audio_dir / wav_name).string(), audio);

    corpus::Utterance utt;
    utt.utterance_id = id;
    utt.audio_path = wav_name;
    utt.sample_rate_hz = opt.sample_rate_hz;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      corpus::WordToken w;
      w.utterance_id = id;
      w.index_in_utterance = static_cast<int>(i);
      w.text = kVocab[static_cast<std::size_t>(tokens[i].word)].text;
      w.start_s = tokens[i].start;
      w.end_s = tokens[i].end;
      utt.transcript += (i ? " " : "") + w.text;
      utt.tokens.push_back(w);
      prominence_csv += fmt::format("{},{},{:.6f}\n", id, i,
                                    0.5 + 4.0 * tokens[i].amplitude + 0.1 * std::abs(noise(rng)));
      surprisal_csv += fmt::format("{},{},{:.6f}\n", id, i,
                                   2.0 + 3.0 * tokens[i].amplitude + 0.5 * noise(rng));
    }
    utts.push_back(std::move(utt));
    all_tokens.push_back(std::move(tokens));

    const int n = opt.n_utterances;
    const char* split = 5 * u < 3 * n ? "train" : (5 * u < 4 * n ? "dev" : "test");
    splits_csv += fmt::format("{},{}\n", id, split);
  }

  write_file(corpus_dir / "alignments.jsonl", corpus::serialize_alignment(utts));
  write_file(corpus_dir / "lexicon.csv",
             "word,syllable_count,stress_syllable_index\nthe,1,0\ntable,2,0\nriver,2,0\n"
             "magnificent,4,1\n");
  write_file(corpus_dir / "splits.csv", splits_csv);
  write_file(corpus_dir / "prominence.csv", prominence_csv);
  write_file(corpus_dir / "surprisal.csv", surprisal_csv);

  // One-hot word identities: current word, plus previous word, plus next word.
  const std::array<std::pair<corpus::ContextType, const char*>, 3> contexts{{
      {corpus::ContextType::kCurrentWord, "current"},
      {corpus::ContextType::kPastContext, "past"},
      {corpus::ContextType::kBidirectional, "bidirectional"},
  }};
  for (std::size_t c = 0; c < contexts.size(); ++c) {
    corpus::EmbeddingSet set;
    set.context_type = contexts[c].first;
    set.dim = v * static_cast<int>(c + 1);
    set.model_name = fmt::format("onehot-{}", contexts[c].second);
    std::size_t n_rows = 0;
    for (const auto& t : all_tokens) n_rows += t.size();
    set.rows = corpus::RowMatrix::Zero(static_cast<Eigen::Index>(n_rows), set.dim);
    Eigen::Index r = 0;
    for (std::size_t u = 0; u < all_tokens.size(); ++u) {
      const auto& toks = all_tokens[u];
      for (std::size_t i = 0; i < toks.size(); ++i, ++r) {
        set.rows(r, toks[i].word) = 1.0;
        if (c >= 1 && i > 0) set.rows(r, v + toks[i - 1].word) = 1.0;
        if (c >= 2 && i + 1 < toks.size()) set.rows(r, 2 * v + toks[i + 1].word) = 1.0;
        set.row_token_ids.push_back({utts[u].utterance_id, static_cast<int>(i)});
      }
    }
    corpus::write_embeddings((emb_dir / fmt::format("{}.bin", contexts[c].second)).string(), set);
  }

  const std::string config = R"({
  "corpus": {
    "alignments": "corpus/alignments.jsonl",
    "alignment_format": "json",
    "audio_root": "corpus/audio",
    "lexicon": "corpus/lexicon.csv",
    "splits": "corpus/splits.csv",
    "columns": {"prominence": "corpus/prominence.csv", "surprisal": "corpus/surprisal.csv"}
  },
  "features": {
    "bandpass_low_hz": 300.0,
    "bandpass_high_hz": 5000.0,
    "yin": {"f0_min_hz": 60.0, "f0_max_hz": 400.0, "frame_hop_s": 0.01, "frame_len_s": 0.04, "threshold": 0.15},
    "dct_k": 4,
    "pause_epsilon_s": 0.001,
    "zscore": true
  },
  "density": {"folds": 2},
  "predictor": {
    "n_trials": 3,
    "seed": 1,
    "search": {"lr_min": 0.001, "lr_max": 0.03, "layers": [1], "hidden": [16, 32],
               "batch": [32], "dropout": [0.0, 0.1], "max_epochs": 40, "patience": 5}
  },
  "embeddings": {
    "current": "embeddings/current.bin",
    "past": "embeddings/past.bin",
    "bidirectional": "embeddings/bidirectional.bin"
  },
  "output_dir": "out",
  "validation": {"n": 4000}
}
)";
  const fs::path config_path = dir / "config.json";
  write_file(config_path, config);
  return config_path;
}

}  // namespace prosody_mi::cli
