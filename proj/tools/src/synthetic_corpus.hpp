#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace prosody_mi::cli {

struct SyntheticCorpusOptions {
  int n_utterances = 10;
  int words_per_utterance = 16;
  int sample_rate_hz = 16000;
  std::uint64_t seed = 7;
};

// Writes a small corpus of sawtooth "speech" with planted dependence between
// word identity (and its neighbours) and the prosodic features:
//   corpus/alignments.jsonl, corpus/audio/*.wav, corpus/lexicon.csv,
//   corpus/splits.csv, corpus/prominence.csv, corpus/surprisal.csv,
//   embeddings/{current,past,bidirectional}.bin (+ .rows.csv), config.json.
// Word boundaries sit on a 1/64 s grid. Returns the config path.
std::filesystem::path write_synthetic_corpus(const std::filesystem::path& dir,
                                             const SyntheticCorpusOptions& options = {});

}  // namespace prosody_mi::cli
