#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prosody_mi/corpus.hpp"
#include "prosody_mi/features.hpp"
#include "prosody_mi/predictor.hpp"

namespace prosody_mi::cli {

struct CorpusPaths {
  std::string alignments;
  corpus::AlignmentFormat alignment_format = corpus::AlignmentFormat::kJson;
  std::string audio_root;
  std::string lexicon;  // optional
  std::string splits;
  std::map<std::string, std::string> columns;  // prominence, surprisal, ...
};

struct PipelineConfig {
  std::filesystem::path source;  // config file; relative paths resolve against its directory
  std::string digest;            // SHA-256 of the config bytes

  CorpusPaths corpus;
  features::ExtractionParams extraction;
  double pause_epsilon_s = 1e-3;
  bool zscore = true;
  double max_drop_fraction = 0.10;

  std::vector<double> bandwidth_grid;  // empty: default grid
  int folds = 20;

  std::map<std::string, std::string> families;  // canonical feature -> family name
  predictor::SearchSpace search;
  int n_trials = 50;
  std::uint64_t seed = 0;

  std::map<corpus::ContextType, std::string> embeddings;
  std::string output_dir;

  std::size_t validation_n = 20000;

  std::string provenance() const;
  predictor::PredictiveFamily family_for(const std::string& feature, int target_dim) const;
};

// Parses and fully validates a config document: value ranges, family names
// and the existence of every referenced input path. Throws ParameterError.
PipelineConfig parse_config(const std::string& text, const std::filesystem::path& source);
PipelineConfig load_config(const std::string& path);

// Command-line overrides (--seed, --out), re-validated.
void apply_overrides(PipelineConfig& config, std::optional<std::uint64_t> seed,
                     const std::optional<std::string>& out_dir);

std::string sha256_hex(const std::string& bytes);

}  // namespace prosody_mi::cli
