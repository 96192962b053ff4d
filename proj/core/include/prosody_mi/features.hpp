#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prosody_mi/corpus.hpp"
#include "prosody_mi/dsp.hpp"

namespace prosody_mi::features {

struct ProsodyRecord {
  corpus::TokenKey key;
  double energy = 0.0;
  double duration_per_syllable = 0.0;
  double pause_after_s = 0.0;
  std::vector<double> f0_dct;  // NaN-filled when the word has no voicing
  double prominence = 0.0;     // NaN when no prominence column was given
  double prominence_relative = 0.0;
  corpus::SyllableSource syllable_source = corpus::SyllableSource::kLexicon;
};

struct ExtractionParams {
  double bandpass_low_hz = 300.0;
  double bandpass_high_hz = 5000.0;
  dsp::YinParams yin;
  int dct_k = 8;
  dsp::ContourDomain contour_domain = dsp::ContourDomain::kLog2;
};

// Features for one utterance. prominence may be empty (column absent).
std::vector<ProsodyRecord> extract_utterance(
    const corpus::Utterance& utterance, const std::vector<double>& samples,
    int sample_rate_hz, const corpus::Lexicon& lexicon,
    const std::vector<double>& prominence, const ExtractionParams& params);

// A feature table: one record per token plus the z-score statistics applied
// to its columns (empty when z-scoring is off).
struct FeatureTable {
  int dct_k = 8;
  dsp::ContourDomain contour_domain = dsp::ContourDomain::kLog2;
  std::vector<ProsodyRecord> records;
  std::map<std::string, dsp::ZScoreStats> zscore;

  std::vector<std::string> column_names() const;
};

// Columns z-scored by default. Gamma-modelled columns (pause, prominence)
// stay in natural units because their family needs positive support.
std::vector<std::string> default_zscore_columns(int dct_k);

// Fits statistics on the train tokens and rescales every record in place.
void apply_zscore(FeatureTable& table, const std::set<corpus::TokenKey>& train,
                  const std::vector<std::string>& columns);

// CSV with an optional leading '#' provenance line; the z-score sidecar is
// JSON {column: {"mean": m, "std": s}}.
void write_feature_table(const std::string& csv_path,
                         const std::string& zscore_path,
                         const FeatureTable& table,
                         const std::string& provenance_comment = {});
FeatureTable read_feature_table(const std::string& csv_path,
                                const std::string& zscore_path = {});

// Feature names accepted by target_table: energy, duration_per_syllable,
// pause_after_s, prominence, prominence_relative, f0_dct. Tokens whose value
// is missing are omitted.
corpus::TargetTable target_table(const FeatureTable& table,
                                 const std::string& feature);
std::string canonical_feature_name(const std::string& name);
bool feature_is_zscored(const FeatureTable& table, const std::string& feature);

}  // namespace prosody_mi::features
