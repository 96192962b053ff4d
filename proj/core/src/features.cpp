#include "prosody_mi/features.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "prosody_mi/csv.hpp"
#include "prosody_mi/error.hpp"

namespace prosody_mi::features {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::vector<ProsodyRecord> extract_utterance(
    const corpus::Utterance& utterance, const std::vector<double>& samples,
    int sample_rate_hz, const corpus::Lexicon& lexicon,
    const std::vector<double>& prominence, const ExtractionParams& params) {
  const auto& tokens = utterance.tokens;
  if (!prominence.empty() && prominence.size() != tokens.size()) {
    throw ValidationError(fmt::format("{}: prominence has {} values for {} tokens",
                                      utterance.utterance_id, prominence.size(),
                                      tokens.size()));
  }
  const auto filtered = dsp::bandpass(samples, sample_rate_hz,
                                      params.bandpass_low_hz,
                                      params.bandpass_high_hz);

  std::optional<dsp::F0Track> cleaned;
  try {
    cleaned = dsp::clean_f0(dsp::track_f0(samples, sample_rate_hz, params.yin));
  } catch (const DegenerateDataError&) {
    // No voicing anywhere: every token loses its f0 feature.
  }

  std::vector<double> relative;
  if (!prominence.empty()) relative = dsp::relative_prominence(prominence);

  std::vector<ProsodyRecord> out;
  out.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& tok = tokens[i];
    const auto entry = corpus::lookup_syllables(tok.text, lexicon);
    ProsodyRecord rec;
    rec.key = tok.key();
    rec.syllable_source = entry.source;
    rec.energy = dsp::mean_log_energy(filtered, tok, sample_rate_hz);
    rec.duration_per_syllable = dsp::duration_per_syllable(tok, entry);
    rec.pause_after_s =
        dsp::pause_after(tok, i + 1 < tokens.size() ? &tokens[i + 1] : nullptr);
    rec.f0_dct.assign(static_cast<std::size_t>(params.dct_k), kNaN);
    if (cleaned) {
      try {
        const auto seg = dsp::stress_window(*cleaned, tok, entry);
        rec.f0_dct = dsp::dct_parameterize(seg, params.dct_k,
                                           params.contour_domain);
      } catch (const RangeError&) {
      }
    }
    rec.prominence = prominence.empty() ? kNaN : prominence[i];
    rec.prominence_relative = prominence.empty() ? kNaN : relative[i];
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<std::string> FeatureTable::column_names() const {
  std::vector<std::string> names{"energy", "duration_per_syllable",
                                 "pause_after_s", "prominence",
                                 "prominence_relative"};
  for (int j = 0; j < dct_k; ++j) names.push_back(fmt::format("f0_dct_{}", j));
  return names;
}

std::vector<std::string> default_zscore_columns(int dct_k) {
  std::vector<std::string> names{"energy", "duration_per_syllable",
                                 "prominence_relative"};
  for (int j = 0; j < dct_k; ++j) names.push_back(fmt::format("f0_dct_{}", j));
  return names;
}

namespace {

double* column_ref(ProsodyRecord& rec, const std::string& column) {
  if (column == "energy") return &rec.energy;
  if (column == "duration_per_syllable") return &rec.duration_per_syllable;
  if (column == "pause_after_s") return &rec.pause_after_s;
  if (column == "prominence") return &rec.prominence;
  if (column == "prominence_relative") return &rec.prominence_relative;
  if (column.rfind("f0_dct_", 0) == 0) {
    const auto j = static_cast<std::size_t>(std::stoul(column.substr(7)));
    if (j < rec.f0_dct.size()) return &rec.f0_dct[j];
  }
  throw ParameterError("unknown feature column '" + column + "'");
}

}  // namespace

void apply_zscore(FeatureTable& table, const std::set<corpus::TokenKey>& train,
                  const std::vector<std::string>& columns) {
  for (const auto& column : columns) {
    std::vector<double> train_values;
    for (auto& rec : table.records) {
      if (train.count(rec.key)) train_values.push_back(*column_ref(rec, column));
    }
    bool any_finite = false;
    for (double v : train_values) any_finite |= std::isfinite(v);
    if (!any_finite) continue;  // absent column (e.g. no prominence input)
    dsp::ZScoreStats stats;
    try {
      stats = dsp::fit_zscore(train_values);
    } catch (const DegenerateDataError& e) {
      throw DegenerateDataError(fmt::format("column '{}': {}", column, e.what()));
    }
    for (auto& rec : table.records) {
      double* v = column_ref(rec, column);
      *v = dsp::apply_zscore(*v, stats);
    }
    table.zscore[column] = stats;
  }
}

void write_feature_table(const std::string& csv_path,
                         const std::string& zscore_path,
                         const FeatureTable& table,
                         const std::string& provenance_comment) {
  std::ofstream out(csv_path);
  if (!out) throw IoError("cannot write " + csv_path);
  if (!provenance_comment.empty()) out << "# " << provenance_comment << '\n';
  out << "utterance_id,index_in_utterance";
  for (const auto& name : table.column_names()) out << ',' << name;
  out << '\n';
  for (const auto& rec : table.records) {
    out << rec.key.utterance_id << ',' << rec.key.index_in_utterance << ','
        << csv::format_double(rec.energy) << ','
        << csv::format_double(rec.duration_per_syllable) << ','
        << csv::format_double(rec.pause_after_s) << ','
        << csv::format_double(rec.prominence) << ','
        << csv::format_double(rec.prominence_relative);
    for (const double c : rec.f0_dct) out << ',' << csv::format_double(c);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + csv_path);

  if (!zscore_path.empty()) {
    nlohmann::ordered_json side = nlohmann::ordered_json::object();
    for (const auto& [column, stats] : table.zscore) {
      side[column] = {{"mean", stats.mean}, {"std", stats.std}};
    }
    std::ofstream zs(zscore_path);
    if (!zs) throw IoError("cannot write " + zscore_path);
    zs << side.dump(2) << '\n';
  }
}

FeatureTable read_feature_table(const std::string& csv_path,
                                const std::string& zscore_path) {
  const auto t = csv::read_file(csv_path);
  FeatureTable table;
  int k = 0;
  while (t.has_column(fmt::format("f0_dct_{}", k))) ++k;
  table.dct_k = k;
  const auto u = t.column("utterance_id");
  const auto idx = t.column("index_in_utterance");
  const auto names = table.column_names();
  std::vector<std::size_t> cols;
  for (const auto& name : names) cols.push_back(t.column(name));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    ProsodyRecord rec;
    rec.key = {row[u], static_cast<int>(csv::to_long(row[idx], t, r,
                                                      "index_in_utterance"))};
    rec.f0_dct.assign(static_cast<std::size_t>(k), 0.0);
    for (std::size_t c = 0; c < names.size(); ++c) {
      *column_ref(rec, names[c]) = csv::to_double(row[cols[c]], t, r, names[c]);
    }
    table.records.push_back(std::move(rec));
  }
  if (!zscore_path.empty()) {
    std::ifstream in(zscore_path);
    if (!in) throw IoError("cannot open " + zscore_path);
    nlohmann::json side;
    try {
      side = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(zscore_path, 0, e.what());
    }
    for (const auto& [column, stats] : side.items()) {
      table.zscore[column] = {stats.at("mean").get<double>(),
                              stats.at("std").get<double>()};
    }
  }
  return table;
}

std::string canonical_feature_name(const std::string& name) {
  if (name == "energy") return "energy";
  if (name == "duration" || name == "duration_per_syllable") {
    return "duration_per_syllable";
  }
  if (name == "pause" || name == "pause_after_s") return "pause_after_s";
  if (name == "prominence") return "prominence";
  if (name == "prominence_relative" || name == "relative_prominence") {
    return "prominence_relative";
  }
  if (name == "f0" || name == "f0_dct") return "f0_dct";
  throw ParameterError("unknown feature '" + name + "'");
}

corpus::TargetTable target_table(const FeatureTable& table,
                                 const std::string& feature) {
  const auto name = canonical_feature_name(feature);
  corpus::TargetTable out;
  for (auto rec : table.records) {
    std::vector<double> value;
    if (name == "f0_dct") {
      value = rec.f0_dct;
    } else {
      value = {*column_ref(rec, name)};
    }
    bool finite = !value.empty();
    for (const double v : value) finite &= std::isfinite(v);
    if (finite) out.emplace(rec.key, std::move(value));
  }
  return out;
}

bool feature_is_zscored(const FeatureTable& table, const std::string& feature) {
  const auto name = canonical_feature_name(feature);
  if (name == "f0_dct") return table.zscore.count("f0_dct_0") > 0;
  return table.zscore.count(name) > 0;
}

}  // namespace prosody_mi::features
