#pragma once

#include <span>
#include <string>
#include <vector>

#include "prosody_mi/corpus.hpp"
#include "prosody_mi/density.hpp"

namespace prosody_mi::infometrics {

// Unconditional entropy of one feature together with the feature metadata
// needed to check that it pairs with a conditional estimate.
struct FeatureEntropy {
  std::string feature;
  bool zscored = false;
  density::EntropyEstimate estimate;
};

struct ConditionalEntropy {
  std::string feature;
  bool zscored = false;
  corpus::ContextType context_type = corpus::ContextType::kCurrentWord;
  std::string model_name;
  double value_nats = 0.0;
  double std_nats = 0.0;
};

struct MiResult {
  std::string feature;
  corpus::ContextType context_type = corpus::ContextType::kCurrentWord;
  std::string model_name;
  double h_nats = 0.0;
  double h_std = 0.0;
  double h_cond_nats = 0.0;
  double h_cond_std = 0.0;
  double mi_nats = 0.0;  // always h_nats - h_cond_nats
  double mi_std = 0.0;

  bool negative() const { return mi_nats < 0.0; }
};

// MI = H - H_cond with spreads combined in quadrature. Negative values are
// kept and flagged. Throws ValidationError on mismatched feature metadata.
MiResult mutual_information(const FeatureEntropy& h, const ConditionalEntropy& h_cond);

struct FutureGain {
  double mi_nats = 0.0;
  bool negative = false;
};

// MI carried by the future context beyond the past:
// MI(bidirectional) - MI(past). Throws ValidationError on wrong inputs.
FutureGain future_context_mi(const MiResult& mi_bidirectional, const MiResult& mi_past);

inline constexpr double kDefaultHMin = -6.907;

struct UncertaintyCoefficient {
  double value = 0.0;
  bool clamped = false;
};

// MI / (H - H_min), clamped to [0, 1]. Throws ParameterError if H <= H_min.
UncertaintyCoefficient uncertainty_coefficient(const MiResult& mi,
                                               double h_min_nats = kDefaultHMin);
UncertaintyCoefficient uncertainty_coefficient(double mi_nats, double h_nats,
                                               double h_min_nats = kDefaultHMin);

struct Correlation {
  double pearson_r = 0.0;
  double spearman_rho = 0.0;
  std::size_t n = 0;
};

// Average ranks (1-based) with ties sharing the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

// Pearson and Spearman coefficients. Throws DegenerateDataError when either
// column is constant and ParameterError for n < 3 or mismatched sizes.
Correlation correlate(std::span<const double> x, std::span<const double> y);

// Aligns two token-keyed columns before correlating them.
Correlation correlate(const corpus::TokenColumn& x, const corpus::TokenColumn& y);

struct ReportOptions {
  double h_min_nats = kDefaultHMin;
  std::string provenance;  // written as a leading comment when non-empty
  bool full_precision = false;  // shortest round-trip doubles instead of %.6f
};

std::string report_flags(const MiResult& result, const UncertaintyCoefficient& uc);

// Report CSV body (header + rows sorted by feature, then context).
std::string report_csv(std::vector<MiResult> results, const ReportOptions& options);

// Grouped bar chart of MI per context for one feature (800 x 400 viewBox).
std::string report_svg(const std::string& feature, std::vector<MiResult> results,
                        const ReportOptions& options);

struct ReportFiles {
  std::string csv_path;
  std::vector<std::string> svg_paths;
};

// Writes report.csv and mi_<feature>.svg per feature into out_dir.
ReportFiles emit_report(const std::vector<MiResult>& results,
                        const std::vector<std::pair<std::string, Correlation>>& correlations,
                        const std::string& out_dir, const ReportOptions& options);

// Reads rows in the report CSV layout (used to persist single MiResults).
std::vector<MiResult> read_mi_results(const std::string& path);

}  // namespace prosody_mi::infometrics
