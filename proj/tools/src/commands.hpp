#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "pipeline_config.hpp"
#include "prosody_mi/baseline.hpp"
#include "prosody_mi/error.hpp"
#include "prosody_mi/infometrics.hpp"

namespace prosody_mi::cli {

// Output layout below config.output_dir.
struct OutputLayout {
  std::filesystem::path root;

  std::filesystem::path features_csv() const { return root / "features.csv"; }
  std::filesystem::path zscore_json() const { return root / "zscore_stats.json"; }
  std::filesystem::path estimates() const { return root / "estimates"; }
  std::filesystem::path estimate_dir(const std::string& feature,
                                     corpus::ContextType context) const;
  std::filesystem::path validation_csv() const { return root / "validation.csv"; }
  std::filesystem::path report_dir() const { return root / "report"; }
};

struct ExtractSummary {
  std::size_t n_utterances = 0;
  std::size_t n_dropped = 0;
  std::size_t n_tokens = 0;
  std::map<std::string, std::size_t> feature_counts;
  double zero_pause_fraction = 0.0;
};

ExtractSummary cmd_extract(const PipelineConfig& config, std::ostream& log);

struct EstimateResult {
  infometrics::MiResult mi;
  std::filesystem::path dir;
  std::size_t n_train = 0, n_dev = 0, n_test = 0;
  double target_shift = 0.0;  // epsilon added to Gamma-modelled pause targets
};

EstimateResult cmd_estimate(const PipelineConfig& config, const std::string& feature,
                            corpus::ContextType context, std::ostream& log);

std::vector<baseline::ValidationRow> cmd_validate(const PipelineConfig& config,
                                                  std::ostream& log);

infometrics::ReportFiles cmd_report(const PipelineConfig& config, std::ostream& log);

// Full command line: subcommand and flags. Returns the process exit code:
// 0 success, 2 configuration error, 3 data error, 4 numeric or training error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

int exit_code(ErrorKind kind);

}  // namespace prosody_mi::cli
