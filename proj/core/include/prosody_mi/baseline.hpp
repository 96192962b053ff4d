#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "prosody_mi/predictor.hpp"

namespace prosody_mi::baseline {

struct MixedPairSample {
  std::string label;
  std::vector<double> value;
};

// Deterministic role of each sample: half train, a tenth held-out (bandwidth
// or early-stopping selection), the rest evaluation.
enum class SampleRole { kTrain, kHeldout, kEval };
std::vector<SampleRole> assign_roles(std::size_t n, std::uint64_t seed);

struct KsOptions {
  std::size_t min_class_count = 20;  // smaller classes are pooled into "other"
  std::uint64_t seed = 0;
};

struct KsResult {
  double mi_nats = 0.0;
  double h_nats = 0.0;       // pooled entropy
  double h_cond_nats = 0.0;  // class-weighted conditional entropy
  std::size_t n_classes = 0;
};

// Kernel-smoothing mixed-pair MI: H_kde(all) - sum_c p(c) H_kde(values | c),
// every entropy from a bandwidth-selected KDE evaluated on the same held-out
// evaluation points.
KsResult ks_mixed_mi(const std::vector<MixedPairSample>& samples,
                     const KsOptions& options = {});

// MI of a label with a Gaussian mixture: numerical mixture entropy (adaptive
// Simpson over +-10 combined standard deviations, tolerance 1e-6) minus the
// analytic class entropies.
double quadrature_mi_oracle(std::span<const double> class_probs,
                            std::span<const double> class_means,
                            std::span<const double> class_sds);

// Plug-in discrete MI of (label, equal-width bin of a scalar value).
double histogram_mi_oracle(const std::vector<MixedPairSample>& samples, int n_bins);

struct PipelineOptions {
  predictor::MlpConfig head = {1, 16, 0.0, 0.0, 3e-3, 256, 100, 5, 0};
  std::uint64_t seed = 0;
};

struct PipelineResult {
  double mi_nats = 0.0;
  double h_nats = 0.0;
  double h_cond_nats = 0.0;
};

// The main estimator on mixed pairs: KDE entropy of the values minus the
// cross-entropy of a Gaussian head fed one-hot label embeddings. Uses the
// same sample roles as ks_mixed_mi for equal seeds.
PipelineResult pipeline_mixed_mi(const std::vector<MixedPairSample>& samples,
                                 const PipelineOptions& options = {});

// ------------------------------------------------------------ validation suite

struct ValidationInstance {
  std::string name;
  std::vector<double> probs;
  std::vector<double> means;
  std::vector<double> sds;
  std::size_t n = 20000;
  std::uint64_t seed = 0;
};

std::vector<MixedPairSample> generate_samples(const ValidationInstance& instance);

// Two equiprobable labels with N(-s/2, 1) and N(+s/2, 1) values for the
// separations 0, 1, 2 and 4, plus a three-label independence instance.
std::vector<ValidationInstance> default_validation_suite(std::uint64_t seed = 0);

struct ValidationRow {
  std::string instance;
  double oracle_mi = 0.0;
  double ks_mi = 0.0;
  double pipeline_mi = 0.0;
  double abs_gap_ks = 0.0;
  double abs_gap_pipeline = 0.0;
};

std::vector<ValidationRow> run_validation(const std::vector<ValidationInstance>& suite);

// CSV: instance,oracle_mi,ks_mi,pipeline_mi,abs_gap_ks,abs_gap_pipeline
std::string validation_report_csv(const std::vector<ValidationRow>& rows,
                                  const std::string& provenance = {});

}  // namespace prosody_mi::baseline
