#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "prosody_mi/corpus.hpp"

namespace prosody_mi::predictor {

// ------------------------------------------------------------------ families

enum class FamilyKind { kGaussianScalar, kGammaScalar, kGaussianDiagVector };

struct PredictiveFamily {
  FamilyKind kind = FamilyKind::kGaussianScalar;
  int target_dim = 1;  // k for the diagonal Gaussian, 1 otherwise

  static PredictiveFamily gaussian() { return {FamilyKind::kGaussianScalar, 1}; }
  static PredictiveFamily gamma() { return {FamilyKind::kGammaScalar, 1}; }
  static PredictiveFamily gaussian_diag(int k) {
    return {FamilyKind::kGaussianDiagVector, k};
  }

  // Number of distribution parameters (and network outputs).
  int param_count() const { return 2 * target_dim; }
  bool operator==(const PredictiveFamily&) const = default;
};

std::string to_string(const PredictiveFamily& family);
// "gaussian", "gamma", "gaussian_diag" (k taken from target_dim) or the long
// names written by to_string.
PredictiveFamily parse_family(const std::string& name, int target_dim);

// Lower bound added to every softplus-constrained parameter.
inline constexpr double kPositiveFloor = 1e-4;

double softplus(double x);
double sigmoid(double x);
double inverse_softplus(double y);

// Layouts: Gaussian (mu, sigma); Gamma (shape alpha, rate beta); diagonal
// Gaussian (mu_1..mu_k, sigma_1..sigma_k).
//
// Exact negative log density in nats. Throws SupportError for a Gamma target
// <= 0 and ParameterError for non-positive scale parameters.
double nll(const PredictiveFamily& family, std::span<const double> params,
           std::span<const double> target);

// d nll / d params.
void nll_gradient(const PredictiveFamily& family, std::span<const double> params,
                  std::span<const double> target, std::span<double> grad);

// Network outputs to distribution parameters (softplus + floor on the
// positive ones) and the elementwise derivative d params / d raw.
void raw_to_params(const PredictiveFamily& family, std::span<const double> raw,
                   std::span<double> params);
void raw_to_params_jacobian(const PredictiveFamily& family,
                            std::span<const double> raw,
                            std::span<double> dparams_draw);

// Best constant predictor (maximum likelihood) for a target matrix (N x k).
std::vector<double> unconditional_fit(const PredictiveFamily& family,
                                      const corpus::RowMatrix& targets);

// ---------------------------------------------------------------------- MLP

struct MlpConfig {
  int n_layers = 1;
  int hidden_units = 64;
  double dropout_p = 0.0;
  double l2_lambda = 0.0;
  double learning_rate = 1e-3;
  int batch_size = 128;
  int max_epochs = 100;
  int patience = 5;
  std::uint64_t seed = 0;

  // Throws ParameterError when a field is out of range.
  void validate() const;
};

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;     // out
};

struct TrainedHead {
  MlpConfig config;
  PredictiveFamily family;
  int input_dim = 0;
  std::vector<DenseLayer> layers;  // hidden layers then output layer
  double val_xent_nats = 0.0;
  corpus::ContextType context_type = corpus::ContextType::kCurrentWord;
  std::string zscore_ref;
  std::vector<double> val_history;  // mean validation nll per epoch
  int best_epoch = -1;
};

// He-uniform hidden layers; output layer weights and biases zero.
TrainedHead initialize_head(const MlpConfig& config,
                            const PredictiveFamily& family, int input_dim);

// Distribution parameters for each input row (N x param_count), dropout off.
corpus::RowMatrix forward(const TrainedHead& head, const corpus::RowMatrix& inputs);
std::vector<double> forward(const TrainedHead& head,
                            std::span<const double> embedding);

// Adam on mean nll + l2 * sum of squared weights, early stopping on the
// validation nll; the best-validation weights are restored.
TrainedHead train_head(const corpus::JoinedDataset& train,
                       const corpus::JoinedDataset& val,
                       const MlpConfig& config, const PredictiveFamily& family);

// Per-row nll of the head's predictions. SupportError names the row.
std::vector<double> row_nll(const TrainedHead& head,
                            const corpus::JoinedDataset& data);

// Mean held-out nll: the conditional cross-entropy estimate, nats.
double conditional_xent(const TrainedHead& head, const corpus::JoinedDataset& test);

// ------------------------------------------------------------ random search

struct SearchSpace {
  double lr_min = 1e-5;
  double lr_max = 1e-2;
  double l2_min = 1e-8;
  double l2_max = 1e-2;
  std::vector<double> dropout{0.0, 0.1, 0.2, 0.3};
  std::vector<int> layers{1, 2, 3};
  std::vector<int> hidden{64, 128, 256, 512};
  std::vector<int> batch{128, 256, 512};
  int max_epochs = 100;
  int patience = 5;

  void validate() const;
};

enum class TrialStatus { kOk, kDiverged };

struct TrialRecord {
  int trial = 0;
  MlpConfig config;
  double val_xent_nats = 0.0;
  TrialStatus status = TrialStatus::kOk;
};

struct SearchResult {
  TrainedHead best;
  std::vector<TrialRecord> trials;
};

// Seeded configuration sequence: log-uniform learning rate and L2, uniform
// choice for the discrete fields.
std::vector<MlpConfig> sample_configs(const SearchSpace& space, int n_trials,
                                      std::uint64_t seed);

// Trains every sampled configuration (trials run in parallel) and returns the
// lowest validation cross-entropy. Throws NumericError if all diverge.
SearchResult random_search(const SearchSpace& space, int n_trials,
                           const corpus::JoinedDataset& train,
                           const corpus::JoinedDataset& val,
                           const PredictiveFamily& family, std::uint64_t seed);

// CSV: trial,lr,l2,dropout,layers,hidden,batch,val_xent_nats,status
std::string trial_log_csv(const std::vector<TrialRecord>& trials);

// ------------------------------------------------------------ persistence

// One JSON header line (config, family, layer shapes, z-score reference,
// context type) followed by float32 little-endian weights, layer by layer:
// weights row-major, then bias.
void write_head(const std::string& path, const TrainedHead& head,
                const std::string& provenance = {});
TrainedHead read_head(const std::string& path);

}  // namespace prosody_mi::predictor
