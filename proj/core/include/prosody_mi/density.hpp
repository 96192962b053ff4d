#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "prosody_mi/corpus.hpp"

namespace prosody_mi::density {

using PointSet = corpus::RowMatrix;  // N x d, one point per row

// Gaussian kernel density estimate whose kernels have covariance h * Sigma,
// Sigma being the covariance of the training points. The mixture is
// normalised per kernel, so the density integrates to one.
class KdeModel {
 public:
  KdeModel() = default;

  // Throws DegenerateDataError when the jittered covariance is singular.
  KdeModel(PointSet train_points, double bandwidth_h);
  // Restores a persisted model with its stored covariance.
  KdeModel(PointSet train_points, Eigen::MatrixXd covariance,
           double bandwidth_h);

  int dim() const { return dim_; }
  std::size_t size() const { return static_cast<std::size_t>(train_.rows()); }
  double bandwidth() const { return bandwidth_h_; }
  const PointSet& train_points() const { return train_; }
  const Eigen::MatrixXd& covariance() const { return covariance_; }

  // Same training data and covariance, different bandwidth.
  KdeModel with_bandwidth(double bandwidth_h) const;

  double logpdf(std::span<const double> x) const;

  // log density of every row, evaluated in parallel; order matches rows.
  std::vector<double> logpdf_rows(const PointSet& points) const;

 private:
  void prepare();

  int dim_ = 0;
  PointSet train_;
  Eigen::MatrixXd covariance_;
  double bandwidth_h_ = 1.0;
  // Cholesky-whitened training points (N x d, each dimension contiguous).
  Eigen::MatrixXd whitened_;
  Eigen::MatrixXd whiten_;  // L^-1 of the jittered covariance
  double log_norm_ = 0.0;   // -log N - d/2 log(2 pi h) - 1/2 log|Sigma|
};

// Sample covariance (n - 1 denominator) plus 1e-9 * trace / d jitter on the
// diagonal. Throws DegenerateDataError on zero spread.
Eigen::MatrixXd jittered_covariance(const PointSet& points);

// 12 log-spaced values covering [0.01, 1] and extended to bracket the
// squared Scott factor n^(-2/(d+4)) by a factor of 3 on each side.
std::vector<double> default_bandwidth_grid(std::size_t n, int d);

struct BandwidthScore {
  double bandwidth = 0.0;
  double mean_heldout_logpdf = 0.0;
};

struct KdeFit {
  KdeModel model;
  std::vector<BandwidthScore> scores;
};

// Picks the grid value with the highest mean held-out log density (ties go
// to the smaller bandwidth).
KdeFit fit_kde(const PointSet& train, const PointSet& heldout,
               std::vector<double> bandwidth_grid);

double kde_logpdf(const KdeModel& model, std::span<const double> x);

// Resubstitution estimate: -mean log density over held-out points, nats.
double entropy_mc(const KdeModel& model, const PointSet& eval_points);

struct EntropyEstimate {
  double value_nats = 0.0;
  double std_nats = 0.0;
  std::size_t n_eval = 0;
  int n_folds = 0;
};

// Mean and standard deviation (n - 1) of n_folds bootstrap means of the
// per-point values. Requires n_folds >= 2 and >= 10 * n_folds values.
EntropyEstimate bootstrap_mean(std::span<const double> per_point, int n_folds,
                               std::uint64_t seed);

// Bootstrap over the evaluation set against a fixed fitted model.
EntropyEstimate entropy_bootstrap(const KdeModel& model,
                                  const PointSet& eval_points, int n_folds = 20,
                                  std::uint64_t seed = 0);

// Binary persistence: one JSON header line (dim, n, h, covariance row-major)
// followed by n*d little-endian float64 training values, row-major. A
// non-empty provenance string is stored in the header.
void write_kde(const std::string& path, const KdeModel& model,
               const std::string& provenance = {});
KdeModel read_kde(const std::string& path);

PointSet column_points(std::span<const double> values);

}  // namespace prosody_mi::density
