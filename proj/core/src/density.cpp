#include "prosody_mi/density.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/Cholesky>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "prosody_mi/error.hpp"
#include "prosody_mi/numeric.hpp"
#include "kernel_sum.hpp"

namespace prosody_mi::density {

Eigen::MatrixXd jittered_covariance(const PointSet& points) {
  const auto n = points.rows();
  const auto d = points.cols();
  if (n < 2) throw DegenerateDataError("covariance needs at least 2 points");
  const Eigen::RowVectorXd mean = points.colwise().mean();
  const Eigen::MatrixXd centered = points.rowwise() - mean;
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  const double trace = cov.trace();
  if (!(trace > 0.0) || !std::isfinite(trace)) {
    throw DegenerateDataError("training points have zero spread");
  }
  cov.diagonal().array() += 1e-9 * trace / static_cast<double>(d);
  return cov;
}

KdeModel::KdeModel(PointSet train_points, double bandwidth_h)
    : dim_(static_cast<int>(train_points.cols())),
      train_(std::move(train_points)),
      bandwidth_h_(bandwidth_h) {
  covariance_ = jittered_covariance(train_);
  prepare();
}

KdeModel::KdeModel(PointSet train_points, Eigen::MatrixXd covariance,
                   double bandwidth_h)
    : dim_(static_cast<int>(train_points.cols())),
      train_(std::move(train_points)),
      covariance_(std::move(covariance)),
      bandwidth_h_(bandwidth_h) {
  prepare();
}

void KdeModel::prepare() {
  if (!(bandwidth_h_ > 0.0)) {
    throw ParameterError(fmt::format("bandwidth must be positive, got {}",
                                     bandwidth_h_));
  }
  if (train_.rows() < 1 || dim_ < 1) {
    throw ParameterError("KDE needs at least one d >= 1 training point");
  }
  if (covariance_.rows() != dim_ || covariance_.cols() != dim_) {
    throw ShapeError("covariance does not match point dimension");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(covariance_);
  if (llt.info() != Eigen::Success) {
    throw DegenerateDataError("covariance is not positive definite");
  }
  const Eigen::MatrixXd L = llt.matrixL();
  double log_det = 0.0;
  for (int i = 0; i < dim_; ++i) {
    if (!(L(i, i) > 0.0)) throw DegenerateDataError("singular covariance");
    log_det += 2.0 * std::log(L(i, i));
  }
  whiten_ = L.triangularView<Eigen::Lower>().solve(
      Eigen::MatrixXd::Identity(dim_, dim_));
  whitened_ = train_ * whiten_.transpose();
  const double n = static_cast<double>(train_.rows());
  log_norm_ = -std::log(n) -
              0.5 * dim_ * std::log(2.0 * std::numbers::pi * bandwidth_h_) -
              0.5 * log_det;
}

KdeModel KdeModel::with_bandwidth(double bandwidth_h) const {
  if (!(bandwidth_h > 0.0)) {
    throw ParameterError(fmt::format("bandwidth must be positive, got {}",
                                     bandwidth_h));
  }
  KdeModel out = *this;
  out.bandwidth_h_ = bandwidth_h;
  // Only the normaliser depends on h.
  out.log_norm_ = log_norm_ + 0.5 * dim_ * std::log(bandwidth_h_ / bandwidth_h);
  return out;
}


double KdeModel::logpdf(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dim_) {
    throw ShapeError(fmt::format("point has dimension {}, model has {}",
                                 x.size(), dim_));
  }
  const Eigen::Map<const Eigen::VectorXd> xv(x.data(), dim_);
  const Eigen::VectorXd z = whiten_ * xv;
  std::vector<double> q;
  return log_norm_ + detail::log_kernel_sum(whitened_.data(), whitened_.rows(), dim_,
                                            z.data(), bandwidth_h_, q);
}

std::vector<double> KdeModel::logpdf_rows(const PointSet& points) const {
  if (points.cols() != dim_) {
    throw ShapeError(fmt::format("points have dimension {}, model has {}",
                                 points.cols(), dim_));
  }
  const Eigen::MatrixXd z = whiten_ * points.transpose();  // d x M
  std::vector<double> out(static_cast<std::size_t>(points.rows()));
  parallel_for(out.size(), [&](std::size_t begin, std::size_t end) {
    std::vector<double> q;
    for (std::size_t i = begin; i < end; ++i) {
      out[i] = log_norm_ + detail::log_kernel_sum(
                               whitened_.data(), whitened_.rows(), dim_,
                               z.data() + i * static_cast<std::size_t>(dim_),
                               bandwidth_h_, q);
    }
  });
  return out;
}

std::vector<double> default_bandwidth_grid(std::size_t n, int d) {
  const double scott =
      std::pow(static_cast<double>(std::max<std::size_t>(n, 1)),
               -2.0 / (d + 4.0));
  const double lo = std::min(0.01, scott / 3.0);
  const double hi = std::max(1.0, scott * 3.0);
  std::vector<double> grid(12);
  for (int i = 0; i < 12; ++i) {
    grid[i] = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * i / 11.0);
  }
  grid.front() = lo;
  grid.back() = hi;
  return grid;
}

KdeFit fit_kde(const PointSet& train, const PointSet& heldout,
               std::vector<double> bandwidth_grid) {
  if (bandwidth_grid.empty()) throw ParameterError("fit_kde: empty bandwidth grid");
  for (const double h : bandwidth_grid) {
    if (!(h > 0.0)) throw ParameterError("fit_kde: bandwidths must be positive");
  }
  if (train.rows() < train.cols() + 1) {
    throw ParameterError(fmt::format("fit_kde: need at least d + 1 = {} training points, got {}",
                                     train.cols() + 1, train.rows()));
  }
  if (heldout.rows() < 1 || heldout.cols() != train.cols()) {
    throw ParameterError("fit_kde: held-out set empty or of wrong dimension");
  }
  std::sort(bandwidth_grid.begin(), bandwidth_grid.end());

  KdeFit fit;
  const KdeModel base(train, bandwidth_grid.front());
  double best = -std::numeric_limits<double>::infinity();
  double best_h = bandwidth_grid.front();
  for (const double h : bandwidth_grid) {
    const auto model = base.with_bandwidth(h);
    const auto lp = model.logpdf_rows(heldout);
    const double score = pairwise_mean(lp);
    fit.scores.push_back({h, score});
    if (score > best) {
      best = score;
      best_h = h;
    }
  }
  fit.model = base.with_bandwidth(best_h);
  return fit;
}

double kde_logpdf(const KdeModel& model, std::span<const double> x) {
  return model.logpdf(x);
}

double entropy_mc(const KdeModel& model, const PointSet& eval_points) {
  if (eval_points.rows() == 0) throw ParameterError("entropy_mc: empty evaluation set");
  auto lp = model.logpdf_rows(eval_points);
  // Summing in sorted order makes the result independent of point order.
  std::sort(lp.begin(), lp.end());
  return -pairwise_mean(lp);
}

EntropyEstimate bootstrap_mean(std::span<const double> per_point, int n_folds,
                               std::uint64_t seed) {
  if (n_folds < 2) {
    throw ParameterError("bootstrap needs n_folds >= 2 to report a spread");
  }
  const std::size_t n = per_point.size();
  if (n < 10 * static_cast<std::size_t>(n_folds)) {
    throw ParameterError(fmt::format(
        "bootstrap needs at least {} samples for {} folds, got {}",
        10 * n_folds, n_folds, n));
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<double> fold_means(static_cast<std::size_t>(n_folds));
  std::vector<double> sample(n);
  for (auto& m : fold_means) {
    for (auto& s : sample) s = per_point[pick(rng)];
    m = pairwise_mean(sample);
  }
  const double mean = pairwise_mean(fold_means);
  double ss = 0.0;
  for (const double m : fold_means) ss += (m - mean) * (m - mean);
  return {mean, std::sqrt(ss / (n_folds - 1)), n, n_folds};
}

EntropyEstimate entropy_bootstrap(const KdeModel& model,
                                  const PointSet& eval_points, int n_folds,
                                  std::uint64_t seed) {
  if (n_folds < 2) {
    throw ParameterError("entropy_bootstrap: n_folds must be >= 2");
  }
  if (eval_points.rows() < 10L * n_folds) {
    throw ParameterError(fmt::format(
        "entropy_bootstrap: need at least {} samples, got {}", 10 * n_folds,
        eval_points.rows()));
  }
  auto lp = model.logpdf_rows(eval_points);
  for (auto& v : lp) v = -v;
  return bootstrap_mean(lp, n_folds, seed);
}

void write_kde(const std::string& path, const KdeModel& model,
               const std::string& provenance) {
  nlohmann::ordered_json header;
  if (!provenance.empty()) header["provenance"] = provenance;
  header["dim"] = model.dim();
  header["n"] = model.size();
  header["h"] = model.bandwidth();
  std::vector<double> cov;
  for (int i = 0; i < model.dim(); ++i) {
    for (int j = 0; j < model.dim(); ++j) cov.push_back(model.covariance()(i, j));
  }
  header["covariance"] = cov;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << header.dump() << '\n';
  const auto& pts = model.train_points();
  std::vector<unsigned char> bytes(static_cast<std::size_t>(pts.size()) * 8);
  for (Eigen::Index i = 0; i < pts.size(); ++i) {
    std::uint64_t bits;
    const double v = pts.data()[i];
    std::memcpy(&bits, &v, sizeof(bits));
    for (int b = 0; b < 8; ++b) {
      bytes[static_cast<std::size_t>(i) * 8 + b] =
          static_cast<unsigned char>((bits >> (8 * b)) & 0xFFu);
    }
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

KdeModel read_kde(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path, 1, "missing header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, 1, e.what());
  }
  int d = 0;
  std::size_t n = 0;
  double h = 0.0;
  std::vector<double> cov;
  try {
    d = header.at("dim").get<int>();
    n = header.at("n").get<std::size_t>();
    h = header.at("h").get<double>();
    cov = header.at("covariance").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, 1, e.what());
  }
  if (d < 1 || cov.size() != static_cast<std::size_t>(d) * d) {
    throw ParseError(path, 1, "inconsistent dim / covariance");
  }
  Eigen::MatrixXd covariance(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) covariance(i, j) = cov[static_cast<std::size_t>(i) * d + j];
  }
  PointSet pts(static_cast<Eigen::Index>(n), d);
  std::vector<unsigned char> bytes(n * static_cast<std::size_t>(d) * 8);
  in.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
    throw ParseError(path, 0, "payload truncated");
  }
  for (std::size_t i = 0; i < n * static_cast<std::size_t>(d); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
    }
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    pts.data()[i] = v;
  }
  return KdeModel(std::move(pts), std::move(covariance), h);
}

PointSet column_points(std::span<const double> values) {
  PointSet pts(static_cast<Eigen::Index>(values.size()), 1);
  for (std::size_t i = 0; i < values.size(); ++i) pts(static_cast<Eigen::Index>(i), 0) = values[i];
  return pts;
}

}  // namespace prosody_mi::density
