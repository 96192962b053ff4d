#include "prosody_mi/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "prosody_mi/csv.hpp"
#include "prosody_mi/error.hpp"
#include "prosody_mi/numeric.hpp"

namespace prosody_mi::predictor {

namespace {
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
}

// ------------------------------------------------------------------ families

std::string to_string(const PredictiveFamily& family) {
  switch (family.kind) {
    case FamilyKind::kGaussianScalar:
      return "gaussian_scalar";
    case FamilyKind::kGammaScalar:
      return "gamma_scalar";
    case FamilyKind::kGaussianDiagVector:
      return "gaussian_diag_vector";
  }
  return "?";
}

PredictiveFamily parse_family(const std::string& name, int target_dim) {
  if (name == "gaussian" || name == "gaussian_scalar") {
    if (target_dim != 1) {
      return PredictiveFamily::gaussian_diag(target_dim);
    }
    return PredictiveFamily::gaussian();
  }
  if (name == "gamma" || name == "gamma_scalar") {
    if (target_dim != 1) {
      throw ParameterError("the gamma family models scalar targets only");
    }
    return PredictiveFamily::gamma();
  }
  if (name == "gaussian_diag" || name == "gaussian_diag_vector") {
    return PredictiveFamily::gaussian_diag(target_dim);
  }
  throw ParameterError("unknown predictive family '" + name + "'");
}

double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double inverse_softplus(double y) {
  if (!(y > 0.0)) throw ParameterError("inverse_softplus needs y > 0");
  return y > 30.0 ? y : std::log(std::expm1(y));
}

namespace {

void check_sizes(const PredictiveFamily& family, std::span<const double> params,
                 std::span<const double> target) {
  if (static_cast<int>(params.size()) != family.param_count() ||
      static_cast<int>(target.size()) != family.target_dim) {
    throw ShapeError(fmt::format("{}: expected {} params and {} targets",
                                 to_string(family), family.param_count(),
                                 family.target_dim));
  }
}

}  // namespace

double nll(const PredictiveFamily& family, std::span<const double> params,
           std::span<const double> target) {
  check_sizes(family, params, target);
  switch (family.kind) {
    case FamilyKind::kGaussianScalar:
    case FamilyKind::kGaussianDiagVector: {
      const int k = family.target_dim;
      double total = 0.0;
      for (int j = 0; j < k; ++j) {
        const double mu = params[j];
        const double sigma = params[k + j];
        if (!(sigma > 0.0)) throw ParameterError("gaussian sigma must be > 0");
        const double z = (target[j] - mu) / sigma;
        total += kHalfLog2Pi + std::log(sigma) + 0.5 * z * z;
      }
      return total;
    }
    case FamilyKind::kGammaScalar: {
      const double alpha = params[0];
      const double beta = params[1];
      const double y = target[0];
      if (!(alpha > 0.0) || !(beta > 0.0)) {
        throw ParameterError("gamma shape and rate must be > 0");
      }
      if (!(y > 0.0)) {
        throw SupportError(fmt::format("gamma target {} is not > 0", y));
      }
      return -alpha * std::log(beta) + boost::math::lgamma(alpha) -
             (alpha - 1.0) * std::log(y) + beta * y;
    }
  }
  return 0.0;
}

void nll_gradient(const PredictiveFamily& family, std::span<const double> params,
                  std::span<const double> target, std::span<double> grad) {
  check_sizes(family, params, target);
  if (grad.size() != params.size()) throw ShapeError("gradient buffer size");
  switch (family.kind) {
    case FamilyKind::kGaussianScalar:
    case FamilyKind::kGaussianDiagVector: {
      const int k = family.target_dim;
      for (int j = 0; j < k; ++j) {
        const double mu = params[j];
        const double sigma = params[k + j];
        const double r = target[j] - mu;
        const double s2 = sigma * sigma;
        grad[j] = -r / s2;
        grad[k + j] = 1.0 / sigma - r * r / (s2 * sigma);
      }
      return;
    }
    case FamilyKind::kGammaScalar: {
      const double alpha = params[0];
      const double beta = params[1];
      const double y = target[0];
      if (!(y > 0.0)) {
        throw SupportError(fmt::format("gamma target {} is not > 0", y));
      }
      grad[0] = -std::log(beta) + boost::math::digamma(alpha) - std::log(y);
      grad[1] = -alpha / beta + y;
      return;
    }
  }
}

namespace {

// Which outputs pass through softplus.
bool is_positive_param(const PredictiveFamily& family, int index) {
  if (family.kind == FamilyKind::kGammaScalar) return true;
  return index >= family.target_dim;
}

}  // namespace

void raw_to_params(const PredictiveFamily& family, std::span<const double> raw,
                   std::span<double> params) {
  for (int i = 0; i < family.param_count(); ++i) {
    params[i] = is_positive_param(family, i) ? softplus(raw[i]) + kPositiveFloor
                                             : raw[i];
  }
}

void raw_to_params_jacobian(const PredictiveFamily& family,
                            std::span<const double> raw,
                            std::span<double> dparams_draw) {
  for (int i = 0; i < family.param_count(); ++i) {
    dparams_draw[i] = is_positive_param(family, i) ? sigmoid(raw[i]) : 1.0;
  }
}

std::vector<double> unconditional_fit(const PredictiveFamily& family,
                                      const corpus::RowMatrix& targets) {
  const auto n = targets.rows();
  if (n == 0) throw ParameterError("unconditional_fit: no targets");
  if (targets.cols() != family.target_dim) {
    throw ShapeError("unconditional_fit: target dimension mismatch");
  }
  std::vector<double> params(static_cast<std::size_t>(family.param_count()));
  if (family.kind == FamilyKind::kGammaScalar) {
    double mean = 0.0;
    double mean_log = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double y = targets(i, 0);
      if (!(y > 0.0)) {
        throw SupportError(fmt::format("gamma target {} at row {} is not > 0", y, i));
      }
      mean += y;
      mean_log += std::log(y);
    }
    mean /= static_cast<double>(n);
    mean_log /= static_cast<double>(n);
    const double s = std::log(mean) - mean_log;
    double alpha = 1.0;
    if (s > 1e-12) {
      alpha = (3.0 - s + std::sqrt((s - 3.0) * (s - 3.0) + 24.0 * s)) / (12.0 * s);
      for (int it = 0; it < 50; ++it) {
        const double f = std::log(alpha) - boost::math::digamma(alpha) - s;
        const double df = 1.0 / alpha - boost::math::trigamma(alpha);
        const double next = alpha - f / df;
        alpha = next > 0.0 ? next : alpha / 2.0;
        if (std::abs(f) < 1e-12) break;
      }
    } else {
      alpha = 1e6;  // zero spread: effectively a point mass
    }
    params[0] = alpha;
    params[1] = alpha / mean;
    return params;
  }
  const int k = family.target_dim;
  for (int j = 0; j < k; ++j) {
    const double mean = targets.col(j).mean();
    const double var = (targets.col(j).array() - mean).square().mean();
    params[j] = mean;
    params[k + j] = std::max(std::sqrt(var), kPositiveFloor * 2.0);
  }
  return params;
}

// ---------------------------------------------------------------------- MLP

void MlpConfig::validate() const {
  if (n_layers < 1) throw ParameterError("n_layers must be >= 1");
  if (hidden_units < 1) throw ParameterError("hidden_units must be >= 1");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
    throw ParameterError("dropout_p must be in [0, 1)");
  }
  if (!(l2_lambda >= 0.0)) throw ParameterError("l2_lambda must be >= 0");
  if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be > 0");
  if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
  if (max_epochs < 1) throw ParameterError("max_epochs must be >= 1");
  if (patience < 1) throw ParameterError("patience must be >= 1");
}

TrainedHead initialize_head(const MlpConfig& config,
                            const PredictiveFamily& family, int input_dim) {
  config.validate();
  if (input_dim < 1) throw ShapeError("input dimension must be >= 1");
  TrainedHead head;
  head.config = config;
  head.family = family;
  head.input_dim = input_dim;
  std::mt19937_64 rng(config.seed);
  int fan_in = input_dim;
  for (int l = 0; l < config.n_layers; ++l) {
    DenseLayer layer;
    const double limit = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> dist(-limit, limit);
    layer.weights.resize(config.hidden_units, fan_in);
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) {
      layer.weights.data()[i] = dist(rng);
    }
    layer.bias = Eigen::VectorXd::Zero(config.hidden_units);
    head.layers.push_back(std::move(layer));
    fan_in = config.hidden_units;
  }
  DenseLayer out;
  out.weights = Eigen::MatrixXd::Zero(family.param_count(), fan_in);
  out.bias = Eigen::VectorXd::Zero(family.param_count());
  head.layers.push_back(std::move(out));
  return head;
}

namespace {

// Raw network outputs, column per sample (P x B), for inputs given as
// columns (d x B).
Eigen::MatrixXd raw_outputs(const std::vector<DenseLayer>& layers,
                            const Eigen::MatrixXd& inputs_cols) {
  Eigen::MatrixXd a = inputs_cols;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Eigen::MatrixXd z = layers[l].weights * a;
    z.colwise() += layers[l].bias;
    a = l + 1 < layers.size() ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
  }
  return a;
}

void check_input(const TrainedHead& head, Eigen::Index cols) {
  if (cols != head.input_dim) {
    throw ShapeError(fmt::format("embedding has dimension {}, head expects {}",
                                 cols, head.input_dim));
  }
}

}  // namespace

corpus::RowMatrix forward(const TrainedHead& head, const corpus::RowMatrix& inputs) {
  check_input(head, inputs.cols());
  const Eigen::MatrixXd raw = raw_outputs(head.layers, inputs.transpose());
  const int p = head.family.param_count();
  corpus::RowMatrix params(inputs.rows(), p);
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    raw_to_params(head.family, std::span<const double>(raw.col(i).data(), p),
                  std::span<double>(params.row(i).data(), p));
  }
  return params;
}

std::vector<double> forward(const TrainedHead& head,
                            std::span<const double> embedding) {
  check_input(head, static_cast<Eigen::Index>(embedding.size()));
  corpus::RowMatrix row(1, head.input_dim);
  for (int j = 0; j < head.input_dim; ++j) row(0, j) = embedding[j];
  const auto params = forward(head, row);
  return {params.data(), params.data() + params.size()};
}

std::vector<double> row_nll(const TrainedHead& head,
                            const corpus::JoinedDataset& data) {
  if (data.targets.cols() != head.family.target_dim) {
    throw ShapeError(fmt::format("targets have dimension {}, family expects {}",
                                 data.targets.cols(), head.family.target_dim));
  }
  const auto params = forward(head, data.inputs);
  const int p = head.family.param_count();
  const int k = head.family.target_dim;
  std::vector<double> out(data.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    try {
      out[i] = nll(head.family, std::span<const double>(params.row(r).data(), p),
                   std::span<const double>(data.targets.row(r).data(), k));
    } catch (const SupportError& e) {
      const std::string who =
          i < data.token_ids.size() ? corpus::to_string(data.token_ids[i])
                                    : fmt::format("row {}", i);
      throw SupportError(fmt::format("{}: {}", who, e.what()));
    }
  }
  return out;
}

double conditional_xent(const TrainedHead& head, const corpus::JoinedDataset& test) {
  if (test.size() == 0) throw ParameterError("conditional_xent: empty test set");
  const auto values = row_nll(head, test);
  return pairwise_mean(values);
}

namespace {

struct AdamSlot {
  Eigen::MatrixXd m_w, v_w;
  Eigen::VectorXd m_b, v_b;
};

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void check_dataset(const corpus::JoinedDataset& data, const PredictiveFamily& family,
                   const char* name) {
  if (data.size() == 0) {
    throw ParameterError(fmt::format("train_head: {} set is empty", name));
  }
  if (data.targets.cols() != family.target_dim) {
    throw ShapeError(fmt::format("{} targets have dimension {}, family expects {}",
                                 name, data.targets.cols(), family.target_dim));
  }
  if (!data.targets.allFinite() || !data.inputs.allFinite()) {
    throw ValidationError(fmt::format("{} set has non-finite values", name));
  }
  if (family.kind == FamilyKind::kGammaScalar) {
    for (Eigen::Index i = 0; i < data.targets.rows(); ++i) {
      if (!(data.targets(i, 0) > 0.0)) {
        throw SupportError(fmt::format("{} row {}: gamma target {} is not > 0",
                                       name, i, data.targets(i, 0)));
      }
    }
  }
}

}  // namespace

TrainedHead train_head(const corpus::JoinedDataset& train,
                       const corpus::JoinedDataset& val,
                       const MlpConfig& config, const PredictiveFamily& family) {
  config.validate();
  check_dataset(train, family, "train");
  check_dataset(val, family, "validation");
  if (train.inputs.cols() != val.inputs.cols()) {
    throw ShapeError("train and validation inputs differ in dimension");
  }
  const int d = static_cast<int>(train.inputs.cols());
  const int p = family.param_count();
  const int k = family.target_dim;

  TrainedHead head = initialize_head(config, family, d);
  // Start from the best constant predictor so that training can only move
  // away from the unconditional fit when the inputs help.
  const auto constant = unconditional_fit(family, train.targets);
  for (int i = 0; i < p; ++i) {
    head.layers.back().bias(i) =
        is_positive_param(family, i)
            ? inverse_softplus(std::max(constant[i] - kPositiveFloor, 1e-12))
            : constant[i];
  }

  std::vector<AdamSlot> adam(head.layers.size());
  for (std::size_t l = 0; l < head.layers.size(); ++l) {
    const auto& layer = head.layers[l];
    adam[l].m_w = Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols());
    adam[l].v_w = adam[l].m_w;
    adam[l].m_b = Eigen::VectorXd::Zero(layer.bias.size());
    adam[l].v_b = adam[l].m_b;
  }

  std::mt19937_64 rng(config.seed ^ 0x9E3779B97F4A7C15ULL);
  std::bernoulli_distribution keep(1.0 - config.dropout_p);
  const double keep_scale = 1.0 / (1.0 - config.dropout_p);
  const std::size_t n = train.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  const std::size_t n_hidden = head.layers.size() - 1;
  std::vector<Eigen::MatrixXd> acts(n_hidden + 1);   // inputs to each layer
  std::vector<Eigen::MatrixXd> masks(n_hidden);       // relu' * dropout scale
  std::vector<double> params(p), grad(p), jac(p);
  long step = 0;

  double best = std::numeric_limits<double>::infinity();
  std::vector<DenseLayer> best_layers = head.layers;
  int since_best = 0;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n;
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(config.batch_size));
      const auto b = static_cast<Eigen::Index>(end - start);

      Eigen::MatrixXd& a0 = acts[0];
      a0.resize(d, b);
      Eigen::MatrixXd targets(k, b);
      for (Eigen::Index c = 0; c < b; ++c) {
        const auto row = static_cast<Eigen::Index>(order[start + static_cast<std::size_t>(c)]);
        a0.col(c) = train.inputs.row(row).transpose();
        targets.col(c) = train.targets.row(row).transpose();
      }
      for (std::size_t l = 0; l < n_hidden; ++l) {
        Eigen::MatrixXd z = head.layers[l].weights * acts[l];
        z.colwise() += head.layers[l].bias;
        masks[l].resize(z.rows(), z.cols());
        for (Eigen::Index i = 0; i < z.size(); ++i) {
          double m = z.data()[i] > 0.0 ? 1.0 : 0.0;
          if (config.dropout_p > 0.0) m *= keep(rng) ? keep_scale : 0.0;
          masks[l].data()[i] = m;
        }
        acts[l + 1] = z.cwiseProduct(masks[l]);
      }
      Eigen::MatrixXd out = head.layers.back().weights * acts[n_hidden];
      out.colwise() += head.layers.back().bias;

      Eigen::MatrixXd delta(p, b);
      double batch_loss = 0.0;
      for (Eigen::Index c = 0; c < b; ++c) {
        const std::span<const double> raw(out.col(c).data(), p);
        const std::span<const double> y(targets.col(c).data(), k);
        raw_to_params(family, raw, params);
        raw_to_params_jacobian(family, raw, jac);
        batch_loss += nll(family, params, y);
        nll_gradient(family, params, y, grad);
        for (int i = 0; i < p; ++i) delta(i, c) = grad[i] * jac[i] / static_cast<double>(b);
      }
      if (!std::isfinite(batch_loss)) {
        throw TrainingDivergedError(
            epoch, fmt::format("training diverged in epoch {} (non-finite loss)", epoch));
      }

      ++step;
      const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      for (std::size_t li = head.layers.size(); li-- > 0;) {
        auto& layer = head.layers[li];
        Eigen::MatrixXd gw = delta * acts[li].transpose();
        if (config.l2_lambda > 0.0) gw += 2.0 * config.l2_lambda * layer.weights;
        const Eigen::VectorXd gb = delta.rowwise().sum();
        if (li > 0) {
          delta = (layer.weights.transpose() * delta).cwiseProduct(masks[li - 1]);
        }
        auto& s = adam[li];
        s.m_w = kBeta1 * s.m_w + (1.0 - kBeta1) * gw;
        s.v_w = kBeta2 * s.v_w + (1.0 - kBeta2) * gw.cwiseAbs2();
        s.m_b = kBeta1 * s.m_b + (1.0 - kBeta1) * gb;
        s.v_b = kBeta2 * s.v_b + (1.0 - kBeta2) * gb.cwiseAbs2();
        layer.weights.array() -= config.learning_rate * (s.m_w.array() / bc1) /
                                 ((s.v_w.array() / bc2).sqrt() + kAdamEps);
        layer.bias.array() -= config.learning_rate * (s.m_b.array() / bc1) /
                              ((s.v_b.array() / bc2).sqrt() + kAdamEps);
      }
    }

    double val_loss;
    try {
      val_loss = conditional_xent(head, val);
    } catch (const ParameterError&) {
      val_loss = std::numeric_limits<double>::quiet_NaN();
    }
    if (!std::isfinite(val_loss)) {
      throw TrainingDivergedError(
          epoch, fmt::format("training diverged in epoch {} (validation nll {})",
                             epoch, val_loss));
    }
    head.val_history.push_back(val_loss);
    if (val_loss < best) {
      best = val_loss;
      best_layers = head.layers;
      head.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  head.layers = std::move(best_layers);
  head.val_xent_nats = best;
  return head;
}

// ------------------------------------------------------------ random search

void SearchSpace::validate() const {
  if (!(lr_min > 0.0 && lr_min <= lr_max)) {
    throw ParameterError("search space: need 0 < lr_min <= lr_max");
  }
  if (!(l2_min > 0.0 && l2_min <= l2_max)) {
    throw ParameterError("search space: need 0 < l2_min <= l2_max");
  }
  if (dropout.empty() || layers.empty() || hidden.empty() || batch.empty()) {
    throw ParameterError("search space: every discrete field needs a value");
  }
  if (max_epochs < 1 || patience < 1) {
    throw ParameterError("search space: max_epochs and patience must be >= 1");
  }
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

template <typename T>
T pick(const std::vector<T>& values, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> dist(0, values.size() - 1);
  return values[dist(rng)];
}

double log_uniform(double lo, double hi, std::mt19937_64& rng) {
  if (lo == hi) return lo;
  std::uniform_real_distribution<double> dist(std::log(lo), std::log(hi));
  return std::exp(dist(rng));
}

}  // namespace

std::vector<MlpConfig> sample_configs(const SearchSpace& space, int n_trials,
                                      std::uint64_t seed) {
  space.validate();
  if (n_trials < 1) throw ParameterError("random_search: n_trials must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<MlpConfig> out;
  for (int t = 0; t < n_trials; ++t) {
    MlpConfig c;
    c.learning_rate = log_uniform(space.lr_min, space.lr_max, rng);
    c.l2_lambda = log_uniform(space.l2_min, space.l2_max, rng);
    c.dropout_p = pick(space.dropout, rng);
    c.n_layers = pick(space.layers, rng);
    c.hidden_units = pick(space.hidden, rng);
    c.batch_size = pick(space.batch, rng);
    c.max_epochs = space.max_epochs;
    c.patience = space.patience;
    c.seed = splitmix64(seed + static_cast<std::uint64_t>(t));
    c.validate();
    out.push_back(c);
  }
  return out;
}

SearchResult random_search(const SearchSpace& space, int n_trials,
                           const corpus::JoinedDataset& train,
                           const corpus::JoinedDataset& val,
                           const PredictiveFamily& family, std::uint64_t seed) {
  const auto configs = sample_configs(space, n_trials, seed);
  std::vector<std::optional<TrainedHead>> heads(configs.size());
  std::vector<TrialRecord> trials(configs.size());
  parallel_for(configs.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) {
      trials[t].trial = static_cast<int>(t);
      trials[t].config = configs[t];
      try {
        heads[t] = train_head(train, val, configs[t], family);
        trials[t].val_xent_nats = heads[t]->val_xent_nats;
        trials[t].status = TrialStatus::kOk;
      } catch (const TrainingDivergedError&) {
        trials[t].val_xent_nats = std::numeric_limits<double>::quiet_NaN();
        trials[t].status = TrialStatus::kDiverged;
      }
    }
  });

  std::optional<std::size_t> best;
  for (std::size_t t = 0; t < trials.size(); ++t) {
    if (trials[t].status != TrialStatus::kOk) continue;
    if (!best || trials[t].val_xent_nats < trials[*best].val_xent_nats) best = t;
  }
  if (!best) {
    throw NumericError("random search failed: all trials diverged\n" +
                       trial_log_csv(trials));
  }
  return {std::move(*heads[*best]), std::move(trials)};
}

std::string trial_log_csv(const std::vector<TrialRecord>& trials) {
  std::string out = "trial,lr,l2,dropout,layers,hidden,batch,val_xent_nats,status\n";
  for (const auto& t : trials) {
    out += fmt::format("{},{},{},{},{},{},{},{},{}\n", t.trial,
                       csv::format_double(t.config.learning_rate),
                       csv::format_double(t.config.l2_lambda),
                       csv::format_double(t.config.dropout_p), t.config.n_layers,
                       t.config.hidden_units, t.config.batch_size,
                       csv::format_double(t.val_xent_nats),
                       t.status == TrialStatus::kOk ? "ok" : "diverged");
  }
  return out;
}

// ------------------------------------------------------------ persistence

void write_head(const std::string& path, const TrainedHead& head,
                const std::string& provenance) {
  nlohmann::ordered_json header;
  if (!provenance.empty()) header["provenance"] = provenance;
  const auto& c = head.config;
  header["config"] = {{"n_layers", c.n_layers},     {"hidden_units", c.hidden_units},
                      {"dropout_p", c.dropout_p},   {"l2_lambda", c.l2_lambda},
                      {"learning_rate", c.learning_rate},
                      {"batch_size", c.batch_size}, {"max_epochs", c.max_epochs},
                      {"patience", c.patience},     {"seed", c.seed}};
  header["family"] = to_string(head.family);
  header["target_dim"] = head.family.target_dim;
  header["input_dim"] = head.input_dim;
  auto shapes = nlohmann::ordered_json::array();
  for (const auto& layer : head.layers) {
    shapes.push_back({layer.weights.rows(), layer.weights.cols()});
  }
  header["layers"] = shapes;
  header["zscore_ref"] = head.zscore_ref;
  header["context_type"] = std::string(corpus::to_string(head.context_type));
  header["val_xent_nats"] = head.val_xent_nats;
  header["best_epoch"] = head.best_epoch;
  header["val_history"] = head.val_history;
  header["dtype"] = "f32le";

  std::string payload;
  auto put = [&](double v) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof(bits));
    for (int i = 0; i < 4; ++i) payload.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
  };
  for (const auto& layer : head.layers) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index col = 0; col < layer.weights.cols(); ++col) put(layer.weights(r, col));
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) put(layer.bias(r));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << header.dump() << '\n';
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("write failed: " + path);
}

TrainedHead read_head(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path, 1, "missing header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path, 1, e.what());
  }
  TrainedHead head;
  try {
    const auto& c = header.at("config");
    head.config.n_layers = c.at("n_layers").get<int>();
    head.config.hidden_units = c.at("hidden_units").get<int>();
    head.config.dropout_p = c.at("dropout_p").get<double>();
    head.config.l2_lambda = c.at("l2_lambda").get<double>();
    head.config.learning_rate = c.at("learning_rate").get<double>();
    head.config.batch_size = c.at("batch_size").get<int>();
    head.config.max_epochs = c.at("max_epochs").get<int>();
    head.config.patience = c.at("patience").get<int>();
    head.config.seed = c.at("seed").get<std::uint64_t>();
    head.family = parse_family(header.at("family").get<std::string>(),
                               header.at("target_dim").get<int>());
    head.input_dim = header.at("input_dim").get<int>();
    head.zscore_ref = header.value("zscore_ref", std::string());
    head.context_type =
        corpus::parse_context_type(header.at("context_type").get<std::string>());
    head.val_xent_nats = header.at("val_xent_nats").get<double>();
    head.best_epoch = header.value("best_epoch", -1);
    head.val_history = header.value("val_history", std::vector<double>{});
    for (const auto& shape : header.at("layers")) {
      DenseLayer layer;
      layer.weights.resize(shape.at(0).get<Eigen::Index>(), shape.at(1).get<Eigen::Index>());
      layer.bias.resize(shape.at(0).get<Eigen::Index>());
      head.layers.push_back(std::move(layer));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, 1, e.what());
  }
  auto get = [&]() {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw ParseError(path, 0, "weight payload truncated");
    const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) |
                               static_cast<std::uint32_t>(b[1]) << 8 |
                               static_cast<std::uint32_t>(b[2]) << 16 |
                               static_cast<std::uint32_t>(b[3]) << 24;
    float f;
    std::memcpy(&f, &bits, sizeof(f));
    return static_cast<double>(f);
  };
  for (auto& layer : head.layers) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index col = 0; col < layer.weights.cols(); ++col) layer.weights(r, col) = get();
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = get();
  }
  return head;
}

}  // namespace prosody_mi::predictor
