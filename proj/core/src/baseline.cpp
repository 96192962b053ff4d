#include "prosody_mi/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "prosody_mi/csv.hpp"
#include "prosody_mi/density.hpp"
#include "prosody_mi/error.hpp"
#include "prosody_mi/numeric.hpp"

namespace prosody_mi::baseline {

namespace {

constexpr const char* kOtherLabel = "other";

int value_dim(const std::vector<MixedPairSample>& samples) {
  if (samples.empty()) throw ParameterError("no samples");
  const std::size_t d = samples.front().value.size();
  if (d == 0) throw ParameterError("samples have empty values");
  for (const auto& s : samples) {
    if (s.value.size() != d) throw ShapeError("samples differ in value dimension");
    for (double v : s.value) {
      if (!std::isfinite(v)) throw ValidationError("non-finite sample value");
    }
  }
  return static_cast<int>(d);
}

density::PointSet gather(const std::vector<MixedPairSample>& samples,
                         const std::vector<std::size_t>& idx, int d) {
  density::PointSet out(static_cast<Eigen::Index>(idx.size()), d);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    for (int j = 0; j < d; ++j) out(static_cast<Eigen::Index>(r), j) = samples[idx[r]].value[j];
  }
  return out;
}

density::KdeModel fit(const density::PointSet& train, const density::PointSet& heldout) {
  const int d = static_cast<int>(train.cols());
  return density::fit_kde(train, heldout,
                          density::default_bandwidth_grid(train.rows(), d))
      .model;
}

struct Partition {
  std::vector<std::size_t> train, heldout, eval;
};

Partition partition(const std::vector<SampleRole>& roles,
                    const std::vector<std::size_t>& members) {
  Partition p;
  for (std::size_t i : members) {
    switch (roles[i]) {
      case SampleRole::kTrain: p.train.push_back(i); break;
      case SampleRole::kHeldout: p.heldout.push_back(i); break;
      case SampleRole::kEval: p.eval.push_back(i); break;
    }
  }
  return p;
}

double mean_neg(const std::vector<double>& logp) {
  return -pairwise_mean(logp);
}

double normal_pdf(double x, double mu, double sd) {
  const double z = (x - mu) / sd;
  return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

struct Simpson {
  const std::function<double(double)>& f;
  bool failed = false;

  double step(double a, double b, double fa, double fm, double fb, double whole,
              double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    if (depth <= 0) {
      failed = true;
      return left + right;
    }
    return step(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           step(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
  }
};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<SampleRole> assign_roles(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<SampleRole> roles(n);
  for (std::size_t pos = 0; pos < n; ++pos) {
    const std::size_t slot = pos % 10;
    roles[order[pos]] = slot < 5    ? SampleRole::kTrain
                        : slot == 5 ? SampleRole::kHeldout
                                    : SampleRole::kEval;
  }
  return roles;
}

KsResult ks_mixed_mi(const std::vector<MixedPairSample>& samples,
                     const KsOptions& options) {
  const int d = value_dim(samples);

  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < samples.size(); ++i) by_label[samples[i].label].push_back(i);
  std::map<std::string, std::vector<std::size_t>> classes;
  for (auto& [label, idx] : by_label) {
    auto& dst = idx.size() < options.min_class_count ? classes[kOtherLabel] : classes[label];
    dst.insert(dst.end(), idx.begin(), idx.end());
  }
  if (classes.size() < 2) {
    throw ParameterError("mixed-pair MI needs at least two labels with data");
  }

  const auto roles = assign_roles(samples.size(), options.seed);
  std::vector<std::size_t> all(samples.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const Partition pooled = partition(roles, all);

  const auto pooled_model =
      fit(gather(samples, pooled.train, d), gather(samples, pooled.heldout, d));

  double h_cond = 0.0;
  double h_all_acc = 0.0;
  std::size_t n_eval = 0;
  std::vector<std::pair<std::size_t, double>> class_terms;
  for (const auto& [label, idx] : classes) {
    const Partition p = partition(roles, idx);
    if (p.train.size() < static_cast<std::size_t>(d) + 2 || p.heldout.empty() ||
        p.eval.empty()) {
      throw DegenerateDataError(
          fmt::format("insufficient class data for label '{}' ({} samples)", label,
                      idx.size()));
    }
    const auto model =
        fit(gather(samples, p.train, d), gather(samples, p.heldout, d));
    const auto eval = gather(samples, p.eval, d);
    const double h_c = mean_neg(model.logpdf_rows(eval));
    const auto lp_all = pooled_model.logpdf_rows(eval);
    h_all_acc += -pairwise_sum(lp_all);
    class_terms.emplace_back(p.eval.size(), h_c);
    n_eval += p.eval.size();
  }
  for (const auto& [count, h_c] : class_terms) {
    h_cond += static_cast<double>(count) / static_cast<double>(n_eval) * h_c;
  }

  KsResult out;
  out.h_nats = h_all_acc / static_cast<double>(n_eval);
  out.h_cond_nats = h_cond;
  out.mi_nats = out.h_nats - out.h_cond_nats;
  out.n_classes = classes.size();
  return out;
}

double quadrature_mi_oracle(std::span<const double> class_probs,
                            std::span<const double> class_means,
                            std::span<const double> class_sds) {
  const std::size_t c = class_probs.size();
  if (c == 0 || class_means.size() != c || class_sds.size() != c) {
    throw ParameterError("class probabilities, means and sds must be non-empty and equal length");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    if (!(class_probs[i] >= 0.0)) throw ParameterError("class probabilities must be >= 0");
    if (!(class_sds[i] > 0.0)) throw ParameterError("class sds must be > 0");
    total += class_probs[i];
  }
  if (std::abs(total - 1.0) > 1e-9) throw ParameterError("class probabilities must sum to 1");

  double mean = 0.0;
  double second = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    mean += class_probs[i] * class_means[i];
    second += class_probs[i] * (class_sds[i] * class_sds[i] + class_means[i] * class_means[i]);
  }
  const double sd = std::sqrt(std::max(second - mean * mean, 0.0));
  const double a = mean - 10.0 * sd;
  const double b = mean + 10.0 * sd;

  const std::function<double(double)> integrand = [&](double x) {
    double p = 0.0;
    for (std::size_t i = 0; i < c; ++i) {
      p += class_probs[i] * normal_pdf(x, class_means[i], class_sds[i]);
    }
    return p > 0.0 ? -p * std::log(p) : 0.0;
  };

  // Split the range so no component can hide between the first samples.
  constexpr int kPanels = 64;
  Simpson simpson{integrand};
  double h_mix = 0.0;
  const double w = (b - a) / kPanels;
  for (int k = 0; k < kPanels; ++k) {
    const double lo = a + k * w;
    const double hi = lo + w;
    const double flo = integrand(lo);
    const double fmid = integrand(0.5 * (lo + hi));
    const double fhi = integrand(hi);
    const double whole = w / 6.0 * (flo + 4.0 * fmid + fhi);
    h_mix += simpson.step(lo, hi, flo, fmid, fhi, whole, 1e-6 / kPanels, 40);
  }
  if (simpson.failed || !std::isfinite(h_mix)) {
    throw NumericError("quadrature did not reach tolerance 1e-6");
  }

  double h_cond = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    h_cond += class_probs[i] *
              0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * class_sds[i] * class_sds[i]);
  }
  return h_mix - h_cond;
}

double histogram_mi_oracle(const std::vector<MixedPairSample>& samples, int n_bins) {
  if (n_bins < 1) throw ParameterError("n_bins must be >= 1");
  const int d = value_dim(samples);
  if (d != 1) throw ShapeError("histogram oracle takes scalar values");

  double lo = samples.front().value[0];
  double hi = lo;
  for (const auto& s : samples) {
    lo = std::min(lo, s.value[0]);
    hi = std::max(hi, s.value[0]);
  }
  if (hi == lo) throw DegenerateDataError("histogram oracle: constant values");
  if (n_bins == 1) return 0.0;

  std::map<std::string, std::vector<double>> joint;
  std::vector<double> bin_marginal(static_cast<std::size_t>(n_bins), 0.0);
  const double width = (hi - lo) / n_bins;
  for (const auto& s : samples) {
    int bin = static_cast<int>((s.value[0] - lo) / width);
    bin = std::clamp(bin, 0, n_bins - 1);
    auto& row = joint[s.label];
    if (row.empty()) row.assign(static_cast<std::size_t>(n_bins), 0.0);
    row[static_cast<std::size_t>(bin)] += 1.0;
    bin_marginal[static_cast<std::size_t>(bin)] += 1.0;
  }
  const double n = static_cast<double>(samples.size());
  std::vector<double> terms;
  for (const auto& [label, row] : joint) {
    const double p_label = std::accumulate(row.begin(), row.end(), 0.0) / n;
    for (int b = 0; b < n_bins; ++b) {
      const double pj = row[static_cast<std::size_t>(b)] / n;
      if (pj <= 0.0) continue;
      const double pb = bin_marginal[static_cast<std::size_t>(b)] / n;
      terms.push_back(pj * std::log(pj / (p_label * pb)));
    }
  }
  return pairwise_sum(terms);
}

PipelineResult pipeline_mixed_mi(const std::vector<MixedPairSample>& samples,
                                 const PipelineOptions& options) {
  const int d = value_dim(samples);

  std::map<std::string, int> label_index;
  for (const auto& s : samples) label_index.emplace(s.label, 0);
  if (label_index.size() < 2) throw ParameterError("mixed-pair MI needs at least two labels");
  int next = 0;
  for (auto& [label, idx] : label_index) idx = next++;
  const int n_labels = next;

  const auto roles = assign_roles(samples.size(), options.seed);
  std::vector<std::size_t> all(samples.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const Partition p = partition(roles, all);

  const auto model =
      fit(gather(samples, p.train, d), gather(samples, p.heldout, d));
  const double h = mean_neg(model.logpdf_rows(gather(samples, p.eval, d)));

  auto joined = [&](const std::vector<std::size_t>& idx) {
    corpus::JoinedDataset ds;
    ds.inputs = corpus::RowMatrix::Zero(static_cast<Eigen::Index>(idx.size()), n_labels);
    ds.targets = gather(samples, idx, d);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      ds.token_ids.push_back({"pair", static_cast<int>(idx[r])});
      ds.inputs(static_cast<Eigen::Index>(r), label_index.at(samples[idx[r]].label)) = 1.0;
    }
    return ds;
  };
  const auto family = d == 1 ? predictor::PredictiveFamily::gaussian()
                             : predictor::PredictiveFamily::gaussian_diag(d);
  auto config = options.head;
  config.seed = splitmix64(options.seed);
  const auto head = predictor::train_head(joined(p.train), joined(p.heldout), config, family);

  PipelineResult out;
  out.h_nats = h;
  out.h_cond_nats = predictor::conditional_xent(head, joined(p.eval));
  out.mi_nats = out.h_nats - out.h_cond_nats;
  return out;
}

std::vector<MixedPairSample> generate_samples(const ValidationInstance& instance) {
  const std::size_t c = instance.probs.size();
  if (c == 0 || instance.means.size() != c || instance.sds.size() != c) {
    throw ParameterError(fmt::format("instance '{}': inconsistent class lists", instance.name));
  }
  std::mt19937_64 rng(instance.seed);
  std::discrete_distribution<std::size_t> pick(instance.probs.begin(), instance.probs.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<MixedPairSample> out;
  out.reserve(instance.n);
  for (std::size_t i = 0; i < instance.n; ++i) {
    const std::size_t k = pick(rng);
    out.push_back({fmt::format("c{}", k), {instance.means[k] + instance.sds[k] * normal(rng)}});
  }
  return out;
}

std::vector<ValidationInstance> default_validation_suite(std::uint64_t seed) {
  std::vector<ValidationInstance> suite;
  for (double s : {0.0, 1.0, 2.0, 4.0}) {
    ValidationInstance inst;
    inst.name = fmt::format("two_gauss_sep{}", s);
    inst.probs = {0.5, 0.5};
    inst.means = {-0.5 * s, 0.5 * s};
    inst.sds = {1.0, 1.0};
    inst.seed = splitmix64(seed + suite.size());
    suite.push_back(inst);
  }
  ValidationInstance indep;
  indep.name = "independent_three_labels";
  indep.probs = {0.2, 0.3, 0.5};
  indep.means = {0.0, 0.0, 0.0};
  indep.sds = {1.0, 1.0, 1.0};
  indep.seed = splitmix64(seed + suite.size());
  suite.push_back(indep);
  return suite;
}

std::vector<ValidationRow> run_validation(const std::vector<ValidationInstance>& suite) {
  if (suite.empty()) throw ParameterError("validation suite is empty");
  std::vector<ValidationRow> rows;
  for (const auto& inst : suite) {
    const auto samples = generate_samples(inst);
    ValidationRow row;
    row.instance = inst.name;
    row.oracle_mi = quadrature_mi_oracle(inst.probs, inst.means, inst.sds);
    KsOptions ks;
    ks.seed = inst.seed;
    row.ks_mi = ks_mixed_mi(samples, ks).mi_nats;
    PipelineOptions pipe;
    pipe.seed = inst.seed;
    row.pipeline_mi = pipeline_mixed_mi(samples, pipe).mi_nats;
    row.abs_gap_ks = std::abs(row.ks_mi - row.oracle_mi);
    row.abs_gap_pipeline = std::abs(row.pipeline_mi - row.oracle_mi);
    rows.push_back(row);
  }
  return rows;
}

std::string validation_report_csv(const std::vector<ValidationRow>& rows,
                                  const std::string& provenance) {
  std::string out;
  if (!provenance.empty()) out += "# " + provenance + "\n";
  out += "instance,oracle_mi,ks_mi,pipeline_mi,abs_gap_ks,abs_gap_pipeline\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}\n", r.instance, r.oracle_mi,
                       r.ks_mi, r.pipeline_mi, r.abs_gap_ks, r.abs_gap_pipeline);
  }
  return out;
}

}  // namespace prosody_mi::baseline
