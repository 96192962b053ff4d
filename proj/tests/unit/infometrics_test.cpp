#include "prosody_mi/infometrics.hpp"

#include <cmath>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "prosody_mi/error.hpp"
#include "prosody_mi/predictor.hpp"
#include "test_util.hpp"

namespace pm = prosody_mi;
namespace im = prosody_mi::infometrics;
namespace corpus = prosody_mi::corpus;
namespace density = prosody_mi::density;
namespace pred = prosody_mi::predictor;

namespace {

im::FeatureEntropy entropy(const std::string& feature, double h, double sd = 0.0) {
  im::FeatureEntropy e;
  e.feature = feature;
  e.estimate.value_nats = h;
  e.estimate.std_nats = sd;
  return e;
}

im::ConditionalEntropy cond(const std::string& feature, double h, corpus::ContextType ctx,
                            double sd = 0.0, const std::string& model = "m") {
  im::ConditionalEntropy c;
  c.feature = feature;
  c.value_nats = h;
  c.std_nats = sd;
  c.context_type = ctx;
  c.model_name = model;
  return c;
}

im::MiResult mi_row(const std::string& feature, corpus::ContextType ctx, double mi,
                    const std::string& model = "m") {
  im::MiResult r;
  r.feature = feature;
  r.context_type = ctx;
  r.model_name = model;
  r.h_nats = 1.0;
  r.h_cond_nats = 1.0 - mi;
  r.mi_nats = mi;
  return r;
}

}  // namespace

TEST(MutualInformation, TableArithmetic) {
  const auto r = im::mutual_information(
      entropy("prominence", 0.536),
      cond("prominence", -0.165, corpus::ContextType::kBidirectional));
  EXPECT_NEAR(r.mi_nats, 0.701, 1e-12);
  EXPECT_FALSE(r.negative());
  EXPECT_EQ(r.context_type, corpus::ContextType::kBidirectional);

  const auto f0 = im::mutual_information(entropy("f0", 11.619),
                                         cond("f0", 2.936, corpus::ContextType::kPastContext));
  EXPECT_NEAR(f0.mi_nats, 8.683, 1e-12);
}

TEST(MutualInformation, IdenticalEstimatesGiveZero) {
  const auto r = im::mutual_information(entropy("energy", 0.42),
                                        cond("energy", 0.42, corpus::ContextType::kCurrentWord));
  EXPECT_EQ(r.mi_nats, 0.0);
}

TEST(MutualInformation, SpreadsCombineInQuadrature) {
  const auto r = im::mutual_information(
      entropy("energy", 1.0, 0.3), cond("energy", 0.5, corpus::ContextType::kCurrentWord, 0.4));
  EXPECT_NEAR(r.mi_std, 0.5, 1e-15);
}

TEST(MutualInformation, NegativeIsKeptAndFlagged) {
  const auto r = im::mutual_information(entropy("pause", 0.10),
                                        cond("pause", 0.12, corpus::ContextType::kCurrentWord));
  EXPECT_LT(r.mi_nats, 0.0);
  EXPECT_TRUE(r.negative());
  EXPECT_EQ(im::report_flags(r, {0.0, true}), "negative_mi|uc_clamped");
}

TEST(MutualInformation, AntisymmetricExactly) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int i = 0; i < 100; ++i) {
    const double a = u(rng), b = u(rng);
    const auto ab = im::mutual_information(entropy("x", a),
                                           cond("x", b, corpus::ContextType::kCurrentWord));
    const auto ba = im::mutual_information(entropy("x", b),
                                           cond("x", a, corpus::ContextType::kCurrentWord));
    EXPECT_EQ(ab.mi_nats, -ba.mi_nats);
    EXPECT_EQ(ab.mi_nats, ab.h_nats - ab.h_cond_nats);
  }
}

TEST(MutualInformation, MetadataMismatchRejected) {
  EXPECT_THROW(im::mutual_information(entropy("energy", 1.0),
                                      cond("duration", 0.5, corpus::ContextType::kCurrentWord)),
               pm::ValidationError);
  auto h = entropy("energy", 1.0);
  h.zscored = true;
  EXPECT_THROW(
      im::mutual_information(h, cond("energy", 0.5, corpus::ContextType::kCurrentWord)),
      pm::ValidationError);
}

TEST(FutureContext, TableArithmetic) {
  const auto bi = im::mutual_information(
      entropy("prominence", 0.536), cond("prominence", -0.165, corpus::ContextType::kBidirectional));
  const auto past = im::mutual_information(
      entropy("prominence", 0.536), cond("prominence", -0.124, corpus::ContextType::kPastContext));
  EXPECT_NEAR(past.mi_nats, 0.660, 1e-12);
  const auto gain = im::future_context_mi(bi, past);
  EXPECT_NEAR(gain.mi_nats, 0.041, 1e-12);
  EXPECT_FALSE(gain.negative);
}

TEST(FutureContext, EqualMiGivesZeroAndNegativeIsFlagged) {
  const auto bi = mi_row("p", corpus::ContextType::kBidirectional, 0.3);
  const auto past = mi_row("p", corpus::ContextType::kPastContext, 0.3);
  EXPECT_EQ(im::future_context_mi(bi, past).mi_nats, 0.0);
  const auto more = mi_row("p", corpus::ContextType::kPastContext, 0.4);
  EXPECT_TRUE(im::future_context_mi(bi, more).negative);
}

TEST(FutureContext, ContextMismatchRejected) {
  const auto bi = mi_row("p", corpus::ContextType::kBidirectional, 0.3);
  const auto cur = mi_row("p", corpus::ContextType::kCurrentWord, 0.2);
  EXPECT_THROW(im::future_context_mi(bi, cur), pm::ValidationError);
  EXPECT_THROW(im::future_context_mi(cur, bi), pm::ValidationError);
  const auto other = mi_row("q", corpus::ContextType::kPastContext, 0.2);
  EXPECT_THROW(im::future_context_mi(bi, other), pm::ValidationError);
}

TEST(UncertaintyCoefficient, TableArithmetic) {
  const auto u = im::uncertainty_coefficient(0.701, 0.536);
  EXPECT_NEAR(u.value, 0.701 / 7.443, 1e-12);
  EXPECT_NEAR(u.value, 0.0942, 5e-5);
  EXPECT_FALSE(u.clamped);
}

TEST(UncertaintyCoefficient, Endpoints) {
  EXPECT_EQ(im::uncertainty_coefficient(0.0, 0.536).value, 0.0);
  const double h = 0.536;
  EXPECT_EQ(im::uncertainty_coefficient(h - im::kDefaultHMin, h).value, 1.0);
  const auto over = im::uncertainty_coefficient(10.0, h);
  EXPECT_EQ(over.value, 1.0);
  EXPECT_TRUE(over.clamped);
  const auto under = im::uncertainty_coefficient(-0.1, h);
  EXPECT_EQ(under.value, 0.0);
  EXPECT_TRUE(under.clamped);
}

TEST(UncertaintyCoefficient, ScaleConsistent) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const double h = 5.0 * u(rng);
    const double mi = 0.4 * (h - im::kDefaultHMin) * u(rng);
    EXPECT_EQ(im::uncertainty_coefficient(2.0 * mi, h).value,
              2.0 * im::uncertainty_coefficient(mi, h).value);
  }
}

TEST(UncertaintyCoefficient, EntropyAtFloorRejected) {
  EXPECT_THROW(im::uncertainty_coefficient(0.1, im::kDefaultHMin), pm::ParameterError);
  EXPECT_THROW(im::uncertainty_coefficient(0.1, -10.0), pm::ParameterError);
  EXPECT_NO_THROW(im::uncertainty_coefficient(0.1, -10.0, -20.0));
}

TEST(Correlate, PerfectLinear) {
  const std::vector<double> x = {1, 2, 3, 4, 5, 6};
  std::vector<double> y;
  for (double v : x) y.push_back(2.0 * v + 1.0);
  const auto c = im::correlate(x, y);
  EXPECT_NEAR(c.pearson_r, 1.0, 1e-15);
  EXPECT_NEAR(c.spearman_rho, 1.0, 1e-15);
  EXPECT_EQ(c.n, 6u);
}

TEST(Correlate, MonotoneDecreasingCubic) {
  std::vector<double> x, y;
  for (int i = -10; i <= 30; ++i) {
    x.push_back(i);
    y.push_back(-static_cast<double>(i) * i * i);
  }
  const auto c = im::correlate(x, y);
  EXPECT_GT(c.pearson_r, -1.0);
  EXPECT_LT(c.pearson_r, 0.0);
  EXPECT_NEAR(c.spearman_rho, -1.0, 1e-15);
}

TEST(Correlate, BivariateNormal) {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> g(0.0, 1.0);
  constexpr double kRho = 0.3;
  std::vector<double> x(10000), y(10000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = g(rng);
    y[i] = kRho * x[i] + std::sqrt(1.0 - kRho * kRho) * g(rng);
  }
  const auto c = im::correlate(x, y);
  EXPECT_NEAR(c.pearson_r, kRho, 0.03);
  // Spearman of a Gaussian pair is (6 / pi) asin(rho / 2).
  EXPECT_NEAR(c.spearman_rho, 6.0 / std::numbers::pi * std::asin(kRho / 2.0), 0.03);
}

TEST(Correlate, AverageRanksWithTies) {
  const std::vector<double> v = {10, 20, 20, 5, 20};
  EXPECT_EQ(im::average_ranks(v), (std::vector<double>{2, 4, 4, 1, 4}));
  const std::vector<double> x = {1, 2, 2, 3};
  const std::vector<double> y = {1, 3, 2, 4};
  // Spearman with ties is Pearson on average ranks.
  const auto c = im::correlate(x, y);
  const std::vector<double> rx = {1, 2.5, 2.5, 4};
  const std::vector<double> ry = {1, 3, 2, 4};
  EXPECT_NEAR(c.spearman_rho, im::correlate(rx, ry).pearson_r, 1e-15);
}

TEST(Correlate, Preconditions) {
  const std::vector<double> x = {1, 2, 3};
  const std::vector<double> k = {4, 4, 4};
  EXPECT_THROW(im::correlate(x, k), pm::DegenerateDataError);
  EXPECT_THROW(im::correlate(std::vector<double>{1, 2}, std::vector<double>{1, 2}),
               pm::ParameterError);
  EXPECT_THROW(im::correlate(x, std::vector<double>{1, 2}), pm::ParameterError);
}

TEST(Correlate, AlignsTokenColumns) {
  corpus::TokenColumn a, b;
  for (int i = 0; i < 5; ++i) {
    a[{"u", i}] = i;
    b[{"u", 4 - i}] = 3.0 * (4 - i);  // same relation, different insertion order
  }
  a[{"only_a", 0}] = 100.0;
  b[{"u", 2}] = 6.0;
  const auto c = im::correlate(a, b);
  EXPECT_EQ(c.n, 5u);
  EXPECT_NEAR(c.pearson_r, 1.0, 1e-15);
}

// ---------------------------------------------------------------- report

TEST(Report, SingleResult) {
  const pm::testing::TempDir dir;
  im::ReportOptions opt;
  const auto files =
      im::emit_report({mi_row("energy", corpus::ContextType::kCurrentWord, 0.25)}, {},
                      dir.path().string(), opt);
  const auto csv = pm::testing::read_bytes(files.csv_path);
  EXPECT_EQ(csv,
            "feature,context,model,h_nats,h_std,h_cond_nats,h_cond_std,mi_nats,mi_std,uc,flags\n"
            "energy,current_word,m,1.000000,0.000000,0.750000,0.000000,0.250000,0.000000,"
            "0.031618,\n");
  ASSERT_EQ(files.svg_paths.size(), 1u);
  const auto svg = pm::testing::read_bytes(files.svg_paths[0]);
  EXPECT_NE(svg.find("viewBox=\"0 0 800 400\""), std::string::npos);
  std::size_t bars = 0;
  for (auto p = svg.find("<rect"); p != std::string::npos; p = svg.find("<rect", p + 1)) ++bars;
  EXPECT_EQ(bars, 2u);  // background + one bar
}

TEST(Report, SortedAndDeterministic) {
  const std::vector<im::MiResult> rows = {
      mi_row("pause", corpus::ContextType::kBidirectional, 0.1),
      mi_row("energy", corpus::ContextType::kPastContext, 0.2),
      mi_row("energy", corpus::ContextType::kCurrentWord, 0.3),
      mi_row("energy", corpus::ContextType::kBidirectional, -0.05)};
  im::ReportOptions opt;
  opt.provenance = "config_sha256=abc seed=1";
  const auto a = im::report_csv(rows, opt);
  auto reversed = rows;
  std::reverse(reversed.begin(), reversed.end());
  EXPECT_EQ(a, im::report_csv(reversed, opt));
  EXPECT_EQ(a.substr(0, a.find('\n')), "# config_sha256=abc seed=1");
  const auto cur = a.find("energy,current_word");
  const auto past = a.find("energy,past_context");
  const auto bi = a.find("energy,bidirectional");
  const auto pause = a.find("pause,bidirectional");
  EXPECT_LT(cur, past);
  EXPECT_LT(past, bi);
  EXPECT_LT(bi, pause);
  EXPECT_NE(a.find("negative_mi|uc_clamped"), std::string::npos);
  EXPECT_EQ(im::report_svg("energy", rows, opt), im::report_svg("energy", reversed, opt));

  const pm::testing::TempDir d1;
  const auto f1 = im::emit_report(rows, {{"prominence~surprisal", {0.2, 0.25, 100}}},
                                  d1.file("x"), opt);
  const auto first = pm::testing::read_bytes(f1.csv_path);
  const auto f2 = im::emit_report(reversed, {{"prominence~surprisal", {0.2, 0.25, 100}}},
                                  d1.file("y"), opt);
  EXPECT_EQ(first, pm::testing::read_bytes(f2.csv_path));
  EXPECT_EQ(f1.svg_paths.size(), 2u);
  EXPECT_EQ(pm::testing::read_bytes(d1.file("x/correlations.csv")),
            "# config_sha256=abc seed=1\npair,pearson_r,spearman_rho,n\n"
            "prominence~surprisal,0.200000,0.250000,100\n");
}

TEST(Report, EmptyAndUnwritable) {
  const pm::testing::TempDir dir;
  EXPECT_THROW(im::emit_report({}, {}, dir.path().string(), {}), pm::ParameterError);
  pm::testing::write_text(dir.file("blocker"), "x");
  EXPECT_THROW(im::emit_report({mi_row("e", corpus::ContextType::kCurrentWord, 0.1)}, {},
                               dir.file("blocker/sub"), {}),
               pm::IoError);
}

TEST(Report, RoundTripThroughCsv) {
  const pm::testing::TempDir dir;
  auto r = mi_row("duration", corpus::ContextType::kPastContext, 0.123456789);
  r.h_std = 0.01;
  im::ReportOptions opt;
  opt.full_precision = true;
  pm::testing::write_text(dir.file("r.csv"), im::report_csv({r}, opt));
  const auto back = im::read_mi_results(dir.file("r.csv"));
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].mi_nats, r.mi_nats);
  EXPECT_EQ(back[0].h_std, r.h_std);
  EXPECT_EQ(back[0].context_type, r.context_type);
}

// Nested conditioning on a synthetic generator: the target depends on the
// current, previous and next word ids, so richer contexts carry more MI.
TEST(Monotonicity, NestedContextsOrderMi) {
  constexpr int kVocab = 4;
  constexpr std::size_t kTokens = 12000;
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> word(0, kVocab - 1);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<int> ids(kTokens + 2);
  for (auto& w : ids) w = word(rng);
  std::vector<double> y(kTokens);
  for (std::size_t t = 0; t < kTokens; ++t) {
    y[t] = 1.0 * ids[t + 1] + 0.7 * ids[t] + 0.5 * ids[t + 2] + 0.3 * g(rng);
  }
  auto dataset = [&](int context, std::size_t begin, std::size_t end) {
    corpus::JoinedDataset d;
    const int d_in = kVocab * context;
    d.inputs = corpus::RowMatrix::Zero(static_cast<Eigen::Index>(end - begin), d_in);
    d.targets.resize(static_cast<Eigen::Index>(end - begin), 1);
    for (std::size_t t = begin; t < end; ++t) {
      const auto r = static_cast<Eigen::Index>(t - begin);
      d.inputs(r, ids[t + 1]) = 1.0;
      if (context >= 2) d.inputs(r, kVocab + ids[t]) = 1.0;
      if (context >= 3) d.inputs(r, 2 * kVocab + ids[t + 2]) = 1.0;
      d.targets(r, 0) = y[t];
      d.token_ids.push_back({"s", static_cast<int>(t)});
    }
    return d;
  };

  density::PointSet train_pts(8000, 1), held_pts(2000, 1), test_pts(2000, 1);
  for (std::size_t t = 0; t < 8000; ++t) train_pts(static_cast<Eigen::Index>(t), 0) = y[t];
  for (std::size_t t = 0; t < 2000; ++t) {
    held_pts(static_cast<Eigen::Index>(t), 0) = y[8000 + t];
    test_pts(static_cast<Eigen::Index>(t), 0) = y[10000 + t];
  }
  const auto fit = density::fit_kde(train_pts, held_pts, density::default_bandwidth_grid(8000, 1));
  const auto h = density::entropy_bootstrap(fit.model, test_pts, 5, 3);
  im::FeatureEntropy fe{"synthetic", false, h};

  pred::MlpConfig cfg;
  cfg.hidden_units = 32;
  cfg.learning_rate = 1e-2;
  cfg.max_epochs = 60;
  cfg.patience = 6;
  const corpus::ContextType kinds[] = {corpus::ContextType::kCurrentWord,
                                       corpus::ContextType::kPastContext,
                                       corpus::ContextType::kBidirectional};
  std::vector<im::MiResult> mi;
  for (int c = 1; c <= 3; ++c) {
    const auto head = pred::train_head(dataset(c, 0, 8000), dataset(c, 8000, 10000), cfg,
                                       pred::PredictiveFamily::gaussian());
    const auto test = dataset(c, 10000, kTokens);
    const auto nll = pred::row_nll(head, test);
    double mean = 0.0, sq = 0.0;
    for (double v : nll) mean += v;
    mean /= static_cast<double>(nll.size());
    for (double v : nll) sq += (v - mean) * (v - mean);
    const double se = std::sqrt(sq / static_cast<double>(nll.size() - 1) /
                                static_cast<double>(nll.size()));
    mi.push_back(im::mutual_information(fe, cond("synthetic", mean, kinds[c - 1], se)));
  }
  for (int i = 0; i + 1 < 3; ++i) {
    const double slack = std::hypot(mi[i].mi_std, mi[i + 1].mi_std);
    EXPECT_LE(mi[i].mi_nats, mi[i + 1].mi_nats + slack)
        << corpus::to_string(mi[i].context_type);
  }
  EXPECT_GT(mi[0].mi_nats, 0.1);
}
