#include "prosody_mi/infometrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "prosody_mi/csv.hpp"
#include "prosody_mi/error.hpp"

namespace prosody_mi::infometrics {

MiResult mutual_information(const FeatureEntropy& h, const ConditionalEntropy& h_cond) {
  if (h.feature != h_cond.feature || h.zscored != h_cond.zscored) {
    throw ValidationError(fmt::format(
        "entropy estimates disagree on the feature: '{}' (zscored={}) vs '{}' (zscored={})",
        h.feature, h.zscored, h_cond.feature, h_cond.zscored));
  }
  MiResult r;
  r.feature = h.feature;
  r.context_type = h_cond.context_type;
  r.model_name = h_cond.model_name;
  r.h_nats = h.estimate.value_nats;
  r.h_std = h.estimate.std_nats;
  r.h_cond_nats = h_cond.value_nats;
  r.h_cond_std = h_cond.std_nats;
  r.mi_nats = r.h_nats - r.h_cond_nats;
  r.mi_std = std::hypot(r.h_std, r.h_cond_std);
  return r;
}

FutureGain future_context_mi(const MiResult& mi_bidirectional, const MiResult& mi_past) {
  if (mi_bidirectional.context_type != corpus::ContextType::kBidirectional ||
      mi_past.context_type != corpus::ContextType::kPastContext) {
    throw ValidationError(fmt::format(
        "future_context_mi expects (bidirectional, past_context), got ({}, {})",
        corpus::to_string(mi_bidirectional.context_type),
        corpus::to_string(mi_past.context_type)));
  }
  if (mi_bidirectional.feature != mi_past.feature) {
    throw ValidationError("future_context_mi: results are for different features");
  }
  const double gain = mi_bidirectional.mi_nats - mi_past.mi_nats;
  return {gain, gain < 0.0};
}

UncertaintyCoefficient uncertainty_coefficient(double mi_nats, double h_nats,
                                               double h_min_nats) {
  if (!(h_nats > h_min_nats)) {
    throw ParameterError(fmt::format(
        "uncertainty coefficient needs H ({}) > H_min ({})", h_nats, h_min_nats));
  }
  const double u = mi_nats / (h_nats - h_min_nats);
  const double clamped = std::clamp(u, 0.0, 1.0);
  return {clamped, clamped != u};
}

UncertaintyCoefficient uncertainty_coefficient(const MiResult& mi, double h_min_nats) {
  return uncertainty_coefficient(mi.mi_nats, mi.h_nats, h_min_nats);
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
    i = j + 1;
  }
  return ranks;
}

namespace {

double pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) {
    throw DegenerateDataError("correlate: a column has zero variance");
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

Correlation correlate(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ParameterError("correlate: columns differ in length");
  if (x.size() < 3) throw ParameterError("correlate: need n >= 3");
  Correlation c;
  c.n = x.size();
  c.pearson_r = pearson(x, y);
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  c.spearman_rho = pearson(rx, ry);
  return c;
}

Correlation correlate(const corpus::TokenColumn& x, const corpus::TokenColumn& y) {
  std::vector<double> a, b;
  for (const auto& [key, value] : x) {
    const auto it = y.find(key);
    if (it == y.end() || !std::isfinite(value) || !std::isfinite(it->second)) continue;
    a.push_back(value);
    b.push_back(it->second);
  }
  return correlate(a, b);
}

std::string report_flags(const MiResult& result, const UncertaintyCoefficient& uc) {
  std::string flags;
  if (result.negative()) flags = "negative_mi";
  if (uc.clamped) flags += flags.empty() ? "uc_clamped" : "|uc_clamped";
  return flags;
}

namespace {

void sort_results(std::vector<MiResult>& results) {
  std::stable_sort(results.begin(), results.end(), [](const MiResult& a, const MiResult& b) {
    if (a.feature != b.feature) return a.feature < b.feature;
    if (a.context_type != b.context_type) return a.context_type < b.context_type;
    return a.model_name < b.model_name;
  });
}

std::string fixed(double v) {
  if (std::isnan(v)) return "nan";
  return fmt::format("{:.6f}", v);
}

constexpr const char* kCsvHeader =
    "feature,context,model,h_nats,h_std,h_cond_nats,h_cond_std,mi_nats,mi_std,uc,flags";

}  // namespace

std::string report_csv(std::vector<MiResult> results, const ReportOptions& options) {
  sort_results(results);
  std::string out;
  if (!options.provenance.empty()) out += "# " + options.provenance + "\n";
  out += kCsvHeader;
  out += '\n';
  auto fixed = [&](double v) {
    return options.full_precision ? csv::format_double(v) : infometrics::fixed(v);
  };
  for (const auto& r : results) {
    UncertaintyCoefficient uc{std::nan(""), false};
    if (r.h_nats > options.h_min_nats) uc = uncertainty_coefficient(r, options.h_min_nats);
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", r.feature,
                       corpus::to_string(r.context_type), r.model_name, fixed(r.h_nats),
                       fixed(r.h_std), fixed(r.h_cond_nats), fixed(r.h_cond_std),
                       fixed(r.mi_nats), fixed(r.mi_std), fixed(uc.value),
                       report_flags(r, uc));
  }
  return out;
}

std::string report_svg(const std::string& feature, std::vector<MiResult> results,
                       const ReportOptions& options) {
  sort_results(results);
  static constexpr std::array<const char*, 3> kColors{"#4c72b0", "#dd8452", "#55a868"};
  constexpr double kLeft = 70.0, kRight = 780.0, kTop = 50.0, kBottom = 340.0;

  double lo = 0.0, hi = 0.0;
  for (const auto& r : results) {
    lo = std::min(lo, r.mi_nats - r.mi_std);
    hi = std::max(hi, r.mi_nats + r.mi_std);
  }
  if (hi - lo < 1e-9) hi = lo + 1.0;
  const double span = hi - lo;
  auto y_of = [&](double v) { return kBottom - (v - lo) / span * (kBottom - kTop); };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 400\" "
         "width=\"800\" height=\"400\">\n";
  if (!options.provenance.empty()) svg += "<!-- " + options.provenance + " -->\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"800\" height=\"400\" fill=\"#ffffff\"/>\n";
  svg += fmt::format(
      "<text x=\"400\" y=\"28\" font-family=\"sans-serif\" font-size=\"16\" "
      "text-anchor=\"middle\">Mutual information: {}</text>\n",
      feature);
  svg += fmt::format(
      "<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{0:.1f}\" y2=\"{2:.1f}\" stroke=\"#000000\"/>\n",
      kLeft, kTop, kBottom);
  svg += fmt::format(
      "<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"#000000\"/>\n",
      kLeft, y_of(0.0), kRight, y_of(0.0));
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + span * t / 4.0;
    svg += fmt::format(
        "<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"11\" "
        "text-anchor=\"end\">{:.3f}</text>\n",
        kLeft - 6.0, y_of(v) + 4.0, v);
  }
  svg += fmt::format(
      "<text x=\"18\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"12\" "
      "transform=\"rotate(-90 18 {:.1f})\" text-anchor=\"middle\">MI (nats)</text>\n",
      (kTop + kBottom) / 2.0, (kTop + kBottom) / 2.0);

  // One group per context type in fixed order; bars within a group per model.
  const std::array<corpus::ContextType, 3> contexts{corpus::ContextType::kCurrentWord,
                                                    corpus::ContextType::kPastContext,
                                                    corpus::ContextType::kBidirectional};
  const double group_w = (kRight - kLeft) / 3.0;
  for (std::size_t g = 0; g < contexts.size(); ++g) {
    std::vector<const MiResult*> bars;
    for (const auto& r : results) {
      if (r.context_type == contexts[g]) bars.push_back(&r);
    }
    const double gx = kLeft + group_w * static_cast<double>(g);
    svg += fmt::format(
        "<text x=\"{:.1f}\" y=\"365\" font-family=\"sans-serif\" font-size=\"12\" "
        "text-anchor=\"middle\">{}</text>\n",
        gx + group_w / 2.0, corpus::to_string(contexts[g]));
    if (bars.empty()) continue;
    const double bar_w = std::min(60.0, (group_w - 40.0) / static_cast<double>(bars.size()));
    const double x0 = gx + (group_w - bar_w * static_cast<double>(bars.size())) / 2.0;
    for (std::size_t b = 0; b < bars.size(); ++b) {
      const auto& r = *bars[b];
      const double x = x0 + bar_w * static_cast<double>(b);
      const double top = y_of(std::max(r.mi_nats, 0.0));
      const double bottom = y_of(std::min(r.mi_nats, 0.0));
      svg += fmt::format(
          "<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"{}\">"
          "<title>{} {}: {:.3f} nats</title></rect>\n",
          x + 2.0, top, bar_w - 4.0, bottom - top, kColors[g], r.model_name,
          corpus::to_string(r.context_type), r.mi_nats);
      const double cx = x + bar_w / 2.0;
      svg += fmt::format(
          "<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{0:.1f}\" y2=\"{2:.1f}\" "
          "stroke=\"#222222\"/>\n",
          cx, y_of(r.mi_nats + r.mi_std), y_of(r.mi_nats - r.mi_std));
      svg += fmt::format(
          "<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"10\" "
          "text-anchor=\"middle\">{}</text>\n",
          cx, kBottom + 12.0, r.model_name);
    }
  }
  svg += "</svg>\n";
  return svg;
}

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace

ReportFiles emit_report(const std::vector<MiResult>& results,
                        const std::vector<std::pair<std::string, Correlation>>& correlations,
                        const std::string& out_dir, const ReportOptions& options) {
  if (results.empty()) throw ParameterError("emit_report: no results to report");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());

  ReportFiles files;
  files.csv_path = (std::filesystem::path(out_dir) / "report.csv").string();
  write_text(files.csv_path, report_csv(results, options));

  std::map<std::string, std::vector<MiResult>> by_feature;
  for (const auto& r : results) by_feature[r.feature].push_back(r);
  for (const auto& [feature, rows] : by_feature) {
    const auto path = (std::filesystem::path(out_dir) / ("mi_" + feature + ".svg")).string();
    write_text(path, report_svg(feature, rows, options));
    files.svg_paths.push_back(path);
  }

  if (!correlations.empty()) {
    std::string text;
    if (!options.provenance.empty()) text += "# " + options.provenance + "\n";
    text += "pair,pearson_r,spearman_rho,n\n";
    for (const auto& [name, c] : correlations) {
      text += fmt::format("{},{},{},{}\n", name, fixed(c.pearson_r), fixed(c.spearman_rho), c.n);
    }
    write_text((std::filesystem::path(out_dir) / "correlations.csv").string(), text);
  }
  return files;
}

std::vector<MiResult> read_mi_results(const std::string& path) {
  const auto t = csv::read_file(path);
  const auto f = t.column("feature");
  const auto c = t.column("context");
  const auto m = t.column("model");
  const auto h = t.column("h_nats");
  const auto hs = t.column("h_std");
  const auto hc = t.column("h_cond_nats");
  const auto hcs = t.column("h_cond_std");
  const auto mi = t.column("mi_nats");
  const auto mis = t.column("mi_std");
  std::vector<MiResult> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    MiResult res;
    res.feature = row[f];
    res.context_type = corpus::parse_context_type(row[c]);
    res.model_name = row[m];
    res.h_nats = csv::to_double(row[h], t, r, "h_nats");
    res.h_std = csv::to_double(row[hs], t, r, "h_std");
    res.h_cond_nats = csv::to_double(row[hc], t, r, "h_cond_nats");
    res.h_cond_std = csv::to_double(row[hcs], t, r, "h_cond_std");
    res.mi_nats = csv::to_double(row[mi], t, r, "mi_nats");
    res.mi_std = csv::to_double(row[mis], t, r, "mi_std");
    out.push_back(res);
  }
  return out;
}

}  // namespace prosody_mi::infometrics
