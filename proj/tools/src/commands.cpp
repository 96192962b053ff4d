#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <set>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "prosody_mi/density.hpp"
#include "prosody_mi/error.hpp"
#include "prosody_mi/features.hpp"
#include "prosody_mi/numeric.hpp"
#include "prosody_mi/wav.hpp"

namespace prosody_mi::cli {

namespace fs = std::filesystem;

namespace {

// Runs one pipeline stage, prefixing any library error with the stage name.
template <typename F>
auto stage(const char* name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const Error& e) {
    throw Error(e.kind(), fmt::format("[{}] {}", name, e.what()));
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
}

std::vector<corpus::Utterance> load_utterances(const PipelineConfig& config) {
  auto utts = corpus::load_alignment(config.corpus.alignments, config.corpus.alignment_format);
  return corpus::filter_short(utts);
}

std::vector<corpus::DatasetSplit> load_splits(const PipelineConfig& config,
                                              const std::vector<corpus::Utterance>& utts) {
  return corpus::make_splits(utts, corpus::load_split_file(config.corpus.splits));
}

density::PointSet target_points(const corpus::JoinedDataset& d) {
  density::PointSet p(d.targets.rows(), d.targets.cols());
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) p(i, j) = d.targets(i, j);
  }
  return p;
}

}  // namespace

fs::path OutputLayout::estimate_dir(const std::string& feature,
                                    corpus::ContextType context) const {
  return estimates() / fmt::format("{}__{}", features::canonical_feature_name(feature),
                                   corpus::to_string(context));
}

// ------------------------------------------------------------------ extract

ExtractSummary cmd_extract(const PipelineConfig& config, std::ostream& log) {
  const OutputLayout out{config.output_dir};

  const auto utts = stage("corpus", [&] { return load_utterances(config); });
  const auto splits = stage("corpus", [&] { return load_splits(config, utts); });
  const auto lexicon = stage("corpus", [&] {
    return config.corpus.lexicon.empty() ? corpus::Lexicon{}
                                         : corpus::Lexicon::load(config.corpus.lexicon);
  });
  std::optional<corpus::TokenColumn> prominence;
  if (const auto it = config.corpus.columns.find("prominence");
      it != config.corpus.columns.end()) {
    prominence = stage("corpus", [&] { return corpus::load_column(it->second, "prominence"); });
  }

  ExtractSummary summary;
  summary.n_utterances = utts.size();
  features::FeatureTable table;
  table.dct_k = config.extraction.dct_k;
  table.contour_domain = config.extraction.contour_domain;
  std::set<std::string> dropped;

  for (const auto& utt : utts) {
    try {
      const auto audio =
          wav::read((fs::path(config.corpus.audio_root) / utt.audio_path).string());
      std::vector<double> prom;
      if (prominence) {
        for (const auto& tok : utt.tokens) {
          const auto it = prominence->find(tok.key());
          if (it == prominence->end()) {
            throw ValidationError("no prominence value for " + corpus::to_string(tok.key()));
          }
          prom.push_back(it->second);
        }
      }
      auto records = features::extract_utterance(utt, audio.samples, audio.sample_rate_hz,
                                                 lexicon, prom, config.extraction);
      for (auto& r : records) table.records.push_back(std::move(r));
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kConfig) throw;
      log << fmt::format("warning: dropping utterance {}: {}\n", utt.utterance_id, e.what());
      dropped.insert(utt.utterance_id);
    }
  }
  summary.n_dropped = dropped.size();
  if (!utts.empty() &&
      static_cast<double>(dropped.size()) > config.max_drop_fraction * static_cast<double>(utts.size())) {
    throw ValidationError(fmt::format("[extract] {} of {} utterances failed (limit {:.0f}%)",
                                      dropped.size(), utts.size(),
                                      100.0 * config.max_drop_fraction));
  }
  if (table.records.empty()) throw ValidationError("[extract] no tokens extracted");

  if (config.zscore) {
    stage("zscore", [&] {
      features::apply_zscore(table, splits[0].token_ids,
                             features::default_zscore_columns(table.dct_k));
    });
  }

  make_dirs(out.root);
  stage("write", [&] {
    features::write_feature_table(out.features_csv().string(), out.zscore_json().string(),
                                  table, config.provenance());
  });

  summary.n_tokens = table.records.size();
  std::size_t zero_pauses = 0;
  for (const auto& r : table.records) zero_pauses += r.pause_after_s == 0.0;
  summary.zero_pause_fraction =
      static_cast<double>(zero_pauses) / static_cast<double>(table.records.size());
  for (const char* f : {"energy", "duration_per_syllable", "pause_after_s", "prominence",
                        "prominence_relative", "f0_dct"}) {
    summary.feature_counts[f] = features::target_table(table, f).size();
  }

  log << fmt::format("extracted {} tokens from {} utterances ({} dropped)\n",
                     summary.n_tokens, utts.size() - dropped.size(), dropped.size());
  for (const auto& [name, count] : summary.feature_counts) {
    log << fmt::format("  {:<22} {}\n", name, count);
  }
  log << fmt::format(
      "zero pauses: {:.1f}% of words (read speech corpora typically show close to 90%)\n",
      100.0 * summary.zero_pause_fraction);
  return summary;
}

// ----------------------------------------------------------------- estimate

EstimateResult cmd_estimate(const PipelineConfig& config, const std::string& feature_name,
                            corpus::ContextType context, std::ostream& log) {
  const OutputLayout out{config.output_dir};
  const auto feature = features::canonical_feature_name(feature_name);
  const auto emb_it = config.embeddings.find(context);
  if (emb_it == config.embeddings.end()) {
    throw ParameterError(fmt::format("no embedding file configured for context '{}'",
                                     corpus::to_string(context)));
  }
  if (!fs::exists(out.features_csv())) {
    throw ParameterError("feature table " + out.features_csv().string() +
                         " not found; run extract first");
  }

  const auto table = stage("features", [&] {
    return features::read_feature_table(out.features_csv().string(),
                                        out.zscore_json().string());
  });
  auto targets = stage("features", [&] { return features::target_table(table, feature); });
  if (targets.empty()) throw DegenerateDataError("[features] no values for " + feature);
  const int target_dim = static_cast<int>(targets.begin()->second.size());
  const auto family = config.family_for(feature, target_dim);

  EstimateResult result;
  if (family.kind == predictor::FamilyKind::kGammaScalar && feature == "pause_after_s") {
    result.target_shift = config.pause_epsilon_s;
    for (auto& [key, v] : targets) v[0] += config.pause_epsilon_s;
  }

  const auto embeddings =
      stage("embeddings", [&] { return corpus::read_embeddings(emb_it->second); });
  if (embeddings.context_type != context) {
    throw ParameterError(fmt::format("{} holds {} embeddings, expected {}", emb_it->second,
                                     corpus::to_string(embeddings.context_type),
                                     corpus::to_string(context)));
  }

  const auto utts = stage("corpus", [&] { return load_utterances(config); });
  auto splits = stage("corpus", [&] { return load_splits(config, utts); });
  std::vector<corpus::JoinedDataset> joined;
  for (auto& split : splits) {
    // Tokens without a value (unvoiced words for f0) leave the split.
    std::erase_if(split.token_ids, [&](const corpus::TokenKey& k) { return !targets.count(k); });
    joined.push_back(
        stage("join", [&] { return corpus::join_embeddings(split, embeddings, targets); }));
  }
  const auto& train = joined[0];
  const auto& dev = joined[1];
  const auto& test = joined[2];
  result.n_train = train.size();
  result.n_dev = dev.size();
  result.n_test = test.size();
  log << fmt::format("{} / {}: {} train, {} dev, {} test tokens, family {}\n", feature,
                     corpus::to_string(context), train.size(), dev.size(), test.size(),
                     predictor::to_string(family));

  const auto train_pts = target_points(train);
  const auto dev_pts = target_points(dev);
  const auto test_pts = target_points(test);
  const auto fit = stage("density", [&] {
    auto grid = config.bandwidth_grid.empty()
                    ? density::default_bandwidth_grid(train_pts.rows(), target_dim)
                    : config.bandwidth_grid;
    return density::fit_kde(train_pts, dev_pts, std::move(grid));
  });
  infometrics::FeatureEntropy h;
  h.feature = feature;
  h.zscored = features::feature_is_zscored(table, feature);
  stage("density", [&] {
    h.estimate = density::entropy_bootstrap(fit.model, test_pts, config.folds, config.seed);
    h.estimate.value_nats = density::entropy_mc(fit.model, test_pts);
  });

  const auto search = stage("predictor", [&] {
    return predictor::random_search(config.search, config.n_trials, train, dev, family,
                                    config.seed);
  });
  auto head = search.best;
  head.context_type = context;
  head.zscore_ref = h.zscored ? out.zscore_json().filename().string() : std::string();

  infometrics::ConditionalEntropy hc;
  hc.feature = feature;
  hc.zscored = h.zscored;
  hc.context_type = context;
  hc.model_name = embeddings.model_name;
  stage("predictor", [&] {
    const auto nll = predictor::row_nll(head, test);
    hc.value_nats = predictor::conditional_xent(head, test);
    hc.std_nats = density::bootstrap_mean(nll, config.folds, config.seed).std_nats;
  });

  result.mi = stage("infometrics", [&] { return infometrics::mutual_information(h, hc); });

  result.dir = out.estimate_dir(feature, context);
  make_dirs(result.dir);
  const auto prov = config.provenance();
  stage("write", [&] {
    density::write_kde((result.dir / "kde.bin").string(), fit.model, prov);
    predictor::write_head((result.dir / "head.bin").string(), head, prov);
    write_text(result.dir / "trials.csv",
               "# " + prov + "\n" + predictor::trial_log_csv(search.trials));
    infometrics::ReportOptions opt;
    opt.provenance = prov;
    if (result.target_shift > 0.0) {
      opt.provenance += fmt::format(" target_shift_s={}", result.target_shift);
    }
    opt.full_precision = true;
    write_text(result.dir / "mi.csv", infometrics::report_csv({result.mi}, opt));
  });

  log << fmt::format("H = {:.4f} +- {:.4f}, H_cond = {:.4f} +- {:.4f}, MI = {:.4f} nats{}\n",
                     result.mi.h_nats, result.mi.h_std, result.mi.h_cond_nats,
                     result.mi.h_cond_std, result.mi.mi_nats,
                     result.mi.negative() ? " (negative)" : "");
  return result;
}

// ----------------------------------------------------------------- validate

std::vector<baseline::ValidationRow> cmd_validate(const PipelineConfig& config,
                                                  std::ostream& log) {
  auto suite = baseline::default_validation_suite(config.seed);
  for (auto& inst : suite) inst.n = config.validation_n;
  if (suite.empty()) throw ParameterError("validation suite is empty");
  std::vector<baseline::ValidationRow> rows;
  for (const auto& inst : suite) {
    try {
      auto r = baseline::run_validation({inst});
      rows.push_back(r.front());
    } catch (const Error& e) {
      throw Error(e.kind(), fmt::format("[validate] instance {}: {}", inst.name, e.what()));
    }
    const auto& r = rows.back();
    log << fmt::format("{:<26} oracle {:.4f}  ks {:.4f}  pipeline {:.4f}\n", r.instance,
                       r.oracle_mi, r.ks_mi, r.pipeline_mi);
  }
  const OutputLayout out{config.output_dir};
  make_dirs(out.root);
  write_text(out.validation_csv(), baseline::validation_report_csv(rows, config.provenance()));
  return rows;
}

// ------------------------------------------------------------------- report

infometrics::ReportFiles cmd_report(const PipelineConfig& config, std::ostream& log) {
  const OutputLayout out{config.output_dir};
  std::vector<fs::path> files;
  if (fs::is_directory(out.estimates())) {
    for (const auto& entry : fs::directory_iterator(out.estimates())) {
      const auto mi = entry.path() / "mi.csv";
      if (fs::is_regular_file(mi)) files.push_back(mi);
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<infometrics::MiResult> results;
  for (const auto& f : files) {
    for (auto& r : stage("report", [&] { return infometrics::read_mi_results(f.string()); })) {
      results.push_back(std::move(r));
    }
  }
  if (results.empty()) {
    throw ParameterError("no estimates found under " + out.estimates().string());
  }

  std::vector<std::pair<std::string, infometrics::Correlation>> correlations;
  const auto& cols = config.corpus.columns;
  if (cols.count("prominence") && cols.count("surprisal")) {
    correlations.emplace_back("prominence~surprisal", stage("report", [&] {
                                return infometrics::correlate(
                                    corpus::load_column(cols.at("prominence"), "prominence"),
                                    corpus::load_column(cols.at("surprisal"), "surprisal"));
                              }));
  }

  infometrics::ReportOptions opt;
  opt.provenance = config.provenance();
  const auto files_out = stage("report", [&] {
    return infometrics::emit_report(results, correlations, out.report_dir().string(), opt);
  });
  log << fmt::format("wrote {} ({} rows) and {} chart(s)\n", files_out.csv_path,
                     results.size(), files_out.svg_paths.size());
  return files_out;
}

// ---------------------------------------------------------------------- cli

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
      return 2;
    case ErrorKind::kData:
      return 3;
    case ErrorKind::kNumeric:
      return 4;
  }
  return 3;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mutual information between word-level prosody and text embeddings"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::string feature;
  std::string context;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Pipeline config (JSON)")->required();
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_option("--out", out_dir, "Override the output directory");
  };
  auto* extract = app.add_subcommand("extract", "Extract word-level prosodic features");
  auto* estimate = app.add_subcommand("estimate", "Estimate MI for one feature and context");
  auto* validate = app.add_subcommand("validate", "Run the synthetic validation suite");
  auto* report = app.add_subcommand("report", "Collect estimates into tables and charts");
  for (auto* sub : {extract, estimate, validate, report}) add_common(sub);
  estimate->add_option("--feature", feature, "energy, duration, pause, prominence, "
                                             "prominence_relative or f0")
      ->required();
  estimate->add_option("--context", context, "current, past or bidirectional")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return 2;
  }

  try {
    auto config = load_config(config_path);
    apply_overrides(config, seed, out_dir);
    if (extract->parsed()) {
      cmd_extract(config, out);
    } else if (estimate->parsed()) {
      const auto ctx = corpus::parse_context_type(context);
      features::canonical_feature_name(feature);
      cmd_estimate(config, feature, ctx, out);
    } else if (validate->parsed()) {
      cmd_validate(config, out);
    } else if (report->parsed()) {
      cmd_report(config, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}

}  // namespace prosody_mi::cli
