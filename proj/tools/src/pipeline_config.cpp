#include "pipeline_config.hpp"

#include <fstream>
#include <iterator>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "prosody_mi/error.hpp"

namespace prosody_mi::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const std::map<std::string, std::string> kDefaultFamilies = {
    {"energy", "gaussian"},
    {"duration_per_syllable", "gaussian"},
    {"pause_after_s", "gamma"},
    {"prominence", "gamma"},
    {"prominence_relative", "gaussian"},
    {"f0_dct", "gaussian_diag"},
};

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ParameterError(where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items()) {
    if (!ok.count(key)) throw ParameterError(fmt::format("{}: unknown key '{}'", where, key));
  }
}

template <typename T>
void read(const json& obj, const char* key, T& dst, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    dst = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParameterError(fmt::format("{}.{}: wrong type", where, key));
  }
}

std::string resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return p;
  const fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal().string();
}

void require_exists(const std::string& path, const std::string& what) {
  if (path.empty()) throw ParameterError(what + " is required");
  if (!fs::exists(path)) throw ParameterError(fmt::format("{} does not exist: {}", what, path));
}

void validate(const PipelineConfig& c) {
  require_exists(c.corpus.alignments, "corpus.alignments");
  require_exists(c.corpus.audio_root, "corpus.audio_root");
  require_exists(c.corpus.splits, "corpus.splits");
  if (!c.corpus.lexicon.empty()) require_exists(c.corpus.lexicon, "corpus.lexicon");
  for (const auto& [name, path] : c.corpus.columns) {
    require_exists(path, "corpus.columns." + name);
  }
  for (const auto& [ctx, path] : c.embeddings) {
    require_exists(path, fmt::format("embeddings.{}", corpus::to_string(ctx)));
  }

  const auto& e = c.extraction;
  if (e.dct_k < 1 || e.dct_k > 100) {
    throw ParameterError(fmt::format("features.dct_k must be in [1, 100], got {}", e.dct_k));
  }
  if (!(e.bandpass_low_hz > 0.0 && e.bandpass_low_hz < e.bandpass_high_hz)) {
    throw ParameterError("features: need 0 < bandpass_low_hz < bandpass_high_hz");
  }
  if (!(e.yin.f0_min_hz > 0.0 && e.yin.f0_min_hz < e.yin.f0_max_hz)) {
    throw ParameterError("features.yin: need 0 < f0_min_hz < f0_max_hz");
  }
  if (!(e.yin.frame_hop_s > 0.0 && e.yin.frame_len_s > 0.0)) {
    throw ParameterError("features.yin: frame_hop_s and frame_len_s must be > 0");
  }
  if (!(e.yin.threshold > 0.0 && e.yin.threshold < 1.0)) {
    throw ParameterError("features.yin.threshold must be in (0, 1)");
  }
  if (!(c.pause_epsilon_s > 0.0)) throw ParameterError("features.pause_epsilon_s must be > 0");
  if (!(c.max_drop_fraction >= 0.0 && c.max_drop_fraction <= 1.0)) {
    throw ParameterError("features.max_drop_fraction must be in [0, 1]");
  }
  if (c.folds < 2) throw ParameterError("density.folds must be >= 2");
  for (double h : c.bandwidth_grid) {
    if (!(h > 0.0)) throw ParameterError("density.bandwidth_grid values must be > 0");
  }
  if (c.n_trials < 1) throw ParameterError("predictor.n_trials must be >= 1");
  c.search.validate();
  for (const auto& [feature, family] : c.families) {
    predictor::parse_family(family, family == "gamma" ? 1 : 2);
  }
  if (c.output_dir.empty()) throw ParameterError("output_dir is required");
  if (c.validation_n < 100) throw ParameterError("validation.n must be >= 100");
}

}  // namespace

std::string PipelineConfig::provenance() const {
  return fmt::format("config_sha256={} seed={}", digest, seed);
}

predictor::PredictiveFamily PipelineConfig::family_for(const std::string& feature,
                                                       int target_dim) const {
  const auto name = features::canonical_feature_name(feature);
  const auto it = families.find(name);
  const std::string family = it != families.end() ? it->second : kDefaultFamilies.at(name);
  return predictor::parse_family(family, target_dim);
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw NumericError("SHA-256 digest failed");
  }
  std::string out;
  for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", md[i]);
  return out;
}

PipelineConfig parse_config(const std::string& text, const fs::path& source) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParameterError(fmt::format("{}: {}", source.string(), e.what()));
  }
  check_keys(doc, "config",
             {"corpus", "features", "density", "predictor", "embeddings", "output_dir",
              "validation"});

  PipelineConfig c;
  c.source = source;
  c.digest = sha256_hex(text);
  c.families = kDefaultFamilies;
  const fs::path base = source.has_parent_path() ? source.parent_path() : fs::path(".");

  if (!doc.contains("corpus")) throw ParameterError("config: 'corpus' section is required");
  const auto& cj = doc.at("corpus");
  check_keys(cj, "corpus",
             {"alignments", "alignment_format", "audio_root", "lexicon", "splits", "columns"});
  read(cj, "alignments", c.corpus.alignments, "corpus");
  read(cj, "audio_root", c.corpus.audio_root, "corpus");
  read(cj, "lexicon", c.corpus.lexicon, "corpus");
  read(cj, "splits", c.corpus.splits, "corpus");
  std::string format = "json";
  read(cj, "alignment_format", format, "corpus");
  if (format == "json") {
    c.corpus.alignment_format = corpus::AlignmentFormat::kJson;
  } else if (format == "textgrid") {
    c.corpus.alignment_format = corpus::AlignmentFormat::kTextGrid;
  } else {
    throw ParameterError("corpus.alignment_format must be 'json' or 'textgrid'");
  }
  read(cj, "columns", c.corpus.columns, "corpus");
  c.corpus.alignments = resolve(base, c.corpus.alignments);
  c.corpus.audio_root = resolve(base, c.corpus.audio_root);
  c.corpus.lexicon = resolve(base, c.corpus.lexicon);
  c.corpus.splits = resolve(base, c.corpus.splits);
  for (auto& [name, path] : c.corpus.columns) path = resolve(base, path);

  if (doc.contains("features")) {
    const auto& fj = doc.at("features");
    check_keys(fj, "features",
               {"bandpass_low_hz", "bandpass_high_hz", "yin", "dct_k", "contour_domain",
                "pause_epsilon_s", "zscore", "max_drop_fraction"});
    auto& e = c.extraction;
    read(fj, "bandpass_low_hz", e.bandpass_low_hz, "features");
    read(fj, "bandpass_high_hz", e.bandpass_high_hz, "features");
    read(fj, "dct_k", e.dct_k, "features");
    read(fj, "pause_epsilon_s", c.pause_epsilon_s, "features");
    read(fj, "zscore", c.zscore, "features");
    read(fj, "max_drop_fraction", c.max_drop_fraction, "features");
    std::string domain = "log2";
    read(fj, "contour_domain", domain, "features");
    if (domain == "log2") {
      e.contour_domain = dsp::ContourDomain::kLog2;
    } else if (domain == "hz") {
      e.contour_domain = dsp::ContourDomain::kHz;
    } else {
      throw ParameterError("features.contour_domain must be 'log2' or 'hz'");
    }
    if (fj.contains("yin")) {
      const auto& yj = fj.at("yin");
      check_keys(yj, "features.yin",
                 {"f0_min_hz", "f0_max_hz", "frame_hop_s", "frame_len_s", "threshold"});
      read(yj, "f0_min_hz", e.yin.f0_min_hz, "features.yin");
      read(yj, "f0_max_hz", e.yin.f0_max_hz, "features.yin");
      read(yj, "frame_hop_s", e.yin.frame_hop_s, "features.yin");
      read(yj, "frame_len_s", e.yin.frame_len_s, "features.yin");
      read(yj, "threshold", e.yin.threshold, "features.yin");
    }
  }

  if (doc.contains("density")) {
    const auto& dj = doc.at("density");
    check_keys(dj, "density", {"bandwidth_grid", "folds"});
    read(dj, "bandwidth_grid", c.bandwidth_grid, "density");
    read(dj, "folds", c.folds, "density");
  }

  if (doc.contains("predictor")) {
    const auto& pj = doc.at("predictor");
    check_keys(pj, "predictor", {"families", "search", "n_trials", "seed"});
    std::map<std::string, std::string> fams;
    read(pj, "families", fams, "predictor");
    for (const auto& [feature, family] : fams) {
      c.families[features::canonical_feature_name(feature)] = family;
    }
    read(pj, "n_trials", c.n_trials, "predictor");
    read(pj, "seed", c.seed, "predictor");
    if (pj.contains("search")) {
      const auto& sj = pj.at("search");
      check_keys(sj, "predictor.search",
                 {"lr_min", "lr_max", "l2_min", "l2_max", "dropout", "layers", "hidden",
                  "batch", "max_epochs", "patience"});
      auto& s = c.search;
      read(sj, "lr_min", s.lr_min, "predictor.search");
      read(sj, "lr_max", s.lr_max, "predictor.search");
      read(sj, "l2_min", s.l2_min, "predictor.search");
      read(sj, "l2_max", s.l2_max, "predictor.search");
      read(sj, "dropout", s.dropout, "predictor.search");
      read(sj, "layers", s.layers, "predictor.search");
      read(sj, "hidden", s.hidden, "predictor.search");
      read(sj, "batch", s.batch, "predictor.search");
      read(sj, "max_epochs", s.max_epochs, "predictor.search");
      read(sj, "patience", s.patience, "predictor.search");
    }
  }

  if (doc.contains("embeddings")) {
    std::map<std::string, std::string> emb;
    read(doc, "embeddings", emb, "config");
    for (const auto& [name, path] : emb) {
      corpus::ContextType ctx;
      try {
        ctx = corpus::parse_context_type(name);
      } catch (const Error&) {
        throw ParameterError("embeddings: unknown context '" + name + "'");
      }
      c.embeddings[ctx] = resolve(base, path);
    }
  }

  read(doc, "output_dir", c.output_dir, "config");
  c.output_dir = resolve(base, c.output_dir);

  if (doc.contains("validation")) {
    const auto& vj = doc.at("validation");
    check_keys(vj, "validation", {"n"});
    read(vj, "n", c.validation_n, "validation");
  }

  validate(c);
  return c;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParameterError("cannot read config " + path);
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_config(text, fs::path(path));
}

void apply_overrides(PipelineConfig& config, std::optional<std::uint64_t> seed,
                     const std::optional<std::string>& out_dir) {
  if (seed) config.seed = *seed;
  if (out_dir) {
    if (out_dir->empty()) throw ParameterError("--out must not be empty");
    config.output_dir = fs::path(*out_dir).lexically_normal().string();
  }
}

}  // namespace prosody_mi::cli
