#include "prosody_mi/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "prosody_mi/csv.hpp"
#include "prosody_mi/error.hpp"

namespace prosody_mi::corpus {

using nlohmann::json;

std::string to_string(const TokenKey& key) {
  return fmt::format("{}#{}", key.utterance_id, key.index_in_utterance);
}

namespace {

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// LibriTTS ids look like "<speaker>_<chapter>_<...>".
std::string speaker_from_utterance_id(const std::string& id) {
  const auto pos = id.find('_');
  return pos == std::string::npos ? id : id.substr(0, pos);
}

void assign_token_ids(std::vector<Utterance>& utterances) {
  std::int64_t next = 0;
  for (auto& utt : utterances) {
    for (std::size_t i = 0; i < utt.tokens.size(); ++i) {
      auto& tok = utt.tokens[i];
      tok.token_id = next++;
      tok.utterance_id = utt.utterance_id;
      tok.index_in_utterance = static_cast<int>(i);
    }
  }
}

template <typename T>
T require_field(const json& obj, const char* field, const std::string& source,
                long line) {
  if (!obj.contains(field)) {
    throw ParseError(source, line, fmt::format("missing field '{}'", field));
  }
  try {
    return obj.at(field).get<T>();
  } catch (const json::exception&) {
    throw ParseError(source, line,
                     fmt::format("field '{}' has the wrong type", field));
  }
}

}  // namespace

void validate_utterance(const Utterance& utterance) {
  const auto& toks = utterance.tokens;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const auto& t = toks[i];
    if (!std::isfinite(t.start_s) || !std::isfinite(t.end_s) ||
        t.start_s < 0.0) {
      throw ValidationError(fmt::format("{}: word {} '{}' has invalid times",
                                        utterance.utterance_id, i, t.text));
    }
    if (!(t.end_s > t.start_s)) {
      throw ValidationError(fmt::format(
          "{}: word {} '{}' has end_s {} <= start_s {}",
          utterance.utterance_id, i, t.text, t.end_s, t.start_s));
    }
    if (i > 0 && t.start_s < toks[i - 1].end_s) {
      throw ValidationError(fmt::format(
          "{}: overlapping words {} '{}' [{}, {}] and {} '{}' [{}, {}]",
          utterance.utterance_id, i - 1, toks[i - 1].text, toks[i - 1].start_s,
          toks[i - 1].end_s, i, t.text, t.start_s, t.end_s));
    }
  }
}

std::vector<Utterance> parse_alignment_jsonl(std::string_view text,
                                             const std::string& source) {
  std::vector<Utterance> out;
  long line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }

    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(source, line_no, e.what());
    }
    if (!obj.is_object()) throw ParseError(source, line_no, "expected object");

    Utterance utt;
    utt.utterance_id = require_field<std::string>(obj, "utterance_id", source,
                                                  line_no);
    utt.audio_path = obj.value("audio_path", std::string());
    utt.transcript = obj.value("transcript", std::string());
    utt.sample_rate_hz = obj.value("sample_rate_hz", 0);
    const std::string speaker = obj.contains("speaker_id")
                                    ? obj["speaker_id"].get<std::string>()
                                    : speaker_from_utterance_id(utt.utterance_id);
    const auto words = require_field<json>(obj, "words", source, line_no);
    if (!words.is_array()) {
      throw ParseError(source, line_no, "field 'words' must be an array");
    }
    for (const auto& w : words) {
      WordToken tok;
      tok.text = require_field<std::string>(w, "text", source, line_no);
      tok.start_s = require_field<double>(w, "start_s", source, line_no);
      tok.end_s = require_field<double>(w, "end_s", source, line_no);
      tok.speaker_id = speaker;
      if (w.contains("phones")) {
        for (const auto& p : w["phones"]) {
          tok.phones.push_back(
              {require_field<std::string>(p, "label", source, line_no),
               require_field<double>(p, "start_s", source, line_no),
               require_field<double>(p, "end_s", source, line_no)});
        }
      }
      utt.tokens.push_back(std::move(tok));
    }
    out.push_back(std::move(utt));
    if (end == text.size()) break;
  }
  assign_token_ids(out);
  for (const auto& utt : out) validate_utterance(utt);
  return out;
}

namespace {

struct Interval {
  double xmin = 0.0;
  double xmax = 0.0;
  std::string text;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
    std::string out;
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
      if (s[i] == '"' && i + 2 < s.size() && s[i + 1] == '"') ++i;
      out.push_back(s[i]);
    }
    return out;
  }
  return s;
}

}  // namespace

std::vector<Utterance> parse_textgrid(std::string_view text,
                                      const std::string& source,
                                      const std::string& utterance_id) {
  // Praat long text format. Interval tiers are collected by name; the
  // "words" tier (or the first interval tier) provides tokens and an
  // optional "phones" tier is attached by containment.
  std::map<std::string, std::vector<Interval>> tiers;
  std::vector<std::string> tier_order;
  std::string current_tier;
  Interval* current = nullptr;
  bool interval_tier = false;
  long line_no = 0;

  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.rfind("intervals [", 0) == 0 && interval_tier) {
        tiers[current_tier].push_back({});
        current = &tiers[current_tier].back();
      } else if (line.rfind("item [", 0) == 0) {
        current = nullptr;
      }
      continue;
    }
    const auto key = trim(std::string_view(line).substr(0, eq));
    const auto value = trim(std::string_view(line).substr(eq + 1));
    auto number = [&](const std::string& v) {
      try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
      } catch (const std::exception&) {
        throw ParseError(source, line_no,
                         fmt::format("field '{}': '{}' is not a number", key, v));
      }
    };
    if (key == "class") {
      interval_tier = unquote(value) == "IntervalTier";
      current = nullptr;
    } else if (key == "name") {
      current_tier = unquote(value);
      if (interval_tier) {
        tiers[current_tier];
        tier_order.push_back(current_tier);
      }
    } else if (current != nullptr) {
      if (key == "xmin") {
        current->xmin = number(value);
      } else if (key == "xmax") {
        current->xmax = number(value);
      } else if (key == "text") {
        current->text = unquote(value);
      }
    }
  }
  if (tier_order.empty()) {
    throw ParseError(source, line_no, "no interval tier found");
  }
  const std::string word_tier =
      tiers.count("words") ? std::string("words") : tier_order.front();

  Utterance utt;
  utt.utterance_id = utterance_id;
  utt.audio_path = utterance_id + ".wav";
  const std::string speaker = speaker_from_utterance_id(utterance_id);
  for (const auto& iv : tiers[word_tier]) {
    if (trim(iv.text).empty()) continue;
    WordToken tok;
    tok.text = trim(iv.text);
    tok.start_s = iv.xmin;
    tok.end_s = iv.xmax;
    tok.speaker_id = speaker;
    if (!utt.transcript.empty()) utt.transcript += ' ';
    utt.transcript += tok.text;
    utt.tokens.push_back(std::move(tok));
  }
  if (tiers.count("phones")) {
    for (const auto& iv : tiers["phones"]) {
      const auto label = trim(iv.text);
      if (label.empty()) continue;
      for (auto& tok : utt.tokens) {
        if (iv.xmin >= tok.start_s - 1e-9 && iv.xmax <= tok.end_s + 1e-9) {
          tok.phones.push_back({label, iv.xmin, iv.xmax});
          break;
        }
      }
    }
  }
  std::vector<Utterance> out;
  out.push_back(std::move(utt));
  assign_token_ids(out);
  validate_utterance(out.front());
  return out;
}

std::vector<Utterance> load_alignment(const std::string& path,
                                      AlignmentFormat format) {
  const auto text = read_text_file(path);
  if (format == AlignmentFormat::kJson) return parse_alignment_jsonl(text, path);
  return parse_textgrid(text, path, std::filesystem::path(path).stem().string());
}

std::string serialize_alignment(const std::vector<Utterance>& utterances) {
  std::string out;
  for (const auto& utt : utterances) {
    json obj;
    obj["utterance_id"] = utt.utterance_id;
    obj["audio_path"] = utt.audio_path;
    obj["sample_rate_hz"] = utt.sample_rate_hz;
    obj["transcript"] = utt.transcript;
    json words = json::array();
    for (const auto& tok : utt.tokens) {
      json w;
      w["text"] = tok.text;
      w["start_s"] = tok.start_s;
      w["end_s"] = tok.end_s;
      if (!tok.phones.empty()) {
        json phones = json::array();
        for (const auto& p : tok.phones) {
          phones.push_back(
              {{"label", p.label}, {"start_s", p.start_s}, {"end_s", p.end_s}});
        }
        w["phones"] = std::move(phones);
      }
      words.push_back(std::move(w));
    }
    obj["words"] = std::move(words);
    if (!utt.tokens.empty() &&
        utt.tokens.front().speaker_id !=
            speaker_from_utterance_id(utt.utterance_id)) {
      obj["speaker_id"] = utt.tokens.front().speaker_id;
    }
    out += obj.dump();
    out += '\n';
  }
  return out;
}

std::vector<Utterance> filter_short(const std::vector<Utterance>& utterances,
                                    int min_words) {
  std::vector<Utterance> out;
  for (const auto& utt : utterances) {
    if (!utt.too_short(min_words)) out.push_back(utt);
  }
  return out;
}

// ---------------------------------------------------------------- lexicon

std::string case_fold(std::string_view word) {
  std::string out(word);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

int heuristic_syllable_count(std::string_view word) {
  static constexpr std::string_view kVowels = "aeiouy";
  int groups = 0;
  bool in_group = false;
  for (const char raw : word) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
    const bool vowel = kVowels.find(c) != std::string_view::npos;
    if (vowel && !in_group) ++groups;
    in_group = vowel;
  }
  return std::max(groups, 1);
}

void Lexicon::add(std::string word, int syllable_count,
                  int stress_syllable_index) {
  if (syllable_count < 1 || stress_syllable_index < 0 ||
      stress_syllable_index >= syllable_count) {
    throw ValidationError(fmt::format(
        "lexicon entry '{}': stress index {} invalid for {} syllables", word,
        stress_syllable_index, syllable_count));
  }
  auto folded = case_fold(word);
  entries_[folded] = LexiconEntry{folded, syllable_count, stress_syllable_index,
                                  SyllableSource::kLexicon};
}

const LexiconEntry* Lexicon::find(std::string_view word) const {
  const auto it = entries_.find(case_fold(word));
  return it == entries_.end() ? nullptr : &it->second;
}

Lexicon Lexicon::load(const std::string& path) {
  const auto table = csv::read_file(path);
  const auto w = table.column("word");
  const auto s = table.column("syllable_count");
  const auto st = table.column("stress_syllable_index");
  Lexicon lex;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    lex.add(row[w], static_cast<int>(csv::to_long(row[s], table, r, "syllable_count")),
            static_cast<int>(csv::to_long(row[st], table, r, "stress_syllable_index")));
  }
  return lex;
}

LexiconEntry lookup_syllables(std::string_view word, const Lexicon& lexicon) {
  if (word.empty()) throw ParameterError("lookup_syllables: empty word");
  if (const auto* hit = lexicon.find(word)) return *hit;
  return LexiconEntry{case_fold(word), heuristic_syllable_count(word), 0,
                      SyllableSource::kHeuristic};
}

// ---------------------------------------------------------------- columns

TokenColumn load_column(const std::string& path, const std::string& column) {
  const auto table = csv::read_file(path);
  const auto u = table.column("utterance_id");
  const auto i = table.column("index_in_utterance");
  const auto c = table.column(column);
  TokenColumn out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    TokenKey key{row[u], static_cast<int>(csv::to_long(row[i], table, r,
                                                        "index_in_utterance"))};
    if (!out.emplace(key, csv::to_double(row[c], table, r, column)).second) {
      throw ValidationError(fmt::format("{}: duplicate token {}", path,
                                        to_string(key)));
    }
  }
  return out;
}

// ---------------------------------------------------------------- splits

std::string_view to_string(SplitName split) {
  switch (split) {
    case SplitName::kTrain:
      return "train";
    case SplitName::kDev:
      return "dev";
    case SplitName::kTest:
      return "test";
  }
  return "?";
}

SplitName parse_split_name(std::string_view name) {
  if (name == "train") return SplitName::kTrain;
  if (name == "dev") return SplitName::kDev;
  if (name == "test") return SplitName::kTest;
  throw ParameterError(fmt::format("unknown split '{}'", name));
}

SplitAssignment load_split_file(const std::string& path) {
  const auto table = csv::read_file(path);
  const auto u = table.column("utterance_id");
  const auto s = table.column("split");
  SplitAssignment out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    SplitName split;
    try {
      split = parse_split_name(table.rows[r][s]);
    } catch (const ParameterError& e) {
      throw ParseError(path, table.row_lines[r], e.what());
    }
    if (!out.emplace(table.rows[r][u], split).second) {
      throw ValidationError(fmt::format("{}: utterance '{}' listed twice", path,
                                        table.rows[r][u]));
    }
  }
  return out;
}

std::vector<DatasetSplit> make_splits(const std::vector<Utterance>& utterances,
                                      const SplitAssignment& assignment) {
  std::vector<DatasetSplit> splits{{SplitName::kTrain, {}},
                                   {SplitName::kDev, {}},
                                   {SplitName::kTest, {}}};
  for (const auto& utt : utterances) {
    const auto it = assignment.find(utt.utterance_id);
    if (it == assignment.end()) {
      throw ValidationError(fmt::format("utterance '{}' has no split assignment",
                                        utt.utterance_id));
    }
    auto& target = splits[static_cast<std::size_t>(it->second)];
    for (const auto& tok : utt.tokens) target.token_ids.insert(tok.key());
  }
  return splits;
}

// ---------------------------------------------------------------- embeddings

std::string_view to_string(ContextType context) {
  switch (context) {
    case ContextType::kCurrentWord:
      return "current_word";
    case ContextType::kPastContext:
      return "past_context";
    case ContextType::kBidirectional:
      return "bidirectional";
  }
  return "?";
}

ContextType parse_context_type(std::string_view name) {
  if (name == "current" || name == "current_word") return ContextType::kCurrentWord;
  if (name == "past" || name == "past_context") return ContextType::kPastContext;
  if (name == "bidirectional") return ContextType::kBidirectional;
  throw ParameterError(fmt::format("unknown context type '{}'", name));
}

void EmbeddingSet::validate() const {
  if (dim <= 0) throw ValidationError("embedding set: dim must be positive");
  if (rows.cols() != dim ||
      rows.rows() != static_cast<Eigen::Index>(row_token_ids.size())) {
    throw ValidationError(fmt::format(
        "embedding set: {} x {} matrix for {} ids of dim {}", rows.rows(),
        rows.cols(), row_token_ids.size(), dim));
  }
  std::set<TokenKey> seen;
  for (const auto& key : row_token_ids) {
    if (!seen.insert(key).second) {
      throw ValidationError("embedding set: duplicate token id " +
                            to_string(key));
    }
  }
  if (!rows.allFinite()) {
    throw ValidationError("embedding set: non-finite values");
  }
}

std::string embedding_sidecar_path(const std::string& path) {
  return path + ".rows.csv";
}

EmbeddingSet read_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string header_line;
  if (!std::getline(in, header_line)) {
    throw ParseError(path, 1, "missing header line");
  }
  json header;
  try {
    header = json::parse(header_line);
  } catch (const json::parse_error& e) {
    throw ParseError(path, 1, e.what());
  }
  EmbeddingSet set;
  set.context_type =
      parse_context_type(require_field<std::string>(header, "context", path, 1));
  set.dim = require_field<int>(header, "dim", path, 1);
  const auto count = require_field<long>(header, "count", path, 1);
  set.model_name = header.value("model", std::string());
  const auto dtype = header.value("dtype", std::string("f32le"));
  if (dtype != "f32le") {
    throw ParseError(path, 1, fmt::format("unsupported dtype '{}'", dtype));
  }
  if (set.dim <= 0 || count < 0) {
    throw ParseError(path, 1, "dim must be positive and count non-negative");
  }

  const std::size_t n_values = static_cast<std::size_t>(count) * set.dim;
  std::vector<unsigned char> bytes(n_values * 4);
  in.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
    throw ParseError(path, 0,
                     fmt::format("payload truncated: expected {} bytes",
                                 bytes.size()));
  }
  set.rows.resize(count, set.dim);
  for (std::size_t i = 0; i < n_values; ++i) {
    const std::uint32_t bits = static_cast<std::uint32_t>(bytes[4 * i]) |
                               static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8 |
                               static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16 |
                               static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24;
    float value;
    std::memcpy(&value, &bits, sizeof(value));
    set.rows.data()[i] = value;
  }

  const auto sidecar = csv::read_file(embedding_sidecar_path(path));
  const auto rc = sidecar.column("row");
  const auto uc = sidecar.column("utterance_id");
  const auto ic = sidecar.column("index_in_utterance");
  if (static_cast<long>(sidecar.rows.size()) != count) {
    throw ValidationError(fmt::format("{}: sidecar has {} rows, header says {}",
                                      path, sidecar.rows.size(), count));
  }
  set.row_token_ids.resize(count);
  std::vector<bool> filled(count, false);
  for (std::size_t r = 0; r < sidecar.rows.size(); ++r) {
    const auto& row = sidecar.rows[r];
    const long idx = csv::to_long(row[rc], sidecar, r, "row");
    if (idx < 0 || idx >= count || filled[idx]) {
      throw ParseError(sidecar.source, sidecar.row_lines[r],
                       fmt::format("row index {} out of range or repeated", idx));
    }
    filled[idx] = true;
    set.row_token_ids[idx] = {
        row[uc], static_cast<int>(csv::to_long(row[ic], sidecar, r,
                                               "index_in_utterance"))};
  }
  set.validate();
  return set;
}

void write_embeddings(const std::string& path, const EmbeddingSet& set) {
  set.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  json header;
  header["context"] = std::string(to_string(set.context_type));
  header["dim"] = set.dim;
  header["count"] = static_cast<long>(set.row_token_ids.size());
  header["model"] = set.model_name;
  header["dtype"] = "f32le";
  out << header.dump() << '\n';
  const std::size_t n_values = static_cast<std::size_t>(set.rows.size());
  std::vector<unsigned char> bytes(n_values * 4);
  for (std::size_t i = 0; i < n_values; ++i) {
    const float value = static_cast<float>(set.rows.data()[i]);
    std::uint32_t bits;
    std::memcpy(&bits, &value, sizeof(bits));
    for (int b = 0; b < 4; ++b) {
      bytes[4 * i + b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xFFu);
    }
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);

  std::ofstream side(embedding_sidecar_path(path));
  if (!side) throw IoError("cannot write " + embedding_sidecar_path(path));
  side << "row,utterance_id,index_in_utterance\n";
  for (std::size_t r = 0; r < set.row_token_ids.size(); ++r) {
    side << r << ',' << set.row_token_ids[r].utterance_id << ','
         << set.row_token_ids[r].index_in_utterance << '\n';
  }
}

// ---------------------------------------------------------------- join

JoinedDataset join_embeddings(const DatasetSplit& split,
                              const EmbeddingSet& embeddings,
                              const TargetTable& targets) {
  embeddings.validate();
  std::map<TokenKey, Eigen::Index> row_of;
  for (std::size_t r = 0; r < embeddings.row_token_ids.size(); ++r) {
    row_of.emplace(embeddings.row_token_ids[r], static_cast<Eigen::Index>(r));
  }

  std::vector<std::string> missing;
  std::size_t n_missing = 0;
  std::size_t target_dim = 0;
  bool have_dim = false;
  for (const auto& key : split.token_ids) {
    const bool has_embedding = row_of.count(key) > 0;
    const auto t = targets.find(key);
    const bool has_target = t != targets.end();
    if (!has_embedding || !has_target) {
      ++n_missing;
      if (missing.size() < 10) {
        missing.push_back(to_string(key) +
                          (!has_embedding ? " (no embedding)" : " (no target)"));
      }
      continue;
    }
    if (!have_dim) {
      target_dim = t->second.size();
      have_dim = true;
    } else if (t->second.size() != target_dim) {
      throw ValidationError("targets have inconsistent dimensions at " +
                            to_string(key));
    }
  }
  if (n_missing > 0) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw ValidationError(fmt::format("join: {} token(s) missing: {}{}",
                                      n_missing, list,
                                      n_missing > missing.size() ? ", ..." : ""));
  }

  JoinedDataset out;
  const auto n = static_cast<Eigen::Index>(split.token_ids.size());
  out.inputs.resize(n, embeddings.dim);
  out.targets.resize(n, static_cast<Eigen::Index>(target_dim));
  Eigen::Index r = 0;
  for (const auto& key : split.token_ids) {
    out.token_ids.push_back(key);
    out.inputs.row(r) = embeddings.rows.row(row_of.at(key));
    const auto& t = targets.at(key);
    for (std::size_t j = 0; j < target_dim; ++j) out.targets(r, j) = t[j];
    ++r;
  }
  return out;
}

}  // namespace prosody_mi::corpus
