#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace prosody_mi::corpus {

// Stable token identity used for every join across feature, split and
// embedding files.
struct TokenKey {
  std::string utterance_id;
  int index_in_utterance = 0;

  auto operator<=>(const TokenKey&) const = default;
  bool operator==(const TokenKey&) const = default;
};

std::string to_string(const TokenKey& key);

// Phone-level alignment span, used to locate the stressed syllable when
// available.
struct Phone {
  std::string label;
  double start_s = 0.0;
  double end_s = 0.0;
};

struct WordToken {
  std::int64_t token_id = 0;
  std::string utterance_id;
  int index_in_utterance = 0;
  std::string text;
  double start_s = 0.0;
  double end_s = 0.0;
  std::string speaker_id;
  std::vector<Phone> phones;

  TokenKey key() const { return {utterance_id, index_in_utterance}; }
  double duration_s() const { return end_s - start_s; }
};

struct Utterance {
  std::string utterance_id;
  std::string audio_path;
  std::string transcript;
  std::vector<WordToken> tokens;
  int sample_rate_hz = 0;

  // Single-word fragments (book and chapter titles) are loaded but never
  // enter a dataset.
  bool too_short(int min_words = 2) const {
    return static_cast<int>(tokens.size()) < min_words;
  }
};

enum class AlignmentFormat { kJson, kTextGrid };

// Loads utterances from a JSON-lines alignment file or a Praat TextGrid.
// Token ids are assigned sequentially in file order.
std::vector<Utterance> load_alignment(const std::string& path,
                                      AlignmentFormat format);
std::vector<Utterance> parse_alignment_jsonl(std::string_view text,
                                             const std::string& source);
std::vector<Utterance> parse_textgrid(std::string_view text,
                                      const std::string& source,
                                      const std::string& utterance_id);

// Writes the JSON-lines form read by load_alignment.
std::string serialize_alignment(const std::vector<Utterance>& utterances);

// Throws ValidationError on empty, inverted or overlapping token spans.
void validate_utterance(const Utterance& utterance);

std::vector<Utterance> filter_short(const std::vector<Utterance>& utterances,
                                    int min_words = 2);

// ---------------------------------------------------------------- lexicon

enum class SyllableSource { kLexicon, kHeuristic };

struct LexiconEntry {
  std::string word;
  int syllable_count = 1;
  int stress_syllable_index = 0;
  SyllableSource source = SyllableSource::kLexicon;
};

class Lexicon {
 public:
  Lexicon() = default;

  static Lexicon load(const std::string& path);

  void add(std::string word, int syllable_count, int stress_syllable_index);
  const LexiconEntry* find(std::string_view word) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, LexiconEntry, std::less<>> entries_;
};

std::string case_fold(std::string_view word);

// Count of maximal runs of vowel letters (a, e, i, o, u, y), at least 1.
int heuristic_syllable_count(std::string_view word);

// Lexicon hit, or the vowel-group heuristic with stress on the first
// syllable. Total for any non-empty word.
LexiconEntry lookup_syllables(std::string_view word, const Lexicon& lexicon);

// ---------------------------------------------------------------- columns

// A precomputed per-token column (prominence, surprisal, ...).
using TokenColumn = std::map<TokenKey, double>;

TokenColumn load_column(const std::string& path, const std::string& column);

// ---------------------------------------------------------------- splits

enum class SplitName { kTrain, kDev, kTest };

std::string_view to_string(SplitName split);
SplitName parse_split_name(std::string_view name);

struct DatasetSplit {
  SplitName split_name = SplitName::kTrain;
  std::set<TokenKey> token_ids;
};

using SplitAssignment = std::map<std::string, SplitName>;

SplitAssignment load_split_file(const std::string& path);

// Assigns every token of every utterance to the split of its utterance.
// Throws ValidationError if an utterance has no assignment.
std::vector<DatasetSplit> make_splits(const std::vector<Utterance>& utterances,
                                      const SplitAssignment& assignment);

// ---------------------------------------------------------------- embeddings

enum class ContextType { kCurrentWord, kPastContext, kBidirectional };

std::string_view to_string(ContextType context);
// Accepts both the short CLI names (current, past, bidirectional) and the
// long names (current_word, past_context).
ContextType parse_context_type(std::string_view name);

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct EmbeddingSet {
  ContextType context_type = ContextType::kCurrentWord;
  int dim = 0;
  RowMatrix rows;
  std::vector<TokenKey> row_token_ids;
  std::string model_name;

  // Throws ValidationError on row count mismatch, duplicate ids or
  // non-finite values.
  void validate() const;
};

// Binary embedding file: one JSON header line, then count*dim float32
// little-endian values row-major. Row keys live in "<path>.rows.csv"
// (row,utterance_id,index_in_utterance).
EmbeddingSet read_embeddings(const std::string& path);
void write_embeddings(const std::string& path, const EmbeddingSet& set);

std::string embedding_sidecar_path(const std::string& path);

// ---------------------------------------------------------------- join

// Per-token target vectors for one feature.
using TargetTable = std::map<TokenKey, std::vector<double>>;

struct JoinedDataset {
  std::vector<TokenKey> token_ids;
  RowMatrix inputs;   // N x d
  RowMatrix targets;  // N x k

  std::size_t size() const { return token_ids.size(); }
};

// Aligns embedding rows and targets for the tokens of one split, ordered by
// token key. Throws ValidationError listing up to 10 missing ids.
JoinedDataset join_embeddings(const DatasetSplit& split,
                              const EmbeddingSet& embeddings,
                              const TargetTable& targets);

}  // namespace prosody_mi::corpus
