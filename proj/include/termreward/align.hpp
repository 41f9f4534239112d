#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "termreward/text.hpp"

namespace termreward {

struct AlignmentLink {
  std::size_t src_idx = 0;
  std::size_t tgt_idx = 0;
  std::string src_word;
  std::string tgt_word;

  friend bool operator==(const AlignmentLink&, const AlignmentLink&) = default;
};

/// Token-level alignment between a source sequence and one target sequence.
///
/// Links are unique by (src_idx, tgt_idx) and kept sorted by that pair.
class AlignmentSet {
 public:
  AlignmentSet() = default;
  AlignmentSet(std::size_t src_len, std::size_t tgt_len) : src_len_(src_len), tgt_len_(tgt_len) {}

  /// Builds a set from index pairs, resolving surface forms from the
  /// sequences. Duplicate pairs collapse; out-of-range pairs throw.
  static AlignmentSet from_pairs(std::span<const std::pair<std::size_t, std::size_t>> pairs,
                                 const TokenSequence& src, const TokenSequence& tgt);

  /// Inserts a link if its index pair is new. Returns false on duplicates.
  bool insert(AlignmentLink link);

  bool contains(std::size_t src_idx, std::size_t tgt_idx) const;

  const std::vector<AlignmentLink>& links() const noexcept { return links_; }
  std::size_t size() const noexcept { return links_.size(); }
  bool empty() const noexcept { return links_.empty(); }
  std::size_t src_len() const noexcept { return src_len_; }
  std::size_t tgt_len() const noexcept { return tgt_len_; }

  friend bool operator==(const AlignmentSet&, const AlignmentSet&) = default;

 private:
  std::size_t src_len_ = 0;
  std::size_t tgt_len_ = 0;
  std::vector<AlignmentLink> links_;
};

/// "i-j" pairs separated by single spaces, sorted by (i, j).
std::string format_pharaoh(const AlignmentSet& alignments);

/// Parses a Pharaoh line against the sequences it indexes. Malformed pairs
/// report their 1-based column; out-of-range pairs are named in the message.
AlignmentSet parse_pharaoh(std::string_view line, const TokenSequence& src, const TokenSequence& tgt);

enum class AlignmentModel : std::uint8_t { kIbm1 = 1, kIbm2 = 2 };

namespace detail {
class DirectionTrainer;
}

/// Lexical translation probabilities t(target | source) for one direction.
///
/// Rows are stored in compressed sparse form over the co-occurrence pairs
/// seen during training. Source id 0 is the NULL word.
class LexicalTable {
 public:
  using WordId = std::uint32_t;
  static constexpr WordId kNull = 0;
  static constexpr std::string_view kNullWord = "<NULL>";

  /// (j, l, m): target position, source length, target length.
  using DistortionKey = std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>;

  LexicalTable();

  /// Builds a table from explicit (source, target, weight) triples; each
  /// source row is normalized to sum to one. An empty source string denotes
  /// the NULL word.
  static LexicalTable from_entries(
      std::span<const std::tuple<std::string, std::string, double>> entries);

  std::optional<WordId> source_id(std::string_view word) const;
  std::optional<WordId> target_id(std::string_view word) const;

  /// t(target | source); 0 for unseen pairs.
  double prob(WordId source, WordId target) const;
  double prob(std::string_view source, std::string_view target) const;

  /// a(i | j, l, m) with i = 0 for NULL. Uniform when the key is unseen or
  /// the model is IBM1.
  double distortion(std::uint32_t i, std::uint32_t j, std::uint32_t l, std::uint32_t m) const;

  std::size_t source_vocab_size() const noexcept { return source_words_.size(); }
  std::size_t target_vocab_size() const noexcept { return target_words_.size(); }
  const std::string& source_word(WordId id) const { return source_words_.at(id); }
  const std::string& target_word(WordId id) const { return target_words_.at(id); }

  /// Nonzero entries of one source row as (target id, probability).
  std::vector<std::pair<WordId, double>> row(WordId source) const;

  AlignmentModel model() const noexcept { return model_; }

  friend bool operator==(const LexicalTable& a, const LexicalTable& b);

 private:
  friend class LexicalTableBuilder;
  friend class detail::DirectionTrainer;
  friend void write_lexical(std::ostream&, const LexicalTable&);
  friend LexicalTable read_lexical(std::istream&);

  void rebuild_index();

  AlignmentModel model_ = AlignmentModel::kIbm1;
  std::vector<std::string> source_words_;
  std::vector<std::string> target_words_;
  std::unordered_map<std::string, WordId> source_index_;
  std::unordered_map<std::string, WordId> target_index_;
  std::vector<std::uint64_t> row_offsets_;
  std::vector<WordId> columns_;
  std::vector<double> probs_;
  std::map<DistortionKey, std::vector<double>> distortion_;
};

/// Forward t(tgt|src) and reverse t(src|tgt) tables. The reverse direction
/// is needed for grow-diag symmetrization.
struct TranslationTable {
  LexicalTable forward;
  std::optional<LexicalTable> reverse;

  friend bool operator==(const TranslationTable&, const TranslationTable&) = default;
};

using ParallelCorpus = std::vector<std::pair<TokenSequence, TokenSequence>>;

enum class Direction { kForward, kReverse };

struct EmOptions {
  std::size_t iterations = 5;
  AlignmentModel model = AlignmentModel::kIbm1;
  bool train_reverse = true;
  /// Called after each E-step with the log-likelihood of the parameters that
  /// step was run with.
  std::function<void(Direction, std::size_t iteration, double log_likelihood)> on_iteration;
};

struct EmReport {
  std::vector<double> forward_log_likelihood;
  std::vector<double> reverse_log_likelihood;
  std::size_t skipped_pairs = 0;
};

/// IBM Model 1 (or Model 2) EM with uniform initialization over observed
/// co-occurrences. Pairs with an empty side are skipped and counted.
TranslationTable em_train(const ParallelCorpus& corpus, const EmOptions& options,
                          EmReport* report = nullptr);

/// Log-likelihood of a corpus under one direction of a table.
double corpus_log_likelihood(const LexicalTable& table, const ParallelCorpus& corpus,
                             Direction direction);

enum class AlignMode { kArgmax, kGrowDiagFinal };

struct AlignStats {
  std::size_t oov_tokens = 0;
};

/// Viterbi links for one direction: each target token links to its best
/// source token unless NULL wins or nothing is known. Ties go to the lowest
/// source index; NULL must win strictly.
AlignmentSet align(const TranslationTable& table, const TokenSequence& src,
                   const TokenSequence& tgt, AlignMode mode, AlignStats* stats = nullptr);

/// grow-diag-final over two directional link sets on the same grid.
AlignmentSet grow_diag_final(const AlignmentSet& forward, const AlignmentSet& reverse,
                             const TokenSequence& src, const TokenSequence& tgt);

void save_table(const TranslationTable& table, const std::filesystem::path& path);
TranslationTable load_table(const std::filesystem::path& path);

void write_table(std::ostream& out, const TranslationTable& table);
TranslationTable read_table(std::istream& in);

/// Parallel corpus readers: TSV `src<TAB>tgt` or JSONL with `src`/`tgt`
/// strings or `src_tokens`/`tgt_tokens` arrays.
ParallelCorpus read_parallel_corpus(const std::filesystem::path& path, std::string_view src_lang,
                                    std::string_view tgt_lang);

}  // namespace termreward
