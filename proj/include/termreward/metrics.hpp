#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "termreward/match.hpp"
#include "termreward/text.hpp"

namespace termreward {

enum class BleuSmoothing { kNone, kAddOne };

struct BleuOptions {
  int max_n = 4;
  BleuSmoothing smoothing = BleuSmoothing::kNone;
};

/// Clipped n-gram matches and hypothesis n-gram totals, index n-1.
struct NgramStats {
  std::vector<std::size_t> matches;
  std::vector<std::size_t> totals;
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;

  NgramStats& operator+=(const NgramStats& other);
};

NgramStats ngram_stats(const TokenSequence& hypothesis, const TokenSequence& reference, int max_n = 4);

/// BLEU in [0, 1] from accumulated statistics.
double bleu_from_stats(const NgramStats& stats, const BleuOptions& options = {});

/// Add-one smoothed sentence BLEU in [0, 1]. Throws on an empty reference.
double sentence_bleu(const TokenSequence& hypothesis, const TokenSequence& reference, int max_n = 4);

struct CorpusScore {
  std::string metric;
  /// BLEU in [0, 100], TA in [0, 1]. Empty for TA when no term was found.
  std::optional<double> value;
  std::size_t sentences = 0;

  NgramStats ngrams;
  double brevity_penalty = 0.0;

  std::size_t term_hits = 0;
  std::size_t term_total = 0;
  std::size_t term_type_hits = 0;
  std::size_t term_type_total = 0;

  bool no_terms_found() const { return metric == "ta" && !value; }
};

/// Corpus BLEU over pre-tokenized sentences. Throws on a length mismatch or
/// an empty reference sentence.
CorpusScore bleu(std::span<const TokenSequence> hypotheses, std::span<const TokenSequence> references,
                 const BleuOptions& options = {});

struct TermEntry {
  std::vector<std::string> source;
  std::vector<std::vector<std::string>> renderings;
};

class TermDictionary {
 public:
  /// Throws InvalidArgument on empty sequences or an entry without renderings.
  void add(std::vector<std::string> source, std::vector<std::vector<std::string>> renderings);

  const std::vector<TermEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

 private:
  std::vector<TermEntry> entries_;
};

/// TSV `src_term<TAB>rendering[|alt...]`; terms are tokenized with the
/// builtin tokenizer of each side's language.
TermDictionary load_term_dictionary(const std::filesystem::path& path, std::string_view src_lang,
                                    std::string_view tgt_lang);

/// Occurrence-level terminology accuracy. Every dictionary source term found
/// contiguously in a source sentence counts once per occurrence; it is a hit
/// when any allowed rendering occurs contiguously in the hypothesis.
CorpusScore terminology_accuracy(std::span<const std::pair<TokenSequence, TokenSequence>> records,
                                 const TermDictionary& dictionary, const MatchPolicy& match = {});

}  // namespace termreward
