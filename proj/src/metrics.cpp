#include "termreward/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "termreward/error.hpp"

namespace termreward {

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, std::size_t> count_ngrams(const std::vector<std::string>& tokens, std::size_t n) {
  std::map<Ngram, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[Ngram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                   tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

}  // namespace

NgramStats& NgramStats::operator+=(const NgramStats& other) {
  if (matches.size() < other.matches.size()) {
    matches.resize(other.matches.size(), 0);
    totals.resize(other.totals.size(), 0);
  }
  for (std::size_t n = 0; n < other.matches.size(); ++n) {
    matches[n] += other.matches[n];
    totals[n] += other.totals[n];
  }
  hyp_len += other.hyp_len;
  ref_len += other.ref_len;
  return *this;
}

NgramStats ngram_stats(const TokenSequence& hypothesis, const TokenSequence& reference, int max_n) {
  if (max_n < 1) throw InvalidArgument("max_n must be >= 1");
  NgramStats stats;
  stats.matches.assign(static_cast<std::size_t>(max_n), 0);
  stats.totals.assign(static_cast<std::size_t>(max_n), 0);
  stats.hyp_len = hypothesis.size();
  stats.ref_len = reference.size();
  for (std::size_t n = 1; n <= static_cast<std::size_t>(max_n); ++n) {
    const auto hyp = count_ngrams(hypothesis.tokens, n);
    const auto ref = count_ngrams(reference.tokens, n);
    for (const auto& [gram, c] : hyp) {
      stats.totals[n - 1] += c;
      if (auto it = ref.find(gram); it != ref.end()) stats.matches[n - 1] += std::min(c, it->second);
    }
  }
  return stats;
}

namespace {

double brevity_penalty(std::size_t hyp_len, std::size_t ref_len) {
  if (hyp_len == 0) return 0.0;
  if (hyp_len > ref_len) return 1.0;
  return std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
}

}  // namespace

double bleu_from_stats(const NgramStats& stats, const BleuOptions& options) {
  if (stats.hyp_len == 0) return 0.0;
  double log_sum = 0.0;
  const auto max_n = static_cast<std::size_t>(options.max_n);
  for (std::size_t n = 0; n < max_n; ++n) {
    double m = n < stats.matches.size() ? static_cast<double>(stats.matches[n]) : 0.0;
    double t = n < stats.totals.size() ? static_cast<double>(stats.totals[n]) : 0.0;
    if (options.smoothing == BleuSmoothing::kAddOne && n > 0) {
      m += 1.0;
      t += 1.0;
    }
    if (m <= 0.0 || t <= 0.0) return 0.0;
    log_sum += std::log(m / t);
  }
  return brevity_penalty(stats.hyp_len, stats.ref_len) * std::exp(log_sum / static_cast<double>(max_n));
}

double sentence_bleu(const TokenSequence& hypothesis, const TokenSequence& reference, int max_n) {
  if (reference.empty()) throw InvalidArgument("sentence BLEU needs a non-empty reference");
  return bleu_from_stats(ngram_stats(hypothesis, reference, max_n), {max_n, BleuSmoothing::kAddOne});
}

CorpusScore bleu(std::span<const TokenSequence> hypotheses, std::span<const TokenSequence> references,
                 const BleuOptions& options) {
  if (hypotheses.size() != references.size())
    throw InvalidArgument("BLEU: " + std::to_string(hypotheses.size()) + " hypotheses but " +
                          std::to_string(references.size()) + " references");
  if (references.empty()) throw InvalidArgument("BLEU: empty corpus");
  CorpusScore score;
  score.metric = "bleu";
  score.sentences = hypotheses.size();
  score.ngrams.matches.assign(static_cast<std::size_t>(options.max_n), 0);
  score.ngrams.totals.assign(static_cast<std::size_t>(options.max_n), 0);
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    if (references[i].empty())
      throw InvalidArgument("BLEU: reference sentence " + std::to_string(i) + " is empty");
    score.ngrams += ngram_stats(hypotheses[i], references[i], options.max_n);
  }
  score.brevity_penalty = brevity_penalty(score.ngrams.hyp_len, score.ngrams.ref_len);
  score.value = 100.0 * bleu_from_stats(score.ngrams, options);
  return score;
}

// ---------------------------------------------------------------------------
// Terminology accuracy

void TermDictionary::add(std::vector<std::string> source, std::vector<std::vector<std::string>> renderings) {
  if (source.empty()) throw InvalidArgument("term dictionary entry has an empty source term");
  if (renderings.empty()) throw InvalidArgument("term dictionary entry has no allowed rendering");
  for (const auto& r : renderings)
    if (r.empty()) throw InvalidArgument("term dictionary entry has an empty rendering");
  for (auto& e : entries_) {
    if (e.source == source) {
      for (auto& r : renderings)
        if (std::find(e.renderings.begin(), e.renderings.end(), r) == e.renderings.end())
          e.renderings.push_back(std::move(r));
      return;
    }
  }
  entries_.push_back({std::move(source), std::move(renderings)});
}

TermDictionary load_term_dictionary(const std::filesystem::path& path, std::string_view src_lang,
                                    std::string_view tgt_lang) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read term dictionary " + path.string());
  TermDictionary dict;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line) || trim(line).front() == '#') continue;
    const auto where = path.string() + ":" + std::to_string(lineno);
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError(where + ": missing TAB between term and renderings");
    std::vector<std::vector<std::string>> renderings;
    std::string_view rest = std::string_view(line).substr(tab + 1);
    while (true) {
      const auto bar = rest.find('|');
      auto tokens = tokenize(rest.substr(0, bar), tgt_lang).tokens;
      if (!tokens.empty()) renderings.push_back(std::move(tokens));
      if (bar == std::string_view::npos) break;
      rest = rest.substr(bar + 1);
    }
    try {
      dict.add(tokenize(std::string_view(line).substr(0, tab), src_lang).tokens, std::move(renderings));
    } catch (const InvalidArgument& e) {
      throw FormatError(where + ": " + e.what());
    }
  }
  if (dict.empty()) throw FormatError("term dictionary " + path.string() + " has zero entries");
  return dict;
}

namespace {

std::vector<std::string> normalized(const std::vector<std::string>& tokens, const MatchPolicy& match) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(match.normalize(t));
  return out;
}

std::size_t count_occurrences(const std::vector<std::string>& haystack, const std::vector<std::string>& needle) {
  std::size_t count = 0;
  if (needle.empty() || needle.size() > haystack.size()) return 0;
  for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i)
    if (std::equal(needle.begin(), needle.end(), haystack.begin() + static_cast<std::ptrdiff_t>(i))) ++count;
  return count;
}

}  // namespace

CorpusScore terminology_accuracy(std::span<const std::pair<TokenSequence, TokenSequence>> records,
                                 const TermDictionary& dictionary, const MatchPolicy& match) {
  if (dictionary.empty()) throw InvalidArgument("terminology accuracy needs a non-empty dictionary");
  struct Prepared {
    std::vector<std::string> source;
    std::vector<std::vector<std::string>> renderings;
  };
  std::vector<Prepared> entries;
  for (const auto& e : dictionary.entries()) {
    Prepared p{normalized(e.source, match), {}};
    for (const auto& r : e.renderings) p.renderings.push_back(normalized(r, match));
    entries.push_back(std::move(p));
  }

  CorpusScore score;
  score.metric = "ta";
  score.sentences = records.size();
  for (const auto& [src, hyp] : records) {
    const auto s = normalized(src.tokens, match);
    const auto h = normalized(hyp.tokens, match);
    for (const auto& e : entries) {
      const std::size_t occurrences = count_occurrences(s, e.source);
      if (occurrences == 0) continue;
      const bool rendered = std::any_of(e.renderings.begin(), e.renderings.end(),
                                        [&](const auto& r) { return count_occurrences(h, r) > 0; });
      score.term_total += occurrences;
      ++score.term_type_total;
      if (rendered) {
        score.term_hits += occurrences;
        ++score.term_type_hits;
      }
    }
  }
  if (score.term_total > 0)
    score.value = static_cast<double>(score.term_hits) / static_cast<double>(score.term_total);
  return score;
}

}  // namespace termreward
