#include "termreward/align.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "termreward/error.hpp"

namespace termreward {

// ---------------------------------------------------------------------------
// AlignmentSet

AlignmentSet AlignmentSet::from_pairs(std::span<const std::pair<std::size_t, std::size_t>> pairs,
                                      const TokenSequence& src, const TokenSequence& tgt) {
  AlignmentSet out(src.size(), tgt.size());
  for (const auto& [i, j] : pairs) {
    if (i >= src.size() || j >= tgt.size())
      throw InvalidArgument("alignment pair " + std::to_string(i) + "-" + std::to_string(j) +
                            " out of range for lengths " + std::to_string(src.size()) + "x" +
                            std::to_string(tgt.size()));
    out.insert({i, j, src[i], tgt[j]});
  }
  return out;
}

bool AlignmentSet::insert(AlignmentLink link) {
  auto key = [](const AlignmentLink& l) { return std::pair(l.src_idx, l.tgt_idx); };
  auto it = std::lower_bound(links_.begin(), links_.end(), link,
                             [&](const AlignmentLink& a, const AlignmentLink& b) { return key(a) < key(b); });
  if (it != links_.end() && key(*it) == key(link)) return false;
  links_.insert(it, std::move(link));
  return true;
}

bool AlignmentSet::contains(std::size_t src_idx, std::size_t tgt_idx) const {
  return std::binary_search(links_.begin(), links_.end(), AlignmentLink{src_idx, tgt_idx, {}, {}},
                            [](const AlignmentLink& a, const AlignmentLink& b) {
                              return std::pair(a.src_idx, a.tgt_idx) < std::pair(b.src_idx, b.tgt_idx);
                            });
}

std::string format_pharaoh(const AlignmentSet& alignments) {
  std::string out;
  for (const auto& link : alignments.links()) {
    if (!out.empty()) out.push_back(' ');
    out += std::to_string(link.src_idx);
    out.push_back('-');
    out += std::to_string(link.tgt_idx);
  }
  return out;
}

AlignmentSet parse_pharaoh(std::string_view line, const TokenSequence& src, const TokenSequence& tgt) {
  AlignmentSet out(src.size(), tgt.size());
  std::size_t pos = 0;
  auto is_ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (pos < line.size()) {
    if (is_ws(line[pos])) {
      ++pos;
      continue;
    }
    std::size_t end = pos;
    while (end < line.size() && !is_ws(line[end])) ++end;
    const std::string_view pair = line.substr(pos, end - pos);
    const auto column = std::to_string(pos + 1);

    const auto dash = pair.find('-');
    std::size_t i = 0;
    std::size_t j = 0;
    bool ok = dash != std::string_view::npos && dash > 0 && dash + 1 < pair.size();
    if (ok) {
      auto [pi, ei] = std::from_chars(pair.data(), pair.data() + dash, i);
      auto [pj, ej] = std::from_chars(pair.data() + dash + 1, pair.data() + pair.size(), j);
      ok = ei == std::errc() && ej == std::errc() && pi == pair.data() + dash &&
           pj == pair.data() + pair.size();
    }
    if (!ok) throw FormatError("malformed alignment pair '" + std::string(pair) + "' at column " + column);
    if (i >= src.size() || j >= tgt.size())
      throw FormatError("alignment pair '" + std::string(pair) + "' at column " + column +
                        " out of range for source length " + std::to_string(src.size()) +
                        " and target length " + std::to_string(tgt.size()));
    out.insert({i, j, src[i], tgt[j]});
    pos = end;
  }
  return out;
}

// ---------------------------------------------------------------------------
// LexicalTable

LexicalTable::LexicalTable() {
  source_words_.emplace_back(kNullWord);
  row_offsets_.assign(2, 0);
  rebuild_index();
}

void LexicalTable::rebuild_index() {
  source_index_.clear();
  target_index_.clear();
  // NULL is reachable only through kNull, never by surface lookup.
  for (WordId id = 1; id < source_words_.size(); ++id) source_index_.emplace(source_words_[id], id);
  for (WordId id = 0; id < target_words_.size(); ++id) target_index_.emplace(target_words_[id], id);
}

std::optional<LexicalTable::WordId> LexicalTable::source_id(std::string_view word) const {
  auto it = source_index_.find(std::string(word));
  if (it == source_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<LexicalTable::WordId> LexicalTable::target_id(std::string_view word) const {
  auto it = target_index_.find(std::string(word));
  if (it == target_index_.end()) return std::nullopt;
  return it->second;
}

double LexicalTable::prob(WordId source, WordId target) const {
  if (source + 1 >= row_offsets_.size()) return 0.0;
  auto first = columns_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[source]);
  auto last = columns_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[source + 1]);
  auto it = std::lower_bound(first, last, target);
  if (it == last || *it != target) return 0.0;
  return probs_[static_cast<std::size_t>(it - columns_.begin())];
}

double LexicalTable::prob(std::string_view source, std::string_view target) const {
  auto t = target_id(target);
  if (!t) return 0.0;
  if (source.empty() || source == kNullWord) return prob(kNull, *t);
  auto s = source_id(source);
  return s ? prob(*s, *t) : 0.0;
}

double LexicalTable::distortion(std::uint32_t i, std::uint32_t j, std::uint32_t l, std::uint32_t m) const {
  if (model_ == AlignmentModel::kIbm2) {
    auto it = distortion_.find({j, l, m});
    if (it != distortion_.end() && i < it->second.size()) return it->second[i];
  }
  return 1.0 / static_cast<double>(l + 1);
}

std::vector<std::pair<LexicalTable::WordId, double>> LexicalTable::row(WordId source) const {
  std::vector<std::pair<WordId, double>> out;
  if (source + 1 >= row_offsets_.size()) return out;
  for (auto k = row_offsets_[source]; k < row_offsets_[source + 1]; ++k)
    out.emplace_back(columns_[k], probs_[k]);
  return out;
}

bool operator==(const LexicalTable& a, const LexicalTable& b) {
  return a.model_ == b.model_ && a.source_words_ == b.source_words_ &&
         a.target_words_ == b.target_words_ && a.row_offsets_ == b.row_offsets_ &&
         a.columns_ == b.columns_ && a.probs_ == b.probs_ && a.distortion_ == b.distortion_;
}

/// Assembles the sparse layout from a co-occurrence list.
class LexicalTableBuilder {
 public:
  using WordId = LexicalTable::WordId;

  WordId source(const std::string& word) {
    auto [it, inserted] = source_index_.emplace(word, static_cast<WordId>(table_.source_words_.size()));
    if (inserted) table_.source_words_.push_back(word);
    return it->second;
  }

  WordId target(const std::string& word) {
    auto [it, inserted] = target_index_.emplace(word, static_cast<WordId>(table_.target_words_.size()));
    if (inserted) table_.target_words_.push_back(word);
    return it->second;
  }

  void add_pair(WordId s, WordId t) { pairs_.emplace_back(s, t); }

  /// Sorts co-occurrences into rows and returns the table with zero weights.
  LexicalTable finish(AlignmentModel model) {
    std::sort(pairs_.begin(), pairs_.end());
    pairs_.erase(std::unique(pairs_.begin(), pairs_.end()), pairs_.end());
    const std::size_t rows = table_.source_words_.size();
    table_.row_offsets_.assign(rows + 1, 0);
    table_.columns_.clear();
    for (const auto& [s, t] : pairs_) {
      ++table_.row_offsets_[s + 1];
      table_.columns_.push_back(t);
    }
    for (std::size_t r = 0; r < rows; ++r) table_.row_offsets_[r + 1] += table_.row_offsets_[r];
    table_.probs_.assign(table_.columns_.size(), 0.0);
    table_.model_ = model;
    table_.rebuild_index();
    return std::move(table_);
  }

 private:
  LexicalTable table_;
  std::unordered_map<std::string, WordId> source_index_{{std::string(LexicalTable::kNullWord), 0}};
  std::unordered_map<std::string, WordId> target_index_;
  std::vector<std::pair<WordId, WordId>> pairs_;
};

LexicalTable LexicalTable::from_entries(
    std::span<const std::tuple<std::string, std::string, double>> entries) {
  LexicalTableBuilder builder;
  std::vector<std::tuple<WordId, WordId, double>> ids;
  for (const auto& [s, t, w] : entries) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("table entry weight must be finite and >= 0");
    const WordId sid = s.empty() ? kNull : builder.source(s);
    const WordId tid = builder.target(t);
    builder.add_pair(sid, tid);
    ids.emplace_back(sid, tid, w);
  }
  LexicalTable table = builder.finish(AlignmentModel::kIbm1);
  for (const auto& [s, t, w] : ids) {
    auto first = table.columns_.begin() + static_cast<std::ptrdiff_t>(table.row_offsets_[s]);
    auto last = table.columns_.begin() + static_cast<std::ptrdiff_t>(table.row_offsets_[s + 1]);
    auto it = std::lower_bound(first, last, t);
    table.probs_[static_cast<std::size_t>(it - table.columns_.begin())] += w;
  }
  for (std::size_t r = 0; r + 1 < table.row_offsets_.size(); ++r) {
    double total = 0.0;
    for (auto k = table.row_offsets_[r]; k < table.row_offsets_[r + 1]; ++k) total += table.probs_[k];
    if (total <= 0.0) continue;
    for (auto k = table.row_offsets_[r]; k < table.row_offsets_[r + 1]; ++k) table.probs_[k] /= total;
  }
  return table;
}

// ---------------------------------------------------------------------------
// EM training

namespace detail {

struct EncodedPair {
  std::vector<LexicalTable::WordId> src;  // without NULL
  std::vector<LexicalTable::WordId> tgt;
  std::vector<std::uint64_t> cell;        // (l+1) x m indices into probs, row-major by i
};

class DirectionTrainer {
 public:
  DirectionTrainer(const std::vector<std::pair<const TokenSequence*, const TokenSequence*>>& pairs,
                   AlignmentModel model)
      : model_(model) {
    LexicalTableBuilder builder;
    encoded_.reserve(pairs.size());
    for (const auto& [s, t] : pairs) {
      EncodedPair e;
      for (const auto& w : s->tokens) e.src.push_back(builder.source(w));
      for (const auto& w : t->tokens) e.tgt.push_back(builder.target(w));
      for (auto f : e.tgt) {
        builder.add_pair(LexicalTable::kNull, f);
        for (auto w : e.src) builder.add_pair(w, f);
      }
      encoded_.push_back(std::move(e));
    }
    table_ = builder.finish(model);
    offsets_ = &table_.row_offsets_;

    for (auto& e : encoded_) {
      const std::size_t l = e.src.size();
      const std::size_t m = e.tgt.size();
      e.cell.resize((l + 1) * m);
      for (std::size_t i = 0; i <= l; ++i) {
        const auto s = i == 0 ? LexicalTable::kNull : e.src[i - 1];
        for (std::size_t j = 0; j < m; ++j) e.cell[i * m + j] = locate(s, e.tgt[j]);
      }
      if (model_ == AlignmentModel::kIbm2) {
        for (std::size_t j = 0; j < m; ++j) {
          auto key = LexicalTable::DistortionKey{static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(l),
                                                 static_cast<std::uint32_t>(m)};
          table_.distortion_.try_emplace(key, l + 1, 1.0 / static_cast<double>(l + 1));
        }
      }
    }

    const auto& off = table_.row_offsets_;
    for (std::size_t r = 0; r + 1 < off.size(); ++r) {
      const auto width = off[r + 1] - off[r];
      for (auto k = off[r]; k < off[r + 1]; ++k) table_.probs_[k] = 1.0 / static_cast<double>(width);
    }
  }

  /// One E-step + M-step; returns the log-likelihood under the parameters
  /// in effect before the update.
  double iterate() {
    std::vector<double> counts(table_.probs_.size(), 0.0);
    std::map<LexicalTable::DistortionKey, std::vector<double>> dist_counts;
    double ll = 0.0;
    std::vector<double> weights;

    for (const auto& e : encoded_) {
      const std::size_t l = e.src.size();
      const std::size_t m = e.tgt.size();
      const auto ul = static_cast<std::uint32_t>(l);
      const auto um = static_cast<std::uint32_t>(m);
      weights.resize(l + 1);
      for (std::size_t j = 0; j < m; ++j) {
        const auto uj = static_cast<std::uint32_t>(j);
        const std::vector<double>* a = nullptr;
        if (model_ == AlignmentModel::kIbm2) a = &table_.distortion_.at({uj, ul, um});
        double z = 0.0;
        for (std::size_t i = 0; i <= l; ++i) {
          const double align_p = a ? (*a)[i] : 1.0 / static_cast<double>(l + 1);
          weights[i] = align_p * table_.probs_[e.cell[i * m + j]];
          z += weights[i];
        }
        ll += std::log(z);
        std::vector<double>* dc = nullptr;
        if (a) {
          auto [it, _] = dist_counts.try_emplace({uj, ul, um}, l + 1, 0.0);
          dc = &it->second;
        }
        for (std::size_t i = 0; i <= l; ++i) {
          const double posterior = weights[i] / z;
          counts[e.cell[i * m + j]] += posterior;
          if (dc) (*dc)[i] += posterior;
        }
      }
    }

    const auto& off = table_.row_offsets_;
    for (std::size_t r = 0; r + 1 < off.size(); ++r) {
      double total = 0.0;
      for (auto k = off[r]; k < off[r + 1]; ++k) total += counts[k];
      if (total <= 0.0) continue;
      for (auto k = off[r]; k < off[r + 1]; ++k) table_.probs_[k] = counts[k] / total;
    }
    for (auto& [key, c] : dist_counts) {
      double total = 0.0;
      for (double v : c) total += v;
      if (total <= 0.0) continue;
      auto& a = table_.distortion_.at(key);
      for (std::size_t i = 0; i < c.size(); ++i) a[i] = c[i] / total;
    }
    return ll;
  }

  LexicalTable release() { return std::move(table_); }

 private:
  std::uint64_t locate(LexicalTable::WordId s, LexicalTable::WordId t) const {
    const auto& cols = table_.columns_;
    auto first = cols.begin() + static_cast<std::ptrdiff_t>((*offsets_)[s]);
    auto last = cols.begin() + static_cast<std::ptrdiff_t>((*offsets_)[s + 1]);
    auto it = std::lower_bound(first, last, t);
    return static_cast<std::uint64_t>(it - cols.begin());
  }

  AlignmentModel model_;
  LexicalTable table_;
  const std::vector<std::uint64_t>* offsets_ = nullptr;
  std::vector<EncodedPair> encoded_;
};

LexicalTable train_direction(const std::vector<std::pair<const TokenSequence*, const TokenSequence*>>& pairs,
                             const EmOptions& options, Direction direction, std::vector<double>& history) {
  DirectionTrainer trainer(pairs, options.model);
  for (std::size_t it = 0; it < options.iterations; ++it) {
    const double ll = trainer.iterate();
    history.push_back(ll);
    if (options.on_iteration) options.on_iteration(direction, it + 1, ll);
  }
  return trainer.release();
}

}  // namespace detail

TranslationTable em_train(const ParallelCorpus& corpus, const EmOptions& options, EmReport* report) {
  if (corpus.empty()) throw InvalidArgument("em_train: corpus is empty");
  if (options.iterations < 1) throw InvalidArgument("em_train: iterations must be >= 1");

  EmReport local;
  EmReport& rep = report ? *report : local;
  rep = {};

  std::vector<std::pair<const TokenSequence*, const TokenSequence*>> forward;
  std::vector<std::pair<const TokenSequence*, const TokenSequence*>> reverse;
  for (const auto& [s, t] : corpus) {
    if (s.empty() || t.empty()) {
      ++rep.skipped_pairs;
      continue;
    }
    forward.emplace_back(&s, &t);
    reverse.emplace_back(&t, &s);
  }
  if (forward.empty()) throw InvalidArgument("em_train: every sentence pair has an empty side");

  TranslationTable table;
  table.forward = detail::train_direction(forward, options, Direction::kForward, rep.forward_log_likelihood);
  if (options.train_reverse)
    table.reverse = detail::train_direction(reverse, options, Direction::kReverse, rep.reverse_log_likelihood);
  return table;
}

double corpus_log_likelihood(const LexicalTable& table, const ParallelCorpus& corpus, Direction direction) {
  double ll = 0.0;
  for (const auto& [a, b] : corpus) {
    const TokenSequence& s = direction == Direction::kForward ? a : b;
    const TokenSequence& t = direction == Direction::kForward ? b : a;
    if (s.empty() || t.empty()) continue;
    const auto l = static_cast<std::uint32_t>(s.size());
    const auto m = static_cast<std::uint32_t>(t.size());
    for (std::uint32_t j = 0; j < m; ++j) {
      double z = table.distortion(0, j, l, m) * table.prob(LexicalTable::kNullWord, t[j]);
      for (std::uint32_t i = 0; i < l; ++i) z += table.distortion(i + 1, j, l, m) * table.prob(s[i], t[j]);
      ll += std::log(z);
    }
  }
  return ll;
}

// ---------------------------------------------------------------------------
// Alignment

namespace {

std::vector<std::pair<std::size_t, std::size_t>> viterbi(const LexicalTable& table, const TokenSequence& src,
                                                         const TokenSequence& tgt) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const auto l = static_cast<std::uint32_t>(src.size());
  const auto m = static_cast<std::uint32_t>(tgt.size());
  std::vector<std::optional<LexicalTable::WordId>> src_ids;
  for (const auto& w : src.tokens) src_ids.push_back(table.source_id(w));

  for (std::uint32_t j = 0; j < m; ++j) {
    const auto f = table.target_id(tgt[j]);
    if (!f) continue;
    double best = 0.0;
    std::optional<std::size_t> best_i;
    for (std::uint32_t i = 0; i < l; ++i) {
      if (!src_ids[i]) continue;
      const double p = table.distortion(i + 1, j, l, m) * table.prob(*src_ids[i], *f);
      if (p > best) {
        best = p;
        best_i = i;
      }
    }
    const double null_p = table.distortion(0, j, l, m) * table.prob(LexicalTable::kNull, *f);
    if (best_i && !(null_p > best)) out.emplace_back(*best_i, j);
  }
  return out;
}

}  // namespace

AlignmentSet grow_diag_final(const AlignmentSet& forward, const AlignmentSet& reverse, const TokenSequence& src,
                             const TokenSequence& tgt) {
  const std::size_t n = src.size();
  const std::size_t m = tgt.size();
  std::vector<char> fwd(n * m, 0), rev(n * m, 0), cur(n * m, 0);
  for (const auto& l : forward.links()) fwd[l.src_idx * m + l.tgt_idx] = 1;
  for (const auto& l : reverse.links()) rev[l.src_idx * m + l.tgt_idx] = 1;

  std::vector<char> src_aligned(n, 0), tgt_aligned(m, 0);
  auto add = [&](std::size_t i, std::size_t j) {
    cur[i * m + j] = 1;
    src_aligned[i] = 1;
    tgt_aligned[j] = 1;
  };
  for (std::size_t k = 0; k < n * m; ++k)
    if (fwd[k] && rev[k]) add(k / m, k % m);

  constexpr int kNeighbors[8][2] = {{-1, 0}, {0, -1}, {1, 0}, {0, 1}, {-1, -1}, {-1, 1}, {1, -1}, {1, 1}};
  bool added = true;
  while (added) {
    added = false;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        if (!cur[i * m + j]) continue;
        for (const auto& d : kNeighbors) {
          const auto ni = static_cast<std::ptrdiff_t>(i) + d[0];
          const auto nj = static_cast<std::ptrdiff_t>(j) + d[1];
          if (ni < 0 || nj < 0 || ni >= static_cast<std::ptrdiff_t>(n) || nj >= static_cast<std::ptrdiff_t>(m))
            continue;
          const auto ui = static_cast<std::size_t>(ni);
          const auto uj = static_cast<std::size_t>(nj);
          const auto k = ui * m + uj;
          if (cur[k] || !(fwd[k] || rev[k])) continue;
          if (!src_aligned[ui] || !tgt_aligned[uj]) {
            add(ui, uj);
            added = true;
          }
        }
      }
    }
  }
  for (const auto* directional : {&fwd, &rev}) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j)
        if ((*directional)[i * m + j] && !cur[i * m + j] && (!src_aligned[i] || !tgt_aligned[j])) add(i, j);
  }

  AlignmentSet out(n, m);
  for (std::size_t k = 0; k < n * m; ++k)
    if (cur[k]) out.insert({k / m, k % m, src[k / m], tgt[k % m]});
  return out;
}

AlignmentSet align(const TranslationTable& table, const TokenSequence& src, const TokenSequence& tgt,
                   AlignMode mode, AlignStats* stats) {
  if (stats) {
    for (const auto& w : src.tokens)
      if (!table.forward.source_id(w)) ++stats->oov_tokens;
    for (const auto& w : tgt.tokens)
      if (!table.forward.target_id(w)) ++stats->oov_tokens;
  }
  const auto fwd_pairs = viterbi(table.forward, src, tgt);
  const AlignmentSet forward = AlignmentSet::from_pairs(fwd_pairs, src, tgt);
  if (mode == AlignMode::kArgmax) return forward;

  if (!table.reverse) throw InvalidArgument("grow-diag alignment needs a reverse-direction table");
  auto rev_pairs = viterbi(*table.reverse, tgt, src);
  for (auto& [a, b] : rev_pairs) std::swap(a, b);
  const AlignmentSet reverse = AlignmentSet::from_pairs(rev_pairs, src, tgt);
  return grow_diag_final(forward, reverse, src, tgt);
}

// ---------------------------------------------------------------------------
// Table persistence
//
// Layout (little endian): 8-byte magic, 1 version byte, 1 flag byte telling
// whether a reverse table follows, then each lexical table as
//   u8 model | u64 n_src, strings | u64 n_tgt, strings | u64 n_offsets, u64[]
//   | u64 nnz, u32 cols[], f64 probs[] | u64 n_dist, (u32 j, u32 l, u32 m,
//   u64 n, f64[n])*
// Strings are u32 length followed by raw bytes.

namespace {

constexpr char kMagic[8] = {'T', 'R', 'M', 'T', 'A', 'B', 'L', 'E'};
constexpr std::uint8_t kVersion = 1;

void put_u64(std::ostream& out, std::uint64_t v) {
  char buf[8];
  for (int k = 0; k < 8; ++k) buf[k] = static_cast<char>((v >> (8 * k)) & 0xff);
  out.write(buf, 8);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char buf[4];
  for (int k = 0; k < 4; ++k) buf[k] = static_cast<char>((v >> (8 * k)) & 0xff);
  out.write(buf, 4);
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void read_exact(std::istream& in, char* buf, std::size_t n) {
  in.read(buf, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw FormatError("table file truncated");
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char buf[8];
  read_exact(in, reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int k = 7; k >= 0; --k) v = (v << 8) | buf[k];
  return v;
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char buf[4];
  read_exact(in, reinterpret_cast<char*>(buf), 4);
  std::uint32_t v = 0;
  for (int k = 3; k >= 0; --k) v = (v << 8) | buf[k];
  return v;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

// Counts come from untrusted files; reject values no real table would use.
std::uint64_t get_count(std::istream& in) {
  const auto n = get_u64(in);
  if (n > (std::uint64_t{1} << 34)) throw FormatError("table file corrupt: implausible element count");
  return n;
}

std::string get_string(std::istream& in) {
  const auto n = get_u32(in);
  if (n > (1u << 24)) throw FormatError("table file corrupt: implausible string length");
  std::string s(n, '\0');
  read_exact(in, s.data(), n);
  return s;
}

}  // namespace

void write_lexical(std::ostream& out, const LexicalTable& t) {
  out.put(static_cast<char>(t.model_));
  put_u64(out, t.source_words_.size());
  for (const auto& w : t.source_words_) put_string(out, w);
  put_u64(out, t.target_words_.size());
  for (const auto& w : t.target_words_) put_string(out, w);
  put_u64(out, t.row_offsets_.size());
  for (auto v : t.row_offsets_) put_u64(out, v);
  put_u64(out, t.columns_.size());
  for (auto c : t.columns_) put_u32(out, c);
  for (auto p : t.probs_) put_f64(out, p);
  put_u64(out, t.distortion_.size());
  for (const auto& [key, values] : t.distortion_) {
    put_u32(out, std::get<0>(key));
    put_u32(out, std::get<1>(key));
    put_u32(out, std::get<2>(key));
    put_u64(out, values.size());
    for (double v : values) put_f64(out, v);
  }
}

LexicalTable read_lexical(std::istream& in) {
  LexicalTable t;
  char model = 0;
  read_exact(in, &model, 1);
  if (model != 1 && model != 2) throw FormatError("table file corrupt: unknown model tag");
  t.model_ = static_cast<AlignmentModel>(model);
  t.source_words_.resize(get_count(in));
  for (auto& w : t.source_words_) w = get_string(in);
  t.target_words_.resize(get_count(in));
  for (auto& w : t.target_words_) w = get_string(in);
  t.row_offsets_.resize(get_count(in));
  for (auto& v : t.row_offsets_) v = get_u64(in);
  t.columns_.resize(get_count(in));
  for (auto& c : t.columns_) c = get_u32(in);
  t.probs_.resize(t.columns_.size());
  for (auto& p : t.probs_) p = get_f64(in);
  const auto n_dist = get_count(in);
  for (std::uint64_t k = 0; k < n_dist; ++k) {
    const auto j = get_u32(in);
    const auto l = get_u32(in);
    const auto m = get_u32(in);
    std::vector<double> values(get_count(in));
    for (auto& v : values) v = get_f64(in);
    t.distortion_.emplace(LexicalTable::DistortionKey{j, l, m}, std::move(values));
  }
  if (t.source_words_.empty() || t.row_offsets_.size() != t.source_words_.size() + 1 ||
      t.row_offsets_.back() != t.columns_.size())
    throw FormatError("table file corrupt: inconsistent row layout");
  for (std::size_t r = 0; r + 1 < t.row_offsets_.size(); ++r)
    if (t.row_offsets_[r] > t.row_offsets_[r + 1]) throw FormatError("table file corrupt: row offsets decrease");
  for (auto c : t.columns_)
    if (c >= t.target_words_.size()) throw FormatError("table file corrupt: column out of range");
  t.rebuild_index();
  return t;
}

void write_table(std::ostream& out, const TranslationTable& table) {
  out.write(kMagic, sizeof kMagic);
  out.put(static_cast<char>(kVersion));
  out.put(table.reverse ? 1 : 0);
  write_lexical(out, table.forward);
  if (table.reverse) write_lexical(out, *table.reverse);
}

TranslationTable read_table(std::istream& in) {
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() == 0) throw FormatError("table file is empty");
  if (in.gcount() != 8 || !std::equal(magic, magic + 8, kMagic)) throw FormatError("not a translation table file");
  char version = 0;
  read_exact(in, &version, 1);
  if (static_cast<std::uint8_t>(version) != kVersion)
    throw VersionError("unsupported table file version " + std::to_string(static_cast<unsigned char>(version)) +
                       " (expected " + std::to_string(kVersion) + ")");
  char has_reverse = 0;
  read_exact(in, &has_reverse, 1);
  TranslationTable table;
  table.forward = read_lexical(in);
  if (has_reverse) table.reverse = read_lexical(in);
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("table file has trailing bytes");
  return table;
}

void save_table(const TranslationTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_table(out, table);
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

TranslationTable load_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_table(in);
}

// ---------------------------------------------------------------------------
// Corpus readers

namespace {

TokenSequence side_from_json(const nlohmann::json& obj, const char* text_key, const char* tokens_key,
                             std::string_view lang) {
  if (auto it = obj.find(tokens_key); it != obj.end())
    return from_pretokenized(it->get<std::vector<std::string>>(), lang);
  if (auto it = obj.find(text_key); it != obj.end()) return tokenize(it->get<std::string>(), lang);
  throw FormatError(std::string("record has neither '") + text_key + "' nor '" + tokens_key + "'");
}

}  // namespace

ParallelCorpus read_parallel_corpus(const std::filesystem::path& path, std::string_view src_lang,
                                    std::string_view tgt_lang) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus " + path.string());
  const bool jsonl = path.extension() == ".jsonl" || path.extension() == ".json";
  ParallelCorpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) continue;
    try {
      if (jsonl) {
        const auto obj = nlohmann::json::parse(line);
        corpus.emplace_back(side_from_json(obj, "src", "src_tokens", src_lang),
                            side_from_json(obj, "tgt", "tgt_tokens", tgt_lang));
      } else {
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw FormatError("missing TAB separator");
        corpus.emplace_back(tokenize(std::string_view(line).substr(0, tab), src_lang),
                            tokenize(std::string_view(line).substr(tab + 1), tgt_lang));
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return corpus;
}

}  // namespace termreward
