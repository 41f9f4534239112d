#include "termreward/keys.hpp"

#include <fstream>

#include "termreward/error.hpp"
#include "termreward/text.hpp"

namespace termreward {

std::string KeywordLexicon::key(std::string_view token) const {
  return case_fold_ ? fold_case(nfc(token)) : std::string(token);
}

KeywordLexicon KeywordLexicon::from_entries(std::span<const std::string> entries, bool case_fold,
                                            std::string source) {
  KeywordLexicon lex;
  lex.case_fold_ = case_fold;
  lex.source_ = std::move(source);
  for (const auto& raw : entries) {
    std::string_view entry = raw;
    std::string tag;
    if (auto tab = entry.find('\t'); tab != std::string_view::npos) {
      tag = std::string(entry.substr(tab + 1));
      entry = entry.substr(0, tab);
    }
    for (const auto& part : whitespace_punct_segment(nfc(entry)))
      if (!is_punctuation(part)) lex.entries_.try_emplace(lex.key(part), tag);
  }
  return lex;
}

bool KeywordLexicon::matches(std::string_view token) const { return entries_.contains(key(token)); }

std::optional<std::string> KeywordLexicon::tag(std::string_view token) const {
  auto it = entries_.find(key(token));
  if (it == entries_.end() || it->second.empty()) return std::nullopt;
  return it->second;
}

KeywordLexicon load_lexicon(const std::filesystem::path& path, LexiconOptions options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read lexicon " + path.string());
  std::vector<std::string> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) continue;
    const auto first = line.find_first_not_of(" \t");
    if (line[first] == '#') continue;
    entries.push_back(line);
  }
  auto lex = KeywordLexicon::from_entries(entries, options.case_fold, path.string());
  if (lex.empty()) throw FormatError("lexicon " + path.string() + " has zero entries");
  return lex;
}

KeyAlignmentSet filter_key(const AlignmentSet& alignments, const KeywordLexicon& lexicon) {
  KeyAlignmentSet out{AlignmentSet(alignments.src_len(), alignments.tgt_len()), lexicon.source(), lexicon.empty()};
  for (const auto& link : alignments.links())
    if (lexicon.matches(link.src_word)) out.alignments.insert(link);
  return out;
}

KeyAlignmentSet as_key_set(AlignmentSet alignments, std::string source) {
  return {std::move(alignments), std::move(source), false};
}

}  // namespace termreward
