#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>

#include "termreward/align.hpp"

namespace termreward {

/// Set of source-side surface forms that mark a link as key information.
///
/// Multi-word entries are stored as their whitespace-separated constituents,
/// since links are token level.
class KeywordLexicon {
 public:
  KeywordLexicon() = default;

  /// Entries may carry a tag after a TAB ("cat\tnoun").
  static KeywordLexicon from_entries(std::span<const std::string> entries, bool case_fold,
                                     std::string source = "builtin");

  bool matches(std::string_view token) const;
  std::optional<std::string> tag(std::string_view token) const;

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  bool case_fold() const noexcept { return case_fold_; }
  const std::string& source() const noexcept { return source_; }

 private:
  std::string key(std::string_view token) const;

  std::unordered_map<std::string, std::string> entries_;
  bool case_fold_ = false;
  std::string source_ = "builtin";
};

struct LexiconOptions {
  bool case_fold = false;
};

/// One entry per line, optional `<TAB>tag`; blank lines and `#` comments are
/// skipped. Throws IoError when unreadable and FormatError with zero entries.
KeywordLexicon load_lexicon(const std::filesystem::path& path, LexiconOptions options = {});

struct KeyAlignmentSet {
  AlignmentSet alignments;
  std::string lexicon_source;
  /// The lexicon had no entries, so nothing could survive the filter.
  bool empty_lexicon = false;

  const std::vector<AlignmentLink>& links() const noexcept { return alignments.links(); }
  std::size_t size() const noexcept { return alignments.size(); }
  bool empty() const noexcept { return alignments.empty(); }
};

KeyAlignmentSet filter_key(const AlignmentSet& alignments, const KeywordLexicon& lexicon);

/// Wraps an already-selected set, e.g. when an upstream tagger produced it.
KeyAlignmentSet as_key_set(AlignmentSet alignments, std::string source);

}  // namespace termreward
