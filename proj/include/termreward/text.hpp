#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace termreward {

/// Tokenized text with its language tag.
///
/// Token strings are NFC-normalized UTF-8 when produced by tokenize(); tokens
/// ingested through from_pretokenized() are stored verbatim.
struct TokenSequence {
  std::vector<std::string> tokens;
  std::string lang;
  bool pretokenized = false;
  /// Set when no segmenter was known for `lang` and the text had no
  /// whitespace, so the text was split into single codepoints.
  bool fallback_segmentation = false;

  std::size_t size() const noexcept { return tokens.size(); }
  bool empty() const noexcept { return tokens.empty(); }
  const std::string& operator[](std::size_t i) const { return tokens[i]; }

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

/// A segmenter receives NFC-normalized text and returns non-empty tokens.
using Segmenter = std::function<std::vector<std::string>(std::string_view)>;

/// Registers a segmenter for a primary language subtag ("zh", "ja", ...).
/// Meant to be called at startup; registering the same language twice throws.
void register_segmenter(std::string_view lang, Segmenter segmenter);

/// True when a segmenter hook (builtin or user supplied) exists for `lang`.
bool has_segmenter(std::string_view lang);

/// Primary subtag of a BCP-47-ish code, lower-cased: "zh-Hans_CN" -> "zh".
std::string primary_language(std::string_view lang);

TokenSequence tokenize(std::string_view text, std::string_view lang);

/// Throws InvalidArgument naming the index of the first empty token.
TokenSequence from_pretokenized(std::vector<std::string> tokens, std::string_view lang);

std::string join_tokens(std::span<const std::string> tokens);

// Unicode helpers shared by the other modules.

std::string nfc(std::string_view text);
std::string fold_case(std::string_view text);
bool is_blank(std::string_view text);
/// Strips Unicode whitespace from both ends.
std::string_view trim(std::string_view text);
/// True for non-empty text made only of punctuation codepoints.
bool is_punctuation(std::string_view text);

/// Whitespace split followed by detaching leading and trailing punctuation.
std::vector<std::string> whitespace_punct_segment(std::string_view text);

/// Han, kana and other unspaced-script codepoints become single tokens;
/// contiguous runs of other letters and digits stay together.
std::vector<std::string> script_run_segment(std::string_view text);

}  // namespace termreward
