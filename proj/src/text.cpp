#include "termreward/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <shared_mutex>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/uscript.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <mutex>

#include "termreward/error.hpp"

namespace termreward {
namespace {

struct Codepoint {
  UChar32 value;
  std::size_t begin;
  std::size_t end;
};

std::vector<Codepoint> decode(std::string_view text) {
  std::vector<Codepoint> out;
  out.reserve(text.size());
  const auto* bytes = reinterpret_cast<const uint8_t*>(text.data());
  const auto length = static_cast<int32_t>(text.size());
  int32_t i = 0;
  while (i < length) {
    const int32_t begin = i;
    UChar32 c;
    U8_NEXT(bytes, i, length, c);
    out.push_back({c, static_cast<std::size_t>(begin), static_cast<std::size_t>(i)});
  }
  return out;
}

bool is_space(UChar32 c) { return c >= 0 && u_isUWhiteSpace(c); }
bool is_punct(UChar32 c) { return c >= 0 && u_ispunct(c); }

bool is_word_char(UChar32 c) { return u_isalnum(c) || (U_GET_GC_MASK(c) & U_GC_M_MASK) != 0; }

bool is_unspaced_script(UChar32 c) {
  if (c < 0) return false;
  UErrorCode status = U_ZERO_ERROR;
  switch (uscript_getScript(c, &status)) {
    case USCRIPT_HAN:
    case USCRIPT_HIRAGANA:
    case USCRIPT_KATAKANA:
    case USCRIPT_THAI:
    case USCRIPT_LAO:
    case USCRIPT_KHMER:
    case USCRIPT_MYANMAR:
      return true;
    default:
      return false;
  }
}

// Languages written with spaces between words; anything else without a hook
// is segmented per codepoint when its text carries no whitespace.
constexpr std::array<std::string_view, 40> kSpacedLanguages = {
    "af", "ar", "bg", "ca", "cs", "cy", "da", "de", "el", "en", "es", "et", "eu", "fa",
    "fi", "fr", "ga", "gl", "he", "hi", "hr", "hu", "id", "is", "it", "ko", "lt", "lv",
    "ms", "nl", "no", "pl", "pt", "ro", "ru", "sk", "sl", "sv", "tr", "uk"};

bool is_spaced_language(std::string_view primary) {
  return std::find(kSpacedLanguages.begin(), kSpacedLanguages.end(), primary) !=
         kSpacedLanguages.end();
}

class SegmenterRegistry {
 public:
  static SegmenterRegistry& instance() {
    static SegmenterRegistry registry;
    return registry;
  }

  void add(std::string lang, Segmenter segmenter) {
    std::unique_lock lock(mutex_);
    if (!hooks_.emplace(std::move(lang), std::move(segmenter)).second)
      throw InvalidArgument("segmenter already registered for this language");
  }

  const Segmenter* find(const std::string& lang) const {
    std::shared_lock lock(mutex_);
    auto it = hooks_.find(lang);
    return it == hooks_.end() ? nullptr : &it->second;
  }

 private:
  SegmenterRegistry() {
    hooks_.emplace("zh", script_run_segment);
    hooks_.emplace("ja", script_run_segment);
    hooks_.emplace("th", script_run_segment);
  }

  mutable std::shared_mutex mutex_;
  std::map<std::string, Segmenter, std::less<>> hooks_;
};

std::vector<std::string> codepoint_segment(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& cp : decode(text)) {
    if (is_space(cp.value)) continue;
    out.emplace_back(text.substr(cp.begin, cp.end - cp.begin));
  }
  return out;
}

}  // namespace

std::string nfc(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* normalizer = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error("ICU NFC normalizer unavailable");
  auto source = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  if (normalizer->isNormalized(source, status) && U_SUCCESS(status)) return std::string(text);
  status = U_ZERO_ERROR;
  icu::UnicodeString normalized = normalizer->normalize(source, status);
  if (U_FAILURE(status)) throw InvalidArgument("text could not be NFC-normalized");
  std::string out;
  normalized.toUTF8String(out);
  return out;
}

std::string fold_case(std::string_view text) {
  const bool ascii = std::all_of(text.begin(), text.end(),
                                 [](char c) { return static_cast<unsigned char>(c) < 0x80; });
  if (ascii) {
    std::string out(text);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
  }
  auto source = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  source.foldCase();
  std::string out;
  source.toUTF8String(out);
  return out;
}

bool is_blank(std::string_view text) {
  for (const auto& cp : decode(text))
    if (!is_space(cp.value)) return false;
  return true;
}

std::string_view trim(std::string_view text) {
  const auto cps = decode(text);
  std::size_t lo = 0;
  std::size_t hi = cps.size();
  while (lo < hi && is_space(cps[lo].value)) ++lo;
  while (hi > lo && is_space(cps[hi - 1].value)) --hi;
  if (lo == hi) return {};
  return text.substr(cps[lo].begin, cps[hi - 1].end - cps[lo].begin);
}

bool is_punctuation(std::string_view text) {
  const auto cps = decode(text);
  return !cps.empty() && std::all_of(cps.begin(), cps.end(), [](const Codepoint& cp) { return is_punct(cp.value); });
}

std::vector<std::string> whitespace_punct_segment(std::string_view text) {
  std::vector<std::string> out;
  const auto cps = decode(text);
  std::size_t i = 0;
  while (i < cps.size()) {
    if (is_space(cps[i].value)) {
      ++i;
      continue;
    }
    std::size_t end = i;
    while (end < cps.size() && !is_space(cps[end].value)) ++end;

    std::size_t lo = i;
    std::size_t hi = end;
    while (lo < hi && is_punct(cps[lo].value)) ++lo;
    while (hi > lo && is_punct(cps[hi - 1].value)) --hi;

    for (std::size_t k = i; k < lo; ++k)
      out.emplace_back(text.substr(cps[k].begin, cps[k].end - cps[k].begin));
    if (lo < hi) out.emplace_back(text.substr(cps[lo].begin, cps[hi - 1].end - cps[lo].begin));
    for (std::size_t k = hi; k < end; ++k)
      out.emplace_back(text.substr(cps[k].begin, cps[k].end - cps[k].begin));
    i = end;
  }
  return out;
}

std::vector<std::string> script_run_segment(std::string_view text) {
  std::vector<std::string> out;
  const auto cps = decode(text);
  std::size_t run_begin = 0;
  bool in_run = false;
  auto flush = [&](std::size_t run_end) {
    if (in_run) out.emplace_back(text.substr(run_begin, run_end - run_begin));
    in_run = false;
  };
  for (const auto& cp : cps) {
    if (is_space(cp.value)) {
      flush(cp.begin);
    } else if (!is_word_char(cp.value) || is_unspaced_script(cp.value)) {
      flush(cp.begin);
      out.emplace_back(text.substr(cp.begin, cp.end - cp.begin));
    } else if (!in_run) {
      in_run = true;
      run_begin = cp.begin;
    }
  }
  flush(text.size());
  return out;
}

void register_segmenter(std::string_view lang, Segmenter segmenter) {
  if (!segmenter) throw InvalidArgument("segmenter must be callable");
  SegmenterRegistry::instance().add(primary_language(lang), std::move(segmenter));
}

bool has_segmenter(std::string_view lang) {
  return SegmenterRegistry::instance().find(primary_language(lang)) != nullptr;
}

std::string primary_language(std::string_view lang) {
  std::string out;
  for (char c : lang) {
    if (c == '-' || c == '_') break;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

TokenSequence tokenize(std::string_view text, std::string_view lang) {
  TokenSequence seq;
  seq.lang = std::string(lang);
  const std::string normalized = nfc(text);
  const std::string primary = primary_language(lang);

  if (const Segmenter* hook = SegmenterRegistry::instance().find(primary)) {
    for (auto& token : (*hook)(normalized))
      if (!token.empty()) seq.tokens.push_back(std::move(token));
    return seq;
  }

  // Only interior whitespace counts, so that re-joining the per-codepoint
  // output gives the same tokens again.
  const auto cps = decode(trim(normalized));
  const bool has_space = std::any_of(cps.begin(), cps.end(),
                                     [](const Codepoint& cp) { return is_space(cp.value); });
  if (!is_spaced_language(primary) && !has_space && !cps.empty()) {
    seq.tokens = codepoint_segment(normalized);
    seq.fallback_segmentation = true;
    return seq;
  }
  seq.tokens = whitespace_punct_segment(normalized);
  return seq;
}

TokenSequence from_pretokenized(std::vector<std::string> tokens, std::string_view lang) {
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i].empty())
      throw InvalidArgument("empty token at index " + std::to_string(i));
  TokenSequence seq;
  seq.tokens = std::move(tokens);
  seq.lang = std::string(lang);
  seq.pretokenized = true;
  return seq;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

}  // namespace termreward
