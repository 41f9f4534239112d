#include "termreward/reward.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

#include "termreward/error.hpp"
#include "termreward/metrics.hpp"

namespace termreward {

// ---------------------------------------------------------------------------
// Format gate

namespace {

std::vector<std::size_t> occurrences(std::string_view text, std::string_view needle) {
  std::vector<std::size_t> out;
  for (auto pos = text.find(needle); pos != std::string_view::npos; pos = text.find(needle, pos + 1))
    out.push_back(pos);
  return out;
}

}  // namespace

ParsedOutput parse_output(std::string_view raw, FormatMode mode) {
  ParsedOutput out;
  out.raw = std::string(raw);

  constexpr std::string_view kOpenThink = "<think>";
  constexpr std::string_view kCloseThink = "</think>";
  constexpr std::string_view kOpenAnswer = "<answer>";
  constexpr std::string_view kCloseAnswer = "</answer>";

  const auto ot = occurrences(raw, kOpenThink);
  const auto ct = occurrences(raw, kCloseThink);
  const auto oa = occurrences(raw, kOpenAnswer);
  const auto ca = occurrences(raw, kCloseAnswer);
  if (ot.size() != 1 || ct.size() != 1 || oa.size() != 1 || ca.size() != 1) return out;

  const std::size_t think_begin = ot[0] + kOpenThink.size();
  const std::size_t answer_begin = oa[0] + kOpenAnswer.size();
  if (!(think_begin <= ct[0] && ct[0] + kCloseThink.size() <= oa[0] && answer_begin <= ca[0])) return out;

  const auto before = raw.substr(0, ot[0]);
  const auto between = raw.substr(ct[0] + kCloseThink.size(), oa[0] - ct[0] - kCloseThink.size());
  const auto after = raw.substr(ca[0] + kCloseAnswer.size());
  if (!is_blank(between)) return out;
  if (mode == FormatMode::kStrict && (!is_blank(before) || !is_blank(after))) return out;

  out.think = std::string(trim(raw.substr(think_begin, ct[0] - think_begin)));
  out.answer = std::string(trim(raw.substr(answer_begin, ca[0] - answer_begin)));
  out.format_ok = true;
  return out;
}

// ---------------------------------------------------------------------------
// Alignment rewards

double reward_aaw(const KeyAlignmentSet& reference, const KeyAlignmentSet& predicted, std::size_t src_len,
                  std::size_t pred_len, const MatchPolicy& match, std::size_t* matched) {
  if (src_len == 0) throw InvalidArgument("reward_aaw: source length must be >= 1");
  if (pred_len == 0 && !predicted.empty())
    throw InvalidArgument("reward_aaw: prediction is empty but has key alignments");

  // Predicted links are already ordered by (src_idx, tgt_idx), which is the
  // ascending-k scan order within each source index.
  const auto& pre = predicted.links();
  std::vector<std::string> pre_words;
  pre_words.reserve(pre.size());
  for (const auto& link : pre) pre_words.push_back(match.normalize(link.tgt_word));
  std::vector<char> used(pre.size(), 0);

  std::size_t count = 0;
  for (const auto& ref : reference.links()) {
    const std::string ref_word = match.normalize(ref.tgt_word);
    for (std::size_t k = 0; k < pre.size(); ++k) {
      if (used[k] || pre[k].src_idx != ref.src_idx || pre_words[k] != ref_word) continue;
      if (match.intersection == IntersectionMode::kExactPair && pre[k].tgt_idx != ref.tgt_idx) continue;
      used[k] = 1;
      ++count;
      break;
    }
  }
  if (matched) *matched = count;
  return static_cast<double>(count) / static_cast<double>(src_len + pred_len);
}

std::vector<std::string> key_word_order(const KeyAlignmentSet& keys, const MatchPolicy& match) {
  std::vector<const AlignmentLink*> links;
  for (const auto& link : keys.links()) links.push_back(&link);
  std::stable_sort(links.begin(), links.end(), [](const AlignmentLink* a, const AlignmentLink* b) {
    return std::pair(a->tgt_idx, a->src_idx) < std::pair(b->tgt_idx, b->src_idx);
  });
  std::vector<std::string> words;
  std::optional<std::size_t> last;
  for (const auto* link : links) {
    if (last && *last == link->tgt_idx) continue;
    last = link->tgt_idx;
    words.push_back(match.normalize(link->tgt_word));
  }
  return words;
}

std::vector<std::pair<std::string, std::string>> order_pairs(std::span<const std::string> sequence) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t a = 0; a < sequence.size(); ++a)
    for (std::size_t b = a + 1; b < sequence.size(); ++b) out.emplace_back(sequence[a], sequence[b]);
  return out;
}

double reward_aao(const KeyAlignmentSet& reference, const KeyAlignmentSet& predicted, const MatchPolicy& match,
                  double empty_value, OrderCounts* counts) {
  const auto ref_words = key_word_order(reference, match);
  const auto pre_words = key_word_order(predicted, match);
  std::map<std::pair<std::string, std::string>, std::size_t> ref_pairs;
  std::map<std::pair<std::string, std::string>, std::size_t> pre_pairs;
  std::size_t total = 0;
  for (auto& p : order_pairs(ref_words)) {
    ++ref_pairs[std::move(p)];
    ++total;
  }
  for (auto& p : order_pairs(pre_words)) ++pre_pairs[std::move(p)];

  std::size_t hit = 0;
  for (const auto& [pair, n] : ref_pairs) {
    auto it = pre_pairs.find(pair);
    if (it != pre_pairs.end()) hit += std::min(n, it->second);
  }
  if (counts) *counts = {total, hit};
  if (total == 0) return empty_value;
  return static_cast<double>(hit) / static_cast<double>(total);
}

namespace {

bool contains_run(const std::vector<std::string>& haystack, const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > haystack.size()) return false;
  return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) != haystack.end();
}

std::vector<std::string> normalized_tokens(std::string_view text, std::string_view lang, const MatchPolicy& match) {
  auto seq = tokenize(text, lang);
  for (auto& t : seq.tokens) t = match.normalize(t);
  return std::move(seq.tokens);
}

}  // namespace

double reward_taw(const KeyAlignmentSet& reference, std::string_view think, std::string_view src_lang,
                  std::string_view tgt_lang, const MatchPolicy& match, ThinkMatch mode, std::size_t* hits) {
  if (hits) *hits = 0;
  if (reference.empty()) return 0.0;

  std::size_t count = 0;
  if (mode == ThinkMatch::kSubstring) {
    const std::string text = match.normalize(think);
    for (const auto& link : reference.links()) {
      const std::string s = match.normalize(link.src_word);
      const std::string t = match.normalize(link.tgt_word);
      if (!s.empty() && !t.empty() && text.find(s) != std::string::npos && text.find(t) != std::string::npos)
        ++count;
    }
  } else {
    const auto think_src = normalized_tokens(think, src_lang, match);
    const auto think_tgt = normalized_tokens(think, tgt_lang, match);
    auto present = [&](std::string_view word, std::string_view lang) {
      const auto pieces = normalized_tokens(word, lang, match);
      return contains_run(think_src, pieces) || contains_run(think_tgt, pieces);
    };
    for (const auto& link : reference.links())
      if (present(link.src_word, src_lang) && present(link.tgt_word, tgt_lang)) ++count;
  }
  if (hits) *hits = count;
  return static_cast<double>(count) / static_cast<double>(reference.size());
}

double reward_bleu(const TokenSequence& answer, const TokenSequence& reference) {
  return sentence_bleu(answer, reference);
}

double round_comet(double score) {
  if (!std::isfinite(score)) throw InvalidArgument("semantic score must be finite");
  return std::round(score * 100.0) / 100.0;
}

// ---------------------------------------------------------------------------
// Weights, recipes, combination

void RewardWeights::validate() const {
  for (double w : {alpha, beta, gamma, bleu_weight})
    if (!std::isfinite(w) || w < 0.0) throw InvalidArgument("reward weights must be finite and >= 0");
}

namespace {

constexpr std::array<std::string_view, 5> kRecipeNames = {"comet", "comet+bleu", "comet+aaw", "comet+aaw+aao",
                                                          "all"};

}  // namespace

std::string_view recipe_name(Recipe recipe) { return kRecipeNames[static_cast<std::size_t>(recipe)]; }

std::optional<Recipe> parse_recipe(std::string_view name) {
  for (std::size_t i = 0; i < kRecipeNames.size(); ++i)
    if (kRecipeNames[i] == name) return static_cast<Recipe>(i);
  return std::nullopt;
}

std::span<const std::string_view> recipe_names() { return kRecipeNames; }

bool recipe_uses_alignment(Recipe recipe) {
  return recipe == Recipe::kCometAaw || recipe == Recipe::kCometAawAao || recipe == Recipe::kAll;
}

bool recipe_uses_think(Recipe recipe) { return recipe == Recipe::kAll; }

bool recipe_uses_bleu(Recipe recipe) { return recipe == Recipe::kCometBleu; }

RewardWeights recipe_weights(Recipe recipe, const RewardWeights& weights) {
  RewardWeights w = weights;
  if (!recipe_uses_alignment(recipe)) w.alpha = 0.0;
  if (recipe != Recipe::kCometAawAao && recipe != Recipe::kAll) w.beta = 0.0;
  if (!recipe_uses_think(recipe)) w.gamma = 0.0;
  if (!recipe_uses_bleu(recipe)) w.bleu_weight = 0.0;
  return w;
}

RewardBreakdown combine(const ParsedOutput& parsed, const RewardComponents& components, const RewardWeights& weights,
                        RewardDiagnostics diagnostics) {
  weights.validate();
  for (double v : {components.comet, components.aaw, components.aao, components.taw})
    if (!std::isfinite(v)) throw InvalidArgument("reward components must be finite");
  if (components.bleu && !std::isfinite(*components.bleu)) throw InvalidArgument("reward components must be finite");

  RewardBreakdown out;
  out.weights = weights;
  out.r_format = parsed.format_ok ? 1 : 0;
  out.r_comet = round_comet(components.comet);
  out.r_aaw = components.aaw;
  out.r_aao = components.aao;
  out.r_taw = components.taw;
  out.r_bleu = components.bleu;
  diagnostics.comet_raw = components.comet;
  out.diagnostics = diagnostics;

  if (out.r_format == 0) {
    out.r_all = 0.0;
    return out;
  }
  double total = out.r_comet + weights.alpha * out.r_aaw + weights.beta * out.r_aao + weights.gamma * out.r_taw;
  if (out.r_bleu) total += weights.bleu_weight * *out.r_bleu;
  out.r_all = total;
  return out;
}

}  // namespace termreward
