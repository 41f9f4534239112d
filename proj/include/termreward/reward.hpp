#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "termreward/keys.hpp"
#include "termreward/match.hpp"
#include "termreward/text.hpp"

namespace termreward {

/// Model output split along the <think>/<answer> template.
struct ParsedOutput {
  std::string raw;
  std::string think;
  std::string answer;
  bool format_ok = false;
};

enum class FormatMode {
  /// Only whitespace may surround the two spans.
  kStrict,
  /// Arbitrary text may precede <think> or follow </answer>.
  kLenient,
};

/// Exactly one <think>...</think> followed by exactly one <answer>...</answer>,
/// tags matched case-sensitively. Span contents are trimmed. A failed parse
/// leaves think and answer empty.
ParsedOutput parse_output(std::string_view raw, FormatMode mode = FormatMode::kStrict);

/// Key-word overlap between reference and prediction, normalized by N + K.
///
/// Each reference link consumes at most one predicted link, scanning
/// predicted links by ascending target index. Throws InvalidArgument when
/// src_len is zero or when pred_len is zero but `predicted` has links.
double reward_aaw(const KeyAlignmentSet& reference, const KeyAlignmentSet& predicted, std::size_t src_len,
                  std::size_t pred_len, const MatchPolicy& match = {}, std::size_t* matched = nullptr);

/// Target-side key-word sequence: links ordered by target position, one word
/// per target token, normalized by the policy.
std::vector<std::string> key_word_order(const KeyAlignmentSet& keys, const MatchPolicy& match = {});

/// All ordered pairs (x_a, x_b) with a < b: OD([a,b,c]) = {ab, ac, bc}.
std::vector<std::pair<std::string, std::string>> order_pairs(std::span<const std::string> sequence);

struct OrderCounts {
  std::size_t reference_pairs = 0;
  std::size_t matched_pairs = 0;
};

/// Fraction of reference key-word order pairs that the prediction keeps.
/// Pairs are compared as multisets. Returns `empty_value` when the reference
/// has fewer than two key words.
double reward_aao(const KeyAlignmentSet& reference, const KeyAlignmentSet& predicted, const MatchPolicy& match = {},
                  double empty_value = 1.0, OrderCounts* counts = nullptr);

enum class ThinkMatch {
  /// A word is present when its tokens occur contiguously in the tokenized
  /// think text.
  kTokens,
  /// Raw substring search over the NFC think text.
  kSubstring,
};

/// Fraction of reference key links whose source and target words both
/// appear in the think span. The think text is tokenized with both
/// languages' segmenters. Returns 0 for an empty reference key set.
double reward_taw(const KeyAlignmentSet& reference, std::string_view think, std::string_view src_lang,
                  std::string_view tgt_lang, const MatchPolicy& match = {}, ThinkMatch mode = ThinkMatch::kTokens,
                  std::size_t* hits = nullptr);

/// Sentence BLEU with add-one smoothing on n > 1, in [0, 1].
double reward_bleu(const TokenSequence& answer, const TokenSequence& reference);

/// Half away from zero, two decimals.
double round_comet(double score);

struct RewardWeights {
  double alpha = 1.0;
  double beta = 0.1;
  double gamma = 0.1;
  double bleu_weight = 1.0;

  /// Throws InvalidArgument for negative or non-finite weights.
  void validate() const;

  friend bool operator==(const RewardWeights&, const RewardWeights&) = default;
};

/// Which components enter the total, mirroring the ablation rows.
enum class Recipe { kComet, kCometBleu, kCometAaw, kCometAawAao, kAll };

std::string_view recipe_name(Recipe recipe);
std::optional<Recipe> parse_recipe(std::string_view name);
std::span<const std::string_view> recipe_names();

bool recipe_uses_alignment(Recipe recipe);
bool recipe_uses_think(Recipe recipe);
bool recipe_uses_bleu(Recipe recipe);

/// Weights with every component the recipe leaves out set to zero.
RewardWeights recipe_weights(Recipe recipe, const RewardWeights& weights);

struct RewardComponents {
  double comet = 0.0;  // raw, rounded by combine()
  double aaw = 0.0;
  double aao = 0.0;
  double taw = 0.0;
  std::optional<double> bleu;
};

struct RewardDiagnostics {
  double comet_raw = 0.0;
  std::size_t matched_links = 0;
  std::size_t ref_key_links = 0;
  std::size_t pre_key_links = 0;
  std::size_t ref_order_pairs = 0;
  std::size_t matched_order_pairs = 0;
  std::size_t think_hits = 0;
  std::size_t oov_tokens = 0;
  std::size_t src_len = 0;
  std::size_t pred_len = 0;
  ThinkMatch think_match = ThinkMatch::kTokens;
  bool empty_lexicon = false;
};

struct RewardBreakdown {
  int r_format = 0;
  double r_comet = 0.0;
  double r_aaw = 0.0;
  double r_aao = 0.0;
  double r_taw = 0.0;
  std::optional<double> r_bleu;
  double r_all = 0.0;
  RewardWeights weights;
  RewardDiagnostics diagnostics;
};

/// Gated total: 0 when the format check failed, otherwise
/// r_comet + alpha*aaw + beta*aao + gamma*taw (+ bleu_weight*bleu).
RewardBreakdown combine(const ParsedOutput& parsed, const RewardComponents& components, const RewardWeights& weights,
                        RewardDiagnostics diagnostics = {});

}  // namespace termreward
