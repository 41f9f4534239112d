#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "termreward/align.hpp"
#include "termreward/match.hpp"
#include "termreward/reward.hpp"

namespace termreward {

enum class AlignmentSourceKind {
  kTable,           // trained translation table file
  kPharaohSidecar,  // one `align_ref<TAB>align_pre` line per record
  kRecordFields,    // `align_ref` / `align_pre` on each record
};

struct AlignmentSource {
  AlignmentSourceKind kind = AlignmentSourceKind::kRecordFields;
  std::filesystem::path path;
  AlignMode mode = AlignMode::kGrowDiagFinal;
};

enum class ScorerKind { kMock, kPrecomputed, kEndpoint };

struct ScorerBinding {
  ScorerKind kind = ScorerKind::kMock;
  double constant = 0.0;
  std::string url;
  std::string model = "default";
  int timeout_ms = 10000;
  std::size_t max_in_flight = 4;
  std::size_t batch_size = 32;
  std::size_t retries = 1;

  /// "mock:0.8", "precomputed" or "endpoint:<url>".
  std::string describe() const;
};

struct RewardConfig {
  static constexpr int kVersion = 1;

  int version = kVersion;
  Recipe recipe = Recipe::kAll;
  RewardWeights weights;
  /// Unset means "auto": folded for English targets, exact otherwise.
  std::optional<CaseMode> case_mode;
  IntersectionMode intersection = IntersectionMode::kSourceSurface;
  double empty_order_value = 1.0;
  ThinkMatch think_match = ThinkMatch::kTokens;
  FormatMode format_mode = FormatMode::kStrict;
  std::string src_lang = "en";
  std::string tgt_lang = "zh";
  AlignmentSource alignment;
  std::optional<std::filesystem::path> lexicon;
  bool lexicon_case_fold = false;
  ScorerBinding scorer;
  std::size_t parallelism = 1;
  /// Trainer-facing settings (rollouts, learning rate, ...) carried through
  /// verbatim for provenance; the engine does not read them.
  nlohmann::json training = nlohmann::json::object();

  MatchPolicy match_for(std::string_view tgt_lang) const;

  /// FNV-1a 64 over the canonical JSON form, as "fnv1a64:<hex>".
  std::string hash() const;
};

/// Parses a config object. Relative paths resolve against `base_dir`.
/// Errors name the offending field.
RewardConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});

/// Reads a config file. JSON syntax errors report line and column.
RewardConfig load_config(const std::filesystem::path& path);

/// Applies a partial config object (recipe, weights, match, format, ...) on
/// top of an existing one. Alignment source and scorer cannot be changed.
RewardConfig apply_overrides(const RewardConfig& base, const nlohmann::json& overrides);

nlohmann::ordered_json to_json(const RewardConfig& config);

/// Name of the environment variable consulted when no config path is given.
inline constexpr const char* kConfigEnvVar = "TERMREWARD_CONFIG";

/// The explicit path when given, else $TERMREWARD_CONFIG, else nullopt.
std::optional<std::filesystem::path> resolve_config_path(const std::optional<std::filesystem::path>& explicit_path);

std::string fnv1a64_hex(std::string_view bytes);

}  // namespace termreward
