#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "termreward/align.hpp"
#include "termreward/config.hpp"
#include "termreward/keys.hpp"
#include "termreward/reward.hpp"
#include "termreward/scorer.hpp"

namespace termreward {

/// One rollout to score, as read from JSONL or a service request.
struct ScoringRecord {
  nlohmann::json id;  // echoed when present, null otherwise
  std::string src;
  std::string ref;
  std::string output;
  std::optional<std::vector<std::string>> src_tokens;
  std::optional<std::vector<std::string>> ref_tokens;
  std::optional<std::vector<std::string>> hyp_tokens;
  std::optional<double> comet;
  std::optional<std::string> align_ref;
  std::optional<std::string> align_pre;
  std::optional<std::vector<std::string>> key_src_tokens;
  std::optional<std::string> lang_src;
  std::optional<std::string> lang_tgt;
};

/// Validates field types and presence. Throws FormatError naming the field.
ScoringRecord parse_record(const nlohmann::json& obj);

struct RecordResult {
  nlohmann::json id;
  std::optional<RewardBreakdown> breakdown;
  std::string error;
  double latency_ms = 0.0;

  bool ok() const noexcept { return breakdown.has_value(); }
};

/// Immutable scoring state: config plus the loaded table, lexicon, sidecar
/// alignments and scorer. Safe to share across threads.
class ScoringEngine {
 public:
  /// Loads every resource the config names.
  static ScoringEngine load(const RewardConfig& config);

  ScoringEngine(RewardConfig config, std::shared_ptr<const TranslationTable> table,
                std::shared_ptr<const KeywordLexicon> lexicon, std::shared_ptr<const SemanticScorer> scorer,
                std::shared_ptr<const std::vector<std::pair<std::string, std::string>>> sidecar = nullptr);

  /// Same resources, different recipe/weights/match settings.
  ScoringEngine with_config(RewardConfig config) const;

  /// Scores one record. `index` selects the sidecar line when alignments come
  /// from a Pharaoh sidecar. Throws on per-record problems and on scorer
  /// failure (ScorerUnavailable).
  RewardBreakdown score_record(const ScoringRecord& record, std::size_t index = 0) const;

  /// Scores a batch in input order, fanning out over `config.parallelism`
  /// threads. Per-record problems become error entries; scorer failures
  /// propagate as ScorerUnavailable.
  std::vector<RecordResult> score_batch(std::span<const ScoringRecord> records, std::size_t first_index = 0) const;

  const RewardConfig& config() const noexcept { return config_; }
  const SemanticScorer* scorer() const noexcept { return scorer_.get(); }
  bool has_table() const noexcept { return table_ != nullptr; }
  bool has_lexicon() const noexcept { return lexicon_ != nullptr; }

 private:
  struct Prepared;
  Prepared prepare(const ScoringRecord& record, std::size_t index) const;

  RewardConfig config_;
  std::shared_ptr<const TranslationTable> table_;
  std::shared_ptr<const KeywordLexicon> lexicon_;
  std::shared_ptr<const SemanticScorer> scorer_;
  std::shared_ptr<const std::vector<std::pair<std::string, std::string>>> sidecar_;
};

/// Sidecar file: one line per record, `align_ref<TAB>align_pre`.
std::vector<std::pair<std::string, std::string>> load_pharaoh_sidecar(const std::filesystem::path& path);

nlohmann::ordered_json breakdown_to_json(const RewardBreakdown& breakdown);

/// Output line for one record: index, optional id, then breakdown or error.
nlohmann::ordered_json result_to_json(const RecordResult& result, std::size_t index, bool with_latency = false);

/// Means over successfully scored records plus provenance.
nlohmann::ordered_json summary_json(std::span<const RecordResult> results, const RewardConfig& config);

}  // namespace termreward
