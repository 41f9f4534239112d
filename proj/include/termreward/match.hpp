#pragma once

#include <string>
#include <string_view>

namespace termreward {

enum class CaseMode { kExact, kFolded };

/// How a reference key link is paired with a predicted one.
enum class IntersectionMode {
  /// Same source index and same target surface; target positions ignored.
  kSourceSurface,
  /// Same source index, same target index and same surface.
  kExactPair,
};

/// Surface comparison rules shared by the rewards and the metrics.
struct MatchPolicy {
  CaseMode case_mode = CaseMode::kExact;
  IntersectionMode intersection = IntersectionMode::kSourceSurface;

  /// Case-folded for English targets, exact otherwise.
  static MatchPolicy for_target(std::string_view tgt_lang);

  /// Canonical form used for equality under this policy.
  std::string normalize(std::string_view word) const;
  bool same(std::string_view a, std::string_view b) const { return normalize(a) == normalize(b); }
};

}  // namespace termreward
