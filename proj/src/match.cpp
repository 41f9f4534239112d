#include "termreward/match.hpp"

#include "termreward/text.hpp"

namespace termreward {

MatchPolicy MatchPolicy::for_target(std::string_view tgt_lang) {
  MatchPolicy policy;
  policy.case_mode = primary_language(tgt_lang) == "en" ? CaseMode::kFolded : CaseMode::kExact;
  return policy;
}

std::string MatchPolicy::normalize(std::string_view word) const {
  return case_mode == CaseMode::kFolded ? fold_case(nfc(word)) : nfc(word);
}

}  // namespace termreward
