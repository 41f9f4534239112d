#include "termreward/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <thread>

#include "termreward/error.hpp"

namespace termreward {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

std::optional<std::string> opt_string(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw FormatError(std::string("record field '") + key + "' must be a string");
  return it->get<std::string>();
}

std::optional<std::vector<std::string>> opt_tokens(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_array()) throw FormatError(std::string("record field '") + key + "' must be an array of strings");
  std::vector<std::string> out;
  for (const auto& v : *it) {
    if (!v.is_string()) throw FormatError(std::string("record field '") + key + "' must be an array of strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::min(std::max<std::size_t>(threads, 1), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> workers;
  workers.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t)
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
}

}  // namespace

ScoringRecord parse_record(const json& obj) {
  if (!obj.is_object()) throw FormatError("record must be a JSON object");
  ScoringRecord r;
  if (auto it = obj.find("id"); it != obj.end()) r.id = *it;
  auto output = opt_string(obj, "output");
  if (!output) throw FormatError("record missing required field 'output'");
  r.output = std::move(*output);
  r.src_tokens = opt_tokens(obj, "src_tokens");
  r.ref_tokens = opt_tokens(obj, "ref_tokens");
  r.hyp_tokens = opt_tokens(obj, "hyp_tokens");
  r.key_src_tokens = opt_tokens(obj, "key_src_tokens");
  auto src = opt_string(obj, "src");
  auto ref = opt_string(obj, "ref");
  if (!src && !r.src_tokens) throw FormatError("record missing required field 'src'");
  if (!ref && !r.ref_tokens) throw FormatError("record missing required field 'ref'");
  r.src = src ? *src : join_tokens(*r.src_tokens);
  r.ref = ref ? *ref : join_tokens(*r.ref_tokens);
  if (auto it = obj.find("comet"); it != obj.end() && !it->is_null()) {
    if (!it->is_number()) throw FormatError("record field 'comet' must be a number");
    r.comet = it->get<double>();
  }
  r.align_ref = opt_string(obj, "align_ref");
  r.align_pre = opt_string(obj, "align_pre");
  r.lang_src = opt_string(obj, "lang_src");
  r.lang_tgt = opt_string(obj, "lang_tgt");
  return r;
}

std::vector<std::pair<std::string, std::string>> load_pharaoh_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read alignment sidecar " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected align_ref<TAB>align_pre");
    out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return out;
}

// ---------------------------------------------------------------------------

struct ScoringEngine::Prepared {
  ParsedOutput parsed;
  RewardComponents components;
  RewardDiagnostics diagnostics;
  RewardWeights weights;
  bool needs_score = false;
  ScoreItem item;
};

ScoringEngine::ScoringEngine(RewardConfig config, std::shared_ptr<const TranslationTable> table,
                             std::shared_ptr<const KeywordLexicon> lexicon,
                             std::shared_ptr<const SemanticScorer> scorer,
                             std::shared_ptr<const std::vector<std::pair<std::string, std::string>>> sidecar)
    : config_(std::move(config)),
      table_(std::move(table)),
      lexicon_(std::move(lexicon)),
      scorer_(std::move(scorer)),
      sidecar_(std::move(sidecar)) {
  config_.weights.validate();
  if (config_.scorer.kind != ScorerKind::kPrecomputed && !scorer_)
    throw ConfigError("scorer binding '" + config_.scorer.describe() + "' has no scorer instance");
}

ScoringEngine ScoringEngine::load(const RewardConfig& config) {
  std::shared_ptr<const TranslationTable> table;
  std::shared_ptr<const std::vector<std::pair<std::string, std::string>>> sidecar;
  if (config.alignment.kind == AlignmentSourceKind::kTable)
    table = std::make_shared<const TranslationTable>(load_table(config.alignment.path));
  if (config.alignment.kind == AlignmentSourceKind::kPharaohSidecar)
    sidecar = std::make_shared<const std::vector<std::pair<std::string, std::string>>>(
        load_pharaoh_sidecar(config.alignment.path));
  std::shared_ptr<const KeywordLexicon> lexicon;
  if (config.lexicon)
    lexicon = std::make_shared<const KeywordLexicon>(load_lexicon(*config.lexicon, {config.lexicon_case_fold}));
  return ScoringEngine(config, std::move(table), std::move(lexicon), make_scorer(config.scorer), std::move(sidecar));
}

ScoringEngine ScoringEngine::with_config(RewardConfig config) const {
  return ScoringEngine(std::move(config), table_, lexicon_, scorer_, sidecar_);
}

ScoringEngine::Prepared ScoringEngine::prepare(const ScoringRecord& record, std::size_t index) const {
  Prepared p;
  p.weights = recipe_weights(config_.recipe, config_.weights);
  p.diagnostics.think_match = config_.think_match;
  p.parsed = parse_output(record.output, config_.format_mode);
  if (!p.parsed.format_ok) return p;

  const std::string lang_src = record.lang_src.value_or(config_.src_lang);
  const std::string lang_tgt = record.lang_tgt.value_or(config_.tgt_lang);
  const TokenSequence src =
      record.src_tokens ? from_pretokenized(*record.src_tokens, lang_src) : tokenize(record.src, lang_src);
  const TokenSequence ref =
      record.ref_tokens ? from_pretokenized(*record.ref_tokens, lang_tgt) : tokenize(record.ref, lang_tgt);
  const TokenSequence pred =
      record.hyp_tokens ? from_pretokenized(*record.hyp_tokens, lang_tgt) : tokenize(p.parsed.answer, lang_tgt);
  p.diagnostics.src_len = src.size();
  p.diagnostics.pred_len = pred.size();

  if (recipe_uses_alignment(config_.recipe)) {
    if (src.empty()) throw InvalidArgument("source text is empty");
    AlignmentSet aref;
    AlignmentSet apre;
    switch (config_.alignment.kind) {
      case AlignmentSourceKind::kRecordFields:
        if (!record.align_ref || !record.align_pre)
          throw InvalidArgument("missing alignment source: record lacks 'align_ref'/'align_pre'");
        aref = parse_pharaoh(*record.align_ref, src, ref);
        apre = parse_pharaoh(*record.align_pre, src, pred);
        break;
      case AlignmentSourceKind::kPharaohSidecar:
        if (!sidecar_ || index >= sidecar_->size())
          throw InvalidArgument("missing alignment source: no sidecar line for record " + std::to_string(index));
        aref = parse_pharaoh((*sidecar_)[index].first, src, ref);
        apre = parse_pharaoh((*sidecar_)[index].second, src, pred);
        break;
      case AlignmentSourceKind::kTable: {
        if (!table_) throw InvalidArgument("missing alignment source: translation table not loaded");
        AlignStats stats;
        if (!ref.empty()) aref = align(*table_, src, ref, config_.alignment.mode, &stats);
        if (!pred.empty()) apre = align(*table_, src, pred, config_.alignment.mode, &stats);
        p.diagnostics.oov_tokens = stats.oov_tokens;
        break;
      }
    }

    KeywordLexicon record_lexicon;
    const KeywordLexicon* lexicon = lexicon_.get();
    if (record.key_src_tokens) {
      record_lexicon =
          KeywordLexicon::from_entries(*record.key_src_tokens, config_.lexicon_case_fold, "record:key_src_tokens");
      lexicon = &record_lexicon;
    }
    if (!lexicon) throw InvalidArgument("no key selection: configure keys.lexicon or supply 'key_src_tokens'");
    const KeyAlignmentSet ref_keys = filter_key(aref, *lexicon);
    const KeyAlignmentSet pre_keys = filter_key(apre, *lexicon);
    p.diagnostics.ref_key_links = ref_keys.size();
    p.diagnostics.pre_key_links = pre_keys.size();
    p.diagnostics.empty_lexicon = ref_keys.empty_lexicon;

    const MatchPolicy match = config_.match_for(lang_tgt);
    p.components.aaw = reward_aaw(ref_keys, pre_keys, src.size(), pred.size(), match, &p.diagnostics.matched_links);
    OrderCounts order;
    p.components.aao = reward_aao(ref_keys, pre_keys, match, config_.empty_order_value, &order);
    p.diagnostics.ref_order_pairs = order.reference_pairs;
    p.diagnostics.matched_order_pairs = order.matched_pairs;
    p.components.taw = reward_taw(ref_keys, p.parsed.think, lang_src, lang_tgt, match, config_.think_match,
                                  &p.diagnostics.think_hits);
  }
  if (recipe_uses_bleu(config_.recipe)) {
    if (ref.empty()) throw InvalidArgument("reference text is empty");
    p.components.bleu = reward_bleu(pred, ref);
  }

  if (config_.scorer.kind == ScorerKind::kPrecomputed) {
    if (!record.comet) throw InvalidArgument("scorer binding is 'precomputed' but record has no 'comet' field");
    p.components.comet = *record.comet;
  } else {
    p.needs_score = true;
    p.item = {record.src, record.ref, p.parsed.answer};
  }
  return p;
}

RewardBreakdown ScoringEngine::score_record(const ScoringRecord& record, std::size_t index) const {
  Prepared p = prepare(record, index);
  if (p.needs_score) {
    const auto scores = scorer_->score(std::span(&p.item, 1));
    p.components.comet = scores.at(0);
  }
  return combine(p.parsed, p.components, p.weights, p.diagnostics);
}

std::vector<RecordResult> ScoringEngine::score_batch(std::span<const ScoringRecord> records,
                                                     std::size_t first_index) const {
  const std::size_t n = records.size();
  std::vector<RecordResult> results(n);
  std::vector<std::optional<Prepared>> prepared(n);

  parallel_for(n, config_.parallelism, [&](std::size_t i) {
    const auto start = Clock::now();
    results[i].id = records[i].id;
    try {
      prepared[i] = prepare(records[i], first_index + i);
    } catch (const Error& e) {
      results[i].error = e.what();
    } catch (const std::exception& e) {
      results[i].error = e.what();
    }
    results[i].latency_ms = elapsed_ms(start);
  });

  std::vector<ScoreItem> items;
  std::vector<std::size_t> owners;
  for (std::size_t i = 0; i < n; ++i) {
    if (prepared[i] && prepared[i]->needs_score) {
      items.push_back(prepared[i]->item);
      owners.push_back(i);
    }
  }
  if (!items.empty()) {
    const auto start = Clock::now();
    const auto scores = scorer_->score(items);
    const double wait = elapsed_ms(start);
    for (std::size_t k = 0; k < owners.size(); ++k) {
      prepared[owners[k]]->components.comet = scores[k];
      results[owners[k]].latency_ms += wait;
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (!prepared[i]) continue;
    try {
      const auto& p = *prepared[i];
      results[i].breakdown = combine(p.parsed, p.components, p.weights, p.diagnostics);
    } catch (const Error& e) {
      results[i].error = e.what();
    }
  }
  return results;
}

// ---------------------------------------------------------------------------
// JSON views

nlohmann::ordered_json breakdown_to_json(const RewardBreakdown& b) {
  nlohmann::ordered_json j;
  j["r_format"] = b.r_format;
  j["r_comet"] = b.r_comet;
  j["r_aaw"] = b.r_aaw;
  j["r_aao"] = b.r_aao;
  j["r_taw"] = b.r_taw;
  if (b.r_bleu) j["r_bleu"] = *b.r_bleu;
  j["r_all"] = b.r_all;
  j["weights"] = {{"alpha", b.weights.alpha},
                  {"beta", b.weights.beta},
                  {"gamma", b.weights.gamma},
                  {"bleu_weight", b.weights.bleu_weight}};
  const auto& d = b.diagnostics;
  j["diagnostics"] = {{"comet_raw", d.comet_raw},
                      {"src_len", d.src_len},
                      {"pred_len", d.pred_len},
                      {"ref_key_links", d.ref_key_links},
                      {"pre_key_links", d.pre_key_links},
                      {"matched_links", d.matched_links},
                      {"ref_order_pairs", d.ref_order_pairs},
                      {"matched_order_pairs", d.matched_order_pairs},
                      {"think_hits", d.think_hits},
                      {"think_match", d.think_match == ThinkMatch::kTokens ? "tokens" : "substring"},
                      {"oov_tokens", d.oov_tokens},
                      {"empty_lexicon", d.empty_lexicon}};
  return j;
}

nlohmann::ordered_json result_to_json(const RecordResult& result, std::size_t index, bool with_latency) {
  nlohmann::ordered_json j;
  j["index"] = index;
  if (!result.id.is_null()) j["id"] = result.id;
  if (result.breakdown) {
    const auto fields = breakdown_to_json(*result.breakdown);
    for (const auto& [key, value] : fields.items()) j[key] = value;
  } else {
    j["error"] = result.error;
  }
  if (with_latency) j["latency_ms"] = result.latency_ms;
  return j;
}

nlohmann::ordered_json summary_json(std::span<const RecordResult> results, const RewardConfig& config) {
  std::size_t scored = 0;
  std::size_t format_failures = 0;
  std::size_t bleu_count = 0;
  double sum_all = 0, sum_comet = 0, sum_aaw = 0, sum_aao = 0, sum_taw = 0, sum_bleu = 0;
  for (const auto& r : results) {
    if (!r.breakdown) continue;
    const auto& b = *r.breakdown;
    ++scored;
    if (b.r_format == 0) ++format_failures;
    sum_all += b.r_all;
    sum_comet += b.r_comet;
    sum_aaw += b.r_aaw;
    sum_aao += b.r_aao;
    sum_taw += b.r_taw;
    if (b.r_bleu) {
      ++bleu_count;
      sum_bleu += *b.r_bleu;
    }
  }
  auto mean = [&](double s, std::size_t n) -> nlohmann::ordered_json {
    if (n == 0) return nullptr;
    return s / static_cast<double>(n);
  };
  nlohmann::ordered_json s;
  s["records"] = results.size();
  s["scored"] = scored;
  s["errors"] = results.size() - scored;
  s["mean_r_all"] = mean(sum_all, scored);
  s["mean_r_comet"] = mean(sum_comet, scored);
  s["mean_r_aaw"] = mean(sum_aaw, scored);
  s["mean_r_aao"] = mean(sum_aao, scored);
  s["mean_r_taw"] = mean(sum_taw, scored);
  if (bleu_count) s["mean_r_bleu"] = mean(sum_bleu, bleu_count);
  s["format_failure_rate"] = mean(static_cast<double>(format_failures), scored);
  s["recipe"] = std::string(recipe_name(config.recipe));
  s["config_version"] = config.version;
  s["config_hash"] = config.hash();
  nlohmann::ordered_json j;
  j["summary"] = s;
  return j;
}

}  // namespace termreward
