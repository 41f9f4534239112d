#include "termreward/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "termreward/error.hpp"

namespace termreward {

namespace {

using nlohmann::json;

[[noreturn]] void field_error(std::string_view field, std::string_view what) {
  throw ConfigError("config field '" + std::string(field) + "': " + std::string(what));
}

void check_keys(const json& obj, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) field_error(where.empty() ? "<root>" : where, "expected an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == key;
    if (!ok) field_error(where.empty() ? key : std::string(where) + "." + key, "unknown field");
  }
}

double number(const json& v, std::string_view field) {
  if (!v.is_number()) field_error(field, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) field_error(field, "must be finite");
  return d;
}

double weight(const json& v, std::string_view field) {
  const double d = number(v, field);
  if (d < 0.0) field_error(field, "must be >= 0");
  return d;
}

std::string string(const json& v, std::string_view field) {
  if (!v.is_string()) field_error(field, "expected a string");
  return v.get<std::string>();
}

std::size_t count(const json& v, std::string_view field, std::size_t min = 1) {
  if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(min))
    field_error(field, "expected an integer >= " + std::to_string(min));
  return v.get<std::size_t>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

void parse_weights(const json& w, RewardWeights& out) {
  check_keys(w, "weights", {"alpha", "beta", "gamma", "bleu_weight"});
  if (w.contains("alpha")) out.alpha = weight(w["alpha"], "weights.alpha");
  if (w.contains("beta")) out.beta = weight(w["beta"], "weights.beta");
  if (w.contains("gamma")) out.gamma = weight(w["gamma"], "weights.gamma");
  if (w.contains("bleu_weight")) out.bleu_weight = weight(w["bleu_weight"], "weights.bleu_weight");
}

void parse_match(const json& m, RewardConfig& c) {
  check_keys(m, "match", {"case", "intersection", "empty_order_value", "think"});
  if (m.contains("case")) {
    const auto v = string(m["case"], "match.case");
    if (v == "auto") c.case_mode.reset();
    else if (v == "exact") c.case_mode = CaseMode::kExact;
    else if (v == "fold") c.case_mode = CaseMode::kFolded;
    else field_error("match.case", "expected one of auto, exact, fold");
  }
  if (m.contains("intersection")) {
    const auto v = string(m["intersection"], "match.intersection");
    if (v == "source-surface") c.intersection = IntersectionMode::kSourceSurface;
    else if (v == "exact-pair") c.intersection = IntersectionMode::kExactPair;
    else field_error("match.intersection", "expected source-surface or exact-pair");
  }
  if (m.contains("empty_order_value")) {
    const double v = number(m["empty_order_value"], "match.empty_order_value");
    if (v < 0.0 || v > 1.0) field_error("match.empty_order_value", "must lie in [0, 1]");
    c.empty_order_value = v;
  }
  if (m.contains("think")) {
    const auto v = string(m["think"], "match.think");
    if (v == "tokens") c.think_match = ThinkMatch::kTokens;
    else if (v == "substring") c.think_match = ThinkMatch::kSubstring;
    else field_error("match.think", "expected tokens or substring");
  }
}

void parse_recipe_field(const json& v, RewardConfig& c) {
  const auto name = string(v, "recipe");
  auto recipe = parse_recipe(name);
  if (!recipe) {
    std::string valid;
    for (auto n : recipe_names()) valid += (valid.empty() ? "" : ", ") + std::string(n);
    field_error("recipe", "unknown recipe '" + name + "'; valid recipes: " + valid);
  }
  c.recipe = *recipe;
}

void parse_format(const json& v, RewardConfig& c) {
  const auto s = string(v, "format");
  if (s == "strict") c.format_mode = FormatMode::kStrict;
  else if (s == "lenient") c.format_mode = FormatMode::kLenient;
  else field_error("format", "expected strict or lenient");
}

void parse_languages(const json& v, RewardConfig& c) {
  check_keys(v, "languages", {"src", "tgt"});
  if (v.contains("src")) c.src_lang = string(v["src"], "languages.src");
  if (v.contains("tgt")) c.tgt_lang = string(v["tgt"], "languages.tgt");
}

ScorerBinding parse_scorer(const json& v) {
  ScorerBinding b;
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "precomputed") {
      b.kind = ScorerKind::kPrecomputed;
    } else if (s.rfind("mock:", 0) == 0) {
      b.kind = ScorerKind::kMock;
      try {
        std::size_t used = 0;
        b.constant = std::stod(s.substr(5), &used);
        if (used != s.size() - 5 || !std::isfinite(b.constant)) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        field_error("scorer", "mock binding needs a number, e.g. mock:0.8");
      }
    } else {
      field_error("scorer", "expected \"precomputed\", \"mock:<value>\" or an endpoint object");
    }
    return b;
  }
  check_keys(v, "scorer", {"endpoint", "model", "timeout_ms", "max_in_flight", "batch_size", "retries"});
  if (!v.contains("endpoint")) field_error("scorer.endpoint", "required for endpoint bindings");
  b.kind = ScorerKind::kEndpoint;
  b.url = string(v["endpoint"], "scorer.endpoint");
  if (v.contains("model")) b.model = string(v["model"], "scorer.model");
  if (v.contains("timeout_ms")) b.timeout_ms = static_cast<int>(count(v["timeout_ms"], "scorer.timeout_ms"));
  if (v.contains("max_in_flight")) b.max_in_flight = count(v["max_in_flight"], "scorer.max_in_flight");
  if (v.contains("batch_size")) b.batch_size = count(v["batch_size"], "scorer.batch_size");
  if (v.contains("retries")) b.retries = count(v["retries"], "scorer.retries", 0);
  return b;
}

AlignmentSource parse_alignment(const json& v, const std::filesystem::path& base) {
  check_keys(v, "alignment", {"source", "path", "mode"});
  if (!v.contains("source")) field_error("alignment.source", "required");
  AlignmentSource a;
  const auto source = string(v["source"], "alignment.source");
  if (source == "record") a.kind = AlignmentSourceKind::kRecordFields;
  else if (source == "table") a.kind = AlignmentSourceKind::kTable;
  else if (source == "pharaoh") a.kind = AlignmentSourceKind::kPharaohSidecar;
  else field_error("alignment.source", "expected record, table or pharaoh");
  if (a.kind != AlignmentSourceKind::kRecordFields) {
    if (!v.contains("path")) field_error("alignment.path", "required for source '" + source + "'");
    a.path = resolve(base, string(v["path"], "alignment.path"));
  } else if (v.contains("path")) {
    field_error("alignment.path", "not used with source 'record'");
  }
  if (v.contains("mode")) {
    const auto mode = string(v["mode"], "alignment.mode");
    if (mode == "argmax") a.mode = AlignMode::kArgmax;
    else if (mode == "grow-diag") a.mode = AlignMode::kGrowDiagFinal;
    else field_error("alignment.mode", "expected argmax or grow-diag");
  }
  return a;
}

}  // namespace

std::string ScorerBinding::describe() const {
  switch (kind) {
    case ScorerKind::kMock: {
      std::ostringstream os;
      os << "mock:" << constant;
      return os.str();
    }
    case ScorerKind::kPrecomputed:
      return "precomputed";
    case ScorerKind::kEndpoint:
      return "endpoint:" + url;
  }
  return "unknown";
}

MatchPolicy RewardConfig::match_for(std::string_view tgt) const {
  MatchPolicy policy = MatchPolicy::for_target(tgt);
  if (case_mode) policy.case_mode = *case_mode;
  policy.intersection = intersection;
  return policy;
}

RewardConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
  check_keys(doc, "", {"version", "recipe", "weights", "match", "format", "languages", "alignment", "keys", "scorer",
                       "parallelism", "training"});
  RewardConfig c;
  if (!doc.contains("version")) field_error("version", "required");
  if (!doc["version"].is_number_integer()) field_error("version", "expected an integer");
  c.version = doc["version"].get<int>();
  if (c.version != RewardConfig::kVersion)
    field_error("version", "unsupported version " + std::to_string(c.version) + " (expected " +
                               std::to_string(RewardConfig::kVersion) + ")");
  if (doc.contains("recipe")) parse_recipe_field(doc["recipe"], c);
  if (doc.contains("weights")) parse_weights(doc["weights"], c.weights);
  if (doc.contains("match")) parse_match(doc["match"], c);
  if (doc.contains("format")) parse_format(doc["format"], c);
  if (doc.contains("languages")) parse_languages(doc["languages"], c);
  if (!doc.contains("alignment")) field_error("alignment", "exactly one alignment source is required");
  c.alignment = parse_alignment(doc["alignment"], base_dir);
  if (doc.contains("keys")) {
    const auto& k = doc["keys"];
    check_keys(k, "keys", {"lexicon", "case_fold"});
    if (k.contains("lexicon")) c.lexicon = resolve(base_dir, string(k["lexicon"], "keys.lexicon"));
    if (k.contains("case_fold")) {
      if (!k["case_fold"].is_boolean()) field_error("keys.case_fold", "expected a boolean");
      c.lexicon_case_fold = k["case_fold"].get<bool>();
    }
  }
  if (!doc.contains("scorer")) field_error("scorer", "exactly one scorer binding is required");
  c.scorer = parse_scorer(doc["scorer"]);
  if (doc.contains("parallelism")) c.parallelism = count(doc["parallelism"], "parallelism");
  if (doc.contains("training")) {
    if (!doc["training"].is_object()) field_error("training", "expected an object");
    c.training = doc["training"];
  }
  return c;
}

RewardConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    std::size_t column = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw ConfigError(path.string() + ":" + std::to_string(line) + ":" + std::to_string(column) +
                      ": malformed JSON: " + e.what());
  }
  try {
    return parse_config(doc, path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

RewardConfig apply_overrides(const RewardConfig& base, const json& overrides) {
  check_keys(overrides, "overrides", {"recipe", "weights", "match", "format", "languages"});
  RewardConfig c = base;
  if (overrides.contains("recipe")) parse_recipe_field(overrides["recipe"], c);
  if (overrides.contains("weights")) parse_weights(overrides["weights"], c.weights);
  if (overrides.contains("match")) parse_match(overrides["match"], c);
  if (overrides.contains("format")) parse_format(overrides["format"], c);
  if (overrides.contains("languages")) parse_languages(overrides["languages"], c);
  return c;
}

nlohmann::ordered_json to_json(const RewardConfig& c) {
  nlohmann::ordered_json j;
  j["version"] = c.version;
  j["recipe"] = std::string(recipe_name(c.recipe));
  j["weights"] = {{"alpha", c.weights.alpha},
                  {"beta", c.weights.beta},
                  {"gamma", c.weights.gamma},
                  {"bleu_weight", c.weights.bleu_weight}};
  j["match"]["case"] = !c.case_mode ? "auto" : (*c.case_mode == CaseMode::kExact ? "exact" : "fold");
  j["match"]["intersection"] =
      c.intersection == IntersectionMode::kSourceSurface ? "source-surface" : "exact-pair";
  j["match"]["empty_order_value"] = c.empty_order_value;
  j["match"]["think"] = c.think_match == ThinkMatch::kTokens ? "tokens" : "substring";
  j["format"] = c.format_mode == FormatMode::kStrict ? "strict" : "lenient";
  j["languages"] = {{"src", c.src_lang}, {"tgt", c.tgt_lang}};
  switch (c.alignment.kind) {
    case AlignmentSourceKind::kRecordFields:
      j["alignment"]["source"] = "record";
      break;
    case AlignmentSourceKind::kTable:
      j["alignment"]["source"] = "table";
      j["alignment"]["path"] = c.alignment.path.filename().string();
      j["alignment"]["mode"] = c.alignment.mode == AlignMode::kArgmax ? "argmax" : "grow-diag";
      break;
    case AlignmentSourceKind::kPharaohSidecar:
      j["alignment"]["source"] = "pharaoh";
      j["alignment"]["path"] = c.alignment.path.filename().string();
      break;
  }
  if (c.lexicon) j["keys"]["lexicon"] = c.lexicon->filename().string();
  j["keys"]["case_fold"] = c.lexicon_case_fold;
  j["scorer"] = c.scorer.describe();
  j["parallelism"] = c.parallelism;
  j["training"] = c.training;
  return j;
}

std::string fnv1a64_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kHex[h & 0xf];
    h >>= 4;
  }
  return out;
}

std::string RewardConfig::hash() const {
  // Parallelism does not change results, so it stays out of the digest.
  auto canonical = to_json(*this);
  canonical.erase("parallelism");
  return "fnv1a64:" + fnv1a64_hex(canonical.dump());
}

std::optional<std::filesystem::path> resolve_config_path(const std::optional<std::filesystem::path>& explicit_path) {
  if (explicit_path) return explicit_path;
  if (const char* env = std::getenv(kConfigEnvVar); env && *env) return std::filesystem::path(env);
  return std::nullopt;
}

}  // namespace termreward
