// Command-line front end: aligner training, batch scoring, evaluation,
// GRPO advantage checks and the reward service.

#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "termreward/grpo.hpp"  // before httplib.h, see service.cpp

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "termreward/align.hpp"
#include "termreward/config.hpp"
#include "termreward/error.hpp"
#include "termreward/metrics.hpp"
#include "termreward/pipeline.hpp"
#include "termreward/scorer.hpp"
#include "termreward/service.hpp"

namespace tr = termreward;
using nlohmann::json;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitScorer = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw tr::IoError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string corpus;
  std::string out;
  std::string model = "ibm1";
  std::size_t iterations = 5;
  std::string src_lang = "en";
  std::string tgt_lang = "zh";
  bool no_reverse = false;
};

int run_train(const TrainArgs& a) {
  if (a.iterations == 0) throw UsageError("--iterations must be >= 1");
  const auto corpus = tr::read_parallel_corpus(a.corpus, a.src_lang, a.tgt_lang);
  if (corpus.empty()) throw tr::InvalidArgument("corpus " + a.corpus + " is empty");
  tr::EmOptions options;
  options.iterations = a.iterations;
  options.model = a.model == "ibm2" ? tr::AlignmentModel::kIbm2 : tr::AlignmentModel::kIbm1;
  options.train_reverse = !a.no_reverse;
  options.on_iteration = [](tr::Direction d, std::size_t it, double ll) {
    std::cout << (d == tr::Direction::kForward ? "forward" : "reverse") << " iteration " << it
              << " log-likelihood " << std::setprecision(12) << ll << "\n";
  };
  tr::EmReport report;
  const auto table = tr::em_train(corpus, options, &report);
  if (report.skipped_pairs) std::cerr << "skipped " << report.skipped_pairs << " pairs with an empty side\n";
  tr::save_table(table, a.out);
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct AlignArgs {
  std::string table;
  std::string corpus;
  std::string mode = "grow-diag";
  std::string src_lang = "en";
  std::string tgt_lang = "zh";
};

int run_align(const AlignArgs& a) {
  const auto table = tr::load_table(a.table);
  const auto corpus = tr::read_parallel_corpus(a.corpus, a.src_lang, a.tgt_lang);
  const auto mode = a.mode == "argmax" ? tr::AlignMode::kArgmax : tr::AlignMode::kGrowDiagFinal;
  for (const auto& [src, tgt] : corpus) {
    if (src.empty() || tgt.empty()) {
      std::cout << "\n";
      continue;
    }
    std::cout << tr::format_pharaoh(tr::align(table, src, tgt, mode)) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct ScoreArgs {
  std::string records;
  std::optional<std::string> config;
  std::string out = "-";
};

int run_score(const ScoreArgs& a) {
  const auto config_path = tr::resolve_config_path(a.config ? std::optional<std::filesystem::path>(*a.config)
                                                            : std::nullopt);
  if (!config_path) throw UsageError(std::string("no config: pass --config or set ") + tr::kConfigEnvVar);
  const auto config = tr::load_config(*config_path);
  const auto engine = tr::ScoringEngine::load(config);

  const auto lines = read_lines(a.records);
  std::vector<tr::ScoringRecord> records;
  std::vector<std::size_t> record_line;
  std::vector<tr::RecordResult> results(lines.size());
  std::vector<std::optional<std::size_t>> slot(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      records.push_back(tr::parse_record(json::parse(lines[i])));
      slot[i] = records.size() - 1;
      record_line.push_back(i);
    } catch (const json::exception& e) {
      results[i].error = std::string("malformed JSON: ") + e.what();
    } catch (const tr::Error& e) {
      results[i].error = e.what();
    }
  }

  // Sidecar alignments are indexed by input line, so score line by line
  // positions rather than compacted record positions.
  std::vector<tr::RecordResult> scored;
  if (config.alignment.kind == tr::AlignmentSourceKind::kPharaohSidecar) {
    for (std::size_t k = 0; k < records.size(); ++k) {
      auto one = engine.score_batch(std::span(&records[k], 1), record_line[k]);
      scored.push_back(std::move(one.front()));
    }
  } else {
    scored = engine.score_batch(records);
  }
  for (std::size_t i = 0; i < lines.size(); ++i)
    if (slot[i]) results[i] = std::move(scored[*slot[i]]);

  std::ofstream file;
  std::ostream* out = &std::cout;
  if (a.out != "-") {
    file.open(a.out, std::ios::trunc);
    if (!file) throw tr::IoError("cannot write " + a.out);
    out = &file;
  }
  for (std::size_t i = 0; i < results.size(); ++i) *out << tr::result_to_json(results[i], i).dump() << "\n";
  *out << tr::summary_json(results, config).dump() << "\n";
  out->flush();
  if (!*out) throw tr::IoError("write failed for " + a.out);
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string hyp;
  std::string ref;
  std::optional<std::string> src;
  std::optional<std::string> terms;
  std::string src_lang = "en";
  std::string tgt_lang = "zh";
  std::optional<std::string> json_out;
  std::string case_mode = "auto";
};

struct Column {
  std::vector<std::string> text;
  std::vector<std::optional<double>> comet;
};

Column read_column(const std::string& path, const char* role) {
  Column col;
  const bool jsonl = std::filesystem::path(path).extension() == ".jsonl";
  for (const auto& line : read_lines(path)) {
    if (!jsonl) {
      col.text.push_back(line);
      col.comet.emplace_back();
      continue;
    }
    const auto obj = json::parse(line);
    const char* key = obj.contains(role) ? role : "text";
    if (!obj.contains(key) || !obj[key].is_string())
      throw tr::FormatError(path + ": line " + std::to_string(col.text.size() + 1) + " lacks '" + role + "'");
    col.text.push_back(obj[key].get<std::string>());
    if (obj.contains("comet") && obj["comet"].is_number()) col.comet.emplace_back(obj["comet"].get<double>());
    else col.comet.emplace_back();
  }
  return col;
}

int run_evaluate(const EvalArgs& a) {
  if (a.terms && !a.src) throw UsageError("--terms requires --src");
  const Column hyp = read_column(a.hyp, "hyp");
  const Column ref = read_column(a.ref, "ref");
  std::optional<Column> src;
  if (a.src) src = read_column(*a.src, "src");

  std::vector<std::pair<std::string, std::size_t>> sizes = {{a.hyp, hyp.text.size()}, {a.ref, ref.text.size()}};
  if (src) sizes.emplace_back(*a.src, src->text.size());
  for (const auto& [path, n] : sizes) {
    for (const auto& [other, m] : sizes) {
      if (n < m)
        throw tr::InvalidArgument("line count mismatch: " + path + " has " + std::to_string(n) + " lines, " + other +
                                  " has " + std::to_string(m));
    }
  }

  std::vector<tr::TokenSequence> hyps, refs;
  for (const auto& t : hyp.text) hyps.push_back(tr::tokenize(t, a.tgt_lang));
  for (const auto& t : ref.text) refs.push_back(tr::tokenize(t, a.tgt_lang));
  const auto bleu = tr::bleu(hyps, refs);

  nlohmann::ordered_json report;
  report["sentences"] = hyps.size();
  report["tokenizer"] = "builtin:" + tr::primary_language(a.tgt_lang);
  report["bleu"] = {{"value", *bleu.value},
                    {"brevity_penalty", bleu.brevity_penalty},
                    {"hyp_len", bleu.ngrams.hyp_len},
                    {"ref_len", bleu.ngrams.ref_len},
                    {"matches", bleu.ngrams.matches},
                    {"totals", bleu.ngrams.totals}};

  std::vector<std::pair<std::string, std::string>> rows = {{"BLEU", [&] {
                                                              std::ostringstream os;
                                                              os << std::fixed << std::setprecision(2) << *bleu.value;
                                                              return os.str();
                                                            }()}};

  if (a.terms) {
    const auto dict = tr::load_term_dictionary(*a.terms, a.src_lang, a.tgt_lang);
    std::vector<std::pair<tr::TokenSequence, tr::TokenSequence>> pairs;
    for (std::size_t i = 0; i < hyps.size(); ++i) pairs.emplace_back(tr::tokenize(src->text[i], a.src_lang), hyps[i]);
    tr::MatchPolicy match = tr::MatchPolicy::for_target(a.tgt_lang);
    if (a.case_mode == "exact") match.case_mode = tr::CaseMode::kExact;
    if (a.case_mode == "fold") match.case_mode = tr::CaseMode::kFolded;
    const auto ta = tr::terminology_accuracy(pairs, dict, match);
    report["ta"] = {{"value", ta.value ? json(*ta.value) : json(nullptr)},
                    {"status", ta.value ? "ok" : "no terms found"},
                    {"occurrence_hits", ta.term_hits},
                    {"occurrence_total", ta.term_total},
                    {"type_hits", ta.term_type_hits},
                    {"type_total", ta.term_type_total}};
    std::ostringstream os;
    if (ta.value) os << std::fixed << std::setprecision(4) << *ta.value << " (" << ta.term_hits << "/" << ta.term_total << ")";
    else os << "no terms found";
    rows.emplace_back("TA", os.str());
  }

  std::size_t comet_n = 0;
  double comet_sum = 0.0;
  for (const auto& c : hyp.comet)
    if (c) {
      ++comet_n;
      comet_sum += *c;
    }
  if (comet_n > 0) {
    report["comet"] = {{"mean", comet_sum / static_cast<double>(comet_n)}, {"count", comet_n}};
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << comet_sum / static_cast<double>(comet_n) << " (" << comet_n
       << " supplied)";
    rows.emplace_back("COMET", os.str());
  }

  std::size_t width = 6;
  for (const auto& [name, _] : rows) width = std::max(width, name.size());
  std::cout << std::left << std::setw(static_cast<int>(width)) << "metric" << "  value\n";
  for (const auto& [name, value] : rows) std::cout << std::setw(static_cast<int>(width)) << name << "  " << value << "\n";

  if (a.json_out) {
    std::ofstream out(*a.json_out, std::ios::trunc);
    if (!out) throw tr::IoError("cannot write " + *a.json_out);
    out << report.dump(2) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct GrpoArgs {
  std::string input = "-";
  std::string std_kind = "population";
};

int run_grpo_check(const GrpoArgs& a) {
  std::ifstream file;
  std::istream* in = &std::cin;
  if (a.input != "-") {
    file.open(a.input);
    if (!file) throw tr::IoError("cannot open " + a.input);
    in = &file;
  }
  const auto kind = a.std_kind == "sample" ? tr::grpo::StdKind::kSample : tr::grpo::StdKind::kPopulation;
  std::string line;
  std::size_t index = 0;
  while (std::getline(*in, line)) {
    if (tr::is_blank(line)) continue;
    nlohmann::ordered_json out;
    out["group"] = index++;
    try {
      const auto doc = json::parse(line);
      const auto& rewards_json = doc.is_array() ? doc : doc.at("rewards");
      const auto rewards = rewards_json.get<std::vector<double>>();
      const Eigen::Map<const Eigen::VectorXd> r(rewards.data(), static_cast<Eigen::Index>(rewards.size()));
      const Eigen::VectorXd adv = tr::grpo::normalize_advantages(r, kind);
      const double mean = r.mean();
      const double denom = kind == tr::grpo::StdKind::kPopulation ? static_cast<double>(r.size())
                                                                  : static_cast<double>(r.size() - 1);
      out["mean"] = mean;
      out["std"] = std::sqrt((r.array() - mean).square().sum() / denom);
      out["advantages"] = std::vector<double>(adv.data(), adv.data() + adv.size());
    } catch (const std::exception& e) {
      out["error"] = e.what();
    }
    std::cout << out.dump() << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------

tr::RewardService* g_service = nullptr;
httplib::Server* g_mock = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
  if (g_mock) g_mock->stop();
}

struct ServeArgs {
  std::optional<std::string> config;
  std::string host = "127.0.0.1";
  int port = 8080;
};

int run_serve(const ServeArgs& a) {
  const auto config_path = tr::resolve_config_path(a.config ? std::optional<std::filesystem::path>(*a.config)
                                                            : std::nullopt);
  if (!config_path) throw UsageError(std::string("no config: pass --config or set ") + tr::kConfigEnvVar);
  tr::RewardService service(tr::load_config(*config_path));
  const int port = service.bind(a.host, a.port);
  if (port < 0) throw tr::IoError("cannot bind " + a.host + ":" + std::to_string(a.port));
  g_service = &service;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "listening on " << a.host << ":" << port << "\n";
  std::jthread loader([&service] {
    try {
      service.load();
      std::cerr << "ready\n";
    } catch (const std::exception& e) {
      std::cerr << "load failed: " << e.what() << "\n";
    }
  });
  service.serve();
  g_service = nullptr;
  return 0;
}

struct MockArgs {
  std::string host = "127.0.0.1";
  int port = 8081;
  double value = 0.8;
  std::string model = "mock";
};

int run_mock_scorer(const MockArgs& a) {
  httplib::Server server;
  tr::install_constant_scorer_routes(server, a.value, a.model);
  g_mock = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "mock scorer on " << a.host << ":" << a.port << "\n";
  const bool ok = server.listen(a.host, a.port);
  g_mock = nullptr;
  return ok ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Terminology-aware translation reward engine"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train-aligner", "Train an IBM Model 1/2 translation table by EM");
  train_cmd->add_option("--corpus", train.corpus, "Parallel corpus (TSV or JSONL)")->required();
  train_cmd->add_option("--iterations", train.iterations, "EM iterations (>= 1)");
  train_cmd->add_option("--model", train.model, "ibm1 or ibm2")->check(CLI::IsMember({"ibm1", "ibm2"}));
  train_cmd->add_option("--out", train.out, "Output table file")->required();
  train_cmd->add_option("--src-lang", train.src_lang);
  train_cmd->add_option("--tgt-lang", train.tgt_lang);
  train_cmd->add_flag("--no-reverse", train.no_reverse, "Skip the reverse direction (disables grow-diag)");

  AlignArgs align_args;
  auto* align_cmd = app.add_subcommand("align", "Align a parallel corpus with a trained table (Pharaoh output)");
  align_cmd->add_option("--table", align_args.table)->required();
  align_cmd->add_option("--corpus", align_args.corpus)->required();
  align_cmd->add_option("--mode", align_args.mode)->check(CLI::IsMember({"argmax", "grow-diag"}));
  align_cmd->add_option("--src-lang", align_args.src_lang);
  align_cmd->add_option("--tgt-lang", align_args.tgt_lang);

  ScoreArgs score;
  auto* score_cmd = app.add_subcommand("score", "Score a JSONL file of rollouts");
  score_cmd->add_option("--records", score.records, "ScoringRecord JSONL")->required();
  score_cmd->add_option("--config", score.config, std::string("Reward config (default: $") + tr::kConfigEnvVar + ")");
  score_cmd->add_option("--out", score.out, "Output JSONL ('-' for stdout)");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "Corpus BLEU and terminology accuracy");
  eval_cmd->add_option("--hyp", eval.hyp)->required();
  eval_cmd->add_option("--ref", eval.ref)->required();
  eval_cmd->add_option("--src", eval.src);
  eval_cmd->add_option("--terms", eval.terms, "Term dictionary TSV");
  eval_cmd->add_option("--src-lang", eval.src_lang);
  eval_cmd->add_option("--tgt-lang", eval.tgt_lang);
  eval_cmd->add_option("--json", eval.json_out, "Also write the report as JSON");
  eval_cmd->add_option("--case", eval.case_mode, "auto, exact or fold")->check(CLI::IsMember({"auto", "exact", "fold"}));

  GrpoArgs grpo_args;
  auto* grpo_cmd = app.add_subcommand("grpo-check", "Normalize reward groups into GRPO advantages");
  grpo_cmd->add_option("--input", grpo_args.input, "JSONL of reward groups ('-' for stdin)");
  grpo_cmd->add_option("--std", grpo_args.std_kind)->check(CLI::IsMember({"population", "sample"}));

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the reward service");
  serve_cmd->add_option("--config", serve.config);
  serve_cmd->add_option("--host", serve.host);
  serve_cmd->add_option("--port", serve.port);

  MockArgs mock;
  auto* mock_cmd = app.add_subcommand("mock-scorer", "Serve the scorer wire protocol with a constant score");
  mock_cmd->add_option("--host", mock.host);
  mock_cmd->add_option("--port", mock.port);
  mock_cmd->add_option("--value", mock.value);
  mock_cmd->add_option("--model", mock.model);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*train_cmd) return run_train(train);
    if (*align_cmd) return run_align(align_args);
    if (*score_cmd) return run_score(score);
    if (*eval_cmd) return run_evaluate(eval);
    if (*grpo_cmd) return run_grpo_check(grpo_args);
    if (*serve_cmd) return run_serve(serve);
    if (*mock_cmd) return run_mock_scorer(mock);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const tr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const tr::ScorerUnavailable& e) {
    std::cerr << "scorer unavailable: " << e.what() << "\n";
    return kExitScorer;
  } catch (const tr::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}
