#include <doctest.h>

#include <atomic>
#include <fstream>

#include "termreward/error.hpp"
#include "termreward/pipeline.hpp"
#include "test_support.hpp"

using namespace termreward;
using nlohmann::json;

namespace {

class CountingScorer final : public SemanticScorer {
 public:
  std::vector<double> score(std::span<const ScoreItem> items) const override {
    ++calls;
    items_seen += items.size();
    return std::vector<double>(items.size(), 0.7);
  }
  bool reachable() const override { return true; }
  std::string describe() const override { return "counting"; }
  mutable std::atomic<int> calls{0};
  mutable std::atomic<std::size_t> items_seen{0};
};

class DownScorer final : public SemanticScorer {
 public:
  std::vector<double> score(std::span<const ScoreItem>) const override { throw ScorerUnavailable("down"); }
  bool reachable() const override { return false; }
  std::string describe() const override { return "down"; }
};

RewardConfig base_config() {
  RewardConfig c;
  c.tgt_lang = "zh";
  return c;
}

std::shared_ptr<const KeywordLexicon> lexicon() {
  const std::vector<std::string> e = {"cat", "dog"};
  return std::make_shared<const KeywordLexicon>(KeywordLexicon::from_entries(e, false));
}

ScoringRecord record(const std::string& output, const std::string& align_pre = "1-0 2-1 4-3 5-4") {
  return parse_record(json{{"src", "The cat chased the dog."},
                           {"ref", "猫追了狗。"},
                           {"output", output},
                           {"align_ref", "1-0 2-1 4-3 5-4"},
                           {"align_pre", align_pre}});
}

}  // namespace

TEST_CASE("records") {
  CHECK_THROWS_WITH_AS(parse_record(json{{"output", "x"}, {"ref", "y"}}), doctest::Contains("'src'"), FormatError);
  CHECK_THROWS_WITH_AS(parse_record(json{{"src", "x"}, {"output", "y"}}), doctest::Contains("'ref'"), FormatError);
  CHECK_THROWS_WITH_AS(parse_record(json{{"src", "x"}, {"ref", "y"}}), doctest::Contains("'output'"), FormatError);
  CHECK_THROWS_WITH_AS(parse_record(json{{"src", "x"}, {"ref", "y"}, {"output", 3}}), doctest::Contains("output"),
                       FormatError);
  CHECK_THROWS_AS(parse_record(json{{"src", "x"}, {"ref", "y"}, {"output", "x"}, {"src_tokens", "a"}}), FormatError);
  CHECK_THROWS_AS(parse_record(json::array()), FormatError);
  const auto r = parse_record(
      json{{"id", 7}, {"src", "x"}, {"ref", "y"}, {"output", "x"}, {"comet", 0.5}, {"key_src_tokens", {"a"}}});
  CHECK(r.id == 7);
  CHECK(*r.comet == 0.5);
}

TEST_CASE("format failure short-circuits alignment and scoring") {
  auto scorer = std::make_shared<CountingScorer>();
  const ScoringEngine engine(base_config(), nullptr, lexicon(), scorer);
  auto rec = record("no template");
  rec.align_ref = "99-99";  // would fail if parsed
  const auto b = engine.score_record(rec);
  CHECK(b.r_format == 0);
  CHECK(b.r_all == 0.0);
  CHECK(scorer->calls == 0);
}

TEST_CASE("precomputed semantic score is rounded") {
  auto c = base_config();
  c.scorer.kind = ScorerKind::kPrecomputed;
  const ScoringEngine engine(c, nullptr, lexicon(), nullptr);
  auto rec = record("<think>cat 猫</think><answer>猫追了狗。</answer>");
  rec.comet = 0.9132;
  const auto b = engine.score_record(rec);
  CHECK(b.r_comet == 0.91);
  CHECK(b.diagnostics.comet_raw == 0.9132);
  rec.comet.reset();
  CHECK_THROWS_WITH_AS(engine.score_record(rec), doctest::Contains("comet"), InvalidArgument);
}

TEST_CASE("scoring a batch keeps order and isolates record errors") {
  auto scorer = std::make_shared<CountingScorer>();
  auto c = base_config();
  c.parallelism = 4;
  const ScoringEngine engine(c, nullptr, lexicon(), scorer);
  std::vector<ScoringRecord> recs;
  for (int i = 0; i < 20; ++i) {
    auto r = record("<think>cat 猫 dog 狗</think><answer>猫追了狗。</answer>");
    r.id = i;
    if (i == 5) r.align_pre = "9-9";
    if (i == 6) r.output = "bad";
    recs.push_back(r);
  }
  const auto out = engine.score_batch(recs);
  REQUIRE(out.size() == 20);
  for (int i = 0; i < 20; ++i) CHECK(out[static_cast<std::size_t>(i)].id == i);
  CHECK_FALSE(out[5].ok());
  CHECK(out[5].error.find("9-9") != std::string::npos);
  CHECK(out[6].breakdown->r_all == 0.0);
  CHECK(out[0].breakdown->r_all == doctest::Approx(0.7 + 2.0 / 11.0 + 0.1 + 0.1));
  CHECK(scorer->calls == 1);
  CHECK(scorer->items_seen == 18);
}

TEST_CASE("scorer failure is never a zero score") {
  const ScoringEngine engine(base_config(), nullptr, lexicon(), std::make_shared<DownScorer>());
  const std::vector<ScoringRecord> recs = {record("<think></think><answer>猫</answer>", "1-0")};
  CHECK_THROWS_AS(engine.score_batch(recs), ScorerUnavailable);
  CHECK_THROWS_AS(engine.score_record(recs[0]), ScorerUnavailable);
}

TEST_CASE("missing resources are per-record errors") {
  const ScoringEngine no_lex(base_config(), nullptr, nullptr, std::make_shared<CountingScorer>());
  CHECK_THROWS_WITH_AS(no_lex.score_record(record("<think></think><answer>猫</answer>", "1-0")),
                       doctest::Contains("key"), InvalidArgument);

  auto rec = record("<think></think><answer>猫</answer>", "1-0");
  rec.key_src_tokens = std::vector<std::string>{"cat"};
  CHECK(no_lex.score_record(rec).diagnostics.ref_key_links == 1);

  auto table_cfg = base_config();
  table_cfg.alignment.kind = AlignmentSourceKind::kTable;
  const ScoringEngine no_table(table_cfg, nullptr, lexicon(), std::make_shared<CountingScorer>());
  CHECK_THROWS_WITH_AS(no_table.score_record(rec), doctest::Contains("alignment"), InvalidArgument);

  rec.align_pre.reset();
  CHECK_THROWS_WITH_AS(no_lex.score_record(rec), doctest::Contains("align_pre"), InvalidArgument);
}

TEST_CASE("comet-only recipe needs no alignment") {
  auto c = base_config();
  c.recipe = Recipe::kComet;
  const ScoringEngine engine(c, nullptr, nullptr, std::make_shared<CountingScorer>());
  ScoringRecord r;
  r.src = "x";
  r.output = "<think></think><answer>y</answer>";
  const auto b = engine.score_record(r);
  CHECK(b.r_all == 0.7);
  CHECK_FALSE(b.r_bleu);

  c.recipe = Recipe::kCometBleu;
  r.ref = "y";
  const auto bb = engine.with_config(c).score_record(r);
  REQUIRE(bb.r_bleu);
  CHECK(bb.r_all == doctest::Approx(0.7 + 1.0));
}

TEST_CASE("table and sidecar alignment sources") {
  testing::TempDir dir;
  const auto corpus = read_parallel_corpus(testing::data_dir() / "toy_corpus.tsv", "de", "en");
  EmOptions opts;
  opts.iterations = 10;
  save_table(em_train(corpus, opts), dir.path() / "toy.tbl");
  const auto lex = dir.file("lex.txt", "buch\nhaus\n");
  const auto sidecar = dir.file("side.tsv", "0-0 1-1\t0-0 1-1\n0-0\t1-1\n");

  auto c = parse_config(json{{"version", 1},
                             {"languages", {{"src", "de"}, {"tgt", "en"}}},
                             {"alignment", {{"source", "table"}, {"path", "toy.tbl"}}},
                             {"keys", {{"lexicon", "lex.txt"}}},
                             {"scorer", "mock:0.5"}},
                        dir.path());
  const auto engine = ScoringEngine::load(c);
  CHECK(engine.has_table());
  ScoringRecord r;
  r.src = "das buch";
  r.ref = "the book";
  r.output = "<think>buch book</think><answer>the book</answer>";
  const auto b = engine.score_record(r);
  CHECK(b.diagnostics.matched_links == 1);
  CHECK(b.r_aaw == 0.25);
  CHECK(b.r_taw == 1.0);

  c.alignment = {AlignmentSourceKind::kPharaohSidecar, sidecar, AlignMode::kGrowDiagFinal};
  const auto side = ScoringEngine::load(c);
  CHECK(side.score_record(r, 0).r_aaw == 0.25);
  CHECK(side.score_record(r, 1).r_aaw == 0.0);
  CHECK_THROWS_AS(side.score_record(r, 2), InvalidArgument);

}
