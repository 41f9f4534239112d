#include <doctest.h>

#include <random>
#include <sstream>

#include "termreward/align.hpp"
#include "termreward/error.hpp"
#include "test_support.hpp"

using namespace termreward;
using testing::seq;

namespace {

ParallelCorpus toy_corpus() {
  ParallelCorpus c;
  for (auto [s, t] : {std::pair{"das haus", "the house"}, {"das buch", "the book"}, {"ein buch", "a book"}})
    c.emplace_back(tokenize(s, "de"), tokenize(t, "en"));
  return c;
}

std::vector<std::pair<oracle::Sentence, oracle::Sentence>> plain(const ParallelCorpus& c, bool reverse = false) {
  std::vector<std::pair<oracle::Sentence, oracle::Sentence>> out;
  for (const auto& [s, t] : c) out.emplace_back(reverse ? t.tokens : s.tokens, reverse ? s.tokens : t.tokens);
  return out;
}

EmOptions iterations(std::size_t n, AlignmentModel model = AlignmentModel::kIbm1) {
  EmOptions o;
  o.iterations = n;
  o.model = model;
  return o;
}

ParallelCorpus random_corpus(std::mt19937& rng, std::size_t pairs) {
  const std::vector<std::string> src_vocab = {"a", "b", "c", "d", "e", "f"};
  const std::vector<std::string> tgt_vocab = {"u", "v", "w", "x", "y"};
  ParallelCorpus c;
  for (std::size_t p = 0; p < pairs; ++p) {
    std::vector<std::string> s, t;
    const int ls = std::uniform_int_distribution<int>(1, 5)(rng);
    const int lt = std::uniform_int_distribution<int>(1, 5)(rng);
    for (int i = 0; i < ls; ++i) s.push_back(src_vocab[std::uniform_int_distribution<std::size_t>(0, 5)(rng)]);
    for (int i = 0; i < lt; ++i) t.push_back(tgt_vocab[std::uniform_int_distribution<std::size_t>(0, 4)(rng)]);
    c.emplace_back(seq(s), seq(t));
  }
  return c;
}

}  // namespace

TEST_CASE("pharaoh parse and format") {
  const auto src = seq({"a", "b"});
  const auto tgt = seq({"x", "y", "z"});
  const auto a = parse_pharaoh("0-0 1-2", src, tgt);
  REQUIRE(a.size() == 2);
  CHECK(a.links()[0] == AlignmentLink{0, 0, "a", "x"});
  CHECK(a.links()[1] == AlignmentLink{1, 2, "b", "z"});
  CHECK(format_pharaoh(a) == "0-0 1-2");
  CHECK(parse_pharaoh("", src, tgt).empty());
  CHECK(parse_pharaoh("  ", src, tgt).empty());
  CHECK(format_pharaoh(parse_pharaoh("1-2 0-0 1-2", src, tgt)) == "0-0 1-2");

  CHECK_THROWS_WITH_AS(parse_pharaoh("5-0", src, tgt), doctest::Contains("5-0"), FormatError);
  CHECK_THROWS_WITH_AS(parse_pharaoh("0-0 1x2", src, tgt), doctest::Contains("column 5"), FormatError);
  CHECK_THROWS_AS(parse_pharaoh("0-", src, tgt), FormatError);
  CHECK_THROWS_AS(parse_pharaoh("-1-0", src, tgt), FormatError);
}

TEST_CASE("property: pharaoh round trip") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
    const std::size_t m = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
    std::vector<std::string> s(n, "s"), t(m, "t");
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (int k = std::uniform_int_distribution<int>(0, 12)(rng); k > 0; --k)
      pairs.emplace_back(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng),
                         std::uniform_int_distribution<std::size_t>(0, m - 1)(rng));
    const auto a = AlignmentSet::from_pairs(pairs, seq(s), seq(t));
    for (std::size_t i = 1; i < a.size(); ++i)
      REQUIRE(std::pair(a.links()[i - 1].src_idx, a.links()[i - 1].tgt_idx) <
              std::pair(a.links()[i].src_idx, a.links()[i].tgt_idx));
    REQUIRE(parse_pharaoh(format_pharaoh(a), seq(s), seq(t)) == a);
  }
}

TEST_CASE("EM on the toy corpus agrees with the reference implementation") {
  const auto corpus = toy_corpus();
  EmReport report;
  const auto table = em_train(corpus, iterations(10), &report);
  std::vector<double> oracle_ll;
  const auto t = oracle::ibm1(plain(corpus), 10, &oracle_ll);

  REQUIRE(report.forward_log_likelihood.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) CHECK(report.forward_log_likelihood[i] == doctest::Approx(oracle_ll[i]).epsilon(1e-12));
  for (const auto& [key, p] : t) {
    const std::string src = key.first.empty() ? std::string(LexicalTable::kNullWord) : key.first;
    CHECK(table.forward.prob(src, key.second) == doctest::Approx(p).epsilon(1e-12));
  }
  CHECK(table.forward.prob("das", "the") > table.forward.prob("das", "house"));
  CHECK(table.forward.prob("buch", "book") > 0.9);

  // the reverse direction is the same algorithm on swapped pairs
  const auto r = oracle::ibm1(plain(corpus, true), 10);
  REQUIRE(table.reverse);
  CHECK(table.reverse->prob("book", "buch") == doctest::Approx(r.at({"book", "buch"})).epsilon(1e-12));
}

TEST_CASE("EM edge cases") {
  ParallelCorpus single{{seq({"a"}), seq({"b"})}};
  const auto table = em_train(single, iterations(1));
  CHECK(table.forward.prob("a", "b") == doctest::Approx(1.0).epsilon(1e-9));

  CHECK_THROWS_AS(em_train({}, iterations(1)), InvalidArgument);
  CHECK_THROWS_AS(em_train(single, iterations(0)), InvalidArgument);

  ParallelCorpus with_empty = toy_corpus();
  with_empty.emplace_back(seq({"x"}), seq({}));
  EmReport report;
  em_train(with_empty, iterations(2), &report);
  CHECK(report.skipped_pairs == 1);
}

TEST_CASE("property: EM log-likelihood never decreases, rows stay stochastic") {
  std::mt19937 rng(3);
  for (auto model : {AlignmentModel::kIbm1, AlignmentModel::kIbm2}) {
    for (int trial = 0; trial < 25; ++trial) {
      const auto corpus = random_corpus(rng, 8);
      EmReport report;
      const auto table = em_train(corpus, iterations(8, model), &report);
      for (const auto* ll : {&report.forward_log_likelihood, &report.reverse_log_likelihood})
        for (std::size_t i = 1; i < ll->size(); ++i) REQUIRE((*ll)[i] >= (*ll)[i - 1] - 1e-9);
      for (const LexicalTable* lt : {&table.forward, &*table.reverse}) {
        for (LexicalTable::WordId s = 0; s < lt->source_vocab_size(); ++s) {
          double sum = 0.0;
          for (const auto& [tgt, p] : lt->row(s)) {
            REQUIRE(p >= 0.0);
            REQUIRE(p <= 1.0);
            sum += p;
          }
          REQUIRE(sum == doctest::Approx(1.0).epsilon(1e-9));
        }
      }
      // the reported value is the likelihood of the parameters before the step
      CHECK(corpus_log_likelihood(table.forward, corpus, Direction::kForward) >=
            report.forward_log_likelihood.back() - 1e-9);
    }
  }
}

TEST_CASE("IBM2 learns a distortion table") {
  const auto table = em_train(toy_corpus(), iterations(10, AlignmentModel::kIbm2));
  CHECK(table.forward.model() == AlignmentModel::kIbm2);
  double sum = 0.0;
  for (std::uint32_t i = 0; i <= 2; ++i) sum += table.forward.distortion(i, 0, 2, 2);
  CHECK(sum == doctest::Approx(1.0));
  CHECK(table.forward.distortion(0, 0, 7, 7) == doctest::Approx(1.0 / 8.0));
}

TEST_CASE("viterbi alignment") {
  const auto table = em_train(toy_corpus(), iterations(10));
  const auto src = seq({"das", "buch"});
  const auto tgt = seq({"the", "book"});
  CHECK(format_pharaoh(align(table, src, tgt, AlignMode::kArgmax)) == "0-0 1-1");
  CHECK(format_pharaoh(align(table, src, tgt, AlignMode::kGrowDiagFinal)) == "0-0 1-1");

  AlignStats stats;
  const TranslationTable empty{LexicalTable{}, LexicalTable{}};
  CHECK(align(empty, seq({"x"}), seq({"y"}), AlignMode::kArgmax, &stats).empty());
  CHECK(stats.oov_tokens == 2);
}

TEST_CASE("identity-seeded table aligns the diagonal") {
  std::vector<std::tuple<std::string, std::string, double>> entries;
  const std::vector<std::string> words = {"p", "q", "r", "s"};
  for (const auto& w : words)
    for (const auto& v : words) entries.emplace_back(w, v, w == v ? 0.97 : 0.01);
  TranslationTable t{LexicalTable::from_entries(entries), LexicalTable::from_entries(entries)};
  const auto s = seq(words);
  CHECK(format_pharaoh(align(t, s, s, AlignMode::kArgmax)) == "0-0 1-1 2-2 3-3");
  CHECK(format_pharaoh(align(t, s, s, AlignMode::kGrowDiagFinal)) == "0-0 1-1 2-2 3-3");
}

TEST_CASE("argmax ties go to the lowest source index and NULL must win strictly") {
  std::vector<std::tuple<std::string, std::string, double>> entries = {
      {"a", "x", 1.0}, {"b", "x", 1.0}, {"", "x", 1.0}};
  TranslationTable t{LexicalTable::from_entries(entries), std::nullopt};
  CHECK(format_pharaoh(align(t, seq({"a", "b"}), seq({"x"}), AlignMode::kArgmax)) == "0-0");
  CHECK(format_pharaoh(align(t, seq({"b", "a"}), seq({"x"}), AlignMode::kArgmax)) == "0-0");
  CHECK_THROWS_AS(align(t, seq({"a"}), seq({"x"}), AlignMode::kGrowDiagFinal), InvalidArgument);
}

TEST_CASE("grow-diag-final adds neighbours of the intersection") {
  const auto src = seq({"a", "b", "c"});
  const auto tgt = seq({"x", "y", "z"});
  const std::vector<std::pair<std::size_t, std::size_t>> f = {{0, 0}, {1, 1}, {2, 1}};
  const std::vector<std::pair<std::size_t, std::size_t>> r = {{0, 0}, {1, 1}, {2, 2}};
  const auto sym = grow_diag_final(AlignmentSet::from_pairs(f, src, tgt), AlignmentSet::from_pairs(r, src, tgt), src, tgt);
  CHECK(format_pharaoh(sym) == "0-0 1-1 2-1 2-2");
}

TEST_CASE("table persistence") {
  const auto table = em_train(toy_corpus(), iterations(10, AlignmentModel::kIbm2));
  testing::TempDir dir;
  const auto path = dir.path() / "toy.tbl";
  save_table(table, path);
  const auto loaded = load_table(path);
  CHECK(loaded == table);

  std::stringstream a, b;
  write_table(a, table);
  write_table(b, loaded);
  CHECK(a.str() == b.str());

  CHECK_THROWS_AS(load_table(dir.file("empty.tbl", "")), FormatError);
  CHECK_THROWS_AS(load_table(dir.path() / "missing.tbl"), IoError);

  std::string bytes = a.str();
  std::string v99 = bytes;
  v99[8] = 99;
  CHECK_THROWS_AS(load_table(dir.file("v99.tbl", v99)), VersionError);
  CHECK_THROWS_AS(load_table(dir.file("trunc.tbl", bytes.substr(0, bytes.size() / 2))), FormatError);
  CHECK_THROWS_AS(load_table(dir.file("trail.tbl", bytes + "x")), FormatError);
  CHECK_THROWS_AS(load_table(dir.file("magic.tbl", "NOTATABLE" + bytes.substr(9))), FormatError);
}

TEST_CASE("parallel corpus readers") {
  testing::TempDir dir;
  const auto tsv = read_parallel_corpus(dir.file("c.tsv", "das haus\tthe house\r\n\nein buch\ta book\n"), "de", "en");
  REQUIRE(tsv.size() == 2);
  CHECK(tsv[1].second.tokens == std::vector<std::string>{"a", "book"});

  const auto jsonl = read_parallel_corpus(
      dir.file("c.jsonl", "{\"src\":\"das haus\",\"tgt\":\"the house\"}\n{\"src_tokens\":[\"x y\"],\"tgt_tokens\":[\"z\"]}\n"),
      "de", "en");
  REQUIRE(jsonl.size() == 2);
  CHECK(jsonl[1].first.tokens == std::vector<std::string>{"x y"});

  CHECK_THROWS_AS(read_parallel_corpus(dir.file("bad.tsv", "no tab here\n"), "de", "en"), FormatError);
  CHECK_THROWS_WITH_AS(read_parallel_corpus(dir.path() / "nope.tsv", "de", "en"), doctest::Contains("nope.tsv"), IoError);
}
