#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <functional>

#include "zsasr/eval.hpp"

using namespace zsasr;

namespace {

// Textbook recursive definition, memoized on suffix positions.
std::size_t brute_distance(const std::u32string& a, const std::u32string& b) {
  std::vector<std::vector<int>> memo(a.size() + 1, std::vector<int>(b.size() + 1, -1));
  std::function<std::size_t(std::size_t, std::size_t)> d = [&](std::size_t i, std::size_t j) -> std::size_t {
    if (i == a.size()) return b.size() - j;
    if (j == b.size()) return a.size() - i;
    if (memo[i][j] >= 0) return std::size_t(memo[i][j]);
    std::size_t best = d(i + 1, j + 1) + (a[i] == b[j] ? 0 : 1);
    best = std::min(best, d(i + 1, j) + 1);
    best = std::min(best, d(i, j + 1) + 1);
    memo[i][j] = int(best);
    return best;
  };
  return d(0, 0);
}

std::vector<std::u32string> all_strings(std::size_t max_len) {
  std::vector<std::u32string> out{U""};
  std::size_t begin = 0;
  for (std::size_t len = 1; len <= max_len; ++len) {
    const std::size_t end = out.size();
    for (std::size_t i = begin; i < end; ++i)
      for (char32_t c : {U'a', U'b', U'c'}) out.push_back(out[i] + c);
    begin = end;
  }
  return out;
}

Corpus small_corpus() {
  auto cfg = CorpusConfig::default_preset();
  cfg.paired_per_language = 4;
  cfg.untranscribed_per_language = 4;
  cfg.text_in_domain_per_language = 4;
  cfg.text_out_domain_per_language = 4;
  cfg.test_per_language = 5;
  return gen_synthetic_corpus(cfg, 3);
}

}  // namespace

TEST_CASE("cer examples") {
  CHECK(cer(U"abc", U"abc") == 0.0);
  CHECK(cer(U"abc", U"axc") == doctest::Approx(1.0 / 3));
  CHECK(cer(U"ab", U"") == 1.0);
  CHECK(cer(U"ab", U"abcd") == 1.0);
  CHECK(cer(U"a", U"bbb") == 3.0);
  CHECK_THROWS_AS(cer(U"", U"a"), std::invalid_argument);
  CHECK(cer(U"का", U"क") == 0.5);  // codepoints, not bytes
}

TEST_CASE("edit distance equals the recursive definition on all short strings") {
  auto s = all_strings(6);
  CHECK(s.size() == 1093);
  std::size_t checked = 0;
  for (const auto& a : s)
    for (const auto& b : s) {
      if (edit_distance(a, b) != brute_distance(a, b)) {
        FAIL("mismatch");
      }
      ++checked;
    }
  CHECK(checked == 1093 * 1093);
}

TEST_CASE("evaluate aggregates and reports") {
  auto corpus = small_corpus();
  auto empty = evaluate(corpus, [](const Utterance&) { return std::u32string(); });
  REQUIRE(empty.languages.size() == 6);
  for (const auto& l : empty.languages) CHECK(l.cer == 1.0);
  CHECK(empty.mean_a == 1.0);
  CHECK(empty.mean_b == 1.0);

  auto perfect = evaluate(corpus, [](const Utterance& u) { return *u.transcript; });
  CHECK(perfect.mean_all == 0.0);

  // Micro within a language: edits over reference characters.
  auto drop_first = [](const Utterance& u) { return u.transcript->substr(1); };
  auto rep = evaluate(corpus, drop_first);
  for (const auto& l : rep.languages) {
    CHECK(l.edits == l.utterances);
    CHECK(l.cer == doctest::Approx(double(l.utterances) / double(l.ref_chars)));
    if (l.group == Group::B) {
      CHECK(l.ugr_grapheme == 1.0);
      CHECK(l.ugr_byte < 1.0);
    } else {
      CHECK(l.ugr_grapheme == 0.0);
    }
  }
  double a = 0;
  for (const auto& l : rep.languages)
    if (l.group == Group::A) a += l.cer;
  CHECK(rep.mean_a == doctest::Approx(a / 3).epsilon(1e-15));

  // Deterministic.
  auto again = evaluate(corpus, drop_first);
  CHECK(again.mean_all == rep.mean_all);

  // Whitespace counting is configurable.
  auto spaces = [](const Utterance& u) {
    std::u32string s;
    for (char32_t c : *u.transcript)
      if (c != kSpace) s.push_back(c);
    return s;
  };
  CHECK(evaluate(corpus, spaces, {false}).mean_all == 0.0);
}

TEST_CASE("languages without test utterances are omitted with a warning") {
  auto corpus = small_corpus();
  const int drop = corpus.languages.ids(Group::B).front();
  std::erase_if(corpus.utterances, [&](const Utterance& u) { return u.split == Split::test && u.lang_id == drop; });
  auto rep = evaluate(corpus, [](const Utterance&) { return std::u32string(); });
  CHECK(rep.languages.size() == 5);
  REQUIRE(rep.warnings.size() == 1);
  CHECK(rep.warnings[0].find(corpus.languages.get(drop).name) != std::string::npos);
}

TEST_CASE("report CSV round trip and self-consistency") {
  auto corpus = small_corpus();
  auto rep = evaluate(corpus, [](const Utterance& u) { return u.transcript->substr(0, 1); });
  rep.preset = "unit";
  rep.seed = 9;
  rep.step = 12;
  auto path = std::filesystem::temp_directory_path() / "zsasr_test_report.csv";
  write_report_csv(path, rep);
  auto back = read_report_csv(path);
  std::filesystem::remove(path);
  CHECK(back.preset == "unit");
  CHECK(back.seed == 9);
  CHECK(back.step == 12);
  REQUIRE(back.languages.size() == rep.languages.size());

  // Group means recomputed from the language rows.
  EvalReport re = back;
  fill_means(re);
  CHECK(re.mean_a == doctest::Approx(back.mean_a).epsilon(1e-6));
  CHECK(re.mean_b == doctest::Approx(back.mean_b).epsilon(1e-6));
  CHECK(re.mean_all == doctest::Approx(back.mean_all).epsilon(1e-6));
  for (const auto& l : back.languages)
    CHECK(l.cer == doctest::Approx(double(l.edits) / double(l.ref_chars)).epsilon(1e-6));
  CHECK(format_report(rep).find("mean A") != std::string::npos);
}
