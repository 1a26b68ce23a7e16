#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>

#include "zsasr/batch.hpp"
#include "zsasr/corpus.hpp"
#include "zsasr/language.hpp"
#include "zsasr/rng.hpp"

using namespace zsasr;

namespace {

CorpusConfig small_config() {
  auto c = CorpusConfig::default_preset();
  c.paired_per_language = 10;
  c.untranscribed_per_language = 10;
  c.text_in_domain_per_language = 20;
  c.text_out_domain_per_language = 60;
  c.test_per_language = 5;
  return c;
}

std::set<Token> toks(std::initializer_list<char32_t> cs) {
  std::set<Token> s;
  for (auto c : cs) s.insert(Token(c));
  return s;
}

}  // namespace

TEST_CASE("byte_encode examples") {
  CHECK(byte_encode(U"a") == TokenSeq{0x61});
  CHECK(byte_encode(U"अ") == TokenSeq{0xE0, 0xA4, 0x85});
  CHECK(byte_encode(U"").empty());
  CHECK(byte_decode(byte_encode(U"xக \U0001F600")) == U"xக \U0001F600");
  CHECK_THROWS(byte_decode(TokenSeq{0xE0, 0xA4}));
  CHECK_THROWS(utf8_decode(std::string("\xC0\x80", 2)));
}

TEST_CASE("vocab layout") {
  auto b = Vocab::bytes();
  CHECK(b.size() == 256);
  CHECK(b.blank_id() == 256);
  CHECK(b.output_dim() == 257);
  auto p = Vocab::phonemes(20);
  CHECK(p.size() == 21);
  CHECK_THROWS(b.id(300));
}

TEST_CASE("grapheme_vocab examples") {
  auto inv = grapheme_vocab({{0, {U"ab", U"ba"}}});
  CHECK(inv.per_language.at(0) == toks({U'a', U'b'}));

  auto two = grapheme_vocab({{0, {U"ab"}}, {1, {U"bc"}}});
  CHECK(two.per_language.at(0) == toks({U'a', U'b'}));
  CHECK(two.per_language.at(1) == toks({U'b', U'c'}));
  // Union plus the shared space symbol, ids dense and sorted.
  CHECK(two.global.symbols() == std::vector<Token>{U' ', U'a', U'b', U'c'});
  CHECK(two.global.blank_id() == 4);

  CHECK_THROWS(grapheme_vocab({}));
}

TEST_CASE("grapheme_vocab of a generated corpus equals each generating script") {
  auto c = gen_synthetic_corpus(small_config(), 3);
  std::map<int, std::vector<std::u32string>> texts;
  for (const auto& t : c.text) texts[t.lang_id].push_back(t.text);
  auto inv = grapheme_vocab(texts);
  for (const auto& l : c.languages.all()) {
    CHECK(inv.per_language.at(l.lang_id) == std::set<Token>(l.script.begin(), l.script.end()));
  }
}

TEST_CASE("unseen grapheme ratio examples") {
  CHECK(unseen_grapheme_ratio(toks({U'a', U'b'}), {toks({U'a'}), toks({U'b', U'z'})}) == 0.0);
  CHECK(unseen_grapheme_ratio(toks({U'a', U'b'}), {toks({U'x'}), toks({U'y'})}) == 1.0);
  CHECK(unseen_grapheme_ratio(toks({U'a', U'b', U'c'}), {toks({U'a', U'b'})}) == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS(unseen_grapheme_ratio(std::set<Token>{}, {toks({U'a'})}));
}

TEST_CASE("unseen grapheme ratio is bounded and monotone in Group A") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::set<Token> target;
    while (target.empty())
      for (int i = 0; i < 6; ++i)
        if (rng.bernoulli(0.5)) target.insert(Token(i));
    std::vector<std::set<Token>> a;
    double prev = 1.0;
    for (int k = 0; k < 4; ++k) {
      std::set<Token> s;
      for (int i = 0; i < 8; ++i)
        if (rng.bernoulli(0.3)) s.insert(Token(i));
      a.push_back(s);
      const double g = unseen_grapheme_ratio(target, a);
      CHECK(g >= 0.0);
      CHECK(g <= 1.0);
      CHECK(g <= prev);
      prev = g;
    }
  }
}

TEST_CASE("default preset: Group B scripts unseen as graphemes, shared as bytes") {
  auto c = gen_synthetic_corpus(small_config(), 1);
  std::vector<LanguageSpec> a;
  for (int id : c.languages.ids(Group::A)) a.push_back(c.languages.get(id));
  REQUIRE(c.languages.ids(Group::B).size() == 3);
  for (int id : c.languages.ids(Group::B)) {
    const auto& l = c.languages.get(id);
    CHECK(unseen_grapheme_ratio(l, a, TextUnit::grapheme) == 1.0);
    CHECK(unseen_grapheme_ratio(l, a, TextUnit::byte) < 1.0);
  }
}

TEST_CASE("corpus generation") {
  SUBCASE("overlapping scripts are rejected when disjointness is required") {
    auto cfg = small_config();
    cfg.languages[1].block_start = cfg.languages[0].block_start;
    CHECK_THROWS_AS(gen_synthetic_corpus(cfg, 1), std::invalid_argument);
  }
  SUBCASE("two languages in the Latin block share bytes") {
    CorpusConfig cfg = small_config();
    cfg.require_disjoint_scripts = false;
    cfg.slot_offsets.clear();
    for (std::uint32_t i = 1; i <= 26; ++i) cfg.slot_offsets.push_back(i);
    cfg.script_size = 8;
    cfg.languages = {{"lat1", Group::A, 0x60}, {"lat2", Group::B, 0x60}};
    auto c = gen_synthetic_corpus(cfg, 2);
    const auto& l1 = c.languages.get(0);
    const auto& l2 = c.languages.get(1);
    auto b1 = unit_inventory(l1, TextUnit::byte);
    auto b2 = unit_inventory(l2, TextUnit::byte);
    std::size_t shared = 0;
    for (auto t : b2) shared += b1.count(t);
    CHECK(shared > 0);
    CHECK(l1.script != l2.script);
  }
  SUBCASE("noiseless single-frame features are the phoneme vectors") {
    auto cfg = small_config();
    cfg.noise_sigma = 0.0;
    cfg.min_duration = cfg.max_duration = 1;
    cfg.languages.resize(1);
    auto c = gen_synthetic_corpus(cfg, 4);
    for (const auto& u : c.utterances) {
      const auto& tr = c.traces.at(u.utt_id);
      REQUIRE(u.features.frames == tr.phonemes.size());
      for (std::size_t t = 0; t < u.features.frames; ++t)
        for (std::size_t d = 0; d < u.features.dim; ++d)
          CHECK(u.features.data[t * u.features.dim + d] ==
                c.phoneme_vectors[std::size_t(tr.phonemes[t])][d]);
    }
  }
  SUBCASE("structure of the pools") {
    auto c = gen_synthetic_corpus(small_config(), 5);
    for (const auto& u : c.utterances) {
      const auto& l = c.languages.get(u.lang_id);
      CHECK(u.features.frames >= 1);
      CHECK(u.features.dim == 16);
      if (u.split == Split::test) CHECK(u.transcript.has_value());
      if (l.group == Group::B && u.split == Split::train) CHECK_FALSE(u.transcript.has_value());
      if (u.transcript) {
        for (char32_t ch : *u.transcript) {
          CHECK((ch == kSpace || std::binary_search(l.script.begin(), l.script.end(), ch)));
        }
      }
    }
    for (const auto& l : c.languages.all()) {
      validate_language(l);
      // Lexicon is injective.
      std::set<std::vector<int>> prons;
      for (const auto& [g, p] : l.lexicon) prons.insert(p);
      CHECK(prons.size() == l.lexicon.size());
    }
  }
  SUBCASE("same seed, same corpus") {
    auto a = gen_synthetic_corpus(small_config(), 9);
    auto b = gen_synthetic_corpus(small_config(), 9);
    REQUIRE(a.utterances.size() == b.utterances.size());
    for (std::size_t i = 0; i < a.utterances.size(); ++i) {
      CHECK(a.utterances[i].features.data == b.utterances[i].features.data);
    }
  }
}

TEST_CASE("byte round trip on every generated text") {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto c = gen_synthetic_corpus(small_config(), seed);
    auto check = [](const std::u32string& s) {
      auto b = byte_encode(s);
      for (auto t : b) CHECK(t < 256);
      CHECK(byte_decode(b) == s);
    };
    for (const auto& t : c.text) check(t.text);
    for (const auto& u : c.utterances)
      if (u.transcript) check(*u.transcript);
    for (const auto& [id, t] : c.withheld_transcripts) check(t);
  }
}

TEST_CASE("to_phonemes") {
  LanguageSpec l;
  l.name = "toy";
  l.script = {U'x', U'y'};
  l.lexicon = {{U'x', {3}}, {U'y', {1, 4}}};
  CHECK(to_phonemes(U"xy", l, 20) == std::vector<int>{3, 1, 4});
  CHECK(to_phonemes(U"", l, 20).empty());
  CHECK(to_phonemes(U"x y", l, 20) == std::vector<int>{3, 20, 1, 4});
  try {
    to_phonemes(U"xz", l, 20);
    FAIL("expected throw");
  } catch (const std::out_of_range& e) {
    CHECK(std::string(e.what()).find("U+7A") != std::string::npos);
  }

  auto c = gen_synthetic_corpus(small_config(), 6);
  for (const auto& u : c.utterances) {
    const auto& tr = c.traces.at(u.utt_id);
    CHECK(to_phonemes(tr.text, c.languages.get(u.lang_id), c.pause_id()) == tr.phonemes);
  }
}

TEST_CASE("compose_batch") {
  auto c = gen_synthetic_corpus(small_config(), 7);
  auto pools = build_pools(c, {});
  SUBCASE("sizes") {
    auto b = compose_batch(pools, c.languages, {4, 16, 2}, 3, 11);
    CHECK(b.untranscribed.size() == 4);
    CHECK(b.unspoken_text.size() == 16);
    CHECK(b.transcribed.size() == 2);
    auto s = compose_batch(pools, c.languages, {4, 0, 2}, 3, 11);
    CHECK(s.unspoken_text.empty());
  }
  SUBCASE("determinism") {
    auto a = compose_batch(pools, c.languages, {4, 16, 2}, 8, 11);
    auto b = compose_batch(pools, c.languages, {4, 16, 2}, 8, 11);
    for (std::size_t i = 0; i < 4; ++i) CHECK(a.untranscribed[i] == b.untranscribed[i]);
    for (std::size_t i = 0; i < 16; ++i) CHECK(a.unspoken_text[i].text == b.unspoken_text[i].text);
    for (std::size_t i = 0; i < 2; ++i) CHECK(a.transcribed[i].utt == b.transcribed[i].utt);
    auto other = compose_batch(pools, c.languages, {4, 16, 2}, 9, 11);
    bool differs = false;
    for (std::size_t i = 0; i < 16; ++i) differs |= other.unspoken_text[i].text != a.unspoken_text[i].text;
    CHECK(differs);
  }
  SUBCASE("paired stream only from Group A") {
    for (const auto& p : pools.paired) CHECK(c.languages.get(p.utt->lang_id).group == Group::A);
    for (std::uint64_t step = 0; step < 50; ++step) {
      auto b = compose_batch(pools, c.languages, {1, 1, 8}, step, 3);
      for (const auto& p : b.transcribed) CHECK(c.languages.get(p.utt->lang_id).group == Group::A);
    }
  }
  SUBCASE("oracle pools include Group B pairs") {
    auto op = build_pools(c, {true, true, true});
    std::size_t b_pairs = 0;
    for (const auto& p : op.paired) b_pairs += c.languages.get(p.utt->lang_id).group == Group::B;
    CHECK(b_pairs == 3 * 10);
  }
  SUBCASE("empty requested stream is rejected by name") {
    Pools empty = pools;
    empty.text.clear();
    try {
      compose_batch(empty, c.languages, {1, 1, 1}, 0, 0);
      FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("unspoken text") != std::string::npos);
    }
    CHECK_NOTHROW(compose_batch(empty, c.languages, {1, 0, 1}, 0, 0));
  }
  SUBCASE("in-domain toggle") {
    auto no_in = build_pools(c, {false, true, false});
    auto only_in = build_pools(c, {true, false, false});
    CHECK(no_in.text.size() == 6 * 60);
    CHECK(only_in.text.size() == 6 * 20);
  }
}

TEST_CASE("corpus files round trip") {
  auto c = gen_synthetic_corpus(small_config(), 8);
  const auto dir = std::filesystem::temp_directory_path() / "zsasr_corpus_rt";
  std::filesystem::remove_all(dir);
  write_corpus(dir, c, 8);
  auto r = read_corpus(dir);
  REQUIRE(r.utterances.size() == c.utterances.size());
  for (std::size_t i = 0; i < c.utterances.size(); ++i) {
    const auto& a = c.utterances[i];
    const auto& b = r.utterances[i];
    CHECK(a.utt_id == b.utt_id);
    CHECK(a.lang_id == b.lang_id);
    CHECK(a.split == b.split);
    CHECK(a.transcript == b.transcript);
    CHECK(a.features.frames == b.features.frames);
    CHECK(a.features.data == b.features.data);
  }
  REQUIRE(r.text.size() == c.text.size());
  for (std::size_t i = 0; i < c.text.size(); ++i) {
    CHECK(r.text[i].text == c.text[i].text);
    CHECK(r.text[i].in_domain == c.text[i].in_domain);
  }
  CHECK(r.withheld_transcripts == c.withheld_transcripts);
  CHECK(r.phoneme_vectors == c.phoneme_vectors);
  for (const auto& l : c.languages.all()) {
    const auto& m = r.languages.get(l.lang_id);
    CHECK(m.name == l.name);
    CHECK(m.group == l.group);
    CHECK(m.script == l.script);
    CHECK(m.lexicon == l.lexicon);
  }
  std::filesystem::remove_all(dir);
}
