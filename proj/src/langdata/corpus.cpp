#include "zsasr/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include "json.hpp"
#include "zsasr/rng.hpp"

namespace zsasr {

using nlohmann::json;

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split: " + s);
}

CorpusConfig CorpusConfig::default_preset() {
  CorpusConfig c;
  c.languages = {
      {"deva", Group::A, 0x0900}, {"beng", Group::A, 0x0980}, {"guru", Group::A, 0x0A00},
      {"gujr", Group::B, 0x0A80}, {"orya", Group::B, 0x0B00}, {"taml", Group::B, 0x0B80},
  };
  return c;
}

const Utterance& Corpus::utterance(const std::string& utt_id) const {
  for (const auto& u : utterances)
    if (u.utt_id == utt_id) return u;
  throw std::out_of_range("unknown utterance " + utt_id);
}

FeatureMatrix synthesize(const std::vector<std::vector<double>>& phoneme_vectors,
                         const std::vector<int>& phonemes, const std::vector<int>& durations,
                         double noise_sigma, std::uint64_t seed, std::string_view key) {
  if (phonemes.size() != durations.size()) throw std::invalid_argument("one duration per phoneme required");
  FeatureMatrix fm;
  fm.dim = phoneme_vectors.empty() ? 0 : phoneme_vectors[0].size();
  Rng rng(seed, key);
  for (std::size_t i = 0; i < phonemes.size(); ++i) {
    const auto& base = phoneme_vectors.at(std::size_t(phonemes[i]));
    for (int d = 0; d < durations[i]; ++d) {
      for (double b : base) {
        const double v = noise_sigma > 0 ? b + rng.normal(0.0, noise_sigma) : b;
        // Stored features must survive the float32 blob format exactly.
        fm.data.push_back(double(float(v)));
      }
      ++fm.frames;
    }
  }
  return fm;
}

namespace {

std::vector<std::uint32_t> default_slots(std::size_t n) {
  // Consonant rows of the Indic blocks start at offset 0x15.
  if (n > 37) throw std::invalid_argument("at most 37 default slots");
  std::vector<std::uint32_t> s(n);
  std::iota(s.begin(), s.end(), 0x15u);
  return s;
}

std::vector<std::vector<int>> make_chart(std::size_t n_slots, int n_phonemes, double two_prob, Rng& rng) {
  std::set<std::vector<int>> used;
  std::vector<std::vector<int>> chart;
  while (chart.size() < n_slots) {
    std::vector<int> p{int(rng.uniform_int(0, n_phonemes - 1))};
    if (rng.bernoulli(two_prob)) p.push_back(int(rng.uniform_int(0, n_phonemes - 1)));
    if (used.insert(p).second) chart.push_back(p);
  }
  return chart;
}

std::u32string make_word(const std::vector<char32_t>& script, int len, Rng& rng) {
  std::u32string w;
  for (int i = 0; i < len; ++i) w.push_back(script[std::size_t(rng.uniform_int(0, std::int64_t(script.size()) - 1))]);
  return w;
}

}  // namespace

Corpus gen_synthetic_corpus(const CorpusConfig& cfg, std::uint64_t seed) {
  if (cfg.languages.empty()) throw std::invalid_argument("corpus config declares no languages");
  if (cfg.min_duration < 1 || cfg.max_duration < cfg.min_duration) throw std::invalid_argument("bad duration range");
  if (cfg.min_words < 1 || cfg.max_words < cfg.min_words) throw std::invalid_argument("bad sentence length range");
  if (cfg.min_word_len < 1 || cfg.max_word_len < cfg.min_word_len) throw std::invalid_argument("bad word length range");

  Corpus c;
  c.config = cfg;
  const auto slots = cfg.slot_offsets.empty() ? default_slots(cfg.n_slots) : cfg.slot_offsets;
  if (cfg.script_size == 0 || cfg.script_size > slots.size()) {
    throw std::invalid_argument("script_size must be in [1, number of slots]");
  }

  Rng base_rng(seed, "corpus/phoneme-vectors");
  c.phoneme_vectors.assign(std::size_t(cfg.n_phonemes) + 1, std::vector<double>(cfg.feature_dim));
  for (auto& v : c.phoneme_vectors)
    for (auto& x : v) x = double(float(base_rng.normal()));

  Rng chart_rng(seed, "corpus/chart");
  const auto chart = make_chart(slots.size(), cfg.n_phonemes, cfg.two_phoneme_prob, chart_rng);

  std::map<char32_t, std::string> owner;
  for (std::size_t li = 0; li < cfg.languages.size(); ++li) {
    const auto& lc = cfg.languages[li];
    Rng rng(seed, "corpus/script/" + lc.name);
    std::vector<std::size_t> pick(slots.size());
    std::iota(pick.begin(), pick.end(), 0);
    rng.shuffle(pick.begin(), pick.end());
    pick.resize(cfg.script_size);
    std::sort(pick.begin(), pick.end());

    LanguageSpec spec;
    spec.lang_id = int(li);
    spec.name = lc.name;
    spec.group = lc.group;
    std::vector<std::vector<int>> prons;
    for (auto s : pick) {
      const char32_t cp = lc.block_start + slots[s];
      if (cp == kSpace) throw std::invalid_argument("script of " + lc.name + " would contain the space");
      if (cfg.require_disjoint_scripts) {
        auto [it, fresh] = owner.emplace(cp, lc.name);
        if (!fresh) {
          throw std::invalid_argument("scripts of " + it->second + " and " + lc.name +
                                      " overlap but disjoint scripts were requested");
        }
      }
      spec.script.push_back(cp);
      prons.push_back(chart[s]);
    }
    // Sound drift: rotate the pronunciations of a random subset.
    const auto n_drift = std::size_t(cfg.drift * double(cfg.script_size) + 0.5);
    if (n_drift >= 2) {
      std::vector<std::size_t> idx(cfg.script_size);
      std::iota(idx.begin(), idx.end(), 0);
      rng.shuffle(idx.begin(), idx.end());
      idx.resize(n_drift);
      const auto first = prons[idx[0]];
      for (std::size_t k = 0; k + 1 < n_drift; ++k) prons[idx[k]] = prons[idx[k + 1]];
      prons[idx[n_drift - 1]] = first;
    }
    std::vector<std::size_t> order(spec.script.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return spec.script[a] < spec.script[b]; });
    std::vector<char32_t> sorted;
    for (auto o : order) {
      sorted.push_back(spec.script[o]);
      spec.lexicon[spec.script[o]] = prons[o];
    }
    spec.script = sorted;
    c.languages.add(spec);
  }

  auto make_sentence = [&](const std::vector<std::u32string>& words, Rng& rng) {
    const auto k = rng.uniform_int(cfg.min_words, cfg.max_words);
    std::u32string s;
    for (std::int64_t i = 0; i < k; ++i) {
      if (i) s.push_back(kSpace);
      s += words[std::size_t(rng.uniform_int(0, std::int64_t(words.size()) - 1))];
    }
    return s;
  };

  for (const auto& lang : c.languages.all()) {
    Rng wrng(seed, "corpus/words/" + lang.name);
    std::set<std::u32string> seen;
    std::vector<std::u32string> words;
    std::size_t attempts = 0;
    while (words.size() < cfg.words_per_language && attempts++ < cfg.words_per_language * 100) {
      auto w = make_word(lang.script, int(wrng.uniform_int(cfg.min_word_len, cfg.max_word_len)), wrng);
      if (seen.insert(w).second) words.push_back(w);
    }

    auto emit_speech = [&](const std::string& kind, std::size_t n, Split split, bool transcribed,
                           bool withhold) {
      Rng srng(seed, "corpus/sent/" + lang.name + "/" + kind);
      for (std::size_t i = 0; i < n; ++i) {
        SynthesisTrace tr;
        tr.text = make_sentence(words, srng);
        tr.phonemes = to_phonemes(tr.text, lang, c.pause_id());
        for (std::size_t p = 0; p < tr.phonemes.size(); ++p) {
          tr.durations.push_back(int(srng.uniform_int(cfg.min_duration, cfg.max_duration)));
        }
        Utterance u;
        char idx[24];
        std::snprintf(idx, sizeof idx, "%05zu", i);
        u.utt_id = lang.name + "-" + kind + "-" + idx;
        u.lang_id = lang.lang_id;
        u.split = split;
        u.features = synthesize(c.phoneme_vectors, tr.phonemes, tr.durations, cfg.noise_sigma,
                                seed, "corpus/noise/" + u.utt_id);
        if (transcribed) u.transcript = tr.text;
        if (withhold) c.withheld_transcripts[u.utt_id] = tr.text;
        c.traces[u.utt_id] = std::move(tr);
        c.utterances.push_back(std::move(u));
      }
    };
    const bool a = lang.group == Group::A;
    emit_speech("paired", cfg.paired_per_language, Split::train, a, !a);
    emit_speech("speech", cfg.untranscribed_per_language, Split::train, false, false);
    emit_speech("test", cfg.test_per_language, Split::test, true, false);

    Rng trng(seed, "corpus/text/" + lang.name);
    for (std::size_t i = 0; i < cfg.text_in_domain_per_language; ++i) {
      c.text.push_back({make_sentence(words, trng), lang.lang_id, true});
    }
    for (std::size_t i = 0; i < cfg.text_out_domain_per_language; ++i) {
      const auto k = trng.uniform_int(cfg.min_words, cfg.max_words);
      std::u32string s;
      for (std::int64_t w = 0; w < k; ++w) {
        if (w) s.push_back(kSpace);
        s += make_word(lang.script, int(trng.uniform_int(cfg.min_word_len, cfg.max_word_len)), trng);
      }
      c.text.push_back({s, lang.lang_id, false});
    }
  }
  return c;
}

// ---- serialization ----------------------------------------------------

namespace {

json language_json(const LanguageSpec& l) {
  json lex = json::object();
  for (const auto& [g, p] : l.lexicon) lex[std::to_string(std::uint32_t(g))] = p;
  std::vector<std::uint32_t> script(l.script.begin(), l.script.end());
  return {{"lang_id", l.lang_id}, {"name", l.name},          {"group", to_string(l.group)},
          {"script", script},     {"lexicon", lex},          {"text_unit", to_string(l.text_unit)}};
}

LanguageSpec language_from_json(const json& j) {
  LanguageSpec l;
  l.lang_id = j.at("lang_id").get<int>();
  l.name = j.at("name").get<std::string>();
  l.group = parse_group(j.at("group").get<std::string>());
  for (auto cp : j.at("script").get<std::vector<std::uint32_t>>()) l.script.push_back(char32_t(cp));
  for (const auto& [k, v] : j.at("lexicon").items()) {
    l.lexicon[char32_t(std::stoul(k))] = v.get<std::vector<int>>();
  }
  l.text_unit = parse_text_unit(j.at("text_unit").get<std::string>());
  return l;
}

json config_json(const CorpusConfig& c) {
  json langs = json::array();
  for (const auto& l : c.languages) {
    langs.push_back({{"name", l.name}, {"group", to_string(l.group)}, {"block_start", std::uint32_t(l.block_start)}});
  }
  return {{"n_phonemes", c.n_phonemes},
          {"feature_dim", c.feature_dim},
          {"noise_sigma", c.noise_sigma},
          {"min_duration", c.min_duration},
          {"max_duration", c.max_duration},
          {"slot_offsets", c.slot_offsets},
          {"n_slots", c.n_slots},
          {"script_size", c.script_size},
          {"two_phoneme_prob", c.two_phoneme_prob},
          {"drift", c.drift},
          {"words_per_language", c.words_per_language},
          {"min_word_len", c.min_word_len},
          {"max_word_len", c.max_word_len},
          {"min_words", c.min_words},
          {"max_words", c.max_words},
          {"paired_per_language", c.paired_per_language},
          {"untranscribed_per_language", c.untranscribed_per_language},
          {"text_in_domain_per_language", c.text_in_domain_per_language},
          {"text_out_domain_per_language", c.text_out_domain_per_language},
          {"test_per_language", c.test_per_language},
          {"require_disjoint_scripts", c.require_disjoint_scripts},
          {"languages", langs}};
}

CorpusConfig config_from_json(const json& j) {
  CorpusConfig c;
  c.n_phonemes = j.at("n_phonemes");
  c.feature_dim = j.at("feature_dim");
  c.noise_sigma = j.at("noise_sigma");
  c.min_duration = j.at("min_duration");
  c.max_duration = j.at("max_duration");
  c.slot_offsets = j.at("slot_offsets").get<std::vector<std::uint32_t>>();
  c.n_slots = j.at("n_slots");
  c.script_size = j.at("script_size");
  c.two_phoneme_prob = j.at("two_phoneme_prob");
  c.drift = j.at("drift");
  c.words_per_language = j.at("words_per_language");
  c.min_word_len = j.at("min_word_len");
  c.max_word_len = j.at("max_word_len");
  c.min_words = j.at("min_words");
  c.max_words = j.at("max_words");
  c.paired_per_language = j.at("paired_per_language");
  c.untranscribed_per_language = j.at("untranscribed_per_language");
  c.text_in_domain_per_language = j.at("text_in_domain_per_language");
  c.text_out_domain_per_language = j.at("text_out_domain_per_language");
  c.test_per_language = j.at("test_per_language");
  c.require_disjoint_scripts = j.at("require_disjoint_scripts");
  for (const auto& l : j.at("languages")) {
    c.languages.push_back({l.at("name"), parse_group(l.at("group")), char32_t(l.at("block_start").get<std::uint32_t>())});
  }
  return c;
}

std::ofstream open_out(const std::filesystem::path& p, bool binary = false) {
  std::ofstream os(p, binary ? std::ios::binary : std::ios::out);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  return os;
}

std::ifstream open_in(const std::filesystem::path& p, bool binary = false) {
  std::ifstream is(p, binary ? std::ios::binary : std::ios::in);
  if (!is) throw std::runtime_error("cannot read " + p.string());
  return is;
}

}  // namespace

void write_language_registry(const std::filesystem::path& path, const LanguageRegistry& reg) {
  json arr = json::array();
  for (const auto& l : reg.all()) arr.push_back(language_json(l));
  open_out(path) << arr.dump(1) << "\n";
}

LanguageRegistry read_language_registry(const std::filesystem::path& path) {
  auto is = open_in(path);
  json arr = json::parse(is);
  LanguageRegistry reg;
  for (const auto& j : arr) reg.add(language_from_json(j));
  return reg;
}

void write_corpus(const std::filesystem::path& dir, const Corpus& corpus, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  write_language_registry(dir / "languages.json", corpus.languages);

  json meta = {{"seed", seed}, {"config", config_json(corpus.config)}, {"phoneme_vectors", corpus.phoneme_vectors}};
  open_out(dir / "corpus.json") << meta.dump() << "\n";

  auto blob = open_out(dir / "features.bin", true);
  auto man = open_out(dir / "manifest.jsonl");
  std::uint64_t offset = 0;
  for (const auto& u : corpus.utterances) {
    const std::uint32_t hdr[2] = {std::uint32_t(u.features.frames), std::uint32_t(u.features.dim)};
    blob.write(reinterpret_cast<const char*>(hdr), sizeof hdr);
    std::vector<float> f(u.features.data.begin(), u.features.data.end());
    blob.write(reinterpret_cast<const char*>(f.data()), std::streamsize(f.size() * sizeof(float)));
    const auto& lang = corpus.languages.get(u.lang_id);
    json rec = {{"utt_id", u.utt_id},
                {"lang", lang.name},
                {"group", to_string(lang.group)},
                {"split", to_string(u.split)},
                {"text", u.transcript ? json(utf8_encode(*u.transcript)) : json(nullptr)},
                {"features", "features.bin@" + std::to_string(offset)}};
    man << rec.dump() << "\n";
    offset += sizeof hdr + f.size() * sizeof(float);
  }

  auto tx = open_out(dir / "text.jsonl");
  for (const auto& t : corpus.text) {
    tx << json{{"lang", corpus.languages.get(t.lang_id).name}, {"text", utf8_encode(t.text)}, {"in_domain", t.in_domain}}.dump()
       << "\n";
  }
  auto wh = open_out(dir / "withheld.jsonl");
  for (const auto& [id, tr] : corpus.withheld_transcripts) {
    wh << json{{"utt_id", id}, {"text", utf8_encode(tr)}}.dump() << "\n";
  }
}

Corpus read_corpus(const std::filesystem::path& dir) {
  Corpus c;
  c.languages = read_language_registry(dir / "languages.json");
  {
    auto is = open_in(dir / "corpus.json");
    json meta = json::parse(is);
    c.config = config_from_json(meta.at("config"));
    c.phoneme_vectors = meta.at("phoneme_vectors").get<std::vector<std::vector<double>>>();
  }
  std::map<std::string, int> by_name;
  for (const auto& l : c.languages.all()) by_name[l.name] = l.lang_id;

  auto blob = open_in(dir / "features.bin", true);
  auto man = open_in(dir / "manifest.jsonl");
  std::string line;
  while (std::getline(man, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    Utterance u;
    u.utt_id = rec.at("utt_id");
    u.lang_id = by_name.at(rec.at("lang").get<std::string>());
    u.split = parse_split(rec.at("split"));
    if (!rec.at("text").is_null()) u.transcript = utf8_decode(rec.at("text").get<std::string>());
    const std::string ref = rec.at("features");
    const auto at = ref.find('@');
    if (at == std::string::npos) throw std::runtime_error("bad feature reference " + ref);
    blob.seekg(std::streamoff(std::stoull(ref.substr(at + 1))));
    std::uint32_t hdr[2];
    blob.read(reinterpret_cast<char*>(hdr), sizeof hdr);
    std::vector<float> f(std::size_t(hdr[0]) * hdr[1]);
    blob.read(reinterpret_cast<char*>(f.data()), std::streamsize(f.size() * sizeof(float)));
    if (!blob) throw std::runtime_error("truncated feature blob for " + u.utt_id);
    u.features.frames = hdr[0];
    u.features.dim = hdr[1];
    u.features.data.assign(f.begin(), f.end());
    c.utterances.push_back(std::move(u));
  }

  auto tx = open_in(dir / "text.jsonl");
  while (std::getline(tx, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    c.text.push_back({utf8_decode(rec.at("text")), by_name.at(rec.at("lang").get<std::string>()), rec.at("in_domain")});
  }
  auto wh = open_in(dir / "withheld.jsonl");
  while (std::getline(wh, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    c.withheld_transcripts[rec.at("utt_id")] = utf8_decode(rec.at("text"));
  }
  return c;
}

}  // namespace zsasr
