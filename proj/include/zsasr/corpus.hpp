#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "zsasr/language.hpp"

namespace zsasr {

enum class Split { train, test };
std::string to_string(Split s);
Split parse_split(const std::string& s);

struct FeatureMatrix {
  std::size_t frames = 0;
  std::size_t dim = 0;
  std::vector<double> data;  // row-major frames x dim
};

struct Utterance {
  std::string utt_id;
  FeatureMatrix features;
  std::optional<std::u32string> transcript;
  int lang_id = 0;
  Split split = Split::train;
};

// Generator-side record of how an utterance was synthesized; never visible
// to training code paths.
struct SynthesisTrace {
  std::u32string text;
  std::vector<int> phonemes;
  std::vector<int> durations;  // frames per phoneme
};

struct TextSentence {
  std::u32string text;
  int lang_id = 0;
  bool in_domain = false;
};

struct LanguageConfig {
  std::string name;
  Group group = Group::A;
  char32_t block_start = 0;  // first code point of the script's Unicode block
};

struct CorpusConfig {
  int n_phonemes = 20;
  std::size_t feature_dim = 16;
  double noise_sigma = 0.3;
  int min_duration = 1;
  int max_duration = 3;

  // Pronunciation chart shared by block offset across scripts, mirroring the
  // parallel layout of the Indic Unicode blocks.
  std::vector<std::uint32_t> slot_offsets;  // empty: default consonant slots
  std::size_t n_slots = 16;
  std::size_t script_size = 12;
  double two_phoneme_prob = 0.3;
  double drift = 0.2;  // fraction of a script's graphemes whose sound is shuffled

  std::size_t words_per_language = 40;
  int min_word_len = 1;
  int max_word_len = 3;
  int min_words = 1;
  int max_words = 3;

  std::size_t paired_per_language = 120;
  std::size_t untranscribed_per_language = 120;
  std::size_t text_in_domain_per_language = 200;
  std::size_t text_out_domain_per_language = 200;
  std::size_t test_per_language = 30;

  bool require_disjoint_scripts = true;
  std::vector<LanguageConfig> languages;

  // 3 Group A + 3 Group B Indic scripts; B blocks never appear in A.
  static CorpusConfig default_preset();
};

struct Corpus {
  CorpusConfig config;
  LanguageRegistry languages;
  std::vector<std::vector<double>> phoneme_vectors;  // (n_phonemes + 1) x feature_dim, last = pause
  std::vector<Utterance> utterances;
  std::vector<TextSentence> text;
  // Transcripts of Group B training speech, held back from every pool except
  // an explicitly requested supervised oracle.
  std::map<std::string, std::u32string> withheld_transcripts;
  std::map<std::string, SynthesisTrace> traces;

  int pause_id() const { return config.n_phonemes; }
  const Utterance& utterance(const std::string& utt_id) const;
};

Corpus gen_synthetic_corpus(const CorpusConfig& cfg, std::uint64_t seed);

// Renders a phoneme sequence as features (also used by the generator).
FeatureMatrix synthesize(const std::vector<std::vector<double>>& phoneme_vectors,
                         const std::vector<int>& phonemes, const std::vector<int>& durations,
                         double noise_sigma, std::uint64_t seed, std::string_view key);

// Directory layout: languages.json, manifest.jsonl, features.bin, text.jsonl,
// withheld.jsonl, corpus.json (config, seed and phoneme vectors).
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus, std::uint64_t seed);
Corpus read_corpus(const std::filesystem::path& dir);

void write_language_registry(const std::filesystem::path& path, const LanguageRegistry& reg);
LanguageRegistry read_language_registry(const std::filesystem::path& path);

}  // namespace zsasr
