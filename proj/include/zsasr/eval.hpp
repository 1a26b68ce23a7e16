#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "zsasr/model.hpp"

namespace zsasr {

// Unit-cost Levenshtein distance at codepoint level.
std::size_t edit_distance(std::u32string_view ref, std::u32string_view hyp);
// edit_distance / |ref|; throws on an empty reference.
double cer(std::u32string_view ref, std::u32string_view hyp);

struct EvalOptions {
  bool count_spaces = true;
};

struct LanguageScore {
  int lang_id = 0;
  std::string name;
  Group group = Group::A;
  std::size_t utterances = 0;
  std::size_t ref_chars = 0;
  std::size_t edits = 0;
  double cer = 0.0;  // edits / ref_chars
  double ugr_grapheme = 0.0;
  double ugr_byte = 0.0;
};

struct EvalReport {
  std::string preset;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::vector<LanguageScore> languages;
  double mean_a = 0.0, mean_b = 0.0, mean_all = 0.0;  // unweighted over languages
  std::vector<std::string> warnings;
};

// Unseen grapheme ratio of every Group B language against all Group A
// languages (0 for Group A rows).
void fill_ugr(EvalReport& rep, const LanguageRegistry& langs);
void fill_means(EvalReport& rep);

using Transcriber = std::function<std::u32string(const Utterance&)>;
EvalReport evaluate(const Corpus& corpus, const Transcriber& transcribe, const EvalOptions& opt = {});
EvalReport evaluate(const Model& model, const Corpus& corpus, const EvalOptions& opt = {});

// CSV: one row per language then one per group mean.
void write_report_csv(const std::filesystem::path& path, const EvalReport& rep);
EvalReport read_report_csv(const std::filesystem::path& path);
std::string format_report(const EvalReport& rep);

}  // namespace zsasr
