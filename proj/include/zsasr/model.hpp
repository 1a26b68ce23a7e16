#pragma once

#include <optional>

#include "zsasr/corpus.hpp"
#include "zsasr/encoders.hpp"
#include "zsasr/rnnt.hpp"
#include "zsasr/selfsup.hpp"
#include "zsasr/textpath.hpp"

namespace zsasr {

struct ModelConfig {
  ConformerConfig encoder;
  DecoderConfig decoder;
  TextEncoderConfig text;
  // Unit consumed by the text encoder; byte and phoneme also add a second
  // decoder over that unit which supplies the alignments.
  TextUnit text_unit = TextUnit::byte;
  bool adapters = true;
  bool decoder_lang_embed = true;
  bool text_lang_embed = true;
  std::size_t codes = 64;
  std::size_t code_dim = 16;
};

// All trainable modules for one configuration, registered in one store.
class Model {
 public:
  Model(const ModelConfig& cfg, const Corpus& corpus, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  const LanguageRegistry& languages() const { return langs_; }
  bool has_aux() const { return aux_dec.has_value(); }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  TokenSeq grapheme_targets(const std::u32string& text) const;
  TokenSeq aux_targets(const std::u32string& text, int lang_id) const;
  // Text-encoder input ids at the configured unit.
  std::vector<std::size_t> text_tokens(const std::u32string& text, int lang_id) const;

  Tensor features(const Utterance& u) const;
  const AdapterBank* adapter_bank() const { return cfg_.adapters ? &adapters : nullptr; }
  // Speech encoder output and shared encoder output for a whole utterance.
  std::pair<Tensor, Tensor> encode(const Tensor& features, int lang_id) const;
  std::u32string transcribe(const Utterance& u) const;

  const Vocab& grapheme_vocab() const { return graphemes_; }
  const Vocab& aux_vocab() const { return aux_vocab_; }
  int pause_id() const { return pause_id_; }

 private:
  ModelConfig cfg_;
  LanguageRegistry langs_;
  Vocab graphemes_, aux_vocab_;
  int pause_id_ = 0;
  ParamStore params_;

 public:
  SpeechEncoder speech;
  SharedEncoder shared;
  AdapterBank adapters;
  TextEncoder text;
  RnntDecoder grapheme_dec;
  std::optional<RnntDecoder> aux_dec;
  SelfSupHeads heads;
  Quantizer quantizer;
};

}  // namespace zsasr
