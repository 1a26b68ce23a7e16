#include "zsasr/model.hpp"

#include <algorithm>
#include <set>

namespace zsasr {

Model::Model(const ModelConfig& cfg, const Corpus& corpus, std::uint64_t seed)
    : cfg_(cfg), langs_(corpus.languages), pause_id_(corpus.pause_id()), params_(seed) {
  std::set<Token> chars{Token(kSpace)};
  for (const auto& l : langs_.all())
    for (char32_t c : l.script) chars.insert(Token(c));
  graphemes_ = Vocab(TextUnit::grapheme, {chars.begin(), chars.end()});
  if (cfg_.text_unit == TextUnit::byte) aux_vocab_ = Vocab::bytes();
  if (cfg_.text_unit == TextUnit::phoneme) aux_vocab_ = Vocab::phonemes(corpus.config.n_phonemes);

  cfg_.encoder.feature_dim = corpus.config.feature_dim;
  cfg_.decoder.encoder_dim = cfg_.encoder.model_dim;
  cfg_.decoder.lang_embed = cfg_.decoder_lang_embed;
  cfg_.text.model_dim = cfg_.encoder.model_dim;
  cfg_.text.lang_embed = cfg_.text_lang_embed;
  cfg_.text.vocab_size = cfg_.text_unit == TextUnit::grapheme ? graphemes_.size() : aux_vocab_.size();

  std::vector<int> ids;
  for (const auto& l : langs_.all()) ids.push_back(l.lang_id);

  speech = SpeechEncoder(params_, "speech", cfg_.encoder);
  shared = SharedEncoder(params_, "shared", cfg_.encoder);
  if (cfg_.adapters) adapters = AdapterBank(params_, "adapters", cfg_.encoder, ids);
  text = TextEncoder(params_, "text", cfg_.text, ids);
  grapheme_dec = RnntDecoder(params_, "dec_grapheme", graphemes_, cfg_.decoder, ids);
  if (cfg_.text_unit != TextUnit::grapheme) {
    aux_dec.emplace(params_, "dec_" + to_string(cfg_.text_unit), aux_vocab_, cfg_.decoder, ids);
  }
  heads = SelfSupHeads(params_, "selfsup", cfg_.encoder.model_dim, cfg_.codes);

  std::vector<const Utterance*> train;
  for (const auto& u : corpus.utterances)
    if (u.split == Split::train) train.push_back(&u);
  auto [mean, sd] = feature_statistics(train);
  quantizer = make_quantizer(corpus.config.feature_dim, cfg_.code_dim, cfg_.codes, seed, mean, sd);
}

TokenSeq Model::grapheme_targets(const std::u32string& s) const {
  TokenSeq out;
  out.reserve(s.size());
  for (char32_t c : s) out.push_back(Token(graphemes_.id(Token(c))));
  return out;
}

TokenSeq Model::aux_targets(const std::u32string& s, int lang_id) const {
  if (!has_aux()) return {};
  TokenSeq units = tokenize(s, langs_.get(lang_id), cfg_.text_unit, pause_id_);
  TokenSeq out;
  out.reserve(units.size());
  for (Token u : units) out.push_back(Token(aux_vocab_.id(u)));
  return out;
}

std::vector<std::size_t> Model::text_tokens(const std::u32string& s, int lang_id) const {
  TokenSeq t = cfg_.text_unit == TextUnit::grapheme ? grapheme_targets(s) : aux_targets(s, lang_id);
  return {t.begin(), t.end()};
}

Tensor Model::features(const Utterance& u) const {
  return Tensor::matrix(u.features.frames, u.features.dim, u.features.data);
}

std::pair<Tensor, Tensor> Model::encode(const Tensor& feats, int lang_id) const {
  auto enc = speech(feats);
  return {enc, shared(enc, lang_id, adapter_bank())};
}

std::u32string Model::transcribe(const Utterance& u) const {
  NoGradGuard ng;
  auto [enc, out] = encode(features(u), u.lang_id);
  auto hyp = greedy_decode(out, grapheme_dec, u.lang_id, cfg_.decoder.max_symbols_per_frame);
  std::u32string s;
  for (Token t : hyp) s.push_back(char32_t(graphemes_.symbol(t)));
  return s;
}

}  // namespace zsasr
