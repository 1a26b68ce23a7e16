#pragma once

#include <map>
#include <vector>

#include "zsasr/layers.hpp"

namespace zsasr {

struct ConformerConfig {
  std::size_t feature_dim = 16;
  std::size_t model_dim = 64;
  std::size_t n_heads = 4;
  std::size_t ff_multiplier = 4;
  std::size_t conv_kernel = 7;
  std::size_t n_speech_layers = 2;
  std::size_t n_shared_layers = 6;
  std::size_t adapter_bottleneck = 8;
  std::size_t subsample = 1;
  std::size_t max_positions = 256;
};

void validate(const ConformerConfig& cfg);

struct ConformerBlock {
  ConformerBlock() = default;
  ConformerBlock(ParamStore& ps, const std::string& name, const ConformerConfig& cfg);
  Tensor operator()(const Tensor& x) const;

  nn::FeedForward ff1, ff2;
  nn::LayerNorm attn_norm, out_norm;
  nn::SelfAttention attn;
  nn::ConvModule conv;
};

Tensor conformer_block(const Tensor& x, const ConformerBlock& block);

struct SpeechEncoder {
  SpeechEncoder() = default;
  SpeechEncoder(ParamStore& ps, const std::string& name, const ConformerConfig& cfg);

  // Frame stacking by `subsample`, input projection and positions: T x F -> T' x D.
  Tensor embed(const Tensor& features) const;
  Tensor blocks(const Tensor& latent_in) const;
  Tensor operator()(const Tensor& features) const { return blocks(embed(features)); }

  ConformerConfig cfg;
  nn::Linear input;
  Tensor positions;
  std::vector<ConformerBlock> layers;
};

std::size_t subsampled_length(std::size_t frames, std::size_t s);

struct Adapter {
  nn::Linear down, up;
};

// One adapter per shared block per language. Up-projections start at zero.
struct AdapterBank {
  AdapterBank() = default;
  AdapterBank(ParamStore& ps, const std::string& name, const ConformerConfig& cfg, const std::vector<int>& lang_ids);
  const Adapter& at(int lang_id, std::size_t layer) const;
  bool has(int lang_id) const { return per_lang.count(lang_id) > 0; }

  std::map<int, std::vector<Adapter>> per_lang;
};

struct SharedEncoder {
  SharedEncoder() = default;
  SharedEncoder(ParamStore& ps, const std::string& name, const ConformerConfig& cfg);

  // `adapters` may be null to run the plain stack.
  Tensor operator()(const Tensor& latents, int lang_id, const AdapterBank* adapters) const;

  std::vector<ConformerBlock> layers;
};

}  // namespace zsasr
