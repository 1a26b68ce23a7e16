#include "zsasr/encoders.hpp"

#include <stdexcept>

namespace zsasr {

namespace o = zsasr::ops;

void validate(const ConformerConfig& c) {
  if (c.model_dim == 0 || c.n_heads == 0 || c.model_dim % c.n_heads != 0) {
    throw std::invalid_argument("model_dim " + std::to_string(c.model_dim) + " must be a positive multiple of n_heads " +
                                std::to_string(c.n_heads));
  }
  if (c.conv_kernel % 2 == 0) throw std::invalid_argument("conv_kernel must be odd");
  if (c.subsample == 0) throw std::invalid_argument("subsample must be >= 1");
  if (c.feature_dim == 0 || c.adapter_bottleneck == 0) throw std::invalid_argument("zero-width encoder dimension");
}

ConformerBlock::ConformerBlock(ParamStore& ps, const std::string& name, const ConformerConfig& c)
    : ff1(ps, name + "/ff1", c.model_dim, c.model_dim * c.ff_multiplier),
      ff2(ps, name + "/ff2", c.model_dim, c.model_dim * c.ff_multiplier),
      attn_norm(ps, name + "/attn_ln", c.model_dim),
      out_norm(ps, name + "/out_ln", c.model_dim),
      attn(ps, name + "/attn", c.model_dim, c.n_heads),
      conv(ps, name + "/conv", c.model_dim, c.conv_kernel) {}

Tensor ConformerBlock::operator()(const Tensor& x) const {
  if (x.rows() == 0) throw ShapeError("conformer block: empty sequence");
  auto h = o::add(x, o::scale(ff1(x), 0.5));
  h = o::add(h, attn(attn_norm(h)));
  h = o::add(h, conv(h));
  h = o::add(h, o::scale(ff2(h), 0.5));
  return out_norm(h);
}

Tensor conformer_block(const Tensor& x, const ConformerBlock& block) { return block(x); }

std::size_t subsampled_length(std::size_t frames, std::size_t s) { return (frames + s - 1) / s; }

SpeechEncoder::SpeechEncoder(ParamStore& ps, const std::string& name, const ConformerConfig& c) : cfg(c) {
  validate(c);
  input = nn::Linear(ps, name + "/input", c.feature_dim * c.subsample, c.model_dim);
  positions = ps.add_normal(name + "/positions", {c.max_positions, c.model_dim}, 0.02);
  for (std::size_t i = 0; i < c.n_speech_layers; ++i) {
    layers.emplace_back(ps, name + "/block" + std::to_string(i), c);
  }
}

Tensor SpeechEncoder::embed(const Tensor& features) const {
  if (features.cols() != cfg.feature_dim) {
    throw ShapeError("speech features have " + std::to_string(features.cols()) + " dims, encoder expects " +
                     std::to_string(cfg.feature_dim));
  }
  Tensor x = features;
  if (cfg.subsample > 1) {
    // Stack s consecutive frames into one row, zero-padding the tail.
    const std::size_t T = features.rows(), F = cfg.feature_dim, s = cfg.subsample;
    const std::size_t Tp = subsampled_length(T, s);
    std::vector<Tensor> slots;
    for (std::size_t j = 0; j < s; ++j) {
      std::vector<std::size_t> idx;
      std::vector<bool> pad(Tp, false);
      for (std::size_t t = 0; t < Tp; ++t) {
        std::size_t src = t * s + j;
        if (src >= T) {
          pad[t] = true;
          src = T - 1;
        }
        idx.push_back(src);
      }
      slots.push_back(o::replace_rows(o::gather_rows(features, idx), pad, Tensor::zeros({F})));
    }
    x = o::concat_cols(slots);
  }
  return nn::add_positions(input(x), positions);
}

Tensor SpeechEncoder::blocks(const Tensor& latent_in) const {
  Tensor h = latent_in;
  for (const auto& b : layers) h = b(h);
  return h;
}

AdapterBank::AdapterBank(ParamStore& ps, const std::string& name, const ConformerConfig& c,
                         const std::vector<int>& lang_ids) {
  for (int id : lang_ids) {
    auto& v = per_lang[id];
    for (std::size_t i = 0; i < c.n_shared_layers; ++i) {
      const std::string base = name + "/lang" + std::to_string(id) + "/layer" + std::to_string(i);
      v.push_back({nn::Linear(ps, base + "/down", c.model_dim, c.adapter_bottleneck),
                   nn::Linear(ps, base + "/up", c.adapter_bottleneck, c.model_dim, true, true)});
    }
  }
}

const Adapter& AdapterBank::at(int lang_id, std::size_t layer) const {
  auto it = per_lang.find(lang_id);
  if (it == per_lang.end()) throw std::out_of_range("no adapters for lang_id " + std::to_string(lang_id));
  return it->second.at(layer);
}

SharedEncoder::SharedEncoder(ParamStore& ps, const std::string& name, const ConformerConfig& c) {
  validate(c);
  for (std::size_t i = 0; i < c.n_shared_layers; ++i) {
    layers.emplace_back(ps, name + "/block" + std::to_string(i), c);
  }
}

Tensor SharedEncoder::operator()(const Tensor& latents, int lang_id, const AdapterBank* adapters) const {
  if (adapters && !adapters->has(lang_id)) {
    throw std::out_of_range("shared encoder: unknown lang_id " + std::to_string(lang_id));
  }
  Tensor h = latents;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](h);
    if (adapters) {
      const auto& a = adapters->at(lang_id, i);
      h = o::add(h, a.up(o::relu(a.down(h))));
    }
  }
  return h;
}

}  // namespace zsasr
