#pragma once

#include <string>

#include "zsasr/ops.hpp"
#include "zsasr/params.hpp"

// Parameterized building blocks shared by the encoders, text branch and
// transducer. Each layer registers its tensors under `name/...`.
namespace zsasr::nn {

struct Linear {
  Linear() = default;
  Linear(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out, bool bias = true,
         bool zero_init = false);
  Tensor operator()(const Tensor& x) const;

  Tensor w, b;
  bool has_bias = true;
};

struct LayerNorm {
  LayerNorm() = default;
  LayerNorm(ParamStore& ps, const std::string& name, std::size_t dim);
  Tensor operator()(const Tensor& x) const { return ops::layer_norm(x, gain, bias); }

  Tensor gain, bias;
};

// Pre-norm position-wise feed-forward with swish.
struct FeedForward {
  FeedForward() = default;
  FeedForward(ParamStore& ps, const std::string& name, std::size_t dim, std::size_t hidden);
  Tensor operator()(const Tensor& x) const;

  LayerNorm norm;
  Linear up, down;
};

// Full-context multi-head self-attention (no normalization inside).
struct SelfAttention {
  SelfAttention() = default;
  SelfAttention(ParamStore& ps, const std::string& name, std::size_t dim, std::size_t heads);
  Tensor operator()(const Tensor& x) const;

  Linear q, k, v, out;
  std::size_t heads = 1;
};

// Depthwise convolution over time plus bias; odd kernel, same padding.
struct DepthwiseConv {
  DepthwiseConv() = default;
  DepthwiseConv(ParamStore& ps, const std::string& name, std::size_t dim, std::size_t kernel);
  Tensor operator()(const Tensor& x) const { return ops::depthwise_conv1d(x, w, b); }

  Tensor w, b;
};

// Lightweight convolution: depthwise filters softmax-normalized over the
// kernel, shared within channel groups.
struct LightweightConv {
  LightweightConv() = default;
  LightweightConv(ParamStore& ps, const std::string& name, std::size_t dim, std::size_t kernel,
                  std::size_t groups);
  Tensor operator()(const Tensor& x) const;

  Tensor logits;  // kernel x groups
  Tensor b;
  std::size_t dim = 0, groups = 1;
};

// Conformer convolution module: LN, pointwise to 2D, GLU, depthwise conv,
// LN, swish, pointwise back to D.
struct ConvModule {
  ConvModule() = default;
  ConvModule(ParamStore& ps, const std::string& name, std::size_t dim, std::size_t kernel);
  Tensor operator()(const Tensor& x) const;

  LayerNorm norm, mid_norm;
  Linear pointwise_in, pointwise_out;
  DepthwiseConv depthwise;
  std::size_t dim = 0;
};

// Pre-norm transformer layer (attention + feed-forward, both residual).
struct TransformerLayer {
  TransformerLayer() = default;
  TransformerLayer(ParamStore& ps, const std::string& name, std::size_t dim, std::size_t heads,
                   std::size_t ff_hidden);
  Tensor operator()(const Tensor& x) const;

  LayerNorm attn_norm;
  SelfAttention attn;
  FeedForward ff;
};

// Adds rows [0, T) of a learned T_max x D table.
Tensor add_positions(const Tensor& x, const Tensor& table);

}  // namespace zsasr::nn
