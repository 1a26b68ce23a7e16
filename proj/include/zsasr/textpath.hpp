#pragma once

#include <map>
#include <optional>
#include <vector>

#include "zsasr/layers.hpp"
#include "zsasr/rng.hpp"

namespace zsasr {

struct TextEncoderConfig {
  std::size_t vocab_size = 256;  // input token ids [0, vocab_size)
  std::size_t embed_dim = 32;
  std::size_t n_conv_layers = 1;
  std::size_t conv_kernel = 5;
  std::size_t n_transformer_layers = 2;
  std::size_t n_heads = 4;
  std::size_t ff_multiplier = 2;
  bool lang_embed = true;
  std::size_t lang_embed_dim = 8;
  std::size_t model_dim = 64;  // refiner output, equals the shared encoder width
  std::size_t refiner_layers = 1;
  std::size_t refiner_heads = 4;
  std::size_t refiner_conv_kernel = 9;
  std::size_t lightweight_groups = 4;
  std::size_t duration_blocks = 2;
  std::size_t duration_kernel = 3;
  std::size_t max_positions = 512;

  std::size_t output_dim() const { return embed_dim + (lang_embed ? lang_embed_dim : 0); }
};

void validate(const TextEncoderConfig& cfg);

// How per-token durations are chosen before resampling.
enum class DurationMode { aligned, predicted, uniform, one, none };
const char* to_string(DurationMode m);
DurationMode parse_duration_mode(const std::string& s);

struct SpecMaskConfig {
  std::size_t time_masks = 1;
  std::size_t time_width = 2;
  std::size_t dim_masks = 1;
  std::size_t dim_width = 4;
};

struct SpecMask {
  std::vector<bool> time;  // masked frames
  std::vector<bool> dims;  // masked feature columns
  std::size_t masked_values() const;
};

struct AlignedTextRepr {
  Tensor refined;  // T x D before masking
  Tensor frames;   // T x D after masking
  std::vector<std::size_t> durations;  // per kept token
  std::vector<std::size_t> token_ids;  // kept tokens, in order
  int lang_id = 0;
  SpecMask mask;
  Tensor log_durations;  // U x 1 predictor head over all input tokens
};

struct TextEncoder {
  TextEncoder() = default;
  TextEncoder(ParamStore& ps, const std::string& name, const TextEncoderConfig& cfg,
              const std::vector<int>& lang_ids);

  TextEncoderConfig cfg;
  Tensor embed;
  std::vector<nn::Linear> convs;
  std::vector<nn::LayerNorm> conv_norms;
  Tensor positions;
  std::vector<nn::TransformerLayer> transformer;
  nn::LayerNorm extractor_norm;
  std::map<int, Tensor> lang_vectors;

  // Duration model.
  struct DurationBlock {
    nn::LayerNorm norm;
    nn::LightweightConv conv;
  };
  std::vector<DurationBlock> duration;
  nn::Linear duration_head;

  // Refiner.
  struct RefinerLayer {
    nn::LayerNorm attn_norm, conv_norm;
    nn::SelfAttention attn;
    nn::LightweightConv conv;
  };
  nn::Linear refiner_in;
  Tensor refiner_positions;
  std::vector<RefinerLayer> refiner;
  nn::LayerNorm refiner_out;
};

// U x output_dim embeddings.
Tensor embed_text(const TextEncoder& enc, const std::vector<std::size_t>& tokens, int lang_id);
// U x 1 log-durations; d = exp(head) is strictly positive.
Tensor predict_durations(const TextEncoder& enc, const Tensor& embeddings);
std::vector<std::size_t> integerize(std::span<const double> durations);
Tensor resample(const Tensor& embeddings, const std::vector<std::size_t>& durations);
Tensor refine(const TextEncoder& enc, const Tensor& frames);
std::pair<Tensor, SpecMask> mask_spec(const Tensor& frames, const SpecMaskConfig& cfg, Rng& rng);
// Weighted MSE over frames x dims. With `two_sided` false the speech side is
// a constant target.
Tensor consistency_loss(const Tensor& speech_latents, const Tensor& text_frames,
                        const std::vector<double>* frame_weights = nullptr, bool two_sided = false);
// Mean squared error between log(1 + d_hat) and log(1 + d).
Tensor duration_loss(const Tensor& log_durations, const std::vector<std::size_t>& targets);

struct TextForwardOptions {
  DurationMode mode = DurationMode::predicted;
  const std::vector<std::size_t>* durations = nullptr;  // aligned mode
  bool masking = true;
  SpecMaskConfig spec;
  std::size_t uniform_max = 4;
  bool detach_duration_input = true;
  std::size_t max_frames = 0;  // > 0: longer outputs throw std::length_error
};

AlignedTextRepr text_forward(const TextEncoder& enc, const std::vector<std::size_t>& tokens, int lang_id,
                             const TextForwardOptions& opt, Rng& rng);

}  // namespace zsasr
