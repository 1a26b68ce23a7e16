#pragma once

#include <vector>

#include "zsasr/corpus.hpp"
#include "zsasr/layers.hpp"
#include "zsasr/rng.hpp"

namespace zsasr {

// Frozen random-projection quantizer over normalized input features.
struct Quantizer {
  std::size_t feature_dim = 0, code_dim = 0, codes = 0;
  std::vector<double> mean, inv_std;  // per feature dim
  std::vector<double> projection;     // feature_dim x code_dim
  std::vector<double> codebook;       // codes x code_dim, unit rows

  // Normalized, projected and unit-length image of one frame.
  std::vector<double> project(std::span<const double> frame) const;
  std::size_t nearest(std::span<const double> projected) const;
};

Quantizer make_quantizer(std::size_t feature_dim, std::size_t code_dim, std::size_t codes, std::uint64_t seed,
                         std::vector<double> mean, std::vector<double> stddev);
// Per-dimension mean and stddev over all frames of the given utterances.
std::pair<std::vector<double>, std::vector<double>> feature_statistics(const std::vector<const Utterance*>& utts);
std::vector<std::size_t> quantize(const Quantizer& q, const Tensor& features);
double codebook_usage(const Quantizer& q, const std::vector<const Utterance*>& utts);

struct SpeechMask {
  std::vector<bool> masked;  // per frame
  std::vector<std::size_t> indices() const;
  double fraction() const;
};

// Spans of `span` frames at ceil(mask_prob * T / span) random starts; at
// least one span when mask_prob > 0, never more than 80% of the frames
// (so sequences shorter than 2 frames are left unmasked).
SpeechMask sample_speech_mask(std::size_t T, double mask_prob, std::size_t span, Rng& rng);
std::pair<Tensor, SpeechMask> mask_speech(const Tensor& latent_in, double mask_prob, std::size_t span,
                                          const Tensor& mask_vector, Rng& rng);

// InfoNCE with cosine similarity. Row i of `predictions` is scored against
// its positive target i and up to n_distractors other targets.
Tensor contrastive_loss(const Tensor& predictions, const Tensor& targets, std::size_t n_distractors,
                        double temperature, Rng& rng);

// Cross-entropy of `logits` (M x C) against codes. With M = 0 returns 0 and
// bumps *empty_counter when given.
Tensor mlm_loss(const Tensor& logits, const std::vector<std::size_t>& codes, std::size_t* empty_counter = nullptr);

struct SelfSupHeads {
  SelfSupHeads() = default;
  SelfSupHeads(ParamStore& ps, const std::string& name, std::size_t model_dim, std::size_t codes);

  Tensor mask_vector;
  nn::Linear contrastive_proj, mlm_classifier;
};

}  // namespace zsasr
