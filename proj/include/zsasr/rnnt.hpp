#pragma once

#include <map>
#include <optional>
#include <vector>

#include "zsasr/language.hpp"
#include "zsasr/layers.hpp"

namespace zsasr {

// Transducer lattice. Row t*(U+1)+u of `log_probs` is the log-distribution
// over |V|+1 classes at frame t after u emitted targets.
struct Lattice {
  std::size_t T = 0, U = 0, classes = 0;
  Token blank = 0;
  Tensor log_probs;

  std::size_t row(std::size_t t, std::size_t u) const { return t * (U + 1) + u; }
};

Lattice make_lattice(Tensor log_probs, std::size_t T, std::size_t U, Token blank);
// Largest |logsumexp(row)| over all lattice rows.
double max_normalization_error(const Lattice& lat);

// -log sum over monotonic alignments. Differentiable w.r.t. log_probs.
Tensor rnnt_loss(const Lattice& lat, const TokenSeq& targets);

struct Alignment {
  std::vector<std::size_t> durations;    // one per target, sum = T
  std::vector<std::size_t> emit_frames;  // frame of each emission
  std::vector<bool> path;                // true = blank step, length T+U
  double log_prob = 0.0;
};

Alignment viterbi_alignment(const Lattice& lat, const TokenSeq& targets);

struct DecoderConfig {
  std::size_t encoder_dim = 64;
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t joint_dim = 64;
  bool lang_embed = true;
  std::size_t max_symbols_per_frame = 4;
};

struct LstmState {
  Tensor h, c;
};

struct RnntDecoder {
  RnntDecoder() = default;
  RnntDecoder(ParamStore& ps, const std::string& name, const Vocab& vocab, const DecoderConfig& cfg,
              const std::vector<int>& lang_ids);

  Token blank() const { return Token(vocab_size); }
  std::size_t classes() const { return vocab_size + 1; }

  // (U+1) x H prediction states for [<start>, y_1 .. y_U].
  Tensor predict(const TokenSeq& targets) const;
  LstmState initial_state() const;
  // One recurrent step; returns the new state and the 1 x H output.
  LstmState step(const LstmState& s, Token input) const;
  // enc: T x D, pred: S x H -> (T*S) x classes logits.
  Tensor joint(const Tensor& enc, const Tensor& pred) const;
  Tensor apply_lang_embed(const Tensor& enc, int lang_id) const;
  Lattice lattice(const Tensor& enc, const TokenSeq& targets) const;

  DecoderConfig cfg;
  std::size_t vocab_size = 0;
  Tensor embed, lstm_w, lstm_b;
  nn::Linear enc_proj, pred_proj, out;
  std::map<int, Tensor> lang_vectors;
};

Tensor joint_logits(const RnntDecoder& dec, const Tensor& enc_t, const Tensor& pred_u);
Tensor apply_decoder_lang_embed(const RnntDecoder& dec, const Tensor& encoder_out, int lang_id);

// Greedy transducer search; enc is assumed to already carry the language
// embedding when the caller wants it (see decode()).
TokenSeq greedy_decode(const Tensor& encoder_out, const RnntDecoder& dec, int lang_id,
                       std::size_t max_symbols_per_frame);

struct DecoderLoss {
  Tensor loss;
  std::optional<Alignment> alignment;
};

DecoderLoss decoder_loss(const Tensor& shared_out, const RnntDecoder& dec, int lang_id, const TokenSeq& targets,
                         bool want_alignment);

struct DualLosses {
  std::optional<DecoderLoss> aux;  // byte or phoneme decoder
  DecoderLoss grapheme;
};

// `aux` may be null for grapheme-only configurations; `align_with_aux`
// chooses which lattice provides the Viterbi alignment.
DualLosses dual_decoder_losses(const Tensor& shared_out, const RnntDecoder* aux, const TokenSeq& aux_targets,
                               const RnntDecoder& grapheme, const TokenSeq& grapheme_targets, int lang_id,
                               bool want_alignment, bool align_with_aux);

}  // namespace zsasr
