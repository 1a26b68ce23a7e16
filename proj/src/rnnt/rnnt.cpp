#include "zsasr/rnnt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace zsasr {

namespace o = zsasr::ops;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double lse2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

void check_targets(const Lattice& lat, const TokenSeq& y) {
  if (y.size() != lat.U) {
    throw std::invalid_argument("rnnt: " + std::to_string(y.size()) + " targets for lattice with U=" +
                                std::to_string(lat.U));
  }
  for (Token k : y) {
    if (k >= lat.classes || k == lat.blank) throw std::out_of_range("rnnt: target id " + std::to_string(k));
  }
}

}  // namespace

Lattice make_lattice(Tensor log_probs, std::size_t T, std::size_t U, Token blank) {
  if (T == 0) throw std::invalid_argument("rnnt lattice needs T >= 1");
  if (log_probs.dim() != 2 || log_probs.rows() != T * (U + 1)) {
    throw ShapeError("rnnt lattice: expected " + std::to_string(T * (U + 1)) + " rows, got " +
                     shape_str(log_probs.shape()));
  }
  if (blank >= log_probs.cols()) throw std::out_of_range("rnnt lattice: blank id outside classes");
  for (double v : log_probs.data()) {
    if (std::isnan(v)) throw std::domain_error("rnnt lattice contains NaN");
  }
  return {T, U, log_probs.cols(), blank, std::move(log_probs)};
}

double max_normalization_error(const Lattice& lat) {
  double worst = 0.0;
  auto d = lat.log_probs.data();
  for (std::size_t r = 0; r < lat.T * (lat.U + 1); ++r) {
    double s = kNegInf;
    for (std::size_t k = 0; k < lat.classes; ++k) s = lse2(s, d[r * lat.classes + k]);
    worst = std::max(worst, std::abs(s));
  }
  return worst;
}

Tensor rnnt_loss(const Lattice& lat, const TokenSeq& y) {
  check_targets(lat, y);
  const std::size_t T = lat.T, U = lat.U, C = lat.classes;
  auto lp = lat.log_probs.data();
  auto blank = [&](std::size_t t, std::size_t u) { return lp[lat.row(t, u) * C + lat.blank]; };
  auto emit = [&](std::size_t t, std::size_t u) { return lp[lat.row(t, u) * C + y[u]]; };

  std::vector<double> alpha(T * (U + 1), kNegInf), beta(T * (U + 1), kNegInf);
  alpha[0] = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t u = 0; u <= U; ++u) {
      if (t == 0 && u == 0) continue;
      double a = kNegInf;
      if (t > 0) a = alpha[lat.row(t - 1, u)] + blank(t - 1, u);
      if (u > 0) a = lse2(a, alpha[lat.row(t, u - 1)] + emit(t, u - 1));
      alpha[lat.row(t, u)] = a;
    }
  }
  const double log_p = alpha[lat.row(T - 1, U)] + blank(T - 1, U);

  for (std::size_t t = T; t-- > 0;) {
    for (std::size_t u = U + 1; u-- > 0;) {
      double b = kNegInf;
      if (t == T - 1 && u == U) {
        b = blank(t, u);
      } else {
        if (t + 1 < T) b = beta[lat.row(t + 1, u)] + blank(t, u);
        if (u < U) b = lse2(b, beta[lat.row(t, u + 1)] + emit(t, u));
      }
      beta[lat.row(t, u)] = b;
    }
  }

  // d(-log P)/d lp for the two arcs leaving each node.
  std::vector<double> g(T * (U + 1) * C, 0.0);
  if (std::isfinite(log_p)) {
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t u = 0; u <= U; ++u) {
        const double a = alpha[lat.row(t, u)];
        const double next_blank = (t + 1 < T) ? beta[lat.row(t + 1, u)] : (u == U ? 0.0 : kNegInf);
        g[lat.row(t, u) * C + lat.blank] = -std::exp(a + blank(t, u) + next_blank - log_p);
        if (u < U) g[lat.row(t, u) * C + y[u]] = -std::exp(a + emit(t, u) + beta[lat.row(t, u + 1)] - log_p);
      }
    }
  }
  return Tensor::make_result({1}, {-log_p}, {lat.log_probs}, [g = std::move(g)](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& pg = p.grad_buffer();
    const double s = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) pg[i] += s * g[i];
  });
}

Alignment viterbi_alignment(const Lattice& lat, const TokenSeq& y) {
  check_targets(lat, y);
  const std::size_t T = lat.T, U = lat.U, C = lat.classes;
  auto lp = lat.log_probs.data();
  auto blank = [&](std::size_t t, std::size_t u) { return lp[lat.row(t, u) * C + lat.blank]; };
  auto emit = [&](std::size_t t, std::size_t u) { return lp[lat.row(t, u) * C + y[u]]; };

  // best[t,u]: max log-probability of finishing from node (t,u). Tracing
  // forward from the origin lets ties prefer the blank arc in path order.
  std::vector<double> best(T * (U + 1), kNegInf);
  for (std::size_t t = T; t-- > 0;) {
    for (std::size_t u = U + 1; u-- > 0;) {
      double v = kNegInf;
      if (t == T - 1 && u == U) {
        v = blank(t, u);
      } else {
        if (t + 1 < T) v = best[lat.row(t + 1, u)] + blank(t, u);
        if (u < U) v = std::max(v, best[lat.row(t, u + 1)] + emit(t, u));
      }
      best[lat.row(t, u)] = v;
    }
  }

  Alignment al;
  al.log_prob = best[0];
  al.emit_frames.assign(U, 0);
  std::size_t t = 0, u = 0;
  while (!(t == T - 1 && u == U)) {
    const double vb = t + 1 < T ? best[lat.row(t + 1, u)] + blank(t, u) : kNegInf;
    const double ve = u < U ? best[lat.row(t, u + 1)] + emit(t, u) : kNegInf;
    if (u == U || (t + 1 < T && vb >= ve)) {
      al.path.push_back(true);
      ++t;
    } else {
      al.path.push_back(false);
      al.emit_frames[u++] = t;
    }
  }
  al.path.push_back(true);  // terminal blank
  al.durations.assign(U, 0);
  for (std::size_t i = 0; i < U; ++i) {
    const std::size_t start = i == 0 ? 0 : al.emit_frames[i];
    const std::size_t end = i + 1 < U ? al.emit_frames[i + 1] : T;
    al.durations[i] = end - start;
  }
  return al;
}

RnntDecoder::RnntDecoder(ParamStore& ps, const std::string& name, const Vocab& vocab, const DecoderConfig& c,
                         const std::vector<int>& lang_ids)
    : cfg(c), vocab_size(vocab.size()) {
  const std::size_t H = c.hidden_dim, E = c.embed_dim;
  embed = ps.add_normal(name + "/embed", {vocab_size + 1, E}, 1.0);
  lstm_w = ps.add_normal(name + "/lstm_w", {E + H, 4 * H}, 1.0 / std::sqrt(double(E + H)));
  lstm_b = ps.add_zeros(name + "/lstm_b", {4 * H});
  for (std::size_t j = H; j < 2 * H; ++j) lstm_b.mutable_data()[j] = 1.0;  // forget gate
  enc_proj = nn::Linear(ps, name + "/joint_enc", c.encoder_dim, c.joint_dim);
  pred_proj = nn::Linear(ps, name + "/joint_pred", H, c.joint_dim, false);
  out = nn::Linear(ps, name + "/joint_out", c.joint_dim, vocab_size + 1);
  if (c.lang_embed) {
    for (int id : lang_ids) {
      lang_vectors[id] = ps.add_zeros(name + "/lang" + std::to_string(id), {c.encoder_dim});
    }
  }
}

LstmState RnntDecoder::initial_state() const {
  return {Tensor::zeros({1, cfg.hidden_dim}), Tensor::zeros({1, cfg.hidden_dim})};
}

LstmState RnntDecoder::step(const LstmState& s, Token input) const {
  const std::size_t H = cfg.hidden_dim;
  const std::size_t idx[1] = {input};
  auto x = o::gather_rows(embed, idx);
  auto gates = o::add_row(o::matmul(o::concat_cols({x, s.h}), lstm_w), lstm_b);
  auto i = o::sigmoid(o::slice_cols(gates, 0, H));
  auto f = o::sigmoid(o::slice_cols(gates, H, H));
  auto g = o::tanh(o::slice_cols(gates, 2 * H, H));
  auto og = o::sigmoid(o::slice_cols(gates, 3 * H, H));
  auto c = o::add(o::mul(f, s.c), o::mul(i, g));
  return {o::mul(og, o::tanh(c)), c};
}

Tensor RnntDecoder::predict(const TokenSeq& y) const {
  std::vector<Tensor> rows;
  rows.reserve(y.size() + 1);
  auto s = step(initial_state(), blank());
  rows.push_back(s.h);
  for (Token k : y) {
    if (k >= vocab_size) throw std::out_of_range("prediction net: token id " + std::to_string(k));
    s = step(s, k);
    rows.push_back(s.h);
  }
  return o::concat_rows(rows);
}

Tensor RnntDecoder::joint(const Tensor& enc, const Tensor& pred) const {
  return out(o::tanh(o::outer_add(enc_proj(enc), pred_proj(pred))));
}

Tensor RnntDecoder::apply_lang_embed(const Tensor& enc, int lang_id) const {
  if (!cfg.lang_embed) return enc;
  auto it = lang_vectors.find(lang_id);
  if (it == lang_vectors.end()) throw std::out_of_range("decoder: unknown lang_id " + std::to_string(lang_id));
  return o::add_row(enc, it->second);
}

Lattice RnntDecoder::lattice(const Tensor& enc, const TokenSeq& y) const {
  return make_lattice(o::log_softmax_rows(joint(enc, predict(y))), enc.rows(), y.size(), blank());
}

Tensor joint_logits(const RnntDecoder& dec, const Tensor& enc_t, const Tensor& pred_u) {
  return dec.joint(enc_t, pred_u);
}

Tensor apply_decoder_lang_embed(const RnntDecoder& dec, const Tensor& encoder_out, int lang_id) {
  return dec.apply_lang_embed(encoder_out, lang_id);
}

TokenSeq greedy_decode(const Tensor& encoder_out, const RnntDecoder& dec, int lang_id,
                       std::size_t max_symbols_per_frame) {
  NoGradGuard ng;
  auto enc = dec.enc_proj(dec.apply_lang_embed(encoder_out, lang_id));
  TokenSeq hyp;
  auto state = dec.step(dec.initial_state(), dec.blank());
  auto pred = dec.pred_proj(state.h);
  for (std::size_t t = 0; t < enc.rows(); ++t) {
    auto e = o::slice_rows(enc, t, 1);
    for (std::size_t n = 0; n < max_symbols_per_frame; ++n) {
      auto logits = dec.out(o::tanh(o::add(e, pred)));
      auto d = logits.data();
      const auto best = std::size_t(std::max_element(d.begin(), d.end()) - d.begin());
      if (best == dec.blank()) break;
      hyp.push_back(Token(best));
      state = dec.step(state, Token(best));
      pred = dec.pred_proj(state.h);
    }
  }
  return hyp;
}

DecoderLoss decoder_loss(const Tensor& shared_out, const RnntDecoder& dec, int lang_id, const TokenSeq& y,
                         bool want_alignment) {
  auto lat = dec.lattice(dec.apply_lang_embed(shared_out, lang_id), y);
  DecoderLoss r{rnnt_loss(lat, y), std::nullopt};
  if (want_alignment) r.alignment = viterbi_alignment(lat, y);
  return r;
}

DualLosses dual_decoder_losses(const Tensor& shared_out, const RnntDecoder* aux, const TokenSeq& aux_targets,
                               const RnntDecoder& grapheme, const TokenSeq& grapheme_targets, int lang_id,
                               bool want_alignment, bool align_with_aux) {
  DualLosses r{std::nullopt,
               decoder_loss(shared_out, grapheme, lang_id, grapheme_targets, want_alignment && !(aux && align_with_aux))};
  if (aux) r.aux = decoder_loss(shared_out, *aux, lang_id, aux_targets, want_alignment && align_with_aux);
  return r;
}

}  // namespace zsasr
