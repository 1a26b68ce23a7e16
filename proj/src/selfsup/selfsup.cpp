#include "zsasr/selfsup.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace zsasr {

namespace o = zsasr::ops;

std::vector<double> Quantizer::project(std::span<const double> frame) const {
  if (frame.size() != feature_dim) throw ShapeError("quantizer: frame width mismatch");
  std::vector<double> z(code_dim, 0.0);
  for (std::size_t f = 0; f < feature_dim; ++f) {
    const double x = (frame[f] - mean[f]) * inv_std[f];
    for (std::size_t j = 0; j < code_dim; ++j) z[j] += x * projection[f * code_dim + j];
  }
  double n = 0.0;
  for (double v : z) n += v * v;
  n = std::sqrt(n);
  if (n > 0) for (double& v : z) v /= n;
  return z;
}

std::size_t Quantizer::nearest(std::span<const double> z) const {
  // Unit vectors: nearest in L2 is the largest dot product.
  std::size_t best = 0;
  double best_dot = -INFINITY;
  for (std::size_t c = 0; c < codes; ++c) {
    double dot = 0.0;
    for (std::size_t j = 0; j < code_dim; ++j) dot += z[j] * codebook[c * code_dim + j];
    if (dot > best_dot) {
      best_dot = dot;
      best = c;
    }
  }
  return best;
}

Quantizer make_quantizer(std::size_t F, std::size_t Dq, std::size_t C, std::uint64_t seed, std::vector<double> mean,
                         std::vector<double> stddev) {
  if (mean.size() != F || stddev.size() != F) throw ShapeError("quantizer: normalization width mismatch");
  if (C == 0 || Dq == 0) throw std::invalid_argument("quantizer: zero codes or code dim");
  Quantizer q;
  q.feature_dim = F;
  q.code_dim = Dq;
  q.codes = C;
  q.mean = std::move(mean);
  for (double s : stddev) q.inv_std.push_back(s > 1e-12 ? 1.0 / s : 1.0);
  Rng rp(seed, "quantizer/projection", 0), rc(seed, "quantizer/codebook", 0);
  q.projection.resize(F * Dq);
  for (auto& v : q.projection) v = rp.normal(0.0, 1.0 / std::sqrt(double(F)));
  q.codebook.resize(C * Dq);
  for (std::size_t c = 0; c < C; ++c) {
    double n = 0.0;
    for (std::size_t j = 0; j < Dq; ++j) {
      q.codebook[c * Dq + j] = rc.normal(0.0, 1.0);
      n += q.codebook[c * Dq + j] * q.codebook[c * Dq + j];
    }
    n = std::sqrt(n);
    for (std::size_t j = 0; j < Dq; ++j) q.codebook[c * Dq + j] /= n;
  }
  return q;
}

std::pair<std::vector<double>, std::vector<double>> feature_statistics(const std::vector<const Utterance*>& utts) {
  if (utts.empty()) throw std::invalid_argument("feature_statistics: no utterances");
  const std::size_t F = utts.front()->features.dim;
  std::vector<double> sum(F, 0.0), sq(F, 0.0);
  double n = 0;
  for (const auto* u : utts) {
    for (std::size_t t = 0; t < u->features.frames; ++t) {
      for (std::size_t f = 0; f < F; ++f) {
        const double x = u->features.data[t * F + f];
        sum[f] += x;
        sq[f] += x * x;
      }
      n += 1;
    }
  }
  std::vector<double> mean(F), sd(F);
  for (std::size_t f = 0; f < F; ++f) {
    mean[f] = sum[f] / n;
    sd[f] = std::sqrt(std::max(0.0, sq[f] / n - mean[f] * mean[f]));
  }
  return {mean, sd};
}

std::vector<std::size_t> quantize(const Quantizer& q, const Tensor& features) {
  if (features.cols() != q.feature_dim) throw ShapeError("quantize: feature width mismatch");
  std::vector<std::size_t> ids;
  ids.reserve(features.rows());
  auto d = features.data();
  for (std::size_t t = 0; t < features.rows(); ++t) {
    ids.push_back(q.nearest(q.project(d.subspan(t * q.feature_dim, q.feature_dim))));
  }
  return ids;
}

double codebook_usage(const Quantizer& q, const std::vector<const Utterance*>& utts) {
  std::set<std::size_t> used;
  for (const auto* u : utts) {
    for (std::size_t t = 0; t < u->features.frames; ++t) {
      std::span<const double> frame(u->features.data.data() + t * q.feature_dim, q.feature_dim);
      used.insert(q.nearest(q.project(frame)));
    }
  }
  return double(used.size()) / double(q.codes);
}

std::vector<std::size_t> SpeechMask::indices() const {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < masked.size(); ++t)
    if (masked[t]) out.push_back(t);
  return out;
}

double SpeechMask::fraction() const {
  if (masked.empty()) return 0.0;
  return double(std::count(masked.begin(), masked.end(), true)) / double(masked.size());
}

SpeechMask sample_speech_mask(std::size_t T, double mask_prob, std::size_t span, Rng& rng) {
  if (span == 0) throw std::invalid_argument("mask_speech: span must be >= 1");
  SpeechMask m{std::vector<bool>(T, false)};
  if (mask_prob <= 0.0) return m;
  const auto cap = std::size_t(std::floor(0.8 * double(T)));
  if (cap == 0) return m;
  const std::size_t w = std::min(span, cap);
  auto n = std::max<std::size_t>(1, std::size_t(std::ceil(mask_prob * double(T) / double(w))));
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto start = std::size_t(rng.uniform_int(0, std::int64_t(T - w)));
    std::size_t add = 0;
    for (std::size_t t = start; t < start + w; ++t) add += !m.masked[t];
    if (count + add > cap) break;
    for (std::size_t t = start; t < start + w; ++t) m.masked[t] = true;
    count += add;
  }
  return m;
}

std::pair<Tensor, SpeechMask> mask_speech(const Tensor& latent_in, double mask_prob, std::size_t span,
                                          const Tensor& mask_vector, Rng& rng) {
  auto m = sample_speech_mask(latent_in.rows(), mask_prob, span, rng);
  if (m.fraction() == 0.0) return {latent_in, m};
  return {o::replace_rows(latent_in, m.masked, mask_vector), m};
}

Tensor contrastive_loss(const Tensor& pred, const Tensor& targets, std::size_t n_distractors, double tau, Rng& rng) {
  if (pred.shape() != targets.shape()) throw ShapeError("contrastive_loss: prediction/target shapes differ");
  const std::size_t M = pred.rows();
  if (M < 2 || n_distractors == 0) throw std::invalid_argument("contrastive_loss: needs at least one distractor");
  const std::size_t K = std::min(n_distractors, M - 1);
  // Candidate mask: the positive plus K distinct other targets per row.
  std::vector<double> bias(M * M, -1e9);
  for (std::size_t i = 0; i < M; ++i) {
    bias[i * M + i] = 0.0;
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < M; ++j)
      if (j != i) others.push_back(j);
    rng.shuffle(others.begin(), others.end());
    for (std::size_t k = 0; k < K; ++k) bias[i * M + others[k]] = 0.0;
  }
  auto sim = o::matmul(o::l2_normalize_rows(pred), o::transpose(o::l2_normalize_rows(targets)));
  auto logp = o::log_softmax_rows(o::add(o::scale(sim, 1.0 / tau), Tensor::matrix(M, M, std::move(bias))));
  std::vector<std::size_t> diag(M);
  for (std::size_t i = 0; i < M; ++i) diag[i] = i;
  return o::scale(o::sum(o::pick(logp, diag)), -1.0 / double(M));
}

Tensor mlm_loss(const Tensor& logits, const std::vector<std::size_t>& codes, std::size_t* empty_counter) {
  if (codes.empty()) {
    if (empty_counter) ++*empty_counter;
    return Tensor::scalar(0.0);
  }
  if (logits.rows() != codes.size()) throw ShapeError("mlm_loss: code count mismatch");
  return o::scale(o::sum(o::pick(o::log_softmax_rows(logits), codes)), -1.0 / double(codes.size()));
}

SelfSupHeads::SelfSupHeads(ParamStore& ps, const std::string& name, std::size_t D, std::size_t C)
    : mask_vector(ps.add_normal(name + "/mask_vector", {D}, 0.1)),
      contrastive_proj(ps, name + "/contrastive_proj", D, D),
      mlm_classifier(ps, name + "/mlm", D, C) {}

}  // namespace zsasr
