#include "zsasr/textpath.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace zsasr {

namespace o = zsasr::ops;

void validate(const TextEncoderConfig& c) {
  if (c.vocab_size == 0 || c.embed_dim == 0 || c.model_dim == 0) throw std::invalid_argument("text encoder: zero dim");
  if (c.conv_kernel % 2 == 0 || c.refiner_conv_kernel % 2 == 0 || c.duration_kernel % 2 == 0) {
    throw std::invalid_argument("text encoder kernels must be odd");
  }
  if (c.embed_dim % c.n_heads != 0) throw std::invalid_argument("text embed_dim not divisible by n_heads");
  if (c.model_dim % c.refiner_heads != 0) throw std::invalid_argument("model_dim not divisible by refiner_heads");
}

const char* to_string(DurationMode m) {
  switch (m) {
    case DurationMode::aligned: return "aligned";
    case DurationMode::predicted: return "learnt";
    case DurationMode::uniform: return "uniform";
    case DurationMode::one: return "one";
    case DurationMode::none: return "none";
  }
  return "?";
}

DurationMode parse_duration_mode(const std::string& s) {
  for (auto m : {DurationMode::aligned, DurationMode::predicted, DurationMode::uniform, DurationMode::one,
                 DurationMode::none}) {
    if (s == to_string(m)) return m;
  }
  if (s == "predicted") return DurationMode::predicted;
  throw std::invalid_argument("unknown duration mode '" + s + "' (aligned, learnt, uniform, one, none)");
}

std::size_t SpecMask::masked_values() const {
  const auto t = std::size_t(std::count(time.begin(), time.end(), true));
  const auto d = std::size_t(std::count(dims.begin(), dims.end(), true));
  return t * dims.size() + d * time.size() - t * d;
}

TextEncoder::TextEncoder(ParamStore& ps, const std::string& name, const TextEncoderConfig& c,
                         const std::vector<int>& lang_ids)
    : cfg(c) {
  validate(c);
  const std::size_t E = c.embed_dim, Eo = c.output_dim(), D = c.model_dim;
  embed = ps.add_normal(name + "/embed", {c.vocab_size, E}, 1.0);
  for (std::size_t i = 0; i < c.n_conv_layers; ++i) {
    convs.emplace_back(ps, name + "/conv" + std::to_string(i), c.conv_kernel * E, E);
    conv_norms.emplace_back(ps, name + "/conv" + std::to_string(i) + "/ln", E);
  }
  positions = ps.add_normal(name + "/positions", {c.max_positions, E}, 0.02);
  for (std::size_t i = 0; i < c.n_transformer_layers; ++i) {
    transformer.emplace_back(ps, name + "/tf" + std::to_string(i), E, c.n_heads, E * c.ff_multiplier);
  }
  extractor_norm = nn::LayerNorm(ps, name + "/extractor_ln", E);
  if (c.lang_embed) {
    for (int id : lang_ids) lang_vectors[id] = ps.add_normal(name + "/lang" + std::to_string(id), {c.lang_embed_dim}, 1.0);
  }
  for (std::size_t i = 0; i < c.duration_blocks; ++i) {
    const std::string b = name + "/dur" + std::to_string(i);
    duration.push_back({nn::LayerNorm(ps, b + "/ln", Eo),
                        nn::LightweightConv(ps, b + "/lconv", Eo, c.duration_kernel, 1)});
  }
  duration_head = nn::Linear(ps, name + "/dur_head", Eo, 1, true, true);

  refiner_in = nn::Linear(ps, name + "/refiner_in", Eo, D);
  refiner_positions = ps.add_normal(name + "/refiner_positions", {c.max_positions, D}, 0.02);
  for (std::size_t i = 0; i < c.refiner_layers; ++i) {
    const std::string b = name + "/refiner" + std::to_string(i);
    refiner.push_back({nn::LayerNorm(ps, b + "/attn_ln", D), nn::LayerNorm(ps, b + "/conv_ln", D),
                       nn::SelfAttention(ps, b + "/attn", D, c.refiner_heads),
                       nn::LightweightConv(ps, b + "/lconv", D, c.refiner_conv_kernel, c.lightweight_groups)});
  }
  refiner_out = nn::LayerNorm(ps, name + "/refiner_out", D);
}

Tensor embed_text(const TextEncoder& enc, const std::vector<std::size_t>& tokens, int lang_id) {
  if (tokens.empty()) throw std::invalid_argument("embed_text: empty token sequence");
  for (auto t : tokens) {
    if (t >= enc.cfg.vocab_size) {
      throw std::out_of_range("embed_text: token id " + std::to_string(t) + " outside vocab of " +
                              std::to_string(enc.cfg.vocab_size));
    }
  }
  const Tensor* lang = nullptr;
  if (enc.cfg.lang_embed) {
    auto it = enc.lang_vectors.find(lang_id);
    if (it == enc.lang_vectors.end()) throw std::out_of_range("text encoder: unknown lang_id " + std::to_string(lang_id));
    lang = &it->second;
  }
  auto h = o::embedding(enc.embed, tokens);
  for (std::size_t i = 0; i < enc.convs.size(); ++i) {
    h = enc.conv_norms[i](o::add(h, o::relu(enc.convs[i](o::unfold_time(h, enc.cfg.conv_kernel)))));
  }
  h = nn::add_positions(h, enc.positions);
  for (const auto& layer : enc.transformer) h = layer(h);
  h = enc.extractor_norm(h);
  if (lang) h = o::concat_cols({h, o::broadcast_rows(*lang, tokens.size())});
  return h;
}

Tensor predict_durations(const TextEncoder& enc, const Tensor& embeddings) {
  if (embeddings.rows() == 0) throw std::invalid_argument("predict_durations: no tokens");
  Tensor h = embeddings;
  for (const auto& b : enc.duration) h = o::add(h, o::relu(b.conv(b.norm(h))));
  return enc.duration_head(h);
}

std::vector<std::size_t> integerize(std::span<const double> d) {
  std::vector<std::size_t> out;
  out.reserve(d.size());
  for (double v : d) out.push_back(std::size_t(std::max(1.0, std::round(v))));
  return out;
}

Tensor resample(const Tensor& embeddings, const std::vector<std::size_t>& durations) {
  if (durations.size() != embeddings.rows()) {
    throw ShapeError("resample: " + std::to_string(durations.size()) + " durations for " +
                     std::to_string(embeddings.rows()) + " tokens");
  }
  std::vector<std::size_t> idx;
  for (std::size_t u = 0; u < durations.size(); ++u) {
    if (durations[u] < 1) throw std::invalid_argument("resample: duration of token " + std::to_string(u) + " is 0");
    idx.insert(idx.end(), durations[u], u);
  }
  return o::gather_rows(embeddings, idx);
}

Tensor refine(const TextEncoder& enc, const Tensor& frames) {
  if (frames.rows() == 0) throw std::invalid_argument("refine: empty sequence");
  auto h = nn::add_positions(enc.refiner_in(frames), enc.refiner_positions);
  for (const auto& l : enc.refiner) {
    h = o::add(h, l.attn(l.attn_norm(h)));
    h = o::add(h, l.conv(l.conv_norm(h)));
  }
  return enc.refiner_out(h);
}

std::pair<Tensor, SpecMask> mask_spec(const Tensor& frames, const SpecMaskConfig& cfg, Rng& rng) {
  const std::size_t T = frames.rows(), D = frames.cols();
  SpecMask m{std::vector<bool>(T, false), std::vector<bool>(D, false)};
  auto bands = [&rng](std::vector<bool>& sel, std::size_t n, std::size_t width) {
    const std::size_t extent = sel.size();
    const std::size_t w = std::min(width, extent > 0 ? extent - 1 : 0);
    if (w == 0) return;
    for (std::size_t i = 0; i < n; ++i) {
      const auto start = std::size_t(rng.uniform_int(0, std::int64_t(extent - w)));
      for (std::size_t j = start; j < start + w; ++j) sel[j] = true;
    }
  };
  bands(m.time, cfg.time_masks, cfg.time_width);
  bands(m.dims, cfg.dim_masks, cfg.dim_width);
  if (m.masked_values() == 0) return {frames, m};
  std::vector<double> keep(T * D);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t d = 0; d < D; ++d) keep[t * D + d] = (m.time[t] || m.dims[d]) ? 0.0 : 1.0;
  return {o::mul(frames, Tensor::matrix(T, D, std::move(keep))), m};
}

Tensor consistency_loss(const Tensor& speech, const Tensor& text, const std::vector<double>* w, bool two_sided) {
  if (speech.shape() != text.shape()) {
    throw std::invalid_argument("consistency_loss: speech " + shape_str(speech.shape()) + " vs text " +
                                shape_str(text.shape()) + " (alignment lengths disagree)");
  }
  auto target = two_sided ? speech : speech.detach();
  if (!w) return o::mse(text, target);
  if (w->size() != speech.rows()) throw ShapeError("consistency_loss: frame weight count mismatch");
  double total = 0.0;
  for (double v : *w) {
    if (v < 0) throw std::invalid_argument("consistency_loss: negative frame weight");
    total += v;
  }
  if (total == 0.0) return Tensor::scalar(0.0);
  auto per_frame = o::sum_cols(o::square(o::sub(text, target)));
  auto weighted = o::sum(o::mul(per_frame, Tensor::matrix(w->size(), 1, *w)));
  return o::scale(weighted, 1.0 / (total * double(speech.cols())));
}

Tensor duration_loss(const Tensor& log_durations, const std::vector<std::size_t>& targets) {
  if (log_durations.numel() != targets.size()) throw ShapeError("duration_loss: target count mismatch");
  std::vector<double> t;
  t.reserve(targets.size());
  for (auto d : targets) t.push_back(std::log1p(double(d)));
  return o::mse(o::softplus(log_durations), Tensor(log_durations.shape(), std::move(t)));
}

AlignedTextRepr text_forward(const TextEncoder& enc, const std::vector<std::size_t>& tokens, int lang_id,
                             const TextForwardOptions& opt, Rng& rng) {
  AlignedTextRepr r;
  r.lang_id = lang_id;
  auto emb = embed_text(enc, tokens, lang_id);
  r.log_durations = predict_durations(enc, opt.detach_duration_input ? emb.detach() : emb);
  const std::size_t U = tokens.size();

  std::vector<std::size_t> d;
  switch (opt.mode) {
    case DurationMode::aligned:
      if (!opt.durations) throw std::invalid_argument("text_forward: aligned mode needs durations");
      if (opt.durations->size() != U) throw ShapeError("text_forward: duration count differs from token count");
      d = *opt.durations;
      break;
    case DurationMode::predicted: {
      std::vector<double> v;
      for (double x : r.log_durations.data()) v.push_back(std::exp(x));
      d = integerize(v);
      break;
    }
    case DurationMode::uniform:
      for (std::size_t u = 0; u < U; ++u) d.push_back(std::size_t(rng.uniform_int(1, std::int64_t(opt.uniform_max))));
      break;
    case DurationMode::one:
    case DurationMode::none:
      d.assign(U, 1);
      break;
  }

  // Tokens that the alignment gave no frames are deleted.
  std::vector<std::size_t> keep;
  for (std::size_t u = 0; u < U; ++u) {
    if (d[u] > 0) {
      keep.push_back(u);
      r.durations.push_back(d[u]);
      r.token_ids.push_back(tokens[u]);
    }
  }
  if (keep.empty()) throw std::invalid_argument("text_forward: all tokens have zero duration");
  if (opt.max_frames > 0) {
    std::size_t n = opt.mode == DurationMode::none ? keep.size() : 0;
    for (auto x : r.durations) n += opt.mode == DurationMode::none ? 0 : x;
    if (n > opt.max_frames) throw std::length_error("text_forward: " + std::to_string(n) + " frames exceed the cap");
  }
  Tensor kept = keep.size() == U ? emb : o::gather_rows(emb, keep);
  Tensor frames = opt.mode == DurationMode::none ? kept : resample(kept, r.durations);
  r.refined = refine(enc, frames);
  if (opt.masking) {
    auto [masked, m] = mask_spec(r.refined, opt.spec, rng);
    r.frames = masked;
    r.mask = std::move(m);
  } else {
    r.frames = r.refined;
    r.mask = {std::vector<bool>(r.refined.rows(), false), std::vector<bool>(r.refined.cols(), false)};
  }
  return r;
}

}  // namespace zsasr
