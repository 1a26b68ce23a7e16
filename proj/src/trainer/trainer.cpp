#include "zsasr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "zsasr/ops.hpp"

namespace zsasr {

namespace o = ops;

// ---- Curriculum ---------------------------------------------------------

void CurriculumConfig::validate() const {
  if (phase1_steps == 0) throw std::invalid_argument("curriculum: phase1_steps must be positive");
  if (joint_steps == 0) throw std::invalid_argument("curriculum: joint_steps must be positive");
  if (taper_window > total_steps()) throw std::invalid_argument("curriculum: taper_window exceeds the run");
}

Streams phase(std::uint64_t step, const CurriculumConfig& cfg) {
  Streams s;
  s.speech = true;
  s.paired = step >= cfg.paired_start();
  s.text = step >= cfg.text_start();
  return s;
}

void LossWeights::validate() const {
  for (double w : {w_rnnt_paired, w_rnnt_text, w_consistency, w_contrastive, w_mlm, w_duration, w_aux}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("loss weights must be finite and nonnegative");
  }
}

double taper_factor(std::uint64_t step, const CurriculumConfig& cfg) {
  if (cfg.taper_window == 0) return 1.0;
  const double total = double(cfg.total_steps());
  const double left = total - 1.0 - double(step);
  return std::clamp(left / double(cfg.taper_window), 0.0, 1.0);
}

LossWeights effective_weights(std::uint64_t step, const CurriculumConfig& cfg, const LossWeights& w, bool taper) {
  LossWeights e = w;
  if (taper) {
    const double f = taper_factor(step, cfg);
    e.w_contrastive *= f;
    e.w_mlm *= f;
  }
  return e;
}

bool LossBundle::has(const std::string& name) const {
  return std::any_of(terms.begin(), terms.end(), [&](const LossTerm& t) { return t.name == name; });
}

const LossTerm& LossBundle::at(const std::string& name) const {
  for (const auto& t : terms)
    if (t.name == name) return t;
  throw std::out_of_range("loss bundle has no term " + name);
}

void TrainConfig::validate() const {
  curriculum.validate();
  weights.validate();
  zsasr::validate(model.encoder);
  if (mask_prob < 0.0 || mask_prob > 1.0) throw std::invalid_argument("mask_prob must lie in [0, 1]");
  if (mask_span == 0) throw std::invalid_argument("mask_span must be positive");
  if (temperature <= 0.0) throw std::invalid_argument("temperature must be positive");
  if (ema_decay < 0.0 || ema_decay >= 1.0) throw std::invalid_argument("ema_decay must lie in [0, 1)");
  if (text_stream && text_durations == DurationMode::aligned)
    throw std::invalid_argument("unspoken text has no alignment; use learnt, uniform, one or none");
  if (pools.oracle_group_b_pairs && !paired_stream) throw std::invalid_argument("oracle pairs need the paired stream");
}

// ---- Config file --------------------------------------------------------

namespace {

struct Key {
  std::string name;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("not a boolean: " + v);
}

template <class T>
void parse_value(const std::string& v, T& out) {
  std::size_t used = 0;
  if constexpr (std::is_same_v<T, bool>) {
    out = parse_bool(v);
    return;
  } else if constexpr (std::is_floating_point_v<T>) {
    out = std::stod(v, &used);
  } else {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative value: " + v);
    out = T(std::stoull(v, &used));
  }
  if (used != v.size()) throw std::invalid_argument("trailing characters in " + v);
}

template <class T>
std::string show_value(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_floating_point_v<T>) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  } else {
    return std::to_string(v);
  }
}

template <class F>
Key field(std::string name, F ref) {
  return {std::move(name),
          [ref](TrainConfig& c, const std::string& v) { parse_value(v, ref(c)); },
          [ref](const TrainConfig& c) { return show_value(ref(const_cast<TrainConfig&>(c))); }};
}

#define ZS_KEY(name, member) field(name, [](TrainConfig& c) -> auto& { return c.member; })

const std::vector<Key>& keys() {
  static const std::vector<Key> k = {
      {"name", [](TrainConfig& c, const std::string& v) { c.preset = v; },
       [](const TrainConfig& c) { return c.preset; }},
      ZS_KEY("seed", seed),
      {"text_unit", [](TrainConfig& c, const std::string& v) { c.model.text_unit = parse_text_unit(v); },
       [](const TrainConfig& c) { return to_string(c.model.text_unit); }},
      ZS_KEY("adapters", model.adapters),
      ZS_KEY("decoder_lang_embed", model.decoder_lang_embed),
      ZS_KEY("text_lang_embed", model.text_lang_embed),
      ZS_KEY("codes", model.codes),
      ZS_KEY("code_dim", model.code_dim),
      ZS_KEY("model_dim", model.encoder.model_dim),
      ZS_KEY("n_heads", model.encoder.n_heads),
      ZS_KEY("ff_multiplier", model.encoder.ff_multiplier),
      ZS_KEY("conv_kernel", model.encoder.conv_kernel),
      ZS_KEY("n_speech_layers", model.encoder.n_speech_layers),
      ZS_KEY("n_shared_layers", model.encoder.n_shared_layers),
      ZS_KEY("adapter_bottleneck", model.encoder.adapter_bottleneck),
      ZS_KEY("subsample", model.encoder.subsample),
      ZS_KEY("max_positions", model.encoder.max_positions),
      ZS_KEY("decoder_embed_dim", model.decoder.embed_dim),
      ZS_KEY("decoder_hidden_dim", model.decoder.hidden_dim),
      ZS_KEY("joint_dim", model.decoder.joint_dim),
      ZS_KEY("max_symbols_per_frame", model.decoder.max_symbols_per_frame),
      ZS_KEY("text_embed_dim", model.text.embed_dim),
      ZS_KEY("text_conv_layers", model.text.n_conv_layers),
      ZS_KEY("text_conv_kernel", model.text.conv_kernel),
      ZS_KEY("text_transformer_layers", model.text.n_transformer_layers),
      ZS_KEY("text_heads", model.text.n_heads),
      ZS_KEY("text_ff_multiplier", model.text.ff_multiplier),
      ZS_KEY("text_lang_embed_dim", model.text.lang_embed_dim),
      ZS_KEY("refiner_layers", model.text.refiner_layers),
      ZS_KEY("refiner_heads", model.text.refiner_heads),
      ZS_KEY("refiner_conv_kernel", model.text.refiner_conv_kernel),
      ZS_KEY("lightweight_groups", model.text.lightweight_groups),
      ZS_KEY("duration_blocks", model.text.duration_blocks),
      ZS_KEY("duration_kernel", model.text.duration_kernel),
      ZS_KEY("text_max_positions", model.text.max_positions),
      ZS_KEY("phase1_steps", curriculum.phase1_steps),
      ZS_KEY("phase2_offset", curriculum.phase2_offset),
      ZS_KEY("phase3_offset", curriculum.phase3_offset),
      ZS_KEY("joint_steps", curriculum.joint_steps),
      ZS_KEY("taper_window", curriculum.taper_window),
      ZS_KEY("w_rnnt_paired", weights.w_rnnt_paired),
      ZS_KEY("w_rnnt_text", weights.w_rnnt_text),
      ZS_KEY("w_consistency", weights.w_consistency),
      ZS_KEY("w_contrastive", weights.w_contrastive),
      ZS_KEY("w_mlm", weights.w_mlm),
      ZS_KEY("w_duration", weights.w_duration),
      ZS_KEY("w_aux", weights.w_aux),
      ZS_KEY("batch_speech", batch.speech),
      ZS_KEY("batch_text", batch.text),
      ZS_KEY("batch_paired", batch.paired),
      ZS_KEY("peak_lr", adam.peak_lr),
      ZS_KEY("warmup_steps", adam.warmup_steps),
      ZS_KEY("beta1", adam.beta1),
      ZS_KEY("beta2", adam.beta2),
      ZS_KEY("adam_eps", adam.eps),
      ZS_KEY("clip_norm", adam.clip_norm),
      ZS_KEY("ema_decay", ema_decay),
      ZS_KEY("speech_stream", speech_stream),
      ZS_KEY("paired_stream", paired_stream),
      ZS_KEY("text_stream", text_stream),
      ZS_KEY("taper", taper),
      ZS_KEY("consistency", consistency),
      ZS_KEY("consistency_two_sided", consistency_two_sided),
      ZS_KEY("duration_training", duration_training),
      {"text_durations", [](TrainConfig& c, const std::string& v) { c.text_durations = parse_duration_mode(v); },
       [](const TrainConfig& c) { return std::string(to_string(c.text_durations)); }},
      ZS_KEY("text_masking", text_masking),
      ZS_KEY("spec_time_masks", spec.time_masks),
      ZS_KEY("spec_time_width", spec.time_width),
      ZS_KEY("spec_dim_masks", spec.dim_masks),
      ZS_KEY("spec_dim_width", spec.dim_width),
      ZS_KEY("uniform_max", uniform_max),
      ZS_KEY("in_domain_text", pools.in_domain_text),
      ZS_KEY("out_domain_text", pools.out_domain_text),
      ZS_KEY("oracle_pairs", pools.oracle_group_b_pairs),
      ZS_KEY("mask_prob", mask_prob),
      ZS_KEY("mask_span", mask_span),
      ZS_KEY("n_distractors", n_distractors),
      ZS_KEY("temperature", temperature),
      ZS_KEY("finetune_steps", finetune_steps),
      ZS_KEY("finetune_lr_scale", finetune_lr_scale),
  };
  return k;
}

#undef ZS_KEY

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void apply_config_line(TrainConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : keys()) {
    if (k.name != key) continue;
    try {
      k.set(cfg, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config key " + key + ": " + e.what());
    } catch (const std::out_of_range&) {
      throw std::invalid_argument("config key " + key + ": value out of range: " + value);
    }
    return;
  }
  throw std::invalid_argument("unknown config key: " + key);
}

TrainConfig read_config_file(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path.string() + ":" + std::to_string(n) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    // A preset line replaces everything set so far; `name` only relabels.
    if (key == "preset") {
      auto seed = base.seed;
      base = preset_config(trim(line.substr(eq + 1)));
      base.seed = seed;
      continue;
    }
    apply_config_line(base, key, trim(line.substr(eq + 1)));
  }
  return base;
}

void write_config_file(const std::filesystem::path& path, const TrainConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# flat key = value training configuration\n";
  for (const auto& k : keys()) out << k.name << " = " << k.get(cfg) << '\n';
}

std::string config_keys_help() {
  TrainConfig d;
  std::ostringstream o;
  for (const auto& k : keys()) o << "  " << k.name << " (default " << k.get(d) << ")\n";
  return o.str();
}

// ---- Presets ------------------------------------------------------------

namespace {

// Fully enabled zero-supervised configuration with byte text units.
TrainConfig full_config() {
  TrainConfig c;
  c.model.encoder.model_dim = 32;
  c.model.encoder.n_heads = 4;
  c.model.encoder.ff_multiplier = 2;
  c.model.encoder.conv_kernel = 5;
  c.model.encoder.n_speech_layers = 1;
  c.model.encoder.n_shared_layers = 2;
  c.model.encoder.adapter_bottleneck = 8;
  c.model.decoder.embed_dim = 16;
  c.model.decoder.hidden_dim = 32;
  c.model.decoder.joint_dim = 32;
  c.model.text.embed_dim = 24;
  c.model.text.lang_embed_dim = 8;
  c.model.text.n_transformer_layers = 1;
  c.model.text.n_heads = 4;
  c.model.text.refiner_heads = 4;
  c.model.text.refiner_conv_kernel = 5;
  c.model.text.duration_blocks = 1;
  c.model.codes = 32;
  c.model.code_dim = 8;
  c.curriculum = {100, 0, 400, 1200, 100};
  c.batch = {4, 24, 8};
  c.adam.peak_lr = 1e-2;
  c.adam.warmup_steps = 60;
  c.adam.clip_norm = 5.0;
  c.n_distractors = 10;
  return c;
}

TrainConfig standard_maestro() {
  TrainConfig c = full_config();
  c.model.text_unit = TextUnit::grapheme;
  c.model.decoder_lang_embed = false;
  c.model.text_lang_embed = false;
  c.model.adapters = false;
  c.weights.w_rnnt_text = 1.0;
  c.pools.in_domain_text = false;
  c.taper = false;
  return c;
}

TrainConfig no_text(TrainConfig c) {
  c.text_stream = false;
  c.consistency = false;
  c.duration_training = false;
  c.model.text_unit = TextUnit::grapheme;
  return c;
}

using Builder = TrainConfig (*)();

const std::vector<std::pair<std::string, Builder>>& builders() {
  static const std::vector<std::pair<std::string, Builder>> b = {
      {"no_text_baseline", [] { return no_text(full_config()); }},
      {"w2v_bert_finetuned",
       [] {
         auto c = no_text(full_config());
         c.paired_stream = false;
         c.model.decoder_lang_embed = false;
         c.model.adapters = false;
         c.finetune_steps = 150;
         return c;
       }},
      {"joint_w2v_bert",
       [] {
         auto c = no_text(full_config());
         c.model.decoder_lang_embed = false;
         c.model.adapters = false;
         return c;
       }},
      {"standard_maestro", standard_maestro},
      {"sm_langid",
       [] {
         auto c = standard_maestro();
         c.model.decoder_lang_embed = c.model.text_lang_embed = true;
         return c;
       }},
      {"sm_upscale",
       [] {
         auto c = standard_maestro();
         c.model.decoder_lang_embed = c.model.text_lang_embed = true;
         c.weights.w_rnnt_text = 12.0;
         return c;
       }},
      {"sm_adapter",
       [] {
         auto c = standard_maestro();
         c.model.decoder_lang_embed = c.model.text_lang_embed = true;
         c.weights.w_rnnt_text = 12.0;
         c.model.adapters = true;
         return c;
       }},
      {"sm_byte",
       [] {
         auto c = full_config();
         c.pools.in_domain_text = false;
         c.taper = false;
         return c;
       }},
      {"sm_indomain",
       [] {
         auto c = full_config();
         c.taper = false;
         return c;
       }},
      {"maestro_u_byte", full_config},
      {"maestro_u_grapheme",
       [] {
         auto c = full_config();
         c.model.text_unit = TextUnit::grapheme;
         return c;
       }},
      {"maestro_u_phoneme",
       [] {
         auto c = full_config();
         c.model.text_unit = TextUnit::phoneme;
         return c;
       }},
      {"oracle_supervised",
       [] {
         auto c = full_config();
         c.pools.oracle_group_b_pairs = true;
         return c;
       }},
      // Text-encoder variants on top of maestro_u_byte:
      // resampling / trained durations / consistency / duration at text time.
      {"t5_full", full_config},
      {"t5_uniform",
       [] {
         auto c = full_config();
         c.text_durations = DurationMode::uniform;
         return c;
       }},
      {"t5_no_consistency",
       [] {
         auto c = full_config();
         c.consistency = false;
         return c;
       }},
      {"t5_uniform_no_duration",
       [] {
         auto c = full_config();
         c.consistency = false;
         c.duration_training = false;
         c.text_durations = DurationMode::uniform;
         return c;
       }},
      {"t5_none",
       [] {
         auto c = full_config();
         c.consistency = false;
         c.duration_training = false;
         c.text_durations = DurationMode::none;
         return c;
       }},
  };
  return b;
}

}  // namespace

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [name, _] : builders()) n.push_back(name);
    return n;
  }();
  return names;
}

TrainConfig preset_config(const std::string& name) {
  for (const auto& [n, build] : builders()) {
    if (n != name) continue;
    TrainConfig c = build();
    c.preset = name;
    return c;
  }
  std::string list;
  for (const auto& n : preset_names()) list += (list.empty() ? "" : ", ") + n;
  throw std::invalid_argument("unknown preset '" + name + "'; valid presets: " + list);
}

// ---- Trainer ------------------------------------------------------------

Trainer::Trainer(const TrainConfig& cfg, const Corpus& corpus) : cfg_(cfg), corpus_(corpus) {
  cfg_.validate();
  model_ = std::make_unique<Model>(cfg_.model, corpus_, cfg_.seed);
  pools_ = build_pools(corpus_, cfg_.pools);
  optim_ = make_optim_state(cfg_.adam, model_->params());
  ema_ = make_ema_state(cfg_.ema_decay, model_->params());
}

MixedBatch Trainer::next_batch(std::uint64_t step) const {
  const Streams s = phase(step, cfg_.curriculum);
  BatchSizes sizes;
  sizes.speech = s.speech && cfg_.speech_stream ? cfg_.batch.speech : 0;
  sizes.paired = s.paired && cfg_.paired_stream ? cfg_.batch.paired : 0;
  sizes.text = s.text && cfg_.text_stream ? cfg_.batch.text : 0;
  return compose_batch(pools_, corpus_.languages, sizes, step, cfg_.seed);
}

Tensor Trainer::speech_terms(const MixedBatch& b, std::uint64_t step, const LossWeights& w, LossBundle& out) {
  Model& m = *model_;
  Rng rng(cfg_.seed, "train/speech_mask", step);
  Tensor contrastive = Tensor::scalar(0.0), mlm = Tensor::scalar(0.0);
  std::size_t n_con = 0, n_mlm = 0;
  for (const Utterance* u : b.untranscribed) {
    auto feats = m.features(*u);
    auto latent_in = m.speech.embed(feats);
    auto [masked, mask] = mask_speech(latent_in, cfg_.mask_prob, cfg_.mask_span, m.heads.mask_vector, rng);
    auto enc = m.speech.blocks(masked);
    auto idx = mask.indices();
    if (idx.size() >= 2) {
      auto pred = o::gather_rows(m.heads.contrastive_proj(enc), idx);
      auto target = o::gather_rows(latent_in.detach(), idx);
      contrastive = o::add(contrastive, contrastive_loss(pred, target, cfg_.n_distractors, cfg_.temperature, rng));
      ++n_con;
    }
    auto shared = m.shared(enc, u->lang_id, m.adapter_bank());
    auto codes = quantize(m.quantizer, feats);
    std::vector<std::size_t> picked;
    for (auto i : idx) picked.push_back(codes[i]);
    Tensor logits = idx.empty() ? Tensor::zeros({0, m.config().codes}) : o::gather_rows(m.heads.mlm_classifier(shared), idx);
    mlm = o::add(mlm, mlm_loss(logits, picked, &empty_mlm_));
    ++n_mlm;
  }
  Tensor total = Tensor::scalar(0.0);
  if (n_con > 0) {
    contrastive = o::scale(contrastive, 1.0 / double(n_con));
    out.terms.push_back({"contrastive", contrastive.item(), w.w_contrastive});
    total = o::add(total, o::scale(contrastive, w.w_contrastive));
  }
  if (n_mlm > 0) {
    mlm = o::scale(mlm, 1.0 / double(n_mlm));
    out.terms.push_back({"mlm", mlm.item(), w.w_mlm});
    total = o::add(total, o::scale(mlm, w.w_mlm));
  }
  return total;
}

Tensor Trainer::paired_terms(const MixedBatch& b, std::uint64_t step, const LossWeights& w, LossBundle& out) {
  Model& m = *model_;
  Rng rng(cfg_.seed, "train/paired", step);
  const bool want_align = cfg_.consistency || cfg_.duration_training;
  const RnntDecoder* aux = m.has_aux() ? &*m.aux_dec : nullptr;
  Tensor rnnt = Tensor::scalar(0.0), aux_loss = Tensor::scalar(0.0), dur = Tensor::scalar(0.0),
         cons = Tensor::scalar(0.0);
  std::size_t n = 0, n_dur = 0, n_cons = 0;
  for (const auto& item : b.transcribed) {
    const int lang = item.utt->lang_id;
    auto [enc, shared] = m.encode(m.features(*item.utt), lang);
    auto g = m.grapheme_targets(item.transcript);
    auto a = m.aux_targets(item.transcript, lang);
    auto losses = dual_decoder_losses(shared, aux, a, m.grapheme_dec, g, lang, want_align, aux != nullptr);
    rnnt = o::add(rnnt, losses.grapheme.loss);
    if (losses.aux) aux_loss = o::add(aux_loss, losses.aux->loss);
    ++n;
    if (!want_align) continue;
    const auto& al = aux ? losses.aux->alignment : losses.grapheme.alignment;
    if (!al || al->durations.empty()) continue;
    auto tokens = m.text_tokens(item.transcript, lang);
    TextForwardOptions opt;
    opt.mode = DurationMode::aligned;
    opt.durations = &al->durations;
    opt.masking = false;
    auto r = text_forward(m.text, tokens, lang, opt, rng);
    if (cfg_.duration_training) {
      dur = o::add(dur, duration_loss(r.log_durations, al->durations));
      ++n_dur;
    }
    if (cfg_.consistency) {
      if (r.refined.rows() != enc.rows()) throw ShapeError("aligned text frames differ from speech frames");
      cons = o::add(cons, consistency_loss(enc, r.refined, nullptr, cfg_.consistency_two_sided));
      ++n_cons;
    }
  }
  Tensor total = Tensor::scalar(0.0);
  auto push = [&](const char* name, Tensor v, std::size_t count, double weight) {
    if (count == 0) return;
    v = o::scale(v, 1.0 / double(count));
    out.terms.push_back({name, v.item(), weight});
    total = o::add(total, o::scale(v, weight));
  };
  push("rnnt_grapheme", rnnt, n, w.w_rnnt_paired);
  if (aux) push(m.config().text_unit == TextUnit::byte ? "rnnt_byte" : "rnnt_phoneme", aux_loss, n, w.w_aux);
  push("duration", dur, n_dur, w.w_duration);
  push("consistency", cons, n_cons, w.w_consistency);
  return total;
}

Tensor Trainer::text_terms(const MixedBatch& b, std::uint64_t step, const LossWeights& w, LossBundle& out) {
  Model& m = *model_;
  Rng rng(cfg_.seed, "train/text", step);
  TextForwardOptions opt;
  opt.mode = cfg_.text_durations;
  opt.masking = cfg_.text_masking;
  opt.spec = cfg_.spec;
  opt.uniform_max = cfg_.uniform_max;
  opt.max_frames = std::min(m.config().encoder.max_positions, m.config().text.max_positions);
  Tensor rnnt = Tensor::scalar(0.0), aux = Tensor::scalar(0.0);
  std::size_t n = 0;
  for (const auto& item : b.unspoken_text) {
    auto tokens = m.text_tokens(item.text, item.lang_id);
    if (tokens.empty()) continue;
    AlignedTextRepr r;
    try {
      r = text_forward(m.text, tokens, item.lang_id, opt, rng);
    } catch (const std::length_error&) {
      continue;
    }
    // With the consistency loss the text encoder is trained only through
    // the paired path; otherwise the decoder loss reaches it.
    Tensor frames = cfg_.consistency ? r.frames.detach() : r.frames;
    auto shared = m.shared(frames, item.lang_id, m.adapter_bank());
    rnnt = o::add(rnnt, decoder_loss(shared, m.grapheme_dec, item.lang_id, m.grapheme_targets(item.text), false).loss);
    if (m.has_aux())
      aux = o::add(aux, decoder_loss(shared, *m.aux_dec, item.lang_id, m.aux_targets(item.text, item.lang_id), false).loss);
    ++n;
  }
  if (n == 0) return Tensor::scalar(0.0);
  rnnt = o::scale(rnnt, 1.0 / double(n));
  out.terms.push_back({"rnnt_text", rnnt.item(), w.w_rnnt_text});
  Tensor total = o::scale(rnnt, w.w_rnnt_text);
  if (m.has_aux()) {
    aux = o::scale(aux, 1.0 / double(n));
    const double wa = w.w_rnnt_text * w.w_aux;
    out.terms.push_back({"rnnt_text_" + to_string(m.config().text_unit), aux.item(), wa});
    total = o::add(total, o::scale(aux, wa));
  }
  return total;
}

LossBundle Trainer::forward(const MixedBatch& b, std::uint64_t step, Tensor& total) {
  LossBundle out;
  out.step = step;
  const LossWeights w = effective_weights(step, cfg_.curriculum, cfg_.weights, cfg_.taper);
  total = Tensor::scalar(0.0);
  if (!b.untranscribed.empty()) total = o::add(total, speech_terms(b, step, w, out));
  if (!b.transcribed.empty()) total = o::add(total, paired_terms(b, step, w, out));
  if (!b.unspoken_text.empty()) total = o::add(total, text_terms(b, step, w, out));
  out.total = total.item();
  return out;
}

bool Trainer::apply_update(LossBundle& bundle, Tensor& total) {
  if (!std::isfinite(bundle.total) || !total.requires_grad()) {
    bundle.skipped = true;
    ++optim_.skipped;
    if (!std::isfinite(bundle.total))
      std::fprintf(stderr, "step %llu: non-finite loss, update skipped\n", (unsigned long long)bundle.step);
    return false;
  }
  model_->params().zero_grad();
  total.backward();
  if (!adam_step(optim_, model_->params())) {
    bundle.skipped = true;
    std::fprintf(stderr, "step %llu: non-finite gradient, update skipped\n", (unsigned long long)bundle.step);
    return false;
  }
  ema_update(ema_, model_->params());
  return true;
}

LossBundle Trainer::train_step() {
  batch_ = next_batch(step_);
  if (batch_observer) batch_observer(step_, batch_);
  Tensor total;
  auto bundle = forward(batch_, step_, total);
  apply_update(bundle, total);
  ++step_;
  return bundle;
}

LossBundle Trainer::evaluate_batch(const MixedBatch& batch, std::uint64_t step) {
  Tensor total;
  return forward(batch, step, total);
}

void Trainer::run(const std::function<void(const LossBundle&)>& on_step) {
  while (!done()) {
    auto b = train_step();
    if (on_step) on_step(b);
  }
}

void Trainer::finetune(std::uint64_t steps, const std::function<void(const LossBundle&)>& on_step) {
  if (steps == 0) return;
  if (finetuned_ == 0) optim_.cfg.peak_lr *= cfg_.finetune_lr_scale;
  Model& m = *model_;
  const BatchSizes sizes{0, 0, cfg_.batch.paired};
  for (std::uint64_t k = 0; k < steps; ++k) {
    const std::uint64_t key = cfg_.curriculum.total_steps() + finetuned_;
    batch_ = compose_batch(pools_, corpus_.languages, sizes, key, cfg_.seed);
    if (batch_observer) batch_observer(key, batch_);
    LossBundle bundle;
    bundle.step = key;
    Tensor loss = Tensor::scalar(0.0);
    for (const auto& item : batch_.transcribed) {
      auto [enc, shared] = m.encode(m.features(*item.utt), item.utt->lang_id);
      loss = o::add(loss, decoder_loss(shared, m.grapheme_dec, item.utt->lang_id,
                                       m.grapheme_targets(item.transcript), false)
                              .loss);
    }
    loss = o::scale(loss, 1.0 / double(batch_.transcribed.size()));
    bundle.terms.push_back({"rnnt_finetune", loss.item(), 1.0});
    bundle.total = loss.item();
    apply_update(bundle, loss);
    ++finetuned_;
    if (on_step) on_step(bundle);
  }
}

Checkpoint Trainer::checkpoint() const {
  std::string meta = "preset=" + cfg_.preset + ";finetuned=" + std::to_string(finetuned_) +
                     ";empty_mlm=" + std::to_string(empty_mlm_);
  return make_checkpoint(model_->params(), optim_, ema_, cfg_.seed, step_, meta);
}

void Trainer::save(const std::filesystem::path& path) const { save_checkpoint(path, checkpoint()); }

void Trainer::restore(const Checkpoint& ck) {
  if (ck.seed != cfg_.seed) throw std::invalid_argument("checkpoint seed differs from the configured seed");
  restore_params(ck, model_->params());
  if (ck.optim.m.size() != model_->params().size() || ck.ema.shadow.size() != model_->params().size())
    throw std::invalid_argument("checkpoint optimizer state does not match the model");
  optim_ = ck.optim;
  ema_ = ck.ema;
  step_ = ck.step;
  finetuned_ = 0;
  empty_mlm_ = 0;
  std::stringstream ss(ck.meta);
  std::string kv;
  while (std::getline(ss, kv, ';')) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) continue;
    const auto k = kv.substr(0, eq), v = kv.substr(eq + 1);
    if (k == "finetuned") finetuned_ = std::stoull(v);
    if (k == "empty_mlm") empty_mlm_ = std::stoull(v);
  }
}

Trainer::EmaScope::EmaScope(Trainer& t) : t_(t), saved_(t.model_->params().snapshot()) {
  t_.model_->params().load(t_.ema_.shadow);
}

Trainer::EmaScope::~EmaScope() { t_.model_->params().load(saved_); }

// ---- Experiments --------------------------------------------------------

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_metrics_csv(const std::filesystem::path& path, const std::vector<LossBundle>& history,
                       const EvalReport& rep) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "step,loss_name,value\n";
  for (const auto& b : history) {
    for (const auto& t : b.terms) out << b.step << ',' << t.name << ',' << num(t.value) << '\n';
    out << b.step << ",total," << num(b.total) << '\n';
  }
  for (const auto& l : rep.languages) out << rep.step << ",cer/" << l.name << ',' << num(l.cer) << '\n';
  out << rep.step << ",cer/mean_A," << num(rep.mean_a) << '\n';
  out << rep.step << ",cer/mean_B," << num(rep.mean_b) << '\n';
  out << rep.step << ",cer/mean_AB," << num(rep.mean_all) << '\n';
}

ExperimentResult run_experiment(const TrainConfig& cfg, const Corpus& corpus, const std::filesystem::path& out_dir) {
  ExperimentResult res;
  res.config = cfg;
  Trainer t(cfg, corpus);
  auto keep = [&res](const LossBundle& b) { res.history.push_back(b); };
  t.run(keep);
  t.finetune(cfg.finetune_steps, keep);
  {
    Trainer::EmaScope ema(t);
    res.report = evaluate(t.model(), corpus);
  }
  res.report.preset = cfg.preset;
  res.report.seed = cfg.seed;
  res.report.step = t.step() + cfg.finetune_steps;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_metrics_csv(out_dir / "metrics.csv", res.history, res.report);
    write_report_csv(out_dir / "report.csv", res.report);
    write_config_file(out_dir / "config.txt", cfg);
    t.save(out_dir / "model.ckpt");
  }
  return res;
}

}  // namespace zsasr
