#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>

#include "CLI11.hpp"
#include "zsasr/trainer.hpp"

namespace fs = std::filesystem;
using namespace zsasr;

namespace {

struct Common {
  std::string corpus_dir;
  std::uint64_t corpus_seed = 0;
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
};

void add_model_flags(CLI::App* c, Common& o) {
  c->add_option("--config", o.config, "flat key = value config file");
  c->add_option("--preset", o.preset, "start from a named preset");
  c->add_option("--seed", o.seed, "training seed");
  c->add_option("--set", o.sets, "key=value override (repeatable)");
}

void add_corpus_flags(CLI::App* c, Common& o) {
  c->add_option("--corpus", o.corpus_dir, "corpus directory written by gen-corpus");
  c->add_option("--corpus-seed", o.corpus_seed, "seed of the generated default corpus when --corpus is absent");
}

Corpus load_corpus(const Common& o) {
  if (!o.corpus_dir.empty()) return read_corpus(o.corpus_dir);
  return gen_synthetic_corpus(CorpusConfig::default_preset(), o.corpus_seed);
}

TrainConfig resolve_config(const Common& o, const std::string& fallback_preset = {}) {
  TrainConfig cfg;
  if (!o.preset.empty()) cfg = preset_config(o.preset);
  else if (!fallback_preset.empty()) cfg = preset_config(fallback_preset);
  if (!o.config.empty()) cfg = read_config_file(o.config, cfg);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw CLI::ValidationError("--set", "expected key=value, got " + kv);
    apply_config_line(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) cfg.seed = *o.seed;
  return cfg;
}

void print_bundle(const LossBundle& b) {
  std::printf("step %5llu", (unsigned long long)b.step);
  for (const auto& t : b.terms) std::printf("  %s %.4f", t.name.c_str(), t.value);
  std::printf("  total %.4f%s\n", b.total, b.skipped ? " (skipped)" : "");
}

// Ablation ladder order for the report table.
const std::vector<std::pair<std::string, std::string>>& ladder() {
  static const std::vector<std::pair<std::string, std::string>> l = {
      {"no_text_baseline", "no text baseline"},
      {"joint_w2v_bert", "joint w2v-BERT"},
      {"w2v_bert_finetuned", "w2v-BERT + fine-tuning"},
      {"standard_maestro", "Standard Maestro"},
      {"sm_langid", "  + Language-id"},
      {"sm_upscale", "    + Upscale text loss"},
      {"sm_adapter", "      + Adapter"},
      {"sm_byte", "        + Byte"},
      {"sm_indomain", "          + In-domain text"},
      {"maestro_u_byte", "            + Loss tapering"},
      {"maestro_u_grapheme", "full, grapheme text units"},
      {"maestro_u_phoneme", "full, phoneme text units"},
      {"oracle_supervised", "oracle (supervised B)"},
      {"t5_full", "text encoder Y Y Y learnt"},
      {"t5_uniform", "text encoder Y Y Y uniform"},
      {"t5_no_consistency", "text encoder Y Y N learnt"},
      {"t5_uniform_no_duration", "text encoder Y N N uniform"},
      {"t5_none", "text encoder N N N none"},
  };
  return l;
}

int cmd_report(const std::string& dir) {
  std::map<std::string, std::vector<EvalReport>> by_preset;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.path().filename() != "report.csv") continue;
    auto r = read_report_csv(e.path());
    by_preset[r.preset].push_back(r);
  }
  if (by_preset.empty()) {
    std::fprintf(stderr, "no report.csv files under %s\n", dir.c_str());
    return 3;
  }
  std::printf("%-36s %5s %10s %10s\n", "method", "runs", "CER A (%)", "CER B (%)");
  auto row = [](const std::string& label, const std::vector<EvalReport>& rs) {
    double a = 0, b = 0;
    for (const auto& r : rs) {
      a += r.mean_a;
      b += r.mean_b;
    }
    std::printf("%-36s %5zu %10.1f %10.1f\n", label.c_str(), rs.size(), 100 * a / double(rs.size()),
                100 * b / double(rs.size()));
  };
  for (const auto& [name, label] : ladder()) {
    if (auto it = by_preset.find(name); it != by_preset.end()) {
      row(label, it->second);
      by_preset.erase(it);
    }
  }
  for (const auto& [name, rs] : by_preset) row(name, rs);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-supervised-speech multilingual ASR toolkit"};
  app.require_subcommand(1);

  Common o;
  std::string out;

  auto* gen = app.add_subcommand("gen-corpus", "generate the synthetic multilingual corpus");
  std::uint64_t gen_seed = 0;
  gen->add_option("--out", out, "output directory")->required();
  gen->add_option("--seed", gen_seed, "corpus seed");

  auto* train = app.add_subcommand("train", "train a configuration and write a checkpoint");
  add_corpus_flags(train, o);
  add_model_flags(train, o);
  std::string resume;
  std::optional<std::uint64_t> until;
  train->add_option("--out", out, "run directory")->required();
  train->add_option("--resume", resume, "checkpoint to continue from");
  train->add_option("--until", until, "stop after this many total steps");

  auto* ft = app.add_subcommand("finetune", "supervised RNN-T fine-tuning on Group A pairs");
  add_corpus_flags(ft, o);
  add_model_flags(ft, o);
  std::string ckpt;
  std::uint64_t ft_steps = 0;
  ft->add_option("--checkpoint", ckpt, "pretrained checkpoint")->required()->check(CLI::ExistingFile);
  ft->add_option("--steps", ft_steps, "fine-tuning steps")->required();
  ft->add_option("--out", out, "run directory")->required();

  auto* ev = app.add_subcommand("evaluate", "CER of a checkpoint on the test split");
  add_corpus_flags(ev, o);
  add_model_flags(ev, o);
  bool no_spaces = false, raw_weights = false;
  ev->add_option("--checkpoint", ckpt, "checkpoint to evaluate")->required()->check(CLI::ExistingFile);
  ev->add_option("--out", out, "report CSV path");
  ev->add_flag("--ignore-spaces", no_spaces, "drop whitespace before scoring");
  ev->add_flag("--raw-weights", raw_weights, "score the training weights instead of the EMA shadow");

  auto* rp = app.add_subcommand("run-preset", "train, fine-tune if configured, evaluate and write artifacts");
  std::string preset_name;
  rp->add_option("preset", preset_name, "preset name")->required();
  add_corpus_flags(rp, o);
  rp->add_option("--seed", o.seed, "training seed");
  rp->add_option("--set", o.sets, "key=value override (repeatable)");
  rp->add_option("--out", out, "run directory (default runs/<preset>_s<seed>)");
  bool quiet = false;
  rp->add_flag("--quiet", quiet, "do not print per-step losses");

  auto* rep = app.add_subcommand("report", "ablation table over run directories");
  std::string rep_dir = "runs";
  rep->add_option("--dir", rep_dir, "directory searched for report.csv files");

  auto* ugr = app.add_subcommand("ugr", "unseen grapheme ratio of every Group B language");
  std::string unit = "grapheme";
  add_corpus_flags(ugr, o);
  ugr->add_option("--unit", unit, "grapheme, byte or phoneme")->check(CLI::IsMember({"grapheme", "byte", "phoneme"}));

  auto* presets = app.add_subcommand("presets", "list preset names and config keys");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      auto corpus = gen_synthetic_corpus(CorpusConfig::default_preset(), gen_seed);
      write_corpus(out, corpus, gen_seed);
      std::printf("wrote %zu utterances and %zu sentences to %s\n", corpus.utterances.size(), corpus.text.size(),
                  out.c_str());
    } else if (*train) {
      auto corpus = load_corpus(o);
      auto cfg = resolve_config(o, "maestro_u_byte");
      Trainer t(cfg, corpus);
      if (!resume.empty()) t.restore(load_checkpoint(resume));
      fs::create_directories(out);
      std::vector<LossBundle> hist;
      const auto stop = until ? std::min(*until, cfg.curriculum.total_steps()) : cfg.curriculum.total_steps();
      while (t.step() < stop) {
        hist.push_back(t.train_step());
        print_bundle(hist.back());
      }
      write_metrics_csv(fs::path(out) / "metrics.csv", hist, {});
      write_config_file(fs::path(out) / "config.txt", cfg);
      t.save(fs::path(out) / "model.ckpt");
    } else if (*ft) {
      auto corpus = load_corpus(o);
      auto cfg = resolve_config(o, "maestro_u_byte");
      Trainer t(cfg, corpus);
      t.restore(load_checkpoint(ckpt));
      fs::create_directories(out);
      std::vector<LossBundle> hist;
      t.finetune(ft_steps, [&](const LossBundle& b) {
        hist.push_back(b);
        print_bundle(b);
      });
      write_metrics_csv(fs::path(out) / "metrics.csv", hist, {});
      write_config_file(fs::path(out) / "config.txt", cfg);
      t.save(fs::path(out) / "model.ckpt");
    } else if (*ev) {
      auto corpus = load_corpus(o);
      if (o.config.empty() && o.preset.empty() && o.sets.empty()) {
        auto sibling = fs::path(ckpt).parent_path() / "config.txt";
        if (fs::exists(sibling)) o.config = sibling.string();
      }
      auto cfg = resolve_config(o, "maestro_u_byte");
      Trainer t(cfg, corpus);
      auto ck = load_checkpoint(ckpt);
      t.restore(ck);
      EvalOptions opt;
      opt.count_spaces = !no_spaces;
      EvalReport r;
      if (raw_weights) {
        r = evaluate(t.model(), corpus, opt);
      } else {
        Trainer::EmaScope ema(t);
        r = evaluate(t.model(), corpus, opt);
      }
      r.preset = cfg.preset;
      r.seed = cfg.seed;
      r.step = ck.step;
      for (const auto& w : r.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      std::fputs(format_report(r).c_str(), stdout);
      if (!out.empty()) write_report_csv(out, r);
    } else if (*rp) {
      auto corpus = load_corpus(o);
      o.preset = preset_name;
      auto cfg = resolve_config(o);
      if (out.empty()) out = "runs/" + preset_name + "_s" + std::to_string(cfg.seed);
      Trainer probe(cfg, corpus);  // validates before the long run
      (void)probe;
      auto res = run_experiment(cfg, corpus, out);
      if (!quiet)
        for (const auto& b : res.history)
          if (b.step % 50 == 0) print_bundle(b);
      std::fputs(format_report(res.report).c_str(), stdout);
      std::printf("artifacts in %s\n", out.c_str());
    } else if (*rep) {
      return cmd_report(rep_dir);
    } else if (*ugr) {
      auto corpus = load_corpus(o);
      const auto u = parse_text_unit(unit);
      std::vector<LanguageSpec> a;
      for (const auto& l : corpus.languages.all())
        if (l.group == Group::A) a.push_back(l);
      std::printf("%-10s %8s\n", "language", ("UGR(" + unit + ")").c_str());
      for (const auto& l : corpus.languages.all())
        if (l.group == Group::B) std::printf("%-10s %8.3f\n", l.name.c_str(), unseen_grapheme_ratio(l, a, u));
    } else if (*presets) {
      for (const auto& n : preset_names()) std::printf("%s\n", n.c_str());
      std::printf("\nconfig keys:\n%s", config_keys_help().c_str());
    }
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
