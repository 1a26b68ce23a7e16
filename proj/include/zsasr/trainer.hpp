#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "zsasr/batch.hpp"
#include "zsasr/checkpoint.hpp"
#include "zsasr/eval.hpp"
#include "zsasr/model.hpp"
#include "zsasr/optim.hpp"

namespace zsasr {

struct CurriculumConfig {
  std::uint64_t phase1_steps = 500;  // speech only
  std::uint64_t phase2_offset = 0;   // then transcribed speech
  std::uint64_t phase3_offset = 15;  // then unspoken text
  std::uint64_t joint_steps = 300;
  std::uint64_t taper_window = 50;

  std::uint64_t paired_start() const { return phase1_steps + phase2_offset; }
  std::uint64_t text_start() const { return paired_start() + phase3_offset; }
  std::uint64_t total_steps() const { return text_start() + joint_steps; }
  void validate() const;
};

struct Streams {
  bool speech = false, paired = false, text = false;
  bool operator==(const Streams&) const = default;
};

Streams phase(std::uint64_t step, const CurriculumConfig& cfg);

struct LossWeights {
  double w_rnnt_paired = 1.0;
  double w_rnnt_text = 12.0;
  double w_consistency = 1.0;
  double w_contrastive = 1.0;
  double w_mlm = 1.0;
  double w_duration = 1.0;
  double w_aux = 1.0;  // byte or phoneme decoder on paired speech
  void validate() const;
};

// Linear 1 -> 0 ramp over the last taper_window steps.
double taper_factor(std::uint64_t step, const CurriculumConfig& cfg);
LossWeights effective_weights(std::uint64_t step, const CurriculumConfig& cfg, const LossWeights& w, bool taper);

struct LossTerm {
  std::string name;
  double value = 0.0;
  double weight = 0.0;
};

struct LossBundle {
  std::uint64_t step = 0;
  std::vector<LossTerm> terms;
  double total = 0.0;
  bool skipped = false;

  bool has(const std::string& name) const;
  const LossTerm& at(const std::string& name) const;
};

struct TrainConfig {
  std::string preset = "custom";
  std::uint64_t seed = 0;
  ModelConfig model;
  CurriculumConfig curriculum;
  LossWeights weights;
  BatchSizes batch;
  AdamConfig adam;
  double ema_decay = 0.95;

  bool speech_stream = true, paired_stream = true, text_stream = true;
  bool taper = true;
  bool consistency = true;
  bool consistency_two_sided = false;
  bool duration_training = true;
  DurationMode text_durations = DurationMode::predicted;
  bool text_masking = true;
  SpecMaskConfig spec;
  std::size_t uniform_max = 4;
  PoolOptions pools;

  double mask_prob = 0.4;
  std::size_t mask_span = 3;
  std::size_t n_distractors = 10;
  double temperature = 0.1;

  std::uint64_t finetune_steps = 0;
  double finetune_lr_scale = 0.1;

  void validate() const;
};

// Flat `key = value` lines; `#` starts a comment. Later keys override.
void apply_config_line(TrainConfig& cfg, const std::string& key, const std::string& value);
TrainConfig read_config_file(const std::filesystem::path& path, TrainConfig base = {});
void write_config_file(const std::filesystem::path& path, const TrainConfig& cfg);
std::string config_keys_help();

const std::vector<std::string>& preset_names();
// Throws std::invalid_argument listing the valid names.
TrainConfig preset_config(const std::string& name);

class Trainer {
 public:
  Trainer(const TrainConfig& cfg, const Corpus& corpus);

  const TrainConfig& config() const { return cfg_; }
  Model& model() { return *model_; }
  const Model& model() const { return *model_; }
  std::uint64_t step() const { return step_; }
  bool done() const { return step_ >= cfg_.curriculum.total_steps(); }
  const MixedBatch& last_batch() const { return batch_; }
  std::size_t empty_mlm_batches() const { return empty_mlm_; }
  const OptimState& optimizer() const { return optim_; }
  const EmaState& ema() const { return ema_; }

  // Called with each composed batch before it is consumed.
  std::function<void(std::uint64_t, const MixedBatch&)> batch_observer;

  MixedBatch next_batch(std::uint64_t step) const;
  LossBundle train_step();
  // Loss of a given batch under the current parameters; no update.
  LossBundle evaluate_batch(const MixedBatch& batch, std::uint64_t step);
  // Runs until done(); `on_step` sees every bundle.
  void run(const std::function<void(const LossBundle&)>& on_step = {});

  // RNN-T-only updates on the transcribed pool at a reduced peak lr.
  void finetune(std::uint64_t steps, const std::function<void(const LossBundle&)>& on_step = {});

  Checkpoint checkpoint() const;
  void save(const std::filesystem::path& path) const;
  void restore(const Checkpoint& ck);

  // Swaps the EMA shadow in for evaluation; restored on destruction.
  class EmaScope {
   public:
    explicit EmaScope(Trainer& t);
    ~EmaScope();
    EmaScope(const EmaScope&) = delete;
    EmaScope& operator=(const EmaScope&) = delete;

   private:
    Trainer& t_;
    std::vector<std::vector<double>> saved_;
  };

 private:
  Tensor speech_terms(const MixedBatch& b, std::uint64_t step, const LossWeights& w, LossBundle& out);
  Tensor paired_terms(const MixedBatch& b, std::uint64_t step, const LossWeights& w, LossBundle& out);
  Tensor text_terms(const MixedBatch& b, std::uint64_t step, const LossWeights& w, LossBundle& out);
  LossBundle forward(const MixedBatch& b, std::uint64_t step, Tensor& total);
  bool apply_update(LossBundle& bundle, Tensor& total);

  TrainConfig cfg_;
  const Corpus& corpus_;
  std::unique_ptr<Model> model_;
  Pools pools_;
  OptimState optim_;
  EmaState ema_;
  std::uint64_t step_ = 0;
  std::uint64_t finetuned_ = 0;
  MixedBatch batch_;
  std::size_t empty_mlm_ = 0;
};

struct ExperimentResult {
  TrainConfig config;
  EvalReport report;
  std::vector<LossBundle> history;
};

// Trains the preset (plus fine-tuning when configured), evaluates with the
// EMA weights and, when out_dir is non-empty, writes metrics.csv,
// report.csv, config.txt and model.ckpt there.
ExperimentResult run_experiment(const TrainConfig& cfg, const Corpus& corpus, const std::filesystem::path& out_dir = {});

void write_metrics_csv(const std::filesystem::path& path, const std::vector<LossBundle>& history, const EvalReport& rep);

}  // namespace zsasr
