#pragma once

#include <cstdint>
#include <vector>

#include "zsasr/params.hpp"

namespace zsasr {

struct AdamConfig {
  double peak_lr = 1e-3;
  std::uint64_t warmup_steps = 100;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  double clip_norm = 0.0;  // global L2 clip, 0 disables
};

struct OptimState {
  AdamConfig cfg;
  std::uint64_t step = 0;  // updates applied
  std::uint64_t skipped = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// Linear warmup then inverse-sqrt decay; step counts from 1.
double learning_rate(const AdamConfig& cfg, std::uint64_t step);

OptimState make_optim_state(const AdamConfig& cfg, const ParamStore& params);

// Applies one update from the grads currently held by the store. Returns
// false (and bumps `skipped`) when any gradient is non-finite; parameters and
// moments are left untouched in that case. Parameters without a grad buffer
// are treated as having zero gradient.
bool adam_step(OptimState& state, ParamStore& params);

struct EmaState {
  double decay = 0.9999;
  std::vector<std::vector<double>> shadow;
};

EmaState make_ema_state(double decay, const ParamStore& params);
void ema_update(EmaState& state, const ParamStore& params);

}  // namespace zsasr
