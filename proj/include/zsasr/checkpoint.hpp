#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "zsasr/optim.hpp"
#include "zsasr/params.hpp"

namespace zsasr {

// Binary checkpoint, little-endian:
//   "ZSCK" u32 version
//   u64 seed, u64 step, str meta
//   u64 n_params, per param: str name, u32 ndim, u64 dims[ndim], f64 data[]
//   optimizer: f64 peak_lr, u64 warmup, f64 beta1, beta2, eps, clip_norm,
//              u64 step, u64 skipped, then m[] and v[] per param
//   ema: f64 decay, shadow[] per param
// where str = u64 length + bytes.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::string meta;
  std::vector<std::string> names;
  std::vector<Shape> shapes;
  std::vector<std::vector<double>> values;
  OptimState optim;
  EmaState ema;
};

Checkpoint make_checkpoint(const ParamStore& params, const OptimState& optim, const EmaState& ema,
                           std::uint64_t seed, std::uint64_t step, std::string meta = {});

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies values into the store, verifying names and shapes.
void restore_params(const Checkpoint& ck, ParamStore& params);

}  // namespace zsasr
