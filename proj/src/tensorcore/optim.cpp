#include "zsasr/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace zsasr {

double learning_rate(const AdamConfig& cfg, std::uint64_t step) {
  if (step == 0) return 0.0;
  const double s = double(step);
  const double w = double(std::max<std::uint64_t>(cfg.warmup_steps, 1));
  return cfg.peak_lr * std::min(s / w, std::sqrt(w / s));
}

OptimState make_optim_state(const AdamConfig& cfg, const ParamStore& params) {
  OptimState st;
  st.cfg = cfg;
  for (const auto& p : params.tensors()) {
    st.m.emplace_back(p.numel(), 0.0);
    st.v.emplace_back(p.numel(), 0.0);
  }
  return st;
}

bool adam_step(OptimState& st, ParamStore& params) {
  auto& ts = params.tensors();
  if (st.m.size() != ts.size()) throw std::invalid_argument("optimizer state does not match parameters");

  double sq = 0.0;
  for (const auto& p : ts) {
    for (double g : p.grad()) {
      if (!std::isfinite(g)) {
        ++st.skipped;
        return false;
      }
      sq += g * g;
    }
  }
  double clip = 1.0;
  if (st.cfg.clip_norm > 0.0) {
    const double norm = std::sqrt(sq);
    if (norm > st.cfg.clip_norm) clip = st.cfg.clip_norm / norm;
  }

  ++st.step;
  const double lr = learning_rate(st.cfg, st.step);
  const double b1 = st.cfg.beta1, b2 = st.cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, double(st.step));
  const double c2 = 1.0 - std::pow(b2, double(st.step));
  for (std::size_t i = 0; i < ts.size(); ++i) {
    auto w = ts[i].mutable_data();
    auto g = ts[i].grad();
    auto& m = st.m[i];
    auto& v = st.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g.empty() ? 0.0 : g[j] * clip;
      m[j] = b1 * m[j] + (1.0 - b1) * gj;
      v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + st.cfg.eps);
    }
  }
  return true;
}

EmaState make_ema_state(double decay, const ParamStore& params) {
  if (!(decay >= 0.0 && decay < 1.0)) throw std::invalid_argument("EMA decay must be in [0,1)");
  return EmaState{decay, params.snapshot()};
}

void ema_update(EmaState& st, const ParamStore& params) {
  const auto& ts = params.tensors();
  if (st.shadow.size() != ts.size()) {
    throw std::invalid_argument("EMA shadow tracks " + std::to_string(st.shadow.size()) +
                                " parameters, model has " + std::to_string(ts.size()));
  }
  for (std::size_t i = 0; i < ts.size(); ++i) {
    auto w = ts[i].data();
    auto& s = st.shadow[i];
    if (s.size() != w.size()) {
      throw std::invalid_argument("EMA shadow shape mismatch for " + params.names()[i]);
    }
    for (std::size_t j = 0; j < w.size(); ++j) s[j] = st.decay * s[j] + (1.0 - st.decay) * w[j];
  }
}

}  // namespace zsasr
