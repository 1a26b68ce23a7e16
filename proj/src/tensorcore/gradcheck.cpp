#include "zsasr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace zsasr {

namespace {
constexpr double kScaleFloor = 1e-3;
}

GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                           double eps, double tol) {
  if (!(eps >= 1e-6 && eps <= 1e-4)) throw std::invalid_argument("grad_check eps must lie in [1e-6, 1e-4]");
  GradCheckReport rep;

  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  Tensor y = f();
  if (!std::isfinite(y.item())) {
    rep.non_finite = true;
    return rep;
  }
  y.backward();

  struct Cmp {
    double scale = 0.0, dev = 0.0;
    std::size_t worst = 0;
  };
  std::vector<Cmp> cmp(params.size());
  double global = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    std::vector<double> analytic(p.numel(), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    auto w = p.mutable_data();
    NoGradGuard ng;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      w[i] = orig + eps;
      const double fp = f().item();
      w[i] = orig - eps;
      const double fm = f().item();
      w[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        rep.non_finite = true;
        return rep;
      }
      const double numeric = (fp - fm) / (2.0 * eps);
      cmp[k].scale = std::max({cmp[k].scale, std::abs(analytic[i]), std::abs(numeric)});
      const double d = std::abs(analytic[i] - numeric);
      if (d > cmp[k].dev) {
        cmp[k].dev = d;
        cmp[k].worst = i;
      }
    }
    global = std::max(global, cmp[k].scale);
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double denom = std::max(cmp[k].scale, kScaleFloor * global);
    const double rel = denom > 0.0 ? cmp[k].dev / denom : 0.0;
    if (rel >= rep.max_rel_error) {
      rep.max_rel_error = rel;
      rep.worst = "param" + std::to_string(k) + "[" + std::to_string(cmp[k].worst) + "]";
    }
  }
  rep.passed = rep.max_rel_error <= tol;
  return rep;
}

}  // namespace zsasr
