#pragma once

#include <functional>
#include <string>
#include <vector>

#include "zsasr/tensor.hpp"

namespace zsasr {

struct GradCheckReport {
  double max_rel_error = 0.0;
  bool non_finite = false;
  bool passed = false;
  std::string worst;  // "param[i]" of the worst component
};

// Compares reverse-mode gradients of a scalar function against central
// differences. The error of each parameter is the max-abs deviation divided by
// the larger of the two gradients' max-abs magnitudes, floored at 1e-3 of the
// largest magnitude over all parameters so that exactly-zero gradients (e.g.
// softmax shift directions) are not judged on round-off. The report keeps the
// worst parameter.
GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                           double eps = 1e-5, double tol = 1e-4);

}  // namespace zsasr
