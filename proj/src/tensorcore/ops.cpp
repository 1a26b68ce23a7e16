#include "zsasr/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

namespace zsasr::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;

// Grad buffer of parent i, or nullptr when it does not need one.
double* pgrad(detail::Node& self, std::size_t i) {
  auto& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  return p.grad_buffer().data();
}

const std::vector<double>& pval(detail::Node& self, std::size_t i) {
  return self.parents[i]->value;
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_matrix(const Tensor& a, const char* op) {
  if (a.dim() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
  }
}

template <class F, class G>
Tensor unary(const Tensor& a, F fwd, G dfdx) {
  std::vector<double> out(a.numel());
  auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  return Tensor::make_result(a.shape(), std::move(out), {a}, [dfdx](detail::Node& self) {
    double* ga = pgrad(self, 0);
    if (!ga) return;
    const auto& x = pval(self, 0);
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += self.grad[i] * dfdx(x[i], self.value[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (double* g = pgrad(self, p)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    if (double* g = pgrad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (double* g = pgrad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    const auto& x = pval(self, 0);
    const auto& y = pval(self, 1);
    if (double* g = pgrad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * y[i];
    }
    if (double* g = pgrad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * x[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor add_row(const Tensor& a, const Tensor& bias) {
  require_matrix(a, "add_row");
  const std::size_t R = a.rows(), C = a.cols();
  if (bias.numel() != C) {
    throw ShapeError("add_row: bias " + shape_str(bias.shape()) + " does not match " +
                     shape_str(a.shape()));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  auto b = bias.data();
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out[r * C + c] += b[c];
  return Tensor::make_result(a.shape(), std::move(out), {a, bias}, [R, C](detail::Node& self) {
    if (double* g = pgrad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (double* g = pgrad(self, 1)) {
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) g[c] += self.grad[r * C + c];
    }
  });
}

Tensor broadcast_rows(const Tensor& row, std::size_t rows) {
  const std::size_t C = row.numel();
  std::vector<double> out(rows * C);
  auto b = row.data();
  for (std::size_t r = 0; r < rows; ++r) std::copy(b.begin(), b.end(), out.begin() + r * C);
  return Tensor::make_result({rows, C}, std::move(out), {row}, [rows, C](detail::Node& self) {
    if (double* g = pgrad(self, 0)) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < C; ++c) g[c] += self.grad[r * C + c];
    }
  });
}

Tensor outer_add(const Tensor& a, const Tensor& b) {
  require_matrix(a, "outer_add");
  require_matrix(b, "outer_add");
  if (a.cols() != b.cols()) {
    throw ShapeError("outer_add: column mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const std::size_t T = a.rows(), S = b.rows(), J = a.cols();
  std::vector<double> out(T * S * J);
  auto x = a.data(), y = b.data();
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t s = 0; s < S; ++s) {
      double* o = out.data() + (t * S + s) * J;
      for (std::size_t j = 0; j < J; ++j) o[j] = x[t * J + j] + y[s * J + j];
    }
  return Tensor::make_result({T * S, J}, std::move(out), {a, b}, [T, S, J](detail::Node& self) {
    double* ga = pgrad(self, 0);
    double* gb = pgrad(self, 1);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t s = 0; s < S; ++s) {
        const double* g = self.grad.data() + (t * S + s) * J;
        for (std::size_t j = 0; j < J; ++j) {
          if (ga) ga[t * J + j] += g[j];
          if (gb) gb[s * J + j] += g[j];
        }
      }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t M = a.rows(), K = a.cols(), N = b.cols();
  if (b.rows() != K) {
    throw ShapeError("matmul: inner dimension mismatch " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(M * N);
  MapM(out.data(), M, N).noalias() = MapC(a.data().data(), M, K) * MapC(b.data().data(), K, N);
  return Tensor::make_result({M, N}, std::move(out), {a, b}, [M, K, N](detail::Node& self) {
    MapC g(self.grad.data(), M, N);
    if (double* ga = pgrad(self, 0)) {
      MapM(ga, M, K).noalias() += g * MapC(pval(self, 1).data(), K, N).transpose();
    }
    if (double* gb = pgrad(self, 1)) {
      MapM(gb, K, N).noalias() += MapC(pval(self, 0).data(), M, K).transpose() * g;
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t R = a.rows(), C = a.cols();
  std::vector<double> out(R * C);
  auto x = a.data();
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out[c * R + r] = x[r * C + c];
  return Tensor::make_result({C, R}, std::move(out), {a}, [R, C](detail::Node& self) {
    if (double* g = pgrad(self, 0)) {
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) g[r * C + c] += self.grad[c * R + r];
    }
  });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0 ? x : 0.0; },
               [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor swish(const Tensor& a) {
  return unary(a, [](double x) { return x * stable_sigmoid(x); },
               [](double x, double) {
                 const double s = stable_sigmoid(x);
                 return s + x * s * (1.0 - s);
               });
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor softplus(const Tensor& a) {
  return unary(a, stable_softplus, [](double x, double) { return stable_sigmoid(x); });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor softmax_rows(const Tensor& a) {
  require_matrix(a, "softmax_rows");
  const std::size_t R = a.rows(), C = a.cols();
  std::vector<double> out(R * C);
  auto x = a.data();
  for (std::size_t r = 0; r < R; ++r) {
    const double* xr = x.data() + r * C;
    double* o = out.data() + r * C;
    const double mx = *std::max_element(xr, xr + C);
    double z = 0;
    for (std::size_t c = 0; c < C; ++c) z += (o[c] = std::exp(xr[c] - mx));
    for (std::size_t c = 0; c < C; ++c) o[c] /= z;
  }
  return Tensor::make_result(a.shape(), std::move(out), {a}, [R, C](detail::Node& self) {
    double* g = pgrad(self, 0);
    if (!g) return;
    for (std::size_t r = 0; r < R; ++r) {
      const double* y = self.value.data() + r * C;
      const double* gy = self.grad.data() + r * C;
      double dot = 0;
      for (std::size_t c = 0; c < C; ++c) dot += gy[c] * y[c];
      for (std::size_t c = 0; c < C; ++c) g[r * C + c] += y[c] * (gy[c] - dot);
    }
  });
}

Tensor log_softmax_rows(const Tensor& a) {
  require_matrix(a, "log_softmax_rows");
  const std::size_t R = a.rows(), C = a.cols();
  std::vector<double> out(R * C);
  auto x = a.data();
  for (std::size_t r = 0; r < R; ++r) {
    const double* xr = x.data() + r * C;
    const double mx = *std::max_element(xr, xr + C);
    double z = 0;
    for (std::size_t c = 0; c < C; ++c) z += std::exp(xr[c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < C; ++c) out[r * C + c] = xr[c] - lse;
  }
  return Tensor::make_result(a.shape(), std::move(out), {a}, [R, C](detail::Node& self) {
    double* g = pgrad(self, 0);
    if (!g) return;
    for (std::size_t r = 0; r < R; ++r) {
      const double* y = self.value.data() + r * C;
      const double* gy = self.grad.data() + r * C;
      double s = 0;
      for (std::size_t c = 0; c < C; ++c) s += gy[c];
      for (std::size_t c = 0; c < C; ++c) g[r * C + c] += gy[c] - std::exp(y[c]) * s;
    }
  });
}

Tensor log_sum_exp_rows(const Tensor& a) {
  require_matrix(a, "log_sum_exp_rows");
  const std::size_t R = a.rows(), C = a.cols();
  std::vector<double> out(R);
  auto x = a.data();
  for (std::size_t r = 0; r < R; ++r) {
    const double* xr = x.data() + r * C;
    const double mx = *std::max_element(xr, xr + C);
    double z = 0;
    for (std::size_t c = 0; c < C; ++c) z += std::exp(xr[c] - mx);
    out[r] = mx + std::log(z);
  }
  return Tensor::make_result({R, 1}, std::move(out), {a}, [R, C](detail::Node& self) {
    double* g = pgrad(self, 0);
    if (!g) return;
    const auto& x = pval(self, 0);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c)
        g[r * C + c] += self.grad[r] * std::exp(x[r * C + c] - self.value[r]);
  });
}

Tensor log_sum_exp(const Tensor& a) {
  auto x = a.data();
  if (x.empty()) throw ShapeError("log_sum_exp of an empty tensor");
  const double mx = *std::max_element(x.begin(), x.end());
  double z = 0;
  for (double v : x) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  return Tensor::make_result({1}, {lse}, {a}, [](detail::Node& self) {
    double* g = pgrad(self, 0);
    if (!g) return;
    const auto& x = pval(self, 0);
    for (std::size_t i = 0; i < x.size(); ++i) g[i] += self.grad[0] * std::exp(x[i] - self.value[0]);
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_matrix(x, "layer_norm");
  const std::size_t R = x.rows(), C = x.cols();
  if (gamma.numel() != C || beta.numel() != C) {
    throw ShapeError("layer_norm: gain/bias " + shape_str(gamma.shape()) + "/" +
                     shape_str(beta.shape()) + " do not match " + shape_str(x.shape()));
  }
  std::vector<double> out(R * C), xhat(R * C), inv_std(R);
  auto xv = x.data();
  auto gv = gamma.data(), bv = beta.data();
  for (std::size_t r = 0; r < R; ++r) {
    const double* xr = xv.data() + r * C;
    double m = 0;
    for (std::size_t c = 0; c < C; ++c) m += xr[c];
    m /= double(C);
    double var = 0;
    for (std::size_t c = 0; c < C; ++c) var += (xr[c] - m) * (xr[c] - m);
    var /= double(C);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < C; ++c) {
      xhat[r * C + c] = (xr[c] - m) * inv_std[r];
      out[r * C + c] = xhat[r * C + c] * gv[c] + bv[c];
    }
  }
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [R, C, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& self) {
        const auto& gv = pval(self, 1);
        double* gx = pgrad(self, 0);
        double* gg = pgrad(self, 1);
        double* gb = pgrad(self, 2);
        std::vector<double> dxhat(C);
        for (std::size_t r = 0; r < R; ++r) {
          const double* gy = self.grad.data() + r * C;
          const double* xh = xhat.data() + r * C;
          double s1 = 0, s2 = 0;
          for (std::size_t c = 0; c < C; ++c) {
            if (gg) gg[c] += gy[c] * xh[c];
            if (gb) gb[c] += gy[c];
            dxhat[c] = gy[c] * gv[c];
            s1 += dxhat[c];
            s2 += dxhat[c] * xh[c];
          }
          if (gx) {
            const double n = double(C);
            for (std::size_t c = 0; c < C; ++c)
              gx[r * C + c] += inv_std[r] * (dxhat[c] - s1 / n - xh[c] * s2 / n);
          }
        }
      });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  require_matrix(table, "gather_rows");
  const std::size_t V = table.rows(), C = table.cols(), N = ids.size();
  std::vector<double> out(N * C);
  auto tv = table.data();
  for (std::size_t i = 0; i < N; ++i) {
    if (ids[i] >= V) {
      throw std::out_of_range("gather_rows: index " + std::to_string(ids[i]) +
                              " outside table of " + std::to_string(V) + " rows");
    }
    std::copy_n(tv.data() + ids[i] * C, C, out.data() + i * C);
  }
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return Tensor::make_result({N, C}, std::move(out), {table},
                             [C, idx = std::move(idx)](detail::Node& self) {
                               double* g = pgrad(self, 0);
                               if (!g) return;
                               for (std::size_t i = 0; i < idx.size(); ++i)
                                 for (std::size_t c = 0; c < C; ++c)
                                   g[idx[i] * C + c] += self.grad[i * C + c];
                             });
}

Tensor embedding(const Tensor& table, std::span<const std::size_t> ids) {
  return gather_rows(table, ids);
}

Tensor pick(const Tensor& a, std::span<const std::size_t> ids) {
  require_matrix(a, "pick");
  const std::size_t R = a.rows(), C = a.cols();
  if (ids.size() != R) {
    throw ShapeError("pick: " + std::to_string(ids.size()) + " ids for " + shape_str(a.shape()));
  }
  std::vector<double> out(R);
  for (std::size_t r = 0; r < R; ++r) {
    if (ids[r] >= C) throw std::out_of_range("pick: class id " + std::to_string(ids[r]));
    out[r] = a.data()[r * C + ids[r]];
  }
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return Tensor::make_result({R, 1}, std::move(out), {a},
                             [C, idx = std::move(idx)](detail::Node& self) {
                               double* g = pgrad(self, 0);
                               if (!g) return;
                               for (std::size_t r = 0; r < idx.size(); ++r)
                                 g[r * C + idx[r]] += self.grad[r];
                             });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  const std::size_t R = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t C = 0;
  for (const auto& p : parts) {
    if (p.rows() != R) {
      throw ShapeError("concat_cols: row mismatch " + shape_str(parts[0].shape()) + " vs " +
                       shape_str(p.shape()));
    }
    widths.push_back(p.cols());
    C += p.cols();
  }
  std::vector<double> out(R * C);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto v = parts[k].data();
    for (std::size_t r = 0; r < R; ++r)
      std::copy_n(v.data() + r * widths[k], widths[k], out.data() + r * C + off);
    off += widths[k];
  }
  return Tensor::make_result({R, C}, std::move(out), parts,
                             [R, C, widths = std::move(widths)](detail::Node& self) {
                               std::size_t off = 0;
                               for (std::size_t k = 0; k < widths.size(); ++k) {
                                 if (double* g = pgrad(self, k)) {
                                   for (std::size_t r = 0; r < R; ++r)
                                     for (std::size_t c = 0; c < widths[k]; ++c)
                                       g[r * widths[k] + c] += self.grad[r * C + off + c];
                                 }
                                 off += widths[k];
                               }
                             });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows of nothing");
  const std::size_t C = parts[0].cols();
  std::vector<std::size_t> counts;
  std::size_t R = 0;
  for (const auto& p : parts) {
    if (p.cols() != C) {
      throw ShapeError("concat_rows: column mismatch " + shape_str(parts[0].shape()) + " vs " +
                       shape_str(p.shape()));
    }
    counts.push_back(p.numel());
    R += p.rows();
  }
  std::vector<double> out;
  out.reserve(R * C);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return Tensor::make_result({R, C}, std::move(out), parts,
                             [counts = std::move(counts)](detail::Node& self) {
                               std::size_t off = 0;
                               for (std::size_t k = 0; k < counts.size(); ++k) {
                                 if (double* g = pgrad(self, k)) {
                                   for (std::size_t i = 0; i < counts[k]; ++i)
                                     g[i] += self.grad[off + i];
                                 }
                                 off += counts[k];
                               }
                             });
}

Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t len) {
  require_matrix(a, "slice_rows");
  const std::size_t C = a.cols();
  if (start + len > a.rows()) {
    throw ShapeError("slice_rows: [" + std::to_string(start) + "," + std::to_string(start + len) +
                     ") outside " + shape_str(a.shape()));
  }
  std::vector<double> out(a.data().begin() + start * C, a.data().begin() + (start + len) * C);
  return Tensor::make_result({len, C}, std::move(out), {a}, [start, C](detail::Node& self) {
    if (double* g = pgrad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[start * C + i] += self.grad[i];
    }
  });
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t len) {
  require_matrix(a, "slice_cols");
  const std::size_t R = a.rows(), C = a.cols();
  if (start + len > C) {
    throw ShapeError("slice_cols: [" + std::to_string(start) + "," + std::to_string(start + len) +
                     ") outside " + shape_str(a.shape()));
  }
  std::vector<double> out(R * len);
  auto v = a.data();
  for (std::size_t r = 0; r < R; ++r) std::copy_n(v.data() + r * C + start, len, out.data() + r * len);
  return Tensor::make_result({R, len}, std::move(out), {a}, [R, C, start, len](detail::Node& self) {
    if (double* g = pgrad(self, 0)) {
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < len; ++c) g[r * C + start + c] += self.grad[r * len + c];
    }
  });
}

Tensor depthwise_conv1d(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_matrix(x, "depthwise_conv1d");
  require_matrix(w, "depthwise_conv1d");
  const std::size_t T = x.rows(), C = x.cols(), K = w.rows();
  if (w.cols() != C || bias.numel() != C || K % 2 == 0) {
    throw ShapeError("depthwise_conv1d: input " + shape_str(x.shape()) + ", filters " +
                     shape_str(w.shape()) + ", bias " + shape_str(bias.shape()));
  }
  const long half = long(K / 2);
  std::vector<double> out(T * C);
  auto xv = x.data(), wv = w.data(), bv = bias.data();
  for (std::size_t t = 0; t < T; ++t) {
    double* o = out.data() + t * C;
    for (std::size_t c = 0; c < C; ++c) o[c] = bv[c];
    for (std::size_t k = 0; k < K; ++k) {
      const long s = long(t) + long(k) - half;
      if (s < 0 || s >= long(T)) continue;
      const double* xr = xv.data() + std::size_t(s) * C;
      const double* wr = wv.data() + k * C;
      for (std::size_t c = 0; c < C; ++c) o[c] += wr[c] * xr[c];
    }
  }
  return Tensor::make_result({T, C}, std::move(out), {x, w, bias},
                             [T, C, K, half](detail::Node& self) {
                               const auto& xv = pval(self, 0);
                               const auto& wv = pval(self, 1);
                               double* gx = pgrad(self, 0);
                               double* gw = pgrad(self, 1);
                               double* gb = pgrad(self, 2);
                               for (std::size_t t = 0; t < T; ++t) {
                                 const double* g = self.grad.data() + t * C;
                                 if (gb)
                                   for (std::size_t c = 0; c < C; ++c) gb[c] += g[c];
                                 for (std::size_t k = 0; k < K; ++k) {
                                   const long s = long(t) + long(k) - half;
                                   if (s < 0 || s >= long(T)) continue;
                                   const std::size_t si = std::size_t(s) * C;
                                   for (std::size_t c = 0; c < C; ++c) {
                                     if (gw) gw[k * C + c] += g[c] * xv[si + c];
                                     if (gx) gx[si + c] += g[c] * wv[k * C + c];
                                   }
                                 }
                               }
                             });
}

Tensor unfold_time(const Tensor& x, std::size_t kernel) {
  require_matrix(x, "unfold_time");
  if (kernel % 2 == 0) throw ShapeError("unfold_time: kernel must be odd");
  const std::size_t T = x.rows(), C = x.cols();
  const long half = long(kernel / 2);
  std::vector<double> out(T * kernel * C, 0.0);
  auto xv = x.data();
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t k = 0; k < kernel; ++k) {
      const long s = long(t) + long(k) - half;
      if (s < 0 || s >= long(T)) continue;
      std::copy_n(xv.data() + std::size_t(s) * C, C, out.data() + (t * kernel + k) * C);
    }
  return Tensor::make_result({T, kernel * C}, std::move(out), {x},
                             [T, C, kernel, half](detail::Node& self) {
                               double* g = pgrad(self, 0);
                               if (!g) return;
                               for (std::size_t t = 0; t < T; ++t)
                                 for (std::size_t k = 0; k < kernel; ++k) {
                                   const long s = long(t) + long(k) - half;
                                   if (s < 0 || s >= long(T)) continue;
                                   const double* src = self.grad.data() + (t * kernel + k) * C;
                                   double* dst = g + std::size_t(s) * C;
                                   for (std::size_t c = 0; c < C; ++c) dst[c] += src[c];
                                 }
                             });
}

Tensor sum(const Tensor& a) {
  double s = 0;
  for (double v : a.data()) s += v;
  return Tensor::make_result({1}, {s}, {a}, [](detail::Node& self) {
    double* g = pgrad(self, 0);
    if (!g) return;
    const std::size_t n = self.parents[0]->value.size();
    for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), 1.0 / double(a.numel()));
}

Tensor sum_rows(const Tensor& a) {
  require_matrix(a, "sum_rows");
  const std::size_t R = a.rows(), C = a.cols();
  std::vector<double> out(C, 0.0);
  auto v = a.data();
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out[c] += v[r * C + c];
  return Tensor::make_result({1, C}, std::move(out), {a}, [R, C](detail::Node& self) {
    if (double* g = pgrad(self, 0)) {
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) g[r * C + c] += self.grad[c];
    }
  });
}

Tensor sum_cols(const Tensor& a) {
  require_matrix(a, "sum_cols");
  const std::size_t R = a.rows(), C = a.cols();
  std::vector<double> out(R, 0.0);
  auto v = a.data();
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out[r] += v[r * C + c];
  return Tensor::make_result({R, 1}, std::move(out), {a}, [R, C](detail::Node& self) {
    if (double* g = pgrad(self, 0)) {
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) g[r * C + c] += self.grad[r];
    }
  });
}

Tensor l2_normalize_rows(const Tensor& a, double eps) {
  require_matrix(a, "l2_normalize_rows");
  const std::size_t R = a.rows(), C = a.cols();
  std::vector<double> out(R * C), norms(R);
  auto v = a.data();
  for (std::size_t r = 0; r < R; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < C; ++c) s += v[r * C + c] * v[r * C + c];
    norms[r] = std::sqrt(s + eps);
    for (std::size_t c = 0; c < C; ++c) out[r * C + c] = v[r * C + c] / norms[r];
  }
  return Tensor::make_result(a.shape(), std::move(out), {a},
                             [R, C, norms = std::move(norms)](detail::Node& self) {
                               double* g = pgrad(self, 0);
                               if (!g) return;
                               for (std::size_t r = 0; r < R; ++r) {
                                 const double* y = self.value.data() + r * C;
                                 const double* gy = self.grad.data() + r * C;
                                 double dot = 0;
                                 for (std::size_t c = 0; c < C; ++c) dot += gy[c] * y[c];
                                 for (std::size_t c = 0; c < C; ++c)
                                   g[r * C + c] += (gy[c] - y[c] * dot) / norms[r];
                               }
                             });
}

Tensor replace_rows(const Tensor& x, const std::vector<bool>& replace, const Tensor& row) {
  require_matrix(x, "replace_rows");
  const std::size_t R = x.rows(), C = x.cols();
  if (replace.size() != R || row.numel() != C) {
    throw ShapeError("replace_rows: mask of " + std::to_string(replace.size()) + ", row " +
                     shape_str(row.shape()) + " for " + shape_str(x.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  auto rv = row.data();
  for (std::size_t r = 0; r < R; ++r)
    if (replace[r]) std::copy(rv.begin(), rv.end(), out.begin() + r * C);
  return Tensor::make_result(x.shape(), std::move(out), {x, row},
                             [R, C, replace](detail::Node& self) {
                               double* gx = pgrad(self, 0);
                               double* gr = pgrad(self, 1);
                               for (std::size_t r = 0; r < R; ++r)
                                 for (std::size_t c = 0; c < C; ++c) {
                                   const double g = self.grad[r * C + c];
                                   if (replace[r]) {
                                     if (gr) gr[c] += g;
                                   } else if (gx) {
                                     gx[r * C + c] += g;
                                   }
                                 }
                             });
}

Tensor mse(const Tensor& a, const Tensor& b) { return mean(square(sub(a, b))); }

}  // namespace zsasr::ops
