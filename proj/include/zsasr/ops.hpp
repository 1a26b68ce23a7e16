#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "zsasr/tensor.hpp"

// Differentiable op suite. Matrices are row-major R x C; "rows" are time
// steps or tokens throughout the project.
namespace zsasr::ops {

// Elementwise, shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

// a: R x C plus a bias row of C values broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& bias);
// Broadcasts a 1 x C (or C) row to R x C.
Tensor broadcast_rows(const Tensor& row, std::size_t rows);
// a: T x J, b: S x J -> (T*S) x J with row t*S+s = a[t] + b[s].
Tensor outer_add(const Tensor& a, const Tensor& b);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor swish(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor square(const Tensor& a);

Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);
// R x C -> R x 1
Tensor log_sum_exp_rows(const Tensor& a);
// Any shape -> scalar.
Tensor log_sum_exp(const Tensor& a);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// Row gather: out[i] = table[ids[i]]. Doubles as embedding lookup and
// duration-driven frame replication.
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);
Tensor embedding(const Tensor& table, std::span<const std::size_t> ids);
// out[i] = a[i, ids[i]] as an R x 1 column.
Tensor pick(const Tensor& a, std::span<const std::size_t> ids);

Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t len);
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t len);

// x: T x C, w: K x C (one filter per channel), bias: C. Same padding, odd K.
Tensor depthwise_conv1d(const Tensor& x, const Tensor& w, const Tensor& bias);
// x: T x C -> T x (K*C); row t holds x[t-K/2 .. t+K/2] with zero padding.
// A full 1-D convolution is unfold_time followed by matmul.
Tensor unfold_time(const Tensor& x, std::size_t kernel);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// R x C -> 1 x C
Tensor sum_rows(const Tensor& a);
// R x C -> R x 1
Tensor sum_cols(const Tensor& a);

Tensor l2_normalize_rows(const Tensor& a, double eps = 1e-8);
// Rows where replace[r] is set become `row` (1 x C), others pass through.
Tensor replace_rows(const Tensor& x, const std::vector<bool>& replace, const Tensor& row);

Tensor mse(const Tensor& a, const Tensor& b);

}  // namespace zsasr::ops
