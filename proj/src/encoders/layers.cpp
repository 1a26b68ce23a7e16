#include "zsasr/layers.hpp"

#include <cmath>

namespace zsasr::nn {

namespace o = zsasr::ops;

Linear::Linear(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out, bool bias,
               bool zero_init)
    : has_bias(bias) {
  w = zero_init ? ps.add_zeros(name + "/w", {in, out}) : ps.add_linear(name + "/w", in, out);
  if (bias) b = ps.add_zeros(name + "/b", {out});
}

Tensor Linear::operator()(const Tensor& x) const {
  auto y = o::matmul(x, w);
  return has_bias ? o::add_row(y, b) : y;
}

LayerNorm::LayerNorm(ParamStore& ps, const std::string& name, std::size_t dim)
    : gain(ps.add_ones(name + "/gain", {dim})), bias(ps.add_zeros(name + "/bias", {dim})) {}

FeedForward::FeedForward(ParamStore& ps, const std::string& name, std::size_t dim, std::size_t hidden)
    : norm(ps, name + "/ln", dim), up(ps, name + "/up", dim, hidden), down(ps, name + "/down", hidden, dim) {}

Tensor FeedForward::operator()(const Tensor& x) const { return down(o::swish(up(norm(x)))); }

SelfAttention::SelfAttention(ParamStore& ps, const std::string& name, std::size_t dim, std::size_t h)
    : q(ps, name + "/q", dim, dim),
      k(ps, name + "/k", dim, dim),
      v(ps, name + "/v", dim, dim),
      out(ps, name + "/out", dim, dim),
      heads(h) {
  if (dim % h != 0) throw std::invalid_argument("model dim " + std::to_string(dim) + " not divisible by heads");
}

Tensor SelfAttention::operator()(const Tensor& x) const {
  const std::size_t D = x.cols(), dh = D / heads;
  auto Q = q(x), K = k(x), V = v(x);
  const double inv = 1.0 / std::sqrt(double(dh));
  std::vector<Tensor> parts;
  parts.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    auto qh = o::slice_cols(Q, h * dh, dh);
    auto kh = o::slice_cols(K, h * dh, dh);
    auto vh = o::slice_cols(V, h * dh, dh);
    auto att = o::softmax_rows(o::scale(o::matmul(qh, o::transpose(kh)), inv));
    parts.push_back(o::matmul(att, vh));
  }
  return out(heads == 1 ? parts[0] : o::concat_cols(parts));
}

DepthwiseConv::DepthwiseConv(ParamStore& ps, const std::string& name, std::size_t dim, std::size_t kernel)
    : w(ps.add_normal(name + "/w", {kernel, dim}, 1.0 / std::sqrt(double(kernel)))),
      b(ps.add_zeros(name + "/b", {dim})) {}

LightweightConv::LightweightConv(ParamStore& ps, const std::string& name, std::size_t d, std::size_t kernel,
                                 std::size_t g)
    : logits(ps.add_normal(name + "/logits", {kernel, g}, 0.1)), b(ps.add_zeros(name + "/b", {d})), dim(d), groups(g) {
  if (d % g != 0) throw std::invalid_argument("lightweight conv channels not divisible by groups");
}

Tensor LightweightConv::operator()(const Tensor& x) const {
  // Normalize each group's filter over the kernel axis, then expand to channels.
  auto kern = o::transpose(o::softmax_rows(o::transpose(logits)));  // K x G
  std::vector<std::size_t> expand(dim);
  const std::size_t per = dim / groups;
  for (std::size_t c = 0; c < dim; ++c) expand[c] = c / per;
  auto full = o::transpose(o::gather_rows(o::transpose(kern), expand));  // K x D
  return o::depthwise_conv1d(x, full, b);
}

ConvModule::ConvModule(ParamStore& ps, const std::string& name, std::size_t d, std::size_t kernel)
    : norm(ps, name + "/ln", d),
      mid_norm(ps, name + "/mid_ln", d),
      pointwise_in(ps, name + "/pw_in", d, 2 * d),
      pointwise_out(ps, name + "/pw_out", d, d),
      depthwise(ps, name + "/dw", d, kernel),
      dim(d) {}

Tensor ConvModule::operator()(const Tensor& x) const {
  auto h = pointwise_in(norm(x));
  auto glu = o::mul(o::slice_cols(h, 0, dim), o::sigmoid(o::slice_cols(h, dim, dim)));
  return pointwise_out(o::swish(mid_norm(depthwise(glu))));
}

TransformerLayer::TransformerLayer(ParamStore& ps, const std::string& name, std::size_t dim, std::size_t heads,
                                   std::size_t ff_hidden)
    : attn_norm(ps, name + "/attn_ln", dim), attn(ps, name + "/attn", dim, heads), ff(ps, name + "/ff", dim, ff_hidden) {}

Tensor TransformerLayer::operator()(const Tensor& x) const {
  auto h = o::add(x, attn(attn_norm(x)));
  return o::add(h, ff(h));
}

Tensor add_positions(const Tensor& x, const Tensor& table) {
  if (x.rows() > table.rows()) {
    throw std::length_error("sequence of " + std::to_string(x.rows()) + " exceeds " +
                            std::to_string(table.rows()) + " learned positions");
  }
  return o::add(x, o::slice_rows(table, 0, x.rows()));
}

}  // namespace zsasr::nn
