#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "zsasr/corpus.hpp"
#include "zsasr/gradcheck.hpp"
#include "zsasr/selfsup.hpp"

using namespace zsasr;
namespace o = zsasr::ops;

namespace {

Tensor rand_mat(std::uint64_t seed, std::size_t r, std::size_t c, bool grad = false) {
  Rng rng(seed);
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.normal(0.0, 1.0);
  return Tensor::matrix(r, c, std::move(v), grad);
}

}  // namespace

TEST_CASE("quantizer nearest-neighbour identity and freezing") {
  auto q = make_quantizer(3, 4, 8, 7, {0, 0, 0}, {1, 1, 1});
  for (std::size_t c = 0; c < 8; ++c) {
    double n = 0;
    for (std::size_t j = 0; j < 4; ++j) n += q.codebook[c * 4 + j] * q.codebook[c * 4 + j];
    CHECK(n == doctest::Approx(1.0).epsilon(1e-12));
  }
  // Make code 5 the exact image of a chosen frame.
  std::vector<double> frame{0.4, -1.2, 2.0};
  auto z = q.project(frame);
  std::copy(z.begin(), z.end(), q.codebook.begin() + 5 * 4);
  auto ids = quantize(q, Tensor::matrix(1, 3, frame));
  CHECK(ids == std::vector<std::size_t>{5});
  auto x = rand_mat(1, 6, 3);
  CHECK(quantize(q, x) == quantize(q, x));
  auto q2 = make_quantizer(3, 4, 8, 7, {0, 0, 0}, {1, 1, 1});
  CHECK(q2.projection == q.projection);
}

TEST_CASE("codebook usage on the synthetic corpus") {
  auto corpus = gen_synthetic_corpus(CorpusConfig::default_preset(), 3);
  std::vector<const Utterance*> utts;
  for (const auto& u : corpus.utterances)
    if (u.split == Split::train) utts.push_back(&u);
  auto [mean, sd] = feature_statistics(utts);
  auto q = make_quantizer(corpus.config.feature_dim, 16, 64, 3, mean, sd);
  CHECK(codebook_usage(q, utts) >= 0.25);
}

TEST_CASE("speech masking") {
  Rng rng(1);
  auto x = rand_mat(2, 10, 4);
  auto mv = Tensor::full({4}, 9.0);
  auto [same, m0] = mask_speech(x, 0.0, 2, mv, rng);
  CHECK(same.same_node(x));
  CHECK(m0.indices().empty());

  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng r(s);
    auto [y, m] = mask_speech(x, 0.3, 3, mv, r);
    CHECK(m.indices().size() == 3);
    for (auto t : m.indices()) {
      CHECK(t < 10);
      CHECK(y.at(t, 0) == 9.0);
    }
  }
  for (std::uint64_t s = 0; s < 50; ++s) {
    Rng r(s);
    auto m = sample_speech_mask(2 + s % 17, 0.25 + 0.02 * double(s % 30), 2, r);
    CHECK(m.fraction() > 0.0);
    CHECK(m.fraction() <= 0.8);
  }
  CHECK(sample_speech_mask(1, 0.5, 2, rng).fraction() == 0.0);
  CHECK_THROWS_AS(sample_speech_mask(5, 0.2, 0, rng), std::invalid_argument);
}

TEST_CASE("contrastive loss closed forms") {
  Rng rng(3);
  // Positive similarity 1, every distractor -1.
  const std::size_t K = 5;
  std::vector<double> p(2 * 2), t(2 * 2);
  p = {1, 0, -1, 0};
  t = {1, 0, -1, 0};
  auto l = contrastive_loss(Tensor::matrix(2, 2, p), Tensor::matrix(2, 2, t), K, 0.1, rng).item();
  CHECK(l == doctest::Approx(std::log1p(1 * std::exp(-20.0))).epsilon(1e-12));
  CHECK(l < 1e-8);

  // All candidates identical: log(K + 1).
  auto same = Tensor::full({6, 3}, 0.5);
  CHECK(contrastive_loss(same, same, 3, 0.1, rng).item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(contrastive_loss(same, same, 50, 0.1, rng).item() == doctest::Approx(std::log(6.0)).epsilon(1e-12));

  for (int i = 0; i < 10; ++i) {
    CHECK(contrastive_loss(rand_mat(10 + i, 5, 3), rand_mat(20 + i, 5, 3), 3, 0.1, rng).item() >= 0.0);
  }
  CHECK_THROWS_AS(contrastive_loss(rand_mat(1, 1, 3), rand_mat(2, 1, 3), 3, 0.1, rng), std::invalid_argument);

  auto pr = rand_mat(30, 4, 3, true), tg = rand_mat(31, 4, 3);
  auto rep = grad_check([&] { Rng r(5); return contrastive_loss(pr, tg, 2, 0.5, r); }, {pr});
  CHECK(rep.passed);
}

TEST_CASE("mlm loss") {
  auto uniform = Tensor::zeros({3, 64});
  CHECK(mlm_loss(uniform, {1, 2, 63}).item() == doctest::Approx(std::log(64.0)).epsilon(1e-12));
  std::vector<double> v(2 * 4, -50.0);
  v[0 * 4 + 2] = 50.0;
  v[1 * 4 + 0] = 50.0;
  CHECK(mlm_loss(Tensor::matrix(2, 4, v), {2, 0}).item() < 1e-30);
  std::size_t counter = 0;
  CHECK(mlm_loss(Tensor::zeros({0, 4}), {}, &counter).item() == 0.0);
  CHECK(counter == 1);
  auto logits = rand_mat(4, 3, 5, true);
  auto rep = grad_check([&] { return mlm_loss(logits, {4, 0, 2}); }, {logits});
  CHECK(rep.passed);
}

TEST_CASE("losses see only masked frames") {
  // Gradient probe: rows not selected for the losses receive no gradient.
  ParamStore ps(9);
  SelfSupHeads heads(ps, "ss", 3, 5);
  auto enc = rand_mat(40, 6, 3, true);
  std::vector<std::size_t> masked{1, 4};
  auto sel = o::gather_rows(enc, masked);
  Rng rng(1);
  auto loss = o::add(contrastive_loss(heads.contrastive_proj(sel), rand_mat(41, 2, 3), 1, 0.1, rng),
                     mlm_loss(heads.mlm_classifier(sel), {0, 3}));
  loss.backward();
  for (std::size_t t = 0; t < 6; ++t) {
    double g = 0;
    for (std::size_t d = 0; d < 3; ++d) g += std::abs(enc.grad()[t * 3 + d]);
    if (t == 1 || t == 4) {
      CHECK(g > 0.0);
    } else {
      CHECK(g == 0.0);
    }
  }
}
