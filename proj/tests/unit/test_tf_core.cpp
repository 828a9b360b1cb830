#include <cmath>

#include "bicl/errors.hpp"
#include "bicl/rng.hpp"
#include "bicl/tf_core.hpp"
#include "doctest.h"

using namespace bicl;

namespace {

MatrixD random_matrix(int r, int c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  MatrixD m(r, c);
  for (double& v : m.values()) v = rng.uniform(lo, hi);
  return m;
}

// Independent evaluation of X + V X softmax((K X)^T (Q X)) with long double.
MatrixD attention_oracle(const AttnParams& p, const MatrixD& x) {
  const int D = x.rows(), n = x.cols(), k = p.key.rows();
  std::vector<long double> kx(static_cast<std::size_t>(k * n), 0), qx(static_cast<std::size_t>(k * n), 0),
      vx(static_cast<std::size_t>(D * n), 0);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < n; ++j)
      for (int r = 0; r < D; ++r) {
        kx[static_cast<std::size_t>(i * n + j)] += static_cast<long double>(p.key(i, r)) * x(r, j);
        qx[static_cast<std::size_t>(i * n + j)] += static_cast<long double>(p.query(i, r)) * x(r, j);
      }
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < n; ++j)
      for (int r = 0; r < D; ++r) vx[static_cast<std::size_t>(i * n + j)] += static_cast<long double>(p.value(i, r)) * x(r, j);
  MatrixD out = x;
  for (int col = 0; col < n; ++col) {
    std::vector<long double> s(static_cast<std::size_t>(n), 0);
    for (int a = 0; a < n; ++a)
      for (int i = 0; i < k; ++i)
        s[static_cast<std::size_t>(a)] += kx[static_cast<std::size_t>(i * n + a)] * qx[static_cast<std::size_t>(i * n + col)];
    long double z = 0;
    for (auto& v : s) z += (v = std::exp(v));
    for (int i = 0; i < D; ++i) {
      long double acc = 0;
      for (int a = 0; a < n; ++a) acc += vx[static_cast<std::size_t>(i * n + a)] * s[static_cast<std::size_t>(a)] / z;
      out(i, col) += static_cast<double>(acc);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("softmax columns") {
  MatrixD s(2, 1);
  auto out = softmax_columns(s);
  CHECK(out(0, 0) == 0.5);
  s(1, 0) = 30.0;
  CHECK(softmax_columns(s)(1, 0) >= 1.0 - std::exp(-30.0));
  MatrixD t(3, 1);
  t(0, 0) = 1, t(1, 0) = 2, t(2, 0) = 3;
  const auto p = softmax_columns(t);
  const long double z = std::exp(1.0L) + std::exp(2.0L) + std::exp(3.0L);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(p(i, 0) - static_cast<double>(std::exp(static_cast<long double>(i + 1)) / z)) <= 1e-12);
  Rng rng(1);
  MatrixD r = random_matrix(5, 4, rng, -5, 5);
  MatrixD shifted = r;
  for (int i = 0; i < 5; ++i) shifted(i, 2) += 17.5;
  const auto a = softmax_columns(r), b = softmax_columns(shifted);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a.values()[i] - b.values()[i]) <= 1e-12);
  MatrixD bad(2, 1);
  bad(0, 0) = NAN;
  CHECK_THROWS_AS(softmax_columns(bad), NumericError);
}

TEST_CASE("attention") {
  Rng rng(2);
  const MatrixD x = random_matrix(4, 3, rng);
  AttnParams zero{MatrixD(4, 4), MatrixD(2, 4), MatrixD(2, 4)};
  CHECK(attention(zero, x) == x);
  AttnParams uniform{MatrixD::identity(4, -1.0), MatrixD(2, 4), MatrixD(2, 4)};
  const auto u = attention(uniform, x);
  for (int i = 0; i < 4; ++i) {
    const double mean = (x(i, 0) + x(i, 1) + x(i, 2)) / 3.0;
    for (int j = 0; j < 3; ++j) CHECK(u(i, j) == doctest::Approx(x(i, j) - mean).epsilon(1e-14));
  }
  AttnParams p{random_matrix(4, 4, rng), random_matrix(3, 4, rng), random_matrix(3, 4, rng)};
  const auto got = attention(p, x), want = attention_oracle(p, x);
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got.values()[i] - want.values()[i]) <= 1e-12);
  const auto last = attention_last_column(p, x);
  for (int i = 0; i < 4; ++i) CHECK(last[static_cast<std::size_t>(i)] == doctest::Approx(got(i, 2)).epsilon(1e-14));
}

TEST_CASE("feed forward and layer composition") {
  Rng rng(3);
  const MatrixD x = random_matrix(4, 3, rng, 0.0, 1.0);
  FfParams id{random_matrix(4, 4, rng), MatrixD(4, 4)};
  CHECK(feed_forward(id, x) == x);
  FfParams cancel{MatrixD::identity(4), MatrixD::identity(4, -1.0)};
  const auto cancelled = feed_forward(cancel, x);
  for (double v : cancelled.values()) CHECK(v == 0.0);
  FfParams p{random_matrix(4, 4, rng), random_matrix(4, 4, rng)};
  const auto got = feed_forward(p, x);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 4; ++i) {
      long double acc = x(i, c);
      for (int h = 0; h < 4; ++h) {
        long double pre = 0;
        for (int r = 0; r < 4; ++r) pre += static_cast<long double>(p.w1(h, r)) * x(r, c);
        acc += static_cast<long double>(p.w2(i, h)) * std::max(pre, 0.0L);
      }
      CHECK(std::abs(got(i, c) - static_cast<double>(acc)) <= 1e-12);
    }
  LayerParams zero = zero_layer(4, 2);
  CHECK(tf_layer(zero, x) == x);
  // Attention-then-FF differs from FF-then-attention on a crafted input.
  LayerParams l{AttnParams{MatrixD::identity(4, -1.0), MatrixD(2, 4), MatrixD(2, 4)},
                FfParams{MatrixD::identity(4), MatrixD::identity(4, 1.0)}};
  MatrixD y(4, 2);
  y(0, 0) = 1.0;
  y(0, 1) = -1.0;
  const auto af = tf_layer(l, y);
  const auto fa = attention(l.attn, feed_forward(l.ff, y));
  CHECK(!(af == fa));
}

TEST_CASE("read_last and linear_head") {
  MatrixD z(2, 2);
  z(0, 1) = 3, z(1, 1) = 4;
  CHECK(read_last(z) == std::vector<double>{3, 4});
  CHECK_THROWS(read_last(MatrixD(2, 0)));
  MatrixD a(1, 2);
  a(0, 0) = 2, a(0, 1) = -1;
  CHECK(linear_head(a, std::vector<double>{3, 4}) == std::vector<double>{2});
  CHECK_THROWS(linear_head(a, std::vector<double>{1}));
}

TEST_CASE("layer norm moments and constant columns") {
  Rng rng(4);
  const auto x = random_matrix(8, 5, rng, -3, 3);
  std::vector<double> gain(8, 1.0), bias(8, 0.0);
  MatrixD out(8, 5);
  layer_norm_columns<double>(x.cref(), gain, bias, out.ref());
  for (int c = 0; c < 5; ++c) {
    double m = 0, v = 0;
    for (int r = 0; r < 8; ++r) m += out(r, c);
    m /= 8;
    for (int r = 0; r < 8; ++r) v += (out(r, c) - m) * (out(r, c) - m);
    v /= 8;
    CHECK(std::abs(m) <= 1e-6);
    CHECK(std::abs(v - 1.0) <= 1e-5);
  }
  MatrixD constant(3, 1, 2.5);
  std::vector<double> g3{2, 3, 4}, b3{0.1, 0.2, 0.3};
  MatrixD o3(3, 1);
  layer_norm_columns<double>(constant.cref(), g3, b3, o3.ref());
  for (int r = 0; r < 3; ++r) CHECK(o3(r, 0) == b3[static_cast<std::size_t>(r)]);
}

TEST_CASE("multi-head attention with one head equals single-head attention") {
  Rng rng(5);
  const MatrixD x = random_matrix(6, 5, rng);
  const MatrixD wq = random_matrix(6, 6, rng), wk = random_matrix(6, 6, rng), wv = random_matrix(6, 6, rng);
  const MatrixD eye = MatrixD::identity(6);
  MultiHeadWeights<double> w{wq.cref(), wk.cref(), wv.cref(), eye.cref(), 1, false, {}};
  MatrixD out(6, 5);
  multihead_attention<double>(w, x.cref(), 0, out.ref());
  const auto ref = attention(AttnParams{wv, wk, wq}, x);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.values()[i] == doctest::Approx(ref.values()[i]).epsilon(1e-12));
  // Query subset: only the last column.
  MatrixD tail(6, 1);
  multihead_attention<double>(w, x.cref(), 4, tail.ref());
  for (int r = 0; r < 6; ++r) CHECK(tail(r, 0) == doctest::Approx(ref(r, 4)).epsilon(1e-12));
  MultiHeadWeights<double> bad{wq.cref(), wk.cref(), wv.cref(), eye.cref(), 4, false, {}};
  CHECK_THROWS_AS(multihead_attention<double>(bad, x.cref(), 0, out.ref()), std::invalid_argument);
}

TEST_CASE("forward ops are bit-stable") {
  Rng rng(6);
  const MatrixD x = random_matrix(5, 7, rng);
  AttnParams p{random_matrix(5, 5, rng), random_matrix(3, 5, rng), random_matrix(3, 5, rng)};
  CHECK(attention(p, x) == attention(p, x));
}
