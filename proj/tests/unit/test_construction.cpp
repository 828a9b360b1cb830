#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>

#include "bicl/construction.hpp"
#include "bicl/errors.hpp"
#include "bicl/oracles.hpp"
#include "doctest.h"

using namespace bicl;

namespace {

double eigen_norm(const MatrixD& a) {
  Eigen::MatrixXd m(a.rows(), a.cols());
  for (int r = 0; r < a.rows(); ++r)
    for (int c = 0; c < a.cols(); ++c) m(r, c) = a(r, c);
  return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

std::shared_ptr<const BayesNet> make_net(const StructureSpec& s, int d, Rng& rng) {
  return std::make_shared<const BayesNet>(random_bayesnet(s, d, rng));
}

// Column-by-column score (K x_i)^T (Q x_q) computed without tf_core.
std::vector<double> hand_scores(const LayerParams& l2, const MatrixD& xt) {
  const int D = xt.rows(), n = xt.cols(), k = l2.attn.key.rows();
  std::vector<double> q(static_cast<std::size_t>(k), 0.0);
  for (int i = 0; i < k; ++i)
    for (int r = 0; r < D; ++r) q[static_cast<std::size_t>(i)] += l2.attn.query(i, r) * xt(r, n - 1);
  std::vector<double> s(static_cast<std::size_t>(n), 0.0);
  for (int c = 0; c < n; ++c)
    for (int i = 0; i < k; ++i) {
      double kv = 0.0;
      for (int r = 0; r < D; ++r) kv += l2.attn.key(i, r) * xt(r, c);
      s[static_cast<std::size_t>(c)] += kv * q[static_cast<std::size_t>(i)];
    }
  return s;
}

}  // namespace

TEST_CASE("selection blocks for a two-node chain") {
  const BayesNet bn(2, ParentSets{{}, {0}}, {{0.5, 0.5}, {0.5, 0.5, 0.5, 0.5}});
  const MatrixD a = parent_selection_blocks(bn);
  REQUIRE(a.rows() == 4);
  REQUIRE(a.cols() == 6);
  auto block_is = [&](int bi, int bj, double diag) {
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c)
        if (a(bi * 2 + r, bj * 2 + c) != (r == c ? diag : 0.0)) return false;
    return true;
  };
  CHECK(block_is(0, 0, 1));
  CHECK(block_is(1, 1, 1));
  CHECK(block_is(0, 1, 1));
  CHECK(block_is(1, 0, 0));
  CHECK(block_is(0, 2, 0));
  CHECK(block_is(1, 2, 0));

  const BayesNet ind(3, ParentSets{{}, {}}, {{0.2, 0.3, 0.5}, {0.2, 0.3, 0.5}});
  const MatrixD b = parent_selection_blocks(ind);
  for (int r = 0; r < b.rows(); ++r)
    for (int c = 0; c < b.cols(); ++c) CHECK(b(r, c) == (r == c ? 1.0 : 0.0));
}

TEST_CASE("first-layer norm bound and the gain-2 counterexample") {
  Rng rng(1);
  for (const auto& s : {StructureSpec::chain(2), StructureSpec::chain(5), StructureSpec::tree(6), StructureSpec::general()}) {
    const auto bn = make_net(s, 2, rng);
    const auto l1 = build_layer1(*bn);
    const double bound = 2.0 * std::sqrt(bn->max_in_degree() + 1.0);
    CHECK(eigen_norm(l1.ff.w1) <= bound + 1e-9);
  }
  CHECK(2.0 * std::sqrt(2.0) == doctest::Approx(2.828).epsilon(1e-3));
  const auto chain = make_net(StructureSpec::chain(2), 2, rng);
  CHECK(eigen_norm(build_layer1(*chain, 2.0).ff.w1) > 2.0 * std::sqrt(2.0));
}

TEST_CASE("parent selector is exact") {
  Rng rng(2);
  for (const auto& s : {StructureSpec::chain(3), StructureSpec::tree(5), StructureSpec::general()}) {
    const auto bn = make_net(s, 3, rng);
    const auto l1 = build_layer1(*bn);
    for (int trial = 0; trial < 10; ++trial) {
      const Context ctx = sample_context(*bn, 20, rng);
      const auto values = sample_observation(*bn, rng);
      for (int t = 0; t < bn->num_vars(); ++t) {
        const InputMatrix x = encode(ctx, QueryState::autoregressive(values, t));
        const MatrixD got = apply_parent_selector(l1, x, t);
        // Independent mask: zero every variable block outside {t} u parents(t).
        MatrixD want = x.data;
        const auto& ps = bn->parents(t);
        for (int m = 0; m < bn->num_vars(); ++m) {
          const bool keep = m == t || std::find(ps.begin(), ps.end(), m) != ps.end();
          if (keep) continue;
          for (int r = m * 3; r < (m + 1) * 3; ++r)
            for (int c = 0; c < want.cols(); ++c) want(r, c) = 0.0;
        }
        CHECK(got == want);
        CHECK(got == parent_mask_reference(x, *bn, t));
      }
    }
    const Context ctx = sample_context(*bn, 5, rng);
    const InputMatrix x = encode(ctx, QueryState::autoregressive(sample_observation(*bn, rng), 1));
    CHECK_THROWS(apply_parent_selector(l1, x, 0));
  }
}

TEST_CASE("three-node chain mask by hand") {
  const BayesNet bn(2, ParentSets{{}, {0}, {1}}, {{0.5, 0.5}, {0.1, 0.9, 0.8, 0.2}, {0.3, 0.7, 0.6, 0.4}});
  const Context ctx{3, 2, {{1, 0, 1}, {0, 1, 1}}, {}, 0};
  const InputMatrix x = encode(ctx, QueryState::autoregressive(std::vector<int>{1, 1, 0}, 2));
  const MatrixD out = apply_parent_selector(build_layer1(bn), x, 2);
  for (int c = 0; c < 3; ++c) {
    CHECK(out(0, c) == 0.0);
    CHECK(out(1, c) == 0.0);
  }
  CHECK(out(2, 0) == 1.0);
  CHECK(out(3, 1) == 1.0);
  CHECK(out(3, 2) == 1.0);
  CHECK(out(5, 0) == 1.0);
  CHECK(out(4, 2) == 0.0);
  CHECK(out(5, 2) == 0.0);
  for (int r = 6; r < out.rows(); ++r)
    for (int c = 0; c < 3; ++c) CHECK(out(r, c) == x.data(r, c));
}

TEST_CASE("second-layer scores and softmax concentration") {
  Rng rng(3);
  const auto bn = make_net(StructureSpec::general(), 2, rng);
  const int n = 60;
  const double eps = 1e-3;
  const ConstructedTransformer ct(bn, n, ConstructionOptions{eps, std::nullopt, 1.0});
  const double c = ct.sharpness();
  CHECK(c == doctest::Approx(3.0 * std::log(5.0 * 2.0 * n / eps)));
  CHECK(ct.layer2().attn.value == MatrixD::identity(ct.layer2().attn.value.rows(), -1.0));
  int checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Context ctx = sample_context(*bn, n, rng);
    const auto values = sample_observation(*bn, rng);
    for (int t = 0; t < 5; ++t) {
      const InputMatrix x = encode(ctx, QueryState::autoregressive(values, t));
      const MatrixD xt = apply_parent_selector(ct.layer1(), x, t);
      const auto s = hand_scores(ct.layer2(), xt);
      const auto& ps = bn->parents(t);
      const double np = static_cast<double>(ps.size());
      std::vector<int> matching;
      for (int col = 0; col < n; ++col) {
        int agree = 0;
        for (int p : ps) agree += ctx.observations[static_cast<std::size_t>(col)][static_cast<std::size_t>(p)] ==
                                  values[static_cast<std::size_t>(p)];
        if (agree == static_cast<int>(ps.size())) {
          CHECK(s[static_cast<std::size_t>(col)] == doctest::Approx(c * np).epsilon(1e-12));
          matching.push_back(col);
        } else {
          CHECK(s[static_cast<std::size_t>(col)] <= c * (np - 1.0) + 1e-9);
        }
      }
      CHECK(s[static_cast<std::size_t>(n)] == doctest::Approx(c * np - c * 2.0).epsilon(1e-12));
      CHECK(static_cast<int>(matching.size()) == match_count(x, *bn, t));
      if (matching.empty()) continue;
      ++checked;
      long double mx = s[0];
      for (double v : s) mx = std::max<long double>(mx, v);
      long double z = 0;
      for (double v : s) z += std::exp(static_cast<long double>(v) - mx);
      const double bound = eps / ((2.0 * 5 + 1.0) * 2.0);
      for (int col = 0; col <= n; ++col) {
        const double w = static_cast<double>(std::exp(static_cast<long double>(s[static_cast<std::size_t>(col)]) - mx) / z);
        const bool in = std::find(matching.begin(), matching.end(), col) != matching.end();
        const double target = in ? 1.0 / static_cast<double>(matching.size()) : 0.0;
        CHECK(std::abs(w - target) <= bound);
      }
    }
  }
  CHECK(checked > 50);
}

TEST_CASE("forward matches the frequency-count estimate") {
  Rng rng(4);
  int checked = 0;
  for (const double eps : {1e-2, 1e-3}) {
    for (const auto& s : {StructureSpec::chain(3), StructureSpec::tree(5), StructureSpec::general()}) {
      for (int rep = 0; rep < 5; ++rep) {
        const auto bn = make_net(s, 2 + rep % 2, rng);
        const int n = 10 + 20 * rep;
        const ConstructedTransformer ct(bn, n, ConstructionOptions{eps, std::nullopt, 1.0});
        const Context ctx = sample_context(*bn, n, rng);
        const auto values = sample_observation(*bn, rng);
        for (int t = 0; t < bn->num_vars(); ++t) {
          const QueryState q = QueryState::autoregressive(values, t);
          const InputMatrix x = encode(ctx, q);
          const auto mle = mle_estimate(ctx, q, bn->parents(t));
          if (!mle.dist) {
            CHECK_THROWS_AS(forward(ct, x), EmptyMatchSet);
            CHECK(forward_unchecked(ct, x).size() == static_cast<std::size_t>(bn->num_categories()));
            continue;
          }
          ++checked;
          const auto trace = forward_trace(ct, x);
          CHECK(trace.support == mle.support_count);
          CHECK(tv_distance(trace.probs, *mle.dist) <= eps);
          CHECK(forward(ct, x) == trace.probs);
          const int M = bn->num_vars(), d = bn->num_categories();
          const auto res = attention_residual(trace.read, *mle.dist, M, d, t);
          double inf = 0.0, block = 0.0;
          for (double v : res) inf = std::max(inf, std::abs(v));
          for (int j = 0; j < d; ++j) block += res[static_cast<std::size_t>(t * d + j)];
          CHECK(inf <= eps / ((2.0 * M + 1.0) * d));
          CHECK(std::abs(block) <= 1e-9);
          // Tighter epsilon never increases the error on the same input.
          const ConstructedTransformer tight(bn, n, ConstructionOptions{eps / 10.0, std::nullopt, 1.0});
          CHECK(tv_distance(forward(tight, x), *mle.dist) <= tv_distance(trace.probs, *mle.dist) + 1e-15);
        }
      }
    }
  }
  CHECK(checked >= 100);
}

TEST_CASE("single-observation root") {
  auto bn = std::make_shared<const BayesNet>(2, ParentSets{{}}, std::vector<std::vector<double>>{{0.5, 0.5}});
  const ConstructedTransformer ct(bn, 1, ConstructionOptions{1e-3, std::nullopt, 1.0});
  const Context ctx{1, 2, {{1}}, {}, 0};
  const auto p = forward(ct, encode(ctx, QueryState::autoregressive(std::vector<int>{0}, 0)));
  CHECK(std::abs(p[0]) <= 1e-3);
  CHECK(std::abs(p[1] - 1.0) <= 1e-3);
}

TEST_CASE("spectral norms") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    MatrixD a(3 + trial, 7);
    for (double& v : a.values()) v = rng.uniform(-1.0, 1.0);
    CHECK(spectral_norm(a) == doctest::Approx(eigen_norm(a)).epsilon(1e-8));
  }
  CHECK(spectral_norm(MatrixD(4, 4)) == 0.0);
  CHECK(spectral_norm(MatrixD::identity(5, -1.0)) == doctest::Approx(1.0));
}

TEST_CASE("norm report") {
  Rng rng(6);
  for (const auto& s : {StructureSpec::chain(5), StructureSpec::tree(5), StructureSpec::general()}) {
    const auto bn = make_net(s, 2, rng);
    const ConstructedTransformer ct(bn, 100, ConstructionOptions{1e-3, std::nullopt, 1.0});
    const auto report = verify_norms(ct);
    CHECK(report.all_ok());
    for (const auto& c : report.checks) CHECK(c.norm <= c.bound + kNormTolerance);
    CHECK(eigen_norm(ct.layer2().attn.key) <= ct.sharpness());
    LayerParams shifted = ct.layer2();
    for (int i = 0; i < shifted.attn.value.rows(); ++i) shifted.attn.value(i, i) += 2.0;
    CHECK(verify_norms(ct.layer1(), shifted, ct.readout_for(0), bn->max_in_degree(), 5, 2, 100, 1e-3).all_ok());
    LayerParams bad = ct.layer2();
    const int rows = bad.attn.value.rows();
    const int i = static_cast<int>(rng.below(static_cast<std::uint64_t>(rows)));
    bad.attn.value(i, (i + 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(rows - 1)))) % rows) += 2.0;
    const auto broken = verify_norms(ct.layer1(), bad, ct.readout_for(0), bn->max_in_degree(), 5, 2, 100, 1e-3);
    CHECK(!broken.all_ok());
  }
  CHECK_THROWS_AS(build_layer2(3, 10, 2, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(build_layer2(3, 0, 2, 0.1), std::invalid_argument);
}
