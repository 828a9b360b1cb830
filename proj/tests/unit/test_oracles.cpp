#include <cmath>

#include "bicl/oracles.hpp"
#include "doctest.h"

using namespace bicl;

namespace {

// Counting by hand over rows: rows whose listed parents equal the query's.
std::pair<std::vector<int>, int> brute_counts(const Context& ctx, const std::vector<int>& values,
                                              const std::vector<int>& parents, int target) {
  std::vector<int> counts(static_cast<std::size_t>(ctx.num_categories), 0);
  int support = 0;
  for (const auto& row : ctx.observations) {
    bool match = true;
    for (int p : parents) match = match && row[static_cast<std::size_t>(p)] == values[static_cast<std::size_t>(p)];
    if (!match) continue;
    ++support;
    ++counts[static_cast<std::size_t>(row[static_cast<std::size_t>(target)])];
  }
  return {counts, support};
}

}  // namespace

TEST_CASE("mle: hand example") {
  const Context ctx{2, 2, {{0, 0}, {0, 1}, {1, 1}, {1, 1}}, {}, 0};
  const auto r = mle_estimate(ctx, QueryState::autoregressive(std::vector<int>{1, 0}, 1), std::vector<int>{0});
  REQUIRE(r.dist);
  CHECK(*r.dist == Distribution{0.0, 1.0});
  CHECK(r.support_count == 2);
}

TEST_CASE("mle: no parents is the marginal, no match is absent") {
  const Context ctx{2, 2, {{0, 0}, {0, 1}, {0, 1}, {0, 1}}, {}, 0};
  const auto m = mle_estimate(ctx, QueryState::autoregressive(std::vector<int>{0, 0}, 1), {});
  REQUIRE(m.dist);
  CHECK(*m.dist == empirical_marginal(ctx, 1));
  CHECK((*m.dist)[1] == 0.75);
  const auto all_same = mle_estimate(ctx, QueryState::autoregressive(std::vector<int>{0, 0}, 0), {});
  CHECK(*all_same.dist == Distribution{1.0, 0.0});
  const auto none = mle_estimate(ctx, QueryState::autoregressive(std::vector<int>{1, 0}, 1), std::vector<int>{0});
  CHECK(!none.dist);
  CHECK(none.support_count == 0);
}

TEST_CASE("mle and naive agree with brute-force counting") {
  Rng rng(10);
  for (int trial = 0; trial < 200; ++trial) {
    const BayesNet bn = random_bayesnet(StructureSpec::general(), 2 + trial % 2, rng);
    const Context ctx = sample_context(bn, 5 + trial % 40, rng);
    const auto values = sample_observation(bn, rng);
    const int t = static_cast<int>(rng.below(5));
    const QueryState q = QueryState::autoregressive(values, t);
    const auto mle = mle_estimate(ctx, q, bn.parents(t));
    std::vector<int> before;
    for (int m = 0; m < t; ++m) before.push_back(m);
    const auto naive = naive_estimate(ctx, q);
    const auto [mc, ms] = brute_counts(ctx, values, bn.parents(t), t);
    const auto [nc, ns] = brute_counts(ctx, values, before, t);
    CHECK(mle.support_count == ms);
    CHECK(naive.support_count == ns);
    // Matching-set inclusion: conditioning on a superset of parents.
    CHECK(naive.support_count <= mle.support_count);
    if (ms > 0) {
      REQUIRE(mle.dist);
      for (std::size_t j = 0; j < mc.size(); ++j) CHECK((*mle.dist)[j] == static_cast<double>(mc[j]) / ms);
    }
  }
}

TEST_CASE("naive equals mle when the parents are all predecessors") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const BayesNet bn = random_bayesnet(StructureSpec::chain(4), 2, rng);
    const Context ctx = sample_context(bn, 30, rng);
    const auto values = sample_observation(bn, rng);
    for (int t : {0, 1}) {
      const QueryState q = QueryState::autoregressive(values, t);
      const auto a = naive_estimate(ctx, q);
      const auto b = mle_estimate(ctx, q, bn.parents(t));
      CHECK(a.support_count == b.support_count);
      CHECK(a.dist == b.dist);
    }
  }
}

TEST_CASE("tv distance") {
  CHECK(tv_distance(std::vector<double>{0.5, 0.5}, std::vector<double>{0.5, 0.5}) == 0.0);
  CHECK(tv_distance(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 1.0);
  CHECK(tv_distance(std::vector<double>{0.7, 0.3}, std::vector<double>{0.5, 0.5}) == doctest::Approx(0.2));
  CHECK_THROWS(tv_distance(std::vector<double>{1.0}, std::vector<double>{0.5, 0.5}));
}

TEST_CASE("argmax and accuracy") {
  CHECK(argmax(std::vector<double>{0.2, 0.4, 0.4}) == 1);
  const std::vector<std::optional<Distribution>> preds{Distribution{0.9, 0.1}, Distribution{0.2, 0.8},
                                                       Distribution{0.6, 0.4}, Distribution{0.3, 0.7}};
  CHECK(accuracy(preds, std::vector<int>{0, 1, 0, 0}) == 0.75);
  const std::vector<std::optional<Distribution>> absent(3);
  CHECK(accuracy(absent, std::vector<int>{0, 1, 0}) == 0.0);
  const std::vector<std::optional<Distribution>> exact{Distribution{0, 1}, Distribution{1, 0}};
  CHECK(accuracy(exact, std::vector<int>{1, 0}) == 1.0);
  CHECK_THROWS(accuracy(exact, std::vector<int>{1}));
}
