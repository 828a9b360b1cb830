#include <cmath>
#include <map>
#include <stdexcept>

#include "bicl/bayesnet.hpp"
#include "doctest.h"

using namespace bicl;

namespace {

// Joint probability by the chain rule, reading CPT rows directly.
double joint(const BayesNet& bn, const std::vector<int>& x) {
  double p = 1.0;
  const int d = bn.num_categories();
  for (int m = 0; m < bn.num_vars(); ++m) {
    int row = 0;
    for (int q : bn.parents(m)) row = row * d + x[static_cast<std::size_t>(q)];
    p *= bn.cpts()[static_cast<std::size_t>(m)][static_cast<std::size_t>(row * d + x[static_cast<std::size_t>(m)])];
  }
  return p;
}

}  // namespace

TEST_CASE("constructor validates structure and tables") {
  CHECK_THROWS_AS(BayesNet(1, {{}}, {{1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(BayesNet(2, {{1}, {}}, {{0.5, 0.5, 0.5, 0.5}, {0.5, 0.5}}), std::invalid_argument);
  CHECK_THROWS_AS(BayesNet(2, {{}}, {{0.7, 0.7}}), std::invalid_argument);
  CHECK_THROWS_AS(BayesNet(2, {{}}, {{0.5, 0.5, 0.1}}), std::invalid_argument);
  CHECK_NOTHROW(BayesNet(2, {{}, {0}}, {{0.3, 0.7}, {0.2, 0.8, 0.6, 0.4}}));
}

TEST_CASE("cpt rows are lexicographic with the first parent most significant") {
  const BayesNet bn(3, {{}, {}, {0, 1}}, {{0.2, 0.3, 0.5}, {0.1, 0.1, 0.8}, std::vector<double>(27, 1.0 / 3)});
  CHECK(bn.num_rows(2) == 9);
  const std::vector<int> v{2, 1, 0};
  CHECK(bn.row_index(2, v) == 7);
  CHECK(bn.max_in_degree() == 2);
}

TEST_CASE("canonical structures") {
  const auto chain = StructureSpec::chain(7).parent_sets();
  for (int m = 1; m < 7; ++m) CHECK(chain[static_cast<std::size_t>(m)] == std::vector<int>{m - 1});
  const auto tree = StructureSpec::tree(7).parent_sets();
  CHECK(tree[0].empty());
  for (int m = 1; m < 7; ++m) CHECK(tree[static_cast<std::size_t>(m)] == std::vector<int>{(m - 1) / 2});
  const auto general = general_graph_parents();
  CHECK(general.size() == 5);
  CHECK(general[kGeneralGraphDependentVar] == std::vector<int>{1, 2});
  CHECK(StructureSpec::parse("tree").num_vars == 7);
  CHECK(StructureSpec::parse("general").num_vars == 5);
  CHECK_THROWS(StructureSpec::parse("star"));
}

TEST_CASE("random cpts respect the sampling bands") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const BayesNet b2 = random_bayesnet(StructureSpec::chain(4), 2, rng);
    for (const auto& t : b2.cpts())
      for (std::size_t r = 0; r < t.size(); r += 2) {
        const double p = t[r];
        CHECK(((p >= 0.15 && p <= 0.3) || (p >= 0.7 && p <= 0.85)));
        CHECK(t[r] + t[r + 1] == doctest::Approx(1.0));
      }
    const BayesNet b3 = random_bayesnet(StructureSpec::general(), 3, rng);
    for (const auto& t : b3.cpts())
      for (double p : t) {
        CHECK(p >= 0.1);
        CHECK(p <= 0.9);
      }
  }
  CHECK_THROWS(random_bayesnet(StructureSpec::chain(3), 10, rng));
}

TEST_CASE("ancestral samples match the exact joint") {
  Rng rng(2);
  const BayesNet bn = random_bayesnet(StructureSpec::general(), 2, rng);
  std::map<std::vector<int>, int> counts;
  const int n = 200000;
  for (int i = 0; i < n; ++i) ++counts[sample_observation(bn, rng)];
  double total = 0.0;
  for (int code = 0; code < 32; ++code) {
    std::vector<int> x(5);
    for (int m = 0; m < 5; ++m) x[static_cast<std::size_t>(m)] = (code >> m) & 1;
    const double p = joint(bn, x);
    total += p;
    const double freq = counts[x] / static_cast<double>(n);
    CHECK(std::abs(freq - p) <= 5 * std::sqrt(p * (1 - p) / n) + 1e-4);
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("exact conditional is the cpt row of the parent assignment") {
  Rng rng(3);
  const BayesNet bn = random_bayesnet(StructureSpec::general(), 3, rng);
  const std::vector<int> values{2, 0, 1, 0, 0};
  const auto p = exact_conditional(bn, 3, values);
  // Brute force: P(x3 | x1, x2) from the joint with x0, x4 summed out.
  std::vector<double> brute(3, 0.0);
  for (int x0 = 0; x0 < 3; ++x0)
    for (int x3 = 0; x3 < 3; ++x3)
      for (int x4 = 0; x4 < 3; ++x4) brute[static_cast<std::size_t>(x3)] += joint(bn, {x0, 0, 1, x3, x4});
  double z = brute[0] + brute[1] + brute[2];
  for (int j = 0; j < 3; ++j) CHECK(p[static_cast<std::size_t>(j)] == doctest::Approx(brute[static_cast<std::size_t>(j)] / z));
}

TEST_CASE("json round trip") {
  Rng rng(4);
  const BayesNet bn = random_bayesnet(StructureSpec::tree(7), 3, rng);
  CHECK(bayesnet_from_json(to_json(bn)) == bn);
  CHECK_THROWS(bayesnet_from_json("{\"M\": 1}"));
}

TEST_CASE("context validation") {
  Context ok{2, 2, {{0, 1}, {1, 1}}, {}, 0};
  CHECK_NOTHROW(ok.validate());
  Context ragged{2, 2, {{0, 1}, {1}}, {}, 0};
  CHECK_THROWS(ragged.validate());
  Context range{2, 2, {{0, 2}}, {}, 0};
  CHECK_THROWS(range.validate());
}
