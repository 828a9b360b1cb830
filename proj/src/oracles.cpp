#include "bicl/oracles.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace bicl {

EstimateResult mle_estimate(const Context& context, const QueryState& query, std::span<const int> parents) {
  const int d = context.num_categories;
  const int target = query.target;
  std::vector<int> conditioning(parents.size());
  for (std::size_t k = 0; k < parents.size(); ++k) {
    const auto& v = query.sampled.at(static_cast<std::size_t>(parents[k]));
    if (!v)
      throw std::invalid_argument("mle_estimate: conditioning variable " +
                                  std::to_string(parents[k]) + " is not sampled");
    conditioning[k] = *v;
  }
  std::vector<long> counts(static_cast<std::size_t>(d), 0);
  int support = 0;
  for (const auto& obs : context.observations) {
    bool match = true;
    for (std::size_t k = 0; k < parents.size() && match; ++k)
      match = obs[static_cast<std::size_t>(parents[k])] == conditioning[k];
    if (!match) continue;
    ++support;
    ++counts[static_cast<std::size_t>(obs[static_cast<std::size_t>(target)])];
  }
  EstimateResult result;
  result.support_count = support;
  if (support > 0) {
    Distribution dist(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j)
      dist[static_cast<std::size_t>(j)] = static_cast<double>(counts[static_cast<std::size_t>(j)]) / support;
    result.dist = std::move(dist);
  }
  return result;
}

EstimateResult naive_estimate(const Context& context, const QueryState& query) {
  std::vector<int> preceding(static_cast<std::size_t>(query.target));
  std::iota(preceding.begin(), preceding.end(), 0);
  return mle_estimate(context, query, preceding);
}

Distribution empirical_marginal(const Context& context, int target) {
  QueryState q;
  q.sampled.resize(static_cast<std::size_t>(context.num_vars));
  q.target = target;
  return *mle_estimate(context, q, {}).dist;
}

double tv_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("tv_distance: length mismatch");
  double sum = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) sum += std::abs(a[j] - b[j]);
  return 0.5 * sum;
}

int argmax(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("argmax: empty vector");
  int best = 0;
  for (std::size_t j = 1; j < v.size(); ++j)
    if (v[j] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
  return best;
}

double accuracy(std::span<const std::optional<Distribution>> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw std::invalid_argument("accuracy: length mismatch");
  if (predictions.empty()) throw std::invalid_argument("accuracy: empty prediction list");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i] && argmax(*predictions[i]) == labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

}  // namespace bicl
