#pragma once

#include <optional>
#include <span>
#include <vector>

#include "bicl/bayesnet.hpp"
#include "bicl/encoding.hpp"

namespace bicl {

using Distribution = std::vector<double>;

/// Frequency-count estimate; `dist` is absent exactly when no context row
/// matches the conditioning assignment.
struct EstimateResult {
  std::optional<Distribution> dist;
  int support_count = 0;
};

/// P(X_target = j | X_m = query_m for m in `parents`) by counting context
/// rows. Every index in `parents` must be sampled in the query.
EstimateResult mle_estimate(const Context& context, const QueryState& query, std::span<const int> parents);

/// MLE conditioned on every variable before the target ("fully connected" network).
EstimateResult naive_estimate(const Context& context, const QueryState& query);

/// Empirical marginal of `target` over the whole context.
Distribution empirical_marginal(const Context& context, int target);

/// Half the L1 distance. Throws on length mismatch.
double tv_distance(std::span<const double> a, std::span<const double> b);

/// Index of the largest entry; ties go to the lowest index.
int argmax(std::span<const double> v);

/// Fraction of predictions whose argmax equals the label; absent predictions
/// count as wrong. Throws on empty input or length mismatch.
double accuracy(std::span<const std::optional<Distribution>> predictions, std::span<const int> labels);

}  // namespace bicl
