#include "bicl/generator.hpp"

#include <cmath>
#include <exception>

#include "bicl/errors.hpp"
#include "bicl/parallel.hpp"

namespace bicl {

namespace {

Context context_from(const InputMatrix& x) {
  Context ctx;
  ctx.num_vars = x.num_vars;
  ctx.num_categories = x.num_categories;
  ctx.observations = decode_context(x);
  return ctx;
}

Distribution require_support(EstimateResult r, int target) {
  if (!r.dist) throw EmptyMatchSet(target);
  return std::move(*r.dist);
}

}  // namespace

Distribution MleModel::predict(const InputMatrix& x) const {
  const QueryState q = decode_query(x);
  return require_support(mle_estimate(context_from(x), q, bn_->parents(q.target)), q.target);
}

Distribution NaiveModel::predict(const InputMatrix& x) const {
  const QueryState q = decode_query(x);
  return require_support(naive_estimate(context_from(x), q), q.target);
}

Distribution to_sampling_distribution(std::span<const double> output) {
  double sum = 0.0;
  for (double v : output) {
    if (!std::isfinite(v) || v < -1e-6) throw NumericError("model output is not a probability vector");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw NumericError("model output does not sum to 1");
  Distribution dist(output.begin(), output.end());
  double clipped = 0.0;
  for (double& v : dist) {
    v = v < 0.0 ? 0.0 : v;
    clipped += v;
  }
  for (double& v : dist) v /= clipped;
  return dist;
}

Observation autoregressive_sample(const SequenceModel& model, const Context& context, Rng& rng,
                                  EmptyMatchPolicy policy) {
  const int M = model.num_vars(), d = model.num_categories();
  if (context.num_vars != M || context.num_categories != d)
    throw std::invalid_argument("autoregressive_sample: model and context disagree on (M, d)");
  Observation values(static_cast<std::size_t>(M), -1);
  for (int target = 0; target < M; ++target) {
    const QueryState query = QueryState::autoregressive(values, target);
    const InputMatrix x = encode(context, query);
    Distribution dist;
    try {
      dist = to_sampling_distribution(model.predict(x));
    } catch (const EmptyMatchSet&) {
      switch (policy) {
        case EmptyMatchPolicy::Abort: throw;
        case EmptyMatchPolicy::NaiveMarginal: dist = empirical_marginal(context, target); break;
        case EmptyMatchPolicy::Uniform: dist.assign(static_cast<std::size_t>(d), 1.0 / d); break;
      }
    }
    values[static_cast<std::size_t>(target)] = rng.categorical(dist);
  }
  return values;
}

std::vector<Observation> batch_generate(const SequenceModel& model, const Context& context, int count,
                                        const Rng& rng, EmptyMatchPolicy policy) {
  if (count < 0) throw std::invalid_argument("batch_generate: negative count");
  std::vector<Observation> out(static_cast<std::size_t>(count));
  parallel_for(count, [&](int i) {
    Rng stream = rng.split(static_cast<std::uint64_t>(i));
    out[static_cast<std::size_t>(i)] = autoregressive_sample(model, context, stream, policy);
  });
  return out;
}

}  // namespace bicl
