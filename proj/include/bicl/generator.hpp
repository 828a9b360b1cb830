#pragma once

#include <memory>
#include <vector>

#include "bicl/bayesnet.hpp"
#include "bicl/construction.hpp"
#include "bicl/encoding.hpp"
#include "bicl/oracles.hpp"

namespace bicl {

/// Anything that maps an encoded context+query to a distribution over the
/// target's d categories. May throw EmptyMatchSet.
class SequenceModel {
 public:
  virtual ~SequenceModel() = default;
  virtual int num_vars() const = 0;
  virtual int num_categories() const = 0;
  virtual Distribution predict(const InputMatrix& x) const = 0;
};

/// Frequency-count estimate with the true parents, read back from the matrix.
class MleModel final : public SequenceModel {
 public:
  explicit MleModel(std::shared_ptr<const BayesNet> bn) : bn_(std::move(bn)) {}
  int num_vars() const override { return bn_->num_vars(); }
  int num_categories() const override { return bn_->num_categories(); }
  Distribution predict(const InputMatrix& x) const override;

 private:
  std::shared_ptr<const BayesNet> bn_;
};

/// Frequency-count estimate conditioned on all preceding variables.
class NaiveModel final : public SequenceModel {
 public:
  NaiveModel(int num_vars, int num_categories) : m_(num_vars), d_(num_categories) {}
  int num_vars() const override { return m_; }
  int num_categories() const override { return d_; }
  Distribution predict(const InputMatrix& x) const override;

 private:
  int m_, d_;
};

class ConstructedModel final : public SequenceModel {
 public:
  explicit ConstructedModel(std::shared_ptr<const ConstructedTransformer> ct) : ct_(std::move(ct)) {}
  int num_vars() const override { return ct_->network().num_vars(); }
  int num_categories() const override { return ct_->network().num_categories(); }
  Distribution predict(const InputMatrix& x) const override { return forward(*ct_, x); }

 private:
  std::shared_ptr<const ConstructedTransformer> ct_;
};

/// What to do when the model reports an empty match set.
enum class EmptyMatchPolicy { Abort, NaiveMarginal, Uniform };

/// Clips entries below zero and renormalises. Throws NumericError if the
/// vector sums to more than 1e-9 away from 1 before clipping or has an entry
/// below -1e-6.
Distribution to_sampling_distribution(std::span<const double> output);

/// One sequence generated variable by variable: at step m the query holds
/// the values drawn so far, the model is evaluated on the re-encoded input,
/// and X_m is drawn from its output.
Observation autoregressive_sample(const SequenceModel& model, const Context& context, Rng& rng,
                                  EmptyMatchPolicy policy = EmptyMatchPolicy::NaiveMarginal);

/// `count` sequences; sequence i uses rng.split(i), so output does not depend
/// on the thread count. Runs in parallel across sequences.
std::vector<Observation> batch_generate(const SequenceModel& model, const Context& context, int count,
                                        const Rng& rng,
                                        EmptyMatchPolicy policy = EmptyMatchPolicy::NaiveMarginal);

}  // namespace bicl
