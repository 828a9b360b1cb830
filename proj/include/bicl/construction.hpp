#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bicl/bayesnet.hpp"
#include "bicl/encoding.hpp"
#include "bicl/tf_core.hpp"

namespace bicl {

// Explicit two-layer transformer whose forward pass returns the in-context
// frequency-count estimate of P(X_target | parents) up to epsilon in TV.
//
// Layer 1 is a parent selector. Its attention is the identity (V = K = Q = 0).
// Its feed-forward block uses
//
//   W1 = [ I_Md  -g*A ]      W2 = -I
//        [  0     0   ]
//
// where block A_ij = I_d iff j < M and i in {j} u parents(j). The ReLU then
// removes exactly the variable blocks outside {target} u parents(target).
// Layer 2 attends with score c * (#matching parent blocks) and V = -I, so the
// query column becomes (query - mean of matching columns). Block `target` of
// that column is minus the estimate.
//
// With one-hot (0/1) inputs any mask gain g >= 1 yields the same mask.
// ||W1|| <= 2 sqrt(D+1) holds for g = 1 on the canonical structures; g = 2
// breaks it on a two-node chain.

struct ConstructionOptions {
  double epsilon = 1e-3;
  std::optional<double> sharpness;  // overrides c = 3 log(M d N / epsilon)
  double mask_gain = 1.0;
};

double default_sharpness(int num_vars, int num_categories, int context_size, double epsilon);

/// Md x (M+1)d block matrix selecting {j} u parents(j) for each target j.
MatrixD parent_selection_blocks(const BayesNet& bn);
LayerParams build_layer1(const BayesNet& bn, double mask_gain = 1.0);
/// Throws std::invalid_argument unless epsilon is in (0, 1) and N >= 1.
LayerParams build_layer2(int num_vars, int context_size, int num_categories, double epsilon,
                         std::optional<double> sharpness = std::nullopt);
/// d x (2M+1)d readout [0, -I at block target, 0].
MatrixD readout_matrix(int num_vars, int num_categories, int target);

class ConstructedTransformer {
 public:
  ConstructedTransformer(std::shared_ptr<const BayesNet> bn, int context_size, ConstructionOptions options = {});

  const LayerParams& layer1() const noexcept { return layer1_; }
  const LayerParams& layer2() const noexcept { return layer2_; }
  double epsilon() const noexcept { return options_.epsilon; }
  double sharpness() const noexcept { return sharpness_; }
  double mask_gain() const noexcept { return options_.mask_gain; }
  int context_size() const noexcept { return context_size_; }
  const BayesNet& network() const noexcept { return *bn_; }
  MatrixD readout_for(int target) const;

 private:
  std::shared_ptr<const BayesNet> bn_;
  int context_size_;
  ConstructionOptions options_;
  double sharpness_;
  LayerParams layer1_;
  LayerParams layer2_;
};

/// TF_layer1(X), after checking X's positional rows mark `target`.
MatrixD apply_parent_selector(const LayerParams& layer1, const InputMatrix& x, int target);

/// The masked matrix the parent selector must produce, built by directly
/// zeroing blocks outside {target} u parents(target).
MatrixD parent_mask_reference(const InputMatrix& x, const BayesNet& bn, int target);

/// Number of context columns whose parent blocks equal the query's.
int match_count(const InputMatrix& x, const BayesNet& bn, int target);

struct ForwardTrace {
  std::vector<double> read;   // last column of TF2(TF1(X)), length (2M+1)d
  std::vector<double> probs;  // readout applied to `read`
  int support = 0;
};

/// Throws EmptyMatchSet when no context column matches the parent assignment.
std::vector<double> forward(const ConstructedTransformer& ct, const InputMatrix& x);
/// Same computation without the match-set check.
std::vector<double> forward_unchecked(const ConstructedTransformer& ct, const InputMatrix& x);
ForwardTrace forward_trace(const ConstructedTransformer& ct, const InputMatrix& x);

/// s = read - xhat, where xhat is zero except -estimate on block `target`
/// and ones on the final d rows.
std::vector<double> attention_residual(std::span<const double> read, std::span<const double> estimate,
                                    int num_vars, int num_categories, int target);

/// Largest singular value by power iteration on A^T A. Iterates until the
/// relative change falls below 1e-12 (at most max_iter steps) and throws
/// NumericError otherwise.
double spectral_norm(const MatrixD& a, int max_iter = 10000);

struct NormCheck {
  std::string name;
  double norm = 0.0;
  double bound = 0.0;
  bool ok = false;
};

struct NormReport {
  std::vector<NormCheck> checks;
  bool all_ok() const;
};

/// Tolerance applied to every norm inequality.
inline constexpr double kNormTolerance = 1e-6;

NormReport verify_norms(const LayerParams& layer1, const LayerParams& layer2, const MatrixD& readout,
                        int max_in_degree, int num_vars, int num_categories, int context_size,
                        double epsilon);
/// Checks all bounds; the readout is checked for every target.
NormReport verify_norms(const ConstructedTransformer& ct);

}  // namespace bicl
