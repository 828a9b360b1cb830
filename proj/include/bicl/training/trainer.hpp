#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bicl/bayesnet.hpp"
#include "bicl/encoding.hpp"
#include "bicl/oracles.hpp"
#include "bicl/rng.hpp"
#include "bicl/training/data.hpp"
#include "bicl/training/model.hpp"

namespace bicl::training {

struct TrainConfig {
  std::string structure = "chain";
  int num_vars = 5;
  int num_categories = 2;
  int context_size = 100;
  int steps = 2000;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int layers = 2;
  int heads = 2;
  int hidden = 64;
  int ffn_mult = 4;
  LayerNormPlacement ln_placement = LayerNormPlacement::Post;
  bool scale_scores = false;
  bool curriculum = true;
  int curriculum_start = 2;
  double curriculum_factor = 0.85;
  int curriculum_window = 50;
  ContextVisibility visibility = ContextVisibility::Revealed;
  int log_every = 50;
  int test_examples = 128;
  std::uint64_t seed = 1;
  Precision precision = Precision::F32;

  /// "desk" (the defaults), "paper-chain", "paper-tree" or "paper-general".
  static TrainConfig preset(std::string_view name);
  /// Sets one field from its key = value spelling. Throws ConfigError.
  void set(std::string_view key, std::string_view value);
  /// Applies every `key = value` line of a flat config text.
  void apply_text(std::string_view text);
  std::string to_text() const;
  void validate() const;

  StructureSpec structure_spec() const;
  ModelConfig model_config() const;
  DataSpec data_spec() const;
};

struct LogRow {
  int step = 0;
  int revealed = 0;
  double train_loss = 0.0;  // mean over the steps since the previous row
  double test_loss = 0.0;
  double test_accuracy = 0.0;
};

template <class T>
struct TrainResult {
  TrainableModel<T> model;
  std::vector<LogRow> log;
  int revealed = 0;
  std::optional<int> curriculum_complete_step;
};

using LogCallback = std::function<void(const LogRow&)>;

/// Trains on fresh random networks of the configured structure every step.
/// Throws NumericError if the loss becomes non-finite.
template <class T>
TrainResult<T> train(const TrainConfig& config, const LogCallback& on_log = {});

/// Conditional prediction for the target of `query` given a context, or
/// nullopt when the predictor abstains.
using Predictor = std::function<std::optional<Distribution>(const Context&, const QueryState&)>;

struct NamedPredictor {
  std::string name;
  Predictor predict;
};

/// Softmax output of a trained model on the full (unmasked) encoding.
template <class T>
Predictor trained_predictor(const TrainableModel<T>& model);

struct EvalConfig {
  std::vector<int> n_test{5, 10, 20, 50, 100};
  int contexts = 300;
  std::vector<int> targets;  // empty = every variable
  /// When the match set is empty, MLE and naive fall back to the empirical
  /// marginal instead of counting as wrong.
  bool marginal_fallback = true;
};

struct EvalCell {
  int target = 0;
  int n_test = 0;
  std::string method;
  double accuracy = 0.0;
};

/// For every (target, N_test) cell, samples `contexts` contexts and queries
/// from `bn`, and scores optimal, mle, naive and each extra predictor on the
/// same draws. Context c of cell (t, n) uses rng.split(t).split(n).split(c).
std::vector<EvalCell> evaluate(const BayesNet& bn, const EvalConfig& config,
                               std::span<const NamedPredictor> extra, const Rng& rng);

}  // namespace bicl::training
