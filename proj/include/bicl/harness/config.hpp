#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "bicl/training/trainer.hpp"

namespace bicl::harness {

enum class ExperimentKind { Verify, Compare, Generalize, Ablate, Sample, Train, Eval };
ExperimentKind parse_kind(std::string_view s);
std::string_view kind_name(ExperimentKind k);

/// Settings shared by every experiment; unused fields are ignored by kinds
/// that do not need them. Keys prefixed with "train." are forwarded to the
/// embedded training config.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Verify;
  std::vector<std::string> structures{"chain", "tree", "general"};
  int num_vars = 0;  // 0 = canonical size of each structure
  std::vector<int> categories{2, 3};
  std::vector<int> context_sizes{50, 100};
  std::vector<double> epsilons{1e-2, 1e-3};
  int trials = 100;
  std::vector<std::uint64_t> seeds{1};
  std::vector<int> n_test{5, 10, 20, 50, 100};
  std::vector<int> n_train{5, 10, 100, 200};
  std::vector<int> layer_grid{1, 2};
  std::vector<int> head_grid{1, 2, 4, 8};
  std::vector<int> targets;  // empty = every variable
  int contexts = 300;
  double mask_gain = 1.0;
  std::string output = "results.csv";
  bool timing = false;
  training::TrainConfig train;

  /// Desk-scale defaults for the kind.
  static ExperimentConfig defaults(ExperimentKind kind);
  /// Throws ConfigError naming the field.
  void set(std::string_view key, std::string_view value);
  void apply_text(std::string_view text);
  /// Kind-specific checks; throws ConfigError naming the field.
  void validate() const;
};

}  // namespace bicl::harness
