#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bicl/bayesnet.hpp"
#include "bicl/construction.hpp"
#include "bicl/harness/config.hpp"
#include "bicl/harness/records.hpp"
#include "bicl/training/model_io.hpp"
#include "bicl/training/trainer.hpp"

namespace bicl::harness {

using Progress = std::function<void(const std::string&)>;

/// Root-seed stream indices. Every experiment derives its randomness from
/// Rng(seed).split(<stream>) followed by index-based splits.
inline constexpr std::uint64_t kVerifyStream = 11;
inline constexpr std::uint64_t kNetworkStream = 12;
inline constexpr std::uint64_t kEvalStream = 13;
inline constexpr std::uint64_t kSampleStream = 14;

struct VerifyCell {
  std::string structure;
  int num_categories = 0;
  int context_size = 0;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  int trials = 0;    // trials with a nonempty match set
  int skipped = 0;   // trials whose match set was empty
  double max_tv = 0.0;
  double max_residual = 0.0;        // max ||s||_inf
  double residual_bound = 0.0;      // epsilon / ((2M+1) d)
  double max_block_sum = 0.0;       // max |sum of the target block of s|
  NormReport norms;
  bool tv_ok() const { return max_tv <= epsilon; }
  bool residual_ok() const { return max_residual <= residual_bound && max_block_sum <= 1e-9; }
  bool pass() const { return tv_ok() && norms.all_ok(); }
};

struct VerifyResult {
  std::vector<RunRecord> records;
  std::vector<VerifyCell> cells;
  bool pass() const;
  std::string to_json() const;
};

/// For each (structure, d, N, epsilon, seed) cell, draws random networks,
/// contexts and targets until `trials` trials have a nonempty match set
/// (at most 50 * trials attempts), and records the TV distance between the
/// constructed transformer's output and the MLE, plus the intermediate
/// residual. Norm bounds are checked once per cell.
VerifyResult run_verify(const ExperimentConfig& cfg, const Progress& progress = {});

/// Accuracy of optimal, mle, naive and constructed predictors (plus a trained
/// model when given) over the N_test sweep on one test network per seed.
std::vector<RunRecord> run_compare(const ExperimentConfig& cfg, const training::AnyModel* model = nullptr,
                                   const Progress& progress = {});

/// Trains one model per (N_train, seed) and evaluates it on the seed's test
/// network.
std::vector<RunRecord> run_generalize(const ExperimentConfig& cfg, const Progress& progress = {});

/// Trains one model per (layers, heads, seed) cell.
std::vector<RunRecord> run_ablate(const ExperimentConfig& cfg, const Progress& progress = {});

/// Evaluates a trained model against the oracles on a given network.
std::vector<RunRecord> run_eval(const ExperimentConfig& cfg, const training::AnyModel& model, const BayesNet& bn,
                                const Progress& progress = {});

/// Test network for a seed, shared by compare, generalize, ablate.
BayesNet test_network(const StructureSpec& spec, int num_categories, std::uint64_t seed);

/// Context files: header X0..X{M-1}, one observation per line.
std::string context_to_csv(const Context& ctx);
Context context_from_csv(std::string_view text, int num_categories);

/// Training-log CSV: step,revealed,train_loss,test_loss,test_accuracy.
std::string train_log_csv(const std::vector<training::LogRow>& log);

}  // namespace bicl::harness
