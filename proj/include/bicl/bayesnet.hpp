#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bicl/rng.hpp"

namespace bicl {

/// Variable indices and category values are 0-based throughout.
using ParentSets = std::vector<std::vector<int>>;

/// A discrete Bayesian network whose variable order is a topological order:
/// every parent index is smaller than its child's index.
///
/// The CPT of variable m has d^|parents(m)| rows of d probabilities. Row index
/// is the parent assignment read as a base-d number over the parents in
/// ascending index order, first parent most significant.
class BayesNet {
 public:
  /// Validates everything: topological order, CPT shapes, rows in [0,1]
  /// summing to 1 within 1e-12. Throws std::invalid_argument.
  BayesNet(int num_categories, ParentSets parents, std::vector<std::vector<double>> cpts);

  int num_vars() const noexcept { return static_cast<int>(parents_.size()); }
  int num_categories() const noexcept { return d_; }
  /// Maximum in-degree.
  int max_in_degree() const noexcept { return max_in_degree_; }
  const ParentSets& parents() const noexcept { return parents_; }
  const std::vector<int>& parents(int m) const { return parents_.at(static_cast<std::size_t>(m)); }
  int num_rows(int m) const;

  /// Row index for variable m given values of *all* variables (only the
  /// parents of m are read).
  int row_index(int m, std::span<const int> values) const;
  std::span<const double> cpt_row(int m, int row) const;
  const std::vector<std::vector<double>>& cpts() const noexcept { return cpts_; }

  friend bool operator==(const BayesNet&, const BayesNet&) = default;

 private:
  int d_;
  ParentSets parents_;
  std::vector<std::vector<double>> cpts_;
  int max_in_degree_ = 0;
};

using Observation = std::vector<int>;

/// N i.i.d. observations of the same network.
struct Context {
  int num_vars = 0;
  int num_categories = 0;
  std::vector<Observation> observations;
  std::string source;
  std::uint64_t rng_seed = 0;

  int size() const noexcept { return static_cast<int>(observations.size()); }
  /// Throws std::invalid_argument on empty context, ragged rows or out-of-range values.
  void validate() const;
};

enum class StructureKind { Chain, Tree, General, Explicit };

/// Graph shape used to instantiate random networks.
struct StructureSpec {
  StructureKind kind = StructureKind::Chain;
  int num_vars = 0;
  ParentSets explicit_parents;  // only for Explicit

  static StructureSpec chain(int m) { return {StructureKind::Chain, m, {}}; }
  static StructureSpec tree(int m) { return {StructureKind::Tree, m, {}}; }
  static StructureSpec general() { return {StructureKind::General, 5, {}}; }
  static StructureSpec from_parents(ParentSets p) {
    const int m = static_cast<int>(p.size());
    return {StructureKind::Explicit, m, std::move(p)};
  }

  /// "chain", "tree" or "general"; m <= 0 selects the canonical size
  /// (7, 7 and 5 respectively).
  static StructureSpec parse(std::string_view name, int m = 0);
  std::string name() const;
  /// Parent sets for this shape. Throws for invalid sizes or orderings.
  ParentSets parent_sets() const;
};

/// Canonical general graph: five variables, variable 2 has two root parents,
/// variable 3 has parents {1, 2} where 2 itself has parents.
ParentSets general_graph_parents();
/// Index of the general graph's variable whose parents have their own
/// precedents; the variable that separates naive inference from the MLE.
inline constexpr int kGeneralGraphDependentVar = 3;

/// Fresh CPTs on the given structure. For d = 2 each row's first entry is
/// drawn from U(0.15, 0.3) or U(0.7, 0.85) with equal probability. For d > 2
/// each row is a flat Dirichlet draw, rejected until every entry lies in
/// [0.1, 0.9].
BayesNet random_bayesnet(const StructureSpec& structure, int num_categories, Rng& rng);

/// Ancestral sample in variable order.
Observation sample_observation(const BayesNet& bn, Rng& rng);
Context sample_context(const BayesNet& bn, int n, Rng& rng, std::string source = {});

/// Ground-truth conditional of variable `target` given its parents' values.
/// `values` is a full-length assignment in which entries for the parents are
/// set; entries for other variables are ignored. Throws std::invalid_argument
/// when a parent value is missing (negative) or out of range.
std::vector<double> exact_conditional(const BayesNet& bn, int target, std::span<const int> values);

/// JSON: {"M", "d", "parents": [[...]], "cpts": [[[...]]]}.
std::string to_json(const BayesNet& bn);
BayesNet bayesnet_from_json(std::string_view text);
void save_bayesnet(const BayesNet& bn, const std::string& path);
BayesNet load_bayesnet(const std::string& path);

}  // namespace bicl
