#pragma once

#include <deque>
#include <string_view>
#include <vector>

#include "bicl/bayesnet.hpp"
#include "bicl/matrix.hpp"
#include "bicl/rng.hpp"

namespace bicl::training {

/// Which context variables a training example shows. Revealed hides the
/// variables the curriculum has not reached yet; Target hides every variable
/// after the prediction target; All shows everything.
enum class ContextVisibility { Revealed, Target, All };
ContextVisibility parse_visibility(std::string_view s);
std::string_view visibility_name(ContextVisibility v);

struct DataSpec {
  StructureSpec structure;
  int num_categories = 2;
  int context_size = 100;
  ContextVisibility visibility = ContextVisibility::Revealed;
};

template <class T>
struct Batch {
  std::vector<Matrix<T>> inputs;  // simple encoding, one per example
  std::vector<int> labels;
  std::vector<int> targets;
};

/// One next-token example: fresh CPTs on the structure, N+1 ancestral
/// samples, target uniform over the first `revealed` variables; the last
/// sample supplies the query (variables before the target) and the label.
template <class T>
void generate_example(const DataSpec& spec, int revealed, Rng& rng, Matrix<T>& input, int& label, int& target);

/// Example b uses stream rng.split(b); generation runs in parallel.
template <class T>
void generate_batch(const DataSpec& spec, int revealed, int batch_size, const Rng& rng, Batch<T>& out);

/// Reveals variables one at a time: starts at min(start, M) and advances by
/// one whenever the moving average of the last `window` training losses
/// drops to `threshold`. The window is cleared after each advance.
class Curriculum {
 public:
  Curriculum(int num_vars, int start, double threshold, int window, bool enabled = true);

  int revealed() const noexcept { return revealed_; }
  bool complete() const noexcept { return revealed_ >= num_vars_; }
  double threshold() const noexcept { return threshold_; }
  /// Records one step's loss; returns true when a variable was revealed.
  bool observe(double loss);

 private:
  int num_vars_;
  int revealed_;
  double threshold_;
  int window_;
  std::deque<double> recent_;
};

}  // namespace bicl::training
