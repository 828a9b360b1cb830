#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bicl/bayesnet.hpp"
#include "bicl/matrix.hpp"

namespace bicl {

/// The partially generated query sequence. `sampled[m]` is empty while
/// variable m has not been generated; `target` is the variable to predict.
struct QueryState {
  std::vector<std::optional<int>> sampled;
  int target = 0;

  /// Autoregressive step: variables before `target` take their values from
  /// `values`, the rest are unsampled.
  static QueryState autoregressive(std::span<const int> values, int target);
  /// All variables present in `values` except `target`, which is masked.
  static QueryState free_form(std::span<const std::optional<int>> values, int target);

  int num_vars() const noexcept { return static_cast<int>(sampled.size()); }
  /// True when exactly the variables before `target` are sampled.
  bool is_autoregressive() const;
  /// Values with -1 in unsampled slots.
  std::vector<int> values_or_missing() const;
  /// Throws std::invalid_argument if target is out of range or sampled, or a
  /// value is outside [0, d). With `autoregressive` also enforces the
  /// generation order.
  void validate(int num_categories, bool autoregressive = false) const;
};

/// Positional indicator pair marking the target variable. Both have length
/// (M+1)d; p has ones on block `target`, p_q additionally on the final block.
struct Positional {
  std::vector<double> p;
  std::vector<double> p_q;
};

Positional build_positional(int target, int num_vars, int num_categories);

/// (2M+1)d x (N+1) input: one-hot variable blocks over positional blocks,
/// context observations in columns 0..N-1, the query in column N.
struct InputMatrix {
  MatrixD data;
  int num_vars = 0;
  int context_size = 0;
  int num_categories = 0;
  int target = 0;

  int query_column() const noexcept { return context_size; }
  /// First row of variable block m.
  int block_row(int m) const noexcept { return m * num_categories; }
  int positional_row() const noexcept { return num_vars * num_categories; }
};

InputMatrix encode(const Context& context, const QueryState& query);

/// Context observations recovered from the one-hot blocks. Throws if a
/// context block is not one-hot.
std::vector<Observation> decode_context(const InputMatrix& x);
/// Query recovered from the last column (zero blocks become unsampled) and
/// the target read from the positional rows.
QueryState decode_query(const InputMatrix& x);
/// Target index marked by the positional rows; throws if they do not have
/// the p / p_q layout.
int positional_target(const InputMatrix& x);

/// Training-time layout: Md one-hot rows over M positional rows that are zero
/// in context columns and one-hot(target) in the query column.
template <class T>
struct SimpleEncoding {
  Matrix<T> data;
  int num_vars = 0;
  int context_size = 0;
  int num_categories = 0;
  int target = 0;
};

inline int simple_input_rows(int num_vars, int num_categories) {
  return num_vars * num_categories + num_vars;
}

/// `visible_vars` < M hides trailing variables in context columns (curriculum).
template <class T>
SimpleEncoding<T> encode_simple(const Context& context, const QueryState& query, int visible_vars = -1);

/// Writes the simple encoding into a preallocated rows x (N+1) buffer.
template <class T>
void encode_simple_into(std::span<const Observation> observations, const QueryState& query,
                        int num_categories, int visible_vars, MatrixRef<T> out);

/// Converts an input matrix to the simple layout (same variable blocks).
template <class T>
SimpleEncoding<T> to_simple(const InputMatrix& x);

std::string matrix_to_csv(ConstMatrixRef<double> m);

}  // namespace bicl
