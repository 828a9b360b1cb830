#include "bicl/encoding.hpp"

#include <algorithm>
#include <charconv>
#include <stdexcept>

namespace bicl {

QueryState QueryState::autoregressive(std::span<const int> values, int target) {
  QueryState q;
  q.sampled.resize(values.size());
  q.target = target;
  for (int m = 0; m < target && m < static_cast<int>(values.size()); ++m)
    q.sampled[static_cast<std::size_t>(m)] = values[static_cast<std::size_t>(m)];
  return q;
}

QueryState QueryState::free_form(std::span<const std::optional<int>> values, int target) {
  QueryState q;
  q.sampled.assign(values.begin(), values.end());
  q.target = target;
  if (target >= 0 && target < q.num_vars()) q.sampled[static_cast<std::size_t>(target)].reset();
  return q;
}

bool QueryState::is_autoregressive() const {
  for (int m = 0; m < num_vars(); ++m)
    if (sampled[static_cast<std::size_t>(m)].has_value() != (m < target)) return false;
  return true;
}

std::vector<int> QueryState::values_or_missing() const {
  std::vector<int> out(sampled.size(), -1);
  for (std::size_t m = 0; m < sampled.size(); ++m)
    if (sampled[m]) out[m] = *sampled[m];
  return out;
}

void QueryState::validate(int num_categories, bool autoregressive) const {
  if (target < 0 || target >= num_vars())
    throw std::invalid_argument("QueryState: target " + std::to_string(target) + " out of range");
  if (sampled[static_cast<std::size_t>(target)])
    throw std::invalid_argument("QueryState: target variable is already sampled");
  for (const auto& v : sampled)
    if (v && (*v < 0 || *v >= num_categories))
      throw std::invalid_argument("QueryState: category out of range");
  if (autoregressive && !is_autoregressive())
    throw std::invalid_argument("QueryState: not in autoregressive order");
}

Positional build_positional(int target, int num_vars, int num_categories) {
  if (num_vars < 1 || num_categories < 1)
    throw std::invalid_argument("build_positional: bad dimensions");
  if (target < 0 || target >= num_vars)
    throw std::invalid_argument("build_positional: target " + std::to_string(target) +
                                " out of range");
  const auto len = static_cast<std::size_t>((num_vars + 1) * num_categories);
  Positional pos{std::vector<double>(len, 0.0), std::vector<double>(len, 0.0)};
  for (int j = 0; j < num_categories; ++j) {
    const auto at = static_cast<std::size_t>(target * num_categories + j);
    pos.p[at] = 1.0;
    pos.p_q[at] = 1.0;
    pos.p_q[static_cast<std::size_t>(num_vars * num_categories + j)] = 1.0;
  }
  return pos;
}

namespace {

void check_shapes(const Context& context, const QueryState& query) {
  context.validate();
  if (query.num_vars() != context.num_vars)
    throw std::invalid_argument("encode: query and context disagree on M");
  query.validate(context.num_categories);
}

}  // namespace

InputMatrix encode(const Context& context, const QueryState& query) {
  check_shapes(context, query);
  const int M = context.num_vars, d = context.num_categories, N = context.size();
  InputMatrix x{MatrixD((2 * M + 1) * d, N + 1), M, N, d, query.target};
  for (int i = 0; i < N; ++i) {
    const auto& obs = context.observations[static_cast<std::size_t>(i)];
    for (int m = 0; m < M; ++m) x.data(m * d + obs[static_cast<std::size_t>(m)], i) = 1.0;
  }
  for (int m = 0; m < M; ++m)
    if (const auto& v = query.sampled[static_cast<std::size_t>(m)]) x.data(m * d + *v, N) = 1.0;
  const auto pos = build_positional(query.target, M, d);
  const int base = M * d;
  for (std::size_t r = 0; r < pos.p.size(); ++r) {
    for (int i = 0; i < N; ++i) x.data(base + static_cast<int>(r), i) = pos.p[r];
    x.data(base + static_cast<int>(r), N) = pos.p_q[r];
  }
  return x;
}

std::vector<Observation> decode_context(const InputMatrix& x) {
  const int M = x.num_vars, d = x.num_categories;
  std::vector<Observation> out(static_cast<std::size_t>(x.context_size), Observation(static_cast<std::size_t>(M)));
  for (int i = 0; i < x.context_size; ++i)
    for (int m = 0; m < M; ++m) {
      int found = -1;
      for (int j = 0; j < d; ++j) {
        const double v = x.data(m * d + j, i);
        if (v == 1.0 && found < 0) {
          found = j;
        } else if (v != 0.0) {
          found = -2;
          break;
        }
      }
      if (found < 0) throw std::invalid_argument("decode_context: block is not one-hot");
      out[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)] = found;
    }
  return out;
}

int positional_target(const InputMatrix& x) {
  const int M = x.num_vars, d = x.num_categories, base = M * d, q = x.query_column();
  int target = -1;
  for (int m = 0; m < M && target < 0; ++m)
    if (x.data(base + m * d, q) == 1.0) target = m;
  if (target < 0) throw std::invalid_argument("positional rows mark no target");
  const auto pos = build_positional(target, M, d);
  for (int r = 0; r < (M + 1) * d; ++r) {
    const auto idx = static_cast<std::size_t>(r);
    for (int i = 0; i < x.context_size; ++i)
      if (x.data(base + r, i) != pos.p[idx])
        throw std::invalid_argument("positional rows do not match p for target " + std::to_string(target));
    if (x.data(base + r, q) != pos.p_q[idx])
      throw std::invalid_argument("positional rows do not match p_q for target " + std::to_string(target));
  }
  return target;
}

QueryState decode_query(const InputMatrix& x) {
  const int M = x.num_vars, d = x.num_categories, q = x.query_column();
  QueryState state;
  state.sampled.resize(static_cast<std::size_t>(M));
  state.target = positional_target(x);
  for (int m = 0; m < M; ++m)
    for (int j = 0; j < d; ++j)
      if (x.data(m * d + j, q) == 1.0) state.sampled[static_cast<std::size_t>(m)] = j;
  return state;
}

template <class T>
void encode_simple_into(std::span<const Observation> observations, const QueryState& query,
                        int num_categories, int visible_vars, MatrixRef<T> out) {
  const int M = query.num_vars(), d = num_categories, N = static_cast<int>(observations.size());
  require_shape(out.rows == simple_input_rows(M, d) && out.cols == N + 1, "encode_simple_into");
  if (visible_vars < 0 || visible_vars > M) visible_vars = M;
  for (int r = 0; r < out.rows; ++r) std::fill_n(out.row(r), out.cols, T(0));
  for (int i = 0; i < N; ++i) {
    const auto& obs = observations[static_cast<std::size_t>(i)];
    for (int m = 0; m < visible_vars; ++m) out(m * d + obs[static_cast<std::size_t>(m)], i) = T(1);
  }
  for (int m = 0; m < M; ++m)
    if (const auto& v = query.sampled[static_cast<std::size_t>(m)]) out(m * d + *v, N) = T(1);
  out(M * d + query.target, N) = T(1);
}

template <class T>
SimpleEncoding<T> encode_simple(const Context& context, const QueryState& query, int visible_vars) {
  check_shapes(context, query);
  const int M = context.num_vars, d = context.num_categories, N = context.size();
  SimpleEncoding<T> enc{Matrix<T>(simple_input_rows(M, d), N + 1), M, N, d, query.target};
  encode_simple_into<T>(context.observations, query, d, visible_vars, enc.data.ref());
  return enc;
}

template <class T>
SimpleEncoding<T> to_simple(const InputMatrix& x) {
  const int M = x.num_vars, d = x.num_categories, cols = x.context_size + 1;
  SimpleEncoding<T> enc{Matrix<T>(simple_input_rows(M, d), cols), M, x.context_size, d, x.target};
  for (int r = 0; r < M * d; ++r)
    for (int c = 0; c < cols; ++c) enc.data(r, c) = static_cast<T>(x.data(r, c));
  enc.data(M * d + x.target, x.context_size) = T(1);
  return enc;
}

std::string matrix_to_csv(ConstMatrixRef<double> m) {
  std::string out;
  char buf[32];
  for (int r = 0; r < m.rows; ++r) {
    for (int c = 0; c < m.cols; ++c) {
      if (c) out += ',';
      auto res = std::to_chars(buf, buf + sizeof buf, m(r, c));
      out.append(buf, res.ptr);
    }
    out += '\n';
  }
  return out;
}

template SimpleEncoding<float> encode_simple<float>(const Context&, const QueryState&, int);
template SimpleEncoding<double> encode_simple<double>(const Context&, const QueryState&, int);
template void encode_simple_into<float>(std::span<const Observation>, const QueryState&, int, int, MatrixRef<float>);
template void encode_simple_into<double>(std::span<const Observation>, const QueryState&, int, int, MatrixRef<double>);
template SimpleEncoding<float> to_simple<float>(const InputMatrix&);
template SimpleEncoding<double> to_simple<double>(const InputMatrix&);

}  // namespace bicl
