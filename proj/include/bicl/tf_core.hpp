#pragma once

#include <span>
#include <vector>

#include "bicl/matrix.hpp"

namespace bicl {

// ---------------------------------------------------------------------------
// Single-head primitives on f64, used by the constructed transformer.
//
//   Attn(X) = X + V X softmax[(K X)^T (Q X)]     (column-wise softmax, no scaling)
//   FF(X)   = X + W2 relu(W1 X)
//   TF(X)   = FF(Attn(X))

struct AttnParams {
  MatrixD value;  // D x D
  MatrixD key;    // k x D
  MatrixD query;  // k x D
};

struct FfParams {
  MatrixD w1;  // D x D
  MatrixD w2;  // D x D
};

struct LayerParams {
  AttnParams attn;
  FfParams ff;
};

/// Zero parameters for a D-dimensional layer with k-dimensional keys.
LayerParams zero_layer(int dim, int key_dim);

/// Column-wise softmax with the column max subtracted. Throws NumericError on NaN.
MatrixD softmax_columns(const MatrixD& scores);
MatrixD attention(const AttnParams& params, const MatrixD& x);
/// Last column of attention(params, x), computed without the other columns.
std::vector<double> attention_last_column(const AttnParams& params, const MatrixD& x);
MatrixD feed_forward(const FfParams& params, const MatrixD& x);
/// FF applied to one column.
std::vector<double> feed_forward_column(const FfParams& params, std::span<const double> z);
MatrixD tf_layer(const LayerParams& params, const MatrixD& x);
std::vector<double> read_last(const MatrixD& z);
std::vector<double> linear_head(const MatrixD& a, std::span<const double> z);

// ---------------------------------------------------------------------------
// Training-variant primitives, templated on the scalar type.

template <class T>
ConstMatrixRef<T> row_range(ConstMatrixRef<T> m, int r0, int r1) {
  return {m.data + flat_index(r0, 0, m.ld), r1 - r0, m.cols, m.ld};
}
template <class T>
MatrixRef<T> row_range(MatrixRef<T> m, int r0, int r1) {
  return {m.data + flat_index(r0, 0, m.ld), r1 - r0, m.cols, m.ld};
}

/// In-place column-wise softmax (max-subtracted). No NaN check.
template <class T>
void softmax_columns_inplace(MatrixRef<T> s);

inline constexpr double kLayerNormEps = 1e-5;

/// Normalises each column to zero mean / unit variance over the rows, then
/// applies per-row gain and bias. Optionally stores the normalised values and
/// per-column reciprocal standard deviations for the backward pass.
template <class T>
void layer_norm_columns(ConstMatrixRef<T> x, std::span<const T> gain, std::span<const T> bias,
                        MatrixRef<T> out, Matrix<T>* xhat = nullptr, std::vector<T>* rstd = nullptr,
                        T eps = T(kLayerNormEps));

template <class T>
struct MultiHeadWeights {
  ConstMatrixRef<T> wq, wk, wv, wo;  // each h x h; head k owns rows [k*h/H, (k+1)*h/H)
  int heads = 1;
  bool scale_scores = false;         // multiply scores by 1/sqrt(h/H)
  std::span<const char> head_active; // empty = all heads active
};

/// Activations kept for backprop.
template <class T>
struct MultiHeadCache {
  Matrix<T> q, k, v;            // h x Tq, h x T, h x T
  std::vector<Matrix<T>> probs;  // per head, T x Tq
  Matrix<T> concat;             // h x Tq
};

/// out (h x Tq) = [residual ? x[:, q_begin:] : 0] + Wo concat_k(V_k softmax(K_k^T Q_k)),
/// where keys and values come from every column of x and queries from
/// columns q_begin..T-1. Throws std::invalid_argument if h % heads != 0.
template <class T>
void multihead_attention(const MultiHeadWeights<T>& w, ConstMatrixRef<T> x, int q_begin,
                         MatrixRef<T> out, MultiHeadCache<T>* cache = nullptr, bool residual = true);

/// out = x + W2 relu(W1 x + b1) + b2. `pre` receives W1 x + b1 when non-null.
template <class T>
void feed_forward_biased(ConstMatrixRef<T> w1, std::span<const T> b1, ConstMatrixRef<T> w2,
                         std::span<const T> b2, ConstMatrixRef<T> x, MatrixRef<T> out,
                         Matrix<T>* pre = nullptr, Matrix<T>* act = nullptr);

}  // namespace bicl
