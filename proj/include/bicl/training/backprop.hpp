#pragma once

#include <span>
#include <vector>

#include "bicl/matrix.hpp"
#include "bicl/tf_core.hpp"
#include "bicl/training/model.hpp"

namespace bicl::training {

template <class T>
struct LayerCache {
  int q_begin = 0;
  Matrix<T> normed_in;  // Pre placement: LN(input), the attention input
  Matrix<T> z1;         // after attention + residual, h x Tq
  Matrix<T> ff_pre, ff_act;
  Matrix<T> z2;         // after feed-forward + residual
  Matrix<T> xhat;
  std::vector<T> rstd;
  Matrix<T> out;        // layer output, h x Tq
  MultiHeadCache<T> mha;
};

/// Activations of one forward pass plus scratch for the backward pass.
template <class T>
struct Workspace {
  Matrix<T> h0;
  std::vector<LayerCache<T>> layers;
  std::vector<T> logits;
  Matrix<T> d_cur, d_next, d_z, d_act, d_concat, d_u, d_u_ln;
  Matrix<T> d_q, d_k, d_v, d_scores;
};

/// Runs the model on one encoded example (input_rows x T) and returns the
/// logits of the query (last) column. Only the last layer's query column is
/// computed for the final layer.
template <class T>
std::span<const T> forward_example(const TrainableModel<T>& model, ConstMatrixRef<T> x, Workspace<T>& ws);

/// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(logits) and the
/// workspace filled by forward_example on the same input.
template <class T>
void backward_example(const TrainableModel<T>& model, ConstMatrixRef<T> x, Workspace<T>& ws,
                      std::span<const T> d_logits, std::span<T> grads);

/// Logits for a batch, one row per example (batch x d).
template <class T>
Matrix<T> forward_logits(const TrainableModel<T>& model, std::span<const Matrix<T>> batch);

/// Mean cross-entropy of logits (batch x d) against labels. When `d_logits`
/// is non-null it receives the gradient of the mean loss.
template <class T>
double cross_entropy(ConstMatrixRef<T> logits, std::span<const int> labels, Matrix<T>* d_logits = nullptr);

/// Softmax of one logit row, computed in double.
template <class T>
std::vector<double> softmax_probs(std::span<const T> logits);

/// Reusable buffers for loss_and_gradients.
template <class T>
struct GradientScratch {
  std::vector<std::vector<T>> group_grads;
  std::vector<Workspace<T>> workspaces;
};

/// Number of fixed accumulation groups. Examples are assigned to groups by
/// index and groups are summed in order, so the result does not depend on
/// the thread count.
inline constexpr int kGradientGroups = 8;

/// Mean cross-entropy over the batch; `grads` (resized to the parameter
/// count) receives its gradient.
template <class T>
double loss_and_gradients(const TrainableModel<T>& model, std::span<const Matrix<T>> batch,
                          std::span<const int> labels, std::vector<T>& grads, GradientScratch<T>& scratch);

template <class T>
double loss_and_gradients(const TrainableModel<T>& model, std::span<const Matrix<T>> batch,
                          std::span<const int> labels, std::vector<T>& grads) {
  GradientScratch<T> scratch;
  return loss_and_gradients(model, batch, labels, grads, scratch);
}

}  // namespace bicl::training
