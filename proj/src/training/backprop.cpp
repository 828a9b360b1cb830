#include "bicl/training/backprop.hpp"

#include <cmath>
#include <utility>

#include "bicl/errors.hpp"
#include "bicl/kernels.hpp"
#include "bicl/parallel.hpp"

namespace bicl::training {

namespace {

template <class T>
MatrixRef<T> grad_mat(std::span<T> g, std::size_t offset, int rows, int cols) {
  return {g.data() + offset, rows, cols, cols};
}

template <class T>
void add_row_sums(ConstMatrixRef<T> m, T* out) {
  for (int r = 0; r < m.rows; ++r) {
    const T* row = m.row(r);
    T s = T(0);
    for (int c = 0; c < m.cols; ++c) s += row[c];
    out[r] += s;
  }
}

template <class T>
void add_bias(MatrixRef<T> m, std::span<const T> bias) {
  for (int r = 0; r < m.rows; ++r) {
    T* row = m.row(r);
    const T b = bias[static_cast<std::size_t>(r)];
    for (int c = 0; c < m.cols; ++c) row[c] += b;
  }
}

template <class T>
void add_into(MatrixRef<T> dst, ConstMatrixRef<T> src) {
  for (int r = 0; r < dst.rows; ++r) {
    T* d = dst.row(r);
    const T* s = src.row(r);
    for (int c = 0; c < dst.cols; ++c) d[c] += s[c];
  }
}

// Backward of y = gain * xhat + bias with column-wise normalisation.
template <class T>
void layer_norm_backward(ConstMatrixRef<T> dy, const Matrix<T>& xhat, const std::vector<T>& rstd,
                         std::span<const T> gain, T* d_gain, T* d_bias, MatrixRef<T> dx) {
  const int rows = dy.rows, cols = dy.cols;
  const T inv_rows = T(1) / static_cast<T>(rows);
  for (int c = 0; c < cols; ++c) {
    T mean_g = T(0), mean_gx = T(0);
    for (int r = 0; r < rows; ++r) {
      const T g = dy(r, c) * gain[static_cast<std::size_t>(r)];
      mean_g += g;
      mean_gx += g * xhat(r, c);
    }
    mean_g *= inv_rows;
    mean_gx *= inv_rows;
    const T rs = rstd[static_cast<std::size_t>(c)];
    for (int r = 0; r < rows; ++r) {
      const T g = dy(r, c) * gain[static_cast<std::size_t>(r)];
      dx(r, c) = rs * (g - mean_g - xhat(r, c) * mean_gx);
    }
  }
  for (int r = 0; r < rows; ++r) {
    const T* dr = dy.row(r);
    const T* xr = xhat.row(r);
    T sg = T(0), sb = T(0);
    for (int c = 0; c < cols; ++c) {
      sg += dr[c] * xr[c];
      sb += dr[c];
    }
    d_gain[r] += sg;
    d_bias[r] += sb;
  }
}

template <class T>
MultiHeadWeights<T> attention_weights(const TrainableModel<T>& model, int layer) {
  const auto& s = model.layout().layers[static_cast<std::size_t>(layer)];
  const int h = model.config().hidden;
  return {model.mat(s.wq, h, h), model.mat(s.wk, h, h), model.mat(s.wv, h, h), model.mat(s.wo, h, h),
          model.config().heads, model.config().scale_scores, model.head_mask(layer)};
}

}  // namespace

template <class T>
std::span<const T> forward_example(const TrainableModel<T>& model, ConstMatrixRef<T> x, Workspace<T>& ws) {
  const ModelConfig& c = model.config();
  const ParamLayout& lay = model.layout();
  const int h = c.hidden, f = c.ffn(), tokens = x.cols;
  require_shape(x.rows == c.input_rows() && tokens >= 1, "model input");
  ws.h0.resize(h, tokens);
  kernels::gemm<T>(model.mat(lay.w_in, h, x.rows), x, ws.h0.ref());
  add_bias<T>(ws.h0.ref(), model.vec(lay.b_in, h));
  ws.layers.resize(static_cast<std::size_t>(c.layers));
  ConstMatrixRef<T> cur = ws.h0.cref();
  for (int l = 0; l < c.layers; ++l) {
    LayerCache<T>& lc = ws.layers[static_cast<std::size_t>(l)];
    const LayerSlots& s = lay.layers[static_cast<std::size_t>(l)];
    const int qb = l == c.layers - 1 ? tokens - 1 : 0;
    const int tq = tokens - qb;
    lc.q_begin = qb;
    const auto gain = model.vec(s.ln_gain, h);
    const auto bias = model.vec(s.ln_bias, h);
    const MultiHeadWeights<T> w = attention_weights(model, l);
    lc.z1.resize(h, tq);
    if (c.ln_placement == LayerNormPlacement::Post) {
      multihead_attention<T>(w, cur, qb, lc.z1.ref(), &lc.mha, true);
    } else {
      lc.normed_in.resize(h, tokens);
      layer_norm_columns<T>(cur, gain, bias, lc.normed_in.ref(), &lc.xhat, &lc.rstd);
      multihead_attention<T>(w, lc.normed_in.cref(), qb, lc.z1.ref(), &lc.mha, false);
      add_into<T>(lc.z1.ref(), cur.col_range(qb, tokens));
    }
    lc.z2.resize(h, tq);
    feed_forward_biased<T>(model.mat(s.w1, f, h), model.vec(s.b1, f), model.mat(s.w2, h, f), model.vec(s.b2, h),
                           lc.z1.cref(), lc.z2.ref(), &lc.ff_pre, &lc.ff_act);
    if (c.ln_placement == LayerNormPlacement::Post) {
      lc.out.resize(h, tq);
      layer_norm_columns<T>(lc.z2.cref(), gain, bias, lc.out.ref(), &lc.xhat, &lc.rstd);
    } else {
      lc.out = lc.z2;
    }
    cur = lc.out.cref();
  }
  const int d = c.num_categories;
  ws.logits.resize(static_cast<std::size_t>(d));
  const ConstMatrixRef<T> w_out = model.mat(lay.w_out, d, h);
  const auto b_out = model.vec(lay.b_out, d);
  for (int r = 0; r < d; ++r) {
    T acc = b_out[static_cast<std::size_t>(r)];
    for (int j = 0; j < h; ++j) acc += w_out(r, j) * cur(j, 0);
    ws.logits[static_cast<std::size_t>(r)] = acc;
  }
  return ws.logits;
}

template <class T>
void backward_example(const TrainableModel<T>& model, ConstMatrixRef<T> x, Workspace<T>& ws,
                      std::span<const T> d_logits, std::span<T> grads) {
  const ModelConfig& c = model.config();
  const ParamLayout& lay = model.layout();
  const int h = c.hidden, f = c.ffn(), d = c.num_categories, tokens = x.cols;
  const int hd = h / c.heads;
  require_shape(static_cast<int>(d_logits.size()) == d && grads.size() == lay.total() &&
                    static_cast<int>(ws.layers.size()) == c.layers && ws.h0.cols() == tokens,
                "backward_example");
  const T scale = c.scale_scores ? T(1) / std::sqrt(static_cast<T>(hd)) : T(1);

  const Matrix<T>& last = ws.layers.back().out;
  const ConstMatrixRef<T> w_out = model.mat(lay.w_out, d, h);
  MatrixRef<T> g_wout = grad_mat(grads, lay.w_out, d, h);
  ws.d_cur.resize(h, 1);
  ws.d_cur.fill(T(0));
  for (int r = 0; r < d; ++r) {
    const T dl = d_logits[static_cast<std::size_t>(r)];
    grads[lay.b_out + static_cast<std::size_t>(r)] += dl;
    for (int j = 0; j < h; ++j) {
      g_wout(r, j) += dl * last(j, 0);
      ws.d_cur(j, 0) += w_out(r, j) * dl;
    }
  }

  for (int l = c.layers - 1; l >= 0; --l) {
    LayerCache<T>& lc = ws.layers[static_cast<std::size_t>(l)];
    const LayerSlots& s = lay.layers[static_cast<std::size_t>(l)];
    const int qb = lc.q_begin, tq = tokens - qb;
    const ConstMatrixRef<T> input = l == 0 ? ws.h0.cref() : ws.layers[static_cast<std::size_t>(l - 1)].out.cref();
    const auto gain = model.vec(s.ln_gain, h);
    T* g_gain = grads.data() + s.ln_gain;
    T* g_bias = grads.data() + s.ln_bias;
    const bool post = c.ln_placement == LayerNormPlacement::Post;

    // d(z2): through the output layer norm for Post placement.
    Matrix<T>* dz = &ws.d_cur;
    if (post) {
      ws.d_z.resize(h, tq);
      layer_norm_backward<T>(ws.d_cur.cref(), lc.xhat, lc.rstd, gain, g_gain, g_bias, ws.d_z.ref());
      dz = &ws.d_z;
    }

    // Feed-forward block; dz becomes d(z1) in place.
    add_row_sums<T>(dz->cref(), grads.data() + s.b2);
    kernels::gemm_nt<T>(dz->cref(), lc.ff_act.cref(), grad_mat(grads, s.w2, h, f), true);
    ws.d_act.resize(f, tq);
    kernels::gemm_tn<T>(model.mat(s.w2, h, f), dz->cref(), ws.d_act.ref());
    for (int r = 0; r < f; ++r) {
      T* da = ws.d_act.row(r);
      const T* pre = lc.ff_pre.row(r);
      for (int j = 0; j < tq; ++j)
        if (!(pre[j] > T(0))) da[j] = T(0);
    }
    add_row_sums<T>(ws.d_act.cref(), grads.data() + s.b1);
    kernels::gemm_nt<T>(ws.d_act.cref(), lc.z1.cref(), grad_mat(grads, s.w1, f, h), true);
    kernels::gemm_tn<T>(model.mat(s.w1, f, h), ws.d_act.cref(), dz->ref(), true);

    // Attention block.
    ws.d_next.resize(h, tokens);
    ws.d_next.fill(T(0));
    add_into<T>(ws.d_next.ref().col_range(qb, tokens), dz->cref());
    kernels::gemm_nt<T>(dz->cref(), lc.mha.concat.cref(), grad_mat(grads, s.wo, h, h), true);
    ws.d_concat.resize(h, tq);
    kernels::gemm_tn<T>(model.mat(s.wo, h, h), dz->cref(), ws.d_concat.ref());

    ws.d_q.resize(h, tq);
    ws.d_k.resize(h, tokens);
    ws.d_v.resize(h, tokens);
    for (int k = 0; k < c.heads; ++k) {
      const int r0 = k * hd, r1 = (k + 1) * hd;
      MatrixRef<T> dq = row_range(ws.d_q.ref(), r0, r1);
      MatrixRef<T> dk = row_range(ws.d_k.ref(), r0, r1);
      MatrixRef<T> dv = row_range(ws.d_v.ref(), r0, r1);
      if (!model.head_active(l, k)) {
        for (int r = 0; r < hd; ++r) {
          std::fill_n(dq.row(r), tq, T(0));
          std::fill_n(dk.row(r), tokens, T(0));
          std::fill_n(dv.row(r), tokens, T(0));
        }
        continue;
      }
      const Matrix<T>& a = lc.mha.probs[static_cast<std::size_t>(k)];
      const ConstMatrixRef<T> d_out = row_range(ws.d_concat.cref(), r0, r1);
      kernels::gemm_nt<T>(d_out, a.cref(), dv);
      ws.d_scores.resize(tokens, tq);
      kernels::gemm_tn<T>(row_range(lc.mha.v.cref(), r0, r1), d_out, ws.d_scores.ref());
      for (int j = 0; j < tq; ++j) {
        T dot = T(0);
        for (int i = 0; i < tokens; ++i) dot += a(i, j) * ws.d_scores(i, j);
        for (int i = 0; i < tokens; ++i) ws.d_scores(i, j) = a(i, j) * (ws.d_scores(i, j) - dot) * scale;
      }
      kernels::gemm_nt<T>(row_range(lc.mha.q.cref(), r0, r1), ws.d_scores.cref(), dk);
      kernels::gemm<T>(row_range(lc.mha.k.cref(), r0, r1), ws.d_scores.cref(), dq);
    }
    const ConstMatrixRef<T> u = post ? input : lc.normed_in.cref();
    kernels::gemm_nt<T>(ws.d_q.cref(), u.col_range(qb, tokens), grad_mat(grads, s.wq, h, h), true);
    kernels::gemm_nt<T>(ws.d_k.cref(), u, grad_mat(grads, s.wk, h, h), true);
    kernels::gemm_nt<T>(ws.d_v.cref(), u, grad_mat(grads, s.wv, h, h), true);
    ws.d_u.resize(h, tokens);
    kernels::gemm_tn<T>(model.mat(s.wk, h, h), ws.d_k.cref(), ws.d_u.ref());
    kernels::gemm_tn<T>(model.mat(s.wv, h, h), ws.d_v.cref(), ws.d_u.ref(), true);
    kernels::gemm_tn<T>(model.mat(s.wq, h, h), ws.d_q.cref(), ws.d_u.ref().col_range(qb, tokens), true);
    if (post) {
      add_into<T>(ws.d_next.ref(), ws.d_u.cref());
    } else {
      ws.d_u_ln.resize(h, tokens);
      layer_norm_backward<T>(ws.d_u.cref(), lc.xhat, lc.rstd, gain, g_gain, g_bias, ws.d_u_ln.ref());
      add_into<T>(ws.d_next.ref(), ws.d_u_ln.cref());
    }
    std::swap(ws.d_cur, ws.d_next);
  }

  kernels::gemm_nt<T>(ws.d_cur.cref(), x, grad_mat(grads, lay.w_in, h, x.rows), true);
  add_row_sums<T>(ws.d_cur.cref(), grads.data() + lay.b_in);
}

template <class T>
std::vector<double> softmax_probs(std::span<const T> logits) {
  std::vector<double> p(logits.size());
  double mx = -INFINITY;
  for (T v : logits) mx = std::max(mx, static_cast<double>(v));
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(static_cast<double>(logits[i]) - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

template <class T>
Matrix<T> forward_logits(const TrainableModel<T>& model, std::span<const Matrix<T>> batch) {
  const int n = static_cast<int>(batch.size()), d = model.config().num_categories;
  Matrix<T> out(n, d);
  parallel_for(n, [&](int b) {
    thread_local Workspace<T> ws;
    const auto logits = forward_example<T>(model, batch[static_cast<std::size_t>(b)].cref(), ws);
    std::copy(logits.begin(), logits.end(), out.row(b));
  });
  return out;
}

template <class T>
double cross_entropy(ConstMatrixRef<T> logits, std::span<const int> labels, Matrix<T>* d_logits) {
  const int n = logits.rows, d = logits.cols;
  require_shape(static_cast<int>(labels.size()) == n && n > 0, "cross_entropy labels");
  if (d_logits) d_logits->resize(n, d);
  double total = 0.0;
  for (int b = 0; b < n; ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    if (y < 0 || y >= d) throw std::invalid_argument("cross_entropy: label out of range");
    const auto p = softmax_probs<T>(std::span<const T>(logits.row(b), static_cast<std::size_t>(d)));
    double mx = -INFINITY;
    for (int r = 0; r < d; ++r) mx = std::max(mx, static_cast<double>(logits(b, r)));
    double lse = 0.0;
    for (int r = 0; r < d; ++r) lse += std::exp(static_cast<double>(logits(b, r)) - mx);
    total += mx + std::log(lse) - static_cast<double>(logits(b, y));
    if (d_logits)
      for (int r = 0; r < d; ++r)
        (*d_logits)(b, r) = static_cast<T>((p[static_cast<std::size_t>(r)] - (r == y ? 1.0 : 0.0)) / n);
  }
  return total / n;
}

template <class T>
double loss_and_gradients(const TrainableModel<T>& model, std::span<const Matrix<T>> batch,
                          std::span<const int> labels, std::vector<T>& grads, GradientScratch<T>& scratch) {
  const int n = static_cast<int>(batch.size());
  require_shape(static_cast<int>(labels.size()) == n && n > 0, "loss_and_gradients labels");
  const std::size_t total = model.layout().total();
  const int d = model.config().num_categories;
  const int groups = std::min(kGradientGroups, n);
  scratch.group_grads.resize(static_cast<std::size_t>(groups));
  scratch.workspaces.resize(static_cast<std::size_t>(groups));
  std::vector<double> losses(static_cast<std::size_t>(n), 0.0);
  parallel_for(groups, [&](int g) {
    auto& acc = scratch.group_grads[static_cast<std::size_t>(g)];
    acc.assign(total, T(0));
    Workspace<T>& ws = scratch.workspaces[static_cast<std::size_t>(g)];
    std::vector<T> d_logits(static_cast<std::size_t>(d));
    for (int b = g; b < n; b += groups) {
      const ConstMatrixRef<T> x = batch[static_cast<std::size_t>(b)].cref();
      const int y = labels[static_cast<std::size_t>(b)];
      if (y < 0 || y >= d) throw std::invalid_argument("loss_and_gradients: label out of range");
      const auto logits = forward_example<T>(model, x, ws);
      const auto p = softmax_probs<T>(logits);
      losses[static_cast<std::size_t>(b)] = -std::log(std::max(p[static_cast<std::size_t>(y)], 1e-300));
      for (int r = 0; r < d; ++r)
        d_logits[static_cast<std::size_t>(r)] =
            static_cast<T>((p[static_cast<std::size_t>(r)] - (r == y ? 1.0 : 0.0)) / n);
      backward_example<T>(model, x, ws, d_logits, acc);
    }
  });
  grads.assign(total, T(0));
  const long long count = static_cast<long long>(total);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < count; ++i) {
    T s = T(0);
    for (int g = 0; g < groups; ++g) s += scratch.group_grads[static_cast<std::size_t>(g)][static_cast<std::size_t>(i)];
    grads[static_cast<std::size_t>(i)] = s;
  }
  double loss = 0.0;
  for (double v : losses) loss += v;
  return loss / n;
}

#define BICL_INSTANTIATE_BACKPROP(T)                                                                  \
  template std::span<const T> forward_example<T>(const TrainableModel<T>&, ConstMatrixRef<T>,        \
                                                 Workspace<T>&);                                    \
  template void backward_example<T>(const TrainableModel<T>&, ConstMatrixRef<T>, Workspace<T>&,      \
                                    std::span<const T>, std::span<T>);                              \
  template std::vector<double> softmax_probs<T>(std::span<const T>);                                 \
  template Matrix<T> forward_logits<T>(const TrainableModel<T>&, std::span<const Matrix<T>>);        \
  template double cross_entropy<T>(ConstMatrixRef<T>, std::span<const int>, Matrix<T>*);             \
  template double loss_and_gradients<T>(const TrainableModel<T>&, std::span<const Matrix<T>>,        \
                                        std::span<const int>, std::vector<T>&, GradientScratch<T>&);

BICL_INSTANTIATE_BACKPROP(float)
BICL_INSTANTIATE_BACKPROP(double)

}  // namespace bicl::training
