#include "bicl/tf_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bicl/errors.hpp"
#include "bicl/kernels.hpp"

namespace bicl {

LayerParams zero_layer(int dim, int key_dim) {
  return {{MatrixD(dim, dim), MatrixD(key_dim, dim), MatrixD(key_dim, dim)},
          {MatrixD(dim, dim), MatrixD(dim, dim)}};
}

template <class T>
void softmax_columns_inplace(MatrixRef<T> s) {
  const int rows = s.rows, cols = s.cols;
  if (rows == 0) return;
  std::vector<T> colmax(s.row(0), s.row(0) + cols);
  for (int r = 1; r < rows; ++r) {
    const T* row = s.row(r);
    for (int c = 0; c < cols; ++c) colmax[static_cast<std::size_t>(c)] = std::max(colmax[static_cast<std::size_t>(c)], row[c]);
  }
  std::vector<T> sum(static_cast<std::size_t>(cols), T(0));
  for (int r = 0; r < rows; ++r) {
    T* row = s.row(r);
    for (int c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - colmax[static_cast<std::size_t>(c)]);
      sum[static_cast<std::size_t>(c)] += row[c];
    }
  }
  for (auto& v : sum) v = T(1) / v;
  for (int r = 0; r < rows; ++r) {
    T* row = s.row(r);
    for (int c = 0; c < cols; ++c) row[c] *= sum[static_cast<std::size_t>(c)];
  }
}

MatrixD softmax_columns(const MatrixD& scores) {
  for (double v : scores.values())
    if (std::isnan(v)) throw NumericError("softmax_columns: NaN score");
  MatrixD out = scores;
  softmax_columns_inplace<double>(out.ref());
  return out;
}

namespace {

void check_attention_shapes(const AttnParams& p, const MatrixD& x) {
  const int dim = x.rows();
  require_shape(p.value.rows() == dim && p.value.cols() == dim, "attention V");
  require_shape(p.key.cols() == dim && p.query.cols() == dim, "attention K/Q columns");
  require_shape(p.key.rows() == p.query.rows(), "attention K/Q rows");
  require_shape(x.cols() >= 1, "attention needs at least one column");
}

}  // namespace

MatrixD attention(const AttnParams& p, const MatrixD& x) {
  check_attention_shapes(p, x);
  const MatrixD kx = kernels::matmul(p.key, x);
  const MatrixD qx = kernels::matmul(p.query, x);
  MatrixD scores(x.cols(), x.cols());
  kernels::gemm_tn<double>(kx.ref(), qx.ref(), scores.ref());
  const MatrixD probs = softmax_columns(scores);
  const MatrixD vx = kernels::matmul(p.value, x);
  MatrixD out = x;
  kernels::gemm<double>(vx.ref(), probs.ref(), out.ref(), /*accumulate=*/true);
  return out;
}

std::vector<double> attention_last_column(const AttnParams& p, const MatrixD& x) {
  check_attention_shapes(p, x);
  const int last = x.cols() - 1;
  const MatrixD kx = kernels::matmul(p.key, x);
  MatrixD qlast(p.query.rows(), 1);
  kernels::gemm<double>(p.query.ref(), x.ref().col_range(last, last + 1), qlast.ref());
  MatrixD scores(x.cols(), 1);
  kernels::gemm_tn<double>(kx.ref(), qlast.ref(), scores.ref());
  const MatrixD probs = softmax_columns(scores);
  // V X softmax = V (X softmax): mix the columns first, then one mat-vec.
  MatrixD mixed(x.rows(), 1);
  kernels::gemm<double>(x.ref(), probs.ref(), mixed.ref());
  MatrixD delta(x.rows(), 1);
  kernels::gemm<double>(p.value.ref(), mixed.ref(), delta.ref());
  std::vector<double> out = x.column(last);
  for (int r = 0; r < x.rows(); ++r) out[static_cast<std::size_t>(r)] += delta(r, 0);
  return out;
}

MatrixD feed_forward(const FfParams& p, const MatrixD& x) {
  const int dim = x.rows();
  require_shape(p.w1.rows() == dim && p.w1.cols() == dim && p.w2.rows() == dim && p.w2.cols() == dim,
                "feed_forward weights");
  MatrixD hidden = kernels::matmul(p.w1, x);
  for (double& v : hidden.values()) v = v > 0.0 ? v : 0.0;
  MatrixD out = x;
  kernels::gemm<double>(p.w2.ref(), hidden.ref(), out.ref(), /*accumulate=*/true);
  return out;
}

std::vector<double> feed_forward_column(const FfParams& p, std::span<const double> z) {
  MatrixD col(static_cast<int>(z.size()), 1);
  std::copy(z.begin(), z.end(), col.data());
  return feed_forward(p, col).column(0);
}

MatrixD tf_layer(const LayerParams& params, const MatrixD& x) {
  return feed_forward(params.ff, attention(params.attn, x));
}

std::vector<double> read_last(const MatrixD& z) {
  if (z.cols() < 1) throw std::invalid_argument("read_last: matrix has no columns");
  return z.column(z.cols() - 1);
}

std::vector<double> linear_head(const MatrixD& a, std::span<const double> z) {
  require_shape(a.cols() == static_cast<int>(z.size()), "linear_head");
  std::vector<double> out(static_cast<std::size_t>(a.rows()), 0.0);
  for (int r = 0; r < a.rows(); ++r) {
    double acc = 0.0;
    for (int c = 0; c < a.cols(); ++c) acc += a(r, c) * z[static_cast<std::size_t>(c)];
    out[static_cast<std::size_t>(r)] = acc;
  }
  return out;
}

template <class T>
void layer_norm_columns(ConstMatrixRef<T> x, std::span<const T> gain, std::span<const T> bias,
                        MatrixRef<T> out, Matrix<T>* xhat, std::vector<T>* rstd, T eps) {
  const int rows = x.rows, cols = x.cols;
  require_shape(out.rows == rows && out.cols == cols, "layer_norm output");
  require_shape(static_cast<int>(gain.size()) == rows && static_cast<int>(bias.size()) == rows,
                "layer_norm gain/bias");
  std::vector<T> mean(static_cast<std::size_t>(cols), T(0)), var(static_cast<std::size_t>(cols), T(0));
  for (int r = 0; r < rows; ++r) {
    const T* xr = x.row(r);
    for (int c = 0; c < cols; ++c) mean[static_cast<std::size_t>(c)] += xr[c];
  }
  const T inv_rows = T(1) / static_cast<T>(rows);
  for (auto& m : mean) m *= inv_rows;
  for (int r = 0; r < rows; ++r) {
    const T* xr = x.row(r);
    for (int c = 0; c < cols; ++c) {
      const T dv = xr[c] - mean[static_cast<std::size_t>(c)];
      var[static_cast<std::size_t>(c)] += dv * dv;
    }
  }
  for (auto& v : var) v = T(1) / std::sqrt(v * inv_rows + eps);
  if (xhat) xhat->resize(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const T* xr = x.row(r);
    T* orow = out.row(r);
    T* hrow = xhat ? xhat->row(r) : nullptr;
    const T g = gain[static_cast<std::size_t>(r)], b = bias[static_cast<std::size_t>(r)];
    for (int c = 0; c < cols; ++c) {
      const T n = (xr[c] - mean[static_cast<std::size_t>(c)]) * var[static_cast<std::size_t>(c)];
      if (hrow) hrow[c] = n;
      orow[c] = g * n + b;
    }
  }
  if (rstd) *rstd = std::move(var);
}

template <class T>
void multihead_attention(const MultiHeadWeights<T>& w, ConstMatrixRef<T> x, int q_begin,
                         MatrixRef<T> out, MultiHeadCache<T>* cache, bool residual) {
  const int h = x.rows, tokens = x.cols, tq = tokens - q_begin;
  if (w.heads < 1 || h % w.heads != 0)
    throw std::invalid_argument("multihead_attention: hidden width not divisible by head count");
  require_shape(w.wq.rows == h && w.wq.cols == h && w.wk.rows == h && w.wv.rows == h && w.wo.rows == h,
                "multihead weights");
  require_shape(out.rows == h && out.cols == tq && q_begin >= 0 && q_begin < tokens, "multihead output");
  MultiHeadCache<T> local;
  MultiHeadCache<T>& c = cache ? *cache : local;
  const ConstMatrixRef<T> xq = x.col_range(q_begin, tokens);
  c.q.resize(h, tq);
  c.k.resize(h, tokens);
  c.v.resize(h, tokens);
  kernels::gemm<T>(w.wq, xq, c.q.ref());
  kernels::gemm<T>(w.wk, x, c.k.ref());
  kernels::gemm<T>(w.wv, x, c.v.ref());
  const int hd = h / w.heads;
  const T scale = w.scale_scores ? T(1) / std::sqrt(static_cast<T>(hd)) : T(1);
  c.probs.resize(static_cast<std::size_t>(w.heads));
  c.concat.resize(h, tq);
  for (int k = 0; k < w.heads; ++k) {
    auto& probs = c.probs[static_cast<std::size_t>(k)];
    probs.resize(tokens, tq);
    const bool active = w.head_active.empty() || w.head_active[static_cast<std::size_t>(k)];
    MatrixRef<T> ok = row_range(c.concat.ref(), k * hd, (k + 1) * hd);
    if (!active) {
      probs.fill(T(0));
      for (int r = 0; r < hd; ++r) std::fill_n(ok.row(r), tq, T(0));
      continue;
    }
    kernels::gemm_tn<T>(row_range(c.k.cref(), k * hd, (k + 1) * hd),
                        row_range(c.q.cref(), k * hd, (k + 1) * hd), probs.ref());
    if (scale != T(1))
      for (T& v : probs.values()) v *= scale;
    softmax_columns_inplace<T>(probs.ref());
    kernels::gemm<T>(row_range(c.v.cref(), k * hd, (k + 1) * hd), probs.cref(), ok);
  }
  kernels::gemm<T>(w.wo, c.concat.cref(), out);
  if (residual)
    for (int r = 0; r < h; ++r) {
      T* orow = out.row(r);
      const T* xr = xq.row(r);
      for (int j = 0; j < tq; ++j) orow[j] += xr[j];
    }
}

template <class T>
void feed_forward_biased(ConstMatrixRef<T> w1, std::span<const T> b1, ConstMatrixRef<T> w2,
                         std::span<const T> b2, ConstMatrixRef<T> x, MatrixRef<T> out,
                         Matrix<T>* pre, Matrix<T>* act) {
  const int inner = w1.rows, cols = x.cols;
  require_shape(w1.cols == x.rows && w2.rows == x.rows && w2.cols == inner, "feed_forward_biased");
  require_shape(out.rows == x.rows && out.cols == cols, "feed_forward_biased output");
  Matrix<T> local_pre, local_act;
  Matrix<T>& z = pre ? *pre : local_pre;
  Matrix<T>& a = act ? *act : local_act;
  z.resize(inner, cols);
  a.resize(inner, cols);
  kernels::gemm<T>(w1, x, z.ref());
  for (int r = 0; r < inner; ++r) {
    T* zr = z.row(r);
    T* ar = a.row(r);
    const T b = b1[static_cast<std::size_t>(r)];
    for (int j = 0; j < cols; ++j) {
      zr[j] += b;
      ar[j] = zr[j] > T(0) ? zr[j] : T(0);
    }
  }
  kernels::gemm<T>(w2, a.cref(), out);
  for (int r = 0; r < x.rows; ++r) {
    T* orow = out.row(r);
    const T* xr = x.row(r);
    const T b = b2[static_cast<std::size_t>(r)];
    for (int j = 0; j < cols; ++j) orow[j] += xr[j] + b;
  }
}

#define BICL_INSTANTIATE_TF(T)                                                                         \
  template void softmax_columns_inplace<T>(MatrixRef<T>);                                              \
  template void layer_norm_columns<T>(ConstMatrixRef<T>, std::span<const T>, std::span<const T>,       \
                                      MatrixRef<T>, Matrix<T>*, std::vector<T>*, T);                   \
  template void multihead_attention<T>(const MultiHeadWeights<T>&, ConstMatrixRef<T>, int,             \
                                       MatrixRef<T>, MultiHeadCache<T>*, bool);                        \
  template void feed_forward_biased<T>(ConstMatrixRef<T>, std::span<const T>, ConstMatrixRef<T>,       \
                                       std::span<const T>, ConstMatrixRef<T>, MatrixRef<T>, Matrix<T>*, \
                                       Matrix<T>*);

BICL_INSTANTIATE_TF(float)
BICL_INSTANTIATE_TF(double)

}  // namespace bicl
