#include "bicl/construction.hpp"

#include <algorithm>
#include <cmath>

#include "bicl/errors.hpp"
#include "bicl/kernels.hpp"

namespace bicl {

double default_sharpness(int num_vars, int num_categories, int context_size, double epsilon) {
  return 3.0 * std::log(static_cast<double>(num_vars) * num_categories * context_size / epsilon);
}

MatrixD parent_selection_blocks(const BayesNet& bn) {
  const int M = bn.num_vars(), d = bn.num_categories();
  MatrixD a(M * d, (M + 1) * d);
  auto put_identity = [&](int bi, int bj) {
    for (int k = 0; k < d; ++k) a(bi * d + k, bj * d + k) = 1.0;
  };
  for (int j = 0; j < M; ++j) {
    put_identity(j, j);
    for (int i : bn.parents(j)) put_identity(i, j);
  }
  return a;
}

LayerParams build_layer1(const BayesNet& bn, double mask_gain) {
  if (!(mask_gain >= 1.0)) throw std::invalid_argument("build_layer1: mask gain must be >= 1");
  const int M = bn.num_vars(), d = bn.num_categories(), dim = (2 * M + 1) * d;
  LayerParams layer = zero_layer(dim, M * d);
  const MatrixD a = parent_selection_blocks(bn);
  for (int r = 0; r < M * d; ++r) {
    layer.ff.w1(r, r) = 1.0;
    for (int c = 0; c < (M + 1) * d; ++c)
      if (a(r, c) != 0.0) layer.ff.w1(r, M * d + c) = -mask_gain * a(r, c);
  }
  layer.ff.w2 = MatrixD::identity(dim, -1.0);
  return layer;
}

LayerParams build_layer2(int num_vars, int context_size, int num_categories, double epsilon,
                         std::optional<double> sharpness) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("build_layer2: epsilon must be in (0, 1)");
  if (context_size < 1) throw std::invalid_argument("build_layer2: N must be >= 1");
  const int M = num_vars, d = num_categories, dim = (2 * M + 1) * d;
  const double c = sharpness.value_or(default_sharpness(M, d, context_size, epsilon));
  if (!(c > 0.0)) throw std::invalid_argument("build_layer2: sharpness must be positive");
  const double root_c = std::sqrt(c);
  LayerParams layer = zero_layer(dim, (M + 1) * d);
  for (int r = 0; r < M * d; ++r) {
    layer.attn.key(r, r) = root_c;
    layer.attn.query(r, r) = root_c;
  }
  for (int k = 0; k < d; ++k) {
    layer.attn.key(M * d + k, 2 * M * d + k) = root_c;
    layer.attn.query(M * d + k, 2 * M * d + k) = -root_c;
  }
  layer.attn.value = MatrixD::identity(dim, -1.0);
  return layer;
}

MatrixD readout_matrix(int num_vars, int num_categories, int target) {
  if (target < 0 || target >= num_vars) throw std::invalid_argument("readout_matrix: target out of range");
  MatrixD a(num_categories, (2 * num_vars + 1) * num_categories);
  for (int k = 0; k < num_categories; ++k) a(k, target * num_categories + k) = -1.0;
  return a;
}

ConstructedTransformer::ConstructedTransformer(std::shared_ptr<const BayesNet> bn, int context_size,
                                               ConstructionOptions options)
    : bn_(std::move(bn)),
      context_size_(context_size),
      options_(options),
      sharpness_(options.sharpness.value_or(
          default_sharpness(bn_->num_vars(), bn_->num_categories(), context_size, options.epsilon))),
      layer1_(build_layer1(*bn_, options.mask_gain)),
      layer2_(build_layer2(bn_->num_vars(), context_size, bn_->num_categories(), options.epsilon, sharpness_)) {}

MatrixD ConstructedTransformer::readout_for(int target) const {
  return readout_matrix(bn_->num_vars(), bn_->num_categories(), target);
}

namespace {

void check_input(const InputMatrix& x, int num_vars, int num_categories, int target) {
  if (x.num_vars != num_vars || x.num_categories != num_categories)
    throw std::invalid_argument("input matrix shape does not match the network");
  require_shape(x.data.rows() == (2 * num_vars + 1) * num_categories && x.data.cols() == x.context_size + 1,
                "input matrix");
  if (positional_target(x) != target)
    throw std::invalid_argument("positional rows do not mark target " + std::to_string(target));
}

}  // namespace

MatrixD apply_parent_selector(const LayerParams& layer1, const InputMatrix& x, int target) {
  const int d = x.num_categories;
  check_input(x, x.num_vars, d, target);
  return tf_layer(layer1, x.data);
}

MatrixD parent_mask_reference(const InputMatrix& x, const BayesNet& bn, int target) {
  MatrixD out = x.data;
  const int d = x.num_categories;
  const auto& ps = bn.parents(target);
  for (int m = 0; m < x.num_vars; ++m) {
    if (m == target || std::find(ps.begin(), ps.end(), m) != ps.end()) continue;
    for (int r = m * d; r < (m + 1) * d; ++r) std::fill_n(out.row(r), out.cols(), 0.0);
  }
  return out;
}

int match_count(const InputMatrix& x, const BayesNet& bn, int target) {
  const int d = x.num_categories, q = x.query_column();
  int count = 0;
  for (int i = 0; i < x.context_size; ++i) {
    bool match = true;
    for (int p : bn.parents(target))
      for (int k = 0; k < d && match; ++k) match = x.data(p * d + k, i) == x.data(p * d + k, q);
    if (match) ++count;
  }
  return count;
}

ForwardTrace forward_trace(const ConstructedTransformer& ct, const InputMatrix& x) {
  const BayesNet& bn = ct.network();
  check_input(x, bn.num_vars(), bn.num_categories(), x.target);
  const MatrixD selected = tf_layer(ct.layer1(), x.data);
  // Only the query column of layer 2 reaches the readout.
  const auto attended = attention_last_column(ct.layer2().attn, selected);
  ForwardTrace trace;
  trace.read = feed_forward_column(ct.layer2().ff, attended);
  trace.probs = linear_head(ct.readout_for(x.target), trace.read);
  trace.support = match_count(x, bn, x.target);
  for (double v : trace.probs)
    if (!std::isfinite(v)) throw NumericError("constructed forward produced a non-finite value");
  return trace;
}

std::vector<double> forward_unchecked(const ConstructedTransformer& ct, const InputMatrix& x) {
  return forward_trace(ct, x).probs;
}

std::vector<double> forward(const ConstructedTransformer& ct, const InputMatrix& x) {
  auto trace = forward_trace(ct, x);
  if (trace.support == 0) throw EmptyMatchSet(x.target);
  return std::move(trace.probs);
}

std::vector<double> attention_residual(std::span<const double> read, std::span<const double> estimate,
                                    int num_vars, int num_categories, int target) {
  const int d = num_categories;
  std::vector<double> s(read.begin(), read.end());
  require_shape(static_cast<int>(s.size()) == (2 * num_vars + 1) * d, "attention_residual");
  for (int k = 0; k < d; ++k) {
    s[static_cast<std::size_t>(target * d + k)] += estimate[static_cast<std::size_t>(k)];
    s[static_cast<std::size_t>(2 * num_vars * d + k)] -= 1.0;
  }
  return s;
}

double spectral_norm(const MatrixD& a, int max_iter) {
  const int n = a.cols();
  if (a.empty()) return 0.0;
  bool all_zero = true;
  for (double v : a.values()) all_zero = all_zero && v == 0.0;
  if (all_zero) return 0.0;
  // Deterministic start with distinct entries so it is not orthogonal to the
  // top singular vector of the structured matrices used here.
  MatrixD v(n, 1), av(a.rows(), 1), w(n, 1);
  for (int i = 0; i < n; ++i) v(i, 0) = 1.0 + 0.01 * std::sin(1.0 + i);
  double sigma = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    double norm = 0.0;
    for (double x : v.values()) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v.values()) x /= norm;
    kernels::gemm<double>(a.ref(), v.ref(), av.ref());
    double next = 0.0;
    for (double x : av.values()) next += x * x;
    next = std::sqrt(next);
    if (next == 0.0) return 0.0;
    if (it > 0 && std::abs(next - sigma) <= 1e-12 * next) return next;
    sigma = next;
    kernels::gemm_tn<double>(a.ref(), av.ref(), w.ref());
    std::swap(v, w);
  }
  throw NumericError("spectral_norm: power iteration did not converge");
}

bool NormReport::all_ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const NormCheck& c) { return c.ok; });
}

NormReport verify_norms(const LayerParams& layer1, const LayerParams& layer2, const MatrixD& readout,
                        int max_in_degree, int num_vars, int num_categories, int context_size,
                        double epsilon) {
  const double key_bound = 3.0 * std::log(static_cast<double>(num_vars) * num_categories * context_size / epsilon);
  const double w1_bound = 2.0 * std::sqrt(max_in_degree + 1.0);
  NormReport report;
  auto check = [&](std::string name, const MatrixD& m, double bound) {
    const double norm = spectral_norm(m);
    report.checks.push_back({std::move(name), norm, bound, norm <= bound + kNormTolerance});
  };
  check("V1", layer1.attn.value, 1.0);
  check("K1", layer1.attn.key, 1.0);
  check("Q1", layer1.attn.query, 1.0);
  check("W1_1", layer1.ff.w1, w1_bound);
  check("W2_1", layer1.ff.w2, 1.0);
  check("V2", layer2.attn.value, 1.0);
  check("K2", layer2.attn.key, key_bound);
  check("Q2", layer2.attn.query, key_bound);
  check("W1_2", layer2.ff.w1, 1.0);
  check("W2_2", layer2.ff.w2, 1.0);
  check("A", readout, 1.0);
  return report;
}

NormReport verify_norms(const ConstructedTransformer& ct) {
  const BayesNet& bn = ct.network();
  NormReport report = verify_norms(ct.layer1(), ct.layer2(), ct.readout_for(0), bn.max_in_degree(),
                                   bn.num_vars(), bn.num_categories(), ct.context_size(), ct.epsilon());
  for (int t = 1; t < bn.num_vars(); ++t) {
    const double norm = spectral_norm(ct.readout_for(t));
    report.checks.push_back({"A[" + std::to_string(t) + "]", norm, 1.0, norm <= 1.0 + kNormTolerance});
  }
  return report;
}

}  // namespace bicl
