#include "bicl/training/data.hpp"

#include <stdexcept>
#include <string>

#include "bicl/encoding.hpp"
#include "bicl/errors.hpp"
#include "bicl/parallel.hpp"

namespace bicl::training {

ContextVisibility parse_visibility(std::string_view s) {
  if (s == "revealed") return ContextVisibility::Revealed;
  if (s == "target") return ContextVisibility::Target;
  if (s == "all") return ContextVisibility::All;
  throw ConfigError("visibility: expected revealed, target or all, got '" + std::string(s) + "'");
}

std::string_view visibility_name(ContextVisibility v) {
  switch (v) {
    case ContextVisibility::Revealed: return "revealed";
    case ContextVisibility::Target: return "target";
    case ContextVisibility::All: return "all";
  }
  return "revealed";
}

template <class T>
void generate_example(const DataSpec& spec, int revealed, Rng& rng, Matrix<T>& input, int& label, int& target) {
  const BayesNet bn = random_bayesnet(spec.structure, spec.num_categories, rng);
  const int M = bn.num_vars(), N = spec.context_size;
  if (revealed < 1 || revealed > M) throw std::invalid_argument("generate_example: revealed out of range");
  if (N < 1) throw std::invalid_argument("generate_example: context size must be >= 1");
  target = static_cast<int>(rng.below(static_cast<std::uint64_t>(revealed)));
  std::vector<Observation> obs(static_cast<std::size_t>(N));
  for (auto& o : obs) o = sample_observation(bn, rng);
  const Observation query_values = sample_observation(bn, rng);
  label = query_values[static_cast<std::size_t>(target)];
  int visible = M;
  if (spec.visibility == ContextVisibility::Revealed) visible = revealed;
  if (spec.visibility == ContextVisibility::Target) visible = target + 1;
  input.resize(simple_input_rows(M, spec.num_categories), N + 1);
  encode_simple_into<T>(obs, QueryState::autoregressive(query_values, target), spec.num_categories, visible,
                        input.ref());
}

template <class T>
void generate_batch(const DataSpec& spec, int revealed, int batch_size, const Rng& rng, Batch<T>& out) {
  if (batch_size < 1) throw std::invalid_argument("generate_batch: batch size must be >= 1");
  const auto n = static_cast<std::size_t>(batch_size);
  out.inputs.resize(n);
  out.labels.resize(n);
  out.targets.resize(n);
  parallel_for(batch_size, [&](int b) {
    Rng stream = rng.split(static_cast<std::uint64_t>(b));
    const auto i = static_cast<std::size_t>(b);
    generate_example<T>(spec, revealed, stream, out.inputs[i], out.labels[i], out.targets[i]);
  });
}

Curriculum::Curriculum(int num_vars, int start, double threshold, int window, bool enabled)
    : num_vars_(num_vars),
      revealed_(enabled ? std::min(std::max(start, 1), num_vars) : num_vars),
      threshold_(threshold),
      window_(window) {
  if (num_vars < 1) throw std::invalid_argument("Curriculum: num_vars must be >= 1");
  if (window < 1) throw std::invalid_argument("Curriculum: window must be >= 1");
}

bool Curriculum::observe(double loss) {
  if (complete()) return false;
  recent_.push_back(loss);
  if (static_cast<int>(recent_.size()) > window_) {
    recent_.pop_front();
  }
  if (static_cast<int>(recent_.size()) < window_) return false;
  double mean = 0.0;
  for (double v : recent_) mean += v;
  mean /= window_;
  if (mean > threshold_) return false;
  ++revealed_;
  recent_.clear();
  return true;
}

template void generate_example<float>(const DataSpec&, int, Rng&, Matrix<float>&, int&, int&);
template void generate_example<double>(const DataSpec&, int, Rng&, Matrix<double>&, int&, int&);
template void generate_batch<float>(const DataSpec&, int, int, const Rng&, Batch<float>&);
template void generate_batch<double>(const DataSpec&, int, int, const Rng&, Batch<double>&);

}  // namespace bicl::training
