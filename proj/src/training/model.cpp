#include "bicl/training/model.hpp"

#include <cmath>

#include "bicl/errors.hpp"

namespace bicl::training {

Precision parse_precision(std::string_view s) {
  if (s == "f32") return Precision::F32;
  if (s == "f64") return Precision::F64;
  throw ConfigError("precision: expected f32 or f64, got '" + std::string(s) + "'");
}

std::string_view precision_name(Precision p) { return p == Precision::F32 ? "f32" : "f64"; }

void ModelConfig::validate() const {
  if (num_vars < 1) throw ConfigError("model.num_vars: must be >= 1");
  if (num_categories < 2) throw ConfigError("model.num_categories: must be >= 2");
  if (layers < 1) throw ConfigError("layers: must be >= 1");
  if (heads < 1) throw ConfigError("heads: must be >= 1");
  if (hidden < 1) throw ConfigError("hidden: must be >= 1");
  if (hidden % heads != 0) throw ConfigError("hidden: must be divisible by heads");
  if (ffn_mult < 1) throw ConfigError("ffn_mult: must be >= 1");
}

ParamLayout::ParamLayout(const ModelConfig& c) {
  c.validate();
  const int h = c.hidden, f = c.ffn();
  w_in = add("w_in", h, c.input_rows());
  b_in = add("b_in", h, 1);
  for (int l = 0; l < c.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    LayerSlots s{};
    s.wq = add(p + "wq", h, h);
    s.wk = add(p + "wk", h, h);
    s.wv = add(p + "wv", h, h);
    s.wo = add(p + "wo", h, h);
    s.w1 = add(p + "ff.w1", f, h);
    s.b1 = add(p + "ff.b1", f, 1);
    s.w2 = add(p + "ff.w2", h, f);
    s.b2 = add(p + "ff.b2", h, 1);
    s.ln_gain = add(p + "ln.gain", h, 1);
    s.ln_bias = add(p + "ln.bias", h, 1);
    layers.push_back(s);
  }
  w_out = add("w_out", c.num_categories, h);
  b_out = add("b_out", c.num_categories, 1);
}

std::size_t ParamLayout::add(std::string name, int rows, int cols) {
  const std::size_t at = total_;
  slots_.push_back({std::move(name), rows, cols, at});
  total_ += slots_.back().size();
  return at;
}

const TensorSlot& ParamLayout::slot(std::string_view name) const {
  for (const auto& s : slots_)
    if (s.name == name) return s;
  throw std::invalid_argument("no parameter tensor named " + std::string(name));
}

template <class T>
TrainableModel<T>::TrainableModel(ModelConfig config)
    : config_(config),
      layout_(config_),
      params_(layout_.total(), T(0)),
      head_active_(static_cast<std::size_t>(config_.layers),
                   std::vector<char>(static_cast<std::size_t>(config_.heads), 1)) {
  for (const auto& s : layout_.layers)
    std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(s.ln_gain), config_.hidden, T(1));
}

template <class T>
void TrainableModel<T>::initialize(Rng& rng) {
  std::fill(params_.begin(), params_.end(), T(0));
  auto fill_uniform = [&](std::size_t offset, int rows, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < static_cast<std::size_t>(rows) * static_cast<std::size_t>(fan_in); ++i)
      params_[offset + i] = static_cast<T>(rng.uniform(-bound, bound));
  };
  const int h = config_.hidden, f = config_.ffn();
  fill_uniform(layout_.w_in, h, config_.input_rows());
  for (const auto& s : layout_.layers) {
    fill_uniform(s.wq, h, h);
    fill_uniform(s.wk, h, h);
    fill_uniform(s.wv, h, h);
    fill_uniform(s.wo, h, h);
    fill_uniform(s.w1, f, h);
    fill_uniform(s.w2, h, f);
    std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(s.ln_gain), h, T(1));
  }
}

template <class T>
void TrainableModel<T>::mask_head(int layer, int head) {
  head_active_.at(static_cast<std::size_t>(layer)).at(static_cast<std::size_t>(head)) = 0;
}

template <class T>
bool TrainableModel<T>::head_active(int layer, int head) const {
  return head_active_.at(static_cast<std::size_t>(layer)).at(static_cast<std::size_t>(head)) != 0;
}

template class TrainableModel<float>;
template class TrainableModel<double>;

}  // namespace bicl::training
