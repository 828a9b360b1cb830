#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bicl/matrix.hpp"
#include "bicl/rng.hpp"

namespace bicl::training {

enum class LayerNormPlacement { Post, Pre };

enum class Precision { F32, F64 };
Precision parse_precision(std::string_view s);
std::string_view precision_name(Precision p);

/// Shape of the trainable transformer.
///
/// Each layer is multi-head attention, then a ReLU feed-forward block of
/// width ffn_mult * hidden, each with a residual connection, and one layer
/// norm. Post placement normalises the layer output; Pre normalises the
/// attention input. Input rows are projected to `hidden`; the readout maps
/// the query column of the last layer to d logits.
struct ModelConfig {
  int num_vars = 0;
  int num_categories = 2;
  int layers = 2;
  int heads = 2;
  int hidden = 64;
  int ffn_mult = 4;
  LayerNormPlacement ln_placement = LayerNormPlacement::Post;
  bool scale_scores = false;

  int input_rows() const { return num_vars * num_categories + num_vars; }
  int ffn() const { return hidden * ffn_mult; }
  /// Throws ConfigError naming the offending field.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TensorSlot {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

struct LayerSlots {
  std::size_t wq, wk, wv, wo, w1, b1, w2, b2, ln_gain, ln_bias;
};

/// All parameters live in one flat vector; this maps names to offsets.
class ParamLayout {
 public:
  explicit ParamLayout(const ModelConfig& config);

  const std::vector<TensorSlot>& slots() const noexcept { return slots_; }
  std::size_t total() const noexcept { return total_; }
  const TensorSlot& slot(std::string_view name) const;

  std::size_t w_in = 0, b_in = 0, w_out = 0, b_out = 0;
  std::vector<LayerSlots> layers;

 private:
  std::size_t add(std::string name, int rows, int cols);
  std::vector<TensorSlot> slots_;
  std::size_t total_ = 0;
};

template <class T>
class TrainableModel {
 public:
  explicit TrainableModel(ModelConfig config);

  const ModelConfig& config() const noexcept { return config_; }
  const ParamLayout& layout() const noexcept { return layout_; }
  std::vector<T>& params() noexcept { return params_; }
  const std::vector<T>& params() const noexcept { return params_; }

  ConstMatrixRef<T> mat(std::size_t offset, int rows, int cols) const {
    return {params_.data() + offset, rows, cols, cols};
  }
  std::span<const T> vec(std::size_t offset, int n) const {
    return {params_.data() + offset, static_cast<std::size_t>(n)};
  }

  /// Attention and feed-forward weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in));
  /// biases zero; layer-norm gain 1 and bias 0; readout zero, so an untrained
  /// model predicts the uniform distribution.
  void initialize(Rng& rng);

  /// Disables head `head` of layer `layer`: its output is zero and its
  /// parameters receive no gradient.
  void mask_head(int layer, int head);
  bool head_active(int layer, int head) const;
  std::span<const char> head_mask(int layer) const {
    return head_active_[static_cast<std::size_t>(layer)];
  }

  template <class U>
  TrainableModel<U> cast() const {
    TrainableModel<U> out(config_);
    for (std::size_t i = 0; i < params_.size(); ++i) out.params()[i] = static_cast<U>(params_[i]);
    for (int l = 0; l < config_.layers; ++l)
      for (int k = 0; k < config_.heads; ++k)
        if (!head_active(l, k)) out.mask_head(l, k);
    return out;
  }

 private:
  ModelConfig config_;
  ParamLayout layout_;
  std::vector<T> params_;
  std::vector<std::vector<char>> head_active_;
};

}  // namespace bicl::training
