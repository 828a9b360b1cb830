#pragma once

#include <span>
#include <vector>

namespace bicl::training {

struct AdamWConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

/// AdamW with bias correction and decoupled weight decay:
///   m = b1 m + (1-b1) g,  v = b2 v + (1-b2) g^2
///   p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
template <class T>
class AdamW {
 public:
  AdamW(std::size_t size, AdamWConfig config);

  void step(std::span<T> params, std::span<const T> grads);
  long long steps() const noexcept { return t_; }
  const AdamWConfig& config() const noexcept { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

 private:
  AdamWConfig config_;
  std::vector<double> m_, v_;
  long long t_ = 0;
};

}  // namespace bicl::training
