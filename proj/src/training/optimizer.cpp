#include "bicl/training/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace bicl::training {

template <class T>
AdamW<T>::AdamW(std::size_t size, AdamWConfig config) : config_(config), m_(size, 0.0), v_(size, 0.0) {}

template <class T>
void AdamW<T>::step(std::span<T> params, std::span<const T> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw std::invalid_argument("AdamW::step: size mismatch");
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double lr = config_.learning_rate, wd = config_.weight_decay, eps = config_.eps;
  const long long n = static_cast<long long>(params.size());
#pragma omp parallel for schedule(static) if (n > 65536)
  for (long long i = 0; i < n; ++i) {
    const std::size_t k = static_cast<std::size_t>(i);
    const double g = static_cast<double>(grads[k]);
    m_[k] = b1 * m_[k] + (1.0 - b1) * g;
    v_[k] = b2 * v_[k] + (1.0 - b2) * g * g;
    const double p = static_cast<double>(params[k]);
    const double update = (m_[k] / c1) / (std::sqrt(v_[k] / c2) + eps) + wd * p;
    params[k] = static_cast<T>(p - lr * update);
  }
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace bicl::training
