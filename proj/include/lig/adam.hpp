#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace lig {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment state for one flat parameter block.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(std::size_t n) : m_(n, 0.0f), v_(n, 0.0f) {}

  std::size_t size() const { return m_.size(); }
  std::uint64_t steps() const { return t_; }

  /// One bias-corrected Adam update of x given grad.
  void step(std::span<float> x, std::span<const float> grad, const AdamConfig& cfg) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
    const float b1 = static_cast<float>(cfg.beta1), b2 = static_cast<float>(cfg.beta2);
    const float step_size = static_cast<float>(cfg.learning_rate / c1);
    const float inv_c2 = static_cast<float>(1.0 / c2);
    const float eps = static_cast<float>(cfg.epsilon);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const float g = grad[i];
      m_[i] = b1 * m_[i] + (1.0f - b1) * g;
      v_[i] = b2 * v_[i] + (1.0f - b2) * g * g;
      x[i] -= step_size * m_[i] / (std::sqrt(v_[i] * inv_c2) + eps);
    }
  }

 private:
  std::vector<float> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace lig
