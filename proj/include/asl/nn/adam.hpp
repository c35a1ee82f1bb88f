#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "asl/errors.hpp"
#include "asl/nn/network.hpp"

namespace asl::nn {

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias-corrected first and second moments.
template <typename T>
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamHyper hyper) : hyper_(hyper) {}

  const AdamHyper& hyper() const { return hyper_; }
  std::uint64_t steps() const { return steps_; }
  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }

  /// Restores a saved state; moment buffers must match the parameter shapes at the next step.
  void restore(std::uint64_t steps, std::vector<std::vector<T>> m, std::vector<std::vector<T>> v) {
    steps_ = steps;
    m_ = std::move(m);
    v_ = std::move(v);
  }

  /// One update using each parameter's `grad`. Throws asl::NumericError on a non-finite gradient
  /// (parameters are left untouched in that case).
  void step(std::vector<Parameter<T>>& params) {
    for (const auto& p : params) {
      for (T g : p.grad) {
        if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient in " + p.name);
      }
    }
    if (m_.size() != params.size()) {
      m_.clear();
      v_.clear();
      for (const auto& p : params) {
        m_.emplace_back(p.value.size(), T(0));
        v_.emplace_back(p.value.size(), T(0));
      }
    }
    ++steps_;
    const double c1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(steps_));
    const T b1 = static_cast<T>(hyper_.beta1), b2 = static_cast<T>(hyper_.beta2);
    const T lr = static_cast<T>(hyper_.learning_rate), eps = static_cast<T>(hyper_.epsilon);
    const T ic1 = static_cast<T>(1.0 / c1), ic2 = static_cast<T>(1.0 / c2);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      if (m_[i].size() != p.value.size()) throw std::invalid_argument("adam: state shape mismatch for " + p.name);
      for (std::size_t j = 0; j < p.value.size(); ++j) {
        const T g = p.grad[j];
        m_[i][j] = b1 * m_[i][j] + (T(1) - b1) * g;
        v_[i][j] = b2 * v_[i][j] + (T(1) - b2) * g * g;
        const T mhat = m_[i][j] * ic1;
        const T vhat = v_[i][j] * ic2;
        p.value[j] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }

 private:
  AdamHyper hyper_;
  std::uint64_t steps_ = 0;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
};

}  // namespace asl::nn
