#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace asl::nn {

/// Dense (channels x length) array, channel-major. A flat vector is (1 x dim).
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t channels, std::size_t length, T fill = T(0))
      : channels_(channels), length_(length), data_(channels * length, fill) {}
  Tensor(std::size_t channels, std::size_t length, std::vector<T> data)
      : channels_(channels), length_(length), data_(std::move(data)) {
    if (data_.size() != channels_ * length_) throw std::invalid_argument("Tensor: data size does not match shape");
  }

  std::size_t channels() const { return channels_; }
  std::size_t length() const { return length_; }
  std::size_t size() const { return data_.size(); }

  T& operator()(std::size_t c, std::size_t t) { return data_[c * length_ + t]; }
  T operator()(std::size_t c, std::size_t t) const { return data_[c * length_ + t]; }
  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  bool all_finite() const {
    for (T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

 private:
  std::size_t channels_ = 0;
  std::size_t length_ = 0;
  std::vector<T> data_;
};

}  // namespace asl::nn
