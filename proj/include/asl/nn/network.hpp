#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "asl/geometry.hpp"
#include "asl/nn/network_spec.hpp"
#include "asl/nn/tensor.hpp"
#include "asl/signal_sim.hpp"

namespace asl::nn {

template <typename T>
struct Parameter {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<T> value;
  std::vector<T> grad;
};

template <typename T>
struct MseResult {
  T loss = T(0);
  /// d loss / d prediction, one vector per batch element.
  std::vector<std::vector<T>> grad;
};

/// L = (1/B) sum_i |q_i - s_i|^2 and its gradient 2 (s_i - q_i) / B.
/// Throws std::invalid_argument on an empty or mismatched batch.
template <typename T>
MseResult<T> mse_loss(const std::vector<std::vector<T>>& predictions, const std::vector<std::vector<T>>& targets);

/// Regression CNN over a raw multichannel window. Parameters are stored in declared
/// layer order: conv1.weight, conv1.bias, ..., hidden.weight, hidden.bias, output.weight,
/// output.bias.
template <typename T>
class Network {
 public:
  explicit Network(NetworkSpec spec);

  const NetworkSpec& spec() const { return spec_; }
  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }

  /// Fan-in scaled normal weights (std = sqrt(2 / fan_in)), zero biases.
  void initialize(std::uint64_t seed);
  void zero_grad();

  /// Inference: dropout disabled, a pure function of the parameters and input.
  /// Throws std::invalid_argument on a shape mismatch and asl::NumericError on
  /// non-finite activations.
  std::vector<T> predict(std::span<const T> input) const;
  Position forward(const MultichannelWindow& window) const;

  /// Forward + backward over a batch. Overwrites every parameter gradient with
  /// d(loss_scale * MSE)/d(theta) and returns the (scaled) loss. With `train` set, dropout
  /// masks are drawn from substreams of `dropout_seed`, one per batch element.
  T compute_gradients(std::span<const std::span<const T>> inputs, std::span<const std::vector<T>> targets,
                      bool train, std::uint64_t dropout_seed, T loss_scale = T(1));

  /// Loss only, with the same dropout convention as compute_gradients.
  T loss(std::span<const std::span<const T>> inputs, std::span<const std::vector<T>> targets, bool train,
         std::uint64_t dropout_seed, T loss_scale = T(1)) const;

  /// Gradient of the scaled loss with respect to the first input of the batch (used by checks).
  std::vector<T> input_gradient(std::span<const T> input, std::span<const T> target, bool train,
                                std::uint64_t dropout_seed);

 private:
  struct Cache;
  std::vector<T> run_forward(std::span<const T> input, const std::vector<T>* mask, Cache* cache) const;
  std::vector<T> run_backward(const Cache& cache, std::span<const T> dout, bool input_grad);
  std::vector<T> make_mask(bool train, std::uint64_t dropout_seed, std::size_t index) const;

  NetworkSpec spec_;
  std::vector<LayerShape> chain_;
  std::vector<Parameter<T>> params_;
};

/// Converts a double-precision window to the network's scalar type, channel-major.
template <typename T>
std::vector<T> window_to_input(const MultichannelWindow& window);

extern template class Network<float>;
extern template class Network<double>;

}  // namespace asl::nn
