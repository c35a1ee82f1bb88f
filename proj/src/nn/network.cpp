#include "asl/nn/network.hpp"

#include <cmath>
#include <stdexcept>

#include "asl/errors.hpp"
#include "asl/nn/layers.hpp"
#include "asl/random.hpp"

namespace asl::nn {

template <typename T>
MseResult<T> mse_loss(const std::vector<std::vector<T>>& predictions, const std::vector<std::vector<T>>& targets) {
  if (predictions.empty()) throw std::invalid_argument("mse_loss: empty batch");
  if (predictions.size() != targets.size()) throw std::invalid_argument("mse_loss: batch size mismatch");
  const T inv_b = T(1) / static_cast<T>(predictions.size());
  MseResult<T> r;
  r.grad.resize(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& s = predictions[i];
    const auto& q = targets[i];
    if (s.size() != q.size()) throw std::invalid_argument("mse_loss: vector length mismatch");
    r.grad[i].resize(s.size());
    for (std::size_t d = 0; d < s.size(); ++d) {
      const T e = s[d] - q[d];
      r.loss += e * e * inv_b;
      r.grad[i][d] = T(2) * e * inv_b;
    }
  }
  return r;
}

template <typename T>
struct Network<T>::Cache {
  std::vector<std::vector<T>> cols;
  std::vector<Tensor<T>> pre;
  std::vector<std::vector<std::uint32_t>> argmax;
  std::vector<T> flat;
  std::vector<T> hidden_pre;
  std::vector<T> hidden_out;
  std::vector<T> mask;
};

template <typename T>
Network<T>::Network(NetworkSpec spec) : spec_(std::move(spec)), chain_(spec_.shape_chain()) {
  std::size_t c = spec_.channels;
  for (std::size_t i = 0; i < spec_.blocks.size(); ++i) {
    const auto& b = spec_.blocks[i];
    const std::string p = "conv" + std::to_string(i + 1);
    params_.push_back({p + ".weight", {b.filters, c, b.kernel}, std::vector<T>(b.filters * c * b.kernel), {}});
    params_.push_back({p + ".bias", {b.filters}, std::vector<T>(b.filters), {}});
    c = b.filters;
  }
  const std::size_t flat = spec_.flatten_dim();
  params_.push_back({"hidden.weight", {spec_.hidden, flat}, std::vector<T>(spec_.hidden * flat), {}});
  params_.push_back({"hidden.bias", {spec_.hidden}, std::vector<T>(spec_.hidden), {}});
  params_.push_back({"output.weight", {spec_.outputs, spec_.hidden}, std::vector<T>(spec_.outputs * spec_.hidden), {}});
  params_.push_back({"output.bias", {spec_.outputs}, std::vector<T>(spec_.outputs), {}});
  for (auto& p : params_) p.grad.assign(p.value.size(), T(0));
}

template <typename T>
void Network<T>::initialize(std::uint64_t seed) {
  Rng rng = make_rng(seed, {stream::kInit});
  for (auto& p : params_) {
    if (p.shape.size() == 1) {
      std::fill(p.value.begin(), p.value.end(), T(0));
      continue;
    }
    std::size_t fan_in = 1;
    for (std::size_t d = 1; d < p.shape.size(); ++d) fan_in *= p.shape[d];
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (T& v : p.value) v = static_cast<T>(dist(rng));
  }
}

template <typename T>
void Network<T>::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), T(0));
}

template <typename T>
std::vector<T> Network<T>::make_mask(bool train, std::uint64_t dropout_seed, std::size_t index) const {
  if (!train || spec_.dropout == 0.0) return {};
  Rng rng = make_rng(dropout_seed, {stream::kDropout, index});
  return dropout_mask<T>(spec_.hidden, spec_.dropout, rng);
}

template <typename T>
std::vector<T> Network<T>::run_forward(std::span<const T> input, const std::vector<T>* mask, Cache* cache) const {
  if (input.size() != spec_.channels * spec_.length)
    throw std::invalid_argument("Network: input has " + std::to_string(input.size()) + " values, expected " +
                                std::to_string(spec_.channels * spec_.length));
  Tensor<T> x(spec_.channels, spec_.length, std::vector<T>(input.begin(), input.end()));
  std::vector<T> cols;
  for (std::size_t i = 0; i < spec_.blocks.size(); ++i) {
    const auto& b = spec_.blocks[i];
    const auto& w = params_[2 * i].value;
    const auto& bias = params_[2 * i + 1].value;
    Tensor<T> z = conv1d_forward<T>(x, w, bias, b.filters, b.kernel, cols);
    Tensor<T> a = z;
    relu_inplace(a.values());
    if (cache != nullptr) {
      cache->cols.push_back(std::move(cols));
      cache->pre.push_back(std::move(z));
    }
    if (b.pool > 1) {
      auto pooled = maxpool1d_forward(a, b.pool);
      if (cache != nullptr) cache->argmax.push_back(std::move(pooled.argmax));
      x = std::move(pooled.output);
    } else {
      if (cache != nullptr) cache->argmax.emplace_back();
      x = std::move(a);
    }
  }
  const std::size_t nb = spec_.blocks.size();
  std::vector<T> flat(x.values().begin(), x.values().end());
  std::vector<T> h = dense_forward<T>(flat, params_[2 * nb].value, params_[2 * nb + 1].value);
  std::vector<T> a = h;
  relu_inplace<T>(a);
  if (mask != nullptr && !mask->empty()) apply_mask<T>(a, *mask);
  std::vector<T> out = dense_forward<T>(a, params_[2 * nb + 2].value, params_[2 * nb + 3].value);
  for (T v : out) {
    if (!std::isfinite(v)) throw NumericError("Network: non-finite output activation");
  }
  if (cache != nullptr) {
    cache->flat = std::move(flat);
    cache->hidden_pre = std::move(h);
    cache->hidden_out = std::move(a);
    if (mask != nullptr) cache->mask = *mask;
  }
  return out;
}

template <typename T>
std::vector<T> Network<T>::run_backward(const Cache& cache, std::span<const T> dout, bool input_grad) {
  const std::size_t nb = spec_.blocks.size();
  auto& wo = params_[2 * nb + 2];
  auto& bo = params_[2 * nb + 3];
  std::vector<T> da = dense_backward<T>(cache.hidden_out, dout, wo.value, wo.grad, bo.grad);
  if (!cache.mask.empty()) apply_mask<T>(da, cache.mask);
  relu_backward_inplace<T>(da, cache.hidden_pre);
  auto& wh = params_[2 * nb];
  auto& bh = params_[2 * nb + 1];
  std::vector<T> dflat = dense_backward<T>(cache.flat, da, wh.value, wh.grad, bh.grad);

  // Walk the conv blocks backwards; `dy` holds the gradient w.r.t. each block's output.
  const LayerShape& last = chain_[chain_.size() - 4];
  Tensor<T> dy(last.channels, last.length, std::move(dflat));
  Tensor<T> dx;
  for (std::size_t ii = nb; ii-- > 0;) {
    const auto& b = spec_.blocks[ii];
    const Tensor<T>& pre = cache.pre[ii];
    Tensor<T> dz = b.pool > 1 ? maxpool1d_backward<T>(dy, cache.argmax[ii], pre.length()) : std::move(dy);
    relu_backward_inplace<T>(dz.values(), pre.values());
    const std::size_t in_channels = ii == 0 ? spec_.channels : spec_.blocks[ii - 1].filters;
    auto& w = params_[2 * ii];
    auto& bias = params_[2 * ii + 1];
    conv1d_backward<T>(cache.cols[ii], dz, in_channels, b.kernel, w.value, w.grad, bias.grad,
                       (ii > 0 || input_grad) ? &dx : nullptr);
    dy = std::move(dx);
  }
  if (!input_grad) return {};
  return std::vector<T>(dy.values().begin(), dy.values().end());
}

template <typename T>
std::vector<T> Network<T>::predict(std::span<const T> input) const {
  return run_forward(input, nullptr, nullptr);
}

template <typename T>
Position Network<T>::forward(const MultichannelWindow& window) const {
  if (spec_.outputs != 3) throw std::invalid_argument("Network: forward() needs a 3-output network");
  if (window.channels() != spec_.channels || window.length() != spec_.length)
    throw std::invalid_argument("Network: window shape does not match the network input");
  const auto out = predict(window_to_input<T>(window));
  return {static_cast<double>(out[0]), static_cast<double>(out[1]), static_cast<double>(out[2])};
}

template <typename T>
T Network<T>::compute_gradients(std::span<const std::span<const T>> inputs, std::span<const std::vector<T>> targets,
                                bool train, std::uint64_t dropout_seed, T loss_scale) {
  if (inputs.empty()) throw std::invalid_argument("compute_gradients: empty batch");
  if (inputs.size() != targets.size()) throw std::invalid_argument("compute_gradients: batch size mismatch");
  zero_grad();
  const T inv_b = loss_scale / static_cast<T>(inputs.size());
  T total = T(0);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Cache cache;
    const auto mask = make_mask(train, dropout_seed, i);
    const auto out = run_forward(inputs[i], &mask, &cache);
    if (targets[i].size() != out.size()) throw std::invalid_argument("compute_gradients: target length mismatch");
    std::vector<T> dout(out.size());
    for (std::size_t d = 0; d < out.size(); ++d) {
      const T e = out[d] - targets[i][d];
      total += e * e * inv_b;
      dout[d] = T(2) * e * inv_b;
    }
    run_backward(cache, dout, false);
  }
  if (!std::isfinite(total)) throw NumericError("compute_gradients: non-finite loss");
  return total;
}

template <typename T>
T Network<T>::loss(std::span<const std::span<const T>> inputs, std::span<const std::vector<T>> targets, bool train,
                   std::uint64_t dropout_seed, T loss_scale) const {
  if (inputs.empty()) throw std::invalid_argument("loss: empty batch");
  if (inputs.size() != targets.size()) throw std::invalid_argument("loss: batch size mismatch");
  std::vector<std::vector<T>> preds, tgts;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto mask = make_mask(train, dropout_seed, i);
    preds.push_back(run_forward(inputs[i], &mask, nullptr));
    tgts.push_back(targets[i]);
  }
  return loss_scale * mse_loss(preds, tgts).loss;
}

template <typename T>
std::vector<T> Network<T>::input_gradient(std::span<const T> input, std::span<const T> target, bool train,
                                          std::uint64_t dropout_seed) {
  zero_grad();
  Cache cache;
  const auto mask = make_mask(train, dropout_seed, 0);
  const auto out = run_forward(input, &mask, &cache);
  std::vector<T> dout(out.size());
  for (std::size_t d = 0; d < out.size(); ++d) dout[d] = T(2) * (out[d] - target[d]);
  return run_backward(cache, dout, true);
}

template <typename T>
std::vector<T> window_to_input(const MultichannelWindow& window) {
  std::vector<T> out(window.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(window.data()[i]);
  return out;
}

template class Network<float>;
template class Network<double>;
template MseResult<float> mse_loss(const std::vector<std::vector<float>>&, const std::vector<std::vector<float>>&);
template MseResult<double> mse_loss(const std::vector<std::vector<double>>&, const std::vector<std::vector<double>>&);
template std::vector<float> window_to_input<float>(const MultichannelWindow&);
template std::vector<double> window_to_input<double>(const MultichannelWindow&);

}  // namespace asl::nn
