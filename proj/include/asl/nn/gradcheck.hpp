#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "asl/binary_io.hpp"
#include "asl/nn/network.hpp"
#include "asl/random.hpp"

namespace asl::nn {

struct GradCheckOptions {
  /// Central-difference step.
  double step = 1e-6;
  /// Coordinates checked per tensor; 0 checks all of them.
  std::size_t samples_per_tensor = 0;
  /// Per-coordinate errors are divided by max(|analytic|, |numeric|, floor), with
  /// floor = max(absolute_floor, relative_floor * max|analytic| over the tensor). Coordinates far
  /// below the tensor's gradient scale are thereby judged on that scale, where central
  /// differences are limited by the rounding error of the loss rather than by the derivative.
  double absolute_floor = 1e-12;
  double relative_floor = 1e-3;
  std::uint64_t seed = 1;
};

struct GradCheckResult {
  std::string name;
  std::size_t checked = 0;
  /// max over coordinates of |analytic - numeric| / max(|analytic|, |numeric|, floor)
  double max_relative_error = 0.0;
  /// |analytic - numeric|_2 / max(|analytic|_2, |numeric|_2) over the checked coordinates
  double norm_relative_error = 0.0;
};

/// Compares `analytic` against central differences of `loss` taken by perturbing `values` in place.
/// Every perturbed value is restored before returning.
template <typename T>
GradCheckResult check_coordinates(const std::string& name, std::span<T> values, std::span<const T> analytic,
                                  const std::function<double()>& loss, const GradCheckOptions& options) {
  std::vector<std::size_t> coords(values.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (options.samples_per_tensor > 0 && options.samples_per_tensor < coords.size()) {
    Rng rng = make_rng(options.seed, {io::fnv1a(name)});
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.samples_per_tensor);
    std::sort(coords.begin(), coords.end());
  }
  double scale = 0.0;
  for (T g : analytic) scale = std::max(scale, std::abs(static_cast<double>(g)));
  const double floor = std::max(options.absolute_floor, options.relative_floor * scale);
  GradCheckResult r;
  r.name = name;
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (std::size_t j : coords) {
    const T saved = values[j];
    values[j] = static_cast<T>(static_cast<double>(saved) + options.step);
    const double up = loss();
    values[j] = static_cast<T>(static_cast<double>(saved) - options.step);
    const double down = loss();
    values[j] = saved;
    const double numeric = (up - down) / (2.0 * options.step);
    const double a = static_cast<double>(analytic[j]);
    const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
    r.max_relative_error = std::max(r.max_relative_error, err);
    diff2 += (a - numeric) * (a - numeric);
    a2 += a * a;
    n2 += numeric * numeric;
    ++r.checked;
  }
  const double denom = std::sqrt(std::max(a2, n2));
  r.norm_relative_error = denom > 0.0 ? std::sqrt(diff2) / denom : std::sqrt(diff2);
  return r;
}

/// Checks every parameter tensor of `net` and the input gradient of the first example
/// against central differences of the batch loss. Dropout masks are drawn from
/// `dropout_seed` so they stay fixed across the perturbed evaluations.
template <typename T>
std::vector<GradCheckResult> check_network_gradients(Network<T>& net, std::span<const std::span<const T>> inputs,
                                                     std::span<const std::vector<T>> targets, bool train,
                                                     std::uint64_t dropout_seed, const GradCheckOptions& options) {
  net.compute_gradients(inputs, targets, train, dropout_seed);
  std::vector<std::vector<T>> analytic;
  for (const auto& p : net.parameters()) analytic.push_back(p.grad);
  auto loss = [&] { return static_cast<double>(net.loss(inputs, targets, train, dropout_seed)); };

  std::vector<GradCheckResult> out;
  for (std::size_t i = 0; i < net.parameters().size(); ++i) {
    auto& p = net.parameters()[i];
    out.push_back(check_coordinates<T>(p.name, p.value, analytic[i], loss, options));
  }

  // Input gradient for a single-example batch built from the first example.
  std::vector<T> x(inputs[0].begin(), inputs[0].end());
  const std::vector<T> dx = net.input_gradient(x, targets[0], train, dropout_seed);
  const std::span<const T> one[] = {std::span<const T>(x)};
  auto input_loss = [&] {
    return static_cast<double>(net.loss(one, std::span<const std::vector<T>>(targets.data(), 1), train, dropout_seed));
  };
  out.push_back(check_coordinates<T>("input", std::span<T>(x), dx, input_loss, options));
  return out;
}

}  // namespace asl::nn
