#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace asl::nn {

struct ConvBlockSpec {
  std::size_t filters = 0;
  std::size_t kernel = 0;
  /// Max-pool size after the block's ReLU; 0 or 1 means no pooling.
  std::size_t pool = 0;

  friend bool operator==(const ConvBlockSpec&, const ConvBlockSpec&) = default;
};

struct LayerShape {
  std::string name;
  std::size_t channels = 0;
  std::size_t length = 0;
};

/// Layer topology: conv blocks (conv -> ReLU -> optional max-pool), flatten,
/// dense(hidden) -> ReLU -> dropout, dense(outputs) with linear output.
struct NetworkSpec {
  std::size_t channels = 4;
  std::size_t length = 1280;
  std::vector<ConvBlockSpec> blocks;
  std::size_t hidden = 500;
  std::size_t outputs = 3;
  double dropout = 0.5;

  /// Five blocks (96,7) (96,7) (128,5) (128,5) (128,3), hidden 500, output 3; max-pool of
  /// the kernel size after blocks 1-4.
  static NetworkSpec reference_topology(std::size_t channels, std::size_t length);

  /// Shapes after every stage, input first. Throws std::invalid_argument if any stage
  /// collapses to zero length or a kernel is even.
  std::vector<LayerShape> shape_chain() const;
  std::size_t flatten_dim() const;
  std::size_t parameter_count() const;
  std::string describe() const;
  /// FNV-1a hash of the serialized topology.
  std::uint64_t fingerprint() const;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

}  // namespace asl::nn
