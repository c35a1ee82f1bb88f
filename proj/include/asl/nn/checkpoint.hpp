#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "asl/nn/adam.hpp"
#include "asl/nn/network.hpp"
#include "asl/nn/network_spec.hpp"

namespace asl::nn {

enum class Precision : std::uint32_t { kFloat32 = 4, kFloat64 = 8 };

const char* precision_name(Precision p);
Precision parse_precision(const std::string& name);

/// Where a checkpoint came from.
struct Lineage {
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  /// Content hash of the checkpoint this one was trained from; 0 for a fresh start.
  std::uint64_t parent_hash = 0;
  std::uint64_t optimizer_steps = 0;
};

struct AdamState {
  std::uint64_t steps = 0;
  std::vector<std::vector<double>> first;
  std::vector<std::vector<double>> second;
};

/// Precision-tagged weights plus topology and lineage.
///
/// File layout (little-endian): "ASLC", u32 version, u32 precision (4 = f32, 8 = f64),
/// topology (u32 M, u32 N, u32 blocks, blocks x (u32 filters, u32 kernel, u32 pool),
/// u32 hidden, u32 outputs, f64 dropout), f64 sample_rate, u64 fingerprint, lineage
/// (u64 seed, u64 config_hash, u64 parent_hash, u64 optimizer_steps), u32 tensor count,
/// then per tensor u32 element count and the element blob. An optional Adam section
/// follows: "ADAM", u64 steps, first-moment blobs, second-moment blobs.
struct Checkpoint {
  NetworkSpec spec;
  Precision precision = Precision::kFloat32;
  double sample_rate = 16000.0;
  Lineage lineage;
  /// One entry per network parameter in declared order; values are exactly
  /// representable in `precision`.
  std::vector<std::vector<double>> weights;
  std::optional<AdamState> adam;

  void write(std::ostream& out) const;
  static Checkpoint read(std::istream& in);
  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  std::string serialize() const;
  /// FNV-1a of the serialized bytes.
  std::uint64_t content_hash() const;
  double window_ms() const { return 1000.0 * static_cast<double>(spec.length) / sample_rate; }
};

template <typename T>
Checkpoint make_checkpoint(const Network<T>& net, double sample_rate, const Lineage& lineage,
                           const Adam<T>* adam = nullptr);

/// Rebuilds a network; throws asl::FormatError if the weight shapes do not match the topology.
template <typename T>
Network<T> network_from_checkpoint(const Checkpoint& ckpt);

template <typename T>
Adam<T> adam_from_checkpoint(const Checkpoint& ckpt, const AdamHyper& hyper);

}  // namespace asl::nn
