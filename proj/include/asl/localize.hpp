#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "asl/evaluation.hpp"
#include "asl/nn/checkpoint.hpp"
#include "asl/srp.hpp"
#include "asl/training.hpp"

namespace asl {

/// Network position estimates for every window, in order.
std::vector<Position> cnn_predict(const nn::Checkpoint& checkpoint, const RealWindowSet& windows);

/// Track report of the network on windows from a single sequence. Throws asl::ConfigError when
/// the windows do not fit the checkpoint's topology or come from more than one sequence.
TrackReport cnn_track(const nn::Checkpoint& checkpoint, const RealWindowSet& windows, const std::string& method = "CNN");

struct SrpFrame {
  std::int64_t t_ms = 0;
  Position position;
  double power = 0.0;
};

std::vector<SrpFrame> srp_frames(const RealWindowSet& windows, const SearchGrid& grid, const SrpOptions& options = {});

/// Track report of SRP-PHAT on windows from a single sequence; window_ms is taken from the windows.
TrackReport srp_track(const RealWindowSet& windows, const SearchGrid& grid, const SrpOptions& options = {},
                      const std::string& method = "SRP");

/// Per-frame SRP output as CSV with header `frame_ms,x,y,z,power`.
std::string format_srp_frames_csv(const std::vector<SrpFrame>& frames);

}  // namespace asl
