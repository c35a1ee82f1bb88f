#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "asl/geometry.hpp"
#include "asl/ingestion.hpp"
#include "asl/signal_sim.hpp"

namespace asl {

/// Voiced-speech stand-in: an amplitude-modulated harmonic series (f0 from the seed) plus a
/// little white noise. Deterministic in `seed`.
AnechoicClip synthetic_voice_clip(std::size_t samples, std::uint64_t seed, double sample_rate = 16000.0);

std::vector<AnechoicClip> synthetic_corpus(std::size_t clips, std::size_t samples_per_clip, std::uint64_t seed,
                                           double sample_rate = 16000.0);

/// Settings for a simulated stand-in of a recorded sequence.
struct RecordedSequenceSpec {
  std::string id = "sim01";
  double duration_s = 20.0;
  /// The speaker holds each position for this long before moving to a new random one.
  double dwell_s = 2.0;
  double frame_shift_ms = 40.0;
  /// Conditions that differ from the pretraining simulator (gain range, noise level, tone).
  NoiseSpec noise;
  std::uint64_t seed = 1;
};

/// Renders a sequence by delaying a continuous voice clip to every microphone, one static
/// position per dwell segment, with the given contamination applied per segment. Frames are
/// annotated every `frame_shift_ms` in the room frame, all marked speaking.
Sequence simulate_recorded_sequence(const ArrayGeometry& geom, const SourceBox& box, const RecordedSequenceSpec& spec);

}  // namespace asl
