#include "asl/fixtures.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "asl/random.hpp"

namespace asl {

AnechoicClip synthetic_voice_clip(std::size_t samples, std::uint64_t seed, double sample_rate) {
  AnechoicClip clip;
  clip.sample_rate = sample_rate;
  clip.source_id = "voice" + std::to_string(seed);
  Rng rng = make_rng(seed, {stream::kClipPick});
  std::normal_distribution<double> noise(0.0, 0.01);
  std::uniform_real_distribution<double> pitch(100.0, 220.0), rate(2.0, 5.0);
  const double f0 = pitch(rng), am = rate(rng);
  clip.samples.resize(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    double s = 0.0;
    for (int h = 1; h <= 6; ++h) s += std::sin(2.0 * std::numbers::pi * f0 * h * t) / h;
    clip.samples[i] = 0.3 * (0.6 + 0.4 * std::sin(2.0 * std::numbers::pi * am * t)) * s + noise(rng);
  }
  return clip;
}

std::vector<AnechoicClip> synthetic_corpus(std::size_t clips, std::size_t samples_per_clip, std::uint64_t seed,
                                           double sample_rate) {
  std::vector<AnechoicClip> out;
  for (std::size_t k = 0; k < clips; ++k)
    out.push_back(synthetic_voice_clip(samples_per_clip, derive_seed(seed, {k}), sample_rate));
  return out;
}

Sequence simulate_recorded_sequence(const ArrayGeometry& geom, const SourceBox& box, const RecordedSequenceSpec& spec) {
  spec.noise.validate();
  const double fs = geom.sample_rate();
  const auto total = static_cast<std::size_t>(std::llround(spec.duration_s * fs));
  const auto dwell = static_cast<std::size_t>(std::llround(spec.dwell_s * fs));
  if (total == 0 || dwell == 0) throw std::invalid_argument("simulate_recorded_sequence: empty duration");
  // Leading samples absorb the circular wrap of each segment's delay.
  constexpr std::size_t kPad = 1024;
  const AnechoicClip voice = synthetic_voice_clip(total + kPad, derive_seed(spec.seed, {stream::kClipPick}), fs);

  Sequence seq;
  seq.manifest.id = spec.id;
  seq.manifest.description = "simulated";
  seq.sample_rate = fs;
  seq.channels.assign(geom.size(), std::vector<double>(total, 0.0));
  std::vector<Position> segment_positions;
  std::uniform_real_distribution<double> gain(spec.noise.gain_lo, spec.noise.gain_hi);
  for (std::size_t begin = 0, seg = 0; begin < total; begin += dwell, ++seg) {
    const std::size_t len = std::min(dwell, total - begin);
    Rng rng = make_rng(spec.seed, {stream::kExample, seg});
    const Position q = sample_source_position(box, rng);
    segment_positions.push_back(q);
    const std::span<const double> src(voice.samples.data() + begin, len + kPad);
    const std::vector<double> dirty = contaminate(src, fs, spec.noise, rng);
    for (std::size_t i = 0; i < geom.size(); ++i) {
      const std::vector<double> y = fractional_delay(dirty, sample_delay(q, i, geom), gain(rng));
      std::copy(y.begin() + kPad, y.end(), seq.channels[i].begin() + static_cast<std::ptrdiff_t>(begin));
    }
  }
  const auto shift = static_cast<std::int64_t>(std::llround(spec.frame_shift_ms));
  for (std::int64_t t = shift; static_cast<double>(t) * fs / 1000.0 <= static_cast<double>(total); t += shift) {
    const auto end = static_cast<std::size_t>(std::llround(static_cast<double>(t) * fs / 1000.0));
    seq.track.records.push_back({t, segment_positions[(end - 1) / dwell], true});
  }
  return seq;
}

}  // namespace asl
