#pragma once

#include <cstdint>
#include <iosfwd>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "asl/geometry.hpp"
#include "asl/random.hpp"

namespace asl {

/// Close-talk (anechoic) recording used as the simulation source.
struct AnechoicClip {
  std::vector<double> samples;
  double sample_rate = 16000.0;
  std::string source_id;
};

/// One analysis window across all microphones, stored channel-major (M x N).
class MultichannelWindow {
 public:
  MultichannelWindow() = default;
  MultichannelWindow(std::size_t channels, std::size_t length, double sample_rate);

  std::size_t channels() const { return channels_; }
  std::size_t length() const { return length_; }
  double sample_rate() const { return sample_rate_; }

  std::span<double> channel(std::size_t i);
  std::span<const double> channel(std::size_t i) const;
  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

 private:
  std::size_t channels_ = 0;
  std::size_t length_ = 0;
  double sample_rate_ = 0.0;
  std::vector<double> data_;
};

enum class NoiseGainMode { kSnrDb, kFixedGain };

/// Contamination and per-channel gain parameters of the simulator.
struct NoiseSpec {
  double tone_gain = 0.1;
  double tone_freq_lo = 20.0;
  double tone_freq_hi = 30.0;
  double tone_phase_lo = 0.0;
  double tone_phase_hi = std::numbers::pi;
  NoiseGainMode noise_mode = NoiseGainMode::kSnrDb;
  double snr_db = 20.0;
  double noise_gain = 0.0;
  double gain_lo = 0.01;
  double gain_hi = 0.03;

  /// Throws std::invalid_argument on reversed or negative ranges or a non-finite SNR.
  void validate() const;
};

/// JSON object with the NoiseSpec field names; noise_mode is "snr_db" or "fixed_gain". Missing
/// keys keep the values of `defaults`; unknown keys and invalid ranges raise asl::ConfigError.
NoiseSpec noise_spec_from_json_text(const std::string& text, const NoiseSpec& defaults = {});
std::string noise_spec_to_json_text(const NoiseSpec& spec);

/// Realized random draws of one contamination.
struct ContaminationInfo {
  double tone_freq = 0.0;
  double tone_phase = 0.0;
  double noise_gain = 0.0;
  double signal_power = 0.0;
  double realized_snr_db = 0.0;  // +inf when no noise is added
};

/// Delays `x` by `delay` samples with a linear phase ramp in the DFT domain and scales by `gain`.
///
/// The ramp uses signed frequency indices so the result is real. For even N the Nyquist
/// bin cannot carry a fractional phase and stay real; it is multiplied by
/// (-1)^round(delay), which keeps the transform unitary and integer delays exact circular
/// shifts. Consequently delays compose exactly only for signals without Nyquist content.
/// Throws std::invalid_argument for N < 2 and asl::NumericError for non-finite input.
std::vector<double> fractional_delay(std::span<const double> x, double delay, double gain = 1.0);

/// Adds k_s sin(2 pi f0 n / fs + phi0) + k_eta * eta[n] to x. In SNR mode k_eta is set from
/// the power of x; a zero-power x in that mode raises asl::NumericError.
std::vector<double> contaminate(std::span<const double> x, double sample_rate, const NoiseSpec& spec, Rng& rng,
                                ContaminationInfo* info = nullptr);

/// Componentwise uniform draw in [box.lo, box.hi].
Position sample_source_position(const SourceBox& box, Rng& rng);

struct SynthesisInfo {
  ContaminationInfo contamination;
  std::vector<double> gains;
  std::vector<double> delays;
  std::size_t offset = 0;
  std::size_t clip_index = 0;
};

struct LabeledExample {
  MultichannelWindow window;
  Position target;
  SynthesisInfo info;
};

struct SynthesisOptions {
  /// Extract extra leading samples and trim after delaying so no wrapped samples remain.
  bool guard_band = false;
};

/// Samples needed from the clip for one window under `options`.
std::size_t required_span(std::size_t window_samples, const Position& q, const ArrayGeometry& geom,
                          const SynthesisOptions& options);

/// Builds one training example: contaminate the source window, then delay and scale it for
/// every microphone with N_s(i) = fs * d_i / c and an independent gain A_i ~ U[gain_lo, gain_hi].
/// Throws std::out_of_range when the window exceeds the clip and std::invalid_argument when q
/// lies outside `box`.
LabeledExample synthesize_example(const AnechoicClip& clip, std::size_t offset, std::size_t window_samples,
                                  const Position& q, const ArrayGeometry& geom, const SourceBox& box,
                                  const NoiseSpec& spec, Rng& rng, const SynthesisOptions& options = {});

struct EpochSpec {
  std::size_t clips_per_epoch = 200;
  std::size_t windows_per_clip = 40;
  double validation_fraction = 0.1;
  std::size_t window_samples = 1280;
  /// Windows whose RMS is below this are redrawn.
  double silence_rms = 1e-3;
  std::size_t max_redraws = 64;
  SynthesisOptions synthesis;

  std::size_t total() const { return clips_per_epoch * windows_per_clip; }
  std::size_t validation_count() const;
  std::size_t train_count() const { return total() - validation_count(); }
  /// Scales the clip count by `factor` (e.g. 0.01 -> 2 clips x 40 windows).
  EpochSpec scaled(double factor) const;
};

struct EpochData {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> validation;
  /// Set when the corpus had fewer clips than requested and clips were reused.
  bool sampled_with_replacement = false;
};

/// Draws `clips_per_epoch` clips and one source position per clip, then `windows_per_clip`
/// windows from each clip at that position. Every example uses its own seed-derived
/// substream, so the result depends only on (seed, epoch) and not on `workers`.
EpochData generate_epoch(std::span<const AnechoicClip> corpus, const ArrayGeometry& geom, const NoiseSpec& spec,
                         const SourceBox& box, const EpochSpec& epoch_spec, std::uint64_t seed,
                         std::uint64_t epoch, unsigned workers = 1);

/// Record-per-example dataset cache. Header: "ASLD", u32 version, u32 M, u32 N, f64 fs;
/// each record: 3 x f64 target then M*N f32 samples, channel-major, all little-endian.
class DatasetWriter {
 public:
  DatasetWriter(std::ostream& out, std::size_t channels, std::size_t length, double sample_rate);
  void write(const LabeledExample& example);
  std::size_t count() const { return count_; }

 private:
  std::ostream& out_;
  std::size_t channels_;
  std::size_t length_;
  double sample_rate_;
  std::size_t count_ = 0;
};

struct DatasetHeader {
  std::uint32_t version = 1;
  std::uint32_t channels = 0;
  std::uint32_t length = 0;
  double sample_rate = 0.0;
};

/// Reads a whole cache; throws asl::FormatError on a bad magic or a partial record.
std::vector<LabeledExample> read_dataset(std::istream& in, DatasetHeader* header = nullptr);

}  // namespace asl
