#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "asl/geometry.hpp"
#include "asl/ingestion.hpp"
#include "asl/nn/adam.hpp"
#include "asl/nn/checkpoint.hpp"
#include "asl/nn/network.hpp"
#include "asl/signal_sim.hpp"

namespace asl {

struct TrainConfig {
  double window_ms = 80.0;
  std::size_t epochs = 200;
  std::size_t batch_size = 100;
  /// Windows generated per epoch (clips x windows per clip) and the validation share.
  std::size_t clips_per_epoch = 200;
  std::size_t windows_per_clip = 40;
  double validation_fraction = 0.1;
  double silence_rms = 1e-3;
  bool guard_band = false;
  nn::AdamHyper adam;
  std::uint64_t seed = 1;
  /// Emit an intermediate checkpoint every this many epochs; 0 disables.
  std::size_t checkpoint_every = 0;
  nn::Precision precision = nn::Precision::kFloat32;
  /// Worker threads for example synthesis; results do not depend on it.
  unsigned workers = 1;
  /// Passes over the real window set when fine-tuning.
  std::size_t finetune_epochs = 50;

  /// f_s * window_ms / 1000; throws asl::ConfigError unless it is a positive integer.
  std::size_t window_samples(double sample_rate) const;
  /// Throws asl::ConfigError on an invalid combination.
  void validate(double sample_rate) const;
  EpochSpec epoch_spec(double sample_rate) const;
};

/// Canonical JSON used for the config hash recorded in checkpoints. Unknown keys in the
/// parser raise asl::ConfigError.
std::string train_config_to_json_text(const TrainConfig& config);
TrainConfig train_config_from_json_text(const std::string& text, const TrainConfig& defaults = {});
std::uint64_t train_config_hash(const TrainConfig& config);

struct EpochStats {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  /// Mean minibatch loss over the epoch, dropout active (m^2).
  double train_loss = 0.0;
  /// Dropout disabled; NaN when no validation set is used.
  double validation_loss = std::numeric_limits<double>::quiet_NaN();
};

/// CSV with header `epoch,steps,train_loss,validation_loss`; NaN becomes an empty field.
std::string format_loss_csv(const std::vector<EpochStats>& history);

struct TrainHooks {
  std::function<void(const EpochStats&)> on_epoch;
  std::function<void(std::size_t epoch, const nn::Checkpoint&)> on_checkpoint;
  /// Ends training after the current epoch when it returns true.
  std::function<bool(const EpochStats&)> stop_after;
};

struct TrainResult {
  nn::Checkpoint checkpoint;
  std::vector<EpochStats> history;
};

/// A labeled window by reference; the window must outlive its use.
struct TrainingSample {
  const MultichannelWindow* window = nullptr;
  Position target;
};

std::vector<TrainingSample> as_samples(std::span<const LabeledExample> examples);

/// Pretraining on semi-synthetic windows. Epoch e >= 1 trains on freshly generated windows
/// (seed, e); the validation windows are generated once (seed, epoch 0) and fixed for the
/// run. Zero epochs returns the initialization checkpoint. A non-finite loss raises
/// asl::NumericError.
TrainResult pretrain(const TrainConfig& config, std::span<const AnechoicClip> corpus, const ArrayGeometry& geom,
                     const SourceBox& box, const NoiseSpec& noise, const TrainHooks& hooks = {});

/// Trains a fresh (seeded) network for `epochs` passes over fixed samples.
TrainResult fit_samples(const TrainConfig& config, const nn::NetworkSpec& spec, double sample_rate,
                        std::span<const TrainingSample> train, std::span<const TrainingSample> validation,
                        std::size_t epochs, const TrainHooks& hooks = {});

/// Mean loss over `samples` with dropout disabled.
double evaluate_loss(const nn::Checkpoint& checkpoint, std::span<const TrainingSample> samples,
                     std::size_t batch_size = 100);

/// Labeled windows cut from recorded sequences.
struct RealWindow {
  MultichannelWindow window;
  Position target;
  std::string sequence;
  std::int64_t t_ms = 0;
};

struct RealWindowSet {
  std::vector<RealWindow> windows;
  /// Annotated frames dropped for lack of history or audio.
  std::size_t skipped = 0;

  std::vector<std::string> sequence_ids() const;
  std::vector<TrainingSample> samples() const;
  void append(RealWindowSet&& other);
};

/// One window per annotated frame (speaking frames only unless `include_silent`). A window
/// ends at the frame time and uses only earlier samples; frames without a full window of
/// history are skipped. Frames ending more than `length_tolerance` samples after the audio
/// raise asl::FormatError; those within the tolerance are skipped.
RealWindowSet extract_real_windows(const Sequence& sequence, std::size_t window_samples,
                                   bool include_silent = false, std::size_t length_tolerance = 640);

/// Continues training `parent` on real windows with fresh Adam state for
/// `config.finetune_epochs` passes. Throws asl::ConfigError when a window's sequence is in
/// `test_sequences` or the windows do not fit the topology, and asl::MissingInputError when
/// the set is empty. Zero passes return `parent` unchanged.
TrainResult finetune(const nn::Checkpoint& parent, const RealWindowSet& windows, const TrainConfig& config,
                     const std::vector<std::string>& test_sequences, const TrainHooks& hooks = {});

/// Same as finetune from a seeded random initialization, for `config.epochs` passes.
TrainResult train_from_scratch(const RealWindowSet& windows, const TrainConfig& config, std::size_t channels,
                               double sample_rate, const std::vector<std::string>& test_sequences,
                               const TrainHooks& hooks = {});

}  // namespace asl
