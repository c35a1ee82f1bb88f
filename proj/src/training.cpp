#include "asl/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "asl/binary_io.hpp"
#include "asl/errors.hpp"
#include "asl/random.hpp"

namespace asl {

namespace {

// Keeps shuffles and dropout masks of the training stages apart under one master seed.
enum Stage : std::uint64_t { kPretrain = 1, kFinetune = 2, kScratch = 3, kFit = 4 };

template <typename T>
struct Batch {
  std::vector<std::vector<T>> inputs;
  std::vector<std::span<const T>> views;
  std::vector<std::vector<T>> targets;

  void fill(std::span<const TrainingSample> all, const std::vector<std::size_t>& order, std::size_t begin,
            std::size_t end) {
    inputs.clear();
    views.clear();
    targets.clear();
    for (std::size_t k = begin; k < end; ++k) {
      const TrainingSample& s = all[order.empty() ? k : order[k]];
      inputs.push_back(nn::window_to_input<T>(*s.window));
      targets.push_back({static_cast<T>(s.target.x), static_cast<T>(s.target.y), static_cast<T>(s.target.z)});
    }
    for (const auto& x : inputs) views.emplace_back(x);
  }
};

template <typename T>
double mean_loss(const nn::Network<T>& net, std::span<const TrainingSample> samples, std::size_t batch_size) {
  if (samples.empty()) return std::numeric_limits<double>::quiet_NaN();
  Batch<T> b;
  double sum = 0.0;
  for (std::size_t begin = 0; begin < samples.size(); begin += batch_size) {
    const std::size_t end = std::min(samples.size(), begin + batch_size);
    b.fill(samples, {}, begin, end);
    sum += static_cast<double>(net.loss(b.views, b.targets, false, 0)) * static_cast<double>(end - begin);
  }
  return sum / static_cast<double>(samples.size());
}

using SampleSource = std::function<std::vector<TrainingSample>(std::size_t epoch)>;

template <typename T>
TrainResult train_loop(nn::Network<T> net, nn::Adam<T> adam, const TrainConfig& config, Stage stage, double sample_rate,
                       nn::Lineage lineage, std::size_t epochs, const SampleSource& source,
                       std::span<const TrainingSample> validation, const TrainHooks& hooks) {
  TrainResult result;
  std::uint64_t step = 0;
  Batch<T> batch;
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    const std::vector<TrainingSample> train = source(epoch);
    if (train.empty()) throw MissingInputError("training: no training windows");
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_rng(config.seed, {stream::kShuffle, stage, epoch});
    std::shuffle(order.begin(), order.end(), rng);

    EpochStats stats;
    stats.epoch = epoch;
    double sum = 0.0;
    for (std::size_t begin = 0; begin < train.size(); begin += config.batch_size) {
      const std::size_t end = std::min(train.size(), begin + config.batch_size);
      batch.fill(train, order, begin, end);
      const std::uint64_t dropout_seed = derive_seed(config.seed, {stream::kDropout, stage, step});
      double loss = 0.0;
      try {
        loss = static_cast<double>(net.compute_gradients(batch.views, batch.targets, true, dropout_seed));
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                           ": " + e.what());
      }
      adam.step(net.parameters());
      sum += loss * static_cast<double>(end - begin);
      ++step;
      ++stats.steps;
    }
    stats.train_loss = sum / static_cast<double>(train.size());
    if (!validation.empty()) stats.validation_loss = mean_loss(net, validation, config.batch_size);
    if (!std::isfinite(stats.train_loss) || (!validation.empty() && !std::isfinite(stats.validation_loss)))
      throw NumericError("training diverged at epoch " + std::to_string(epoch) + ": loss is not finite");
    result.history.push_back(stats);
    if (hooks.on_epoch) hooks.on_epoch(stats);
    if (hooks.on_checkpoint && config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 && epoch < epochs) {
      nn::Lineage l = lineage;
      l.optimizer_steps += step;
      hooks.on_checkpoint(epoch, nn::make_checkpoint(net, sample_rate, l, &adam));
    }
    if (hooks.stop_after && hooks.stop_after(stats)) break;
  }
  lineage.optimizer_steps += step;
  result.checkpoint = nn::make_checkpoint(net, sample_rate, lineage, &adam);
  return result;
}

template <typename T>
nn::Network<T> fresh_network(const nn::NetworkSpec& spec, std::uint64_t seed, Stage stage) {
  nn::Network<T> net(spec);
  net.initialize(derive_seed(seed, {stream::kInit, stage}));
  return net;
}

template <typename F>
auto with_precision(nn::Precision p, F&& f) {
  return p == nn::Precision::kFloat64 ? f(double{}) : f(float{});
}

void check_leak(const RealWindowSet& windows, const std::vector<std::string>& test_sequences) {
  for (const auto& id : windows.sequence_ids())
    if (std::find(test_sequences.begin(), test_sequences.end(), id) != test_sequences.end())
      throw ConfigError("sequence " + id + " is in both the tuning set and the test set");
}

void check_windows(const RealWindowSet& windows, const nn::NetworkSpec& spec) {
  if (windows.windows.empty()) throw MissingInputError("no real windows to train on");
  for (const auto& w : windows.windows)
    if (w.window.channels() != spec.channels || w.window.length() != spec.length)
      throw ConfigError("window " + w.sequence + "@" + std::to_string(w.t_ms) + " ms is " +
                        std::to_string(w.window.channels()) + "x" + std::to_string(w.window.length()) +
                        " but the network expects " + std::to_string(spec.channels) + "x" +
                        std::to_string(spec.length));
}

}  // namespace

std::size_t TrainConfig::window_samples(double sample_rate) const {
  const double n = sample_rate * window_ms / 1000.0;
  if (!(n >= 1.0) || std::abs(n - std::round(n)) > 1e-9)
    throw ConfigError("window of " + std::to_string(window_ms) + " ms is not a whole number of samples at " +
                      std::to_string(sample_rate) + " Hz");
  return static_cast<std::size_t>(std::llround(n));
}

void TrainConfig::validate(double sample_rate) const {
  window_samples(sample_rate);
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (clips_per_epoch == 0 || windows_per_clip == 0) throw ConfigError("clips_per_epoch and windows_per_clip must be positive");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) throw ConfigError("validation_fraction must be in [0, 1)");
  const EpochSpec es = epoch_spec(sample_rate);
  if (batch_size > es.train_count())
    throw ConfigError("batch_size " + std::to_string(batch_size) + " exceeds the " + std::to_string(es.train_count()) +
                      " training windows per epoch");
  if (!(adam.learning_rate > 0.0) || !(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
      !(adam.epsilon > 0.0))
    throw ConfigError("invalid optimizer hyperparameters");
  if (workers == 0) throw ConfigError("workers must be at least 1");
}

EpochSpec TrainConfig::epoch_spec(double sample_rate) const {
  EpochSpec es;
  es.clips_per_epoch = clips_per_epoch;
  es.windows_per_clip = windows_per_clip;
  es.validation_fraction = validation_fraction;
  es.window_samples = window_samples(sample_rate);
  es.silence_rms = silence_rms;
  es.synthesis.guard_band = guard_band;
  return es;
}

std::string train_config_to_json_text(const TrainConfig& c) {
  nlohmann::json j;
  j["window_ms"] = c.window_ms;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["clips_per_epoch"] = c.clips_per_epoch;
  j["windows_per_clip"] = c.windows_per_clip;
  j["validation_fraction"] = c.validation_fraction;
  j["silence_rms"] = c.silence_rms;
  j["guard_band"] = c.guard_band;
  j["learning_rate"] = c.adam.learning_rate;
  j["beta1"] = c.adam.beta1;
  j["beta2"] = c.adam.beta2;
  j["epsilon"] = c.adam.epsilon;
  j["seed"] = c.seed;
  j["checkpoint_every"] = c.checkpoint_every;
  j["precision"] = nn::precision_name(c.precision);
  j["workers"] = c.workers;
  j["finetune_epochs"] = c.finetune_epochs;
  return j.dump(2);
}

TrainConfig train_config_from_json_text(const std::string& text, const TrainConfig& defaults) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("training config: expected a JSON object");
  TrainConfig c = defaults;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "window_ms")
        c.window_ms = value.get<double>();
      else if (key == "epochs")
        c.epochs = value.get<std::size_t>();
      else if (key == "batch_size")
        c.batch_size = value.get<std::size_t>();
      else if (key == "clips_per_epoch")
        c.clips_per_epoch = value.get<std::size_t>();
      else if (key == "windows_per_clip")
        c.windows_per_clip = value.get<std::size_t>();
      else if (key == "validation_fraction")
        c.validation_fraction = value.get<double>();
      else if (key == "silence_rms")
        c.silence_rms = value.get<double>();
      else if (key == "guard_band")
        c.guard_band = value.get<bool>();
      else if (key == "learning_rate")
        c.adam.learning_rate = value.get<double>();
      else if (key == "beta1")
        c.adam.beta1 = value.get<double>();
      else if (key == "beta2")
        c.adam.beta2 = value.get<double>();
      else if (key == "epsilon")
        c.adam.epsilon = value.get<double>();
      else if (key == "seed")
        c.seed = value.get<std::uint64_t>();
      else if (key == "checkpoint_every")
        c.checkpoint_every = value.get<std::size_t>();
      else if (key == "precision")
        c.precision = nn::parse_precision(value.get<std::string>());
      else if (key == "workers")
        c.workers = value.get<unsigned>();
      else if (key == "finetune_epochs")
        c.finetune_epochs = value.get<std::size_t>();
      else
        throw ConfigError("training config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  return c;
}

std::uint64_t train_config_hash(const TrainConfig& config) {
  // Worker count does not change results, so it is left out of the hash.
  TrainConfig c = config;
  c.workers = 1;
  return io::fnv1a(train_config_to_json_text(c));
}

std::string format_loss_csv(const std::vector<EpochStats>& history) {
  std::string out = "epoch,steps,train_loss,validation_loss\n";
  char buf[64];
  for (const auto& s : history) {
    out += std::to_string(s.epoch) + ',' + std::to_string(s.steps) + ',';
    std::snprintf(buf, sizeof buf, "%.9g", s.train_loss);
    out += buf;
    out += ',';
    if (!std::isnan(s.validation_loss)) {
      std::snprintf(buf, sizeof buf, "%.9g", s.validation_loss);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

std::vector<TrainingSample> as_samples(std::span<const LabeledExample> examples) {
  std::vector<TrainingSample> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back({&e.window, e.target});
  return out;
}

TrainResult pretrain(const TrainConfig& config, std::span<const AnechoicClip> corpus, const ArrayGeometry& geom,
                     const SourceBox& box, const NoiseSpec& noise, const TrainHooks& hooks) {
  config.validate(geom.sample_rate());
  if (corpus.empty()) throw MissingInputError("pretraining corpus is empty");
  noise.validate();
  const EpochSpec es = config.epoch_spec(geom.sample_rate());
  const nn::NetworkSpec spec = nn::NetworkSpec::reference_topology(geom.size(), es.window_samples);
  const nn::Lineage lineage{config.seed, train_config_hash(config), 0, 0};

  // Validation windows come from epoch 0 and stay fixed; epoch e >= 1 supplies training windows.
  EpochData validation_epoch;
  std::vector<TrainingSample> validation;
  if (config.epochs > 0 && es.validation_count() > 0) {
    validation_epoch = generate_epoch(corpus, geom, noise, box, es, config.seed, 0, config.workers);
    validation = as_samples(validation_epoch.validation);
  }
  auto current = std::make_shared<EpochData>();
  SampleSource source = [&, current](std::size_t epoch) {
    *current = generate_epoch(corpus, geom, noise, box, es, config.seed, epoch, config.workers);
    return as_samples(current->train);
  };
  return with_precision(config.precision, [&](auto tag) {
    using T = decltype(tag);
    return train_loop<T>(fresh_network<T>(spec, config.seed, kPretrain), nn::Adam<T>(config.adam), config, kPretrain,
                         geom.sample_rate(), lineage, config.epochs, source, validation, hooks);
  });
}

TrainResult fit_samples(const TrainConfig& config, const nn::NetworkSpec& spec, double sample_rate,
                        std::span<const TrainingSample> train, std::span<const TrainingSample> validation,
                        std::size_t epochs, const TrainHooks& hooks) {
  if (config.batch_size == 0) throw ConfigError("batch_size must be positive");
  const std::vector<TrainingSample> fixed(train.begin(), train.end());
  SampleSource source = [&](std::size_t) { return fixed; };
  const nn::Lineage lineage{config.seed, train_config_hash(config), 0, 0};
  return with_precision(config.precision, [&](auto tag) {
    using T = decltype(tag);
    return train_loop<T>(fresh_network<T>(spec, config.seed, kFit), nn::Adam<T>(config.adam), config, kFit, sample_rate,
                         lineage, epochs, source, validation, hooks);
  });
}

double evaluate_loss(const nn::Checkpoint& checkpoint, std::span<const TrainingSample> samples, std::size_t batch_size) {
  return with_precision(checkpoint.precision, [&](auto tag) {
    using T = decltype(tag);
    return mean_loss(nn::network_from_checkpoint<T>(checkpoint), samples, batch_size);
  });
}

std::vector<std::string> RealWindowSet::sequence_ids() const {
  std::vector<std::string> ids;
  for (const auto& w : windows)
    if (std::find(ids.begin(), ids.end(), w.sequence) == ids.end()) ids.push_back(w.sequence);
  return ids;
}

std::vector<TrainingSample> RealWindowSet::samples() const {
  std::vector<TrainingSample> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back({&w.window, w.target});
  return out;
}

void RealWindowSet::append(RealWindowSet&& other) {
  for (auto& w : other.windows) windows.push_back(std::move(w));
  skipped += other.skipped;
}

RealWindowSet extract_real_windows(const Sequence& sequence, std::size_t window_samples, bool include_silent,
                                   std::size_t length_tolerance) {
  if (sequence.channels.empty()) throw MissingInputError("sequence " + sequence.manifest.id + " has no channels");
  if (window_samples == 0) throw ConfigError("window length must be positive");
  const std::size_t length = sequence.channels.front().size();
  for (const auto& c : sequence.channels)
    if (c.size() != length) throw FormatError("sequence " + sequence.manifest.id + ": channel lengths differ");
  RealWindowSet set;
  for (const auto& rec : sequence.track.records) {
    if (!rec.speaking && !include_silent) continue;
    const long long end = std::llround(static_cast<double>(rec.t_ms) * sequence.sample_rate / 1000.0);
    if (end > static_cast<long long>(length + length_tolerance))
      throw FormatError("sequence " + sequence.manifest.id + ": annotation at " + std::to_string(rec.t_ms) +
                        " ms lies beyond the audio (" + std::to_string(length) + " samples)");
    if (end < static_cast<long long>(window_samples) || end > static_cast<long long>(length)) {
      ++set.skipped;
      continue;
    }
    RealWindow w;
    w.window = MultichannelWindow(sequence.channels.size(), window_samples, sequence.sample_rate);
    const auto start = static_cast<std::size_t>(end) - window_samples;
    for (std::size_t i = 0; i < sequence.channels.size(); ++i)
      std::copy_n(sequence.channels[i].begin() + static_cast<std::ptrdiff_t>(start), window_samples,
                  w.window.channel(i).begin());
    w.target = rec.position;
    w.sequence = sequence.manifest.id;
    w.t_ms = rec.t_ms;
    set.windows.push_back(std::move(w));
  }
  return set;
}

TrainResult finetune(const nn::Checkpoint& parent, const RealWindowSet& windows, const TrainConfig& config,
                     const std::vector<std::string>& test_sequences, const TrainHooks& hooks) {
  check_leak(windows, test_sequences);
  check_windows(windows, parent.spec);
  if (config.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (config.finetune_epochs == 0) return {parent, {}};
  const std::vector<TrainingSample> samples = windows.samples();
  SampleSource source = [&](std::size_t) { return samples; };
  const nn::Lineage lineage{config.seed, train_config_hash(config), parent.content_hash(), parent.lineage.optimizer_steps};
  return with_precision(parent.precision, [&](auto tag) {
    using T = decltype(tag);
    return train_loop<T>(nn::network_from_checkpoint<T>(parent), nn::Adam<T>(config.adam), config, kFinetune,
                         parent.sample_rate, lineage, config.finetune_epochs, source, {}, hooks);
  });
}

TrainResult train_from_scratch(const RealWindowSet& windows, const TrainConfig& config, std::size_t channels,
                               double sample_rate, const std::vector<std::string>& test_sequences,
                               const TrainHooks& hooks) {
  const nn::NetworkSpec spec = nn::NetworkSpec::reference_topology(channels, config.window_samples(sample_rate));
  check_leak(windows, test_sequences);
  check_windows(windows, spec);
  if (config.batch_size == 0) throw ConfigError("batch_size must be positive");
  const std::vector<TrainingSample> samples = windows.samples();
  SampleSource source = [&](std::size_t) { return samples; };
  const nn::Lineage lineage{config.seed, train_config_hash(config), 0, 0};
  return with_precision(config.precision, [&](auto tag) {
    using T = decltype(tag);
    return train_loop<T>(fresh_network<T>(spec, config.seed, kScratch), nn::Adam<T>(config.adam), config, kScratch,
                         sample_rate, lineage, config.epochs, source, {}, hooks);
  });
}

}  // namespace asl
