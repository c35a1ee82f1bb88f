#include "asl/signal_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "asl/binary_io.hpp"
#include "asl/errors.hpp"
#include "asl/fft.hpp"

namespace asl {

MultichannelWindow::MultichannelWindow(std::size_t channels, std::size_t length, double sample_rate)
    : channels_(channels), length_(length), sample_rate_(sample_rate), data_(channels * length, 0.0) {}

std::span<double> MultichannelWindow::channel(std::size_t i) {
  if (i >= channels_) throw std::out_of_range("channel index out of range");
  return std::span<double>(data_).subspan(i * length_, length_);
}

std::span<const double> MultichannelWindow::channel(std::size_t i) const {
  if (i >= channels_) throw std::out_of_range("channel index out of range");
  return std::span<const double>(data_).subspan(i * length_, length_);
}

void NoiseSpec::validate() const {
  auto range_ok = [](double lo, double hi) { return std::isfinite(lo) && std::isfinite(hi) && lo >= 0.0 && lo <= hi; };
  if (!(tone_gain >= 0.0) || !std::isfinite(tone_gain)) throw std::invalid_argument("NoiseSpec: tone_gain must be >= 0");
  if (!range_ok(tone_freq_lo, tone_freq_hi)) throw std::invalid_argument("NoiseSpec: bad tone frequency range");
  if (!range_ok(tone_phase_lo, tone_phase_hi)) throw std::invalid_argument("NoiseSpec: bad tone phase range");
  if (!range_ok(gain_lo, gain_hi)) throw std::invalid_argument("NoiseSpec: bad gain range");
  if (noise_mode == NoiseGainMode::kSnrDb && !std::isfinite(snr_db)) throw std::invalid_argument("NoiseSpec: SNR must be finite");
  if (noise_mode == NoiseGainMode::kFixedGain && (!(noise_gain >= 0.0) || !std::isfinite(noise_gain)))
    throw std::invalid_argument("NoiseSpec: noise_gain must be >= 0");
}

std::vector<double> fractional_delay(std::span<const double> x, double delay, double gain) {
  const std::size_t n = x.size();
  if (n < 2) throw std::invalid_argument("fractional_delay: need at least 2 samples");
  if (!std::isfinite(delay) || !std::isfinite(gain)) throw NumericError("fractional_delay: non-finite delay or gain");
  for (double v : x) {
    if (!std::isfinite(v)) throw NumericError("fractional_delay: non-finite input sample");
  }
  auto bins = fft::rfft(x);
  const double w = -2.0 * std::numbers::pi * delay / static_cast<double>(n);
  for (std::size_t k = 1; k < bins.size(); ++k) {
    if (n % 2 == 0 && k == n / 2) {
      bins[k] *= (static_cast<long long>(std::llround(delay)) % 2 == 0) ? 1.0 : -1.0;
    } else {
      bins[k] *= std::polar(1.0, w * static_cast<double>(k));
    }
  }
  auto y = fft::irfft(bins, n);
  if (gain != 1.0) {
    for (double& v : y) v *= gain;
  }
  return y;
}

std::vector<double> contaminate(std::span<const double> x, double sample_rate, const NoiseSpec& spec, Rng& rng,
                                ContaminationInfo* info) {
  spec.validate();
  if (!(sample_rate > 0.0)) throw std::invalid_argument("contaminate: sample rate must be positive");
  const std::size_t n = x.size();
  double power = 0.0;
  for (double v : x) power += v * v;
  power = n > 0 ? power / static_cast<double>(n) : 0.0;

  double k_eta = 0.0;
  if (spec.noise_mode == NoiseGainMode::kSnrDb) {
    if (!(power > 0.0)) throw NumericError("contaminate: zero-power signal, SNR-based noise gain undefined");
    k_eta = std::sqrt(power / std::pow(10.0, spec.snr_db / 10.0));
  } else {
    k_eta = spec.noise_gain;
  }

  std::uniform_real_distribution<double> freq(spec.tone_freq_lo, spec.tone_freq_hi);
  std::uniform_real_distribution<double> phase(spec.tone_phase_lo, spec.tone_phase_hi);
  const double f0 = spec.tone_freq_lo == spec.tone_freq_hi ? spec.tone_freq_lo : freq(rng);
  const double phi0 = spec.tone_phase_lo == spec.tone_phase_hi ? spec.tone_phase_lo : phase(rng);

  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> y(x.begin(), x.end());
  double noise_power = 0.0;
  const double w = 2.0 * std::numbers::pi * f0 / sample_rate;
  for (std::size_t i = 0; i < n; ++i) {
    if (spec.tone_gain != 0.0) y[i] += spec.tone_gain * std::sin(w * static_cast<double>(i) + phi0);
    if (k_eta != 0.0) {
      const double e = k_eta * normal(rng);
      y[i] += e;
      noise_power += e * e;
    }
  }
  if (info != nullptr) {
    info->tone_freq = f0;
    info->tone_phase = phi0;
    info->noise_gain = k_eta;
    info->signal_power = power;
    noise_power = n > 0 ? noise_power / static_cast<double>(n) : 0.0;
    info->realized_snr_db = noise_power > 0.0 ? 10.0 * std::log10(power / noise_power)
                                              : std::numeric_limits<double>::infinity();
  }
  return y;
}

Position sample_source_position(const SourceBox& box, Rng& rng) {
  Position p;
  for (std::size_t i = 0; i < 3; ++i) {
    if (box.lo[i] > box.hi[i]) throw std::invalid_argument("sample_source_position: lo > hi");
    if (box.lo[i] == box.hi[i]) {
      p[i] = box.lo[i];
    } else {
      std::uniform_real_distribution<double> u(box.lo[i], box.hi[i]);
      p[i] = u(rng);
    }
  }
  return p;
}

std::size_t required_span(std::size_t window_samples, const Position& q, const ArrayGeometry& geom,
                          const SynthesisOptions& options) {
  if (!options.guard_band) return window_samples;
  double max_delay = 0.0;
  for (std::size_t i = 0; i < geom.size(); ++i) max_delay = std::max(max_delay, sample_delay(q, i, geom));
  return window_samples + static_cast<std::size_t>(std::ceil(max_delay));
}

LabeledExample synthesize_example(const AnechoicClip& clip, std::size_t offset, std::size_t window_samples,
                                  const Position& q, const ArrayGeometry& geom, const SourceBox& box,
                                  const NoiseSpec& spec, Rng& rng, const SynthesisOptions& options) {
  if (!q.finite() || !box.contains(q)) throw std::invalid_argument("synthesize_example: source outside the source box");
  if (clip.sample_rate != geom.sample_rate())
    throw std::invalid_argument("synthesize_example: clip sample rate differs from geometry");
  const std::size_t span = required_span(window_samples, q, geom, options);
  if (offset > clip.samples.size() || span > clip.samples.size() - offset)
    throw std::out_of_range("synthesize_example: window exceeds clip");

  const std::span<const double> source(clip.samples.data() + offset, span);
  LabeledExample ex;
  ex.target = q;
  ex.info.offset = offset;
  const auto contaminated = contaminate(source, geom.sample_rate(), spec, rng, &ex.info.contamination);

  ex.window = MultichannelWindow(geom.size(), window_samples, geom.sample_rate());
  std::uniform_real_distribution<double> gain_dist(spec.gain_lo, spec.gain_hi);
  const std::size_t skip = span - window_samples;
  for (std::size_t i = 0; i < geom.size(); ++i) {
    const double delay = sample_delay(q, i, geom);
    const double gain = spec.gain_lo == spec.gain_hi ? spec.gain_lo : gain_dist(rng);
    const auto delayed = fractional_delay(contaminated, delay, gain);
    std::copy(delayed.begin() + static_cast<std::ptrdiff_t>(skip), delayed.end(), ex.window.channel(i).begin());
    ex.info.gains.push_back(gain);
    ex.info.delays.push_back(delay);
  }
  return ex;
}

std::size_t EpochSpec::validation_count() const {
  return static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(total())));
}

EpochSpec EpochSpec::scaled(double factor) const {
  EpochSpec s = *this;
  s.clips_per_epoch = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(factor * clips_per_epoch)));
  return s;
}

namespace {

double rms(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return x.empty() ? 0.0 : std::sqrt(s / static_cast<double>(x.size()));
}

LabeledExample make_epoch_example(const AnechoicClip& clip, std::size_t clip_index, const Position& q,
                                  const ArrayGeometry& geom, const NoiseSpec& spec, const SourceBox& box,
                                  const EpochSpec& es, Rng& rng) {
  const std::size_t span = required_span(es.window_samples, q, geom, es.synthesis);
  if (clip.samples.size() < span)
    throw std::invalid_argument("generate_epoch: clip '" + clip.source_id + "' shorter than the window");
  std::uniform_int_distribution<std::size_t> pick(0, clip.samples.size() - span);
  std::size_t offset = pick(rng);
  for (std::size_t attempt = 0; attempt < es.max_redraws; ++attempt) {
    if (rms(std::span<const double>(clip.samples).subspan(offset, span)) >= es.silence_rms) break;
    offset = pick(rng);
  }
  auto ex = synthesize_example(clip, offset, es.window_samples, q, geom, box, spec, rng, es.synthesis);
  ex.info.clip_index = clip_index;
  return ex;
}

}  // namespace

EpochData generate_epoch(std::span<const AnechoicClip> corpus, const ArrayGeometry& geom, const NoiseSpec& spec,
                         const SourceBox& box, const EpochSpec& es, std::uint64_t seed, std::uint64_t epoch,
                         unsigned workers) {
  if (corpus.empty()) throw std::invalid_argument("generate_epoch: empty corpus");
  if (es.clips_per_epoch == 0 || es.windows_per_clip == 0) throw std::invalid_argument("generate_epoch: empty epoch");
  spec.validate();

  EpochData data;
  Rng pick_rng = make_rng(seed, {stream::kClipPick, epoch});
  std::vector<std::size_t> clips;
  if (corpus.size() >= es.clips_per_epoch) {
    std::vector<std::size_t> all(corpus.size());
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), pick_rng);
    clips.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(es.clips_per_epoch));
  } else {
    data.sampled_with_replacement = true;
    std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);
    for (std::size_t i = 0; i < es.clips_per_epoch; ++i) clips.push_back(pick(pick_rng));
  }
  std::vector<Position> positions;
  for (std::size_t c = 0; c < clips.size(); ++c) positions.push_back(sample_source_position(box, pick_rng));

  const std::size_t total = es.total();
  std::vector<LabeledExample> all(total);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t e = begin; e < end; ++e) {
      const std::size_t c = e / es.windows_per_clip;
      Rng rng = make_rng(seed, {stream::kExample, epoch, e});
      all[e] = make_epoch_example(corpus[clips[c]], clips[c], positions[c], geom, spec, box, es, rng);
    }
  };
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(total)));
  if (workers == 1) {
    work(0, total);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (total + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          work(std::min(total, w * chunk), std::min(total, (w + 1) * chunk));
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  const std::size_t n_train = es.train_count();
  data.train.assign(std::make_move_iterator(all.begin()), std::make_move_iterator(all.begin() + static_cast<std::ptrdiff_t>(n_train)));
  data.validation.assign(std::make_move_iterator(all.begin() + static_cast<std::ptrdiff_t>(n_train)), std::make_move_iterator(all.end()));
  return data;
}

DatasetWriter::DatasetWriter(std::ostream& out, std::size_t channels, std::size_t length, double sample_rate)
    : out_(out), channels_(channels), length_(length), sample_rate_(sample_rate) {
  io::put_tag(out_, "ASLD");
  io::put_u32(out_, 1);
  io::put_u32(out_, static_cast<std::uint32_t>(channels));
  io::put_u32(out_, static_cast<std::uint32_t>(length));
  io::put_f64(out_, sample_rate);
}

void DatasetWriter::write(const LabeledExample& ex) {
  if (ex.window.channels() != channels_ || ex.window.length() != length_)
    throw std::invalid_argument("DatasetWriter: example shape differs from header");
  io::put_f64(out_, ex.target.x);
  io::put_f64(out_, ex.target.y);
  io::put_f64(out_, ex.target.z);
  for (double v : ex.window.data()) io::put_f32(out_, static_cast<float>(v));
  if (!out_) throw std::runtime_error("DatasetWriter: write failed");
  ++count_;
}

std::vector<LabeledExample> read_dataset(std::istream& in, DatasetHeader* header) {
  io::expect_tag(in, "ASLD", "dataset cache");
  DatasetHeader h;
  h.version = io::get_u32(in, "dataset header");
  if (h.version != 1) throw FormatError("dataset cache: unsupported version " + std::to_string(h.version));
  h.channels = io::get_u32(in, "dataset header");
  h.length = io::get_u32(in, "dataset header");
  h.sample_rate = io::get_f64(in, "dataset header");
  if (header != nullptr) *header = h;

  std::vector<LabeledExample> out;
  while (in.peek() != std::char_traits<char>::eof()) {
    LabeledExample ex;
    ex.target.x = io::get_f64(in, "dataset record");
    ex.target.y = io::get_f64(in, "dataset record");
    ex.target.z = io::get_f64(in, "dataset record");
    ex.window = MultichannelWindow(h.channels, h.length, h.sample_rate);
    for (double& v : ex.window.data()) v = io::get_f32(in, "dataset record");
    out.push_back(std::move(ex));
  }
  return out;
}

NoiseSpec noise_spec_from_json_text(const std::string& text, const NoiseSpec& defaults) {
  NoiseSpec n = defaults;
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    if (!j.is_object()) throw ConfigError("noise config: expected a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (key == "tone_gain") n.tone_gain = value.get<double>();
      else if (key == "tone_freq_lo") n.tone_freq_lo = value.get<double>();
      else if (key == "tone_freq_hi") n.tone_freq_hi = value.get<double>();
      else if (key == "tone_phase_lo") n.tone_phase_lo = value.get<double>();
      else if (key == "tone_phase_hi") n.tone_phase_hi = value.get<double>();
      else if (key == "snr_db") n.snr_db = value.get<double>();
      else if (key == "noise_gain") n.noise_gain = value.get<double>();
      else if (key == "gain_lo") n.gain_lo = value.get<double>();
      else if (key == "gain_hi") n.gain_hi = value.get<double>();
      else if (key == "noise_mode") {
        const auto mode = value.get<std::string>();
        if (mode == "snr_db") n.noise_mode = NoiseGainMode::kSnrDb;
        else if (mode == "fixed_gain") n.noise_mode = NoiseGainMode::kFixedGain;
        else throw ConfigError("noise config: noise_mode must be snr_db or fixed_gain, got '" + mode + "'");
      } else {
        throw ConfigError("noise config: unknown key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("noise config: ") + e.what());
  }
  try {
    n.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("noise config: ") + e.what());
  }
  return n;
}

std::string noise_spec_to_json_text(const NoiseSpec& n) {
  nlohmann::json j;
  j["tone_gain"] = n.tone_gain;
  j["tone_freq_lo"] = n.tone_freq_lo;
  j["tone_freq_hi"] = n.tone_freq_hi;
  j["tone_phase_lo"] = n.tone_phase_lo;
  j["tone_phase_hi"] = n.tone_phase_hi;
  j["noise_mode"] = n.noise_mode == NoiseGainMode::kSnrDb ? "snr_db" : "fixed_gain";
  j["snr_db"] = n.snr_db;
  j["noise_gain"] = n.noise_gain;
  j["gain_lo"] = n.gain_lo;
  j["gain_hi"] = n.gain_hi;
  return j.dump(2);
}

}  // namespace asl
