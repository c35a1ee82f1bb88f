#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"

#include "asl/errors.hpp"
#include "asl/signal_sim.hpp"

using namespace asl;

namespace {

std::vector<double> white_noise(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> x(n);
  for (double& v : x) v = g(rng);
  return x;
}

double energy(std::span<const double> x) { return std::inner_product(x.begin(), x.end(), x.begin(), 0.0); }

/// Removes the Nyquist component with a direct O(N^2) projection, independent of the FFT code.
std::vector<double> drop_nyquist(std::vector<double> x) {
  const std::size_t n = x.size();
  double c = 0.0;
  for (std::size_t i = 0; i < n; ++i) c += (i % 2 == 0 ? 1.0 : -1.0) * x[i];
  c /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) x[i] -= (i % 2 == 0 ? 1.0 : -1.0) * c;
  return x;
}

AnechoicClip speech_like_clip(std::size_t n, std::uint64_t seed) {
  // Amplitude-modulated harmonic series with a little noise, never silent for long.
  AnechoicClip clip;
  clip.sample_rate = 16000.0;
  clip.source_id = "clip" + std::to_string(seed);
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 0.01);
  const double f0 = 120.0 + 10.0 * static_cast<double>(seed % 5);
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / clip.sample_rate;
    double s = 0.0;
    for (int h = 1; h <= 6; ++h) s += std::sin(2.0 * std::numbers::pi * f0 * h * t) / h;
    clip.samples[i] = 0.3 * (0.6 + 0.4 * std::sin(2.0 * std::numbers::pi * 3.0 * t)) * s + g(rng);
  }
  return clip;
}

}  // namespace

TEST_CASE("fractional_delay: integer delays are circular shifts") {
  for (std::size_t n : {16u, 17u, 64u, 1280u}) {
    std::vector<double> x(n, 0.0);
    x[3] = 1.0;
    for (int d : {0, 1, 5, -2}) {
      const auto y = fractional_delay(x, d);
      const std::size_t k = static_cast<std::size_t>((3 + d + static_cast<int>(n)) % static_cast<int>(n));
      for (std::size_t i = 0; i < n; ++i) CHECK(y[i] == doctest::Approx(i == k ? 1.0 : 0.0).epsilon(1e-12).scale(1.0));
    }
  }
  const auto x = white_noise(1280, 5);
  const auto y = fractional_delay(x, 7.0);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y[(i + 7) % x.size()] - x[i]) < 1e-12);
}

TEST_CASE("fractional_delay: zero delay and unit gain is the identity") {
  const auto x = white_noise(257, 9);
  const auto y = fractional_delay(x, 0.0, 1.0);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y[i] - x[i]) < 1e-13);
}

TEST_CASE("fractional_delay: energy preserved for any delay") {
  for (std::size_t n : {128u, 129u, 1280u}) {
    const auto x = white_noise(n, n);
    for (double d : {0.3, 3.7, -11.25, 50.5}) {
      const auto y = fractional_delay(x, d);
      CHECK(std::abs(energy(y) - energy(x)) <= 1e-9 * energy(x));
    }
  }
  const auto x = white_noise(512, 1);
  const auto y = fractional_delay(x, 2.2, 0.5);
  CHECK(energy(y) == doctest::Approx(0.25 * energy(x)).epsilon(1e-12));
}

TEST_CASE("fractional_delay: delays compose for signals without Nyquist content") {
  const auto x = drop_nyquist(white_noise(256, 21));
  const auto a = fractional_delay(fractional_delay(x, 1.3), 2.45);
  const auto b = fractional_delay(x, 3.75);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
}

TEST_CASE("fractional_delay: bin-aligned sinusoid gets the exact phase shift") {
  // cos(2 pi k n / N) delayed by d is cos(2 pi k (n - d) / N) when k is a DFT bin.
  const std::size_t n = 200;
  const double k = 7.0, d = 2.3;
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = std::cos(2.0 * std::numbers::pi * k * static_cast<double>(i) / n);
  const auto y = fractional_delay(x, d);
  for (std::size_t i = 0; i < n; ++i)
    CHECK(std::abs(y[i] - std::cos(2.0 * std::numbers::pi * k * (static_cast<double>(i) - d) / n)) < 1e-12);
}

TEST_CASE("fractional_delay: input validation") {
  std::vector<double> one{1.0};
  CHECK_THROWS_AS(fractional_delay(one, 0.5), std::invalid_argument);
  std::vector<double> bad{1.0, NAN, 0.0};
  CHECK_THROWS_AS(fractional_delay(bad, 0.5), NumericError);
}

TEST_CASE("contaminate: tone and noise are added as specified") {
  NoiseSpec spec;
  spec.noise_mode = NoiseGainMode::kFixedGain;
  spec.noise_gain = 0.0;
  std::vector<double> x(1000, 0.0);
  Rng rng(4);
  ContaminationInfo info;
  const auto y = contaminate(x, 16000.0, spec, rng, &info);
  CHECK(info.tone_freq >= 20.0);
  CHECK(info.tone_freq <= 30.0);
  CHECK(info.tone_phase >= 0.0);
  CHECK(info.tone_phase <= std::numbers::pi);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double expect = 0.1 * std::sin(2.0 * std::numbers::pi * info.tone_freq * static_cast<double>(i) / 16000.0 +
                                         info.tone_phase);
    CHECK(std::abs(y[i] - expect) < 1e-14);
  }
}

TEST_CASE("contaminate: fixed-gain noise variance") {
  NoiseSpec spec;
  spec.tone_gain = 0.0;
  spec.noise_mode = NoiseGainMode::kFixedGain;
  spec.noise_gain = 0.5;
  std::vector<double> x(200000, 0.0);
  Rng rng(8);
  const auto y = contaminate(x, 16000.0, spec, rng);
  const double var = energy(y) / static_cast<double>(y.size());
  // Standard error of the sample variance is sigma^2 sqrt(2/n) ~ 0.0008.
  CHECK(var == doctest::Approx(0.25).epsilon(0.02));
}

TEST_CASE("contaminate: SNR mode hits its target on average") {
  NoiseSpec spec;
  spec.tone_gain = 0.0;
  spec.snr_db = 10.0;
  const auto x = white_noise(1280, 2);
  Rng rng(3);
  double sum = 0.0;
  const int trials = 300;
  for (int t = 0; t < trials; ++t) {
    ContaminationInfo info;
    contaminate(x, 16000.0, spec, rng, &info);
    sum += info.realized_snr_db;
    CHECK(info.noise_gain == doctest::Approx(std::sqrt(info.signal_power / 10.0)).epsilon(1e-12));
  }
  CHECK(std::abs(sum / trials - 10.0) < 0.1);
  std::vector<double> silent(100, 0.0);
  CHECK_THROWS_AS(contaminate(silent, 16000.0, spec, rng), NumericError);
}

TEST_CASE("NoiseSpec validation") {
  NoiseSpec s;
  s.tone_freq_lo = 40.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = {};
  s.gain_lo = -1.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = {};
  s.snr_db = INFINITY;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  CHECK_NOTHROW(NoiseSpec{}.validate());
}

TEST_CASE("sample_source_position: uniform per axis") {
  const auto box = idiap_source_box();
  Rng rng(17);
  const int n = 20000;
  Position mean;
  for (int i = 0; i < n; ++i) {
    const auto p = sample_source_position(box, rng);
    REQUIRE(box.contains(p));
    mean = mean + (1.0 / n) * p;
  }
  const Position c = box.center();
  for (std::size_t a = 0; a < 3; ++a) {
    const double width = box.hi[a] - box.lo[a];
    // Uniform std is width / sqrt(12); allow 5 standard errors.
    CHECK(std::abs(mean[a] - c[a]) < 5.0 * width / std::sqrt(12.0 * n));
  }
}

TEST_CASE("synthesize_example: channels are delayed, scaled copies of the contaminated source") {
  IdiapConfig cfg;
  cfg.mic_subset = kIdiapFourMicSubset;
  const auto geom = build_idiap_geometry(cfg);
  const auto box = idiap_source_box();
  const auto clip = speech_like_clip(8000, 1);
  NoiseSpec spec;
  Rng rng(5);
  const Position q{1.0, 2.0, 1.2};
  const auto ex = synthesize_example(clip, 100, 1280, q, geom, box, spec, rng);
  REQUIRE(ex.window.channels() == 4);
  REQUIRE(ex.window.length() == 1280);
  CHECK(ex.target == q);
  REQUIRE(ex.info.gains.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(ex.info.gains[i] >= 0.01);
    CHECK(ex.info.gains[i] <= 0.03);
    CHECK(ex.info.delays[i] == doctest::Approx(16000.0 * euclidean_distance(q, geom.mic(i)) / 343.0));
  }
  // Undo the gain and delay of channel i; every channel must then agree.
  std::vector<std::vector<double>> undone;
  for (std::size_t i = 0; i < 4; ++i) {
    undone.push_back(fractional_delay(ex.window.channel(i), -ex.info.delays[i], 1.0 / ex.info.gains[i]));
  }
  for (std::size_t i = 1; i < 4; ++i)
    for (std::size_t n = 0; n < 1280; ++n) CHECK(std::abs(undone[i][n] - undone[0][n]) < 1e-9);

  CHECK_THROWS_AS(synthesize_example(clip, 100, 1280, {1.0, 2.0, 0.1}, geom, box, spec, rng), std::invalid_argument);
  CHECK_THROWS_AS(synthesize_example(clip, 7000, 1280, q, geom, box, spec, rng), std::out_of_range);
}

TEST_CASE("synthesize_example: guard band removes wrapped samples") {
  const auto geom = build_idiap_geometry({});
  const auto box = idiap_source_box();
  const auto clip = speech_like_clip(8000, 2);
  NoiseSpec spec;
  spec.tone_gain = 0.0;
  spec.noise_mode = NoiseGainMode::kFixedGain;
  spec.noise_gain = 0.0;
  SynthesisOptions opts;
  opts.guard_band = true;
  Rng rng(1);
  const Position q{0.2, 0.3, 1.0};
  const auto ex = synthesize_example(clip, 2000, 256, q, geom, box, spec, rng, opts);
  CHECK(required_span(256, q, geom, opts) > 256);
  CHECK(required_span(256, q, geom, {}) == 256);
  REQUIRE(ex.window.length() == 256);
  // The channel is the tail of the delayed, longer source span, so no sample wrapped around.
  const std::size_t span = required_span(256, q, geom, opts);
  std::vector<double> src(clip.samples.begin() + 2000, clip.samples.begin() + 2000 + static_cast<std::ptrdiff_t>(span));
  const auto ref = fractional_delay(src, ex.info.delays[0], ex.info.gains[0]);
  for (std::size_t n = 0; n < 256; ++n) CHECK(std::abs(ex.window.channel(0)[n] - ref[span - 256 + n]) < 1e-12);
}

TEST_CASE("EpochSpec counts") {
  EpochSpec es;
  CHECK(es.total() == 8000);
  CHECK(es.train_count() == 7200);
  CHECK(es.validation_count() == 800);
  const auto small = es.scaled(0.01);
  CHECK(small.clips_per_epoch == 2);
  CHECK(small.total() == 80);
  CHECK(small.train_count() == 72);
  CHECK(small.validation_count() == 8);
}

TEST_CASE("generate_epoch: deterministic and independent of worker count") {
  const auto geom = build_idiap_geometry({.mic_subset = kIdiapFourMicSubset});
  std::vector<AnechoicClip> corpus;
  for (std::uint64_t s = 0; s < 3; ++s) corpus.push_back(speech_like_clip(6000, s));
  EpochSpec es = EpochSpec{}.scaled(0.01);
  es.windows_per_clip = 5;
  es.window_samples = 256;
  const NoiseSpec spec;
  const auto a = generate_epoch(corpus, geom, spec, idiap_source_box(), es, 42, 0, 1);
  const auto b = generate_epoch(corpus, geom, spec, idiap_source_box(), es, 42, 0, 3);
  const auto c = generate_epoch(corpus, geom, spec, idiap_source_box(), es, 42, 1, 1);
  REQUIRE(a.train.size() == 9);
  REQUIRE(a.validation.size() == 1);
  CHECK_FALSE(a.sampled_with_replacement);
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].target == b.train[i].target);
    CHECK(std::equal(a.train[i].window.data().begin(), a.train[i].window.data().end(),
                     b.train[i].window.data().begin()));
  }
  CHECK_FALSE(a.train[0].target == c.train[0].target);
  // Windows of one clip share a source position.
  CHECK(a.train[0].target == a.train[4].target);
  CHECK_FALSE(a.train[0].target == a.train[5].target);

  es.clips_per_epoch = 5;
  const auto d = generate_epoch(corpus, geom, spec, idiap_source_box(), es, 42, 0, 1);
  CHECK(d.sampled_with_replacement);
}

TEST_CASE("dataset cache round trip") {
  const auto geom = build_idiap_geometry({.mic_subset = kIdiapFourMicSubset});
  std::vector<AnechoicClip> corpus{speech_like_clip(6000, 7)};
  EpochSpec es = EpochSpec{}.scaled(0.01);
  es.clips_per_epoch = 1;
  es.windows_per_clip = 4;
  es.window_samples = 128;
  const auto epoch = generate_epoch(corpus, geom, NoiseSpec{}, idiap_source_box(), es, 1, 0);
  std::stringstream buf;
  DatasetWriter w(buf, 4, 128, 16000.0);
  for (const auto& ex : epoch.train) w.write(ex);
  CHECK(w.count() == epoch.train.size());
  const std::string bytes = buf.str();
  CHECK(bytes.size() == 4 + 4 + 4 + 4 + 8 + epoch.train.size() * (24 + 4 * 128 * 4));

  DatasetHeader h;
  std::istringstream in(bytes);
  const auto back = read_dataset(in, &h);
  CHECK(h.channels == 4);
  CHECK(h.length == 128);
  CHECK(h.sample_rate == 16000.0);
  REQUIRE(back.size() == epoch.train.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].target == epoch.train[i].target);
    for (std::size_t k = 0; k < back[i].window.data().size(); ++k)
      CHECK(back[i].window.data()[k] == static_cast<double>(static_cast<float>(epoch.train[i].window.data()[k])));
  }

  std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_dataset(truncated), FormatError);
  std::istringstream wrong("XXXX" + bytes.substr(4));
  CHECK_THROWS_AS(read_dataset(wrong), FormatError);
}

TEST_CASE("noise config JSON") {
  NoiseSpec n;
  n.snr_db = 7.5;
  n.noise_mode = NoiseGainMode::kFixedGain;
  n.noise_gain = 0.02;
  const NoiseSpec back = noise_spec_from_json_text(noise_spec_to_json_text(n));
  CHECK(back.snr_db == 7.5);
  CHECK(back.noise_mode == NoiseGainMode::kFixedGain);
  CHECK(back.noise_gain == 0.02);
  CHECK(back.tone_freq_hi == 30.0);
  CHECK(noise_spec_from_json_text(R"({"gain_lo":0.5,"gain_hi":0.9})").gain_lo == 0.5);
  CHECK_THROWS_AS(noise_spec_from_json_text(R"({"snr":3})"), ConfigError);
  CHECK_THROWS_AS(noise_spec_from_json_text(R"({"noise_mode":"loud"})"), ConfigError);
  CHECK_THROWS_AS(noise_spec_from_json_text(R"({"tone_freq_lo":40})"), ConfigError);
  CHECK_THROWS_AS(noise_spec_from_json_text("[1]"), ConfigError);
}
