#include "doctest.h"

#include <cmath>

#include "asl/errors.hpp"
#include "asl/fixtures.hpp"
#include "asl/training.hpp"

using namespace asl;

namespace {

ArrayGeometry four_mic() { return build_idiap_geometry({.mic_subset = kIdiapFourMicSubset}); }

TrainConfig tiny_config() {
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 6;
  c.clips_per_epoch = 2;
  c.windows_per_clip = 10;
  c.seed = 5;
  return c;
}

/// Sequence whose sample values encode (channel, index) so cut windows can be checked exactly.
Sequence ramp_sequence(std::size_t samples) {
  Sequence s;
  s.manifest.id = "ramp";
  s.sample_rate = 16000.0;
  for (std::size_t c = 0; c < 4; ++c) {
    std::vector<double> x(samples);
    for (std::size_t n = 0; n < samples; ++n) x[n] = static_cast<double>(c * 100000 + n);
    s.channels.push_back(x);
  }
  return s;
}

RealWindowSet small_real_set(const std::string& id, std::uint64_t seed) {
  RecordedSequenceSpec spec;
  spec.id = id;
  spec.duration_s = 0.8;
  spec.dwell_s = 0.4;
  spec.seed = seed;
  const Sequence seq = simulate_recorded_sequence(four_mic(), idiap_source_box(), spec);
  return extract_real_windows(seq, 1280);
}

}  // namespace

TEST_CASE("window lengths convert to whole sample counts") {
  TrainConfig c;
  for (auto [ms, n] : {std::pair{80.0, 1280u}, {160.0, 2560u}, {320.0, 5120u}}) {
    c.window_ms = ms;
    CHECK(c.window_samples(16000.0) == n);
  }
  c.window_ms = 80.03;
  CHECK_THROWS_AS(c.window_samples(16000.0), ConfigError);
}

TEST_CASE("default epoch holds 7200 training and 800 validation windows") {
  const TrainConfig c;
  const EpochSpec es = c.epoch_spec(16000.0);
  CHECK(es.train_count() == 7200);
  CHECK(es.validation_count() == 800);
  CHECK(c.epochs == 200);
  CHECK(c.batch_size == 100);
  CHECK_NOTHROW(c.validate(16000.0));
}

TEST_CASE("config validation and JSON round trip") {
  TrainConfig c = tiny_config();
  c.batch_size = 100;
  CHECK_THROWS_AS(c.validate(16000.0), ConfigError);
  c = tiny_config();
  c.adam.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(16000.0), ConfigError);

  c = tiny_config();
  c.precision = nn::Precision::kFloat64;
  c.adam.learning_rate = 3e-4;
  const TrainConfig back = train_config_from_json_text(train_config_to_json_text(c));
  CHECK(train_config_to_json_text(back) == train_config_to_json_text(c));
  CHECK(train_config_hash(back) == train_config_hash(c));
  c.seed = 6;
  CHECK(train_config_hash(back) != train_config_hash(c));
  CHECK_THROWS_AS(train_config_from_json_text(R"({"epoch":3})"), ConfigError);
  CHECK_THROWS_AS(train_config_from_json_text(R"({"precision":"f16"})"), ConfigError);
  CHECK_THROWS_AS(train_config_from_json_text(R"({"epochs":"many"})"), ConfigError);
}

TEST_CASE("pretraining consumes one batch schedule per epoch and is reproducible") {
  const auto geom = four_mic();
  const auto corpus = synthetic_corpus(3, 8000, 1);
  const TrainConfig c = tiny_config();
  std::vector<EpochStats> seen;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochStats& s) { seen.push_back(s); };
  const auto a = pretrain(c, corpus, geom, idiap_source_box(), NoiseSpec{}, hooks);
  REQUIRE(seen.size() == 2);
  // 18 training windows in batches of 6.
  CHECK(seen[0].steps == 3);
  CHECK(a.checkpoint.lineage.optimizer_steps == 6);
  CHECK(a.checkpoint.lineage.seed == 5);
  CHECK(a.checkpoint.lineage.parent_hash == 0);
  CHECK(a.checkpoint.lineage.config_hash == train_config_hash(c));
  CHECK(std::isfinite(seen[1].validation_loss));
  CHECK(a.checkpoint.spec == nn::NetworkSpec::reference_topology(4, 1280));

  TrainConfig threaded = c;
  threaded.workers = 2;
  const auto b = pretrain(threaded, corpus, geom, idiap_source_box(), NoiseSpec{});
  CHECK(a.checkpoint.serialize() == b.checkpoint.serialize());
  CHECK(format_loss_csv(a.history) == format_loss_csv(b.history));
}

TEST_CASE("zero-epoch pretraining returns the untrained initialization") {
  const auto corpus = synthetic_corpus(2, 8000, 1);
  TrainConfig c = tiny_config();
  c.epochs = 0;
  const auto r = pretrain(c, corpus, four_mic(), idiap_source_box(), NoiseSpec{});
  CHECK(r.history.empty());
  CHECK(r.checkpoint.lineage.optimizer_steps == 0);
  // Biases start at zero and any optimizer step would move them.
  const nn::Network<float> net(r.checkpoint.spec);
  const auto& names = net.parameters();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i].name.ends_with("bias"))
      for (double v : r.checkpoint.weights[i]) CHECK(v == 0.0);
  CHECK(pretrain(c, corpus, four_mic(), idiap_source_box(), NoiseSpec{}).checkpoint.serialize() ==
        r.checkpoint.serialize());
}

TEST_CASE("intermediate checkpoints follow the cadence") {
  const auto corpus = synthetic_corpus(2, 8000, 1);
  TrainConfig c = tiny_config();
  c.epochs = 3;
  c.checkpoint_every = 1;
  std::vector<std::size_t> epochs;
  TrainHooks hooks;
  hooks.on_checkpoint = [&](std::size_t e, const nn::Checkpoint& ck) {
    epochs.push_back(e);
    CHECK(ck.lineage.optimizer_steps == 3 * e);
  };
  pretrain(c, corpus, four_mic(), idiap_source_box(), NoiseSpec{}, hooks);
  CHECK(epochs == std::vector<std::size_t>{1, 2});

  TrainHooks stop;
  stop.stop_after = [](const EpochStats& s) { return s.epoch == 2; };
  CHECK(pretrain(c, corpus, four_mic(), idiap_source_box(), NoiseSpec{}, stop).history.size() == 2);
}

TEST_CASE("fixed-sample fitting reduces the loss of a small network") {
  nn::NetworkSpec spec;
  spec.channels = 2;
  spec.length = 32;
  spec.blocks = {{8, 3, 2}, {8, 3, 2}};
  spec.hidden = 32;
  spec.dropout = 0.0;
  std::vector<LabeledExample> data;
  Rng rng = make_rng(3, {});
  std::normal_distribution<double> g(0.0, 1.0);
  for (int k = 0; k < 8; ++k) {
    LabeledExample e;
    e.window = MultichannelWindow(2, 32, 16000.0);
    for (double& v : e.window.data()) v = g(rng);
    e.target = {g(rng), g(rng), g(rng)};
    data.push_back(std::move(e));
  }
  const auto samples = as_samples(data);
  TrainConfig c;
  c.batch_size = 4;
  c.precision = nn::Precision::kFloat64;
  c.adam.learning_rate = 3e-3;
  const auto r = fit_samples(c, spec, 16000.0, samples, samples, 300);
  CHECK(r.history.back().validation_loss < 0.05 * r.history.front().validation_loss);
  const double final_loss = evaluate_loss(r.checkpoint, samples, 3);
  CHECK(final_loss == doctest::Approx(r.history.back().validation_loss).epsilon(1e-12));
  CHECK(evaluate_loss(r.checkpoint, samples, 3) == final_loss);
}

TEST_CASE("a non-finite loss aborts training") {
  nn::NetworkSpec spec;
  spec.channels = 1;
  spec.length = 16;
  spec.blocks = {{4, 3, 2}};
  spec.hidden = 8;
  LabeledExample e;
  e.window = MultichannelWindow(1, 16, 16000.0);
  e.target = {std::nan(""), 0.0, 0.0};
  const std::vector<LabeledExample> data = {e};
  const auto samples = as_samples(data);
  TrainConfig c;
  c.batch_size = 1;
  CHECK_THROWS_AS(fit_samples(c, spec, 16000.0, samples, {}, 1), NumericError);
}

TEST_CASE("real windows end at the frame time") {
  Sequence s = ramp_sequence(4000);
  s.track.records = {{10, {1, 2, 1}, true}, {80, {1, 2, 1}, true}, {120, {1.5, 2, 1}, true},
                     {160, {1, 2, 1}, false}, {200, {2, 2, 1}, true}};
  const RealWindowSet set = extract_real_windows(s, 1280);
  REQUIRE(set.windows.size() == 3);
  CHECK(set.skipped == 1);
  const auto& w0 = set.windows[0];
  CHECK(w0.t_ms == 80);
  CHECK(w0.window.channel(0)[0] == 0.0);
  CHECK(w0.window.channel(0)[1279] == 1279.0);
  CHECK(w0.window.channel(3)[0] == 300000.0);
  // 40 ms shift with an 80 ms window: half of each window repeats in the next.
  const auto& w1 = set.windows[1];
  CHECK(w1.window.channel(0)[0] == 640.0);
  CHECK(w1.window.channel(0)[639] == w0.window.channel(0)[1279]);
  CHECK(w1.target == Position{1.5, 2, 1});
  CHECK(set.windows[2].t_ms == 200);

  CHECK(extract_real_windows(s, 1280, true).windows.size() == 4);
  CHECK(set.sequence_ids() == std::vector<std::string>{"ramp"});
}

TEST_CASE("annotations beyond the audio are rejected") {
  Sequence s = ramp_sequence(4000);
  s.track.records = {{260, {1, 2, 1}, true}};
  CHECK(extract_real_windows(s, 1280).skipped == 1);  // within one frame of the end
  s.track.records = {{400, {1, 2, 1}, true}};
  CHECK_THROWS_AS(extract_real_windows(s, 1280), FormatError);
}

TEST_CASE("fine-tuning contracts") {
  const auto corpus = synthetic_corpus(2, 8000, 1);
  TrainConfig c = tiny_config();
  c.epochs = 1;
  const auto parent = pretrain(c, corpus, four_mic(), idiap_source_box(), NoiseSpec{}).checkpoint;
  RealWindowSet tune = small_real_set("tuneA", 7);
  REQUIRE(tune.windows.size() > 6);

  c.finetune_epochs = 0;
  CHECK(finetune(parent, tune, c, {"test"}).checkpoint.serialize() == parent.serialize());

  c.finetune_epochs = 1;
  const auto tuned = finetune(parent, tune, c, {"test"});
  CHECK(tuned.checkpoint.lineage.parent_hash == parent.content_hash());
  CHECK(tuned.checkpoint.weights != parent.weights);
  REQUIRE(tuned.checkpoint.adam.has_value());
  // Fresh optimizer state: only the fine-tuning steps are counted by Adam.
  CHECK(tuned.checkpoint.adam->steps == tuned.history.front().steps);
  CHECK(tuned.checkpoint.lineage.optimizer_steps == parent.lineage.optimizer_steps + tuned.history.front().steps);
  CHECK(finetune(parent, tune, c, {"test"}).checkpoint.serialize() == tuned.checkpoint.serialize());

  CHECK_THROWS_AS(finetune(parent, tune, c, {"tuneA"}), ConfigError);
  CHECK_THROWS_AS(finetune(parent, RealWindowSet{}, c, {}), MissingInputError);
  RealWindowSet wrong;
  wrong.windows.push_back({MultichannelWindow(4, 640, 16000.0), {}, "x", 0});
  CHECK_THROWS_AS(finetune(parent, wrong, c, {}), ConfigError);
}

TEST_CASE("training from scratch is seeded and guarded") {
  RealWindowSet set = small_real_set("s15", 9);
  TrainConfig c = tiny_config();
  c.epochs = 1;
  const auto a = train_from_scratch(set, c, 4, 16000.0, {"s01"});
  const auto b = train_from_scratch(set, c, 4, 16000.0, {"s01"});
  CHECK(a.checkpoint.serialize() == b.checkpoint.serialize());
  CHECK(a.checkpoint.lineage.parent_hash == 0);
  c.seed = 99;
  CHECK(train_from_scratch(set, c, 4, 16000.0, {"s01"}).checkpoint.serialize() != a.checkpoint.serialize());
  CHECK_THROWS_AS(train_from_scratch(set, c, 4, 16000.0, {"s15"}), ConfigError);
}

TEST_CASE("simulated recorded sequence is annotated every frame") {
  RecordedSequenceSpec spec;
  spec.duration_s = 1.0;
  spec.dwell_s = 0.5;
  const Sequence s = simulate_recorded_sequence(four_mic(), idiap_source_box(), spec);
  CHECK(s.channels.size() == 4);
  CHECK(s.channels[0].size() == 16000);
  REQUIRE(s.track.records.size() == 25);
  CHECK(s.track.records.front().t_ms == 40);
  CHECK(s.track.records.back().t_ms == 1000);
  CHECK(s.track.records[0].position == s.track.records[11].position);
  CHECK_FALSE(s.track.records[0].position == s.track.records[13].position);
  for (const auto& r : s.track.records) CHECK(idiap_source_box().contains(r.position));
}

TEST_CASE("loss CSV layout") {
  std::vector<EpochStats> h = {{1, 3, 0.5, 0.25}, {2, 3, 0.125, std::nan("")}};
  CHECK(format_loss_csv(h) == "epoch,steps,train_loss,validation_loss\n1,3,0.5,0.25\n2,3,0.125,\n");
}
