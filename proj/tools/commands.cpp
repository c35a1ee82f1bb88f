#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <regex>
#include <sstream>

#include "asl/errors.hpp"
#include "asl/evaluation.hpp"
#include "asl/ingestion.hpp"
#include "asl/localize.hpp"
#include "asl/nn/checkpoint.hpp"
#include "asl/signal_sim.hpp"
#include "asl/srp.hpp"
#include "asl/training.hpp"

namespace asl::cli {

namespace fs = std::filesystem;

namespace {

std::string require(const std::string& value, const std::string& what) {
  if (value.empty()) throw ConfigError("missing setting: " + what);
  return value;
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

class Run {
 public:
  Run(RunConfig config, std::ostream& log) : rc_(std::move(config)), log_(log), manifest_(rc_.command) {}

  RunConfig& config() { return rc_; }
  std::ostream& log() { return log_; }
  RunManifest& manifest() { return manifest_; }

  void begin() {
    fs::create_directories(rc_.out);
    std::ofstream f(fs::path(rc_.out) / "run.resolved");
    f << rc_.to_json().dump(2) << '\n';
    if (!f) throw MissingInputError("cannot write to output directory " + rc_.out);
  }

  std::string path(const std::string& name) const { return (fs::path(rc_.out) / name).string(); }

  void write(const std::string& name, const std::string& text) {
    fs::create_directories(fs::path(path(name)).parent_path());
    std::ofstream f(path(name), std::ios::binary);
    f << text;
    if (!f) throw MissingInputError("cannot write " + path(name));
    manifest_.add_output(name);
  }

  void save(const std::string& name, const nn::Checkpoint& ckpt) {
    fs::create_directories(fs::path(path(name)).parent_path());
    ckpt.save(path(name));
    manifest_.add_output(name);
  }

  void finish() { manifest_.write(rc_.out); }

  ArrayGeometry geometry() const {
    try {
      return build_idiap_geometry(rc_.geometry);
    } catch (const std::logic_error& e) {
      throw ConfigError(std::string("geometry: ") + e.what());
    }
  }

  std::size_t window_samples() const { return rc_.training.window_samples(rc_.geometry.sample_rate); }

  std::vector<AnechoicClip> corpus() {
    const std::string manifest_path = require(rc_.inputs.corpus, "inputs.corpus (--corpus)");
    manifest_.add_input("corpus", manifest_path);
    std::ifstream in(manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();
    for (std::string line; std::getline(in, line);) {
      const auto b = line.find_first_not_of(" \t\r");
      if (b == std::string::npos || line[b] == '#') continue;
      const auto e = line.find_last_not_of(" \t\r");
      const fs::path p(line.substr(b, e - b + 1));
      manifest_.add_input("corpus_wav", (p.is_absolute() ? p : base / p).lexically_normal().string());
    }
    return read_corpus_manifest(manifest_path, rc_.geometry.sample_rate);
  }

  Sequence sequence(const std::string& manifest_path, const ArrayGeometry& geom) {
    const SequenceManifest m = read_sequence_manifest(manifest_path);
    manifest_.add_input("sequence", manifest_path);
    for (const auto& w : m.wavs) manifest_.add_input("sequence_wav", w);
    manifest_.add_input("ground_truth", m.ground_truth);
    GroundTruthOptions options;
    options.room = geom.room_box();
    Sequence seq = load_sequence(m, geom, options);
    if (!seq.track.outside_room.empty())
      log_ << "warning: " << m.id << ": " << seq.track.outside_room.size()
           << " annotated positions lie outside the room\n";
    return seq;
  }

  /// Speaking windows of every listed sequence.
  RealWindowSet windows(const std::vector<std::string>& paths, const ArrayGeometry& geom) {
    if (paths.empty()) throw ConfigError("missing setting: inputs.sequences (--sequence)");
    RealWindowSet set;
    for (const auto& p : paths) {
      RealWindowSet one = extract_real_windows(sequence(p, geom), window_samples());
      log_ << (one.windows.empty() ? std::string("?") : one.windows.front().sequence) << ": "
           << one.windows.size() << " windows, " << one.skipped << " frames skipped\n";
      set.append(std::move(one));
    }
    return set;
  }

  nn::Checkpoint checkpoint() {
    const std::string p = require(rc_.inputs.checkpoint, "inputs.checkpoint (--checkpoint)");
    manifest_.add_input("checkpoint", p);
    return nn::Checkpoint::load(p);
  }

  TrainHooks hooks(std::size_t total_epochs) {
    TrainHooks h;
    h.on_epoch = [this, total_epochs](const EpochStats& s) {
      log_ << "epoch " << s.epoch << "/" << total_epochs << "  train " << fmt("%.6g", s.train_loss);
      if (!std::isnan(s.validation_loss)) log_ << "  validation " << fmt("%.6g", s.validation_loss);
      log_ << '\n';
    };
    if (rc_.training.checkpoint_every > 0) {
      h.on_checkpoint = [this](std::size_t epoch, const nn::Checkpoint& c) {
        char name[64];
        std::snprintf(name, sizeof name, "checkpoints/epoch_%04zu.aslc", epoch);
        save(name, c);
      };
    }
    return h;
  }

  void save_training(const TrainResult& r) {
    save("model.aslc", r.checkpoint);
    write("loss.csv", format_loss_csv(r.history));
    log_ << "checkpoint " << path("model.aslc") << " (" << r.checkpoint.window_ms() << " ms, "
         << nn::precision_name(r.checkpoint.precision) << ")\n";
  }

 private:
  RunConfig rc_;
  std::ostream& log_;
  RunManifest manifest_;
};

// Histogram rows `lo,hi,count` over [lo, hi] with `bins` equal bins.
std::string histogram_csv(const std::string& header, const std::vector<double>& values, double lo, double hi,
                          std::size_t bins) {
  std::vector<std::size_t> counts(bins, 0);
  const double width = hi > lo ? (hi - lo) / static_cast<double>(bins) : 1.0;
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    auto b = static_cast<std::ptrdiff_t>(std::floor((v - lo) / width));
    b = std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(bins) - 1);
    ++counts[static_cast<std::size_t>(b)];
  }
  std::string out = header + '\n';
  char buf[96];
  for (std::size_t b = 0; b < bins; ++b) {
    std::snprintf(buf, sizeof buf, "%.4f,%.4f,%zu\n", lo + width * static_cast<double>(b),
                  lo + width * static_cast<double>(b + 1), counts[b]);
    out += buf;
  }
  return out;
}

void cmd_simulate(Run& run) {
  RunConfig& rc = run.config();
  const ArrayGeometry geom = run.geometry();
  const std::vector<AnechoicClip> corpus = run.corpus();
  const EpochSpec spec = rc.training.epoch_spec(geom.sample_rate());
  const EpochData data =
      generate_epoch(corpus, geom, rc.noise, rc.source_box, spec, rc.seed, rc.inputs.epoch, rc.workers);
  if (data.sampled_with_replacement)
    run.log() << "warning: corpus has fewer clips than clips_per_epoch; clips were reused\n";

  auto write_cache = [&](const std::string& name, const std::vector<LabeledExample>& examples) {
    std::ostringstream bytes;
    DatasetWriter w(bytes, geom.size(), spec.window_samples, geom.sample_rate());
    for (const auto& e : examples) w.write(e);
    run.write(name, bytes.str());
  };
  write_cache("train.asld", data.train);
  write_cache("validation.asld", data.validation);

  std::vector<double> snr, tone;
  std::string rows = "split,index,x,y,z,tone_freq_hz,tone_phase,noise_gain,snr_db,clip,offset\n";
  char buf[256];
  auto add = [&](const char* split, const std::vector<LabeledExample>& examples) {
    for (std::size_t k = 0; k < examples.size(); ++k) {
      const auto& e = examples[k];
      const auto& c = e.info.contamination;
      snr.push_back(c.realized_snr_db);
      tone.push_back(c.tone_freq);
      std::snprintf(buf, sizeof buf, "%s,%zu,%.6f,%.6f,%.6f,%.9g,%.9g,%.9g,%.9g,%zu,%zu\n", split, k, e.target.x,
                    e.target.y, e.target.z, c.tone_freq, c.tone_phase, c.noise_gain, c.realized_snr_db,
                    e.info.clip_index, e.info.offset);
      rows += buf;
    }
  };
  add("train", data.train);
  add("validation", data.validation);
  run.write("examples.csv", rows);

  std::vector<double> finite_snr;
  for (double s : snr)
    if (std::isfinite(s)) finite_snr.push_back(s);
  nlohmann::json stats = {{"examples", snr.size()},
                          {"train", data.train.size()},
                          {"validation", data.validation.size()},
                          {"channels", geom.size()},
                          {"window_samples", spec.window_samples},
                          {"sampled_with_replacement", data.sampled_with_replacement}};
  if (!tone.empty()) {
    double sum = 0.0;
    for (double t : tone) sum += t;
    stats["tone_freq_hz"] = {{"min", *std::min_element(tone.begin(), tone.end())},
                             {"max", *std::max_element(tone.begin(), tone.end())},
                             {"mean", sum / static_cast<double>(tone.size())}};
    run.write("tone_histogram.csv",
              histogram_csv("freq_lo_hz,freq_hi_hz,count", tone, rc.noise.tone_freq_lo, rc.noise.tone_freq_hi, 10));
  }
  if (!finite_snr.empty()) {
    double sum = 0.0;
    for (double s : finite_snr) sum += s;
    const double lo = std::floor(*std::min_element(finite_snr.begin(), finite_snr.end()));
    const double hi = std::ceil(*std::max_element(finite_snr.begin(), finite_snr.end()));
    stats["snr_db"] = {{"target", rc.noise.noise_mode == NoiseGainMode::kSnrDb ? nlohmann::json(rc.noise.snr_db)
                                                                               : nlohmann::json(nullptr)},
                       {"mean", sum / static_cast<double>(finite_snr.size())},
                       {"min", lo},
                       {"max", hi}};
    const auto bins = static_cast<std::size_t>(std::max(1.0, (hi - lo) / 0.25));
    run.write("snr_histogram.csv", histogram_csv("snr_lo_db,snr_hi_db,count", finite_snr, lo, hi, bins));
  }
  run.write("stats.json", stats.dump(2) + "\n");
  run.log() << "simulated " << data.train.size() << " train + " << data.validation.size()
            << " validation windows into " << rc.out << '\n';
}

std::vector<LabeledExample> read_cache(Run& run, const std::string& path, const ArrayGeometry& geom,
                                       std::size_t window_samples) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot open dataset cache: " + path);
  run.manifest().add_input("dataset", path);
  DatasetHeader h;
  std::vector<LabeledExample> examples = read_dataset(in, &h);
  if (h.channels != geom.size() || h.length != window_samples || h.sample_rate != geom.sample_rate())
    throw ConfigError(path + ": cache holds " + std::to_string(h.channels) + "x" + std::to_string(h.length) +
                      " windows, the run expects " + std::to_string(geom.size()) + "x" +
                      std::to_string(window_samples));
  return examples;
}

void cmd_train(Run& run) {
  RunConfig& rc = run.config();
  const ArrayGeometry geom = run.geometry();
  const std::size_t n = run.window_samples();
  rc.training.validate(geom.sample_rate());
  if (!rc.inputs.dataset.empty()) {
    const fs::path dir(rc.inputs.dataset);
    const auto train = read_cache(run, (dir / "train.asld").string(), geom, n);
    std::vector<LabeledExample> validation;
    if (fs::exists(dir / "validation.asld")) validation = read_cache(run, (dir / "validation.asld").string(), geom, n);
    run.log() << "training on cached windows: " << train.size() << " train, " << validation.size()
              << " validation\n";
    const auto ts = as_samples(train), vs = as_samples(validation);
    const auto spec = nn::NetworkSpec::reference_topology(geom.size(), n);
    run.save_training(
        fit_samples(rc.training, spec, geom.sample_rate(), ts, vs, rc.training.epochs, run.hooks(rc.training.epochs)));
  } else {
    const auto corpus = run.corpus();
    run.save_training(pretrain(rc.training, corpus, geom, rc.source_box, rc.noise, run.hooks(rc.training.epochs)));
  }
}

void cmd_finetune(Run& run, const nn::Checkpoint& parent) {
  RunConfig& rc = run.config();
  const ArrayGeometry geom = run.geometry();
  const RealWindowSet windows = run.windows(rc.inputs.sequences, geom);
  run.save_training(
      finetune(parent, windows, rc.training, rc.inputs.test_ids, run.hooks(rc.training.finetune_epochs)));
}

void cmd_train_scratch(Run& run) {
  RunConfig& rc = run.config();
  const ArrayGeometry geom = run.geometry();
  rc.training.validate(geom.sample_rate());
  const RealWindowSet windows = run.windows(rc.inputs.sequences, geom);
  run.save_training(train_from_scratch(windows, rc.training, geom.size(), geom.sample_rate(), rc.inputs.test_ids,
                                       run.hooks(rc.training.epochs)));
}

std::string report_name(const TrackReport& r) {
  return r.sequence + "." + r.method + "." + std::to_string(r.window_ms) + "ms";
}

void check_tag(const std::string& tag, const char* what) {
  if (tag.empty() || tag.find_first_of("./\\ ,") != std::string::npos)
    throw ConfigError(std::string(what) + " '" + tag + "' must be non-empty without '.', '/', ',' or spaces");
}

void write_track(Run& run, const TrackReport& report, std::string& summary) {
  check_tag(report.sequence, "sequence id");
  run.write(report_name(report) + ".csv", format_report_csv(report));
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s,%s,%d,%zu,%.6f\n", report.sequence.c_str(), report.method.c_str(),
                report.window_ms, report.records.size(), motp(report));
  summary += buf;
  run.log() << report.sequence << " " << report.method << " " << report.window_ms << " ms: MOTP "
            << fmt("%.3f", motp(report)) << " m over " << report.records.size() << " frames\n";
}

void cmd_eval_cnn(Run& run, const nn::Checkpoint& ckpt) {
  RunConfig& rc = run.config();
  const ArrayGeometry geom = run.geometry();
  const std::string method = rc.inputs.method.empty() ? "CNN" : rc.inputs.method;
  check_tag(method, "method");
  std::vector<RealWindowSet> sets;
  for (const auto& p : rc.inputs.sequences) sets.push_back(run.windows({p}, geom));
  if (sets.empty()) throw ConfigError("missing setting: inputs.sequences (--sequence)");
  std::string summary = "sequence,method,window_ms,frames,motp_m\n";
  for (const auto& set : sets) write_track(run, cnn_track(ckpt, set, method), summary);
  run.write("motp.csv", summary);
}

void cmd_eval_srp(Run& run) {
  RunConfig& rc = run.config();
  ArrayGeometry geom = run.geometry();
  if (rc.srp.all_pairs) geom.set_pairs(geom.all_pairs());
  std::vector<RealWindowSet> sets;
  for (const auto& p : rc.inputs.sequences) sets.push_back(run.windows({p}, geom));
  if (sets.empty()) throw ConfigError("missing setting: inputs.sequences (--sequence)");
  const SearchGrid grid(geom, rc.source_box, rc.srp.resolution, rc.srp.search_z);
  run.log() << "SRP grid: " << grid.size() << " cells, " << grid.pairs().size() << " pairs\n";
  const std::string method = rc.inputs.method.empty() ? "SRP" : rc.inputs.method;
  check_tag(method, "method");
  std::string summary = "sequence,method,window_ms,frames,motp_m\n";
  for (const auto& set : sets) {
    const auto frames = srp_frames(set, grid, rc.srp.options);
    TrackReport rep;
    rep.sequence = set.windows.front().sequence;
    rep.method = method;
    rep.window_ms = static_cast<int>(std::lround(rc.window_ms));
    for (std::size_t k = 0; k < frames.size(); ++k)
      rep.records.push_back({frames[k].t_ms, frames[k].position, set.windows[k].target});
    rep.validate();
    run.write(report_name(rep) + ".frames.csv", format_srp_frames_csv(frames));
    write_track(run, rep, summary);
  }
  run.write("motp.csv", summary);
}

// Report files are named <sequence>.<method>.<window>ms.csv.
std::vector<std::string> collect_reports(const std::vector<std::string>& paths) {
  static const std::regex name(R"(^[^.]+\.[^.]+\.[0-9]+ms\.csv$)");
  std::vector<std::string> files;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      std::vector<std::string> found;
      for (const auto& entry : fs::directory_iterator(p))
        if (entry.is_regular_file() && std::regex_match(entry.path().filename().string(), name))
          found.push_back(entry.path().string());
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::exists(p)) {
      if (!std::regex_match(fs::path(p).filename().string(), name))
        throw ConfigError("report file name must be <sequence>.<method>.<window>ms.csv: " + p);
      files.push_back(p);
    } else {
      throw MissingInputError("report not found: " + p);
    }
  }
  if (files.empty()) throw MissingInputError("no report files found");
  return files;
}

void cmd_report(Run& run) {
  RunConfig& rc = run.config();
  if (rc.inputs.reports.empty()) throw ConfigError("missing setting: inputs.reports (--report)");
  std::vector<TrackReport> reports;
  for (const auto& file : collect_reports(rc.inputs.reports)) {
    run.manifest().add_input("report", file);
    TrackReport r = read_report_csv(file);
    const std::string stem = fs::path(file).stem().string();
    const auto a = stem.find('.'), b = stem.find('.', a + 1);
    r.sequence = stem.substr(0, a);
    r.method = stem.substr(a + 1, b - a - 1);
    r.window_ms = std::stoi(stem.substr(b + 1));
    reports.push_back(std::move(r));
  }
  // Reference method first, then methods in the order their files were given.
  std::map<std::string, std::size_t> method_rank;
  for (const auto& r : reports) method_rank.emplace(r.method, method_rank.size() + 1);
  method_rank[MatrixOptions{}.reference_method] = 0;
  std::stable_sort(reports.begin(), reports.end(), [&](const TrackReport& x, const TrackReport& y) {
    return method_rank[x.method] < method_rank[y.method];
  });
  std::vector<MatrixEntry> entries;
  std::map<std::pair<std::string, int>, std::vector<TrackReport>> groups;
  for (auto& r : reports) groups[{r.sequence, r.window_ms}].push_back(std::move(r));
  for (auto& [key, group] : groups) {
    std::size_t before = 0;
    for (const auto& r : group) before = std::max(before, r.records.size());
    restrict_to_common_frames(group);
    if (group.front().records.size() != before)
      run.log() << key.first << " " << key.second << " ms: scored on " << group.front().records.size()
                << " frames common to all methods\n";
    for (const auto& r : group) entries.push_back({r.sequence, r.method, r.window_ms, motp(r), r.records.size()});
  }
  MatrixOptions options;
  options.title = rc.inputs.title.empty() ? "measured" : rc.inputs.title;
  options.show_reference = rc.inputs.show_reference;
  options.average = rc.inputs.average == "mean" ? AverageMode::kMean : AverageMode::kPooled;
  const ResultMatrix measured = build_matrix(entries, options);
  std::string text = format_matrix_text(measured);
  run.write("matrix.csv", format_matrix_csv(measured));
  run.write("matrix.txt", text);
  if (rc.inputs.table > 0) {
    const std::string ref = rc.inputs.reference.empty() ? std::string(ASL_DEFAULT_DATA_DIR "/reference_constants.csv")
                                                        : rc.inputs.reference;
    const std::string frames_path =
        rc.inputs.frames.empty() ? std::string(ASL_DEFAULT_DATA_DIR "/sequence_frames.csv") : rc.inputs.frames;
    if (!fs::exists(ref)) throw MissingInputError("reference constants not found: " + ref);
    if (!fs::exists(frames_path)) throw MissingInputError("sequence frame counts not found: " + frames_path);
    run.manifest().add_input("reference", ref);
    run.manifest().add_input("frames", frames_path);
    const ResultMatrix published =
        published_table(read_reference_constants(ref), rc.inputs.table, read_sequence_frames(frames_path));
    const std::string published_text = format_matrix_text(published);
    run.write("published.csv", format_matrix_csv(published));
    run.write("published.txt", published_text);
    text += "\n" + published_text;
  }
  run.log() << text;
}

void cmd_convert_annotations(Run& run) {
  RunConfig& rc = run.config();
  const std::string raw = require(rc.inputs.raw, "inputs.raw (--raw)");
  const std::string mapping_path = require(rc.inputs.mapping, "inputs.mapping (--mapping)");
  run.manifest().add_input("raw", raw);
  run.manifest().add_input("mapping", mapping_path);
  const AnnotationMapping mapping = load_annotation_mapping(mapping_path);
  std::ifstream in(raw);
  if (!in) throw MissingInputError("cannot open raw annotations: " + raw);
  ConversionReport report;
  const std::string text = convert_annotations(in, mapping, &report, raw);
  const std::string name = fs::path(raw).stem().string() + ".gt";
  run.write(name, text);
  for (const auto& w : report.warnings) run.log() << "warning: " << w << '\n';
  const nlohmann::json summary = {{"raw_records", report.raw_records},
                                  {"output_records", report.output_records},
                                  {"raw_shift_ms", report.raw_shift_ms},
                                  {"resampled", report.resampled},
                                  {"warnings", report.warnings}};
  run.write("conversion.json", summary.dump(2) + "\n");
  run.log() << "converted " << report.raw_records << " raw records into " << report.output_records << " frames: "
            << run.path(name) << '\n';
}

// Adopts the checkpoint's window length when none was set, and refuses a disagreeing one.
void match_checkpoint_window(RunConfig& rc, const nn::Checkpoint& ckpt) {
  if (!rc.window_ms_explicit) {
    rc.window_ms = ckpt.window_ms();
    rc.training.window_ms = rc.window_ms;
    rc.window_ms_explicit = true;
  } else if (std::abs(ckpt.window_ms() - rc.window_ms) > 1e-9) {
    throw ConfigError("checkpoint " + rc.inputs.checkpoint + " was trained on " + fmt("%g", ckpt.window_ms()) +
                      " ms windows but the run asks for " + fmt("%g", rc.window_ms) + " ms");
  }
  if (ckpt.sample_rate != rc.geometry.sample_rate)
    throw ConfigError("checkpoint sample rate " + fmt("%g", ckpt.sample_rate) + " Hz differs from the geometry's");
}

}  // namespace

void run_command(RunConfig config, std::ostream& log) {
  Run run(std::move(config), log);
  const std::string cmd = run.config().command;
  std::optional<nn::Checkpoint> ckpt;
  if (cmd == "finetune" || cmd == "eval-cnn") {
    ckpt = run.checkpoint();
    match_checkpoint_window(run.config(), *ckpt);
  }
  run.begin();
  if (cmd == "simulate") {
    cmd_simulate(run);
  } else if (cmd == "train") {
    cmd_train(run);
  } else if (cmd == "finetune") {
    cmd_finetune(run, *ckpt);
  } else if (cmd == "eval-cnn") {
    cmd_eval_cnn(run, *ckpt);
  } else if (cmd == "train-scratch") {
    cmd_train_scratch(run);
  } else if (cmd == "eval-srp") {
    cmd_eval_srp(run);
  } else if (cmd == "report") {
    cmd_report(run);
  } else if (cmd == "convert-annotations") {
    cmd_convert_annotations(run);
  } else {
    throw ConfigError("unknown command '" + cmd + "'");
  }
  run.finish();
}

}  // namespace asl::cli
