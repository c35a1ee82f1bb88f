// Writes stand-in inputs for smoke runs: a synthetic voice corpus and simulated recorded sequences.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "asl/errors.hpp"
#include "asl/fixtures.hpp"
#include "asl/ingestion.hpp"

namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw asl::MissingInputError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_corpus(const fs::path& out, std::size_t clips, double seconds, std::uint64_t seed) {
  fs::create_directories(out);
  const auto samples = static_cast<std::size_t>(seconds * 16000.0);
  std::ofstream list(out / "corpus.txt");
  const auto corpus = asl::synthetic_corpus(clips, samples, seed);
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "clip_%03zu.wav", k);
    asl::write_wav((out / name).string(), corpus[k].samples, corpus[k].sample_rate);
    list << name << '\n';
  }
  std::cout << "corpus: " << (out / "corpus.txt").string() << " (" << clips << " clips)\n";
}

void write_sequence(const fs::path& out, const asl::RecordedSequenceSpec& spec, const asl::IdiapConfig& gcfg) {
  const asl::ArrayGeometry geom = asl::build_idiap_geometry(gcfg);
  const asl::Sequence seq = asl::simulate_recorded_sequence(geom, asl::idiap_source_box(), spec);
  const fs::path dir = out / spec.id;
  fs::create_directories(dir);
  asl::SequenceManifest m;
  m.id = spec.id;
  m.description = "simulated stand-in";
  for (std::size_t i = 0; i < geom.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "mic%02d.wav", geom.mic_ids()[i]);
    asl::write_wav((dir / name).string(), seq.channels[i], seq.sample_rate);
    m.wavs.push_back((dir / name).string());
  }
  std::ofstream((dir / (spec.id + ".gt")).string()) << asl::format_ground_truth(seq.track);
  m.ground_truth = (dir / (spec.id + ".gt")).string();
  asl::write_sequence_manifest((out / (spec.id + ".json")).string(), m);
  std::cout << "sequence: " << (out / (spec.id + ".json")).string() << " (" << seq.track.records.size()
            << " frames)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic stand-ins for the corpus and the recorded sequences", "asl-fixtures"};
  app.require_subcommand(1);
  std::string out;
  std::uint64_t seed = 1;
  std::size_t clips = 8;
  double seconds = 4.0;
  auto* corpus = app.add_subcommand("corpus", "Synthetic voice clips plus a corpus manifest");
  corpus->add_option("--out", out, "Output directory")->required();
  corpus->add_option("--clips", clips, "Number of clips");
  corpus->add_option("--seconds", seconds, "Clip duration");
  corpus->add_option("--seed", seed, "Seed");

  asl::RecordedSequenceSpec spec;
  std::string noise_path, geometry_path;
  auto* sequence = app.add_subcommand("sequence", "A simulated recorded sequence with annotations and manifest");
  sequence->add_option("--out", out, "Output directory")->required();
  sequence->add_option("--id", spec.id, "Sequence id");
  sequence->add_option("--duration", spec.duration_s, "Duration in seconds");
  sequence->add_option("--dwell", spec.dwell_s, "Seconds per speaker position");
  sequence->add_option("--seed", spec.seed, "Seed");
  sequence->add_option("--noise", noise_path, "Noise settings JSON (conditions of this recording)");
  sequence->add_option("--geometry", geometry_path, "Geometry JSON");
  CLI11_PARSE(app, argc, argv);
  try {
    if (corpus->parsed()) {
      write_corpus(out, clips, seconds, seed);
    } else {
      if (!noise_path.empty()) spec.noise = asl::noise_spec_from_json_text(slurp(noise_path));
      asl::IdiapConfig g;
      g.mic_subset = asl::kIdiapFourMicSubset;
      if (!geometry_path.empty()) g = asl::load_geometry_config(geometry_path);
      write_sequence(out, spec, g);
    }
  } catch (const std::exception& e) {
    std::cerr << "asl-fixtures: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
