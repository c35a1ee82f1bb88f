#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "asl/errors.hpp"
#include "asl/ingestion.hpp"

using namespace asl;
namespace fs = std::filesystem;

namespace {

std::string le16(unsigned v) { return {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)}; }
std::string le32(unsigned v) { return le16(v & 0xffff) + le16(v >> 16); }

// Hand-assembled header so the parser is not checked against its own encoder.
std::string wav_bytes(unsigned channels, unsigned bits, unsigned rate, const std::string& data, unsigned format = 1) {
  std::string fmt = le16(format) + le16(channels) + le32(rate) + le32(rate * channels * bits / 8) +
                    le16(channels * bits / 8) + le16(bits);
  std::string body = "WAVEfmt " + le32(16) + fmt + "data" + le32(static_cast<unsigned>(data.size())) + data;
  return "RIFF" + le32(static_cast<unsigned>(body.size())) + body;
}

fs::path temp_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("asl_ingestion_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

}  // namespace

TEST_CASE("four-sample PCM fixture decodes to exact values") {
  const std::string data = le16(0) + le16(16384) + le16(0x8000) + le16(0x7fff);
  const WavData w = parse_wav(wav_bytes(1, 16, 16000, data));
  CHECK(w.sample_rate == 16000.0);
  REQUIRE(w.samples.size() == 4);
  CHECK(w.samples[0] == 0.0);
  CHECK(w.samples[1] == 0.5);
  CHECK(w.samples[2] == -1.0);
  CHECK(w.samples[3] == 32767.0 / 32768.0);
}

TEST_CASE("unknown chunks before data are skipped") {
  const std::string data = le16(16384);
  std::string b = wav_bytes(1, 16, 16000, data);
  const std::string list = "LIST" + le32(3) + "abc" + std::string(1, '\0');
  b.insert(36, list);
  const WavData w = parse_wav(b);
  REQUIRE(w.samples.size() == 1);
  CHECK(w.samples[0] == 0.5);
}

TEST_CASE("unsupported or malformed wav data is rejected") {
  const std::string data = le16(1) + le16(2);
  CHECK_THROWS_AS(parse_wav(wav_bytes(2, 16, 16000, data)), FormatError);
  CHECK_THROWS_AS(parse_wav(wav_bytes(1, 8, 16000, data)), FormatError);
  CHECK_THROWS_AS(parse_wav(wav_bytes(1, 16, 16000, data, 3)), FormatError);
  CHECK_THROWS_AS(parse_wav("RIFX0000WAVE"), FormatError);
  CHECK_THROWS_AS(parse_wav(wav_bytes(1, 16, 44100, data), "x", 16000.0), FormatError);

  std::string cut = wav_bytes(1, 16, 16000, data);
  cut.resize(cut.size() - 1);
  try {
    parse_wav(cut, "cut.wav");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("cut.wav") != std::string::npos);
    CHECK(msg.find("byte offset " + std::to_string(cut.size())) != std::string::npos);
  }
}

TEST_CASE("encode and parse round trip is exact for quantized samples") {
  std::vector<double> x = {0.0, 0.25, -0.25, 0.999, -1.0, 2.0, -3.0, 1e-6};
  const WavData w = parse_wav(encode_wav(x, 16000.0));
  REQUIRE(w.samples.size() == x.size());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(w.samples[i] == quantize_pcm16(x[i]));
  CHECK(w.samples[5] == 32767.0 / 32768.0);
  CHECK(w.samples[6] == -1.0);
  CHECK(w.samples[7] == 0.0);
}

TEST_CASE("read_wav reports missing files") { CHECK_THROWS_AS(read_wav("/nonexistent/a.wav"), MissingInputError); }

TEST_CASE("ground truth parses records and skips comments") {
  std::istringstream in("# t x y z s\n0 1 2 1.2 1\n\n40 1.5 2 1.2 0\n");
  const auto t = parse_ground_truth(in);
  REQUIRE(t.records.size() == 2);
  CHECK(t.records[1].t_ms == 40);
  CHECK(t.records[1].position == Position{1.5, 2, 1.2});
  CHECK_FALSE(t.records[1].speaking);
  CHECK(t.speaking_count() == 1);
}

TEST_CASE("ground truth errors name the offending line") {
  auto err = [](const std::string& text) {
    std::istringstream in(text);
    try {
      parse_ground_truth(in, "gt.txt");
    } catch (const FormatError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(err("0 1 2 3 1\n40 1 2 1\n").find("gt.txt:2") != std::string::npos);
  CHECK(err("0 1 2 3 1\n40 1 x 3 1\n").find("gt.txt:2") != std::string::npos);
  CHECK(err("0 1 2 3 2\n").find("gt.txt:1") != std::string::npos);
  CHECK(err("0 1 2 3 1\n# c\n0 1 2 3 1\n").find("gt.txt:3") != std::string::npos);
  CHECK(err("40 1 2 3 1\n0 1 2 3 1\n").find("does not increase") != std::string::npos);
}

TEST_CASE("ground truth transform and room check") {
  GroundTruthOptions o;
  o.transform.translation = {1.0, 0.0, 0.0};
  o.room = SourceBox{{0, 0, 0}, {2, 2, 2}};
  std::istringstream in("0 0.5 1 1 1\n40 1.5 1 1 1\n");
  const auto t = parse_ground_truth(in, "gt", o);
  CHECK(t.records[0].position.x == 1.5);
  REQUIRE(t.outside_room.size() == 1);
  CHECK(t.outside_room[0] == 1);
}

TEST_CASE("formatted ground truth parses back to the same track") {
  std::istringstream in("0 0.1 0.2 1.3 1\n40 3.5999999999999996 8.2 0.92 0\n");
  const auto t = parse_ground_truth(in);
  const std::string text = format_ground_truth(t);
  std::istringstream again(text);
  CHECK(parse_ground_truth(again).records == t.records);
  CHECK(text == "0 0.1 0.2 1.3 1\n40 3.5999999999999996 8.2 0.92 0\n");
}

TEST_CASE("identity conversion of canonical annotations is byte identical") {
  const std::string canonical = "0 0.1 0.2 1.3 1\n40 1 2 1.25 0\n80 1.125 2 1.25 1\n";
  const auto m = annotation_mapping_from_json_text(R"({"columns":["t","x","y","z","speaking"]})");
  std::istringstream in(canonical);
  ConversionReport rep;
  CHECK(convert_annotations(in, m, &rep) == canonical);
  CHECK_FALSE(rep.resampled);
  CHECK(rep.raw_shift_ms == 40.0);
  CHECK(rep.warnings.empty());
}

TEST_CASE("conversion maps units, scale and ignored columns") {
  const auto m = annotation_mapping_from_json_text(
      R"({"columns":["ignore","t","x","y","z"],"time_unit":"frame","frame_rate_hz":25,
          "position_scale":0.01,"delimiter":",","skip_lines":1,"speaking_default":false})");
  std::istringstream in("id,frame,x,y,z\nA,0,100,200,125\nA,1,150,200,125\n");
  ConversionReport rep;
  CHECK(convert_annotations(in, m, &rep) == "0 1 2 1.25 0\n40 1.5 2 1.25 0\n");
  CHECK(rep.raw_records == 2);
}

TEST_CASE("conversion resamples a mismatched frame grid by nearest record") {
  const auto m = annotation_mapping_from_json_text(R"({"columns":["t","x","y","z"],"time_unit":"s"})");
  std::ostringstream raw;
  for (int i = 0; i <= 12; ++i) raw << i * 0.01 << ' ' << i << " 0 1\n";
  std::istringstream in(raw.str());
  ConversionReport rep;
  const std::string out = convert_annotations(in, m, &rep);
  CHECK(rep.resampled);
  REQUIRE(rep.warnings.size() == 1);
  CHECK(rep.output_records == 4);
  CHECK(out == "0 0 0 1 1\n40 4 0 1 1\n80 8 0 1 1\n120 12 0 1 1\n");
}

TEST_CASE("conversion rejects unmapped columns and bad mappings") {
  const auto m = annotation_mapping_from_json_text(R"({"columns":["t","x","y","z"]})");
  std::istringstream in("0 1 2 3 1\n");
  CHECK_THROWS_AS(convert_annotations(in, m, nullptr), ConfigError);
  std::istringstream short_row("0 1 2\n");
  CHECK_THROWS_AS(convert_annotations(short_row, m, nullptr), FormatError);
  CHECK_THROWS_AS(annotation_mapping_from_json_text(R"({"columns":["t","x","y"]})"), ConfigError);
  CHECK_THROWS_AS(annotation_mapping_from_json_text(R"({"columns":["t","x","y","z"],"bogus":1})"), ConfigError);
  CHECK_THROWS_AS(annotation_mapping_from_json_text(R"({"columns":["t","x","y","z","w"]})"), ConfigError);
  CHECK_THROWS_AS(annotation_mapping_from_json_text("{"), ConfigError);
}

TEST_CASE("sequence manifest round trip and load") {
  const fs::path d = temp_dir("seq");
  const auto geom = build_idiap_geometry(IdiapConfig{kIdiapFourMicSubset, {}});
  std::vector<std::string> wavs;
  for (std::size_t i = 0; i < geom.size(); ++i) {
    const fs::path p = d / ("ch" + std::to_string(i) + ".wav");
    std::vector<double> x(1000 + (i == 0 ? 10 : 0), 0.25);
    write_wav(p.string(), x, 16000.0);
    wavs.push_back(p.string());
  }
  write_text(d / "gt.txt", "0 1 2 1.2 1\n40 1 2 1.2 1\n");
  SequenceManifest m{"seqA", wavs, (d / "gt.txt").string(), "spk", "test"};
  write_sequence_manifest((d / "seq.json").string(), m);
  const auto back = read_sequence_manifest((d / "seq.json").string());
  CHECK(back.id == "seqA");
  CHECK(back.wavs == wavs);
  const auto s = load_sequence(back, geom);
  REQUIRE(s.channels.size() == geom.size());
  for (const auto& c : s.channels) CHECK(c.size() == 1000);
  CHECK(s.track.records.size() == 2);

  CHECK_THROWS_AS(load_sequence(back, geom, {}, 5), FormatError);
  SequenceManifest fewer = back;
  fewer.wavs.pop_back();
  CHECK_THROWS_AS(load_sequence(fewer, geom), ConfigError);

  write_text(d / "bad.json", R"({"id":"x","wavs":["ch0.wav"],"ground_truth":"gt.txt","extra":1})");
  CHECK_THROWS_AS(read_sequence_manifest((d / "bad.json").string()), ConfigError);
  write_text(d / "missing.json", R"({"id":"x","wavs":["nope.wav"],"ground_truth":"gt.txt"})");
  CHECK_THROWS_AS(read_sequence_manifest((d / "missing.json").string()), MissingInputError);
  fs::remove_all(d);
}

TEST_CASE("corpus manifest resolves relative paths") {
  const fs::path d = temp_dir("corpus");
  write_wav((d / "a.wav").string(), std::vector<double>(64, 0.5), 16000.0);
  write_text(d / "corpus.txt", "# clips\na.wav\n\n");
  const auto clips = read_corpus_manifest((d / "corpus.txt").string());
  REQUIRE(clips.size() == 1);
  CHECK(clips[0].samples.size() == 64);
  CHECK(clips[0].samples[3] == 0.5);
  write_text(d / "empty.txt", "# nothing\n");
  CHECK_THROWS_AS(read_corpus_manifest((d / "empty.txt").string()), MissingInputError);
  fs::remove_all(d);
}
