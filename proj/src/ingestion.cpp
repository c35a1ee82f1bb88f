#include "asl/ingestion.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "asl/binary_io.hpp"
#include "asl/errors.hpp"

namespace asl {

namespace fs = std::filesystem;

namespace {

std::uint32_t read_le32(std::string_view b, std::size_t at) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(b[at])) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 1])) << 8 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 2])) << 16 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 3])) << 24;
}

std::uint16_t read_le16(std::string_view b, std::size_t at) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(b[at]) |
                                    static_cast<unsigned char>(b[at + 1]) << 8);
}

std::string read_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError(std::string("cannot open ") + what + ": " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path.string() : (base / path).lexically_normal().string();
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size() && std::isfinite(out);
}

bool parse_int(std::string_view s, std::int64_t& out) {
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

std::vector<std::string_view> split_fields(std::string_view line, const std::string& delimiter) {
  std::vector<std::string_view> out;
  if (delimiter.empty()) {
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      const std::size_t start = i;
      while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
  }
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delimiter, start);
    std::string_view field = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    while (!field.empty() && std::isspace(static_cast<unsigned char>(field.front()))) field.remove_prefix(1);
    while (!field.empty() && std::isspace(static_cast<unsigned char>(field.back()))) field.remove_suffix(1);
    out.push_back(field);
    if (pos == std::string_view::npos) break;
    start = pos + delimiter.size();
  }
  return out;
}

bool is_blank_or_comment(std::string_view line) {
  for (char c : line) {
    if (c == '#') return true;
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

RigidTransform transform_from_json(const nlohmann::json& j, const std::string& what) {
  RigidTransform t;
  for (const auto& [key, value] : j.items()) {
    if (key == "translation") {
      if (!value.is_array() || value.size() != 3) throw ConfigError(what + ": translation must be [x,y,z]");
      t.translation = {value[0].get<double>(), value[1].get<double>(), value[2].get<double>()};
    } else if (key == "yaw_deg") {
      t.yaw_rad = value.get<double>() * std::numbers::pi / 180.0;
    } else {
      throw ConfigError(what + ": unknown transform key '" + key + "'");
    }
  }
  return t;
}

}  // namespace

WavData parse_wav(std::string_view b, const std::string& origin, std::optional<double> expected_rate) {
  auto fail = [&](const std::string& msg) { return FormatError(origin + ": " + msg); };
  if (b.size() < 12) throw fail("truncated RIFF header at byte offset " + std::to_string(b.size()));
  if (b.substr(0, 4) != "RIFF" || b.substr(8, 4) != "WAVE") throw fail("not a RIFF/WAVE file");

  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t at = 12;
  while (true) {
    if (at + 8 > b.size()) throw fail("truncated chunk header at byte offset " + std::to_string(b.size()));
    const std::string_view id = b.substr(at, 4);
    const std::uint32_t size = read_le32(b, at + 4);
    const std::size_t body = at + 8;
    if (id == "fmt ") {
      if (size < 16 || body + size > b.size()) throw fail("truncated fmt chunk at byte offset " + std::to_string(b.size()));
      const std::uint16_t format = read_le16(b, body);
      channels = read_le16(b, body + 2);
      rate = read_le32(b, body + 4);
      bits = read_le16(b, body + 14);
      if (format != 1) throw fail("unsupported encoding (format tag " + std::to_string(format) + ", expected PCM)");
      if (channels != 1) throw fail("unsupported channel count " + std::to_string(channels) + " (expected mono)");
      if (bits != 16) throw fail("unsupported sample width " + std::to_string(bits) + " bits (expected 16)");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw fail("data chunk before fmt chunk");
      if (body + size > b.size())
        throw fail("truncated data chunk: declares " + std::to_string(size) + " bytes, data ends at byte offset " +
                   std::to_string(b.size()));
      if (size % 2 != 0) throw fail("data chunk size is not a whole number of samples");
      if (expected_rate && static_cast<double>(rate) != *expected_rate)
        throw fail("sample rate " + std::to_string(rate) + " Hz does not match the expected " +
                   std::to_string(static_cast<long long>(*expected_rate)) + " Hz");
      WavData w;
      w.sample_rate = rate;
      w.samples.resize(size / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i)
        w.samples[i] = static_cast<double>(static_cast<std::int16_t>(read_le16(b, body + 2 * i))) / 32768.0;
      return w;
    }
    at = body + size + (size & 1u);
  }
}

WavData read_wav(const std::string& path, std::optional<double> expected_rate) {
  return parse_wav(read_file(path, "wav file"), path, expected_rate);
}

double quantize_pcm16(double x) {
  const double s = std::clamp(std::nearbyint(x * 32768.0), -32768.0, 32767.0);
  return s / 32768.0;
}

std::string encode_wav(std::span<const double> samples, double sample_rate) {
  if (!(sample_rate > 0.0)) throw std::invalid_argument("encode_wav: sample rate must be > 0");
  std::ostringstream out;
  const auto data_bytes = static_cast<std::uint32_t>(2 * samples.size());
  const auto rate = static_cast<std::uint32_t>(std::lround(sample_rate));
  out.write("RIFF", 4);
  io::put_u32(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  io::put_u32(out, 16);
  const std::uint8_t fmt[4] = {1, 0, 1, 0};  // PCM, mono
  out.write(reinterpret_cast<const char*>(fmt), 4);
  io::put_u32(out, rate);
  io::put_u32(out, rate * 2);
  const std::uint8_t align[4] = {2, 0, 16, 0};  // block align 2, 16 bits
  out.write(reinterpret_cast<const char*>(align), 4);
  out.write("data", 4);
  io::put_u32(out, data_bytes);
  for (double x : samples) {
    const auto v = static_cast<std::int16_t>(quantize_pcm16(x) * 32768.0);
    const auto u = static_cast<std::uint16_t>(v);
    const char bytes[2] = {static_cast<char>(u & 0xff), static_cast<char>(u >> 8)};
    out.write(bytes, 2);
  }
  return out.str();
}

void write_wav(const std::string& path, std::span<const double> samples, double sample_rate) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write wav file: " + path);
  const std::string bytes = encode_wav(samples, sample_rate);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<AnechoicClip> read_corpus_manifest(const std::string& path, double sample_rate) {
  const std::string text = read_file(path, "corpus manifest");
  const fs::path base = fs::path(path).parent_path();
  std::vector<AnechoicClip> clips;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (is_blank_or_comment(line)) continue;
    const auto fields = split_fields(line, "");
    const std::string wav = resolve(base, std::string(fields.front()));
    auto w = read_wav(wav, sample_rate);
    clips.push_back({std::move(w.samples), w.sample_rate, std::string(fields.front())});
  }
  if (clips.empty()) throw MissingInputError("corpus manifest lists no clips: " + path);
  return clips;
}

std::size_t GroundTruthTrack::speaking_count() const {
  return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [](const auto& r) { return r.speaking; }));
}

GroundTruthTrack parse_ground_truth(std::istream& in, const std::string& origin, const GroundTruthOptions& options) {
  GroundTruthTrack track;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank_or_comment(line)) continue;
    auto fail = [&](const std::string& msg) {
      return FormatError(origin + ":" + std::to_string(line_no) + ": " + msg);
    };
    const auto f = split_fields(line, "");
    if (f.size() != 5) throw fail("expected 't_ms x y z speaking', got " + std::to_string(f.size()) + " fields");
    GroundTruthRecord r;
    Position p;
    if (!parse_int(f[0], r.t_ms)) throw fail("bad integer time '" + std::string(f[0]) + "'");
    for (std::size_t a = 0; a < 3; ++a)
      if (!parse_double(f[a + 1], p[a])) throw fail("bad coordinate '" + std::string(f[a + 1]) + "'");
    if (f[4] == "1")
      r.speaking = true;
    else if (f[4] == "0")
      r.speaking = false;
    else
      throw fail("speaking flag must be 0 or 1, got '" + std::string(f[4]) + "'");
    if (!track.records.empty() && r.t_ms <= track.records.back().t_ms)
      throw fail("time " + std::to_string(r.t_ms) + " ms does not increase (previous " +
                 std::to_string(track.records.back().t_ms) + " ms)");
    r.position = options.transform.apply(p);
    if (options.room && !options.room->contains(r.position, 1e-9)) track.outside_room.push_back(track.records.size());
    track.records.push_back(r);
  }
  return track;
}

GroundTruthTrack read_ground_truth(const std::string& path, const GroundTruthOptions& options) {
  std::istringstream in(read_file(path, "ground truth"));
  return parse_ground_truth(in, path, options);
}

std::string format_ground_truth(const GroundTruthTrack& track) {
  std::string out;
  for (const auto& r : track.records) {
    out += std::to_string(r.t_ms);
    for (std::size_t a = 0; a < 3; ++a) out += ' ' + format_double(r.position[a]);
    out += r.speaking ? " 1\n" : " 0\n";
  }
  return out;
}

SequenceManifest read_sequence_manifest(const std::string& path) {
  const std::string text = read_file(path, "sequence manifest");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("sequence manifest " + path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("sequence manifest " + path + ": expected a JSON object");
  const fs::path base = fs::path(path).parent_path();
  SequenceManifest m;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "id")
        m.id = value.get<std::string>();
      else if (key == "wavs")
        for (const auto& w : value) m.wavs.push_back(resolve(base, w.get<std::string>()));
      else if (key == "ground_truth")
        m.ground_truth = resolve(base, value.get<std::string>());
      else if (key == "speaker")
        m.speaker = value.get<std::string>();
      else if (key == "description")
        m.description = value.get<std::string>();
      else
        throw ConfigError("sequence manifest " + path + ": unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("sequence manifest " + path + ": " + e.what());
  }
  if (m.id.empty() || m.wavs.empty() || m.ground_truth.empty())
    throw ConfigError("sequence manifest " + path + ": id, wavs and ground_truth are required");
  for (const auto& w : m.wavs)
    if (!fs::exists(w)) throw MissingInputError("sequence " + m.id + ": missing wav " + w);
  if (!fs::exists(m.ground_truth)) throw MissingInputError("sequence " + m.id + ": missing ground truth " + m.ground_truth);
  return m;
}

void write_sequence_manifest(const std::string& path, const SequenceManifest& m) {
  const fs::path base = fs::path(path).parent_path();
  auto rel = [&](const std::string& p) { return fs::path(p).lexically_relative(base.empty() ? "." : base).string(); };
  nlohmann::json j;
  j["id"] = m.id;
  j["wavs"] = nlohmann::json::array();
  for (const auto& w : m.wavs) j["wavs"].push_back(rel(w));
  j["ground_truth"] = rel(m.ground_truth);
  j["speaker"] = m.speaker;
  j["description"] = m.description;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write sequence manifest: " + path);
  out << j.dump(2) << '\n';
}

Sequence load_sequence(const SequenceManifest& manifest, const ArrayGeometry& geom, const GroundTruthOptions& gt_options,
                       std::size_t length_tolerance) {
  if (manifest.wavs.size() != geom.size())
    throw ConfigError("sequence " + manifest.id + ": " + std::to_string(manifest.wavs.size()) +
                      " wavs for a " + std::to_string(geom.size()) + "-microphone geometry");
  Sequence s;
  s.manifest = manifest;
  s.sample_rate = geom.sample_rate();
  std::size_t shortest = std::numeric_limits<std::size_t>::max(), longest = 0;
  for (const auto& path : manifest.wavs) {
    auto w = read_wav(path, geom.sample_rate());
    shortest = std::min(shortest, w.samples.size());
    longest = std::max(longest, w.samples.size());
    s.channels.push_back(std::move(w.samples));
  }
  if (longest - shortest > length_tolerance)
    throw FormatError("sequence " + manifest.id + ": channel lengths differ by " + std::to_string(longest - shortest) +
                      " samples (tolerance " + std::to_string(length_tolerance) + ")");
  for (auto& c : s.channels) c.resize(shortest);
  s.track = read_ground_truth(manifest.ground_truth, gt_options);
  return s;
}

AnnotationMapping annotation_mapping_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("annotation mapping: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("annotation mapping: expected a JSON object");
  AnnotationMapping m;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "columns")
        m.columns = value.get<std::vector<std::string>>();
      else if (key == "time_unit")
        m.time_unit = value.get<std::string>();
      else if (key == "frame_rate_hz")
        m.frame_rate_hz = value.get<double>();
      else if (key == "position_scale")
        m.position_scale = value.get<double>();
      else if (key == "transform")
        m.transform = transform_from_json(value, "annotation mapping");
      else if (key == "frame_shift_ms")
        m.frame_shift_ms = value.get<double>();
      else if (key == "speaking_default")
        m.speaking_default = value.get<bool>();
      else if (key == "skip_lines")
        m.skip_lines = value.get<std::size_t>();
      else if (key == "delimiter")
        m.delimiter = value.get<std::string>();
      else
        throw ConfigError("annotation mapping: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("annotation mapping: ") + e.what());
  }
  for (const auto& c : m.columns)
    if (c != "t" && c != "x" && c != "y" && c != "z" && c != "speaking" && c != "ignore")
      throw ConfigError("annotation mapping: unknown column role '" + c + "'");
  for (const char* need : {"t", "x", "y", "z"})
    if (std::count(m.columns.begin(), m.columns.end(), need) != 1)
      throw ConfigError(std::string("annotation mapping: column '") + need + "' must be mapped exactly once");
  if (m.time_unit != "ms" && m.time_unit != "s" && m.time_unit != "frame")
    throw ConfigError("annotation mapping: time_unit must be ms, s or frame");
  if (!(m.frame_rate_hz > 0.0) || !(m.frame_shift_ms > 0.0) || !(m.position_scale != 0.0))
    throw ConfigError("annotation mapping: frame_rate_hz, frame_shift_ms and position_scale must be positive");
  return m;
}

AnnotationMapping load_annotation_mapping(const std::string& path) {
  return annotation_mapping_from_json_text(read_file(path, "annotation mapping"));
}

std::string convert_annotations(std::istream& raw, const AnnotationMapping& m, ConversionReport* report,
                                const std::string& origin) {
  struct Raw {
    double t_ms;
    GroundTruthRecord rec;
  };
  std::vector<Raw> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(raw, line)) {
    ++line_no;
    if (line_no <= m.skip_lines || is_blank_or_comment(line)) continue;
    const auto f = split_fields(line, m.delimiter);
    if (f.size() > m.columns.size())
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": row has " + std::to_string(f.size()) +
                        " columns but the mapping covers " + std::to_string(m.columns.size()) + " (column " +
                        std::to_string(m.columns.size() + 1) + " is unmapped)");
    if (f.size() < m.columns.size())
      throw FormatError(origin + ":" + std::to_string(line_no) + ": row has " + std::to_string(f.size()) +
                        " columns, mapping expects " + std::to_string(m.columns.size()));
    Raw r{0.0, {}};
    r.rec.speaking = m.speaking_default;
    Position p;
    for (std::size_t c = 0; c < f.size(); ++c) {
      const std::string& role = m.columns[c];
      if (role == "ignore") continue;
      double v = 0.0;
      if (!parse_double(f[c], v))
        throw FormatError(origin + ":" + std::to_string(line_no) + ": bad number '" + std::string(f[c]) + "' in column " +
                          std::to_string(c + 1));
      if (role == "t")
        r.t_ms = m.time_unit == "ms" ? v : (m.time_unit == "s" ? 1000.0 * v : 1000.0 * v / m.frame_rate_hz);
      else if (role == "x")
        p.x = v;
      else if (role == "y")
        p.y = v;
      else if (role == "z")
        p.z = v;
      else if (role == "speaking")
        r.rec.speaking = v != 0.0;
    }
    r.rec.position = m.transform.apply(m.position_scale * p);
    if (!rows.empty() && r.t_ms <= rows.back().t_ms)
      throw FormatError(origin + ":" + std::to_string(line_no) + ": time does not increase");
    rows.push_back(r);
  }

  ConversionReport rep;
  rep.raw_records = rows.size();
  if (rows.size() >= 2) {
    std::vector<double> steps;
    for (std::size_t i = 1; i < rows.size(); ++i) steps.push_back(rows[i].t_ms - rows[i - 1].t_ms);
    std::nth_element(steps.begin(), steps.begin() + static_cast<std::ptrdiff_t>(steps.size() / 2), steps.end());
    rep.raw_shift_ms = steps[steps.size() / 2];
  }

  GroundTruthTrack out;
  if (rows.size() >= 2 && std::abs(rep.raw_shift_ms - m.frame_shift_ms) > 1.0) {
    rep.resampled = true;
    rep.warnings.push_back("raw frame shift " + format_double(rep.raw_shift_ms) + " ms differs from " +
                           format_double(m.frame_shift_ms) + " ms; resampled to the nearest raw record");
    const double shift = m.frame_shift_ms;
    const double first = std::ceil(rows.front().t_ms / shift) * shift;
    for (double g = first; g <= rows.back().t_ms + 1e-9; g += shift) {
      auto it = std::lower_bound(rows.begin(), rows.end(), g, [](const Raw& r, double t) { return r.t_ms < t; });
      const Raw* best = nullptr;
      if (it != rows.end()) best = &*it;
      if (it != rows.begin() && (best == nullptr || g - std::prev(it)->t_ms <= best->t_ms - g)) best = &*std::prev(it);
      if (best == nullptr || std::abs(best->t_ms - g) > 0.5 * shift) continue;
      GroundTruthRecord rec = best->rec;
      rec.t_ms = std::llround(g);
      out.records.push_back(rec);
    }
  } else {
    for (const auto& r : rows) {
      GroundTruthRecord rec = r.rec;
      rec.t_ms = std::llround(r.t_ms);
      if (!out.records.empty() && rec.t_ms <= out.records.back().t_ms)
        throw FormatError(origin + ": times collide after rounding to whole milliseconds");
      out.records.push_back(rec);
    }
  }
  rep.output_records = out.records.size();
  if (report != nullptr) *report = rep;
  return format_ground_truth(out);
}

}  // namespace asl
