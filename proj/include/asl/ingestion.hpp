#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "asl/geometry.hpp"
#include "asl/signal_sim.hpp"

namespace asl {

/// Mono PCM-16 audio scaled to [-1, 1).
struct WavData {
  std::vector<double> samples;
  double sample_rate = 0.0;
};

/// Parses a RIFF/WAVE PCM 16-bit mono buffer. `expected_rate` (if set) must match the
/// header. Throws asl::FormatError on malformed or unsupported data; truncation errors
/// name the byte offset where data ran out.
WavData parse_wav(std::string_view bytes, const std::string& origin = "wav",
                  std::optional<double> expected_rate = std::nullopt);
/// Reads a file; throws asl::MissingInputError when it cannot be opened.
WavData read_wav(const std::string& path, std::optional<double> expected_rate = std::nullopt);

/// Encodes samples as PCM-16 (clipped to [-1, 1 - 2^-15], rounded to nearest).
std::string encode_wav(std::span<const double> samples, double sample_rate);
void write_wav(const std::string& path, std::span<const double> samples, double sample_rate);

/// Quantizes a sample the way encode_wav does, returned in [-1, 1) scale.
double quantize_pcm16(double x);

/// Reads a corpus manifest: one WAV path per line ('#' comments, blank lines ignored),
/// relative paths resolved against the manifest's directory.
std::vector<AnechoicClip> read_corpus_manifest(const std::string& path, double sample_rate = 16000.0);

struct GroundTruthRecord {
  std::int64_t t_ms = 0;
  Position position;
  bool speaking = true;

  friend bool operator==(const GroundTruthRecord&, const GroundTruthRecord&) = default;
};

struct GroundTruthTrack {
  std::vector<GroundTruthRecord> records;
  /// Indices of records whose position falls outside the room bounds.
  std::vector<std::size_t> outside_room;

  std::size_t speaking_count() const;
};

struct GroundTruthOptions {
  /// Applied to every position (array frame -> room frame); identity by default.
  RigidTransform transform;
  /// Positions outside these bounds are listed in GroundTruthTrack::outside_room.
  std::optional<SourceBox> room;
};

/// Parses the normalized annotation format: one `t_ms x y z speaking` record per line,
/// with '#' comments and blank lines ignored. Throws asl::FormatError naming the line on
/// a parse failure or on timestamps that do not strictly increase.
GroundTruthTrack parse_ground_truth(std::istream& in, const std::string& origin = "ground truth",
                                    const GroundTruthOptions& options = {});
GroundTruthTrack read_ground_truth(const std::string& path, const GroundTruthOptions& options = {});

/// Canonical text form: shortest round-trip decimal for coordinates.
std::string format_ground_truth(const GroundTruthTrack& track);

/// One recorded sequence: per-microphone WAVs plus annotations.
struct SequenceManifest {
  std::string id;
  std::vector<std::string> wavs;
  std::string ground_truth;
  std::string speaker;
  std::string description;
};

/// JSON object with keys id, wavs, ground_truth and optional speaker, description.
/// Relative paths are resolved against the manifest's directory. Unknown keys raise
/// asl::ConfigError; missing referenced files raise asl::MissingInputError.
SequenceManifest read_sequence_manifest(const std::string& path);
/// Paths in `manifest` are taken as read_sequence_manifest returns them (absolute or relative
/// to the working directory) and stored relative to the new manifest's directory.
void write_sequence_manifest(const std::string& path, const SequenceManifest& manifest);

struct Sequence {
  SequenceManifest manifest;
  /// channels[i] is microphone i of the geometry subset.
  std::vector<std::vector<double>> channels;
  double sample_rate = 0.0;
  GroundTruthTrack track;
};

/// Loads and validates a sequence: the WAV count must match `geom.size()`, rates must equal
/// the geometry rate, and lengths must agree within `length_tolerance` samples (one 40 ms
/// frame by default). Channels are trimmed to the shortest length.
Sequence load_sequence(const SequenceManifest& manifest, const ArrayGeometry& geom,
                       const GroundTruthOptions& gt_options = {}, std::size_t length_tolerance = 640);

/// Column-mapping rules for converting raw corpus annotations into the normalized format.
struct AnnotationMapping {
  /// One entry per raw column: "t", "x", "y", "z", "speaking" or "ignore".
  std::vector<std::string> columns;
  /// "ms", "s" or "frame" (frame indices at `frame_rate_hz`).
  std::string time_unit = "ms";
  double frame_rate_hz = 25.0;
  /// Multiplies raw coordinates (e.g. 0.01 for centimeters).
  double position_scale = 1.0;
  RigidTransform transform;
  /// Output frame shift; raw data on another grid is resampled by nearest record.
  double frame_shift_ms = 40.0;
  /// Used when no "speaking" column is mapped.
  bool speaking_default = true;
  std::size_t skip_lines = 0;
  /// Field separator; empty means any whitespace.
  std::string delimiter;
};

AnnotationMapping annotation_mapping_from_json_text(const std::string& text);
AnnotationMapping load_annotation_mapping(const std::string& path);

struct ConversionReport {
  std::size_t raw_records = 0;
  std::size_t output_records = 0;
  double raw_shift_ms = 0.0;
  bool resampled = false;
  std::vector<std::string> warnings;
};

/// Converts raw annotation text. Records are passed through, never interpolated. When the
/// median raw time step differs from `frame_shift_ms` by more than 1 ms, a warning is
/// recorded and each output frame on the `frame_shift_ms` grid takes the nearest raw record
/// within half a shift (frames with no such record are dropped). Throws asl::ConfigError for
/// rows with columns the mapping does not cover and asl::FormatError for unparsable rows.
std::string convert_annotations(std::istream& raw, const AnnotationMapping& mapping, ConversionReport* report,
                                const std::string& origin = "annotations");

}  // namespace asl
