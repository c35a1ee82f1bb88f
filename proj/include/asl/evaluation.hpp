#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "asl/geometry.hpp"

namespace asl {

struct TrackRecord {
  std::int64_t t_ms = 0;
  Position estimate;
  Position truth;
};

/// Per-frame estimates paired with ground truth for one sequence, method and window length.
struct TrackReport {
  std::string sequence;
  std::string method;
  int window_ms = 0;
  std::vector<TrackRecord> records;

  /// Throws std::invalid_argument unless times strictly increase and positions are finite.
  void validate() const;
};

enum class MotpMode {
  kEuclidean,  // mean distance, meters
  kSquared,    // mean squared distance, m^2
};

/// Mean localization error over the report's frames. Throws std::invalid_argument when empty.
double motp(const TrackReport& report, MotpMode mode = MotpMode::kEuclidean);

/// 100 * (reference - proposal) / reference; positive when the proposal is better.
/// Throws std::invalid_argument unless reference > 0.
double relative_improvement(double reference_motp, double proposal_motp);

/// Keeps only frames whose time appears in every report, so that frames one method could not
/// score are dropped for all methods alike.
void restrict_to_common_frames(std::vector<TrackReport>& reports);

/// Report CSV: header `t_ms,est_x,est_y,est_z,gt_x,gt_y,gt_z`, shortest round-trip decimals.
std::string format_report_csv(const TrackReport& report);
/// Parses a report CSV; metadata fields are left for the caller. Throws asl::FormatError
/// naming the line on malformed input.
TrackReport parse_report_csv(std::istream& in, const std::string& origin = "report");
void write_report_csv(const std::string& path, const TrackReport& report);
TrackReport read_report_csv(const std::string& path);

/// How the "Average" row combines sequences.
enum class AverageMode {
  kPooled,  // MOTP over all frames of all sequences (frame-weighted mean of sequence MOTPs)
  kMean,    // arithmetic mean of sequence MOTPs
};

/// One measured (or reference) cell before the matrix is assembled.
struct MatrixEntry {
  std::string sequence;
  std::string method;
  int window_ms = 0;
  double motp = 0.0;
  /// Number of scored frames; required (> 0) for pooled averages.
  std::size_t frames = 0;
};

struct MatrixCell {
  std::string sequence;
  std::string method;
  int window_ms = 0;
  double motp = 0.0;
  std::size_t frames = 0;
  /// Relative improvement over the reference method at the same sequence and window.
  std::optional<double> delta_r;
};

struct MatrixOptions {
  std::string title;
  /// Method that Δr is measured against. Its cells are used even when it is not displayed.
  std::string reference_method = "SRP";
  bool show_reference = true;
  AverageMode average = AverageMode::kPooled;
  /// Overrides entry frame counts for the pooled average, keyed by sequence.
  std::map<std::string, std::size_t> sequence_frames;
};

inline constexpr const char* kAverageRow = "Average";

/// Rows are sequences (first-appearance order) plus "Average"; columns are window lengths
/// (ascending) times displayed methods (first-appearance order).
struct ResultMatrix {
  std::string title;
  std::vector<std::string> sequences;
  std::vector<std::string> methods;
  std::vector<int> windows;
  std::vector<MatrixCell> cells;

  const MatrixCell* find(const std::string& sequence, const std::string& method, int window_ms) const;
};

/// Assembles a matrix with Average rows. Throws std::invalid_argument on duplicate entries,
/// a missing cell, or a pooled average over entries without frame counts.
ResultMatrix build_matrix(const std::vector<MatrixEntry>& entries, const MatrixOptions& options);

/// Matrix CSV: `sequence,method,window_ms,motp_m,delta_r_pct`, one line per cell, ordered by
/// row, window, method. Δr is empty for the reference method.
std::string format_matrix_csv(const ResultMatrix& matrix);
/// Aligned text table with one MOTP line and one Δr line per row.
std::string format_matrix_text(const ResultMatrix& matrix);

/// A published value shipped in the reference-constants data file.
struct ReferenceValue {
  int table = 0;
  std::string sequence;
  std::string method;
  int window_ms = 0;
  double motp = 0.0;
  std::optional<double> delta_r;
};

/// Reads `table,sequence,method,window_ms,motp_m,delta_r_pct`. Throws asl::MissingInputError
/// or asl::FormatError.
std::vector<ReferenceValue> read_reference_constants(const std::string& path);
/// Reads `sequence,frames`.
std::map<std::string, std::size_t> read_sequence_frames(const std::string& path);

/// Methods shown in a published table, in column order; the reference method is added hidden
/// when it is not listed. Throws asl::ConfigError for a table number absent from `values`.
std::vector<std::string> published_methods(const std::vector<ReferenceValue>& values, int table);

/// Rebuilds a published table from the reference constants. Columns from other tables (the
/// baseline rows) are taken from the table that first lists them.
ResultMatrix published_table(const std::vector<ReferenceValue>& values, int table,
                             const std::map<std::string, std::size_t>& sequence_frames, const std::string& title = "");

}  // namespace asl
