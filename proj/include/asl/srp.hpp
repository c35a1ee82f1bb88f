#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "asl/geometry.hpp"
#include "asl/signal_sim.hpp"

namespace asl {

/// GCC-PHAT sampled on a lag axis [-max_lag, max_lag] with `upsample` points per sample.
///
/// Sign convention: a positive lag means xi lags xj, so for xi[n] = s[n - di] and
/// xj[n] = s[n - dj] the peak sits at di - dj.
struct CorrelationFunction {
  std::size_t max_lag = 0;
  std::size_t upsample = 1;
  double sample_rate = 0.0;
  /// values[i] is the correlation at lag (i - max_lag * upsample) / upsample.
  std::vector<double> values;

  double lag_of(std::size_t index) const;
  /// Value at a fractional lag, linearly interpolated; lags outside the axis read 0.
  double at(double lag) const;
  std::size_t argmax() const;
  /// Peak lag refined by a parabola through the maximum and its two neighbours.
  double peak_lag() const;
};

struct GccOptions {
  /// Largest lag kept; 0 selects (N-1)/2.
  std::size_t max_lag = 0;
  /// Band-limited upsampling factor (zero-padded inverse transform); 1 keeps integer lags.
  std::size_t upsample = 1;
};

/// Cross-spectrum of xi and xj whitened to unit magnitude, with magnitude floor
/// 1e-12 * max|cross-spectrum|. Throws asl::NumericError when either input has zero energy.
std::vector<std::complex<double>> phat_cross_spectrum(std::span<const double> xi, std::span<const double> xj);

CorrelationFunction gcc_phat(std::span<const double> xi, std::span<const double> xj, const GccOptions& options = {},
                             double sample_rate = 16000.0);

/// Exact band-limited evaluation of the whitened correlation at a real lag, with first and
/// second derivatives. DC and Nyquist bins are left out.
struct BandlimitedCorrelation {
  explicit BandlimitedCorrelation(std::vector<std::complex<double>> phat, std::size_t n);
  double value(double lag) const;
  void evaluate(double lag, double& value, double& d1, double& d2) const;

 private:
  std::vector<std::complex<double>> phat_;
  std::size_t n_;
};

/// Regular grid of candidate source positions with precomputed pairwise steering delays.
class SearchGrid {
 public:
  /// Cells tile `bounds` with a spacing as close to `resolution` as divides the extent.
  /// With `search_z` false the grid has a single z layer at the box mid-height.
  /// `pairs` empty selects geom.pairs().
  SearchGrid(const ArrayGeometry& geom, const SourceBox& bounds, double resolution, bool search_z = true,
             std::vector<std::pair<std::size_t, std::size_t>> pairs = {});

  std::size_t size() const { return centers_.size(); }
  std::array<std::size_t, 3> dims() const { return dims_; }
  Position step() const { return step_; }
  const SourceBox& bounds() const { return bounds_; }
  const ArrayGeometry& geometry() const { return geom_; }
  const std::vector<std::pair<std::size_t, std::size_t>>& pairs() const { return pairs_; }

  const Position& center(std::size_t cell) const { return centers_[cell]; }
  std::size_t cell_index(std::size_t ix, std::size_t iy, std::size_t iz) const;
  std::array<std::size_t, 3> cell_coords(std::size_t cell) const;
  /// Delay difference N_s(i) - N_s(j) for pair `p` at `cell`, in samples.
  double steering_delay(std::size_t cell, std::size_t p) const { return delays_[cell * pairs_.size() + p]; }
  double half_diagonal() const;
  bool search_z() const { return search_z_; }

 private:
  ArrayGeometry geom_;
  SourceBox bounds_;
  bool search_z_;
  std::array<std::size_t, 3> dims_{};
  Position step_;
  std::vector<std::pair<std::size_t, std::size_t>> pairs_;
  std::vector<Position> centers_;
  std::vector<double> delays_;
};

struct SrpOptions {
  /// Upsampling of each GCC before linear interpolation at fractional steering delays.
  std::size_t upsample = 1;
  /// Per-axis parabolic refinement over the 3x3x3 neighbourhood of the best cell.
  bool quadratic_interpolation = false;
  /// Continuous maximization of the band-limited SRP functional, started from the
  /// `refine_starts` strongest local maxima of the grid map.
  bool refine = false;
  std::size_t refine_starts = 8;
  std::size_t refine_iterations = 200;
};

/// SRP-PHAT power for every grid cell: sum over pairs of GCC-PHAT at the cell's steering delays.
std::vector<double> srp_phat_map(const MultichannelWindow& window, const SearchGrid& grid,
                                 const SrpOptions& options = {});

struct SrpEstimate {
  Position position;
  double power = 0.0;
  std::size_t cell = 0;
};

SrpEstimate srp_localize(const MultichannelWindow& window, const SearchGrid& grid, const SrpOptions& options = {});

}  // namespace asl
