#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace asl {

/// A point or displacement in 3-D space, in meters.
struct Position {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Position() = default;
  constexpr Position(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  double operator[](std::size_t i) const { return i == 0 ? x : (i == 1 ? y : z); }
  double& operator[](std::size_t i) { return i == 0 ? x : (i == 1 ? y : z); }

  friend constexpr Position operator+(const Position& a, const Position& b) {
    return {a.x + b.x, a.y + b.y, a.z + b.z};
  }
  friend constexpr Position operator-(const Position& a, const Position& b) {
    return {a.x - b.x, a.y - b.y, a.z - b.z};
  }
  friend constexpr Position operator*(double s, const Position& a) { return {s * a.x, s * a.y, s * a.z}; }
  friend constexpr bool operator==(const Position&, const Position&) = default;
};

double euclidean_distance(const Position& a, const Position& b);

/// Axis-aligned box; used both for room bounds and the source sampling region.
struct SourceBox {
  Position lo;
  Position hi;

  SourceBox() = default;
  /// Throws std::invalid_argument unless lo <= hi componentwise and both are finite.
  SourceBox(Position lo_, Position hi_);

  bool contains(const Position& p, double tol = 0.0) const;
  Position center() const { return 0.5 * (lo + hi); }
};

/// Rotation about +z followed by translation; maps array-frame coordinates
/// into the room frame.
struct RigidTransform {
  Position translation;
  double yaw_rad = 0.0;

  Position apply(const Position& p) const;
  Position inverse(const Position& p) const;
};

/// Microphone layout, room bounds and propagation constants. Immutable once built.
class ArrayGeometry {
 public:
  /// `mic_ids` are the user-facing microphone numbers (e.g. 1..16), one per mic.
  /// Throws std::invalid_argument on any violated invariant.
  ArrayGeometry(std::vector<Position> mics, std::vector<int> mic_ids, Position room_min, Position room_max,
                double speed_of_sound, double sample_rate, RigidTransform array_to_room = {});

  std::size_t size() const { return mics_.size(); }
  const std::vector<Position>& mics() const { return mics_; }
  const Position& mic(std::size_t i) const;
  const std::vector<int>& mic_ids() const { return mic_ids_; }
  /// Position of the microphone numbered `id` in `mic_ids()`; throws std::out_of_range.
  std::size_t index_of(int id) const;
  const Position& room_min() const { return room_min_; }
  const Position& room_max() const { return room_max_; }
  SourceBox room_box() const { return {room_min_, room_max_}; }
  double speed_of_sound() const { return speed_of_sound_; }
  double sample_rate() const { return sample_rate_; }
  const RigidTransform& array_to_room() const { return array_to_room_; }

  /// Microphone pairs (indices into mics()) used by pairwise correlation methods.
  const std::vector<std::pair<std::size_t, std::size_t>>& pairs() const { return pairs_; }
  void set_pairs(std::vector<std::pair<std::size_t, std::size_t>> pairs);
  /// All M(M-1)/2 pairs in lexicographic order.
  std::vector<std::pair<std::size_t, std::size_t>> all_pairs() const;

 private:
  std::vector<Position> mics_;
  std::vector<int> mic_ids_;
  Position room_min_;
  Position room_max_;
  double speed_of_sound_;
  double sample_rate_;
  RigidTransform array_to_room_;
  std::vector<std::pair<std::size_t, std::size_t>> pairs_;
};

/// Propagation delay from `source` to microphone `mic_index`, in (fractional) samples:
/// f_s * d / c. Throws std::out_of_range on a bad index.
double sample_delay(const Position& source, std::size_t mic_index, const ArrayGeometry& geom);

/// Delay difference N_s(i) - N_s(j) in samples; positive when mic i hears the source later.
double pair_delay_difference(const Position& source, std::size_t i, std::size_t j, const ArrayGeometry& geom);

struct IdiapConfig {
  /// 1-based microphone numbers to keep; empty keeps all 16.
  std::vector<int> mic_subset;
  /// Pairs of microphone numbers; empty means consecutive pairs of the subset
  /// ((1,5),(11,15) for the default 4-mic subset) or all pairs of the full layout.
  std::vector<std::pair<int, int>> pairs;
  Position room_min{0.0, 0.0, 0.0};
  Position room_max{3.6, 8.2, 2.4};
  /// Array-frame origin (mid-point between ring centers) expressed in the room frame.
  Position array_origin{1.8, 4.1, 0.75};
  double array_yaw_deg = 90.0;
  double speed_of_sound = 343.0;
  double sample_rate = 16000.0;
};

inline constexpr double kIdiapRingRadius = 0.1;
inline constexpr double kIdiapRingSeparation = 0.8;
inline constexpr int kIdiapMicsPerRing = 8;

/// The four microphones used in the two-pair experiments.
inline const std::vector<int> kIdiapFourMicSubset = {1, 5, 11, 15};

/// Two 8-mic rings of radius 0.1 m whose centers lie 0.8 m apart on the array x axis,
/// mid-point at the array origin. Mic k (1..8) of ring r sits at angle (k-1)*45 deg
/// counterclockwise from +x; ring 1 is centered at x=-0.4, ring 2 at x=+0.4 and is
/// numbered 9..16. Throws std::out_of_range for subset ids outside 1..16.
ArrayGeometry build_idiap_geometry(const IdiapConfig& config);

/// IDIAP sampling region for the speaker's mouth, in the room frame.
SourceBox idiap_source_box();

/// Reads an IdiapConfig from a JSON file. Unknown keys raise asl::ConfigError.
IdiapConfig load_geometry_config(const std::string& path);
IdiapConfig geometry_config_from_json_text(const std::string& text);
std::string geometry_config_to_json_text(const IdiapConfig& config);

}  // namespace asl
