#include "asl/geometry.hpp"

#include <algorithm>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "asl/errors.hpp"

namespace asl {

double euclidean_distance(const Position& a, const Position& b) {
  return std::hypot(a.x - b.x, a.y - b.y, a.z - b.z);
}

SourceBox::SourceBox(Position lo_, Position hi_) : lo(lo_), hi(hi_) {
  if (!lo.finite() || !hi.finite()) throw std::invalid_argument("SourceBox: non-finite bounds");
  for (std::size_t i = 0; i < 3; ++i) {
    if (lo[i] > hi[i]) throw std::invalid_argument("SourceBox: lo must be <= hi componentwise");
  }
}

bool SourceBox::contains(const Position& p, double tol) const {
  for (std::size_t i = 0; i < 3; ++i) {
    if (p[i] < lo[i] - tol || p[i] > hi[i] + tol) return false;
  }
  return true;
}

Position RigidTransform::apply(const Position& p) const {
  const double c = std::cos(yaw_rad), s = std::sin(yaw_rad);
  return {c * p.x - s * p.y + translation.x, s * p.x + c * p.y + translation.y, p.z + translation.z};
}

Position RigidTransform::inverse(const Position& p) const {
  const double c = std::cos(yaw_rad), s = std::sin(yaw_rad);
  const Position d = p - translation;
  return {c * d.x + s * d.y, -s * d.x + c * d.y, d.z};
}

ArrayGeometry::ArrayGeometry(std::vector<Position> mics, std::vector<int> mic_ids, Position room_min,
                             Position room_max, double speed_of_sound, double sample_rate,
                             RigidTransform array_to_room)
    : mics_(std::move(mics)),
      mic_ids_(std::move(mic_ids)),
      room_min_(room_min),
      room_max_(room_max),
      speed_of_sound_(speed_of_sound),
      sample_rate_(sample_rate),
      array_to_room_(array_to_room) {
  if (mics_.size() < 2) throw std::invalid_argument("ArrayGeometry: need at least 2 microphones");
  if (mic_ids_.empty()) {
    for (std::size_t i = 0; i < mics_.size(); ++i) mic_ids_.push_back(static_cast<int>(i) + 1);
  }
  if (mic_ids_.size() != mics_.size()) throw std::invalid_argument("ArrayGeometry: mic id count mismatch");
  if (!(speed_of_sound_ > 0.0) || !std::isfinite(speed_of_sound_))
    throw std::invalid_argument("ArrayGeometry: speed of sound must be positive");
  if (!(sample_rate_ > 0.0) || !std::isfinite(sample_rate_))
    throw std::invalid_argument("ArrayGeometry: sample rate must be positive");
  for (std::size_t i = 0; i < 3; ++i) {
    if (!(room_min_[i] < room_max_[i])) throw std::invalid_argument("ArrayGeometry: room_min must be < room_max");
  }
  const SourceBox room(room_min_, room_max_);
  for (const auto& m : mics_) {
    if (!m.finite() || !room.contains(m)) throw std::invalid_argument("ArrayGeometry: microphone outside room");
  }
  for (std::size_t i = 0; i + 1 < mics_.size(); i += 2) pairs_.emplace_back(i, i + 1);
  if (pairs_.empty() || mics_.size() % 2 != 0) pairs_ = all_pairs();
}

const Position& ArrayGeometry::mic(std::size_t i) const {
  if (i >= mics_.size()) throw std::out_of_range("microphone index out of range");
  return mics_[i];
}

std::size_t ArrayGeometry::index_of(int id) const {
  auto it = std::find(mic_ids_.begin(), mic_ids_.end(), id);
  if (it == mic_ids_.end()) throw std::out_of_range("microphone id " + std::to_string(id) + " not in geometry");
  return static_cast<std::size_t>(it - mic_ids_.begin());
}

void ArrayGeometry::set_pairs(std::vector<std::pair<std::size_t, std::size_t>> pairs) {
  if (pairs.empty()) throw std::invalid_argument("ArrayGeometry: empty pair list");
  for (auto [i, j] : pairs) {
    if (i >= mics_.size() || j >= mics_.size() || i == j) throw std::out_of_range("ArrayGeometry: bad pair");
  }
  pairs_ = std::move(pairs);
}

std::vector<std::pair<std::size_t, std::size_t>> ArrayGeometry::all_pairs() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < mics_.size(); ++i)
    for (std::size_t j = i + 1; j < mics_.size(); ++j) out.emplace_back(i, j);
  return out;
}

double sample_delay(const Position& source, std::size_t mic_index, const ArrayGeometry& geom) {
  return geom.sample_rate() * euclidean_distance(source, geom.mic(mic_index)) / geom.speed_of_sound();
}

double pair_delay_difference(const Position& source, std::size_t i, std::size_t j, const ArrayGeometry& geom) {
  return sample_delay(source, i, geom) - sample_delay(source, j, geom);
}

ArrayGeometry build_idiap_geometry(const IdiapConfig& config) {
  std::vector<int> ids = config.mic_subset;
  if (ids.empty()) {
    for (int i = 1; i <= 2 * kIdiapMicsPerRing; ++i) ids.push_back(i);
  }
  std::vector<int> seen;
  for (int id : ids) {
    if (id < 1 || id > 2 * kIdiapMicsPerRing)
      throw std::out_of_range("IDIAP microphone id " + std::to_string(id) + " out of range 1..16");
    if (std::find(seen.begin(), seen.end(), id) != seen.end())
      throw std::invalid_argument("duplicate microphone id " + std::to_string(id));
    seen.push_back(id);
  }

  const RigidTransform xf{config.array_origin, config.array_yaw_deg * std::numbers::pi / 180.0};
  std::vector<Position> mics;
  for (int id : ids) {
    const int ring = (id - 1) / kIdiapMicsPerRing;
    const int k = (id - 1) % kIdiapMicsPerRing;
    const double cx = ring == 0 ? -0.5 * kIdiapRingSeparation : 0.5 * kIdiapRingSeparation;
    const double angle = k * 2.0 * std::numbers::pi / kIdiapMicsPerRing;
    const Position local{cx + kIdiapRingRadius * std::cos(angle), kIdiapRingRadius * std::sin(angle), 0.0};
    mics.push_back(xf.apply(local));
  }

  ArrayGeometry geom(std::move(mics), ids, config.room_min, config.room_max, config.speed_of_sound,
                     config.sample_rate, xf);
  if (!config.pairs.empty()) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (auto [a, b] : config.pairs) pairs.emplace_back(geom.index_of(a), geom.index_of(b));
    geom.set_pairs(std::move(pairs));
  } else if (config.mic_subset.empty()) {
    geom.set_pairs(geom.all_pairs());
  }
  return geom;
}

SourceBox idiap_source_box() { return {{0.0, 0.0, 0.92}, {3.6, 8.2, 1.53}}; }

namespace {

Position position_from_json(const nlohmann::json& j, const char* key) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(std::string("geometry config: '") + key + "' must be [x,y,z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

nlohmann::json position_to_json(const Position& p) { return nlohmann::json::array({p.x, p.y, p.z}); }

}  // namespace

IdiapConfig geometry_config_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("geometry config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("geometry config: expected a JSON object");
  IdiapConfig c;
  try {
    for (auto& [key, value] : j.items()) {
      if (key == "mic_subset") {
        c.mic_subset = value.get<std::vector<int>>();
      } else if (key == "pairs") {
        for (const auto& p : value) {
          if (!p.is_array() || p.size() != 2) throw ConfigError("geometry config: pairs must be [[a,b],...]");
          c.pairs.emplace_back(p[0].get<int>(), p[1].get<int>());
        }
      } else if (key == "room_min") {
        c.room_min = position_from_json(value, "room_min");
      } else if (key == "room_max") {
        c.room_max = position_from_json(value, "room_max");
      } else if (key == "array_origin") {
        c.array_origin = position_from_json(value, "array_origin");
      } else if (key == "array_yaw_deg") {
        c.array_yaw_deg = value.get<double>();
      } else if (key == "speed_of_sound") {
        c.speed_of_sound = value.get<double>();
      } else if (key == "sample_rate") {
        c.sample_rate = value.get<double>();
      } else {
        throw ConfigError("geometry config: unknown key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("geometry config: ") + e.what());
  }
  return c;
}

IdiapConfig load_geometry_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("cannot open geometry config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return geometry_config_from_json_text(ss.str());
}

std::string geometry_config_to_json_text(const IdiapConfig& c) {
  nlohmann::json j;
  j["mic_subset"] = c.mic_subset;
  auto pairs = nlohmann::json::array();
  for (auto [a, b] : c.pairs) pairs.push_back({a, b});
  j["pairs"] = pairs;
  j["room_min"] = position_to_json(c.room_min);
  j["room_max"] = position_to_json(c.room_max);
  j["array_origin"] = position_to_json(c.array_origin);
  j["array_yaw_deg"] = c.array_yaw_deg;
  j["speed_of_sound"] = c.speed_of_sound;
  j["sample_rate"] = c.sample_rate;
  return j.dump(2);
}

}  // namespace asl
