#include "asl/localize.hpp"

#include <cmath>
#include <cstdio>

#include "asl/errors.hpp"

namespace asl {

namespace {

const std::string& single_sequence(const RealWindowSet& windows) {
  if (windows.windows.empty()) throw MissingInputError("no windows to localize");
  const std::string& id = windows.windows.front().sequence;
  for (const auto& w : windows.windows)
    if (w.sequence != id) throw ConfigError("windows from more than one sequence: " + id + ", " + w.sequence);
  return id;
}

int window_ms_of(const MultichannelWindow& w) {
  return static_cast<int>(std::lround(1000.0 * static_cast<double>(w.length()) / w.sample_rate()));
}

template <typename T>
std::vector<Position> predict_all(const nn::Checkpoint& checkpoint, const RealWindowSet& windows) {
  const nn::Network<T> net = nn::network_from_checkpoint<T>(checkpoint);
  std::vector<Position> out;
  out.reserve(windows.windows.size());
  for (const auto& w : windows.windows) out.push_back(net.forward(w.window));
  return out;
}

}  // namespace

std::vector<Position> cnn_predict(const nn::Checkpoint& checkpoint, const RealWindowSet& windows) {
  for (const auto& w : windows.windows)
    if (w.window.channels() != checkpoint.spec.channels || w.window.length() != checkpoint.spec.length)
      throw ConfigError("window " + std::to_string(w.window.channels()) + "x" + std::to_string(w.window.length()) +
                        " does not fit the checkpoint input " + std::to_string(checkpoint.spec.channels) + "x" +
                        std::to_string(checkpoint.spec.length));
  return checkpoint.precision == nn::Precision::kFloat64 ? predict_all<double>(checkpoint, windows)
                                                         : predict_all<float>(checkpoint, windows);
}

TrackReport cnn_track(const nn::Checkpoint& checkpoint, const RealWindowSet& windows, const std::string& method) {
  TrackReport rep;
  rep.sequence = single_sequence(windows);
  rep.method = method;
  rep.window_ms = window_ms_of(windows.windows.front().window);
  const std::vector<Position> est = cnn_predict(checkpoint, windows);
  for (std::size_t k = 0; k < est.size(); ++k) {
    if (!est[k].finite()) throw NumericError("non-finite network output at t=" + std::to_string(windows.windows[k].t_ms));
    rep.records.push_back({windows.windows[k].t_ms, est[k], windows.windows[k].target});
  }
  rep.validate();
  return rep;
}

std::vector<SrpFrame> srp_frames(const RealWindowSet& windows, const SearchGrid& grid, const SrpOptions& options) {
  std::vector<SrpFrame> out;
  out.reserve(windows.windows.size());
  for (const auto& w : windows.windows) {
    const SrpEstimate e = srp_localize(w.window, grid, options);
    out.push_back({w.t_ms, e.position, e.power});
  }
  return out;
}

TrackReport srp_track(const RealWindowSet& windows, const SearchGrid& grid, const SrpOptions& options,
                      const std::string& method) {
  TrackReport rep;
  rep.sequence = single_sequence(windows);
  rep.method = method;
  rep.window_ms = window_ms_of(windows.windows.front().window);
  const std::vector<SrpFrame> frames = srp_frames(windows, grid, options);
  for (std::size_t k = 0; k < frames.size(); ++k)
    rep.records.push_back({frames[k].t_ms, frames[k].position, windows.windows[k].target});
  rep.validate();
  return rep;
}

std::string format_srp_frames_csv(const std::vector<SrpFrame>& frames) {
  std::string out = "frame_ms,x,y,z,power\n";
  char buf[160];
  for (const auto& f : frames) {
    std::snprintf(buf, sizeof buf, "%lld,%.6f,%.6f,%.6f,%.9g\n", static_cast<long long>(f.t_ms), f.position.x,
                  f.position.y, f.position.z, f.power);
    out += buf;
  }
  return out;
}

}  // namespace asl
