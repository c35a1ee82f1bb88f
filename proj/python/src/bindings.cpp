// Python bindings for the localization toolkit.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "asl/errors.hpp"
#include "asl/evaluation.hpp"
#include "asl/fixtures.hpp"
#include "asl/geometry.hpp"
#include "asl/nn/checkpoint.hpp"
#include "asl/nn/network.hpp"
#include "asl/signal_sim.hpp"
#include "asl/srp.hpp"

namespace py = pybind11;
using namespace asl;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Position to_position(const std::vector<double>& v) {
  if (v.size() != 3) throw std::invalid_argument("a position needs 3 coordinates");
  return {v[0], v[1], v[2]};
}

py::tuple from_position(const Position& p) { return py::make_tuple(p.x, p.y, p.z); }

Array vector_array(const std::vector<double>& v) {
  Array a(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

std::span<const double> as_span(const Array& a) {
  if (a.ndim() != 1) throw std::invalid_argument("expected a 1-D array");
  return {a.data(), static_cast<std::size_t>(a.size())};
}

MultichannelWindow to_window(const Array& a, double sample_rate) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a (channels, samples) array");
  MultichannelWindow w(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)), sample_rate);
  std::copy(a.data(), a.data() + a.size(), w.data().begin());
  return w;
}

Array window_array(const MultichannelWindow& w) {
  Array a({static_cast<py::ssize_t>(w.channels()), static_cast<py::ssize_t>(w.length())});
  std::copy(w.data().begin(), w.data().end(), a.mutable_data());
  return a;
}

ArrayGeometry make_geometry(std::optional<std::vector<int>> mics, bool all_pairs) {
  IdiapConfig c;
  c.mic_subset = mics ? *mics : kIdiapFourMicSubset;
  ArrayGeometry g = build_idiap_geometry(c);
  if (all_pairs) g.set_pairs(g.all_pairs());
  return g;
}

TrackReport make_report(const Array& estimates, const Array& truth) {
  if (estimates.ndim() != 2 || estimates.shape(1) != 3 || truth.ndim() != 2 || truth.shape(1) != 3 ||
      estimates.shape(0) != truth.shape(0))
    throw std::invalid_argument("estimates and truth must both be (frames, 3)");
  TrackReport r;
  for (py::ssize_t f = 0; f < estimates.shape(0); ++f)
    r.records.push_back({40 * f, {estimates.at(f, 0), estimates.at(f, 1), estimates.at(f, 2)},
                         {truth.at(f, 0), truth.at(f, 1), truth.at(f, 2)}});
  return r;
}

}  // namespace

PYBIND11_MODULE(_asl, m) {
  m.doc() = "Acoustic source localization: simulation, GCC/SRP-PHAT, CNN inference and metrics";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<MissingInputError>(m, "MissingInputError", PyExc_FileNotFoundError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

  py::class_<ArrayGeometry>(m, "Geometry")
      .def(py::init(&make_geometry), py::arg("mics") = py::none(), py::arg("all_pairs") = false,
           "Two-ring array; mics are 1-based ids, default the 4-mic subset")
      .def_property_readonly("mic_ids", &ArrayGeometry::mic_ids)
      .def_property_readonly("sample_rate", &ArrayGeometry::sample_rate)
      .def_property_readonly("speed_of_sound", &ArrayGeometry::speed_of_sound)
      .def_property_readonly("pairs", &ArrayGeometry::pairs)
      .def_property_readonly("positions",
                             [](const ArrayGeometry& g) {
                               Array a({static_cast<py::ssize_t>(g.size()), py::ssize_t{3}});
                               for (std::size_t i = 0; i < g.size(); ++i)
                                 for (std::size_t k = 0; k < 3; ++k) a.mutable_at(i, k) = g.mic(i)[k];
                               return a;
                             })
      .def(
          "sample_delay",
          [](const ArrayGeometry& g, const std::vector<double>& q, std::size_t i) {
            return sample_delay(to_position(q), i, g);
          },
          py::arg("source"), py::arg("mic_index"));

  m.def(
      "source_box",
      [] {
        const SourceBox b = idiap_source_box();
        return py::make_tuple(from_position(b.lo), from_position(b.hi));
      },
      "Sampling region of the speaker's mouth as (lo, hi)");

  m.def(
      "fractional_delay",
      [](const Array& x, double delay, double gain) { return vector_array(fractional_delay(as_span(x), delay, gain)); },
      py::arg("x"), py::arg("delay"), py::arg("gain") = 1.0, "Circular band-limited delay by a DFT phase ramp");

  m.def(
      "gcc_phat",
      [](const Array& xi, const Array& xj, std::size_t max_lag, std::size_t upsample) {
        const CorrelationFunction cf = gcc_phat(as_span(xi), as_span(xj), {max_lag, upsample});
        std::vector<double> lags(cf.values.size());
        for (std::size_t i = 0; i < lags.size(); ++i) lags[i] = cf.lag_of(i);
        return py::make_tuple(vector_array(lags), vector_array(cf.values), cf.peak_lag());
      },
      py::arg("xi"), py::arg("xj"), py::arg("max_lag") = 0, py::arg("upsample") = 1,
      "Returns (lags, values, parabolic peak lag); positive lag means xi lags xj");

  m.def(
      "srp_localize",
      [](const Array& window, const ArrayGeometry& geom, double resolution, bool search_z, bool refine) {
        const SearchGrid grid(geom, idiap_source_box(), resolution, search_z);
        SrpOptions opt;
        opt.refine = refine;
        return from_position(srp_localize(to_window(window, geom.sample_rate()), grid, opt).position);
      },
      py::arg("window"), py::arg("geometry"), py::arg("resolution") = 0.05, py::arg("search_z") = true,
      py::arg("refine") = false, "SRP-PHAT over the source box; window is (channels, samples)");

  m.def(
      "simulate_window",
      [](const ArrayGeometry& geom, const std::vector<double>& source, std::size_t samples, double snr_db,
         double tone_gain, std::uint64_t seed) {
        const AnechoicClip clip = synthetic_voice_clip(samples + 4000, seed);
        NoiseSpec noise;
        noise.snr_db = snr_db;
        noise.tone_gain = tone_gain;
        Rng rng(seed);
        return window_array(
            synthesize_example(clip, 2000, samples, to_position(source), geom, idiap_source_box(), noise, rng)
                .window);
      },
      py::arg("geometry"), py::arg("source"), py::arg("samples") = 1280, py::arg("snr_db") = 20.0,
      py::arg("tone_gain") = 0.1, py::arg("seed") = 1,
      "Semi-synthetic window from a synthetic voice clip at the given source position");

  m.def("relative_improvement", &relative_improvement, py::arg("reference_motp"), py::arg("proposal_motp"),
        "Percentage improvement of the proposal over the reference MOTP");
  m.def(
      "motp", [](const Array& est, const Array& truth) { return motp(make_report(est, truth)); },
      py::arg("estimates"), py::arg("truth"), "Mean euclidean error over frames");

  py::class_<nn::Checkpoint>(m, "Checkpoint")
      .def_static("load", &nn::Checkpoint::load, py::arg("path"))
      .def_property_readonly("window_ms", &nn::Checkpoint::window_ms)
      .def_property_readonly("sample_rate", [](const nn::Checkpoint& c) { return c.sample_rate; })
      .def_property_readonly("channels", [](const nn::Checkpoint& c) { return c.spec.channels; })
      .def_property_readonly("samples", [](const nn::Checkpoint& c) { return c.spec.length; })
      .def_property_readonly("precision",
                             [](const nn::Checkpoint& c) { return std::string(nn::precision_name(c.precision)); })
      .def(
          "predict",
          [](const nn::Checkpoint& c, const Array& window) {
            const MultichannelWindow w = to_window(window, c.sample_rate);
            if (c.precision == nn::Precision::kFloat64)
              return from_position(nn::network_from_checkpoint<double>(c).forward(w));
            return from_position(nn::network_from_checkpoint<float>(c).forward(w));
          },
          py::arg("window"), "Source position estimate for a (channels, samples) window");
}
