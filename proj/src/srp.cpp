#include "asl/srp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "asl/errors.hpp"
#include "asl/fft.hpp"

namespace asl {

double CorrelationFunction::lag_of(std::size_t index) const {
  return (static_cast<double>(index) - static_cast<double>(max_lag * upsample)) / static_cast<double>(upsample);
}

double CorrelationFunction::at(double lag) const {
  const double pos = lag * static_cast<double>(upsample) + static_cast<double>(max_lag * upsample);
  if (!(pos >= 0.0) || pos > static_cast<double>(values.size() - 1)) return 0.0;
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= values.size()) return values.back();
  const double f = pos - static_cast<double>(i);
  return (1.0 - f) * values[i] + f * values[i + 1];
}

std::size_t CorrelationFunction::argmax() const {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

double CorrelationFunction::peak_lag() const {
  const std::size_t i = argmax();
  if (i == 0 || i + 1 >= values.size()) return lag_of(i);
  const double ym = values[i - 1], y0 = values[i], yp = values[i + 1];
  const double denom = ym - 2.0 * y0 + yp;
  const double delta = denom < 0.0 ? 0.5 * (ym - yp) / denom : 0.0;
  return lag_of(i) + delta / static_cast<double>(upsample);
}

std::vector<std::complex<double>> phat_cross_spectrum(std::span<const double> xi, std::span<const double> xj) {
  if (xi.size() != xj.size()) throw std::invalid_argument("gcc_phat: inputs differ in length");
  if (xi.size() < 2) throw std::invalid_argument("gcc_phat: need at least 2 samples");
  auto energy = [](std::span<const double> x) {
    double e = 0.0;
    for (double v : x) e += v * v;
    return e;
  };
  if (!(energy(xi) > 0.0) || !(energy(xj) > 0.0)) throw NumericError("gcc_phat: zero-energy input");

  const auto a = fft::rfft(xi);
  const auto b = fft::rfft(xj);
  std::vector<std::complex<double>> cross(a.size());
  double peak = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    cross[k] = a[k] * std::conj(b[k]);
    peak = std::max(peak, std::abs(cross[k]));
  }
  const double floor = 1e-12 * peak;
  for (auto& c : cross) c /= std::max(std::abs(c), floor);
  return cross;
}

CorrelationFunction gcc_phat(std::span<const double> xi, std::span<const double> xj, const GccOptions& options,
                             double sample_rate) {
  const std::size_t n = xi.size();
  const auto phat = phat_cross_spectrum(xi, xj);
  const std::size_t up = std::max<std::size_t>(1, options.upsample);
  const std::size_t nu = n * up;

  std::vector<std::complex<double>> bins(nu / 2 + 1, {0.0, 0.0});
  for (std::size_t k = 0; k < phat.size(); ++k) bins[k] = phat[k];
  if (up > 1 && n % 2 == 0) bins[n / 2] = 0.5 * phat[n / 2].real();
  auto r = fft::irfft(bins, nu);
  if (up > 1) {
    for (double& v : r) v *= static_cast<double>(up);
  }

  CorrelationFunction cf;
  cf.max_lag = options.max_lag == 0 ? (n - 1) / 2 : std::min(options.max_lag, (n - 1) / 2);
  cf.upsample = up;
  cf.sample_rate = sample_rate;
  const auto span = static_cast<long long>(cf.max_lag * up);
  cf.values.resize(static_cast<std::size_t>(2 * span + 1));
  const auto nul = static_cast<long long>(nu);
  for (long long m = -span; m <= span; ++m) {
    cf.values[static_cast<std::size_t>(m + span)] = r[static_cast<std::size_t>(((m % nul) + nul) % nul)];
  }
  return cf;
}

BandlimitedCorrelation::BandlimitedCorrelation(std::vector<std::complex<double>> phat, std::size_t n)
    : phat_(std::move(phat)), n_(n) {
  if (phat_.size() != n_ / 2 + 1) throw std::invalid_argument("BandlimitedCorrelation: bin count must be n/2+1");
}

void BandlimitedCorrelation::evaluate(double lag, double& value, double& d1, double& d2) const {
  const double w = 2.0 * std::numbers::pi / static_cast<double>(n_);
  const std::size_t kmax = (n_ % 2 == 0) ? n_ / 2 - 1 : n_ / 2;
  const std::complex<double> rot = std::polar(1.0, w * lag);
  std::complex<double> e = rot;
  double v = 0.0, g = 0.0, h = 0.0;
  for (std::size_t k = 1; k <= kmax; ++k) {
    const std::complex<double> t = phat_[k] * e;
    const double wk = w * static_cast<double>(k);
    v += t.real();
    g -= wk * t.imag();
    h -= wk * wk * t.real();
    e *= rot;
  }
  const double scale = 2.0 / static_cast<double>(n_);
  value = scale * v;
  d1 = scale * g;
  d2 = scale * h;
}

double BandlimitedCorrelation::value(double lag) const {
  double v, d1, d2;
  evaluate(lag, v, d1, d2);
  return v;
}

SearchGrid::SearchGrid(const ArrayGeometry& geom, const SourceBox& bounds, double resolution, bool search_z,
                       std::vector<std::pair<std::size_t, std::size_t>> pairs)
    : geom_(geom), bounds_(bounds), search_z_(search_z), pairs_(std::move(pairs)) {
  if (!(resolution > 0.0) || !std::isfinite(resolution)) throw std::invalid_argument("SearchGrid: resolution must be > 0");
  if (pairs_.empty()) pairs_ = geom_.pairs();
  for (auto [i, j] : pairs_) {
    if (i >= geom_.size() || j >= geom_.size() || i == j) throw std::out_of_range("SearchGrid: bad pair");
  }
  for (std::size_t a = 0; a < 3; ++a) {
    const double extent = bounds_.hi[a] - bounds_.lo[a];
    std::size_t count = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(extent / resolution)));
    if (a == 2 && !search_z_) count = 1;
    dims_[a] = count;
    step_[a] = extent > 0.0 ? extent / static_cast<double>(count) : 0.0;
  }
  centers_.reserve(dims_[0] * dims_[1] * dims_[2]);
  for (std::size_t ix = 0; ix < dims_[0]; ++ix)
    for (std::size_t iy = 0; iy < dims_[1]; ++iy)
      for (std::size_t iz = 0; iz < dims_[2]; ++iz)
        centers_.push_back({bounds_.lo.x + (static_cast<double>(ix) + 0.5) * step_.x,
                            bounds_.lo.y + (static_cast<double>(iy) + 0.5) * step_.y,
                            bounds_.lo.z + (static_cast<double>(iz) + 0.5) * step_.z});
  delays_.resize(centers_.size() * pairs_.size());
  for (std::size_t c = 0; c < centers_.size(); ++c)
    for (std::size_t p = 0; p < pairs_.size(); ++p)
      delays_[c * pairs_.size() + p] = pair_delay_difference(centers_[c], pairs_[p].first, pairs_[p].second, geom_);
}

std::size_t SearchGrid::cell_index(std::size_t ix, std::size_t iy, std::size_t iz) const {
  return (ix * dims_[1] + iy) * dims_[2] + iz;
}

std::array<std::size_t, 3> SearchGrid::cell_coords(std::size_t cell) const {
  return {cell / (dims_[1] * dims_[2]), (cell / dims_[2]) % dims_[1], cell % dims_[2]};
}

double SearchGrid::half_diagonal() const { return 0.5 * step_.norm(); }

namespace {

void check_window(const MultichannelWindow& window, const SearchGrid& grid) {
  if (window.channels() != grid.geometry().size())
    throw std::invalid_argument("SRP: window channel count differs from the grid geometry");
}

std::vector<CorrelationFunction> pair_correlations(const MultichannelWindow& window, const SearchGrid& grid,
                                                   const SrpOptions& options) {
  double max_tdoa = 0.0;
  for (std::size_t c = 0; c < grid.size(); ++c)
    for (std::size_t p = 0; p < grid.pairs().size(); ++p)
      max_tdoa = std::max(max_tdoa, std::abs(grid.steering_delay(c, p)));
  GccOptions gopt;
  gopt.max_lag = static_cast<std::size_t>(std::ceil(max_tdoa)) + 2;
  gopt.upsample = options.upsample;
  std::vector<CorrelationFunction> out;
  for (auto [i, j] : grid.pairs())
    out.push_back(gcc_phat(window.channel(i), window.channel(j), gopt, window.sample_rate()));
  return out;
}

// Levenberg-Marquardt ascent of sum_p R_p(tau_p(x)) using Gauss-Newton curvature.
Position refine_position(const Position& start, const SearchGrid& grid,
                         const std::vector<BandlimitedCorrelation>& corr, std::size_t iterations, double& best) {
  const auto& geom = grid.geometry();
  const double k = geom.sample_rate() / geom.speed_of_sound();
  const SourceBox& box = grid.bounds();
  const std::size_t dims = grid.search_z() ? 3 : 2;

  auto clamp = [&](Position p) {
    for (std::size_t a = 0; a < 3; ++a) p[a] = std::clamp(p[a], box.lo[a], box.hi[a]);
    return p;
  };
  auto eval = [&](const Position& p, double g[3], double h[3][3]) {
    double f = 0.0;
    for (std::size_t a = 0; a < 3; ++a) {
      g[a] = 0.0;
      for (std::size_t b = 0; b < 3; ++b) h[a][b] = 0.0;
    }
    for (std::size_t q = 0; q < corr.size(); ++q) {
      const auto [i, j] = grid.pairs()[q];
      const Position di = p - geom.mic(i), dj = p - geom.mic(j);
      const double ni = std::max(di.norm(), 1e-9), nj = std::max(dj.norm(), 1e-9);
      const double tau = k * (ni - nj);
      double v, d1, d2;
      corr[q].evaluate(tau, v, d1, d2);
      f += v;
      double jac[3];
      for (std::size_t a = 0; a < 3; ++a) jac[a] = k * (di[a] / ni - dj[a] / nj);
      for (std::size_t a = 0; a < 3; ++a) {
        g[a] += d1 * jac[a];
        for (std::size_t b = 0; b < 3; ++b) h[a][b] += std::abs(d2) * jac[a] * jac[b];
      }
    }
    return f;
  };

  Position x = clamp(start);
  double g[3], h[3][3];
  double fx = eval(x, g, h);
  double lambda = 1e-3;
  for (std::size_t it = 0; it < iterations; ++it) {
    double a[3][3], rhs[3];
    double trace = 0.0;
    for (std::size_t r = 0; r < dims; ++r) trace += h[r][r];
    const double damp = lambda * std::max(trace / static_cast<double>(dims), 1e-12);
    for (std::size_t r = 0; r < 3; ++r) {
      rhs[r] = r < dims ? g[r] : 0.0;
      for (std::size_t c = 0; c < 3; ++c) a[r][c] = (r < dims && c < dims) ? h[r][c] : (r == c ? 1.0 : 0.0);
      if (r < dims) a[r][r] += damp;
    }
    // Cramer's rule on the 3x3 system.
    auto det3 = [](const double m[3][3]) {
      return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
             m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    };
    const double det = det3(a);
    if (!(std::abs(det) > 0.0) || !std::isfinite(det)) break;
    Position step;
    for (std::size_t col = 0; col < 3; ++col) {
      double m[3][3];
      for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 3; ++c) m[r][c] = c == col ? rhs[r] : a[r][c];
      step[col] = det3(m) / det;
    }
    const Position candidate = clamp(x + step);
    double gc[3], hc[3][3];
    const double fc = eval(candidate, gc, hc);
    if (fc > fx) {
      const double moved = (candidate - x).norm();
      x = candidate;
      fx = fc;
      std::copy(gc, gc + 3, g);
      for (std::size_t r = 0; r < 3; ++r) std::copy(hc[r], hc[r] + 3, h[r]);
      lambda = std::max(lambda * 0.3, 1e-9);
      if (moved < 1e-9) break;
    } else {
      lambda *= 10.0;
      if (lambda > 1e12) break;
    }
  }
  best = fx;
  return x;
}

}  // namespace

std::vector<double> srp_phat_map(const MultichannelWindow& window, const SearchGrid& grid, const SrpOptions& options) {
  check_window(window, grid);
  const auto corr = pair_correlations(window, grid, options);
  std::vector<double> power(grid.size(), 0.0);
  const std::size_t np = corr.size();
  for (std::size_t c = 0; c < grid.size(); ++c) {
    double s = 0.0;
    for (std::size_t p = 0; p < np; ++p) s += corr[p].at(grid.steering_delay(c, p));
    power[c] = s;
  }
  return power;
}

SrpEstimate srp_localize(const MultichannelWindow& window, const SearchGrid& grid, const SrpOptions& options) {
  const auto power = srp_phat_map(window, grid, options);
  const std::size_t best = static_cast<std::size_t>(std::max_element(power.begin(), power.end()) - power.begin());
  SrpEstimate est{grid.center(best), power[best], best};
  const auto dims = grid.dims();

  if (options.quadratic_interpolation) {
    const auto cc = grid.cell_coords(best);
    Position offset;
    for (std::size_t a = 0; a < 3; ++a) {
      if (cc[a] == 0 || cc[a] + 1 >= dims[a]) continue;
      auto lo = cc, hi = cc;
      --lo[a];
      ++hi[a];
      const double ym = power[grid.cell_index(lo[0], lo[1], lo[2])];
      const double yp = power[grid.cell_index(hi[0], hi[1], hi[2])];
      const double denom = ym - 2.0 * power[best] + yp;
      if (denom < 0.0) offset[a] = std::clamp(0.5 * (ym - yp) / denom, -0.5, 0.5) * grid.step()[a];
    }
    est.position = est.position + offset;
  }

  if (options.refine) {
    std::vector<BandlimitedCorrelation> corr;
    for (auto [i, j] : grid.pairs())
      corr.emplace_back(phat_cross_spectrum(window.channel(i), window.channel(j)), window.length());

    // Local maxima over the 26-neighbourhood, strongest first.
    std::vector<std::size_t> peaks;
    for (std::size_t c = 0; c < grid.size(); ++c) {
      const auto cc = grid.cell_coords(c);
      bool is_peak = true;
      for (int dx = -1; dx <= 1 && is_peak; ++dx)
        for (int dy = -1; dy <= 1 && is_peak; ++dy)
          for (int dz = -1; dz <= 1 && is_peak; ++dz) {
            if (dx == 0 && dy == 0 && dz == 0) continue;
            const long long nx = static_cast<long long>(cc[0]) + dx, ny = static_cast<long long>(cc[1]) + dy,
                            nz = static_cast<long long>(cc[2]) + dz;
            if (nx < 0 || ny < 0 || nz < 0 || nx >= static_cast<long long>(dims[0]) ||
                ny >= static_cast<long long>(dims[1]) || nz >= static_cast<long long>(dims[2]))
              continue;
            if (power[grid.cell_index(static_cast<std::size_t>(nx), static_cast<std::size_t>(ny),
                                      static_cast<std::size_t>(nz))] > power[c])
              is_peak = false;
          }
      if (is_peak) peaks.push_back(c);
    }
    std::sort(peaks.begin(), peaks.end(), [&](std::size_t a, std::size_t b) { return power[a] > power[b]; });
    if (peaks.size() > options.refine_starts) peaks.resize(options.refine_starts);

    double best_value = -std::numeric_limits<double>::infinity();
    for (std::size_t c : peaks) {
      double value = 0.0;
      const Position p = refine_position(grid.center(c), grid, corr, options.refine_iterations, value);
      if (value > best_value) {
        best_value = value;
        est.position = p;
        est.cell = c;
      }
    }
    est.power = best_value;
  }
  return est;
}

}  // namespace asl
