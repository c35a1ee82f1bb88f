#include "asl/fft.hpp"

#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

#include <fftw3.h>

namespace asl::fft {
namespace {

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};
template <typename T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

template <typename T>
FftwBuffer<T> alloc(std::size_t n) {
  auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * (n == 0 ? 1 : n)));
  if (p == nullptr) throw std::bad_alloc();
  return FftwBuffer<T>(p);
}

struct PlanPair {
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
};

// Planner calls are not thread-safe in FFTW; executes on distinct buffers are.
class PlanCache {
 public:
  ~PlanCache() {
    for (auto& [n, p] : plans_) {
      fftw_destroy_plan(p.forward);
      fftw_destroy_plan(p.backward);
    }
  }

  PlanPair get(std::size_t n) {
    std::lock_guard lock(mu_);
    auto it = plans_.find(n);
    if (it != plans_.end()) return it->second;
    auto in = alloc<double>(n);
    auto out = alloc<fftw_complex>(n / 2 + 1);
    const int ni = static_cast<int>(n);
    PlanPair p;
    p.forward = fftw_plan_dft_r2c_1d(ni, in.get(), out.get(), FFTW_ESTIMATE);
    p.backward = fftw_plan_dft_c2r_1d(ni, out.get(), in.get(), FFTW_ESTIMATE);
    if (p.forward == nullptr || p.backward == nullptr) throw std::runtime_error("fftw planning failed");
    plans_.emplace(n, p);
    return p;
  }

 private:
  std::mutex mu_;
  std::map<std::size_t, PlanPair> plans_;
};

PlanCache& cache() {
  static PlanCache c;
  return c;
}

}  // namespace

std::vector<Complex> rfft(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) throw std::invalid_argument("rfft: empty input");
  const PlanPair plan = cache().get(n);
  auto in = alloc<double>(n);
  auto out = alloc<fftw_complex>(n / 2 + 1);
  std::memcpy(in.get(), x.data(), n * sizeof(double));
  fftw_execute_dft_r2c(plan.forward, in.get(), out.get());
  std::vector<Complex> bins(n / 2 + 1);
  for (std::size_t k = 0; k < bins.size(); ++k) bins[k] = {out[k][0], out[k][1]};
  return bins;
}

std::vector<double> irfft(std::span<const Complex> bins, std::size_t n) {
  if (n == 0 || bins.size() != n / 2 + 1) throw std::invalid_argument("irfft: bin count must be n/2+1");
  const PlanPair plan = cache().get(n);
  auto in = alloc<fftw_complex>(n / 2 + 1);
  auto out = alloc<double>(n);
  for (std::size_t k = 0; k < bins.size(); ++k) {
    in[k][0] = bins[k].real();
    in[k][1] = bins[k].imag();
  }
  in[0][1] = 0.0;
  if (n % 2 == 0) in[n / 2][1] = 0.0;
  fftw_execute_dft_c2r(plan.backward, in.get(), out.get());
  std::vector<double> y(n);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = out[i] * scale;
  return y;
}

}  // namespace asl::fft
