#pragma once

#include <complex>
#include <span>
#include <vector>

namespace asl::fft {

using Complex = std::complex<double>;

/// Real-to-complex DFT: N real samples -> N/2+1 bins, X[k] = sum_n x[n] e^{-j 2 pi k n / N}.
std::vector<Complex> rfft(std::span<const double> x);

/// Inverse of rfft for a length-n signal, including the 1/n normalization.
/// The imaginary parts of bin 0 and (for even n) bin n/2 are ignored.
std::vector<double> irfft(std::span<const Complex> bins, std::size_t n);

}  // namespace asl::fft
