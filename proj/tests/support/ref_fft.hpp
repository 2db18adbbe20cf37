#pragma once
// Reference spectrum analysis for resampler checks: recursive Cooley-Tukey,
// written independently of the library's FFT.

#include <cmath>
#include <complex>
#include <vector>

namespace testsupport {

inline void ref_fft_recursive(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    if (n <= 1) {
        return;
    }
    std::vector<std::complex<double>> even(n / 2), odd(n / 2);
    for (std::size_t i = 0; i < n / 2; ++i) {
        even[i] = a[2 * i];
        odd[i] = a[2 * i + 1];
    }
    ref_fft_recursive(even);
    ref_fft_recursive(odd);
    for (std::size_t k = 0; k < n / 2; ++k) {
        const double ang = -2.0 * 3.14159265358979323846 *
                           static_cast<double>(k) / static_cast<double>(n);
        const std::complex<double> t =
            std::polar(1.0, ang) * odd[k];
        a[k] = even[k] + t;
        a[k + n / 2] = even[k] - t;
    }
}

// Hann-windowed magnitude peak of the first `n` samples (n must be a power
// of two). Returns the peak's frequency in Hz.
inline double dominant_frequency(const std::vector<double>& samples,
                                 std::size_t n, double rate) {
    std::vector<std::complex<double>> buf(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double w =
            0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 *
                                 static_cast<double>(i) /
                                 static_cast<double>(n - 1));
        buf[i] = std::complex<double>(samples[i] * w, 0.0);
    }
    ref_fft_recursive(buf);
    std::size_t peak = 1;
    double peak_mag = 0.0;
    for (std::size_t k = 1; k < n / 2; ++k) {
        const double m = std::abs(buf[k]);
        if (m > peak_mag) {
            peak_mag = m;
            peak = k;
        }
    }
    return static_cast<double>(peak) * rate / static_cast<double>(n);
}

}  // namespace testsupport
