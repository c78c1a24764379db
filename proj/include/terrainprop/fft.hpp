#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

namespace terrainprop::fft {

using Complex = std::complex<double>;

/// In-place iterative radix-2 FFT. data.size() must be a power of two.
/// inverse = true computes the unscaled inverse transform.
inline void transform(std::span<Complex> data, bool inverse) {
    const std::size_t n = data.size();
    if (n <= 1) return;
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(data[i], data[j]);
    }
    std::vector<Complex> twiddle(n / 2);
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double angle = (inverse ? 2.0 : -2.0) * std::numbers::pi / static_cast<double>(len);
        const std::size_t half = len / 2;
        // Direct twiddles keep the error at O(log n) eps instead of the recurrence's O(n) eps.
        for (std::size_t k = 0; k < half; ++k) twiddle[k] = std::polar(1.0, angle * static_cast<double>(k));
        for (std::size_t start = 0; start < n; start += len) {
            for (std::size_t k = 0; k < half; ++k) {
                const Complex w = twiddle[k];
                const Complex u = data[start + k];
                const Complex v = data[start + k + half] * w;
                data[start + k] = u + v;
                data[start + k + half] = u - v;
            }
        }
    }
}

inline std::size_t padded_size(std::size_t min_size) { return std::bit_ceil(std::max<std::size_t>(min_size, 1)); }

/// Linear convolution, output length a.size() + b.size() - 1.
inline std::vector<Complex> convolve(std::span<const Complex> a, std::span<const Complex> b) {
    if (a.empty() || b.empty()) return {};
    const std::size_t out_len = a.size() + b.size() - 1;
    const std::size_t n = padded_size(out_len);
    std::vector<Complex> fa(n), fb(n);
    std::copy(a.begin(), a.end(), fa.begin());
    std::copy(b.begin(), b.end(), fb.begin());
    transform(fa, false);
    transform(fb, false);
    for (std::size_t i = 0; i < n; ++i) fa[i] *= fb[i];
    transform(fa, true);
    const double scale = 1.0 / static_cast<double>(n);
    fa.resize(out_len);
    for (auto& v : fa) v *= scale;
    return fa;
}

}  // namespace terrainprop::fft
