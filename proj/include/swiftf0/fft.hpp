#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "errors.hpp"

namespace swiftf0 {

inline bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

/// Real-input radix-2 FFT of a fixed length. The length-N real transform is
/// computed as a length-N/2 complex transform on packed even/odd samples
/// followed by a split step. Twiddles and the bit-reversal table are built once.
class RealFft {
public:
    explicit RealFft(std::size_t n) : n_(n), half_(n / 2) {
        if (n < 4 || !is_power_of_two(n)) throw ArgumentError("FFT length must be a power of two >= 4");
        const double tau = 2.0 * std::numbers::pi;
        twiddle_.resize(half_ / 2);
        for (std::size_t k = 0; k < twiddle_.size(); ++k)
            twiddle_[k] = std::polar(1.0, -tau * static_cast<double>(k) / static_cast<double>(half_));
        split_.resize(half_ + 1);
        for (std::size_t k = 0; k <= half_; ++k)
            split_[k] = std::polar(1.0, -tau * static_cast<double>(k) / static_cast<double>(n_));
        bitrev_.resize(half_);
        std::size_t bits = 0;
        while ((std::size_t{1} << bits) < half_) ++bits;
        for (std::size_t i = 0; i < half_; ++i) {
            std::size_t r = 0;
            for (std::size_t b = 0; b < bits; ++b)
                if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
            bitrev_[i] = r;
        }
        work_.resize(half_);
    }

    std::size_t size() const noexcept { return n_; }
    std::size_t bins() const noexcept { return half_ + 1; }

    /// Writes the N/2 + 1 non-negative frequency bins of the DFT of `in`.
    void forward(std::span<const double> in, std::span<std::complex<double>> out) {
        if (in.size() != n_ || out.size() != half_ + 1) throw ShapeError("FFT buffer size mismatch");
        for (std::size_t i = 0; i < half_; ++i) work_[bitrev_[i]] = {in[2 * i], in[2 * i + 1]};
        transform_in_place();

        out[0] = {work_[0].real() + work_[0].imag(), 0.0};
        out[half_] = {work_[0].real() - work_[0].imag(), 0.0};
        for (std::size_t k = 1; k < half_; ++k) {
            const auto a = work_[k];
            const auto b = std::conj(work_[half_ - k]);
            const auto even = 0.5 * (a + b);
            const auto odd = std::complex<double>(0.0, -0.5) * (a - b);
            out[k] = even + split_[k] * odd;
        }
    }

    /// Magnitudes of the N/2 + 1 non-negative frequency bins.
    void magnitude(std::span<const double> in, std::span<double> out) {
        if (out.size() != half_ + 1) throw ShapeError("magnitude buffer size mismatch");
        spectrum_.resize(half_ + 1);
        forward(in, spectrum_);
        for (std::size_t k = 0; k <= half_; ++k) out[k] = std::abs(spectrum_[k]);
    }

private:
    void transform_in_place() {
        for (std::size_t len = 2; len <= half_; len <<= 1) {
            const std::size_t step = half_ / len;
            const std::size_t h = len / 2;
            for (std::size_t start = 0; start < half_; start += len) {
                for (std::size_t j = 0; j < h; ++j) {
                    const auto t = twiddle_[j * step] * work_[start + j + h];
                    const auto u = work_[start + j];
                    work_[start + j] = u + t;
                    work_[start + j + h] = u - t;
                }
            }
        }
    }

    std::size_t n_;
    std::size_t half_;
    std::vector<std::complex<double>> twiddle_;
    std::vector<std::complex<double>> split_;
    std::vector<std::size_t> bitrev_;
    std::vector<std::complex<double>> work_;
    std::vector<std::complex<double>> spectrum_;
};

} // namespace swiftf0
