#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "audio_io.hpp"
#include "errors.hpp"
#include "fft.hpp"
#include "matrix.hpp"

namespace swiftf0 {

struct StftConfig {
    std::size_t window_len = 1024;
    std::size_t hop = 256;
    int sample_rate_hz = 16000;
    double f_min_hz = kPitchFloorHz;
    double f_max_hz = kPitchCeilHz;
    double epsilon = 1e-8;

    std::size_t full_bins() const noexcept { return window_len / 2 + 1; }
    double bin_spacing_hz() const noexcept { return static_cast<double>(sample_rate_hz) / window_len; }
    std::size_t k_min() const { return bin_index(f_min_hz); }
    std::size_t k_max() const { return bin_index(f_max_hz); }
    std::size_t band_bins() const { return k_max() - k_min() + 1; }
    double hop_seconds() const noexcept { return static_cast<double>(hop) / sample_rate_hz; }

    void validate() const {
        if (!is_power_of_two(window_len) || window_len < 4) throw ArgumentError("window length must be a power of two");
        if (hop == 0 || window_len % hop != 0) throw ArgumentError("hop must divide the window length");
        if (sample_rate_hz <= 0) throw ArgumentError("sample rate must be positive");
        if (!(f_min_hz > 0.0 && f_min_hz < f_max_hz && f_max_hz < sample_rate_hz / 2.0))
            throw ArgumentError("need 0 < f_min < f_max < f_s/2");
        if (!(epsilon > 0.0)) throw ArgumentError("epsilon must be positive");
    }

private:
    std::size_t bin_index(double hz) const {
        return static_cast<std::size_t>(std::round(hz * static_cast<double>(window_len) / sample_rate_hz));
    }
};

/// Band-limited log-magnitude spectrogram: rows are frames, columns are the
/// STFT bins k_min..k_max.
struct Spectrogram {
    Matrix<double> values;
    std::vector<double> frame_times;
    StftConfig config;

    std::size_t frames() const noexcept { return values.rows(); }
};

/// Periodic Hann window, w[n] = 0.5 (1 - cos(2 pi n / N)).
inline std::vector<double> hann_window(std::size_t n) {
    if (n < 2) throw ArgumentError("Hann window needs at least 2 points");
    std::vector<double> w(n);
    const double scale = 2.0 * std::numbers::pi / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = 0.5 * (1.0 - std::cos(scale * static_cast<double>(i)));
    return w;
}

inline std::size_t stft_frame_count(std::size_t length, const StftConfig& cfg) {
    if (length < cfg.window_len) return 0;
    return (length - cfg.window_len) / cfg.hop + 1;
}

/// |STFT| over bins 0..N/2. Frame m covers samples [m H, m H + N); there is no
/// centre padding and a trailing partial frame is dropped.
inline Matrix<double> stft_magnitude(const AudioBuffer& buf, const StftConfig& cfg) {
    cfg.validate();
    if (buf.sample_rate_hz != cfg.sample_rate_hz)
        throw ArgumentError("audio is at " + std::to_string(buf.sample_rate_hz) + " Hz, expected " +
                            std::to_string(cfg.sample_rate_hz) + " Hz; resample first");
    if (buf.samples.size() < cfg.window_len)
        throw InputTooShort(std::to_string(buf.samples.size()) + " samples, need at least " +
                            std::to_string(cfg.window_len));

    const std::size_t frames = stft_frame_count(buf.samples.size(), cfg);
    const auto window = hann_window(cfg.window_len);
    RealFft fft(cfg.window_len);
    Matrix<double> out(frames, cfg.full_bins());
    std::vector<double> frame(cfg.window_len);
    for (std::size_t m = 0; m < frames; ++m) {
        const double* x = buf.samples.data() + m * cfg.hop;
        for (std::size_t n = 0; n < cfg.window_len; ++n) frame[n] = x[n] * window[n];
        fft.magnitude(frame, out.row(m));
    }
    return out;
}

/// Keeps columns k_min..k_max of a full half-spectrum matrix.
inline Matrix<double> band_select(const Matrix<double>& full, const StftConfig& cfg) {
    if (full.cols() != cfg.full_bins())
        throw ShapeError("expected " + std::to_string(cfg.full_bins()) + " columns, got " +
                         std::to_string(full.cols()));
    const std::size_t lo = cfg.k_min();
    const std::size_t k = cfg.band_bins();
    Matrix<double> out(full.rows(), k);
    for (std::size_t m = 0; m < full.rows(); ++m) {
        auto src = full.row(m);
        std::copy(src.begin() + static_cast<std::ptrdiff_t>(lo), src.begin() + static_cast<std::ptrdiff_t>(lo + k),
                  out.row(m).begin());
    }
    return out;
}

inline Spectrogram log_compress(const Matrix<double>& mag, const StftConfig& cfg) {
    Spectrogram s;
    s.config = cfg;
    s.values = Matrix<double>(mag.rows(), mag.cols());
    for (std::size_t i = 0; i < mag.size(); ++i) {
        const double v = mag.data()[i];
        if (!(v >= 0.0)) throw DomainError("log_compress needs non-negative magnitudes");
        s.values.data()[i] = std::log(v + cfg.epsilon);
    }
    s.frame_times.resize(mag.rows());
    for (std::size_t m = 0; m < mag.rows(); ++m)
        s.frame_times[m] = static_cast<double>(m * cfg.hop) / cfg.sample_rate_hz;
    return s;
}

/// Full front-end: STFT magnitude, band selection, log compression.
inline Spectrogram compute_spectrogram(const AudioBuffer& buf, const StftConfig& cfg = {}) {
    return log_compress(band_select(stft_magnitude(buf, cfg), cfg), cfg);
}

} // namespace swiftf0
