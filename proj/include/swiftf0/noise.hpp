#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "audio_io.hpp"
#include "errors.hpp"

namespace swiftf0 {

/// Seeded random source shared by augmentation, synthesis and noisy evaluation.
/// Uniform and normal draws are derived from raw 64-bit output so a seed gives
/// the same stream on every standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n; }

    /// Standard normal via Box-Muller; the second variate is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::uint64_t next_seed() { return engine_(); }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

inline double mean_square(std::span<const double> x) {
    if (x.empty()) return 0.0;
    double s = 0.0;
    for (double v : x) s += v * v;
    return s / static_cast<double>(x.size());
}

/// Scale that puts noise of power p_noise at `snr_db` below a signal of power
/// p_signal: gamma = sqrt(p_signal / (p_noise * 10^(snr/10))). An infinite SNR
/// gives gamma = 0.
inline double noise_scale(double p_signal, double p_noise, double snr_db) {
    if (!(p_noise > 0.0)) throw DomainError("noise power must be positive");
    if (std::isinf(snr_db) && snr_db > 0) return 0.0;
    return std::sqrt(p_signal / (p_noise * std::pow(10.0, snr_db / 10.0)));
}

/// Measured SNR in dB between a clean signal and the additive noise component.
inline double measured_snr_db(std::span<const double> clean, std::span<const double> noise) {
    return 10.0 * std::log10(mean_square(clean) / mean_square(noise));
}

inline std::vector<double> gaussian_noise(std::size_t n, Rng& rng) {
    std::vector<double> out(n);
    for (auto& v : out) v = rng.normal();
    return out;
}

/// A length-n excerpt of `source` from a random offset, looping when the
/// source is shorter than n.
inline std::vector<double> noise_excerpt(const AudioBuffer& source, std::size_t n, Rng& rng) {
    if (source.samples.empty()) throw ArgumentError("empty noise source");
    const std::size_t len = source.samples.size();
    const std::size_t start = rng.index(len);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = source.samples[(start + i) % len];
    return out;
}

/// Background noise sqrt(alpha) * env + sqrt(1 - alpha) * gauss. With no
/// environmental sources alpha is forced to 0.
inline std::vector<double> background_noise(std::size_t n, std::span<const AudioBuffer> sources, double alpha,
                                            Rng& rng) {
    if (sources.empty()) alpha = 0.0;
    auto out = gaussian_noise(n, rng);
    const double g = std::sqrt(1.0 - alpha);
    for (auto& v : out) v *= g;
    if (alpha > 0.0) {
        const auto env = noise_excerpt(sources[rng.index(sources.size())], n, rng);
        const double e = std::sqrt(alpha);
        for (std::size_t i = 0; i < n; ++i) out[i] += e * env[i];
    }
    return out;
}

} // namespace swiftf0
