#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "audio_io.hpp"
#include "dsp.hpp"
#include "errors.hpp"
#include "noise.hpp"

namespace swiftf0 {

enum class Trajectory { constant, glide, vibrato };

inline std::string to_string(Trajectory t) {
    switch (t) {
    case Trajectory::constant: return "constant";
    case Trajectory::glide: return "glide";
    case Trajectory::vibrato: return "vibrato";
    }
    return "unknown";
}

inline Trajectory parse_trajectory(const std::string& s) {
    if (s == "constant") return Trajectory::constant;
    if (s == "glide") return Trajectory::glide;
    if (s == "vibrato") return Trajectory::vibrato;
    throw ArgumentError("unknown trajectory '" + s + "'");
}

/// Parametric harmonic tone with an analytic F0 curve. The voiced span is
/// [lead_silence_s, duration_s - tail_silence_s); the rest is digital silence.
struct SynthSpec {
    Trajectory trajectory = Trajectory::constant;
    double f0_hz = 220.0;       // constant value, glide start, or vibrato centre
    double f0_end_hz = 220.0;   // glide end (linear in Hz across the voiced span)
    double vibrato_rate_hz = 5.0;
    double vibrato_depth_cents = 50.0;
    int harmonics = 1;
    double rolloff = 1.0;       // a_h = h^-rolloff
    double duration_s = 1.0;
    double lead_silence_s = 0.0;
    double tail_silence_s = 0.0;
    int sample_rate_hz = 16000;
    double peak = 0.9;
    std::uint64_t seed = 0;     // initial phases of the upper harmonics

    double voiced_seconds() const noexcept { return duration_s - lead_silence_s - tail_silence_s; }

    /// Instantaneous F0 at `t` seconds after voicing onset.
    double f0_at(double t) const {
        switch (trajectory) {
        case Trajectory::constant: return f0_hz;
        case Trajectory::glide: {
            const double len = voiced_seconds();
            const double u = len > 0.0 ? std::clamp(t / len, 0.0, 1.0) : 0.0;
            return f0_hz + (f0_end_hz - f0_hz) * u;
        }
        case Trajectory::vibrato:
            return f0_hz * std::exp2(vibrato_depth_cents / 1200.0 *
                                     std::sin(2.0 * std::numbers::pi * vibrato_rate_hz * t));
        }
        return f0_hz;
    }

    /// Lowest and highest F0 the trajectory can reach.
    std::pair<double, double> f0_range() const {
        switch (trajectory) {
        case Trajectory::constant: return {f0_hz, f0_hz};
        case Trajectory::glide: return {std::min(f0_hz, f0_end_hz), std::max(f0_hz, f0_end_hz)};
        case Trajectory::vibrato: {
            const double r = std::exp2(std::abs(vibrato_depth_cents) / 1200.0);
            return {f0_hz / r, f0_hz * r};
        }
        }
        return {f0_hz, f0_hz};
    }

    void validate() const {
        const auto [lo, hi] = f0_range();
        if (!(lo >= kPitchFloorHz && hi <= kPitchCeilHz))
            throw ArgumentError("F0 trajectory leaves [46.875, 2093.75] Hz");
        if (harmonics < 1) throw ArgumentError("need at least one harmonic");
        if (!(duration_s > 0.0) || lead_silence_s < 0.0 || tail_silence_s < 0.0 || !(voiced_seconds() > 0.0))
            throw ArgumentError("durations must leave a positive voiced span");
        if (sample_rate_hz <= 0 || hi >= sample_rate_hz / 2.0) throw ArgumentError("F0 must stay below Nyquist");
        if (!(peak > 0.0 && peak <= 1.0)) throw ArgumentError("peak must be in (0, 1]");
    }
};

struct SynthResult {
    AudioBuffer audio;
    PitchContour truth;
};

/// Renders the tone and its exact per-frame ground truth. Phase is accumulated
/// sample by sample from the instantaneous F0, so the signal stays continuous
/// through glides and vibrato. Harmonics that would reach Nyquist at the
/// trajectory's highest F0 are left out.
///
/// Truth frame m uses the analysis frames of `stft`: its row sits at m * hop,
/// and its F0 is the instantaneous F0 at the window centre m * hop + N / 2. A
/// frame is voiced when that centre sample lies in the voiced span.
inline SynthResult synth_example(const SynthSpec& spec, const StftConfig& stft = {}) {
    spec.validate();
    const double fs = spec.sample_rate_hz;
    const auto total = static_cast<std::size_t>(std::llround(spec.duration_s * fs));
    const auto start = static_cast<std::size_t>(std::llround(spec.lead_silence_s * fs));
    const auto stop = std::max(start, total - static_cast<std::size_t>(std::llround(spec.tail_silence_s * fs)));

    const double top = spec.f0_range().second;
    int harmonics = 1;
    while (harmonics < spec.harmonics && (harmonics + 1) * top < 0.5 * fs) ++harmonics;
    std::vector<double> amp(harmonics), phase0(harmonics, 0.0);
    Rng rng(spec.seed);
    for (int h = 0; h < harmonics; ++h) {
        amp[h] = std::pow(static_cast<double>(h + 1), -spec.rolloff);
        if (h > 0) phase0[h] = 2.0 * std::numbers::pi * rng.uniform();
    }

    SynthResult out;
    out.audio.sample_rate_hz = spec.sample_rate_hz;
    out.audio.samples.assign(total, 0.0);
    double cycles = 0.0;  // accumulated phase in cycles
    double peak = 0.0;
    for (std::size_t n = start; n < stop; ++n) {
        const double t = static_cast<double>(n - start) / fs;
        double s = 0.0;
        for (int h = 0; h < harmonics; ++h)
            s += amp[h] * std::sin(2.0 * std::numbers::pi * (h + 1) * cycles + phase0[h]);
        out.audio.samples[n] = s;
        peak = std::max(peak, std::abs(s));
        cycles += spec.f0_at(t) / fs;
        cycles -= std::floor(cycles);
    }
    if (peak > 0.0)
        for (auto& v : out.audio.samples) v *= spec.peak / peak;

    out.truth.hop_seconds = static_cast<double>(stft.hop) / stft.sample_rate_hz;
    const std::size_t frames = stft_frame_count(total, stft);
    out.truth.frames.resize(frames);
    for (std::size_t m = 0; m < frames; ++m) {
        const std::size_t centre = m * stft.hop + stft.window_len / 2;
        auto& f = out.truth.frames[m];
        f.confidence = 1.0;
        if (centre >= start && centre < stop) {
            f.voiced = true;
            f.f0_hz = spec.f0_at(static_cast<double>(centre - start) / fs);
        }
    }
    return out;
}

/// Ranges for drawing random synthesis specs.
struct SynthRanges {
    double f0_min_hz = 100.0;
    double f0_max_hz = 1000.0;
    int harmonics_min = 3;
    int harmonics_max = 10;
    double rolloff_min = 0.5;
    double rolloff_max = 2.0;
    double vibrato_rate_min = 3.0;
    double vibrato_rate_max = 8.0;
    double vibrato_depth_max_cents = 100.0;
    double duration_s = 1.0;
    double silence_min_s = 0.0;
    double silence_max_s = 0.0;

    void validate() const {
        if (!(f0_min_hz >= kPitchFloorHz && f0_min_hz < f0_max_hz && f0_max_hz <= kPitchCeilHz))
            throw ArgumentError("F0 range must lie within [46.875, 2093.75] Hz");
        if (harmonics_min < 1 || harmonics_min > harmonics_max) throw ArgumentError("bad harmonic range");
        if (rolloff_min > rolloff_max || silence_min_s > silence_max_s || silence_min_s < 0.0)
            throw ArgumentError("bad range ordering");
    }
};

/// Draws a spec with trajectory type uniform over {constant, glide, vibrato}
/// and all F0 values log-uniform inside the range.
inline SynthSpec random_synth_spec(Rng& rng, const SynthRanges& r) {
    r.validate();
    const double log_lo = std::log(r.f0_min_hz), log_hi = std::log(r.f0_max_hz);
    auto log_uniform = [&](double lo, double hi) { return std::exp(rng.uniform(lo, hi)); };
    SynthSpec s;
    s.trajectory = static_cast<Trajectory>(rng.index(3));
    s.harmonics = r.harmonics_min + static_cast<int>(rng.index(static_cast<std::size_t>(r.harmonics_max - r.harmonics_min + 1)));
    s.rolloff = rng.uniform(r.rolloff_min, r.rolloff_max);
    s.duration_s = r.duration_s;
    s.lead_silence_s = rng.uniform(r.silence_min_s, r.silence_max_s);
    s.tail_silence_s = rng.uniform(r.silence_min_s, r.silence_max_s);
    s.seed = rng.next_seed();
    switch (s.trajectory) {
    case Trajectory::constant: s.f0_hz = s.f0_end_hz = log_uniform(log_lo, log_hi); break;
    case Trajectory::glide:
        s.f0_hz = log_uniform(log_lo, log_hi);
        s.f0_end_hz = log_uniform(log_lo, log_hi);
        break;
    case Trajectory::vibrato: {
        s.vibrato_rate_hz = rng.uniform(r.vibrato_rate_min, r.vibrato_rate_max);
        s.vibrato_depth_cents = rng.uniform(0.0, r.vibrato_depth_max_cents);
        const double margin = std::log(std::exp2(s.vibrato_depth_cents / 1200.0));
        s.f0_hz = s.f0_end_hz = log_uniform(log_lo + margin, log_hi - margin);
        break;
    }
    }
    return s;
}

} // namespace swiftf0
