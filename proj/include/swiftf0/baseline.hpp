#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "audio_io.hpp"
#include "dsp.hpp"

namespace swiftf0 {

struct AcfConfig {
    StftConfig stft;
    double voicing_threshold = 0.5;
    // Earliest local maximum reaching this fraction of the best peak wins,
    // which keeps the estimator off sub-octave lags.
    double peak_ratio = 0.9;
};

/// Model-free reference estimator: normalized autocorrelation per analysis
/// frame, searched over lags covering [f_min, f_max]. Confidence is the
/// normalized peak height.
inline PitchContour acf_baseline(const AudioBuffer& input, const AcfConfig& cfg = {}) {
    const auto& stft = cfg.stft;
    stft.validate();
    const AudioBuffer audio =
        input.sample_rate_hz == stft.sample_rate_hz ? input : resample_linear(input, stft.sample_rate_hz);
    if (audio.samples.size() < stft.window_len) throw InputTooShort("audio shorter than one analysis window");

    const double fs = stft.sample_rate_hz;
    const auto lag_min = static_cast<std::size_t>(std::floor(fs / stft.f_max_hz));
    const auto lag_max = std::min(static_cast<std::size_t>(std::ceil(fs / stft.f_min_hz)), stft.window_len / 2);
    const std::size_t frames = stft_frame_count(audio.samples.size(), stft);

    PitchContour out;
    out.hop_seconds = stft.hop_seconds();
    out.frames.resize(frames);
    std::vector<double> r(lag_max + 2, 0.0), prefix(stft.window_len + 1, 0.0);
    for (std::size_t m = 0; m < frames; ++m) {
        const double* x = audio.samples.data() + m * stft.hop;
        const std::size_t n = stft.window_len;
        for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i] * x[i];
        if (prefix[n] <= 1e-12) continue;  // silence: unvoiced, no estimate

        for (std::size_t lag = lag_min - 1; lag <= lag_max + 1 && lag < n; ++lag) {
            double acc = 0.0;
            for (std::size_t i = 0; i + lag < n; ++i) acc += x[i] * x[i + lag];
            const double e0 = prefix[n - lag], e1 = prefix[n] - prefix[lag];
            r[std::min(lag, r.size() - 1)] = e0 > 0.0 && e1 > 0.0 ? acc / std::sqrt(e0 * e1) : 0.0;
        }
        double best = 0.0;
        for (std::size_t lag = lag_min; lag <= lag_max; ++lag) best = std::max(best, r[lag]);
        if (best <= 0.0) continue;
        std::size_t pick = 0;
        for (std::size_t lag = lag_min; lag <= lag_max; ++lag) {
            const bool local_max = r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1];
            if (local_max && r[lag] >= cfg.peak_ratio * best) {
                pick = lag;
                break;
            }
        }
        if (pick == 0) continue;

        // Parabolic refinement around the chosen lag.
        const double a = r[pick - 1], b = r[pick], c = r[pick + 1];
        const double denom = a - 2.0 * b + c;
        const double shift = denom < 0.0 ? std::clamp(0.5 * (a - c) / denom, -0.5, 0.5) : 0.0;
        const double f0 = std::clamp(fs / (static_cast<double>(pick) + shift), stft.f_min_hz, stft.f_max_hz);

        auto& f = out.frames[m];
        f.f0_hz = f0;
        f.confidence = std::clamp(b, 0.0, 1.0);
        f.voiced = f.confidence >= cfg.voicing_threshold;
    }
    return out;
}

} // namespace swiftf0
