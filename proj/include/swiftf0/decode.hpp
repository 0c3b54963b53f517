#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>

#include "audio_io.hpp"
#include "errors.hpp"
#include "grid.hpp"
#include "matrix.hpp"

namespace swiftf0 {

struct DecoderConfig {
    std::size_t half_width = 9;
    double voicing_threshold = 0.90;

    void validate(const PitchGrid& grid) const {
        if (half_width < 1 || half_width >= grid.size()) throw ArgumentError("half width must be in [1, bins)");
        if (!(voicing_threshold > 0.0 && voicing_threshold < 1.0))
            throw ArgumentError("voicing threshold must be in (0, 1)");
    }
};

/// Row-wise softmax with max subtraction. Output is always double precision.
template <typename T>
Matrix<double> softmax_rows(const Matrix<T>& z) {
    Matrix<double> p(z.rows(), z.cols());
    for (std::size_t m = 0; m < z.rows(); ++m) {
        auto in = z.row(m);
        auto out = p.row(m);
        double peak = -INFINITY;
        for (T v : in) peak = std::max(peak, static_cast<double>(v));
        double sum = 0.0;
        for (std::size_t b = 0; b < in.size(); ++b) {
            out[b] = std::exp(static_cast<double>(in[b]) - peak);
            sum += out[b];
        }
        for (double& v : out) v /= sum;
    }
    return p;
}

struct FrameEstimate {
    double f0_hz = 0.0;
    double confidence = 0.0;
    bool voiced = false;
};

/// Inclusive bin range of the local window around `peak`, clipped to the grid.
inline std::pair<std::size_t, std::size_t> local_window(std::size_t peak, std::size_t half_width, std::size_t bins) {
    const std::size_t lo = peak > half_width ? peak - half_width : 0;
    const std::size_t hi = std::min(bins - 1, peak + half_width);
    return {lo, hi};
}

/// Local expected value: probability-weighted mean of bin centres (in Hz) within
/// half_width bins of the most probable bin. Confidence is the window's mass.
/// Exact argmax ties go to the tied bin whose window holds the most mass, then
/// to the lowest such bin.
inline FrameEstimate decode_frame(std::span<const double> probs, const PitchGrid& grid, const DecoderConfig& cfg) {
    if (probs.size() != grid.size()) throw ShapeError("probability row does not match grid size");
    const double top = *std::max_element(probs.begin(), probs.end());
    auto window_mass = [&](std::size_t peak) {
        const auto [lo, hi] = local_window(peak, cfg.half_width, grid.size());
        double mass = 0.0;
        for (std::size_t b = lo; b <= hi; ++b) mass += probs[b];
        return mass;
    };
    std::size_t peak = probs.size();
    double mass = -1.0;
    for (std::size_t b = 0; b < probs.size(); ++b) {
        if (probs[b] != top) continue;
        const double m = window_mass(b);
        if (m > mass) {
            peak = b;
            mass = m;
        }
    }

    const auto [lo, hi] = local_window(peak, cfg.half_width, grid.size());
    double weighted = 0.0;
    for (std::size_t b = lo; b <= hi; ++b) weighted += probs[b] * grid.centers()[b];
    FrameEstimate e;
    e.f0_hz = mass > 0.0 ? weighted / mass : grid.centers()[peak];
    e.f0_hz = std::clamp(e.f0_hz, grid.centers()[lo], grid.centers()[hi]);
    e.confidence = std::clamp(mass, 0.0, 1.0);
    e.voiced = e.confidence >= cfg.voicing_threshold;
    return e;
}

/// Frame-by-frame decoding of logits into a contour. Every frame carries its
/// raw pitch estimate; `voiced` reflects the confidence threshold only.
template <typename T>
PitchContour decode_contour(const Matrix<T>& logits, const PitchGrid& grid, const DecoderConfig& cfg,
                            double hop_seconds = kDefaultHopSeconds) {
    cfg.validate(grid);
    if (logits.rows() > 0 && logits.cols() != grid.size()) throw ShapeError("logit width does not match grid size");
    const auto probs = softmax_rows(logits);
    PitchContour c;
    c.hop_seconds = hop_seconds;
    c.frames.reserve(logits.rows());
    for (std::size_t m = 0; m < probs.rows(); ++m) {
        const auto e = decode_frame(probs.row(m), grid, cfg);
        c.frames.push_back({e.f0_hz, e.confidence, e.voiced});
    }
    return c;
}

} // namespace swiftf0
