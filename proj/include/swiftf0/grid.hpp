#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "audio_io.hpp"
#include "errors.hpp"

namespace swiftf0 {

/// Signed pitch difference in cents, 1200 log2(f_pred / f_true).
inline double cents_error(double f_pred, double f_true) {
    if (!(f_pred > 0.0) || !(f_true > 0.0)) throw DomainError("cents_error needs positive frequencies");
    return 1200.0 * std::log2(f_pred / f_true);
}

/// Log-spaced pitch classes: centre b is f_min * 2^(b * step), with step chosen
/// so the last centre lands on f_max.
class PitchGrid {
public:
    explicit PitchGrid(std::size_t bins = 200, double f_min_hz = kPitchFloorHz, double f_max_hz = kPitchCeilHz)
        : bins_(bins), f_min_(f_min_hz), f_max_(f_max_hz) {
        if (bins < 2) throw ArgumentError("pitch grid needs at least 2 bins");
        if (!(f_min_hz > 0.0 && f_min_hz < f_max_hz)) throw ArgumentError("need 0 < f_min < f_max");
        step_ = std::log2(f_max_ / f_min_) / static_cast<double>(bins_ - 1);
        centers_.resize(bins_);
        log_centers_.resize(bins_);
        for (std::size_t b = 0; b < bins_; ++b) {
            centers_[b] = f_min_ * std::exp2(static_cast<double>(b) * step_);
            log_centers_[b] = std::log(centers_[b]);
        }
        centers_.back() = f_max_;
        log_centers_.back() = std::log(f_max_);
    }

    std::size_t size() const noexcept { return bins_; }
    double f_min() const noexcept { return f_min_; }
    double f_max() const noexcept { return f_max_; }
    /// Octaves per bin.
    double step() const noexcept { return step_; }
    double cents_per_bin() const noexcept { return 1200.0 * step_; }

    double bin_center(std::size_t b) const {
        if (b >= bins_) throw IndexError("bin " + std::to_string(b) + " outside grid of " + std::to_string(bins_));
        return centers_[b];
    }

    /// Nearest bin in log-frequency, clamped to the grid.
    std::size_t freq_to_bin(double hz) const {
        if (!(hz > 0.0)) throw DomainError("frequency must be positive");
        const double pos = std::round(std::log2(hz / f_min_) / step_);
        return static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(bins_ - 1)));
    }

    const std::vector<double>& centers() const noexcept { return centers_; }
    /// Natural log of each centre; the regression target lives in this space.
    const std::vector<double>& log_centers() const noexcept { return log_centers_; }

private:
    std::size_t bins_;
    double f_min_;
    double f_max_;
    double step_ = 0.0;
    std::vector<double> centers_;
    std::vector<double> log_centers_;
};

} // namespace swiftf0
