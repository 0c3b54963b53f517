#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "decode.hpp"
#include "errors.hpp"
#include "grid.hpp"
#include "matrix.hpp"

namespace swiftf0 {

/// Per-frame supervision for a stack of logit rows. Unvoiced frames are
/// ignored by both loss terms.
struct FrameTargets {
    std::vector<std::size_t> bins;
    std::vector<double> f0_hz;
    std::vector<std::uint8_t> voiced;

    std::size_t size() const noexcept { return voiced.size(); }
    std::size_t voiced_count() const noexcept {
        std::size_t n = 0;
        for (auto v : voiced) n += v != 0;
        return n;
    }
    void append(const FrameTargets& o) {
        bins.insert(bins.end(), o.bins.begin(), o.bins.end());
        f0_hz.insert(f0_hz.end(), o.f0_hz.begin(), o.f0_hz.end());
        voiced.insert(voiced.end(), o.voiced.begin(), o.voiced.end());
    }
};

/// Builds targets from per-frame ground truth; target bins are the nearest
/// grid bins in log frequency.
inline FrameTargets make_targets(const std::vector<double>& f0_hz, const std::vector<std::uint8_t>& voiced,
                                 const PitchGrid& grid) {
    if (f0_hz.size() != voiced.size()) throw ShapeError("f0 and voicing lengths differ");
    FrameTargets t;
    t.f0_hz = f0_hz;
    t.voiced = voiced;
    t.bins.resize(f0_hz.size(), 0);
    for (std::size_t m = 0; m < f0_hz.size(); ++m)
        if (voiced[m]) t.bins[m] = grid.freq_to_bin(f0_hz[m]);
    return t;
}

template <typename T>
struct LossResult {
    double value = 0.0;
    Matrix<T> dz;
};

namespace detail {

template <typename T>
std::size_t check_targets(const Matrix<T>& z, const FrameTargets& t, bool need_bins) {
    if (t.voiced.size() != z.rows()) throw ShapeError("target count does not match logit rows");
    if (need_bins && t.bins.size() != z.rows()) throw ShapeError("target bin count does not match logit rows");
    if (!need_bins && t.f0_hz.size() != z.rows()) throw ShapeError("f0 target count does not match logit rows");
    const std::size_t n = t.voiced_count();
    if (n == 0) throw EmptyBatchError("no voiced frames in batch");
    return n;
}

} // namespace detail

/// Mean cross-entropy over voiced frames; dz = (softmax - onehot) / N_voiced.
template <typename T>
LossResult<T> loss_ce(const Matrix<T>& z, const FrameTargets& t) {
    const std::size_t n = detail::check_targets(z, t, true);
    const auto p = softmax_rows(z);
    LossResult<T> r{0.0, Matrix<T>(z.rows(), z.cols())};
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t m = 0; m < z.rows(); ++m) {
        if (!t.voiced[m]) continue;
        const std::size_t y = t.bins[m];
        if (y >= z.cols()) throw IndexError("target bin outside grid");
        // log-softmax computed from logits directly keeps tiny probabilities exact.
        double peak = -INFINITY;
        for (T v : z.row(m)) peak = std::max(peak, static_cast<double>(v));
        double sum = 0.0;
        for (T v : z.row(m)) sum += std::exp(static_cast<double>(v) - peak);
        r.value -= (static_cast<double>(z(m, y)) - peak - std::log(sum)) * inv;
        for (std::size_t b = 0; b < z.cols(); ++b)
            r.dz(m, b) = static_cast<T>((p(m, b) - (b == y ? 1.0 : 0.0)) * inv);
    }
    return r;
}

/// Mean L1 distance between the expected log-frequency sum_b p_b ln f_b and
/// ln f_true over voiced frames.
template <typename T>
LossResult<T> loss_cents(const Matrix<T>& z, const FrameTargets& t, const PitchGrid& grid) {
    const std::size_t n = detail::check_targets(z, t, false);
    if (z.cols() != grid.size()) throw ShapeError("logit width does not match grid size");
    const auto p = softmax_rows(z);
    const auto& log_f = grid.log_centers();
    LossResult<T> r{0.0, Matrix<T>(z.rows(), z.cols())};
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t m = 0; m < z.rows(); ++m) {
        if (!t.voiced[m]) continue;
        if (!(t.f0_hz[m] > 0.0)) throw DomainError("voiced frame needs a positive f0 target");
        double expected = 0.0;
        for (std::size_t b = 0; b < z.cols(); ++b) expected += p(m, b) * log_f[b];
        const double residual = expected - std::log(t.f0_hz[m]);
        r.value += std::abs(residual) * inv;
        const double sign = residual > 0.0 ? 1.0 : (residual < 0.0 ? -1.0 : 0.0);
        for (std::size_t b = 0; b < z.cols(); ++b)
            r.dz(m, b) = static_cast<T>(sign * inv * p(m, b) * (log_f[b] - expected));
    }
    return r;
}

/// L_ce + lambda * L_cents; the gradient is the matching weighted sum.
template <typename T>
LossResult<T> loss_total(const Matrix<T>& z, const FrameTargets& t, const PitchGrid& grid, double lambda = 1.0) {
    auto ce = loss_ce(z, t);
    if (lambda == 0.0) return ce;
    const auto cents = loss_cents(z, t, grid);
    ce.value += lambda * cents.value;
    for (std::size_t i = 0; i < ce.dz.size(); ++i)
        ce.dz.data()[i] += static_cast<T>(lambda) * cents.dz.data()[i];
    return ce;
}

} // namespace swiftf0
