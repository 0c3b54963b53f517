#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "audio_io.hpp"
#include "errors.hpp"
#include "grid.hpp"
#include "noise.hpp"

namespace swiftf0 {

struct AlignedFrame {
    std::optional<double> f_true;
    std::optional<double> f_pred;
    bool voiced_true = false;
    bool voiced_pred = false;
};

/// Prediction/truth pairs for one file. Pitch metrics look at ground-truth
/// voiced frames and use the estimator's raw pitch whatever its voicing flag.
struct AlignedFrames {
    std::vector<AlignedFrame> frames;

    std::size_t voiced_count() const noexcept {
        return static_cast<std::size_t>(
            std::count_if(frames.begin(), frames.end(), [](const AlignedFrame& f) { return f.voiced_true; }));
    }
};

/// Pairs frame i with frame i; the longer contour's tail is dropped.
inline AlignedFrames align(const PitchContour& pred, const PitchContour& truth) {
    if (std::abs(pred.hop_seconds - truth.hop_seconds) > 1e-9)
        throw AlignmentError("hop mismatch: " + std::to_string(pred.hop_seconds) + " vs " +
                             std::to_string(truth.hop_seconds));
    AlignedFrames a;
    const std::size_t n = std::min(pred.size(), truth.size());
    a.frames.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& p = pred.frames[i];
        const auto& t = truth.frames[i];
        a.frames.push_back({t.voiced ? t.f0_hz : std::nullopt, p.f0_hz, t.voiced, p.voiced});
    }
    return a;
}

namespace detail {

inline std::size_t require_voiced(const AlignedFrames& a) {
    const std::size_t n = a.voiced_count();
    if (n == 0) throw UndefinedMetric("no voiced ground-truth frames");
    return n;
}

// Calls f(delta_cents) on every voiced truth frame that has a prediction.
template <typename F>
void for_each_delta(const AlignedFrames& a, F&& f) {
    for (const auto& fr : a.frames)
        if (fr.voiced_true && fr.f_pred && fr.f_true) f(cents_error(*fr.f_pred, *fr.f_true));
}

} // namespace detail

/// Fraction of voiced frames within 50 cents (strict).
inline double rpa(const AlignedFrames& a) {
    const std::size_t n = detail::require_voiced(a);
    std::size_t hits = 0;
    detail::for_each_delta(a, [&](double d) { hits += std::abs(d) < 50.0; });
    return static_cast<double>(hits) / static_cast<double>(n);
}

/// Like rpa but with the error folded into one octave, [-600, 600).
inline double rca(const AlignedFrames& a) {
    const std::size_t n = detail::require_voiced(a);
    std::size_t hits = 0;
    detail::for_each_delta(a, [&](double d) {
        const double folded = d - 1200.0 * std::floor((d + 600.0) / 1200.0);
        hits += std::abs(folded) < 50.0;
    });
    return static_cast<double>(hits) / static_cast<double>(n);
}

struct CentsAccuracy {
    double value = 0.0;
    double mean_abs_cents = 0.0;
    std::size_t excluded = 0;  // voiced frames without a prediction
};

/// exp(-mean|delta| / 500) over voiced frames that have a prediction.
inline CentsAccuracy cents_accuracy_detail(const AlignedFrames& a) {
    const std::size_t n = detail::require_voiced(a);
    double sum = 0.0;
    std::size_t used = 0;
    detail::for_each_delta(a, [&](double d) {
        sum += std::abs(d);
        ++used;
    });
    if (used == 0) throw UndefinedMetric("no voiced frame has a pitch estimate");
    CentsAccuracy ca;
    ca.mean_abs_cents = sum / static_cast<double>(used);
    ca.value = std::exp(-ca.mean_abs_cents / 500.0);
    ca.excluded = n - used;
    return ca;
}

inline double cents_accuracy(const AlignedFrames& a) { return cents_accuracy_detail(a).value; }

struct VoicingScores {
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
};

inline VoicingScores voicing_pr(const AlignedFrames& a) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& f : a.frames) {
        tp += f.voiced_true && f.voiced_pred;
        fp += !f.voiced_true && f.voiced_pred;
        fn += f.voiced_true && !f.voiced_pred;
    }
    VoicingScores s;
    if (tp + fp > 0) s.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    if (tp + fn > 0) s.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (s.precision && s.recall)
        s.f1 = (*s.precision + *s.recall) > 0.0 ? 2.0 * *s.precision * *s.recall / (*s.precision + *s.recall) : 0.0;
    return s;
}

inline bool is_octave_error(double f_pred, double f_true) {
    const double d = std::abs(cents_error(f_pred, f_true));
    return std::abs(f_pred / f_true - 1.0) > 0.40 || (d >= 1100.0 && d <= 1300.0);
}

/// exp(-10 * octave_errors / N). Frames without a prediction are not octave errors.
inline double octave_accuracy(const AlignedFrames& a) {
    const std::size_t n = detail::require_voiced(a);
    std::size_t errors = 0;
    for (const auto& f : a.frames)
        if (f.voiced_true && f.f_pred && f.f_true) errors += is_octave_error(*f.f_pred, *f.f_true);
    return std::exp(-10.0 * static_cast<double>(errors) / static_cast<double>(n));
}

/// exp(-5 * gross_errors / N); gross means |delta| >= 200 cents or no prediction.
inline double gross_error_accuracy(const AlignedFrames& a) {
    const std::size_t n = detail::require_voiced(a);
    std::size_t errors = 0;
    for (const auto& f : a.frames) {
        if (!f.voiced_true) continue;
        if (!f.f_pred || !f.f_true) ++errors;
        else errors += std::abs(cents_error(*f.f_pred, *f.f_true)) >= 200.0;
    }
    return std::exp(-5.0 * static_cast<double>(errors) / static_cast<double>(n));
}

/// 6 / sum(1 / c_i); zero if any component is zero.
inline double harmonic_mean(std::span<const double> components) {
    if (components.empty()) throw ArgumentError("no components");
    double inv = 0.0;
    for (double c : components) {
        if (!(c >= 0.0 && c <= 1.0)) throw DomainError("metric component outside [0,1]");
        if (c == 0.0) return 0.0;
        inv += 1.0 / c;
    }
    return static_cast<double>(components.size()) / inv;
}

/// Scores of one evaluation. Components that were undefined for the input are
/// empty; hm is empty if any of its six components is.
struct EvalReport {
    std::optional<double> rpa, ca, precision, recall, f1, oa, gea, rca, hm;
    double mean_abs_cents = 0.0;
    std::size_t ca_excluded = 0;
    std::size_t voiced_frames = 0;
    std::size_t files = 1;

    bool operator==(const EvalReport&) const = default;
};

inline EvalReport evaluate(const AlignedFrames& a) {
    EvalReport r;
    r.voiced_frames = a.voiced_count();
    const auto v = voicing_pr(a);
    r.precision = v.precision;
    r.recall = v.recall;
    r.f1 = v.f1;
    if (r.voiced_frames > 0) {
        r.rpa = rpa(a);
        r.rca = rca(a);
        r.oa = octave_accuracy(a);
        r.gea = gross_error_accuracy(a);
        try {
            const auto ca = cents_accuracy_detail(a);
            r.ca = ca.value;
            r.mean_abs_cents = ca.mean_abs_cents;
            r.ca_excluded = ca.excluded;
        } catch (const UndefinedMetric&) {
            r.ca_excluded = r.voiced_frames;
        }
    }
    if (r.rpa && r.ca && r.precision && r.recall && r.oa && r.gea) {
        const double c[] = {*r.rpa, *r.ca, *r.precision, *r.recall, *r.oa, *r.gea};
        r.hm = harmonic_mean(c);
    }
    return r;
}

inline EvalReport evaluate(const PitchContour& pred, const PitchContour& truth) {
    return evaluate(align(pred, truth));
}

/// Arithmetic mean of per-file reports, field by field, over the files where
/// the field is defined.
inline EvalReport average_reports(std::span<const EvalReport> reports) {
    if (reports.empty()) throw ArgumentError("no reports to average");
    EvalReport out;
    out.files = reports.size();
    out.voiced_frames = 0;
    using Field = std::optional<double> EvalReport::*;
    for (Field f : {&EvalReport::rpa, &EvalReport::ca, &EvalReport::precision, &EvalReport::recall, &EvalReport::f1,
                    &EvalReport::oa, &EvalReport::gea, &EvalReport::rca, &EvalReport::hm}) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& r : reports)
            if (r.*f) {
                sum += *(r.*f);
                ++n;
            }
        if (n > 0) out.*f = sum / static_cast<double>(n);
    }
    double cents = 0.0;
    for (const auto& r : reports) {
        out.voiced_frames += r.voiced_frames;
        out.ca_excluded += r.ca_excluded;
        cents += r.mean_abs_cents;
    }
    out.mean_abs_cents = cents / static_cast<double>(reports.size());
    return out;
}

namespace detail {

inline std::vector<std::pair<std::string, std::optional<double>>> report_rows(const EvalReport& r) {
    return {{"rpa", r.rpa}, {"ca", r.ca},   {"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1},
            {"oa", r.oa},   {"gea", r.gea}, {"rca", r.rca},             {"hm", r.hm}};
}

} // namespace detail

/// Aligned two-column text table; undefined entries print as "undefined".
inline std::string format_report_table(const EvalReport& r) {
    std::ostringstream os;
    os << std::left << std::setw(12) << "metric" << "value\n";
    os << std::fixed << std::setprecision(6);
    for (const auto& [name, v] : detail::report_rows(r)) {
        os << std::setw(12) << name;
        if (v) os << *v;
        else os << "undefined";
        os << '\n';
    }
    os << std::setw(12) << "files" << r.files << '\n';
    os << std::setw(12) << "voiced" << r.voiced_frames << '\n';
    if (r.ca_excluded > 0) os << std::setw(12) << "ca_excluded" << r.ca_excluded << '\n';
    return os.str();
}

/// `metric,value` rows; undefined entries have an empty value.
inline std::string format_report_csv(const EvalReport& r) {
    std::ostringstream os;
    os << "metric,value\n" << std::setprecision(17);
    for (const auto& [name, v] : detail::report_rows(r)) {
        os << name << ',';
        if (v) os << *v;
        os << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Noisy evaluation

struct LabeledAudio {
    std::string name;
    AudioBuffer audio;
    PitchContour truth;
};

using PitchEstimator = std::function<PitchContour(const AudioBuffer&)>;

/// Adds noise to `clean` at exactly `snr_db` (measured over the whole file).
/// The noise is the same Gaussian/environmental blend used for augmentation,
/// with the blend weight drawn per file. The mixture is not clamped so the
/// realized SNR equals the target.
inline AudioBuffer mix_at_snr(const AudioBuffer& clean, std::span<const AudioBuffer> noise_sources, double snr_db,
                              Rng& rng) {
    const double p_sig = mean_square(clean.samples);
    if (!(p_sig > 0.0)) throw SkipExample("silent clean signal");
    const double alpha = noise_sources.empty() ? 0.0 : rng.uniform();
    const auto noise = background_noise(clean.samples.size(), noise_sources, alpha, rng);
    const double gamma = noise_scale(p_sig, mean_square(noise), snr_db);
    AudioBuffer out = clean;
    for (std::size_t i = 0; i < out.samples.size(); ++i) out.samples[i] += gamma * noise[i];
    return out;
}

/// Runs `estimator` on every clean file with additive noise at `snr_db` and
/// averages the per-file reports. Silent files are skipped with a warning on
/// `warn`. Each file draws its noise from a stream seeded by (seed, index).
inline EvalReport evaluate_noisy(const PitchEstimator& estimator, std::span<const LabeledAudio> clean,
                                 std::span<const AudioBuffer> noise_sources, double snr_db, std::uint64_t seed,
                                 std::ostream* warn = &std::cerr) {
    if (clean.empty()) throw ArgumentError("empty clean corpus");
    std::vector<EvalReport> reports;
    Rng master(seed);
    for (const auto& item : clean) {
        Rng rng(master.next_seed());
        AudioBuffer mixed;
        try {
            mixed = mix_at_snr(item.audio, noise_sources, snr_db, rng);
        } catch (const SkipExample&) {
            if (warn) *warn << "warning: skipping silent file " << item.name << '\n';
            continue;
        }
        reports.push_back(evaluate(estimator(mixed), item.truth));
    }
    if (reports.empty()) throw UndefinedMetric("every clean file was silent");
    return average_reports(reports);
}

} // namespace swiftf0
