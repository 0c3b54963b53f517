#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include <swiftf0/synth.hpp>
#include <swiftf0/train.hpp>

#include "oracles.hpp"

using namespace swiftf0;

namespace {

TrainExample tone_segment(double f0 = 220.0, double peak = 0.9) {
    SynthSpec s;
    s.f0_hz = s.f0_end_hz = f0;
    s.harmonics = 4;
    s.duration_s = 0.5;
    s.peak = peak;
    const auto r = synth_example(s);
    return TrainExample{r.audio, {}, {}};
}

AudioBuffer ramp_source(std::size_t n) {
    AudioBuffer b;
    b.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) b.samples[i] = 0.001 * static_cast<double>(i + 1);
    return b;
}

double cents(double a, double b) { return 1200.0 * std::log2(a / b); }

} // namespace

TEST(NoiseScale, TenDecibelsAtUnitPowers) {
    EXPECT_NEAR(noise_scale(1.0, 1.0, 10.0), std::pow(10.0, -0.5), 1e-15);
    EXPECT_NEAR(noise_scale(1.0, 1.0, 10.0), 0.31623, 1e-5);
    EXPECT_EQ(noise_scale(1.0, 1.0, INFINITY), 0.0);
    EXPECT_THROW(noise_scale(1.0, 0.0, 10.0), DomainError);
}

TEST(BackgroundNoise, AlphaEndpoints) {
    const std::vector<AudioBuffer> sources{ramp_source(500)};
    Rng a(3), b(3);
    // alpha = 0: exactly the Gaussian stream.
    const auto pure = background_noise(800, sources, 0.0, a);
    EXPECT_EQ(pure, gaussian_noise(800, b));

    // alpha = 1: every sample is a sample of the source, in looping order.
    Rng c(4);
    const auto env = background_noise(800, sources, 1.0, c);
    const auto start = static_cast<std::size_t>(std::llround(env[0] / 0.001)) - 1;
    for (std::size_t i = 0; i < env.size(); ++i) EXPECT_DOUBLE_EQ(env[i], sources[0].samples[(start + i) % 500]);
}

TEST(BackgroundNoise, NoSourcesForcesGaussian) {
    Rng a(5), b(5);
    EXPECT_EQ(background_noise(300, {}, 0.7, a), gaussian_noise(300, b));
}

TEST(Augment, IdentityLimit) {
    const auto x = tone_segment();
    const std::vector<double> bg(x.audio.samples.size(), 0.3);
    const auto y = apply_augmentation(x.audio, AugmentDraw{0.0, 0.0, INFINITY}, bg);
    EXPECT_EQ(y.samples, x.audio.samples);
}

TEST(Augment, MeasuredSnrMatchesTarget) {
    const auto x = tone_segment(330.0, 0.2);
    Rng rng(8);
    for (int k = 0; k < 20; ++k) {
        AugmentDraw d{rng.uniform(-6.0, 6.0), rng.uniform(), rng.uniform(10.0, 30.0)};
        const auto bg = background_noise(x.audio.samples.size(), std::vector<AudioBuffer>{ramp_source(333)}, d.alpha, rng);
        std::vector<double> added;
        apply_augmentation(x.audio, d, bg, &added);
        auto gained = x.audio.samples;
        for (auto& v : gained) v *= std::pow(10.0, d.gain_db / 20.0);
        EXPECT_NEAR(measured_snr_db(gained, added), d.snr_db, 0.1);
    }
}

TEST(Augment, NeverLeavesUnitRange) {
    const auto x = tone_segment(150.0, 1.0);
    AugmentConfig cfg;
    cfg.noise_sources = {ramp_source(1000)};
    Rng rng(2);
    bool clipped = false;
    for (int k = 0; k < 50; ++k) {
        const auto y = augment(x, cfg, rng);
        for (double v : y.samples) {
            EXPECT_LE(v, 1.0);
            EXPECT_GE(v, -1.0);
            clipped |= std::abs(v) == 1.0;
        }
    }
    EXPECT_TRUE(clipped);
}

TEST(Augment, SilentSegmentIsSkipped) {
    TrainExample x;
    x.audio.samples.assign(8000, 0.0);
    Rng rng(1);
    EXPECT_THROW(augment(x, AugmentConfig{}, rng), SkipExample);
}

TEST(Augment, BadRangesRejected) {
    AugmentConfig cfg;
    cfg.snr_db_min = 40.0;
    Rng rng(1);
    EXPECT_THROW(augment(tone_segment(), cfg, rng), ArgumentError);
}

TEST(Augment, SameSeedSameOutput) {
    const auto x = tone_segment();
    Rng a(9), b(9);
    EXPECT_EQ(augment(x, AugmentConfig{}, a).samples, augment(x, AugmentConfig{}, b).samples);
}

TEST(Synth, PureSinePeaksAtBin14) {
    SynthSpec s;
    s.f0_hz = s.f0_end_hz = 220.0;
    const auto r = synth_example(s);
    std::vector<double> frame(r.audio.samples.begin() + 4000, r.audio.samples.begin() + 5024);
    const auto mag = oracle::dft_magnitude(frame);
    EXPECT_EQ(std::max_element(mag.begin(), mag.end()) - mag.begin(), 14);
    double peak = 0.0;
    for (double v : r.audio.samples) peak = std::max(peak, std::abs(v));
    EXPECT_NEAR(peak, 0.9, 1e-12);
}

TEST(Synth, GlideTruthStrictlyIncreasing) {
    SynthSpec s;
    s.trajectory = Trajectory::glide;
    s.f0_hz = 200.0;
    s.f0_end_hz = 400.0;
    s.harmonics = 5;
    const auto r = synth_example(s);
    ASSERT_GT(r.truth.size(), 10u);
    for (std::size_t m = 1; m < r.truth.size(); ++m) EXPECT_GT(*r.truth.frames[m].f0_hz, *r.truth.frames[m - 1].f0_hz);
    EXPECT_GE(*r.truth.frames.front().f0_hz, 200.0);
    EXPECT_LE(*r.truth.frames.back().f0_hz, 400.0);
}

TEST(Synth, VibratoExtremes) {
    // A 0.256 s vibrato period is 16 hops, so frame centres land on the peaks.
    SynthSpec s;
    s.trajectory = Trajectory::vibrato;
    s.f0_hz = s.f0_end_hz = 300.0;
    s.vibrato_depth_cents = 50.0;
    s.vibrato_rate_hz = 1.0 / 0.256;
    s.duration_s = 2.0;
    const auto r = synth_example(s);
    double lo = INFINITY, hi = 0.0;
    for (const auto& f : r.truth.frames) {
        lo = std::min(lo, *f.f0_hz);
        hi = std::max(hi, *f.f0_hz);
    }
    EXPECT_NEAR(lo, 300.0 * std::pow(2.0, -50.0 / 1200.0), 1e-9);
    EXPECT_NEAR(hi, 300.0 * std::pow(2.0, 50.0 / 1200.0), 1e-9);
    EXPECT_NEAR(lo, 291.5, 0.05);
    EXPECT_NEAR(hi, 308.8, 0.05);
}

TEST(Synth, ZeroCrossingOracleAgreesWithTruth) {
    for (double f0 : {60.0, 220.0, 987.0}) {
        SynthSpec s;
        s.f0_hz = s.f0_end_hz = f0;
        const auto r = synth_example(s);
        const double est = oracle::zero_crossing_frequency(r.audio.samples, 16000.0, 0, r.audio.samples.size());
        EXPECT_LT(std::abs(cents(est, f0)), 0.5) << f0;
    }
    std::vector<SynthSpec> moving(2);
    moving[0].trajectory = Trajectory::glide;
    moving[0].f0_hz = 200.0;
    moving[0].f0_end_hz = 400.0;
    moving[1].trajectory = Trajectory::vibrato;
    moving[1].f0_hz = moving[1].f0_end_hz = 300.0;
    moving[1].vibrato_depth_cents = 50.0;
    moving[1].vibrato_rate_hz = 5.0;
    for (const auto& s : moving) {
        const auto r = synth_example(s);
        for (std::size_t m = 2; m + 2 < r.truth.size(); m += 3) {
            const double centre = static_cast<double>(m * 256 + 512);
            const double est = oracle::zero_crossing_instantaneous_frequency(r.audio.samples, 16000.0, centre, 320.0);
            EXPECT_LT(std::abs(cents(est, *r.truth.frames[m].f0_hz)), 0.5) << to_string(s.trajectory) << " " << m;
        }
    }
}

TEST(Synth, SilenceMarginsAreUnvoiced) {
    SynthSpec s;
    s.lead_silence_s = 0.2;
    s.tail_silence_s = 0.2;
    const auto r = synth_example(s);
    for (std::size_t n = 0; n < 3200; ++n) EXPECT_EQ(r.audio.samples[n], 0.0);
    for (std::size_t m = 0; m < r.truth.size(); ++m) {
        const std::size_t centre = m * 256 + 512;
        const bool inside = centre >= 3200 && centre < 12800;
        EXPECT_EQ(r.truth.frames[m].voiced, inside) << m;
        EXPECT_EQ(r.truth.frames[m].f0_hz.has_value(), inside);
    }
}

TEST(Synth, HarmonicsStopBelowNyquist) {
    SynthSpec s;
    s.f0_hz = s.f0_end_hz = 2000.0;
    s.harmonics = 10;
    const auto r = synth_example(s);
    std::vector<double> frame(r.audio.samples.begin(), r.audio.samples.begin() + 1024);
    const auto mag = oracle::dft_magnitude(frame);
    // Only 2000, 4000 and 6000 Hz fit under 8 kHz.
    EXPECT_GT(mag[384], 10.0);
    EXPECT_LT(mag[512], 1e-6 * mag[128]);
}

TEST(Synth, OutOfRangeRejected) {
    SynthSpec s;
    s.f0_hz = s.f0_end_hz = 40.0;
    EXPECT_THROW(synth_example(s), ArgumentError);
    s.f0_hz = s.f0_end_hz = 2000.0;
    s.trajectory = Trajectory::vibrato;
    s.vibrato_depth_cents = 100.0;
    EXPECT_THROW(synth_example(s), ArgumentError);
    s = SynthSpec{};
    s.harmonics = 0;
    EXPECT_THROW(synth_example(s), ArgumentError);
    EXPECT_THROW(parse_trajectory("wobble"), ArgumentError);
}

TEST(Synth, RandomSpecsStayInRange) {
    Rng rng(12);
    SynthRanges r;
    for (int k = 0; k < 300; ++k) {
        const auto s = random_synth_spec(rng, r);
        const auto [lo, hi] = s.f0_range();
        EXPECT_GE(lo, 100.0 - 1e-9);
        EXPECT_LE(hi, 1000.0 + 1e-9);
        EXPECT_GE(s.harmonics, 3);
        EXPECT_LE(s.harmonics, 10);
    }
}

TEST(Synth, Deterministic) {
    Rng a(5), b(5);
    const auto x = synth_example(random_synth_spec(a, SynthRanges{}));
    const auto y = synth_example(random_synth_spec(b, SynthRanges{}));
    EXPECT_EQ(x.audio.samples, y.audio.samples);
    EXPECT_EQ(format_contour_csv(x.truth), format_contour_csv(y.truth));
}
