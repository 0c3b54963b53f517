#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "swiftf0/decode.hpp"

using namespace swiftf0;

namespace {

std::vector<double> random_row(std::mt19937_64& rng, std::size_t n) {
    std::gamma_distribution<double> g(0.3, 1.0);
    std::vector<double> p(n);
    for (auto& v : p) v = g(rng);
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    for (auto& v : p) v /= s;
    return p;
}

} // namespace

TEST(Softmax, ZeroRowIsUniform) {
    const auto p = softmax_rows(Matrix<double>(1, 200));
    for (double v : p.values()) EXPECT_DOUBLE_EQ(v, 0.005);
}

TEST(Softmax, ShiftInvariant) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 3.0);
    Matrix<double> z(5, 200), shifted(5, 200);
    for (std::size_t i = 0; i < z.size(); ++i) {
        z.data()[i] = n(rng);
        shifted.data()[i] = z.data()[i] + 123.0;
    }
    const auto a = softmax_rows(z), b = softmax_rows(shifted);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-12);
    for (std::size_t m = 0; m < 5; ++m) {
        const auto r = a.row(m);
        EXPECT_NEAR(std::accumulate(r.begin(), r.end(), 0.0), 1.0, 1e-9);
    }
}

TEST(Softmax, Saturates) {
    Matrix<double> z(1, 200);
    z(0, 42) = 50.0;
    EXPECT_GE(softmax_rows(z)(0, 42), 1.0 - 1e-15);
}

TEST(DecodeFrame, DeltaDistribution) {
    PitchGrid g;
    for (std::size_t b : {0u, 5u, 100u, 199u}) {
        std::vector<double> p(200, 0.0);
        p[b] = 1.0;
        const auto e = decode_frame(p, g, DecoderConfig{});
        EXPECT_EQ(e.f0_hz, g.bin_center(b));
        EXPECT_EQ(e.confidence, 1.0);
        EXPECT_TRUE(e.voiced);
    }
}

TEST(DecodeFrame, UniformRow) {
    std::vector<double> p(200, 1.0 / 200);
    const auto e = decode_frame(p, PitchGrid{}, DecoderConfig{});
    EXPECT_NEAR(e.confidence, 19.0 / 200.0, 1e-12);
    EXPECT_FALSE(e.voiced);
}

TEST(DecodeFrame, TwoBinMixture) {
    PitchGrid g;
    std::vector<double> p(200, 0.0);
    p[100] = 0.9;
    p[101] = 0.1;
    const auto e = decode_frame(p, g, DecoderConfig{});
    EXPECT_NEAR(e.f0_hz, 0.9 * g.bin_center(100) + 0.1 * g.bin_center(101), 1e-9);
}

TEST(DecodeFrame, UniformRowPicksAnInteriorWindow) {
    std::vector<double> p(200, 1.0 / 200);
    const auto e = decode_frame(p, PitchGrid{}, DecoderConfig{});
    // Lowest tied bin with a full window is bin 9, window [0, 18].
    double mean = 0.0;
    for (std::size_t b = 0; b <= 18; ++b) mean += PitchGrid{}.bin_center(b) / 19.0;
    EXPECT_NEAR(e.f0_hz, mean, 1e-9);
}

TEST(DecodeFrame, TiesGoLow) {
    PitchGrid g;
    std::vector<double> p(200, 0.0);
    p[30] = 0.5;
    p[150] = 0.5;
    const auto e = decode_frame(p, g, DecoderConfig{});
    EXPECT_NEAR(e.f0_hz, g.bin_center(30), 1e-9);
    EXPECT_NEAR(e.confidence, 0.5, 1e-12);
}

TEST(DecodeFrame, EdgeWindowIsClipped) {
    PitchGrid g;
    std::vector<double> p(200, 0.0);
    p[0] = 0.6;
    p[9] = 0.2;
    p[10] = 0.2;
    const auto e = decode_frame(p, g, DecoderConfig{});
    EXPECT_NEAR(e.confidence, 0.8, 1e-12);
    EXPECT_NEAR(e.f0_hz, (0.6 * g.bin_center(0) + 0.2 * g.bin_center(9)) / 0.8, 1e-9);
}

TEST(DecodeFrame, RandomRowsStayInsideWindow) {
    PitchGrid g;
    DecoderConfig cfg;
    std::mt19937_64 rng(5);
    for (int i = 0; i < 10000; ++i) {
        const auto p = random_row(rng, 200);
        const auto e = decode_frame(p, g, cfg);
        const auto peak = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
        const std::size_t lo = peak >= 9 ? peak - 9 : 0, hi = std::min<std::size_t>(199, peak + 9);
        EXPECT_GE(e.f0_hz, g.bin_center(lo));
        EXPECT_LE(e.f0_hz, g.bin_center(hi));
        EXPECT_GE(e.confidence, 0.0);
        EXPECT_LE(e.confidence, 1.0);
    }
}

TEST(DecodeFrame, ConfidenceGrowsWithMassInsideWindow) {
    PitchGrid g;
    std::mt19937_64 rng(8);
    for (int i = 0; i < 500; ++i) {
        auto p = random_row(rng, 200);
        const auto peak = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
        const auto before = decode_frame(p, g, DecoderConfig{}).confidence;
        // Move half of the mass outside the window onto the peak.
        double moved = 0.0;
        for (std::size_t b = 0; b < 200; ++b)
            if (b + 9 < peak || b > peak + 9) {
                moved += p[b] / 2;
                p[b] /= 2;
            }
        p[peak] += moved;
        EXPECT_GE(decode_frame(p, g, DecoderConfig{}).confidence, before - 1e-12);
    }
}

TEST(DecodeContour, EmptyAndConstant) {
    PitchGrid g;
    EXPECT_TRUE(decode_contour(Matrix<float>(0, 200), g, DecoderConfig{}).frames.empty());
    Matrix<float> z(6, 200);
    for (std::size_t m = 0; m < 6; ++m) {
        z(m, 70) = 8.0f;
        z(m, 71) = 6.0f;
    }
    const auto c = decode_contour(z, g, DecoderConfig{});
    ASSERT_EQ(c.frames.size(), 6u);
    for (const auto& f : c.frames) EXPECT_EQ(f, c.frames[0]);
}

TEST(DecodeContour, PermutingFramesPermutesOutput) {
    PitchGrid g;
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 4.0);
    Matrix<double> z(10, 200);
    for (auto& v : z.values()) v = n(rng);
    std::vector<std::size_t> perm(10);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix<double> zp(10, 200);
    for (std::size_t m = 0; m < 10; ++m) std::copy(z.row(perm[m]).begin(), z.row(perm[m]).end(), zp.row(m).begin());
    const auto a = decode_contour(z, g, DecoderConfig{}), b = decode_contour(zp, g, DecoderConfig{});
    for (std::size_t m = 0; m < 10; ++m) EXPECT_EQ(b.frames[m], a.frames[perm[m]]);
}

TEST(DecoderConfig, Validation) {
    PitchGrid g;
    EXPECT_THROW((DecoderConfig{0, 0.9}.validate(g)), ArgumentError);
    EXPECT_THROW((DecoderConfig{9, 1.0}.validate(g)), ArgumentError);
    EXPECT_THROW((DecoderConfig{200, 0.5}.validate(g)), ArgumentError);
}
