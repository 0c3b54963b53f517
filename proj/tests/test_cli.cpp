#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include <swiftf0/audio_io.hpp>
#include <swiftf0/metrics.hpp>

#include "test_util.hpp"

using namespace swiftf0;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

Run cli(const std::string& args) {
    const std::string cmd = std::string(SWIFTF0_CLI) + " " + args + " 2>/dev/null";
    Run r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// "key value" lines, or "key,value" lines when `sep` is ','.
std::map<std::string, std::string> fields(const std::string& text, char sep = ' ') {
    std::map<std::string, std::string> m;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto at = line.find(sep);
        if (at != std::string::npos) m[line.substr(0, at)] = line.substr(at + 1);
    }
    return m;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

} // namespace

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(cli("").code, 2);
    EXPECT_EQ(cli("frobnicate").code, 2);
    EXPECT_EQ(cli("analyze").code, 2);
    EXPECT_EQ(cli("--help").code, 0);
}

TEST(Cli, AnalyzeWithoutWeightsWritesNothing) {
    TempDir dir;
    ASSERT_EQ(cli("synth -n 1 --out " + q(dir.path())).code, 0);
    const auto out = dir / "pred.csv";
    EXPECT_EQ(cli("analyze " + q(dir / "synth_00000.wav") + " --weights " + q(dir / "none.bin") + " --out " + q(out)).code,
              2);
    EXPECT_FALSE(fs::exists(out));
    EXPECT_EQ(cli("analyze " + q(dir / "none.wav") + " --weights x --out " + q(out)).code, 2);
}

TEST(Cli, SynthWritesPairsAndManifest) {
    TempDir a, b;
    const auto r = cli("synth -n 10 --seed 4 --out " + q(a.path()));
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(fields(r.out)["files"], "10");
    std::size_t wav = 0, csv = 0;
    for (const auto& e : fs::directory_iterator(a.path())) {
        wav += e.path().extension() == ".wav";
        csv += e.path().extension() == ".csv";
    }
    EXPECT_EQ(wav, 10u);
    EXPECT_EQ(csv, 10u);
    EXPECT_TRUE(fs::exists(a / "manifest.txt"));

    ASSERT_EQ(cli("synth -n 10 --seed 4 --out " + q(b.path())).code, 0);
    for (const char* name : {"synth_00000.wav", "synth_00009.wav", "synth_00009.csv", "manifest.txt"})
        EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
}

TEST(Cli, SynthOutOfRangeExitsFive) {
    TempDir dir;
    EXPECT_EQ(cli("synth -n 1 --f0-min 30 --out " + q(dir.path())).code, 5);
    EXPECT_EQ(cli("synth -n 1 --f0-max 3000 --out " + q(dir.path())).code, 5);
    EXPECT_EQ(cli("synth -n 1 --harmonics-min 0 --out " + q(dir.path())).code, 5);
}

TEST(Cli, TrainIsReproducibleAndLogsEveryEpoch) {
    TempDir dir;
    ASSERT_EQ(cli("synth -n 4 --seed 1 --out " + q(dir / "c")).code, 0);
    const auto manifest = q(dir / "c" / "manifest.txt");
    const std::string common = "train -q --manifest " + manifest + " --epochs 5 --batch 4 --seed 2";
    const auto a = cli(common + " --out " + q(dir / "a.bin"));
    const auto b = cli(common + " --out " + q(dir / "b.bin"));
    ASSERT_EQ(a.code, 0);
    ASSERT_EQ(b.code, 0);
    EXPECT_EQ(fields(a.out)["epochs"], "5");
    EXPECT_EQ(fields(a.out)["checksum"].size(), 16u);
    EXPECT_EQ(fields(a.out)["checksum"], fields(b.out)["checksum"]);
    EXPECT_EQ(slurp(dir / "a.bin"), slurp(dir / "b.bin"));

    const auto log = slurp(dir / "a.loss.csv");
    EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 6);

    const auto c = cli(common + " --lambda 0 --out " + q(dir / "c.bin"));
    ASSERT_EQ(c.code, 0);
    EXPECT_NE(fields(c.out)["checksum"], fields(a.out)["checksum"]);

    // The trained weights drive analyze.
    const auto r = cli("analyze " + q(dir / "c" / "synth_00000.wav") + " --weights " + q(dir / "a.bin") + " --out " +
                       q(dir / "p.csv"));
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(read_contour_csv(dir / "p.csv").size(), read_contour_csv(dir / "c" / "synth_00000.csv").size());
}

TEST(Cli, BadConfigExitsTwo) {
    TempDir dir;
    std::ofstream(dir / "bad.cfg") << "colour = blue\n";
    EXPECT_EQ(cli("synth -n 1 --out " + q(dir / "s") + " --config " + q(dir / "bad.cfg")).code, 2);
    std::ofstream(dir / "seed.cfg") << "seed = 4\n";
    TempDir a, b;
    ASSERT_EQ(cli("synth -n 1 --out " + q(a.path()) + " --config " + q(dir / "seed.cfg")).code, 0);
    ASSERT_EQ(cli("synth -n 1 --seed 4 --out " + q(b.path())).code, 0);
    EXPECT_EQ(slurp(a / "synth_00000.wav"), slurp(b / "synth_00000.wav"));
}

TEST(Cli, EvalTruthAgainstItself) {
    TempDir dir;
    ASSERT_EQ(cli("synth -n 1 --out " + q(dir.path())).code, 0);
    const auto truth = q(dir / "synth_00000.csv");
    const auto r = cli("eval " + truth + " --truth " + truth + " --csv");
    ASSERT_EQ(r.code, 0);
    const auto m = fields(r.out, ',');
    for (const char* k : {"rpa", "ca", "precision", "recall", "f1", "oa", "gea", "rca", "hm"})
        EXPECT_EQ(std::stod(m.at(k)), 1.0) << k;
}

TEST(Cli, EvalOctaveError) {
    TempDir dir;
    ASSERT_EQ(cli("synth -n 1 --f0-max 900 --out " + q(dir.path())).code, 0);
    auto contour = read_contour_csv(dir / "synth_00000.csv");
    for (auto& f : contour.frames) f.f0_hz = *f.f0_hz * 2.0;
    write_contour_csv(contour, dir / "octave.csv");
    const auto r = cli("eval " + q(dir / "octave.csv") + " --truth " + q(dir / "synth_00000.csv") + " --csv");
    ASSERT_EQ(r.code, 0);
    const auto m = fields(r.out, ',');
    EXPECT_EQ(std::stod(m.at("rpa")), 0.0);
    EXPECT_EQ(std::stod(m.at("rca")), 1.0);
    EXPECT_NEAR(std::stod(m.at("oa")), std::exp(-10.0), 1e-12);
    EXPECT_NEAR(std::stod(m.at("ca")), std::exp(-1200.0 / 500.0), 1e-6);
}

TEST(Cli, EvalHopMismatchExitsFour) {
    TempDir dir;
    ASSERT_EQ(cli("synth -n 1 --out " + q(dir.path())).code, 0);
    auto contour = read_contour_csv(dir / "synth_00000.csv");
    PitchContour sparse;
    sparse.hop_seconds = 2 * contour.hop_seconds;
    for (std::size_t m = 0; m < contour.size(); m += 2) {
        auto f = contour.frames[m];
        sparse.frames.push_back(f);
    }
    write_contour_csv(sparse, dir / "sparse.csv");
    EXPECT_EQ(cli("eval " + q(dir / "sparse.csv") + " --truth " + q(dir / "synth_00000.csv")).code, 4);
}

TEST(Cli, NoisyEvalIsSeeded) {
    TempDir dir;
    ASSERT_EQ(cli("synth -n 2 --out " + q(dir.path())).code, 0);
    const std::string base = "eval --acf --csv --manifest " + q(dir / "manifest.txt") + " --noisy --snr 10";
    const auto a = cli(base + " --seed 3"), b = cli(base + " --seed 3"), c = cli(base + " --seed 4");
    ASSERT_EQ(a.code, 0);
    EXPECT_EQ(a.out, b.out);
    EXPECT_NE(a.out, c.out);
    EXPECT_EQ(cli("eval " + q(dir / "synth_00000.wav") + " --truth " + q(dir / "synth_00000.csv")).code, 2);
}

TEST(Cli, AcfAndBench) {
    TempDir dir;
    ASSERT_EQ(cli("synth -n 1 --trajectory constant --out " + q(dir.path())).code, 0);
    const auto r = cli("acf " + q(dir / "synth_00000.wav") + " --out " + q(dir / "acf.csv"));
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(fields(r.out)["frames"], std::to_string(read_contour_csv(dir / "acf.csv").size()));

    const auto b = cli("bench " + q(dir / "synth_00000.wav") + " --repeats 3");
    ASSERT_EQ(b.code, 0);
    auto m = fields(b.out);
    EXPECT_EQ(m["repeats"], "3");
    EXPECT_LE(std::stod(m["min_seconds"]), std::stod(m["mean_seconds"]));
    EXPECT_GT(std::stod(m["rtf"]), 0.0);
    EXPECT_EQ(cli("bench " + q(dir / "synth_00000.wav") + " --repeats 0").code, 2);
}
