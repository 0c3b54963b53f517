// swiftf0: command-line front end for analysis, training, evaluation,
// synthetic corpus generation, benchmarking and the autocorrelation baseline.
//
// Exit codes: 0 success, 1 unexpected failure, 2 missing or invalid input,
// 3 training diverged, 4 contours could not be aligned, 5 synthesis range
// outside the pitch grid.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <swiftf0/swiftf0.hpp>

namespace fs = std::filesystem;
using namespace swiftf0;

namespace {

enum Exit { kOk = 0, kFailure = 1, kBadInput = 2, kDiverged = 3, kMisaligned = 4, kSynthRange = 5 };

struct SynthRangeError : Error {
    using Error::Error;
};

// Flags shared by every subcommand. A --config file is applied after the
// flags, so its values win.
struct Common {
    int sr = 16000;
    std::size_t n_fft = 1024;
    std::size_t hop = 256;
    double fmin = kPitchFloorHz;
    double fmax = kPitchCeilHz;
    std::size_t bins = 200;
    std::size_t window = 9;
    double threshold = 0.9;
    double snr = 10.0;
    std::uint64_t seed = 0;
    std::string config;
    // Lines of the config file not consumed here; train applies them.
    std::string rest;

    StftConfig stft() const {
        StftConfig s;
        s.sample_rate_hz = sr;
        s.window_len = n_fft;
        s.hop = hop;
        s.f_min_hz = fmin;
        s.f_max_hz = fmax;
        s.validate();
        return s;
    }
    PitchGrid grid() const { return PitchGrid(bins, fmin, fmax); }
    DecoderConfig decoder() const {
        DecoderConfig d;
        d.half_width = window;
        d.voicing_threshold = threshold;
        d.validate(grid());
        return d;
    }
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--sr", c.sr, "analysis sample rate in Hz")->capture_default_str();
    app->add_option("--n-fft", c.n_fft, "STFT window length")->capture_default_str();
    app->add_option("--hop", c.hop, "STFT hop in samples")->capture_default_str();
    app->add_option("--fmin", c.fmin, "lowest pitch in Hz")->capture_default_str();
    app->add_option("--fmax", c.fmax, "highest pitch in Hz")->capture_default_str();
    app->add_option("--bins", c.bins, "pitch bins")->capture_default_str();
    app->add_option("--window", c.window, "decoder half-width in bins")->capture_default_str();
    app->add_option("--threshold", c.threshold, "voicing confidence threshold")->capture_default_str();
    app->add_option("--snr", c.snr, "noise level in dB for noisy evaluation")->capture_default_str();
    app->add_option("--seed", c.seed, "random seed")->capture_default_str();
    app->add_option("--config", c.config, "key=value file; its values override flags");
}

// Consumes the keys Common knows about and keeps the others for later.
void apply_config(Common& c) {
    if (c.config.empty()) return;
    std::istringstream in(detail::read_file(c.config));
    std::string line;
    while (std::getline(in, line)) {
        std::string body = line.substr(0, line.find('#'));
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            c.rest += line + '\n';
            continue;
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        const std::string key = trim(body.substr(0, eq)), value = trim(body.substr(eq + 1));
        auto num = [&] { return detail::parse_double(value, key.c_str()); };
        auto count = [&] {
            const double v = num();
            if (v < 0 || v != std::floor(v)) throw FormatError(key + " must be a non-negative integer");
            return static_cast<std::size_t>(v);
        };
        if (key == "sr") c.sr = static_cast<int>(count());
        else if (key == "n_fft") c.n_fft = count();
        else if (key == "hop") c.hop = count();
        else if (key == "fmin") c.fmin = num();
        else if (key == "fmax") c.fmax = num();
        else if (key == "bins") c.bins = count();
        else if (key == "window") c.window = count();
        else if (key == "threshold") c.threshold = num();
        else if (key == "snr") c.snr = num();
        else {
            if (key == "seed") c.seed = std::stoull(value);
            c.rest += line + '\n';
        }
    }
    // Reject unknown keys for every subcommand, not only train.
    TrainConfig probe;
    probe.seed = c.seed;
    apply_train_config(probe, c.rest);
}

void require_file(const std::string& path, const char* what) {
    if (!fs::is_regular_file(path)) throw IoError(std::string(what) + " not found: " + path);
}

PitchTracker load_tracker(const std::string& weights, const Common& c) {
    require_file(weights, "weights file");
    return PitchTracker::from_file(weights, c.stft(), c.grid(), c.decoder());
}

void print_summary(const PitchContour& contour) {
    std::size_t voiced = 0;
    for (const auto& f : contour.frames) voiced += f.voiced;
    const double frac = contour.size() ? static_cast<double>(voiced) / static_cast<double>(contour.size()) : 0.0;
    std::cout << "frames " << contour.size() << "\nvoiced_fraction " << std::fixed << std::setprecision(4) << frac
              << '\n';
}

bool is_wav(const std::string& path) {
    auto ext = fs::path(path).extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return ext == ".wav";
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
    std::string wav, weights, out;
};

int cmd_analyze(const AnalyzeArgs& a, const Common& c) {
    require_file(a.wav, "input");
    const auto tracker = load_tracker(a.weights, c);
    const auto contour = tracker.analyze(read_wav(a.wav));
    write_contour_csv(contour, a.out);
    print_summary(contour);
    return kOk;
}

struct AcfArgs {
    std::string wav, out;
};

int cmd_acf(const AcfArgs& a, const Common& c) {
    require_file(a.wav, "input");
    AcfConfig cfg;
    cfg.stft = c.stft();
    const auto contour = acf_baseline(read_wav(a.wav), cfg);
    write_contour_csv(contour, a.out);
    print_summary(contour);
    return kOk;
}

struct TrainArgs {
    std::string manifest, out, loss_csv, val_manifest;
    std::optional<std::size_t> epochs, batch, patience;
    std::optional<double> lambda, lr;
    bool no_augment = false;
    bool quiet = false;
};

int cmd_train(const TrainArgs& a, const Common& c) {
    require_file(a.manifest, "manifest");
    TrainConfig cfg;
    cfg.seed = c.seed;
    if (a.epochs) cfg.epochs = *a.epochs;
    if (a.batch) cfg.batch = *a.batch;
    if (a.patience) cfg.patience = *a.patience;
    if (a.lambda) cfg.lambda = *a.lambda;
    if (a.lr) cfg.lr = *a.lr;
    if (a.no_augment) cfg.augment = false;
    apply_train_config(cfg, c.rest);

    const auto stft = c.stft();
    const auto grid = c.grid();
    auto corpus = read_manifest(a.manifest);
    std::vector<LabeledAudio> validation;
    if (!a.val_manifest.empty()) {
        require_file(a.val_manifest, "validation manifest");
        validation = read_manifest(a.val_manifest);
    }
    auto noise = load_noise_dir(cfg.noise_dir);
    const auto start = std::chrono::steady_clock::now();
    const auto result = train_loop(std::move(corpus), cfg, stft, grid, std::move(noise), validation,
                                   [&](const EpochLog& e) {
                                       if (!a.quiet) {
                                           const double secs = std::chrono::duration<double>(
                                                                   std::chrono::steady_clock::now() - start)
                                                                   .count();
                                           std::cerr << "epoch " << e.epoch << " loss " << e.loss;
                                           if (e.val_rpa) std::cerr << " val_rpa " << *e.val_rpa;
                                           std::cerr << " (" << std::fixed << std::setprecision(1) << secs << " s)\n"
                                                     << std::defaultfloat;
                                       }
                                       return true;
                                   });
    save_params(result.params, a.out);
    const fs::path loss_path = a.loss_csv.empty() ? fs::path(a.out).replace_extension(".loss.csv") : fs::path(a.loss_csv);
    detail::write_file(loss_path, format_loss_csv(result.log));
    std::cout << "weights " << a.out << "\nloss_csv " << loss_path.string() << "\nepochs " << result.log.size()
              << "\nsteps " << result.steps << "\nchecksum " << std::hex << std::setw(16) << std::setfill('0')
              << fnv1a64(encode_params(result.params)) << std::dec << '\n';
    return kOk;
}

struct EvalArgs {
    std::string pred, truth, weights, noise_dir, manifest;
    bool noisy = false;
    bool acf = false;
    bool csv = false;
};

int cmd_eval(const EvalArgs& a, const Common& c) {
    const bool noisy = a.noisy || !a.noise_dir.empty();
    std::vector<AudioBuffer> noise;
    if (!a.noise_dir.empty()) {
        if (!fs::is_directory(a.noise_dir)) throw IoError("noise directory not found: " + a.noise_dir);
        noise = load_noise_dir(a.noise_dir);
    }

    // Estimator for audio input: the model when weights are given, otherwise
    // the autocorrelation baseline when --acf is set.
    std::optional<PitchTracker> tracker;
    if (!a.weights.empty()) tracker.emplace(load_tracker(a.weights, c));
    AcfConfig acf_cfg;
    acf_cfg.stft = c.stft();
    auto estimator = [&]() -> PitchEstimator {
        if (tracker) return [&](const AudioBuffer& x) { return tracker->analyze(x); };
        if (a.acf) return [&](const AudioBuffer& x) { return acf_baseline(x, acf_cfg); };
        throw ArgumentError("audio input needs --weights or --acf");
    };

    EvalReport report;
    if (!a.manifest.empty()) {
        require_file(a.manifest, "manifest");
        const auto items = read_manifest(a.manifest);
        const auto est = estimator();
        if (noisy) {
            report = evaluate_noisy(est, items, noise, c.snr, c.seed);
        } else {
            std::vector<EvalReport> reports;
            for (const auto& item : items) reports.push_back(evaluate(est(item.audio), item.truth));
            report = average_reports(reports);
        }
    } else {
        if (a.pred.empty() || a.truth.empty()) throw ArgumentError("eval needs PRED and --truth, or --manifest");
        require_file(a.pred, "prediction");
        require_file(a.truth, "truth");
        const auto truth = read_contour_csv(a.truth);
        if (is_wav(a.pred)) {
            const auto audio = read_wav(a.pred);
            const auto est = estimator();
            if (noisy) {
                const LabeledAudio item{a.pred, audio, truth};
                report = evaluate_noisy(est, std::span<const LabeledAudio>(&item, 1), noise, c.snr, c.seed);
            } else {
                report = evaluate(est(audio), truth);
            }
        } else {
            if (noisy) throw ArgumentError("noisy evaluation needs audio input");
            report = evaluate(read_contour_csv(a.pred), truth);
        }
    }
    std::cout << (a.csv ? format_report_csv(report) : format_report_table(report));
    return kOk;
}

struct SynthArgs {
    std::string out;
    std::size_t count = 10;
    std::string trajectory = "any";
    double f0_min = 100.0, f0_max = 1000.0;
    int harmonics_min = 3, harmonics_max = 10;
    double duration = 1.0;
    double silence_min = 0.0, silence_max = 0.0;
};

int cmd_synth(const SynthArgs& a, const Common& c) {
    SynthRanges r;
    r.f0_min_hz = a.f0_min;
    r.f0_max_hz = a.f0_max;
    r.harmonics_min = a.harmonics_min;
    r.harmonics_max = a.harmonics_max;
    r.duration_s = a.duration;
    r.silence_min_s = a.silence_min;
    r.silence_max_s = a.silence_max;
    if (!(r.f0_min_hz >= c.fmin && r.f0_max_hz <= c.fmax && r.f0_min_hz < r.f0_max_hz))
        throw SynthRangeError("F0 range must lie inside [" + std::to_string(c.fmin) + ", " + std::to_string(c.fmax) +
                              "] Hz");
    try {
        r.validate();
    } catch (const ArgumentError& e) {
        throw SynthRangeError(e.what());
    }
    std::optional<Trajectory> fixed;
    if (a.trajectory != "any") fixed = parse_trajectory(a.trajectory);

    const auto stft = c.stft();
    fs::create_directories(a.out);
    Rng rng(c.seed);
    std::vector<std::pair<std::string, std::string>> rows;
    for (std::size_t i = 0; i < a.count; ++i) {
        // A fixed trajectory redraws from the same stream until it matches.
        auto spec = random_synth_spec(rng, r);
        while (fixed && spec.trajectory != *fixed) spec = random_synth_spec(rng, r);
        spec.sample_rate_hz = stft.sample_rate_hz;
        SynthResult ex;
        try {
            ex = synth_example(spec, stft);
        } catch (const ArgumentError& e) {
            throw SynthRangeError(e.what());
        }
        char stem[32];
        std::snprintf(stem, sizeof stem, "synth_%05zu", i);
        write_wav(ex.audio, fs::path(a.out) / (std::string(stem) + ".wav"));
        write_contour_csv(ex.truth, fs::path(a.out) / (std::string(stem) + ".csv"));
        rows.emplace_back(std::string(stem) + ".wav", std::string(stem) + ".csv");
    }
    write_manifest(rows, fs::path(a.out) / "manifest.txt");
    std::cout << "files " << rows.size() << "\nmanifest " << (fs::path(a.out) / "manifest.txt").string() << '\n';
    return kOk;
}

struct BenchArgs {
    std::string wav, weights;
    std::size_t repeats = 10;
};

int cmd_bench(const BenchArgs& a, const Common& c) {
    require_file(a.wav, "input");
    if (a.repeats == 0) throw ArgumentError("repeats must be positive");
    Architecture arch;
    arch.freq_bins = c.stft().band_bins();
    arch.pitch_bins = c.bins;
    // Timing does not depend on the weight values, so a seeded init stands in
    // when no weights are given.
    const PitchTracker tracker = a.weights.empty()
                                     ? PitchTracker(init_params<float>(c.seed, arch), c.stft(), c.grid(), c.decoder())
                                     : load_tracker(a.weights, c);
    const auto audio = read_wav(a.wav);
    const double seconds = static_cast<double>(audio.samples.size()) / audio.sample_rate_hz;
    std::vector<double> times;
    for (std::size_t i = 0; i < a.repeats; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto contour = tracker.analyze(audio);
        const auto t1 = std::chrono::steady_clock::now();
        if (contour.size() == 0) throw StateError("empty contour");
        times.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    double mean = 0.0;
    for (double t : times) mean += t / static_cast<double>(times.size());
    const double best = *std::min_element(times.begin(), times.end());
    std::cout << std::fixed << std::setprecision(6) << "audio_seconds " << seconds << "\nrepeats " << a.repeats
              << "\nmean_seconds " << mean << "\nmin_seconds " << best << "\nrtf " << std::setprecision(2)
              << seconds / mean << '\n';
    if (seconds / mean < 1.0) std::cerr << "warning: slower than real time\n";
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"swiftf0: monophonic pitch estimation"};
    app.require_subcommand(1);
    Common common;

    AnalyzeArgs analyze;
    auto* an = app.add_subcommand("analyze", "pitch contour of a WAV file with a trained model");
    an->add_option("wav", analyze.wav, "input WAV")->required();
    an->add_option("--weights", analyze.weights, "weights file")->required();
    an->add_option("--out,-o", analyze.out, "output contour CSV")->required();
    add_common(an, common);

    AcfArgs acf;
    auto* ac = app.add_subcommand("acf", "pitch contour from the autocorrelation baseline");
    ac->add_option("wav", acf.wav, "input WAV")->required();
    ac->add_option("--out,-o", acf.out, "output contour CSV")->required();
    add_common(ac, common);

    TrainArgs train;
    auto* tr = app.add_subcommand("train", "train a model on a manifest of WAV and truth CSV pairs");
    tr->add_option("--manifest", train.manifest, "corpus manifest")->required();
    tr->add_option("--out,-o", train.out, "output weights file")->required();
    tr->add_option("--loss-csv", train.loss_csv, "per-epoch loss CSV (default: next to the weights)");
    tr->add_option("--val", train.val_manifest, "validation manifest for per-epoch RPA and early stopping");
    tr->add_option("--epochs", train.epochs, "epochs");
    tr->add_option("--batch", train.batch, "segments per step");
    tr->add_option("--patience", train.patience, "early-stopping patience in validation checks");
    tr->add_option("--lambda", train.lambda, "weight of the cents loss");
    tr->add_option("--lr", train.lr, "learning rate");
    tr->add_flag("--no-augment", train.no_augment, "disable gain and noise augmentation");
    tr->add_flag("--quiet,-q", train.quiet, "no per-epoch progress on stderr");
    add_common(tr, common);

    EvalArgs eval;
    auto* ev = app.add_subcommand("eval", "score a prediction against ground truth");
    ev->add_option("pred", eval.pred, "predicted contour CSV, or a WAV to estimate");
    ev->add_option("--truth", eval.truth, "ground-truth contour CSV");
    ev->add_option("--manifest", eval.manifest, "evaluate every pair in a manifest instead");
    ev->add_option("--weights", eval.weights, "weights for audio input");
    ev->add_flag("--acf", eval.acf, "use the autocorrelation baseline for audio input");
    ev->add_flag("--noisy", eval.noisy, "add noise at --snr before estimation");
    ev->add_option("--noise", eval.noise_dir, "directory of noise WAVs (implies --noisy)");
    ev->add_flag("--csv", eval.csv, "metric,value output instead of a table");
    add_common(ev, common);

    SynthArgs synth;
    auto* sy = app.add_subcommand("synth", "generate harmonic tones with exact ground truth");
    sy->add_option("--out,-o", synth.out, "output directory")->required();
    sy->add_option("--count,-n", synth.count, "number of examples")->capture_default_str();
    sy->add_option("--trajectory", synth.trajectory, "constant, glide, vibrato or any")->capture_default_str();
    sy->add_option("--f0-min", synth.f0_min, "lowest F0 in Hz")->capture_default_str();
    sy->add_option("--f0-max", synth.f0_max, "highest F0 in Hz")->capture_default_str();
    sy->add_option("--harmonics-min", synth.harmonics_min)->capture_default_str();
    sy->add_option("--harmonics-max", synth.harmonics_max)->capture_default_str();
    sy->add_option("--duration", synth.duration, "seconds per example")->capture_default_str();
    sy->add_option("--silence-min", synth.silence_min, "leading/trailing silence lower bound in s")
        ->capture_default_str();
    sy->add_option("--silence-max", synth.silence_max, "leading/trailing silence upper bound in s")
        ->capture_default_str();
    add_common(sy, common);

    BenchArgs bench;
    auto* be = app.add_subcommand("bench", "time the full pipeline on a WAV file");
    be->add_option("wav", bench.wav, "input WAV")->required();
    be->add_option("--weights", bench.weights, "weights file (default: seeded init)");
    be->add_option("--repeats", bench.repeats, "timed passes")->capture_default_str();
    add_common(be, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kBadInput;
    }

    try {
        apply_config(common);
        if (an->parsed()) return cmd_analyze(analyze, common);
        if (ac->parsed()) return cmd_acf(acf, common);
        if (tr->parsed()) return cmd_train(train, common);
        if (ev->parsed()) return cmd_eval(eval, common);
        if (sy->parsed()) return cmd_synth(synth, common);
        if (be->parsed()) return cmd_bench(bench, common);
    } catch (const SynthRangeError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kSynthRange;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kDiverged;
    } catch (const AlignmentError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kMisaligned;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kBadInput;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: bad number: " << e.what() << '\n';
        return kBadInput;
    } catch (const std::out_of_range& e) {
        std::cerr << "error: number out of range: " << e.what() << '\n';
        return kBadInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kFailure;
}
