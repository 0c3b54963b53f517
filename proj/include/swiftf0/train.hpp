#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "audio_io.hpp"
#include "decode.hpp"
#include "dsp.hpp"
#include "errors.hpp"
#include "grid.hpp"
#include "loss.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "noise.hpp"

namespace swiftf0 {

// ---------------------------------------------------------------------------
// Segments and augmentation

/// A fixed-length training segment with per-frame labels for its analysis frames.
struct TrainExample {
    AudioBuffer audio;
    std::vector<double> f0_hz;          // 0 on unvoiced frames
    std::vector<std::uint8_t> voiced;
};

struct AugmentConfig {
    double gain_db_min = -6.0;
    double gain_db_max = 6.0;
    double snr_db_min = 10.0;
    double snr_db_max = 30.0;
    std::vector<AudioBuffer> noise_sources;

    void validate() const {
        if (!(gain_db_min <= gain_db_max)) throw ArgumentError("gain range is not ordered");
        if (!(snr_db_min <= snr_db_max)) throw ArgumentError("SNR range is not ordered");
    }
};

/// One realization of the augmentation random variables.
struct AugmentDraw {
    double gain_db = 0.0;
    double alpha = 0.0;   // weight of environmental noise in the background mix
    double snr_db = 20.0;
};

/// Applies a fixed draw: gain, background mix, scaling to the target SNR
/// against the gained signal, then clamping to [-1, +1]. `background` must
/// have the segment's length. If `noise_out` is given it receives the scaled
/// noise that was added (before clamping).
inline AudioBuffer apply_augmentation(const AudioBuffer& x, const AugmentDraw& draw, std::span<const double> background,
                                      std::vector<double>* noise_out = nullptr) {
    if (background.size() != x.samples.size()) throw ShapeError("background noise length mismatch");
    AudioBuffer out = x;
    const double g = std::pow(10.0, draw.gain_db / 20.0);
    for (auto& v : out.samples) v *= g;
    const double p_sig = mean_square(out.samples);
    if (!(p_sig > 0.0)) throw SkipExample("silent segment");
    const double gamma = noise_scale(p_sig, mean_square(background), draw.snr_db);
    if (noise_out) noise_out->resize(background.size());
    for (std::size_t i = 0; i < out.samples.size(); ++i) {
        const double n = gamma * background[i];
        if (noise_out) (*noise_out)[i] = n;
        out.samples[i] = std::clamp(out.samples[i] + n, -1.0, 1.0);
    }
    return out;
}

/// Random gain in [gain_db_min, gain_db_max], background noise blending the
/// configured environmental sources with white Gaussian noise, SNR drawn from
/// [snr_db_min, snr_db_max], clamp to [-1, +1].
inline AudioBuffer augment(const TrainExample& x, const AugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    AugmentDraw d;
    d.gain_db = rng.uniform(cfg.gain_db_min, cfg.gain_db_max);
    d.alpha = cfg.noise_sources.empty() ? 0.0 : rng.uniform();
    d.snr_db = rng.uniform(cfg.snr_db_min, cfg.snr_db_max);
    const auto background = background_noise(x.audio.samples.size(), cfg.noise_sources, d.alpha, rng);
    return apply_augmentation(x.audio, d, background);
}

/// Number of analysis frames in a segment of `seconds`.
inline std::size_t segment_frames(double seconds, const StftConfig& stft) {
    const auto n = static_cast<std::size_t>(std::llround(seconds * stft.sample_rate_hz));
    return stft_frame_count(n, stft);
}

/// Cuts a segment whose middle analysis frame is frame `centre` of `item`.
/// The segment starts on the item's hop grid so segment frame j is item frame
/// centre - frames/2 + j; samples outside the item are zero and frames outside
/// it are unvoiced.
inline TrainExample extract_segment(const LabeledAudio& item, std::size_t centre, double seconds,
                                    const StftConfig& stft) {
    const auto len = static_cast<std::size_t>(std::llround(seconds * stft.sample_rate_hz));
    const std::size_t frames = stft_frame_count(len, stft);
    if (frames == 0) throw ArgumentError("segment shorter than one analysis window");
    const auto first = static_cast<std::ptrdiff_t>(centre) - static_cast<std::ptrdiff_t>(frames / 2);
    const std::ptrdiff_t start = first * static_cast<std::ptrdiff_t>(stft.hop);

    TrainExample ex;
    ex.audio.sample_rate_hz = item.audio.sample_rate_hz;
    ex.audio.samples.assign(len, 0.0);
    const auto total = static_cast<std::ptrdiff_t>(item.audio.samples.size());
    for (std::size_t i = 0; i < len; ++i) {
        const std::ptrdiff_t src = start + static_cast<std::ptrdiff_t>(i);
        if (src >= 0 && src < total) ex.audio.samples[i] = item.audio.samples[static_cast<std::size_t>(src)];
    }
    ex.f0_hz.assign(frames, 0.0);
    ex.voiced.assign(frames, 0);
    for (std::size_t j = 0; j < frames; ++j) {
        const std::ptrdiff_t m = first + static_cast<std::ptrdiff_t>(j);
        if (m < 0 || m >= static_cast<std::ptrdiff_t>(item.truth.size())) continue;
        const auto& f = item.truth.frames[static_cast<std::size_t>(m)];
        if (f.voiced && f.f0_hz) {
            ex.voiced[j] = 1;
            ex.f0_hz[j] = *f.f0_hz;
        }
    }
    return ex;
}

// ---------------------------------------------------------------------------
// Configuration and corpus files

struct TrainConfig {
    std::uint64_t seed = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t batch = 32;
    std::size_t epochs = 50;
    double lambda = 1.0;
    double segment_seconds = 0.5;
    bool augment = true;
    double gain_db_min = -6.0, gain_db_max = 6.0;
    double snr_db_min = 10.0, snr_db_max = 30.0;
    std::string noise_dir;
    // Early stopping on validation RPA; 0 disables it.
    std::size_t patience = 0;
    std::size_t validate_every = 1;

    void validate() const {
        if (!(lr > 0.0)) throw ArgumentError("lr must be positive");
        if (batch == 0) throw ArgumentError("batch must be positive");
        if (epochs == 0) throw ArgumentError("epochs must be positive");
        if (!(lambda >= 0.0)) throw ArgumentError("lambda must be non-negative");
        if (!(gain_db_min <= gain_db_max) || !(snr_db_min <= snr_db_max)) throw ArgumentError("ranges not ordered");
        if (validate_every == 0) throw ArgumentError("validate_every must be positive");
    }
};

/// Applies `key=value` lines onto `cfg`. Blank lines and `#` comments are
/// skipped; unknown keys are errors.
inline void apply_train_config(TrainConfig& cfg, const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("line " + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        auto num = [&] { return detail::parse_double(value, key.c_str()); };
        auto count = [&] {
            const double v = num();
            if (v < 0 || v != std::floor(v)) throw FormatError(key + " must be a non-negative integer");
            return static_cast<std::size_t>(v);
        };
        if (key == "seed") cfg.seed = std::stoull(value);
        else if (key == "lr") cfg.lr = num();
        else if (key == "beta1") cfg.beta1 = num();
        else if (key == "beta2") cfg.beta2 = num();
        else if (key == "adam_eps") cfg.adam_eps = num();
        else if (key == "batch") cfg.batch = count();
        else if (key == "epochs") cfg.epochs = count();
        else if (key == "lambda") cfg.lambda = num();
        else if (key == "segment_seconds") cfg.segment_seconds = num();
        else if (key == "augment") cfg.augment = num() != 0.0;
        else if (key == "gain_db_min") cfg.gain_db_min = num();
        else if (key == "gain_db_max") cfg.gain_db_max = num();
        else if (key == "snr_db_min") cfg.snr_db_min = num();
        else if (key == "snr_db_max") cfg.snr_db_max = num();
        else if (key == "noise_dir") cfg.noise_dir = value;
        else if (key == "patience") cfg.patience = count();
        else if (key == "validate_every") cfg.validate_every = count();
        else throw FormatError("unknown config key '" + key + "'");
    }
    cfg.validate();
}

inline TrainConfig read_train_config(const std::filesystem::path& path) {
    TrainConfig cfg;
    apply_train_config(cfg, detail::read_file(path));
    return cfg;
}

/// Reads `wav_path,gt_csv_path` lines; relative paths resolve against the
/// manifest's directory. Items keep manifest order.
inline std::vector<LabeledAudio> read_manifest(const std::filesystem::path& manifest) {
    std::istringstream in(detail::read_file(manifest));
    const auto base = manifest.parent_path();
    std::vector<LabeledAudio> items;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw FormatError("manifest line lacks a comma: " + line);
        std::filesystem::path wav = line.substr(0, comma), csv = line.substr(comma + 1);
        if (wav.is_relative()) wav = base / wav;
        if (csv.is_relative()) csv = base / csv;
        items.push_back({wav.string(), read_wav(wav), read_contour_csv(csv)});
    }
    return items;
}

inline void write_manifest(const std::vector<std::pair<std::string, std::string>>& rows,
                           const std::filesystem::path& path) {
    std::string text;
    for (const auto& [wav, csv] : rows) text += wav + "," + csv + "\n";
    detail::write_file(path, text);
}

/// Every WAV file directly inside `dir`, sorted by path.
inline std::vector<AudioBuffer> load_noise_dir(const std::filesystem::path& dir) {
    std::vector<AudioBuffer> out;
    if (dir.empty()) return out;
    std::vector<std::filesystem::path> paths;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".wav") paths.push_back(e.path());
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) out.push_back(read_wav(p));
    return out;
}

// ---------------------------------------------------------------------------
// Optimizer and loop

/// Adam with bias correction over every trainable tensor.
class Adam {
public:
    Adam(const ModelParams<float>& p, double lr, double beta1, double beta2, double eps)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        p.for_each_trainable([&](const std::string&, const Tensor<float>& t) {
            m_.emplace_back(t.size(), 0.0f);
            v_.emplace_back(t.size(), 0.0f);
        });
    }

    void step(ModelParams<float>& p, const ModelParams<float>& grads) {
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        const auto step_size = static_cast<float>(lr_ * std::sqrt(c2) / c1);
        const auto eps = static_cast<float>(eps_ * std::sqrt(c2));
        const auto b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
        const auto a1 = static_cast<float>(1.0 - beta1_), a2 = static_cast<float>(1.0 - beta2_);
        std::vector<const Tensor<float>*> g;
        grads.for_each_trainable([&](const std::string&, const Tensor<float>& t) { g.push_back(&t); });
        std::size_t k = 0;
        p.for_each_trainable([&](const std::string&, Tensor<float>& t) {
            auto& m = m_[k];
            auto& v = v_[k];
            const auto& gv = g[k]->values;
            for (std::size_t i = 0; i < t.size(); ++i) {
                m[i] = b1 * m[i] + a1 * gv[i];
                v[i] = b2 * v[i] + a2 * gv[i] * gv[i];
                t.values[i] -= step_size * m[i] / (std::sqrt(v[i]) + eps);
            }
            ++k;
        });
    }

    std::size_t steps() const noexcept { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<std::vector<float>> m_, v_;
};

struct EpochLog {
    std::size_t epoch = 0;
    double loss = 0.0;
    std::optional<double> val_rpa;
};

struct TrainResult {
    ModelParams<float> params;
    std::vector<EpochLog> log;
    std::size_t steps = 0;
    std::size_t best_epoch = 0;
};

/// Epoch-level progress hook; return false to stop after this epoch.
using EpochCallback = std::function<bool(const EpochLog&)>;

inline std::string format_loss_csv(const std::vector<EpochLog>& log) {
    std::ostringstream os;
    os << "epoch,loss,val_rpa\n" << std::setprecision(17);
    for (const auto& e : log) {
        os << e.epoch << ',' << e.loss << ',';
        if (e.val_rpa) os << *e.val_rpa;
        os << '\n';
    }
    return os.str();
}

/// Builds model input for one buffer: log spectrogram as float.
inline Matrix<float> model_input(const AudioBuffer& audio, const StftConfig& stft) {
    return matrix_cast<float>(compute_spectrogram(audio, stft).values);
}

/// Clean-condition RPA of `params` over `items` (pooled over frames).
inline double corpus_rpa(const ModelParams<float>& params, std::span<const LabeledAudio> items,
                         const StftConfig& stft, const PitchGrid& grid, const DecoderConfig& dec) {
    AlignedFrames all;
    for (const auto& item : items) {
        const auto z = infer(params, model_input(item.audio, stft));
        const auto a = align(decode_contour(z, grid, dec, stft.hop_seconds()), item.truth);
        all.frames.insert(all.frames.end(), a.frames.begin(), a.frames.end());
    }
    return rpa(all);
}

/// Holds the state of one training run so it can be stepped explicitly.
class Trainer {
public:
    Trainer(std::vector<LabeledAudio> corpus, TrainConfig cfg, StftConfig stft = {}, PitchGrid grid = PitchGrid{},
            std::vector<AudioBuffer> noise = {})
        : corpus_(std::move(corpus)), cfg_(std::move(cfg)), stft_(stft), grid_(std::move(grid)),
          params_(init_params<float>(cfg_.seed, Architecture{.freq_bins = stft.band_bins(),
                                                             .pitch_bins = grid_.size()})),
          adam_(params_, cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.adam_eps), rng_(cfg_.seed ^ 0x5eedf00dull) {
        cfg_.validate();
        if (corpus_.empty()) throw ArgumentError("empty training corpus");
        augment_.gain_db_min = cfg_.gain_db_min;
        augment_.gain_db_max = cfg_.gain_db_max;
        augment_.snr_db_min = cfg_.snr_db_min;
        augment_.snr_db_max = cfg_.snr_db_max;
        augment_.noise_sources = std::move(noise);
        for (std::size_t i = 0; i < corpus_.size(); ++i) {
            std::vector<std::size_t> v;
            for (std::size_t m = 0; m < corpus_[i].truth.size(); ++m)
                if (corpus_[i].truth.frames[m].voiced) v.push_back(m);
            if (v.empty()) throw ArgumentError("corpus item " + corpus_[i].name + " has no voiced frames");
            voiced_frames_.push_back(std::move(v));
        }
    }

    /// One optimizer step on the given corpus items; returns the batch loss.
    double step(std::span<const std::size_t> items) {
        std::vector<Matrix<float>> inputs;
        FrameTargets targets;
        for (std::size_t idx : items) {
            const auto& frames = voiced_frames_[idx];
            const auto seg = extract_segment(corpus_[idx], frames[rng_.index(frames.size())], cfg_.segment_seconds,
                                             stft_);
            const AudioBuffer audio = cfg_.augment ? augment(seg, augment_, rng_) : seg.audio;
            inputs.push_back(model_input(audio, stft_));
            targets.append(make_targets(seg.f0_hz, seg.voiced, grid_));
        }

        ForwardCache<float> cache;
        const auto logits = forward(params_, std::span<const Matrix<float>>(inputs), Mode::train, &cache);
        Matrix<float> stacked(targets.size(), grid_.size());
        std::size_t row = 0;
        for (const auto& z : logits) {
            std::copy(z.values().begin(), z.values().end(), stacked.row(row).begin());
            row += z.rows();
        }
        const auto loss = loss_total(stacked, targets, grid_, cfg_.lambda);
        if (!std::isfinite(loss.value))
            throw DivergenceError("non-finite loss at step " + std::to_string(adam_.steps() + 1));

        std::vector<Matrix<float>> dz;
        row = 0;
        for (const auto& z : logits) {
            dz.push_back(slice_rows(loss.dz, row, z.rows()));
            row += z.rows();
        }
        last_grads_ = backward(params_, cache, std::span<const Matrix<float>>(dz));
        adam_.step(params_, last_grads_);
        return loss.value;
    }

    /// One pass over the corpus in shuffled order; returns the mean step loss.
    double epoch() {
        std::vector<std::size_t> order(corpus_.size());
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng_.index(i)]);
        double total = 0.0;
        std::size_t steps = 0;
        for (std::size_t b = 0; b < order.size(); b += cfg_.batch) {
            const std::size_t n = std::min(cfg_.batch, order.size() - b);
            total += step(std::span<const std::size_t>(order.data() + b, n));
            ++steps;
        }
        return total / static_cast<double>(steps);
    }

    const ModelParams<float>& params() const noexcept { return params_; }
    ModelParams<float>& params() noexcept { return params_; }
    const ModelParams<float>& last_gradients() const noexcept { return last_grads_; }
    std::size_t steps() const noexcept { return adam_.steps(); }
    const TrainConfig& config() const noexcept { return cfg_; }
    const StftConfig& stft() const noexcept { return stft_; }
    const PitchGrid& grid() const noexcept { return grid_; }

private:
    std::vector<LabeledAudio> corpus_;
    TrainConfig cfg_;
    StftConfig stft_;
    PitchGrid grid_;
    ModelParams<float> params_;
    ModelParams<float> last_grads_;
    Adam adam_;
    Rng rng_;
    AugmentConfig augment_;
    std::vector<std::vector<std::size_t>> voiced_frames_;
};

/// Full training run. With a validation set and cfg.patience > 0, training
/// stops once validation RPA has not improved for `patience` checks and the
/// best parameters are returned.
inline TrainResult train_loop(std::vector<LabeledAudio> corpus, const TrainConfig& cfg, const StftConfig& stft = {},
                              const PitchGrid& grid = PitchGrid{}, std::vector<AudioBuffer> noise = {},
                              std::span<const LabeledAudio> validation = {}, const EpochCallback& on_epoch = {}) {
    Trainer trainer(std::move(corpus), cfg, stft, grid, std::move(noise));
    TrainResult result;
    const bool early_stop = cfg.patience > 0 && !validation.empty();
    double best = -1.0;
    std::size_t since_best = 0;
    std::optional<ModelParams<float>> best_params;
    for (std::size_t e = 1; e <= cfg.epochs; ++e) {
        EpochLog entry{e, trainer.epoch(), std::nullopt};
        if (!validation.empty() && e % cfg.validate_every == 0) {
            entry.val_rpa = corpus_rpa(trainer.params(), validation, stft, grid, DecoderConfig{});
            if (*entry.val_rpa > best) {
                best = *entry.val_rpa;
                result.best_epoch = e;
                since_best = 0;
                if (early_stop) best_params = trainer.params();
            } else {
                ++since_best;
            }
        }
        result.log.push_back(entry);
        if (on_epoch && !on_epoch(entry)) break;
        if (early_stop && since_best >= cfg.patience) break;
    }
    result.steps = trainer.steps();
    result.params = best_params ? std::move(*best_params) : trainer.params();
    return result;
}

} // namespace swiftf0
