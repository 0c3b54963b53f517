#pragma once

#include <filesystem>

#include "audio_io.hpp"
#include "decode.hpp"
#include "dsp.hpp"
#include "grid.hpp"
#include "model.hpp"

namespace swiftf0 {

/// Audio in, pitch contour out: resampling to the analysis rate, log
/// spectrogram, eval-mode network, local expected value decoding.
class PitchTracker {
public:
    PitchTracker(ModelParams<float> params, StftConfig stft = {}, PitchGrid grid = PitchGrid{},
                 DecoderConfig decoder = {})
        : params_(std::move(params)), stft_(stft), grid_(std::move(grid)), decoder_(decoder) {
        stft_.validate();
        decoder_.validate(grid_);
        if (params_.arch.freq_bins != stft_.band_bins())
            throw ShapeError("model expects " + std::to_string(params_.arch.freq_bins) + " input bins, front-end gives " +
                             std::to_string(stft_.band_bins()));
        if (params_.arch.pitch_bins != grid_.size()) throw ShapeError("model output does not match the pitch grid");
    }

    static PitchTracker from_file(const std::filesystem::path& weights, StftConfig stft = {},
                                  PitchGrid grid = PitchGrid{}, DecoderConfig decoder = {}) {
        Architecture arch;
        arch.freq_bins = stft.band_bins();
        arch.pitch_bins = grid.size();
        return PitchTracker(load_params<float>(weights, arch), stft, std::move(grid), decoder);
    }

    AudioBuffer prepare(const AudioBuffer& audio) const {
        return audio.sample_rate_hz == stft_.sample_rate_hz ? audio : resample_linear(audio, stft_.sample_rate_hz);
    }

    Matrix<float> logits(const AudioBuffer& audio) const {
        return infer(params_, matrix_cast<float>(compute_spectrogram(prepare(audio), stft_).values));
    }

    PitchContour analyze(const AudioBuffer& audio) const {
        return decode_contour(logits(audio), grid_, decoder_, stft_.hop_seconds());
    }

    const ModelParams<float>& params() const noexcept { return params_; }
    const StftConfig& stft() const noexcept { return stft_; }
    const PitchGrid& grid() const noexcept { return grid_; }
    const DecoderConfig& decoder() const noexcept { return decoder_; }

private:
    ModelParams<float> params_;
    StftConfig stft_;
    PitchGrid grid_;
    DecoderConfig decoder_;
};

} // namespace swiftf0
