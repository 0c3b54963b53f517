#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "audio_io.hpp"
#include "errors.hpp"
#include "matrix.hpp"

namespace swiftf0 {

/// Shape plus row-major values.
template <typename T>
struct Tensor {
    std::vector<std::size_t> shape;
    AlignedVector<T> values;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> dims, T fill = T{}) : shape(std::move(dims)) {
        std::size_t n = 1;
        for (auto d : shape) n *= d;
        values.assign(n, fill);
    }

    std::size_t size() const noexcept { return values.size(); }
    T* data() noexcept { return values.data(); }
    const T* data() const noexcept { return values.data(); }
    bool operator==(const Tensor&) const = default;
};

/// Fixed layer plan of the network. Only the input/output widths are exposed
/// for configuration; the conv stack is always five 5x5 layers.
struct Architecture {
    static constexpr std::size_t kLayers = 5;
    static constexpr std::size_t kKernel = 5;
    std::array<std::size_t, kLayers + 1> channels{1, 8, 16, 32, 64, 1};
    std::size_t freq_bins = 132;
    std::size_t pitch_bins = 200;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;

    bool operator==(const Architecture&) const = default;
};

template <typename T>
struct ConvLayer {
    Tensor<T> kernel;  // out x in x 5 x 5
    Tensor<T> bias;    // out
};

template <typename T>
struct BatchNormLayer {
    Tensor<T> gamma;
    Tensor<T> beta;
    Tensor<T> running_mean;
    Tensor<T> running_var;
};

template <typename T>
struct ModelParams {
    Architecture arch;
    std::array<ConvLayer<T>, Architecture::kLayers> conv;
    std::array<BatchNormLayer<T>, Architecture::kLayers> bn;
    Tensor<T> proj_weight;  // pitch_bins x freq_bins
    Tensor<T> proj_bias;    // pitch_bins

    /// Calls f(name, tensor) on every trainable tensor in a fixed order.
    template <typename F>
    void for_each_trainable(F&& f) {
        visit_trainable(*this, f);
    }
    template <typename F>
    void for_each_trainable(F&& f) const {
        visit_trainable(*this, f);
    }

    /// Trainable tensors followed by batch-norm running statistics.
    template <typename F>
    void for_each_tensor(F&& f) {
        visit_all(*this, f);
    }
    template <typename F>
    void for_each_tensor(F&& f) const {
        visit_all(*this, f);
    }

    bool operator==(const ModelParams& o) const {
        bool same = arch == o.arch;
        std::vector<const Tensor<T>*> mine, theirs;
        for_each_tensor([&](const std::string&, const Tensor<T>& t) { mine.push_back(&t); });
        o.for_each_tensor([&](const std::string&, const Tensor<T>& t) { theirs.push_back(&t); });
        for (std::size_t i = 0; same && i < mine.size(); ++i) same = *mine[i] == *theirs[i];
        return same;
    }

private:
    template <typename Self, typename F>
    static void visit_trainable(Self& self, F& f) {
        for (std::size_t l = 0; l < Architecture::kLayers; ++l) {
            const auto p = std::to_string(l);
            f("conv" + p + ".kernel", self.conv[l].kernel);
            f("conv" + p + ".bias", self.conv[l].bias);
            f("bn" + p + ".gamma", self.bn[l].gamma);
            f("bn" + p + ".beta", self.bn[l].beta);
        }
        f(std::string("proj.weight"), self.proj_weight);
        f(std::string("proj.bias"), self.proj_bias);
    }

    template <typename Self, typename F>
    static void visit_all(Self& self, F& f) {
        visit_trainable(self, f);
        for (std::size_t l = 0; l < Architecture::kLayers; ++l) {
            const auto p = std::to_string(l);
            f("bn" + p + ".running_mean", self.bn[l].running_mean);
            f("bn" + p + ".running_var", self.bn[l].running_var);
        }
    }
};

/// Parameters with every tensor shaped for `arch` and zero-filled
/// (running variance is set to one).
template <typename T>
ModelParams<T> make_zero_params(const Architecture& arch = {}) {
    ModelParams<T> p;
    p.arch = arch;
    constexpr std::size_t k = Architecture::kKernel;
    for (std::size_t l = 0; l < Architecture::kLayers; ++l) {
        const std::size_t in = arch.channels[l], out = arch.channels[l + 1];
        p.conv[l].kernel = Tensor<T>({out, in, k, k});
        p.conv[l].bias = Tensor<T>({out});
        p.bn[l].gamma = Tensor<T>({out});
        p.bn[l].beta = Tensor<T>({out});
        p.bn[l].running_mean = Tensor<T>({out});
        p.bn[l].running_var = Tensor<T>({out}, T(1));
    }
    p.proj_weight = Tensor<T>({arch.pitch_bins, arch.freq_bins});
    p.proj_bias = Tensor<T>({arch.pitch_bins});
    return p;
}

namespace detail {

// Uniform double in [0, 1) from the top 53 bits; independent of the standard
// library's distribution implementation so seeds reproduce everywhere.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

} // namespace detail

/// Kernels ~ U(+-sqrt(6 / fan_in)), biases 0, gamma 1, beta 0, running mean 0,
/// running variance 1. The projection uses fan_in = freq_bins.
template <typename T>
ModelParams<T> init_params(std::uint64_t seed, const Architecture& arch = {}) {
    auto p = make_zero_params<T>(arch);
    std::mt19937_64 rng(seed);
    auto fill = [&](Tensor<T>& t, double fan_in) {
        const double bound = std::sqrt(6.0 / fan_in);
        for (auto& v : t.values) v = static_cast<T>((2.0 * detail::unit_uniform(rng) - 1.0) * bound);
    };
    constexpr double taps = Architecture::kKernel * Architecture::kKernel;
    for (std::size_t l = 0; l < Architecture::kLayers; ++l) {
        fill(p.conv[l].kernel, static_cast<double>(arch.channels[l]) * taps);
        std::fill(p.bn[l].gamma.values.begin(), p.bn[l].gamma.values.end(), T(1));
    }
    fill(p.proj_weight, static_cast<double>(arch.freq_bins));
    return p;
}

struct ParamCount {
    std::size_t conv_kernels = 0;
    std::size_t conv_biases = 0;
    std::size_t bn_affine = 0;
    std::size_t projection = 0;

    std::size_t conv_stack() const noexcept { return conv_kernels + conv_biases; }
    std::size_t total() const noexcept { return conv_kernels + conv_biases + bn_affine + projection; }
};

/// Trainable scalar count. Running statistics are not trainable and are excluded.
template <typename T>
ParamCount count_params(const ModelParams<T>& p) {
    ParamCount c;
    for (std::size_t l = 0; l < Architecture::kLayers; ++l) {
        c.conv_kernels += p.conv[l].kernel.size();
        c.conv_biases += p.conv[l].bias.size();
        c.bn_affine += p.bn[l].gamma.size() + p.bn[l].beta.size();
    }
    c.projection = p.proj_weight.size() + p.proj_bias.size();
    return c;
}

template <typename To, typename From>
ModelParams<To> params_cast(const ModelParams<From>& src) {
    auto out = make_zero_params<To>(src.arch);
    std::vector<const Tensor<From>*> from;
    src.for_each_tensor([&](const std::string&, const Tensor<From>& t) { from.push_back(&t); });
    std::size_t i = 0;
    out.for_each_tensor([&](const std::string&, Tensor<To>& t) {
        for (std::size_t j = 0; j < t.size(); ++j) t.values[j] = static_cast<To>(from[i]->values[j]);
        ++i;
    });
    return out;
}

// ---------------------------------------------------------------------------
// Forward / backward

enum class Mode { train, eval };

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Intermediates of a train-mode forward pass, per layer and batch item.
/// Feature maps are stored channel-major: channels x (frames * freq_bins).
template <typename T>
struct ForwardCache {
    Mode mode = Mode::eval;
    const ModelParams<T>* params = nullptr;
    std::vector<std::size_t> frames;
    // inputs[l][i]: input of conv layer l for item i; inputs[5][i] feeds the projection.
    std::array<std::vector<RowMat<T>>, Architecture::kLayers + 1> inputs;
    // normalized[l][i]: batch-normalized conv output before the affine step and ReLU.
    std::array<std::vector<RowMat<T>>, Architecture::kLayers> normalized;
    std::array<std::vector<T>, Architecture::kLayers> inv_std;
};

namespace detail {

// Unfolds output frames [t0, t1) of a channel-major feature map into
// (channels * 25) x ((t1 - t0) * width) patches with zero padding of 2 on
// every edge.
template <typename T>
void im2col(const RowMat<T>& in, std::size_t frames, std::size_t width, std::size_t t0, std::size_t t1,
            RowMat<T>& col) {
    constexpr std::ptrdiff_t k = Architecture::kKernel, pad = k / 2;
    const std::size_t channels = static_cast<std::size_t>(in.rows());
    const std::ptrdiff_t tf = static_cast<std::ptrdiff_t>(frames), w = static_cast<std::ptrdiff_t>(width);
    col.resize(static_cast<Eigen::Index>(channels * k * k), static_cast<Eigen::Index>((t1 - t0) * width));
    for (std::size_t c = 0; c < channels; ++c) {
        const T* src = in.row(static_cast<Eigen::Index>(c)).data();
        for (std::ptrdiff_t dt = 0; dt < k; ++dt) {
            for (std::ptrdiff_t df = 0; df < k; ++df) {
                T* dst = col.row(static_cast<Eigen::Index>(c * k * k + dt * k + df)).data();
                const std::ptrdiff_t shift_f = df - pad;
                const std::ptrdiff_t f_lo = std::max<std::ptrdiff_t>(0, -shift_f);
                const std::ptrdiff_t f_hi = std::min<std::ptrdiff_t>(w, w - shift_f);
                for (auto t = static_cast<std::ptrdiff_t>(t0); t < static_cast<std::ptrdiff_t>(t1); ++t) {
                    T* out_row = dst + (t - static_cast<std::ptrdiff_t>(t0)) * w;
                    const std::ptrdiff_t st = t + dt - pad;
                    if (st < 0 || st >= tf) {
                        std::fill(out_row, out_row + w, T(0));
                        continue;
                    }
                    const T* in_row = src + st * w;
                    std::fill(out_row, out_row + f_lo, T(0));
                    std::copy(in_row + f_lo + shift_f, in_row + f_hi + shift_f, out_row + f_lo);
                    std::fill(out_row + f_hi, out_row + w, T(0));
                }
            }
        }
    }
}

template <typename T>
void im2col(const RowMat<T>& in, std::size_t frames, std::size_t width, RowMat<T>& col) {
    im2col(in, frames, width, 0, frames, col);
}

// Adjoint of im2col for output frames [t0, t1): adds the patch gradients onto
// `out`, a channels x (frames * width) map the caller has sized and zeroed.
template <typename T>
void col2im_add(const RowMat<T>& col, std::size_t frames, std::size_t width, std::size_t t0, std::size_t t1,
                RowMat<T>& out) {
    constexpr std::ptrdiff_t k = Architecture::kKernel, pad = k / 2;
    const std::size_t channels = static_cast<std::size_t>(out.rows());
    const std::ptrdiff_t tf = static_cast<std::ptrdiff_t>(frames), w = static_cast<std::ptrdiff_t>(width);
    for (std::size_t c = 0; c < channels; ++c) {
        T* dst = out.row(static_cast<Eigen::Index>(c)).data();
        for (std::ptrdiff_t dt = 0; dt < k; ++dt) {
            for (std::ptrdiff_t df = 0; df < k; ++df) {
                const T* src = col.row(static_cast<Eigen::Index>(c * k * k + dt * k + df)).data();
                const std::ptrdiff_t shift_f = df - pad;
                const std::ptrdiff_t f_lo = std::max<std::ptrdiff_t>(0, -shift_f);
                const std::ptrdiff_t f_hi = std::min<std::ptrdiff_t>(w, w - shift_f);
                for (auto t = static_cast<std::ptrdiff_t>(t0); t < static_cast<std::ptrdiff_t>(t1); ++t) {
                    const std::ptrdiff_t st = t + dt - pad;
                    if (st < 0 || st >= tf) continue;
                    const T* g = src + (t - static_cast<std::ptrdiff_t>(t0)) * w;
                    T* acc = dst + st * w + shift_f;
                    for (std::ptrdiff_t f = f_lo; f < f_hi; ++f) acc[f] += g[f];
                }
            }
        }
    }
}

template <typename T>
Eigen::Map<const RowMat<T>> kernel_matrix(const Tensor<T>& kernel) {
    const auto out = static_cast<Eigen::Index>(kernel.shape[0]);
    return {kernel.data(), out, static_cast<Eigen::Index>(kernel.size()) / out};
}

// Output frames per im2col block. Small blocks keep the patch matrix in cache.
inline constexpr std::size_t kConvBlockFrames = 2;

template <typename T>
void conv_forward(const ConvLayer<T>& layer, const RowMat<T>& in, std::size_t frames, std::size_t width,
                  RowMat<T>& col, RowMat<T>& out) {
    const auto kernel = kernel_matrix(layer.kernel);
    out.resize(kernel.rows(), static_cast<Eigen::Index>(frames * width));
    for (std::size_t t0 = 0; t0 < frames; t0 += kConvBlockFrames) {
        const std::size_t t1 = std::min(frames, t0 + kConvBlockFrames);
        im2col(in, frames, width, t0, t1, col);
        out.middleCols(static_cast<Eigen::Index>(t0 * width), col.cols()).noalias() = kernel * col;
    }
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bias(layer.bias.data(),
                                                              static_cast<Eigen::Index>(layer.bias.size()));
    out.colwise() += bias;
}

template <typename T>
void check_batch(const ModelParams<T>& p, std::span<const Matrix<T>> batch) {
    if (batch.empty()) throw ShapeError("empty batch");
    for (const auto& s : batch) {
        if (s.cols() != p.arch.freq_bins)
            throw ShapeError("spectrogram has " + std::to_string(s.cols()) + " bins, model expects " +
                             std::to_string(p.arch.freq_bins));
        if (s.rows() == 0) throw ShapeError("spectrogram has no frames");
    }
}

template <typename T>
Matrix<T> project(const ModelParams<T>& p, const RowMat<T>& features, std::size_t frames) {
    const auto f = static_cast<Eigen::Index>(p.arch.freq_bins);
    const auto b = static_cast<Eigen::Index>(p.arch.pitch_bins);
    Eigen::Map<const RowMat<T>> a(features.data(), static_cast<Eigen::Index>(frames), f);
    Eigen::Map<const RowMat<T>> w(p.proj_weight.data(), b, f);
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bias(p.proj_bias.data(), b);
    Matrix<T> z(frames, p.arch.pitch_bins);
    Eigen::Map<RowMat<T>> zm(z.data(), static_cast<Eigen::Index>(frames), b);
    zm.noalias() = a * w.transpose();
    zm.rowwise() += bias;
    return z;
}

} // namespace detail

/// Eval-mode inference on one spectrogram (frames x freq_bins) -> logits
/// (frames x pitch_bins). Uses running batch-norm statistics; pure.
template <typename T>
Matrix<T> infer(const ModelParams<T>& p, const Matrix<T>& spec) {
    detail::check_batch(p, std::span<const Matrix<T>>(&spec, 1));
    const std::size_t frames = spec.rows(), width = p.arch.freq_bins;
    RowMat<T> act = Eigen::Map<const RowMat<T>>(spec.data(), 1, static_cast<Eigen::Index>(spec.size()));
    RowMat<T> col, out;
    for (std::size_t l = 0; l < Architecture::kLayers; ++l) {
        detail::conv_forward(p.conv[l], act, frames, width, col, out);
        const auto& bn = p.bn[l];
        for (Eigen::Index c = 0; c < out.rows(); ++c) {
            const auto ci = static_cast<std::size_t>(c);
            const T scale = bn.gamma.values[ci] /
                            std::sqrt(bn.running_var.values[ci] + static_cast<T>(p.arch.bn_eps));
            const T shift = bn.beta.values[ci] - scale * bn.running_mean.values[ci];
            out.row(c) = (out.row(c).array() * scale + shift).cwiseMax(T(0));
        }
        act.swap(out);
    }
    return detail::project(p, act, frames);
}

/// Batched forward pass. Train mode normalizes with batch statistics pooled over
/// every item, frame and frequency position, updates the running statistics, and
/// fills `cache` for backward. Eval mode ignores `cache` and is equivalent to
/// calling infer() per item.
template <typename T>
std::vector<Matrix<T>> forward(ModelParams<T>& p, std::span<const Matrix<T>> batch, Mode mode,
                               ForwardCache<T>* cache = nullptr) {
    detail::check_batch(p, batch);
    if (mode == Mode::eval) {
        std::vector<Matrix<T>> out;
        out.reserve(batch.size());
        for (const auto& s : batch) out.push_back(infer(p, s));
        return out;
    }

    ForwardCache<T> local;
    ForwardCache<T>& c = cache ? *cache : local;
    c = ForwardCache<T>{};
    c.mode = Mode::train;
    c.params = &p;
    const std::size_t items = batch.size(), width = p.arch.freq_bins;
    for (const auto& s : batch) c.frames.push_back(s.rows());

    auto& first = c.inputs[0];
    first.resize(items);
    for (std::size_t i = 0; i < items; ++i)
        first[i] = Eigen::Map<const RowMat<T>>(batch[i].data(), 1, static_cast<Eigen::Index>(batch[i].size()));

    RowMat<T> col;
    for (std::size_t l = 0; l < Architecture::kLayers; ++l) {
        const std::size_t channels = p.arch.channels[l + 1];
        auto& pre = c.normalized[l];
        pre.resize(items);
        std::size_t count = 0;
        for (std::size_t i = 0; i < items; ++i) {
            detail::conv_forward(p.conv[l], c.inputs[l][i], c.frames[i], width, col, pre[i]);
            count += c.frames[i] * width;
        }

        auto& bn = p.bn[l];
        auto& inv_std = c.inv_std[l];
        inv_std.assign(channels, T(0));
        auto& next = c.inputs[l + 1];
        next.resize(items);
        for (std::size_t i = 0; i < items; ++i) next[i].resize(static_cast<Eigen::Index>(channels), pre[i].cols());

        const T n = static_cast<T>(count);
        const T momentum = static_cast<T>(p.arch.bn_momentum);
        for (std::size_t ch = 0; ch < channels; ++ch) {
            const auto r = static_cast<Eigen::Index>(ch);
            T sum = 0;
            for (std::size_t i = 0; i < items; ++i) sum += pre[i].row(r).sum();
            const T mean = sum / n;
            T sq = 0;
            for (std::size_t i = 0; i < items; ++i) sq += (pre[i].row(r).array() - mean).square().sum();
            const T var = sq / n;
            const T istd = T(1) / std::sqrt(var + static_cast<T>(p.arch.bn_eps));
            inv_std[ch] = istd;
            const T g = bn.gamma.values[ch], b = bn.beta.values[ch];
            for (std::size_t i = 0; i < items; ++i) {
                pre[i].row(r) = (pre[i].row(r).array() - mean) * istd;
                next[i].row(r) = (pre[i].row(r).array() * g + b).cwiseMax(T(0));
            }
            const T unbiased = count > 1 ? sq / (n - T(1)) : var;
            bn.running_mean.values[ch] = (T(1) - momentum) * bn.running_mean.values[ch] + momentum * mean;
            bn.running_var.values[ch] = (T(1) - momentum) * bn.running_var.values[ch] + momentum * unbiased;
        }
    }

    std::vector<Matrix<T>> logits;
    logits.reserve(items);
    for (std::size_t i = 0; i < items; ++i) logits.push_back(detail::project(p, c.inputs.back()[i], c.frames[i]));
    return logits;
}

/// Single-spectrogram convenience overload.
template <typename T>
Matrix<T> forward(ModelParams<T>& p, const Matrix<T>& spec, Mode mode, ForwardCache<T>* cache = nullptr) {
    return std::move(forward(p, std::span<const Matrix<T>>(&spec, 1), mode, cache).front());
}

/// Exact gradients of a scalar loss with respect to every trainable tensor,
/// given dL/dZ per batch item. Running statistics in the result are zero.
template <typename T>
ModelParams<T> backward(const ModelParams<T>& p, const ForwardCache<T>& cache, std::span<const Matrix<T>> dz) {
    if (cache.mode != Mode::train || cache.params != &p)
        throw StateError("backward needs the cache of a train-mode forward on these parameters");
    if (dz.size() != cache.frames.size()) throw StateError("gradient batch size does not match the cache");
    for (std::size_t i = 0; i < dz.size(); ++i)
        if (dz[i].rows() != cache.frames[i] || dz[i].cols() != p.arch.pitch_bins)
            throw StateError("gradient shape does not match the cache");

    auto grads = make_zero_params<T>(p.arch);
    for (auto& b : grads.bn) std::fill(b.running_var.values.begin(), b.running_var.values.end(), T(0));

    const std::size_t items = dz.size(), width = p.arch.freq_bins;
    const auto f = static_cast<Eigen::Index>(width);
    const auto bins = static_cast<Eigen::Index>(p.arch.pitch_bins);

    // Projection.
    Eigen::Map<const RowMat<T>> w(p.proj_weight.data(), bins, f);
    Eigen::Map<RowMat<T>> dw(grads.proj_weight.data(), bins, f);
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(grads.proj_bias.data(), bins);
    std::vector<RowMat<T>> grad(items);
    for (std::size_t i = 0; i < items; ++i) {
        const auto frames = static_cast<Eigen::Index>(cache.frames[i]);
        Eigen::Map<const RowMat<T>> g(dz[i].data(), frames, bins);
        Eigen::Map<const RowMat<T>> a(cache.inputs.back()[i].data(), frames, f);
        dw.noalias() += g.transpose() * a;
        db += g.colwise().sum();
        RowMat<T> da = g * w;
        grad[i] = Eigen::Map<RowMat<T>>(da.data(), 1, frames * f);
    }

    RowMat<T> col, dcol, dx;
    for (std::size_t l = Architecture::kLayers; l-- > 0;) {
        const std::size_t channels = p.arch.channels[l + 1];
        const auto& bn = p.bn[l];
        const auto& xhat = cache.normalized[l];
        const auto& out = cache.inputs[l + 1];

        // ReLU mask, then batch-norm affine and normalization.
        std::size_t count = 0;
        for (std::size_t i = 0; i < items; ++i) {
            grad[i] = (out[i].array() > T(0)).select(grad[i], T(0));
            count += cache.frames[i] * width;
        }
        const T n = static_cast<T>(count);
        for (std::size_t ch = 0; ch < channels; ++ch) {
            const auto r = static_cast<Eigen::Index>(ch);
            T sum_dy = 0, sum_dy_xhat = 0;
            for (std::size_t i = 0; i < items; ++i) {
                sum_dy += grad[i].row(r).sum();
                sum_dy_xhat += (grad[i].row(r).array() * xhat[i].row(r).array()).sum();
            }
            grads.bn[l].beta.values[ch] = sum_dy;
            grads.bn[l].gamma.values[ch] = sum_dy_xhat;
            const T scale = bn.gamma.values[ch] * cache.inv_std[l][ch] / n;
            for (std::size_t i = 0; i < items; ++i)
                grad[i].row(r) =
                    scale * (n * grad[i].row(r).array() - sum_dy - xhat[i].row(r).array() * sum_dy_xhat);
        }

        // Convolution.
        auto kernel = detail::kernel_matrix(p.conv[l].kernel);
        Eigen::Map<RowMat<T>> dk(grads.conv[l].kernel.data(), kernel.rows(), kernel.cols());
        Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> dbias(grads.conv[l].bias.data(),
                                                              static_cast<Eigen::Index>(channels));
        for (std::size_t i = 0; i < items; ++i) {
            const std::size_t frames = cache.frames[i];
            dbias += grad[i].rowwise().sum();
            if (l > 0) dx.setZero(static_cast<Eigen::Index>(p.arch.channels[l]), grad[i].cols());
            for (std::size_t t0 = 0; t0 < frames; t0 += detail::kConvBlockFrames) {
                const std::size_t t1 = std::min(frames, t0 + detail::kConvBlockFrames);
                const auto g = grad[i].middleCols(static_cast<Eigen::Index>(t0 * width),
                                                  static_cast<Eigen::Index>((t1 - t0) * width));
                detail::im2col(cache.inputs[l][i], frames, width, t0, t1, col);
                dk.noalias() += g * col.transpose();
                if (l > 0) {
                    dcol.noalias() = kernel.transpose() * g;
                    detail::col2im_add(dcol, frames, width, t0, t1, dx);
                }
            }
            if (l > 0) grad[i].swap(dx);
        }
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Weights file

namespace detail {

inline constexpr char kWeightsMagic[4] = {'S', 'W', 'F', '0'};
inline constexpr std::uint32_t kWeightsVersion = 1;

class ByteReader {
public:
    explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}
    const unsigned char* take(std::size_t n) {
        if (pos_ + n > bytes_.size()) throw FormatError("weights file truncated");
        const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data()) + pos_;
        pos_ += n;
        return p;
    }
    std::uint8_t u8() { return *take(1); }
    std::uint16_t u16() { return le16(take(2)); }
    std::uint32_t u32() { return le32(take(4)); }
    bool done() const noexcept { return pos_ == bytes_.size(); }

private:
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

} // namespace detail

template <typename T>
std::string encode_params(const ModelParams<T>& p) {
    std::string out(detail::kWeightsMagic, 4);
    detail::put32(out, detail::kWeightsVersion);
    std::uint32_t count = 0;
    p.for_each_tensor([&](const std::string&, const Tensor<T>&) { ++count; });
    detail::put32(out, count);
    p.for_each_tensor([&](const std::string& name, const Tensor<T>& t) {
        detail::put16(out, static_cast<std::uint16_t>(name.size()));
        out += name;
        out.push_back(static_cast<char>(t.shape.size()));
        for (auto d : t.shape) detail::put32(out, static_cast<std::uint32_t>(d));
        for (T v : t.values) detail::put32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    });
    return out;
}

/// Decodes a weights image and checks it against `arch`. Nothing is returned
/// unless every tensor is present with the expected shape.
template <typename T>
ModelParams<T> decode_params(const std::string& bytes, const Architecture& arch = {}) {
    detail::ByteReader in(bytes);
    if (std::memcmp(in.take(4), detail::kWeightsMagic, 4) != 0) throw FormatError("bad weights magic");
    if (const auto v = in.u32(); v != detail::kWeightsVersion)
        throw FormatError("unsupported weights version " + std::to_string(v));
    const std::uint32_t count = in.u32();
    std::map<std::string, Tensor<T>> found;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t len = in.u16();
        const auto* name = in.take(len);
        Tensor<T> t;
        const std::uint8_t rank = in.u8();
        std::size_t n = 1;
        for (std::uint8_t r = 0; r < rank; ++r) {
            t.shape.push_back(in.u32());
            n *= t.shape.back();
        }
        const auto* raw = in.take(n * 4);
        t.values.resize(n);
        for (std::size_t j = 0; j < n; ++j) t.values[j] = static_cast<T>(std::bit_cast<float>(detail::le32(raw + 4 * j)));
        found.emplace(std::string(reinterpret_cast<const char*>(name), len), std::move(t));
    }
    if (!in.done()) throw FormatError("trailing bytes after last tensor");

    auto p = make_zero_params<T>(arch);
    p.for_each_tensor([&](const std::string& name, Tensor<T>& t) {
        auto it = found.find(name);
        if (it == found.end()) throw ShapeError("weights file lacks tensor " + name);
        if (it->second.shape != t.shape) throw ShapeError("tensor " + name + " has the wrong shape");
        t = std::move(it->second);
        found.erase(it);
    });
    if (!found.empty()) throw ShapeError("weights file has unexpected tensor " + found.begin()->first);
    for (const auto& bn : p.bn)
        for (T v : bn.running_var.values)
            if (!(v > T(0))) throw FormatError("running variance must be positive");
    p.for_each_tensor([](const std::string& name, const Tensor<T>& t) {
        for (T v : t.values)
            if (!std::isfinite(static_cast<double>(v))) throw FormatError("non-finite value in " + name);
    });
    return p;
}

template <typename T>
void save_params(const ModelParams<T>& p, const std::filesystem::path& path) {
    detail::write_file(path, encode_params(p));
}

template <typename T = float>
ModelParams<T> load_params(const std::filesystem::path& path, const Architecture& arch = {}) {
    return decode_params<T>(detail::read_file(path), arch);
}

/// 64-bit FNV-1a over a byte string; used to fingerprint weights files.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

} // namespace swiftf0
