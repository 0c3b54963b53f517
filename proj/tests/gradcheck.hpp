#pragma once

// Central finite-difference check of model gradients in double precision.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <swiftf0/loss.hpp>
#include <swiftf0/model.hpp>
#include <swiftf0/noise.hpp>

namespace gradcheck {

struct TensorResult {
    std::string name;
    double rel_error = 0.0;
    double analytic_norm = 0.0;
    double numeric_norm = 0.0;
    std::size_t checked = 0;
};

struct Problem {
    swiftf0::ModelParams<double> params;
    std::vector<swiftf0::Matrix<double>> inputs;
    swiftf0::FrameTargets targets;
    swiftf0::PitchGrid grid;
    double lambda = 1.0;
};

// Random parameters, a random 4-frame input and random voiced targets.
//
// A central difference that steps a ReLU input across zero measures the kink,
// not the gradient. With `clear_of_kinks` every channel gets a batch-norm shift
// of +-`shift`, so each channel is either active everywhere or masked
// everywhere and no unit sits within a step of zero. Every fourth channel
// before the last layer is masked, which keeps the mask path under test.
inline Problem make_problem(std::uint64_t seed, std::size_t frames = 4, bool clear_of_kinks = true,
                            double shift = 8.0) {
    Problem pr;
    pr.params = swiftf0::init_params<double>(seed);
    swiftf0::Rng rng(seed + 1);
    for (std::size_t l = 0; l < swiftf0::Architecture::kLayers; ++l) {
        auto& bn = pr.params.bn[l];
        for (auto& g : bn.gamma.values) g = rng.uniform(0.5, 1.0);
        for (std::size_t c = 0; c < bn.beta.size(); ++c) {
            const bool masked = l + 1 < swiftf0::Architecture::kLayers && c % 4 == 3;
            bn.beta.values[c] = clear_of_kinks ? (masked ? -shift : shift) : rng.uniform(-0.2, 0.5);
        }
    }
    for (auto& c : pr.params.conv)
        for (auto& b : c.bias.values) b = rng.uniform(-0.1, 0.1);
    for (auto& b : pr.params.proj_bias.values) b = rng.uniform(-0.1, 0.1);
    swiftf0::Matrix<double> s(frames, pr.params.arch.freq_bins);
    for (auto& v : s.values()) v = rng.normal() - 4.0;
    pr.inputs.push_back(std::move(s));
    std::vector<double> f0(frames);
    std::vector<std::uint8_t> voiced(frames, 1);
    for (auto& f : f0) f = 80.0 * std::pow(2.0, rng.uniform(0.0, 4.0));
    pr.targets = swiftf0::make_targets(f0, voiced, pr.grid);
    return pr;
}

// Smallest |ReLU input| over every unit of a train-mode pass.
inline double kink_margin(const Problem& pr) {
    auto p = pr.params;
    swiftf0::ForwardCache<double> cache;
    swiftf0::forward(p, std::span<const swiftf0::Matrix<double>>(pr.inputs), swiftf0::Mode::train, &cache);
    double margin = INFINITY;
    for (std::size_t l = 0; l < swiftf0::Architecture::kLayers; ++l) {
        const auto& bn = p.bn[l];
        for (const auto& x : cache.normalized[l])
            for (Eigen::Index c = 0; c < x.rows(); ++c)
                for (Eigen::Index j = 0; j < x.cols(); ++j) {
                    const auto ci = static_cast<std::size_t>(c);
                    margin = std::min(margin, std::abs(bn.gamma.values[ci] * x(c, j) + bn.beta.values[ci]));
                }
    }
    return margin;
}

inline double loss_of(swiftf0::ModelParams<double> p, const Problem& pr) {
    const auto z = swiftf0::forward(p, std::span<const swiftf0::Matrix<double>>(pr.inputs), swiftf0::Mode::train);
    return swiftf0::loss_total(z.front(), pr.targets, pr.grid, pr.lambda).value;
}

// Compares analytic and numeric gradients on up to `samples` entries per
// tensor: the entry with the largest analytic magnitude plus random ones.
// The error is ||a - n|| / max(||a||, ||n||) over the checked entries; when
// both norms are below `floor` the tensor has no gradient signal and the
// absolute difference is reported instead.
inline std::vector<TensorResult> run(const Problem& pr, double h = 1e-3, std::size_t samples = 6,
                                     std::uint64_t seed = 99, double floor = 1e-9) {
    auto p = pr.params;
    swiftf0::ForwardCache<double> cache;
    const auto z = swiftf0::forward(p, std::span<const swiftf0::Matrix<double>>(pr.inputs), swiftf0::Mode::train,
                                    &cache);
    const auto loss = swiftf0::loss_total(z.front(), pr.targets, pr.grid, pr.lambda);
    const auto grads = swiftf0::backward(p, cache, std::span<const swiftf0::Matrix<double>>(&loss.dz, 1));

    std::vector<const swiftf0::Tensor<double>*> g;
    grads.for_each_trainable([&](const std::string&, const swiftf0::Tensor<double>& t) { g.push_back(&t); });

    swiftf0::Rng rng(seed);
    std::vector<TensorResult> out;
    std::size_t k = 0;
    pr.params.for_each_trainable([&](const std::string& name, const swiftf0::Tensor<double>& t) {
        const auto& ga = g[k]->values;
        std::vector<std::size_t> idx;
        idx.push_back(static_cast<std::size_t>(
            std::max_element(ga.begin(), ga.end(), [](double a, double b) { return std::abs(a) < std::abs(b); }) -
            ga.begin()));
        while (idx.size() < std::min(samples, t.size())) {
            const std::size_t i = rng.index(t.size());
            if (std::find(idx.begin(), idx.end(), i) == idx.end()) idx.push_back(i);
        }
        double diff = 0.0, na = 0.0, nn = 0.0;
        for (std::size_t i : idx) {
            auto plus = pr.params, minus = pr.params;
            std::size_t j = 0;
            plus.for_each_trainable([&](const std::string&, swiftf0::Tensor<double>& u) {
                if (j++ == k) u.values[i] += h;
            });
            j = 0;
            minus.for_each_trainable([&](const std::string&, swiftf0::Tensor<double>& u) {
                if (j++ == k) u.values[i] -= h;
            });
            const double numeric = (loss_of(plus, pr) - loss_of(minus, pr)) / (2.0 * h);
            diff += (numeric - ga[i]) * (numeric - ga[i]);
            na += ga[i] * ga[i];
            nn += numeric * numeric;
        }
        TensorResult r{name, 0.0, std::sqrt(na), std::sqrt(nn), idx.size()};
        const double scale = std::max(r.analytic_norm, r.numeric_norm);
        r.rel_error = scale < floor ? std::sqrt(diff) : std::sqrt(diff) / scale;
        out.push_back(r);
        ++k;
    });
    return out;
}

} // namespace gradcheck
