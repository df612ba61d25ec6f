// Copyright (c) 2026, The zerotopo Authors
// SPDX-License-Identifier: Apache-2.0
//
// Two-layer perceptron regression on a seeded synthetic dataset, sized to an
// exact parameter count.
//
//   y = b2 + sum_j w2_j * tanh(b1_j + W1_j . x) + sum_{i<r} skip_i * x_i
//
// The flat parameter vector is [W1 (H x D, row-major), b1 (H), w2 (H), b2,
// skip (r)], where D and r < H are chosen so that the total is exactly psi.
// Loss is the mean over all samples of 0.5 * (y - t)^2. Targets come from a
// small random teacher network of the latent factors plus uniform noise.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace zerotopo {

struct ToyModelConfig {
    std::size_t psi = 100'000;
    std::size_t hidden = 16;
    std::size_t samples = 128;
    /// Inputs are random linear images of this many latent factors, so the
    /// task cannot be interpolated and the loss settles at a noise floor.
    std::size_t latent = 2;
    /// Contiguous parameter groups gathered and freed one at a time.
    std::size_t groups = 4;
    double noise = 0.2;
};

class ToyModel {
public:
    /// Throws ConfigError when psi is too small for the hidden width.
    ToyModel(const ToyModelConfig& cfg, std::uint64_t seed);

    const ToyModelConfig& config() const noexcept { return mCfg; }
    std::uint64_t seed() const noexcept { return mSeed; }
    std::size_t num_params() const noexcept { return mCfg.psi; }
    std::size_t input_dim() const noexcept { return mInputs; }
    std::size_t hidden() const noexcept { return mCfg.hidden; }
    std::size_t skip_count() const noexcept { return mSkip; }
    std::size_t samples() const noexcept { return mCfg.samples; }

    const std::vector<double>& initial_params() const noexcept { return mInit; }

    /// Samples [begin, end) owned by data-parallel rank `rank` of `ranks`.
    std::pair<std::size_t, std::size_t> micro_batch(std::size_t rank, std::size_t ranks) const;

    /// Per-sample hidden activations and output errors from one forward pass.
    struct Activations {
        std::size_t begin = 0;
        std::size_t end = 0;
        std::vector<double> hidden;  // (end - begin) x H
        std::vector<double> error;   // y - t per sample
    };

    /// Returns sum over the samples of 0.5 * (y - t)^2 / samples().
    double forward(std::span<const double> params, std::size_t begin, std::size_t end,
                   Activations& act) const;

    /// Accumulates d(loss)/d(params) * `scale` for the samples in `act` into
    /// `grad`, using `params` for the backpropagated weights. Sample order is
    /// ascending.
    void backward(std::span<const double> params, const Activations& act, double scale,
                  std::span<double> grad) const;

    /// Full-dataset loss at `params`.
    double loss(std::span<const double> params) const;

private:
    const double* sample(std::size_t i) const { return mX.data() + i * mInputs; }

    ToyModelConfig mCfg;
    std::uint64_t mSeed;
    std::size_t mInputs = 0;
    std::size_t mSkip = 0;
    std::vector<double> mX;  // samples x D
    std::vector<double> mT;
    std::vector<double> mInit;
};

}  // namespace zerotopo
