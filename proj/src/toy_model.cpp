// Copyright (c) 2026, The zerotopo Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "zerotopo/toy_model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include <fmt/core.h>

#include "zerotopo/error.hpp"

namespace zerotopo {

namespace {

constexpr std::size_t kTeacherHidden = 4;

// Uniform in [-1, 1) from the top 53 bits; portable across standard libraries.
double uniform_pm1(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-52 - 1.0;
}

}  // namespace

ToyModel::ToyModel(const ToyModelConfig& cfg, std::uint64_t seed) : mCfg(cfg), mSeed(seed) {
    const std::size_t h = cfg.hidden;
    if (h == 0) throw ConfigError("hidden", "non-positive count: hidden");
    if (cfg.samples == 0) throw ConfigError("samples", "non-positive count: samples");
    if (cfg.groups == 0) throw ConfigError("groups", "non-positive count: groups");
    if (cfg.latent == 0) throw ConfigError("latent", "non-positive count: latent");
    if (cfg.psi < 2 * h + 1 + h) {
        throw ConfigError("psi", fmt::format("psi={} too small for hidden width {}", cfg.psi, h));
    }
    mInputs = (cfg.psi - 2 * h - 1) / h;
    mSkip = (cfg.psi - 2 * h - 1) % h;
    if (mSkip > mInputs) {
        throw ConfigError("psi", fmt::format("psi={} too small for hidden width {}", cfg.psi, h));
    }

    std::mt19937_64 data_rng(seed * 0x9E3779B97F4A7C15ULL + 1);
    std::mt19937_64 init_rng(seed * 0x9E3779B97F4A7C15ULL + 2);

    const std::size_t d = mInputs;
    const std::size_t k = cfg.latent;
    std::vector<double> mix(d * k);
    // Unit-variance entries scaled by 1/sqrt(D) keep |x| near 1 at any width.
    const double mix_scale = std::sqrt(3.0 / static_cast<double>(k * d));
    for (double& v : mix) v = uniform_pm1(data_rng) * mix_scale;
    std::vector<double> teacher_u(kTeacherHidden * k);
    std::vector<double> teacher_v(kTeacherHidden);
    for (double& v : teacher_u) v = uniform_pm1(data_rng) * 2.0;
    for (double& v : teacher_v) v = uniform_pm1(data_rng);

    mX.resize(cfg.samples * d);
    mT.resize(cfg.samples);
    std::vector<double> z(k);
    for (std::size_t s = 0; s < cfg.samples; ++s) {
        for (double& v : z) v = uniform_pm1(data_rng);
        double* x = mX.data() + s * d;
        for (std::size_t i = 0; i < d; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < k; ++j) acc += mix[i * k + j] * z[j];
            x[i] = acc;
        }
        double t = 0.0;
        for (std::size_t q = 0; q < kTeacherHidden; ++q) {
            double a = 0.0;
            for (std::size_t j = 0; j < k; ++j) a += teacher_u[q * k + j] * z[j];
            t += teacher_v[q] * std::tanh(a);
        }
        mT[s] = t + cfg.noise * uniform_pm1(data_rng);
    }

    mInit.assign(cfg.psi, 0.0);
    const double w1_scale = 1.0;
    for (std::size_t i = 0; i < h * d; ++i) mInit[i] = uniform_pm1(init_rng) * w1_scale;
    const double w2_scale = 1.0 / std::sqrt(static_cast<double>(h));
    for (std::size_t j = 0; j < h; ++j) mInit[h * d + h + j] = uniform_pm1(init_rng) * w2_scale;
}

std::pair<std::size_t, std::size_t> ToyModel::micro_batch(std::size_t rank, std::size_t ranks) const {
    if (ranks == 0 || rank >= ranks) throw std::invalid_argument("micro_batch: rank out of range");
    const std::size_t s = mCfg.samples;
    return {rank * s / ranks, (rank + 1) * s / ranks};
}

double ToyModel::forward(std::span<const double> params, std::size_t begin, std::size_t end,
                         Activations& act) const {
    if (params.size() != mCfg.psi) {
        throw std::invalid_argument(fmt::format("forward: expected {} params, got {}", mCfg.psi, params.size()));
    }
    const std::size_t h = mCfg.hidden;
    const std::size_t d = mInputs;
    const double* w1 = params.data();
    const double* b1 = w1 + h * d;
    const double* w2 = b1 + h;
    const double b2 = w2[h];
    const double* skip = w2 + h + 1;

    act.begin = begin;
    act.end = end;
    act.hidden.assign((end - begin) * h, 0.0);
    act.error.assign(end - begin, 0.0);

    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(mCfg.samples);
    for (std::size_t s = begin; s < end; ++s) {
        const double* x = sample(s);
        double y = b2;
        double* hid = act.hidden.data() + (s - begin) * h;
        for (std::size_t j = 0; j < h; ++j) {
            double z = b1[j];
            const double* row = w1 + j * d;
            for (std::size_t i = 0; i < d; ++i) z += row[i] * x[i];
            hid[j] = std::tanh(z);
            y += w2[j] * hid[j];
        }
        for (std::size_t i = 0; i < mSkip; ++i) y += skip[i] * x[i];
        const double e = y - mT[s];
        act.error[s - begin] = e;
        loss += 0.5 * e * e * inv_n;
    }
    return loss;
}

void ToyModel::backward(std::span<const double> params, const Activations& act, double scale,
                        std::span<double> grad) const {
    if (params.size() != mCfg.psi || grad.size() != mCfg.psi) {
        throw std::invalid_argument("backward: parameter/gradient length mismatch");
    }
    const std::size_t h = mCfg.hidden;
    const std::size_t d = mInputs;
    const double* w2 = params.data() + h * d + h;
    double* g_w1 = grad.data();
    double* g_b1 = g_w1 + h * d;
    double* g_w2 = g_b1 + h;
    double* g_b2 = g_w2 + h;
    double* g_skip = g_b2 + 1;

    const double coef = scale / static_cast<double>(mCfg.samples);
    for (std::size_t s = act.begin; s < act.end; ++s) {
        const double* x = sample(s);
        const double* hid = act.hidden.data() + (s - act.begin) * h;
        const double e = act.error[s - act.begin] * coef;
        *g_b2 += e;
        for (std::size_t i = 0; i < mSkip; ++i) g_skip[i] += e * x[i];
        for (std::size_t j = 0; j < h; ++j) {
            g_w2[j] += e * hid[j];
            const double delta = e * w2[j] * (1.0 - hid[j] * hid[j]);
            g_b1[j] += delta;
            double* row = g_w1 + j * d;
            for (std::size_t i = 0; i < d; ++i) row[i] += delta * x[i];
        }
    }
}

double ToyModel::loss(std::span<const double> params) const {
    Activations act;
    return forward(params, 0, mCfg.samples, act);
}

}  // namespace zerotopo
