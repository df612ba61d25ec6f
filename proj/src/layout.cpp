// Copyright (c) 2026, The zerotopo Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "zerotopo/layout.hpp"

#include <fmt/core.h>

#include "zerotopo/error.hpp"

namespace zerotopo {

namespace {

std::vector<std::size_t> contiguous(std::size_t first, std::size_t count) {
    std::vector<std::size_t> v(count);
    for (std::size_t i = 0; i < count; ++i) v[i] = first + i;
    return v;
}

}  // namespace

ShardLayout::ShardLayout(const ShardingPlan& plan, std::size_t psi, std::size_t groups)
    : mPsi(psi),
      mDevices(plan.topology.device_count()),
      mW(plan.weight_degree()),
      mG(plan.grad_degree()),
      mSec(plan.secondary_degree) {
    const Topology& t = plan.topology;
    if (plan.os_degree() != mDevices) {
        throw ConfigError("scheme", "optimizer states must be sharded over every device");
    }
    if (mG % mW != 0 || mDevices % mG != 0) {
        throw ConfigError("scheme", fmt::format("weight degree {} and gradient degree {} do not nest "
                                                "inside {} devices",
                                                mW, mG, mDevices));
    }
    if (mSec != 0 && mDevices % mSec != 0) {
        throw ConfigError("sec", "secondary degree does not divide the device count");
    }
    if (groups == 0 || groups > psi) {
        throw ConfigError("groups", fmt::format("cannot split {} parameters into {} groups", psi, groups));
    }

    const std::size_t align = 2 * mDevices;
    std::size_t begin = 0;
    for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t len = psi / groups + (g < psi % groups ? 1 : 0);
        mReal.push_back({begin, begin + len});
        begin += len;
        const std::size_t padded = (len + align - 1) / align * align;
        mPadded.push_back(padded);
        mPaddedTotal += padded;
    }

    for (std::size_t b = 0; b < mDevices / mW; ++b) mWeightGroups.emplace_back(t, contiguous(b * mW, mW));

    const std::size_t per_half = mG / mW;
    for (std::size_t b = 0; b < mDevices / mG; ++b) {
        std::vector<std::size_t> members(mG);
        for (std::size_t i = 0; i < mG; ++i) members[i] = b * mG + (i % per_half) * mW + i / per_half;
        mGradGroups.emplace_back(t, std::move(members));
    }

    const std::size_t reps = replica_degree();
    for (std::size_t k = 0; k < mG; ++k) {
        std::vector<std::size_t> members(reps);
        for (std::size_t q = 0; q < reps; ++q) members[q] = q * mG + k;
        mReplicaGroups.emplace_back(t, std::move(members));
    }

    if (mSec != 0) {
        for (std::size_t b = 0; b < mDevices / mSec; ++b) {
            mSecondaryGroups.emplace_back(t, contiguous(b * mSec, mSec));
        }
    }

    if (mDevices > mW) {
        const std::size_t per_slice = mDevices / mW;
        for (std::size_t h = 0; h < mW; ++h) {
            std::vector<std::size_t> members(per_slice);
            for (std::size_t i = 0; i < per_slice; ++i) {
                const std::size_t o = h * per_slice + i;
                const std::size_t c = o / reps;
                const std::size_t q = o % reps;
                const std::size_t k = (c % per_half) * mW + c / per_half;
                members[i] = q * mG + k;
            }
            mPostGroups.emplace_back(t, std::move(members));
        }
    }
}

std::size_t ShardLayout::grad_chunk(std::size_t rank) const {
    const std::size_t k = rank % mG;
    return (k % mW) * (mG / mW) + k / mW;
}

std::size_t ShardLayout::os_chunk(std::size_t rank) const {
    return grad_chunk(rank) * replica_degree() + rank / mG;
}

IndexRange ShardLayout::primary_range(std::size_t rank, std::size_t g) const {
    const std::size_t s = padded_length(g) / mW;
    const std::size_t i = rank % mW;
    return {i * s, (i + 1) * s};
}

IndexRange ShardLayout::grad_range(std::size_t rank, std::size_t g) const {
    const std::size_t s = padded_length(g) / mG;
    const std::size_t c = grad_chunk(rank);
    return {c * s, (c + 1) * s};
}

IndexRange ShardLayout::os_range(std::size_t rank, std::size_t g) const {
    const std::size_t s = padded_length(g) / mDevices;
    const std::size_t o = os_chunk(rank);
    return {o * s, (o + 1) * s};
}

IndexRange ShardLayout::secondary_range(std::size_t rank, std::size_t g) const {
    if (mSec == 0) return {};
    const std::size_t s = padded_length(g) / mSec;
    const std::size_t i = rank % mSec;
    return {i * s, (i + 1) * s};
}

}  // namespace zerotopo
