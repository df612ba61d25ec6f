// Copyright (c) 2026, The zerotopo Authors
// SPDX-License-Identifier: Apache-2.0
//
// Index layout of one sharding plan: which slice of each parameter group a
// device owns for every kind of state, and the device groups each collective
// runs over.
//
// With W = weight degree, G = gradient degree and O = N x P optimizer degree,
// a device r holds
//   primary   slice r % W of W
//   gradient  slice c of G, c = (k % W) * (G / W) + k / W, k = r % G
//   optimizer slice c * (O / G) + r / G of O
// so each gradient slice lies inside the primary slice and each optimizer
// slice inside the gradient slice. Groups are padded to a multiple of 2 x O
// elements so that every shard, including packed INT4 chunks, is whole bytes.

#pragma once

#include <cstddef>
#include <vector>

#include "zerotopo/fabric.hpp"
#include "zerotopo/plan.hpp"

namespace zerotopo {

/// Half-open element range.
struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const noexcept { return end - begin; }
    bool contains(const IndexRange& o) const noexcept { return o.begin >= begin && o.end <= end; }
    friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

class ShardLayout {
public:
    /// Splits `psi` parameters into `groups` contiguous slices. Throws
    /// ConfigError when the plan's degrees do not nest.
    ShardLayout(const ShardingPlan& plan, std::size_t psi, std::size_t groups);

    std::size_t psi() const noexcept { return mPsi; }
    std::size_t groups() const noexcept { return mReal.size(); }
    std::size_t devices() const noexcept { return mDevices; }
    /// Unpadded slice of the flat parameter vector covered by group g.
    IndexRange real_range(std::size_t g) const { return mReal.at(g); }
    /// Padded length of group g.
    std::size_t padded_length(std::size_t g) const { return mPadded.at(g); }
    std::size_t padded_total() const noexcept { return mPaddedTotal; }

    std::size_t weight_degree() const noexcept { return mW; }
    std::size_t grad_degree() const noexcept { return mG; }
    std::size_t os_degree() const noexcept { return mDevices; }
    std::size_t secondary_degree() const noexcept { return mSec; }
    /// Devices holding the same gradient slice (N for ZeRO-topo, 1 for ZeRO-3).
    std::size_t replica_degree() const noexcept { return mDevices / mG; }

    // Ranges inside the padded group coordinates of group g.
    IndexRange primary_range(std::size_t rank, std::size_t g) const;
    IndexRange grad_range(std::size_t rank, std::size_t g) const;
    IndexRange os_range(std::size_t rank, std::size_t g) const;
    IndexRange secondary_range(std::size_t rank, std::size_t g) const;

    // Distinct groups per collective, members in shard order.
    const std::vector<Group>& weight_groups() const noexcept { return mWeightGroups; }
    const std::vector<Group>& grad_groups() const noexcept { return mGradGroups; }
    const std::vector<Group>& replica_groups() const noexcept { return mReplicaGroups; }
    const std::vector<Group>& secondary_groups() const noexcept { return mSecondaryGroups; }
    /// Empty when the optimizer and weight degrees coincide.
    const std::vector<Group>& post_update_groups() const noexcept { return mPostGroups; }

private:
    std::size_t grad_chunk(std::size_t rank) const;
    std::size_t os_chunk(std::size_t rank) const;

    std::size_t mPsi = 0;
    std::size_t mDevices = 0;
    std::size_t mW = 1, mG = 1, mSec = 0;
    std::vector<IndexRange> mReal;
    std::vector<std::size_t> mPadded;
    std::size_t mPaddedTotal = 0;
    std::vector<Group> mWeightGroups, mGradGroups, mReplicaGroups, mSecondaryGroups, mPostGroups;
};

}  // namespace zerotopo
