// Copyright (c) 2026, The zerotopo Authors
// SPDX-License-Identifier: Apache-2.0
//
// Cluster topology: nodes -> GPU packages -> compute dies (GCDs), with one
// bandwidth per link class.

#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

namespace zerotopo {

/// Link classes ordered by distance. The numeric values index per-class arrays.
enum class LinkClass : int { GcdPair = 0, IntraNode = 1, InterNode = 2 };

inline constexpr std::array<LinkClass, 3> kAllLinkClasses = {
    LinkClass::GcdPair, LinkClass::IntraNode, LinkClass::InterNode};

std::string_view to_string(LinkClass c);

struct DeviceId {
    std::size_t node = 0;
    std::size_t gpu = 0;
    std::size_t gcd = 0;

    friend bool operator==(const DeviceId&, const DeviceId&) = default;
};

/// Immutable after construction. Bandwidths are in GB/s; `bandwidth_inter` is
/// the node-aggregate effective bandwidth.
class Topology {
public:
    /// Throws ConfigError naming the field when a count or bandwidth is not positive.
    Topology(std::size_t num_nodes, std::size_t gpus_per_node, std::size_t gcds_per_gpu,
             double bandwidth_gcd, double bandwidth_intra, double bandwidth_inter);

    std::size_t num_nodes() const noexcept { return mNodes; }
    std::size_t gpus_per_node() const noexcept { return mGpus; }
    std::size_t gcds_per_gpu() const noexcept { return mGcds; }
    /// P: devices (GCDs) per node.
    std::size_t devices_per_node() const noexcept { return mGpus * mGcds; }
    std::size_t device_count() const noexcept { return mNodes * devices_per_node(); }

    double bandwidth_gcd() const noexcept { return mBwGcd; }
    double bandwidth_intra() const noexcept { return mBwIntra; }
    double bandwidth_inter() const noexcept { return mBwInter; }
    double bandwidth(LinkClass c) const noexcept;

    bool contains(const DeviceId& d) const noexcept;

    // Rank order is node-major, then GPU, then GCD.
    std::size_t rank_of(const DeviceId& d) const;
    DeviceId device(std::size_t rank) const;

    /// Throws std::invalid_argument for a == b or out-of-range ids.
    LinkClass link_class(const DeviceId& a, const DeviceId& b) const;
    LinkClass link_class(std::size_t rank_a, std::size_t rank_b) const;

    friend bool operator==(const Topology&, const Topology&) = default;

private:
    std::size_t mNodes;
    std::size_t mGpus;
    std::size_t mGcds;
    double mBwGcd;
    double mBwIntra;
    double mBwInter;
};

/// Parses a JSON topology document with exactly the fields num_nodes,
/// gpus_per_node, gcds_per_gpu, bandwidth_gcd, bandwidth_intra, bandwidth_inter.
Topology load_topology(std::string_view doc);
Topology load_topology_file(const std::string& path);

/// 4 MI250X per node, 2 GCDs each; 200 / 50 / 100 GB/s.
Topology builtin_frontier(std::size_t nodes);
/// 8 A100 per node; 600 GB/s NVLink, 200 GB/s inter-node.
Topology builtin_dgx(std::size_t nodes);

}  // namespace zerotopo
