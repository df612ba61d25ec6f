// Copyright (c) 2026, The zerotopo Authors
// SPDX-License-Identifier: Apache-2.0
//
// In-process communication fabric. Collectives move real data between
// logical devices and charge every transferred byte to the link class of its
// (sender, receiver) pair. Each shard travels owner -> receiver directly; hop
// structure (ring, tree) is not modeled since volumes do not depend on it.
//
// Reductions are deterministic: contributions are summed per node in
// ascending rank order, then node partials are summed in ascending node
// order. Within one node this is a plain left fold in rank order.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "zerotopo/quantize.hpp"
#include "zerotopo/topology.hpp"

namespace zerotopo {

enum class Phase : int { ForwardAG = 0, BackwardAG, GradRS, GradAR, PostUpdateAG };

inline constexpr std::array<Phase, 5> kAllPhases = {Phase::ForwardAG, Phase::BackwardAG,
                                                    Phase::GradRS, Phase::GradAR,
                                                    Phase::PostUpdateAG};

/// forward_ag, backward_ag, grad_rs, grad_ar, post_update_ag
std::string_view to_string(Phase p);

struct LedgerEntry {
    std::uint64_t payload_bytes = 0;   // received
    std::uint64_t metadata_bytes = 0;  // received
    std::uint64_t payload_sent = 0;
    std::uint64_t metadata_sent = 0;
    std::uint64_t op_count = 0;

    friend bool operator==(const LedgerEntry&, const LedgerEntry&) = default;
};

/// Byte counters per (link class, phase). The reported volume is received
/// payload; sent bytes are tracked for conservation checks.
class TrafficLedger {
public:
    explicit TrafficLedger(std::size_t device_count = 0);

    void record(LinkClass c, Phase ph, std::size_t sender, std::size_t receiver,
                std::uint64_t payload, std::uint64_t metadata);
    void count_op(LinkClass c, Phase ph);

    const LedgerEntry& at(LinkClass c, Phase ph) const;
    std::uint64_t payload(LinkClass c) const;
    std::uint64_t payload(Phase ph) const;
    std::uint64_t metadata(LinkClass c) const;
    std::uint64_t total_payload_received() const;
    std::uint64_t total_payload_sent() const;
    std::uint64_t total_metadata_received() const;
    std::uint64_t total_metadata_sent() const;
    /// Payload bytes received by one device over all classes and phases.
    std::uint64_t received_by(std::size_t rank) const;

    std::size_t device_count() const noexcept { return mReceivedBy.size(); }

    // Counters only grow inside a step; reset() is refused mid-step.
    void begin_step();
    void end_step();
    bool in_step() const noexcept { return mInStep; }
    std::size_t steps() const noexcept { return mSteps; }
    void reset();

    /// Tab-separated, one row per link class x phase.
    std::string to_tsv() const;

    /// Field-wise after - before (both ledgers from the same simulation).
    friend TrafficLedger difference(const TrafficLedger& after, const TrafficLedger& before);
    friend bool operator==(const TrafficLedger&, const TrafficLedger&) = default;

private:
    LedgerEntry& entry(LinkClass c, Phase ph);

    std::array<LedgerEntry, 3 * kAllPhases.size()> mEntries{};
    std::vector<std::uint64_t> mReceivedBy;
    std::size_t mSteps = 0;
    bool mInStep = false;
};

/// Ordered set of distinct devices. Member order defines shard order for
/// gathers and chunk ownership for reduce-scatters.
class Group {
public:
    Group(const Topology& t, std::vector<std::size_t> ranks);

    std::size_t size() const noexcept { return mRanks.size(); }
    std::size_t rank(std::size_t member) const { return mRanks.at(member); }
    std::span<const std::size_t> ranks() const noexcept { return mRanks; }
    /// Farthest link class between any two members; empty for a singleton.
    std::optional<LinkClass> span() const noexcept { return mSpan; }

private:
    std::vector<std::size_t> mRanks;
    std::optional<LinkClass> mSpan;
};

struct FabricOptions {
    std::size_t element_width = 2;  // wire bytes per element for unquantized transfers
    std::size_t block_size = kDefaultBlockSize;
    std::size_t scale_width = kDefaultScaleWidth;
};

class Fabric {
public:
    using Buffers = std::vector<std::vector<double>>;

    explicit Fabric(Topology t, FabricOptions options = {});

    const Topology& topology() const noexcept { return mTopology; }
    const FabricOptions& options() const noexcept { return mOptions; }
    TrafficLedger& ledger() noexcept { return mLedger; }
    const TrafficLedger& ledger() const noexcept { return mLedger; }

    /// Every member receives the concatenation of all shards in member order.
    Buffers allgather(const Group& g, std::span<const std::vector<double>> shards, Phase ph);

    /// Member k receives the sum of everyone's k-th chunk. Lengths must match
    /// and be divisible by the group size.
    Buffers reduce_scatter(const Group& g, std::span<const std::vector<double>> vectors, Phase ph);

    /// reduce_scatter followed by allgather, both charged to `ph`.
    Buffers allreduce(const Group& g, std::span<const std::vector<double>> vectors, Phase ph);

    /// Owners quantize their shard once; receivers dequantize. Each member's
    /// own shard is kept exact.
    Buffers q_allgather(const Group& g, std::span<const std::vector<double>> shards, int bits, Phase ph);

    /// Gather of shards already held in quantized form; every member,
    /// including the owner, ends up with the dequantized values.
    Buffers allgather_quantized(const Group& g, std::span<const QuantizedTensor> shards, Phase ph);

    /// Single all-to-all: every member quantizes each outgoing chunk, the
    /// chunk owner dequantizes and sums exactly. A member's own chunk is not
    /// quantized.
    Buffers q_reduce_scatter_1hop(const Group& g, std::span<const std::vector<double>> vectors,
                                  int bits, Phase ph);

private:
    void check_group(const Group& g) const;
    void charge(const Group& g, std::size_t from_member, std::size_t to_member, std::uint64_t payload,
                std::uint64_t metadata, Phase ph, std::array<bool, 3>& touched);
    void count_ops(const std::array<bool, 3>& touched, Phase ph);

    Topology mTopology;
    FabricOptions mOptions;
    TrafficLedger mLedger;
};

}  // namespace zerotopo
