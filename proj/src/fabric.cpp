// Copyright (c) 2026, The zerotopo Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "zerotopo/fabric.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include <fmt/core.h>

namespace zerotopo {

std::string_view to_string(Phase p) {
    switch (p) {
        case Phase::ForwardAG: return "forward_ag";
        case Phase::BackwardAG: return "backward_ag";
        case Phase::GradRS: return "grad_rs";
        case Phase::GradAR: return "grad_ar";
        case Phase::PostUpdateAG: return "post_update_ag";
    }
    return "unknown";
}

// ----------------------------------------------------------------------------
// TrafficLedger

TrafficLedger::TrafficLedger(std::size_t device_count) : mReceivedBy(device_count, 0) {}

LedgerEntry& TrafficLedger::entry(LinkClass c, Phase ph) {
    return mEntries[static_cast<std::size_t>(c) * kAllPhases.size() + static_cast<std::size_t>(ph)];
}

const LedgerEntry& TrafficLedger::at(LinkClass c, Phase ph) const {
    return mEntries[static_cast<std::size_t>(c) * kAllPhases.size() + static_cast<std::size_t>(ph)];
}

void TrafficLedger::record(LinkClass c, Phase ph, std::size_t sender, std::size_t receiver,
                           std::uint64_t payload, std::uint64_t metadata) {
    auto& e = entry(c, ph);
    e.payload_bytes += payload;
    e.payload_sent += payload;
    e.metadata_bytes += metadata;
    e.metadata_sent += metadata;
    const std::size_t need = std::max(sender, receiver) + 1;
    if (mReceivedBy.size() < need) mReceivedBy.resize(need, 0);
    mReceivedBy[receiver] += payload;
}

void TrafficLedger::count_op(LinkClass c, Phase ph) { ++entry(c, ph).op_count; }

std::uint64_t TrafficLedger::payload(LinkClass c) const {
    std::uint64_t s = 0;
    for (Phase ph : kAllPhases) s += at(c, ph).payload_bytes;
    return s;
}

std::uint64_t TrafficLedger::payload(Phase ph) const {
    std::uint64_t s = 0;
    for (LinkClass c : kAllLinkClasses) s += at(c, ph).payload_bytes;
    return s;
}

std::uint64_t TrafficLedger::metadata(LinkClass c) const {
    std::uint64_t s = 0;
    for (Phase ph : kAllPhases) s += at(c, ph).metadata_bytes;
    return s;
}

std::uint64_t TrafficLedger::total_payload_received() const {
    std::uint64_t s = 0;
    for (const auto& e : mEntries) s += e.payload_bytes;
    return s;
}

std::uint64_t TrafficLedger::total_payload_sent() const {
    std::uint64_t s = 0;
    for (const auto& e : mEntries) s += e.payload_sent;
    return s;
}

std::uint64_t TrafficLedger::total_metadata_received() const {
    std::uint64_t s = 0;
    for (const auto& e : mEntries) s += e.metadata_bytes;
    return s;
}

std::uint64_t TrafficLedger::total_metadata_sent() const {
    std::uint64_t s = 0;
    for (const auto& e : mEntries) s += e.metadata_sent;
    return s;
}

std::uint64_t TrafficLedger::received_by(std::size_t rank) const {
    return rank < mReceivedBy.size() ? mReceivedBy[rank] : 0;
}

void TrafficLedger::begin_step() {
    if (mInStep) throw std::logic_error("begin_step: step already open");
    mInStep = true;
}

void TrafficLedger::end_step() {
    if (!mInStep) throw std::logic_error("end_step: no open step");
    mInStep = false;
    ++mSteps;
}

void TrafficLedger::reset() {
    if (mInStep) throw std::logic_error("ledger can only be reset between steps");
    mEntries = {};
    std::fill(mReceivedBy.begin(), mReceivedBy.end(), 0);
    mSteps = 0;
}

std::string TrafficLedger::to_tsv() const {
    std::string out = "link_class\tphase\tpayload_bytes\tmetadata_bytes\top_count\n";
    for (LinkClass c : kAllLinkClasses) {
        for (Phase ph : kAllPhases) {
            const auto& e = at(c, ph);
            out += fmt::format("{}\t{}\t{}\t{}\t{}\n", to_string(c), to_string(ph), e.payload_bytes,
                               e.metadata_bytes, e.op_count);
        }
    }
    return out;
}

TrafficLedger difference(const TrafficLedger& after, const TrafficLedger& before) {
    TrafficLedger d(after.mReceivedBy.size());
    for (std::size_t i = 0; i < d.mEntries.size(); ++i) {
        const auto& a = after.mEntries[i];
        const auto& b = before.mEntries[i];
        d.mEntries[i] = {a.payload_bytes - b.payload_bytes, a.metadata_bytes - b.metadata_bytes,
                         a.payload_sent - b.payload_sent, a.metadata_sent - b.metadata_sent,
                         a.op_count - b.op_count};
    }
    for (std::size_t r = 0; r < d.mReceivedBy.size(); ++r) {
        d.mReceivedBy[r] = after.mReceivedBy[r] - before.received_by(r);
    }
    d.mSteps = after.mSteps - before.mSteps;
    return d;
}

// ----------------------------------------------------------------------------
// Group

Group::Group(const Topology& t, std::vector<std::size_t> ranks) : mRanks(std::move(ranks)) {
    if (mRanks.empty()) throw std::invalid_argument("group must have at least one member");
    for (std::size_t r : mRanks) {
        if (r >= t.device_count()) {
            throw std::invalid_argument(fmt::format("group member {} outside topology", r));
        }
    }
    std::vector<std::size_t> sorted = mRanks;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw std::invalid_argument("group members must be distinct");
    }
    for (std::size_t i = 0; i < mRanks.size(); ++i) {
        for (std::size_t j = i + 1; j < mRanks.size(); ++j) {
            const LinkClass c = t.link_class(mRanks[i], mRanks[j]);
            if (!mSpan || *mSpan < c) mSpan = c;
        }
    }
}

// ----------------------------------------------------------------------------
// Fabric

namespace {

void require_equal_lengths(std::span<const std::vector<double>> v, std::size_t members, const char* op) {
    if (v.size() != members) {
        throw std::invalid_argument(fmt::format("{}: expected {} buffers, got {}", op, members, v.size()));
    }
    for (const auto& b : v) {
        if (b.size() != v.front().size()) {
            throw std::invalid_argument(fmt::format("{}: mismatched lengths {} and {}", op,
                                                    v.front().size(), b.size()));
        }
    }
}

/// Member indices sorted by rank; the reduction order.
std::vector<std::size_t> reduction_order(const Group& g) {
    std::vector<std::size_t> order(g.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return g.rank(a) < g.rank(b); });
    return order;
}

/// Sums one contribution per member into `out` (per-node left folds, then a
/// left fold over node partials). `add(member, acc, assign)` writes that
/// member's contribution into acc, either assigning or accumulating.
template <typename AddFn>
void ordered_reduce(const Group& g, const Topology& t, std::span<double> out, AddFn&& add) {
    const auto order = reduction_order(g);
    const std::size_t per_node = t.devices_per_node();
    std::vector<double> partial;
    bool have_total = false;
    std::size_t i = 0;
    while (i < order.size()) {
        const std::size_t node = g.rank(order[i]) / per_node;
        std::size_t j = i;
        while (j < order.size() && g.rank(order[j]) / per_node == node) ++j;
        std::span<double> acc = out;
        if (have_total) {
            partial.assign(out.size(), 0.0);
            acc = partial;
        }
        for (std::size_t k = i; k < j; ++k) add(order[k], acc, k == i);
        if (have_total) {
            for (std::size_t e = 0; e < out.size(); ++e) out[e] += partial[e];
        }
        have_total = true;
        i = j;
    }
}

}  // namespace

Fabric::Fabric(Topology t, FabricOptions options)
    : mTopology(std::move(t)), mOptions(options), mLedger(mTopology.device_count()) {
    if (mOptions.element_width == 0) throw std::invalid_argument("element_width must be >= 1");
}

void Fabric::check_group(const Group& g) const {
    for (std::size_t r : g.ranks()) {
        if (r >= mTopology.device_count()) {
            throw std::invalid_argument(fmt::format("group member {} outside fabric topology", r));
        }
    }
}

void Fabric::charge(const Group& g, std::size_t from_member, std::size_t to_member, std::uint64_t payload,
                    std::uint64_t metadata, Phase ph, std::array<bool, 3>& touched) {
    const std::size_t src = g.rank(from_member);
    const std::size_t dst = g.rank(to_member);
    const LinkClass c = mTopology.link_class(src, dst);
    mLedger.record(c, ph, src, dst, payload, metadata);
    touched[static_cast<std::size_t>(c)] = true;
}

void Fabric::count_ops(const std::array<bool, 3>& touched, Phase ph) {
    for (LinkClass c : kAllLinkClasses) {
        if (touched[static_cast<std::size_t>(c)]) mLedger.count_op(c, ph);
    }
}

Fabric::Buffers Fabric::allgather(const Group& g, std::span<const std::vector<double>> shards, Phase ph) {
    check_group(g);
    require_equal_lengths(shards, g.size(), "allgather");
    const std::size_t d = g.size();
    const std::size_t s = shards.front().size();

    std::vector<double> full;
    full.reserve(d * s);
    for (const auto& sh : shards) full.insert(full.end(), sh.begin(), sh.end());

    std::array<bool, 3> touched{};
    const std::uint64_t bytes = s * mOptions.element_width;
    for (std::size_t to = 0; to < d; ++to) {
        for (std::size_t from = 0; from < d; ++from) {
            if (from != to) charge(g, from, to, bytes, 0, ph, touched);
        }
    }
    count_ops(touched, ph);
    return Buffers(d, full);
}

Fabric::Buffers Fabric::reduce_scatter(const Group& g, std::span<const std::vector<double>> vectors,
                                       Phase ph) {
    check_group(g);
    require_equal_lengths(vectors, g.size(), "reduce_scatter");
    const std::size_t d = g.size();
    const std::size_t len = vectors.front().size();
    if (len % d != 0) {
        throw std::invalid_argument(
            fmt::format("reduce_scatter: length {} not divisible by group size {}", len, d));
    }
    const std::size_t chunk = len / d;

    Buffers out(d, std::vector<double>(chunk, 0.0));
    std::array<bool, 3> touched{};
    const std::uint64_t bytes = chunk * mOptions.element_width;
    for (std::size_t k = 0; k < d; ++k) {
        const std::size_t off = k * chunk;
        ordered_reduce(g, mTopology, out[k], [&](std::size_t m, std::span<double> acc, bool assign) {
            const double* src = vectors[m].data() + off;
            if (assign) {
                std::copy(src, src + chunk, acc.begin());
            } else {
                for (std::size_t e = 0; e < chunk; ++e) acc[e] += src[e];
            }
        });
        for (std::size_t from = 0; from < d; ++from) {
            if (from != k) charge(g, from, k, bytes, 0, ph, touched);
        }
    }
    count_ops(touched, ph);
    return out;
}

Fabric::Buffers Fabric::allreduce(const Group& g, std::span<const std::vector<double>> vectors, Phase ph) {
    const Buffers shards = reduce_scatter(g, vectors, ph);
    return allgather(g, shards, ph);
}

Fabric::Buffers Fabric::q_allgather(const Group& g, std::span<const std::vector<double>> shards, int bits,
                                    Phase ph) {
    check_group(g);
    require_equal_lengths(shards, g.size(), "q_allgather");
    const std::size_t d = g.size();
    const std::size_t s = shards.front().size();

    std::vector<QuantizedTensor> sent;
    sent.reserve(d);
    for (const auto& sh : shards) sent.push_back(quantize_blocks(sh, bits, mOptions.block_size));
    std::vector<std::vector<double>> decoded;
    decoded.reserve(d);
    for (const auto& q : sent) decoded.push_back(dequantize_blocks(q));

    Buffers out(d, std::vector<double>(d * s));
    std::array<bool, 3> touched{};
    for (std::size_t to = 0; to < d; ++to) {
        for (std::size_t from = 0; from < d; ++from) {
            const auto& src = from == to ? shards[from] : decoded[from];
            std::copy(src.begin(), src.end(), out[to].begin() + static_cast<std::ptrdiff_t>(from * s));
            if (from != to) {
                charge(g, from, to, sent[from].payload_bytes(),
                       sent[from].metadata_bytes(mOptions.scale_width), ph, touched);
            }
        }
    }
    count_ops(touched, ph);
    return out;
}

Fabric::Buffers Fabric::allgather_quantized(const Group& g, std::span<const QuantizedTensor> shards,
                                            Phase ph) {
    check_group(g);
    const std::size_t d = g.size();
    if (shards.size() != d) {
        throw std::invalid_argument(fmt::format("allgather_quantized: expected {} shards, got {}", d,
                                                shards.size()));
    }
    const std::size_t s = shards.front().size();
    std::vector<double> full;
    full.reserve(d * s);
    for (const auto& q : shards) {
        if (q.size() != s) throw std::invalid_argument("allgather_quantized: mismatched lengths");
        const auto v = dequantize_blocks(q);
        full.insert(full.end(), v.begin(), v.end());
    }
    std::array<bool, 3> touched{};
    for (std::size_t to = 0; to < d; ++to) {
        for (std::size_t from = 0; from < d; ++from) {
            if (from != to) {
                charge(g, from, to, shards[from].payload_bytes(),
                       shards[from].metadata_bytes(mOptions.scale_width), ph, touched);
            }
        }
    }
    count_ops(touched, ph);
    return Buffers(d, full);
}

Fabric::Buffers Fabric::q_reduce_scatter_1hop(const Group& g, std::span<const std::vector<double>> vectors,
                                              int bits, Phase ph) {
    check_group(g);
    require_equal_lengths(vectors, g.size(), "q_reduce_scatter_1hop");
    const std::size_t d = g.size();
    const std::size_t len = vectors.front().size();
    if (len % d != 0) {
        throw std::invalid_argument(
            fmt::format("q_reduce_scatter_1hop: length {} not divisible by group size {}", len, d));
    }
    const std::size_t chunk = len / d;

    Buffers out(d, std::vector<double>(chunk, 0.0));
    std::array<bool, 3> touched{};
    for (std::size_t k = 0; k < d; ++k) {
        const std::size_t off = k * chunk;
        // What member m sends to the owner of chunk k.
        std::vector<QuantizedTensor> incoming(d);
        for (std::size_t m = 0; m < d; ++m) {
            if (m == k) continue;
            incoming[m] = quantize_blocks(std::span<const double>(vectors[m]).subspan(off, chunk), bits,
                                          mOptions.block_size);
            charge(g, m, k, incoming[m].payload_bytes(), incoming[m].metadata_bytes(mOptions.scale_width),
                   ph, touched);
        }
        ordered_reduce(g, mTopology, out[k], [&](std::size_t m, std::span<double> acc, bool assign) {
            if (m == k) {
                const double* src = vectors[m].data() + off;
                if (assign) {
                    std::copy(src, src + chunk, acc.begin());
                } else {
                    for (std::size_t e = 0; e < chunk; ++e) acc[e] += src[e];
                }
                return;
            }
            if (assign) std::fill(acc.begin(), acc.end(), 0.0);
            dequantize_accumulate(incoming[m], acc);
        });
    }
    count_ops(touched, ph);
    return out;
}

}  // namespace zerotopo
