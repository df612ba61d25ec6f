// Copyright (c) 2026, The zerotopo Authors
// SPDX-License-Identifier: Apache-2.0
//
// Closed-form communication volumes and serial step-time estimates.
//
// Volumes are payload bytes received per device in one step, with wire widths
// of param_width bytes for working precision, 1 for INT8 and 0.5 for INT4.
// Each collective is split by link class from the peer counts of its group,
// and its time is charged at the bandwidth of the farthest class it touches.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "zerotopo/fabric.hpp"
#include "zerotopo/plan.hpp"

namespace zerotopo {

struct CollectiveCost {
    Phase phase = Phase::ForwardAG;
    double volume_bytes = 0.0;  // per device
    std::size_t d = 1;
    LinkClass link = LinkClass::GcdPair;  // farthest class touched
    double bandwidth = 0.0;               // GB/s of `link`
    double est_time = 0.0;                // seconds
    /// 0 for working precision, else the code width.
    int bits = 0;
    std::array<double, 3> by_class{};  // per-device volume per link class
};

struct StepCostReport {
    Scheme scheme = Scheme::ZeRO3;
    std::vector<CollectiveCost> phases;
    std::array<double, 3> class_totals{};
    double total_time = 0.0;

    const CollectiveCost& phase(Phase ph) const;
    double total_volume() const noexcept;
};

enum class GatherPass { Forward, Backward };

/// Link-class split of one device's peers in a group of `members` devices
/// spaced `stride` ranks apart, starting at a multiple of members x stride.
/// Throws std::invalid_argument unless every member sees the same split (the
/// group fills whole GPUs and nodes or evenly divides them).
std::array<std::size_t, 3> peer_classes(const Topology& t, std::size_t members, std::size_t stride);

CollectiveCost weight_ag_cost(const ShardingPlan& p, const ModelSpec& m, GatherPass pass,
                              const QuantConfig& q);
CollectiveCost weight_ag_cost(const ShardingPlan& p, const ModelSpec& m, GatherPass pass);
CollectiveCost grad_rs_cost(const ShardingPlan& p, const ModelSpec& m, const QuantConfig& q);
CollectiveCost grad_rs_cost(const ShardingPlan& p, const ModelSpec& m);

/// Cross-replica gradient allreduce and post-update gather, for any plan
/// (both vanish when their group is a single device).
std::vector<CollectiveCost> sync_costs(const ShardingPlan& p, const ModelSpec& m);
/// sync_costs for a ZeRO-topo plan; std::invalid_argument for other schemes.
std::vector<CollectiveCost> topo_extra_costs(const ShardingPlan& p, const ModelSpec& m);

/// All five phases in execution order. `alpha` is added once per active
/// collective.
StepCostReport step_cost(const ShardingPlan& p, const ModelSpec& m, const QuantConfig& q,
                         double alpha = 0.0);
StepCostReport step_cost(const ShardingPlan& p, const ModelSpec& m, double alpha = 0.0);

struct ReconcileEntry {
    Phase phase;
    LinkClass link;
    std::int64_t expected = 0;
    std::int64_t observed = 0;

    std::int64_t delta() const noexcept { return observed - expected; }
};

struct ReconcileReport {
    std::vector<ReconcileEntry> entries;  // every phase x link class

    bool ok() const noexcept;
    std::vector<ReconcileEntry> mismatches() const;
    /// One line per mismatch naming phase and link class; empty when ok.
    std::string describe() const;
};

/// Compares per-device analytic payload x devices x steps with the ledger's
/// received payload. The report must be built for the padded parameter count
/// the simulation used. Throws std::invalid_argument on a fractional volume.
ReconcileReport reconcile(const StepCostReport& report, const TrafficLedger& ledger);

/// One row per phase plus a total row. Bytes as integers, times in
/// microseconds with three decimals.
std::string to_tsv(const StepCostReport& r);
std::string to_markdown(const StepCostReport& r);

}  // namespace zerotopo
