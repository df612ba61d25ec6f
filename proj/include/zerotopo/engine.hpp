// Copyright (c) 2026, The zerotopo Authors
// SPDX-License-Identifier: Apache-2.0
//
// Step-by-step execution of a sharding plan over the simulated fabric, and
// the single-worker oracle it is checked against.
//
// One step, per parameter group:
//   forward_ag      gather primaries over the weight group
//   forward         local loss on this device's micro-batch
//                   keep the secondary slice of the gathered weights, free the rest
//   backward_ag     gather from secondaries (or re-gather primaries)
//   backward        local gradient
//   grad_rs         reduce-scatter over the gradient group
//   grad_ar         allreduce matching gradient slices across replicas
//                   select the optimizer slice, Adam update on master weights
//   post_update_ag  gather updated weights back into primary slices
//
// Exact mode (no quantization, no mixed precision) reproduces the oracle bit
// for bit because both sum per-device gradients in the same order: a left fold
// over the devices of each node, then a left fold over node partials.

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "zerotopo/fabric.hpp"
#include "zerotopo/layout.hpp"
#include "zerotopo/plan.hpp"
#include "zerotopo/quantize.hpp"
#include "zerotopo/toy_model.hpp"

namespace zerotopo {

struct AdamHyper {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Full-precision optimizer state for one slice of the parameters.
struct OptimizerShard {
    std::vector<double> master;
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t step_count = 0;
};

/// One bias-corrected Adam step on `os`. Throws std::invalid_argument on a
/// length mismatch and NumericError (element index) on a non-finite result.
void adam_step(OptimizerShard& os, std::span<const double> grad, const AdamHyper& h);

/// The part of `grads` (covering `held`) that lines up with `os`. Throws
/// std::out_of_range when `held` does not cover `os`.
std::span<const double> select_matching_gradients(IndexRange held, std::span<const double> grads,
                                                  IndexRange os);

struct TrainingConfig {
    QuantConfig quant;
    /// Store working weights and gradients at 16-bit float precision.
    bool mixed_precision = false;
    /// Static loss scale, applied only in mixed precision.
    double loss_scale = 128.0;
    AdamHyper adam;
    /// Wire bytes per unquantized element.
    int param_width = 2;

    static TrainingConfig exact() { return {}; }
    /// Scheme-default quantization with mixed precision.
    static TrainingConfig quantized(Scheme s) {
        TrainingConfig c;
        c.quant = QuantConfig::defaults_for(s);
        c.mixed_precision = true;
        return c;
    }
};

struct PhaseSpec {
    Phase phase;
    std::size_t group_size = 1;
    /// 0 for working precision, otherwise the code width on the wire.
    int bits = 0;
    /// False when the phase moves no data under this plan.
    bool active = false;
};

/// Collectives of one step in execution order.
using StepSchedule = std::vector<PhaseSpec>;
StepSchedule make_schedule(const ShardingPlan& plan, const QuantConfig& q);

struct WorkerState {
    std::size_t rank = 0;
    DeviceId device;
    // Indexed by parameter group; padded group coordinates.
    std::vector<std::vector<double>> primary;
    std::vector<std::vector<double>> secondary;  // empty outside forward..backward
    std::vector<std::optional<QuantizedTensor>> secondary_q;
    std::vector<std::vector<double>> grad_shard;  // empty outside backward..update
    std::vector<OptimizerShard> os;
};

using LossTrace = std::vector<double>;

/// One loss per line, round-trippable.
void write_loss_trace(std::ostream& os, const LossTrace& trace);

/// FNV-1a over the bytes of the values.
std::uint64_t digest(std::span<const double> values);

/// Left fold per node (consecutive runs of `per_node` values), then a left
/// fold over node partials.
double hierarchical_sum(std::span<const double> values, std::size_t per_node);

class Simulation {
public:
    Simulation(ShardingPlan plan, const ToyModel& model, TrainingConfig cfg);

    /// Runs one training step and returns its loss. NumericError carries the
    /// step index.
    double run_step();

    const ShardingPlan& plan() const noexcept { return mPlan; }
    const ShardLayout& layout() const noexcept { return mLayout; }
    const TrainingConfig& config() const noexcept { return mCfg; }
    const StepSchedule& schedule() const noexcept { return mSchedule; }
    const Fabric& fabric() const noexcept { return mFabric; }
    const std::vector<WorkerState>& workers() const noexcept { return mWorkers; }
    std::size_t steps_done() const noexcept { return mStep; }

    /// Weight-replica groups (devices that jointly hold one full copy).
    std::size_t replica_count() const noexcept { return mWorkers.size() / mLayout.weight_degree(); }
    /// Unpadded parameters assembled from the primaries of replica `r`.
    std::vector<double> parameters(std::size_t replica = 0) const;

private:
    using Views = std::vector<std::vector<std::vector<double>>>;  // [rank][group]

    Views gather_primaries(Phase ph, bool quantized);
    Views gather_secondaries();
    std::vector<double> unpad(const std::vector<std::vector<double>>& groups) const;
    void pad_into(std::span<const double> flat, std::vector<std::vector<double>>& groups) const;
    void round_working(std::vector<double>& v) const;

    ShardingPlan mPlan;
    ToyModel mModel;
    TrainingConfig mCfg;
    ShardLayout mLayout;
    StepSchedule mSchedule;
    Fabric mFabric;
    std::vector<WorkerState> mWorkers;
    std::size_t mStep = 0;
};

struct TrainingResult {
    LossTrace losses;
    TrafficLedger ledger;
    /// Digest of the full parameter vector after each step.
    std::vector<std::uint64_t> param_digests;
    std::vector<double> final_params;
};

TrainingResult run_training(const ShardingPlan& plan, const ToyModel& model, std::size_t steps,
                            const TrainingConfig& cfg);

/// How the oracle splits the batch and orders its gradient sum.
struct ReductionLayout {
    std::size_t ranks = 1;
    std::size_t ranks_per_node = 1;

    static ReductionLayout of(const Topology& t) { return {t.device_count(), t.devices_per_node()}; }
};

/// Unsharded full-precision training on one logical device. The returned
/// ledger is empty.
TrainingResult baseline_single_worker(const ToyModel& model, std::size_t steps,
                                      const ReductionLayout& layout, const AdamHyper& adam = {});

}  // namespace zerotopo
