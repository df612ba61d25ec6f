// Copyright (c) 2026, The zerotopo Authors
// SPDX-License-Identifier: Apache-2.0
//
// Sharding plans and the closed-form per-device memory model.
//
// A plan fixes, for each kind of training state, how many nodes (N_*) and how
// many devices per node (P_*) one full copy is split across:
//
//   scheme     weights   gradients   optimizer states
//   ZeRO-1     1         1           N x P
//   ZeRO-2     1         N x P       N x P
//   ZeRO-3     N x P     N x P       N x P
//   ZeRO++     N x P     N x P       N x P   (+ intra-node secondary weights)
//   ZeRO-topo  2         P           N x P   (+ INT8 secondary of degree 2 or 8)
//
// Valid plans satisfy N >= N_dp >= N_os >= N_g >= N_w and the same chain for P.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "zerotopo/quantize.hpp"
#include "zerotopo/topology.hpp"

namespace zerotopo {

enum class Scheme { ZeRO1, ZeRO2, ZeRO3, ZeROpp, ZeROtopo };

std::string_view to_string(Scheme s);
/// Accepts zero1, zero2, zero3, zeropp (or zero++), zerotopo. Throws ConfigError("scheme").
Scheme parse_scheme(std::string_view name);

struct ModelSpec {
    double psi = 0;       // parameter count
    int param_width = 2;  // bytes per parameter at working precision (2 or 4)

    double model_bytes() const noexcept { return psi * param_width; }
};

enum class OptimizerKind { Adam, SGD };

struct OptimizerSpec {
    OptimizerKind kind = OptimizerKind::Adam;
    double k_bytes = 12.0;  // optimizer-state bytes per parameter

    static OptimizerSpec adam() { return {OptimizerKind::Adam, 12.0}; }
    /// fp32 master copy only.
    static OptimizerSpec sgd() { return {OptimizerKind::SGD, 4.0}; }
};

OptimizerSpec parse_optimizer(std::string_view name);

struct ShardingPlan {
    Scheme scheme = Scheme::ZeRO3;
    Topology topology = builtin_frontier(1);

    std::size_t n_dp = 1, p_dp = 1;
    std::size_t n_w = 1, p_w = 1;
    std::size_t n_g = 1, p_g = 1;
    std::size_t n_os = 1, p_os = 1;
    /// Devices sharing one secondary weight copy; 0 when the scheme keeps none.
    std::size_t secondary_degree = 0;

    std::size_t weight_degree() const noexcept { return n_w * p_w; }
    std::size_t grad_degree() const noexcept { return n_g * p_g; }
    std::size_t os_degree() const noexcept { return n_os * p_os; }
    std::size_t dp_degree() const noexcept { return n_dp * p_dp; }
    bool has_secondary() const noexcept { return secondary_degree > 0; }
};

/// `sec_degree` 0 selects the scheme default (ZeRO++: P, ZeRO-topo: 2).
/// Throws ConfigError when the scheme cannot be laid out on the topology.
ShardingPlan make_plan(Scheme scheme, const Topology& t, std::size_t sec_degree = 0);

struct DependencyReport {
    bool ok = true;
    std::string violation;  // first violated relation, e.g. "P_g >= P_w"

    explicit operator bool() const noexcept { return ok; }
};

DependencyReport validate_dependency(const ShardingPlan& p);

// Bytes per device. ZeRO++ keeps its secondary at working width; ZeRO-topo
// keeps it at 1 byte/param (INT8).
double weight_mem_per_device(const ShardingPlan& p, const ModelSpec& m);
double grad_mem_per_device(const ShardingPlan& p, const ModelSpec& m);
double optimizer_mem_per_device(const ShardingPlan& p, const ModelSpec& m, const OptimizerSpec& o);
double total_model_state_mem(const ShardingPlan& p, const ModelSpec& m, const OptimizerSpec& o);

/// Largest parameter count whose model states fit in `capacity_bytes` per
/// device. Activations, batches and temporary buffers are not counted.
std::uint64_t max_model_size(const ShardingPlan& p, double capacity_bytes, const OptimizerSpec& o,
                             int param_width = 2);
std::uint64_t max_model_size(Scheme scheme, const Topology& t, double capacity_bytes,
                             const OptimizerSpec& o, std::size_t sec_degree = 0);

/// Which collectives run quantized. Gradient allreduce across nodes and the
/// post-update gather always move working-precision values.
struct QuantConfig {
    bool weights_int8 = false;  // forward (and secondary) weight gathers
    bool grads_int4 = false;    // gradient reduce-scatter
    std::size_t block_size = kDefaultBlockSize;
    std::size_t scale_width = kDefaultScaleWidth;

    static QuantConfig none() { return {}; }
    /// INT8 weights and INT4 gradients for ZeRO++ and ZeRO-topo, off otherwise.
    static QuantConfig defaults_for(Scheme s) {
        const bool on = s == Scheme::ZeROpp || s == Scheme::ZeROtopo;
        return {on, on, kDefaultBlockSize, kDefaultScaleWidth};
    }
    bool any() const noexcept { return weights_int8 || grads_int4; }
};

}  // namespace zerotopo
