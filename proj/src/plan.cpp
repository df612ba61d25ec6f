// Copyright (c) 2026, The zerotopo Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "zerotopo/plan.hpp"

#include <cmath>
#include <string>

#include <fmt/core.h>

#include "zerotopo/error.hpp"

namespace zerotopo {

std::string_view to_string(Scheme s) {
    switch (s) {
        case Scheme::ZeRO1: return "zero1";
        case Scheme::ZeRO2: return "zero2";
        case Scheme::ZeRO3: return "zero3";
        case Scheme::ZeROpp: return "zeropp";
        case Scheme::ZeROtopo: return "zerotopo";
    }
    return "unknown";
}

Scheme parse_scheme(std::string_view name) {
    if (name == "zero1") return Scheme::ZeRO1;
    if (name == "zero2") return Scheme::ZeRO2;
    if (name == "zero3") return Scheme::ZeRO3;
    if (name == "zeropp" || name == "zero++") return Scheme::ZeROpp;
    if (name == "zerotopo") return Scheme::ZeROtopo;
    throw ConfigError("scheme", fmt::format("unknown scheme '{}'", name));
}

OptimizerSpec parse_optimizer(std::string_view name) {
    if (name == "adam") return OptimizerSpec::adam();
    if (name == "sgd") return OptimizerSpec::sgd();
    throw ConfigError("optimizer", fmt::format("unknown optimizer '{}'", name));
}

ShardingPlan make_plan(Scheme scheme, const Topology& t, std::size_t sec_degree) {
    const std::size_t n = t.num_nodes();
    const std::size_t p = t.devices_per_node();

    ShardingPlan plan;
    plan.scheme = scheme;
    plan.topology = t;
    plan.n_dp = n;
    plan.p_dp = p;
    plan.n_os = n;
    plan.p_os = p;

    if (sec_degree != 0 && scheme != Scheme::ZeROpp && scheme != Scheme::ZeROtopo) {
        throw ConfigError("sec", fmt::format("secondary degree is only meaningful for zeropp and "
                                             "zerotopo, not {}",
                                             to_string(scheme)));
    }

    switch (scheme) {
        case Scheme::ZeRO1:
            break;
        case Scheme::ZeRO2:
            plan.n_g = n;
            plan.p_g = p;
            break;
        case Scheme::ZeRO3:
            plan.n_g = plan.n_w = n;
            plan.p_g = plan.p_w = p;
            break;
        case Scheme::ZeROpp:
            plan.n_g = plan.n_w = n;
            plan.p_g = plan.p_w = p;
            if (sec_degree != 0 && sec_degree != p) {
                throw ConfigError("sec", fmt::format("zeropp keeps its secondary across the node "
                                                     "(degree {}), got {}",
                                                     p, sec_degree));
            }
            plan.secondary_degree = p;
            break;
        case Scheme::ZeROtopo: {
            const std::size_t sec = sec_degree == 0 ? 2 : sec_degree;
            if (sec != 2 && sec != 8) {
                throw ConfigError("sec", fmt::format("zerotopo secondary degree must be 2 or 8, got {}", sec));
            }
            if (p < 2 || p % 2 != 0) {
                throw ConfigError("sec", fmt::format("zerotopo needs an even number of devices per "
                                                     "node for its 2-device weight shards, got P={}",
                                                     p));
            }
            if (sec > p || p % sec != 0) {
                throw ConfigError("sec", fmt::format("secondary degree {} does not fit a node of {} "
                                                     "devices",
                                                     sec, p));
            }
            plan.n_w = 1;
            plan.p_w = 2;
            plan.n_g = 1;
            plan.p_g = p;
            plan.secondary_degree = sec;
            break;
        }
    }

    if (auto report = validate_dependency(plan); !report) {
        throw ConfigError("scheme", fmt::format("plan violates dependency rule: {}", report.violation));
    }
    return plan;
}

DependencyReport validate_dependency(const ShardingPlan& p) {
    const std::size_t n = p.topology.num_nodes();
    const std::size_t pp = p.topology.devices_per_node();
    struct Rel {
        std::size_t lhs, rhs;
        const char* text;
    };
    const Rel chain[] = {
        {n, p.n_dp, "N >= N_dp"},         {p.n_dp, p.n_os, "N_dp >= N_os"},
        {p.n_os, p.n_g, "N_os >= N_g"},   {p.n_g, p.n_w, "N_g >= N_w"},
        {pp, p.p_dp, "P >= P_dp"},        {p.p_dp, p.p_os, "P_dp >= P_os"},
        {p.p_os, p.p_g, "P_os >= P_g"},   {p.p_g, p.p_w, "P_g >= P_w"},
    };
    for (const auto& r : chain) {
        if (r.lhs < r.rhs) return {false, r.text};
    }
    struct Div {
        std::size_t degree, extent;
        const char* text;
    };
    const Div divs[] = {
        {p.n_dp, n, "N_dp divides N"},   {p.n_os, n, "N_os divides N"},
        {p.n_g, n, "N_g divides N"},     {p.n_w, n, "N_w divides N"},
        {p.p_dp, pp, "P_dp divides P"},  {p.p_os, pp, "P_os divides P"},
        {p.p_g, pp, "P_g divides P"},    {p.p_w, pp, "P_w divides P"},
    };
    for (const auto& d : divs) {
        if (d.degree == 0 || d.extent % d.degree != 0) return {false, d.text};
    }
    if (p.has_secondary() && (pp % p.secondary_degree != 0)) {
        return {false, "secondary degree divides P"};
    }
    return {};
}

double weight_mem_per_device(const ShardingPlan& p, const ModelSpec& m) {
    const double primary = m.param_width * m.psi / static_cast<double>(p.weight_degree());
    switch (p.scheme) {
        case Scheme::ZeROpp:
            return primary + m.param_width * m.psi / static_cast<double>(p.secondary_degree);
        case Scheme::ZeROtopo:
            return primary + m.psi / static_cast<double>(p.secondary_degree);
        default:
            return primary;
    }
}

double grad_mem_per_device(const ShardingPlan& p, const ModelSpec& m) {
    return m.param_width * m.psi / static_cast<double>(p.grad_degree());
}

double optimizer_mem_per_device(const ShardingPlan& p, const ModelSpec& m, const OptimizerSpec& o) {
    return o.k_bytes * m.psi / static_cast<double>(p.os_degree());
}

double total_model_state_mem(const ShardingPlan& p, const ModelSpec& m, const OptimizerSpec& o) {
    return weight_mem_per_device(p, m) + grad_mem_per_device(p, m) + optimizer_mem_per_device(p, m, o);
}

std::uint64_t max_model_size(const ShardingPlan& p, double capacity_bytes, const OptimizerSpec& o,
                             int param_width) {
    if (!(capacity_bytes > 0.0)) return 0;
    // Every term is linear in psi, so invert the per-parameter cost.
    const double per_param = total_model_state_mem(p, ModelSpec{1.0, param_width}, o);
    return static_cast<std::uint64_t>(std::floor(capacity_bytes / per_param));
}

std::uint64_t max_model_size(Scheme scheme, const Topology& t, double capacity_bytes,
                             const OptimizerSpec& o, std::size_t sec_degree) {
    return max_model_size(make_plan(scheme, t, sec_degree), capacity_bytes, o);
}

}  // namespace zerotopo
