// Copyright (c) 2026, The zerotopo Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "zerotopo/cost.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/core.h>

namespace zerotopo {

namespace {

struct Shape {
    Phase phase;
    std::size_t members;
    std::size_t stride;
    double extent;  // elements gathered or reduced per step
    double width;   // bytes per element on the wire
    int bits;
    double factor;  // 2 for allreduce
};

CollectiveCost make_cost(const Topology& t, const Shape& s, double alpha = 0.0) {
    CollectiveCost c;
    c.phase = s.phase;
    c.d = s.members;
    c.bits = s.bits;
    if (s.members <= 1) return c;
    const auto peers = peer_classes(t, s.members, s.stride);
    const double per_peer = s.width * s.extent / static_cast<double>(s.members) * s.factor;
    for (LinkClass lc : kAllLinkClasses) {
        const auto i = static_cast<std::size_t>(lc);
        c.by_class[i] = static_cast<double>(peers[i]) * per_peer;
        c.volume_bytes += c.by_class[i];
        if (peers[i] > 0) c.link = lc;
    }
    c.bandwidth = t.bandwidth(c.link);
    if (c.volume_bytes > 0.0) c.est_time = alpha + c.volume_bytes / (c.bandwidth * 1e9);
    return c;
}

double wire_width(int bits, const ModelSpec& m) {
    return bits == 0 ? static_cast<double>(m.param_width) : bits / 8.0;
}

Shape weight_shape(const ShardingPlan& p, const ModelSpec& m, GatherPass pass, const QuantConfig& q) {
    const int bits = q.weights_int8 ? 8 : 0;
    const bool from_secondary = pass == GatherPass::Backward && p.has_secondary();
    const std::size_t members = from_secondary ? p.secondary_degree : p.weight_degree();
    return {pass == GatherPass::Forward ? Phase::ForwardAG : Phase::BackwardAG,
            members, 1, m.psi, wire_width(bits, m), bits, 1.0};
}

Shape grad_shape(const ShardingPlan& p, const ModelSpec& m, const QuantConfig& q) {
    const int bits = q.grads_int4 ? 4 : 0;
    return {Phase::GradRS, p.grad_degree(), 1, m.psi, wire_width(bits, m), bits, 1.0};
}

std::string bytes_str(double v) { return fmt::format("{}", static_cast<long long>(std::llround(v))); }
std::string micros_str(double seconds) { return fmt::format("{:.3f}", seconds * 1e6); }

}  // namespace

const CollectiveCost& StepCostReport::phase(Phase ph) const {
    for (const auto& c : phases) {
        if (c.phase == ph) return c;
    }
    throw std::out_of_range(fmt::format("report has no phase {}", to_string(ph)));
}

double StepCostReport::total_volume() const noexcept {
    return class_totals[0] + class_totals[1] + class_totals[2];
}

std::array<std::size_t, 3> peer_classes(const Topology& t, std::size_t members, std::size_t stride) {
    if (members == 0 || stride == 0) throw std::invalid_argument("peer_classes: empty group or stride");
    const std::size_t p = t.devices_per_node();
    const std::size_t c = t.gcds_per_gpu();
    std::array<std::size_t, 3> out{};
    if (stride % p == 0) {
        out[static_cast<std::size_t>(LinkClass::InterNode)] = members - 1;
        return out;
    }
    if (p % stride != 0) {
        throw std::invalid_argument(fmt::format("stride {} does not tile a node of {} devices", stride, p));
    }
    const std::size_t same_node = std::min(members, p / stride);
    auto nests = [](std::size_t a, std::size_t b) { return a % b == 0 || b % a == 0; };
    if (!nests(members, p / stride) || !nests(stride, c) ||
        (c % stride == 0 && !nests(same_node, c / stride))) {
        throw std::invalid_argument(fmt::format(
            "{} members at stride {} do not split evenly over GPUs of {} and nodes of {}", members, stride, c, p));
    }
    const std::size_t same_gpu = c % stride == 0 ? std::min(same_node, c / stride) : 1;
    out[static_cast<std::size_t>(LinkClass::GcdPair)] = same_gpu - 1;
    out[static_cast<std::size_t>(LinkClass::IntraNode)] = same_node - same_gpu;
    out[static_cast<std::size_t>(LinkClass::InterNode)] = members - same_node;
    return out;
}

CollectiveCost weight_ag_cost(const ShardingPlan& p, const ModelSpec& m, GatherPass pass,
                              const QuantConfig& q) {
    return make_cost(p.topology, weight_shape(p, m, pass, q));
}

CollectiveCost weight_ag_cost(const ShardingPlan& p, const ModelSpec& m, GatherPass pass) {
    return weight_ag_cost(p, m, pass, QuantConfig::defaults_for(p.scheme));
}

CollectiveCost grad_rs_cost(const ShardingPlan& p, const ModelSpec& m, const QuantConfig& q) {
    return make_cost(p.topology, grad_shape(p, m, q));
}

CollectiveCost grad_rs_cost(const ShardingPlan& p, const ModelSpec& m) {
    return grad_rs_cost(p, m, QuantConfig::defaults_for(p.scheme));
}

namespace {

std::vector<Shape> sync_shapes(const ShardingPlan& p, const ModelSpec& m) {
    const std::size_t w = p.weight_degree();
    const std::size_t g = p.grad_degree();
    const std::size_t o = p.os_degree();
    const double width = m.param_width;
    return {
        {Phase::GradAR, o / g, g, m.psi / static_cast<double>(g), width, 0, 2.0},
        // Each device gathers only its own primary slice back.
        {Phase::PostUpdateAG, o / w, w, m.psi / static_cast<double>(w), width, 0, 1.0},
    };
}

}  // namespace

std::vector<CollectiveCost> sync_costs(const ShardingPlan& p, const ModelSpec& m) {
    std::vector<CollectiveCost> out;
    for (const Shape& s : sync_shapes(p, m)) out.push_back(make_cost(p.topology, s));
    return out;
}

std::vector<CollectiveCost> topo_extra_costs(const ShardingPlan& p, const ModelSpec& m) {
    if (p.scheme != Scheme::ZeROtopo) {
        throw std::invalid_argument(fmt::format("topo_extra_costs needs a zerotopo plan, got {}",
                                                to_string(p.scheme)));
    }
    return sync_costs(p, m);
}

StepCostReport step_cost(const ShardingPlan& p, const ModelSpec& m, const QuantConfig& q, double alpha) {
    if (alpha < 0.0) throw std::invalid_argument("alpha must be non-negative");
    std::vector<Shape> shapes = {weight_shape(p, m, GatherPass::Forward, q),
                                 weight_shape(p, m, GatherPass::Backward, q), grad_shape(p, m, q)};
    for (const Shape& s : sync_shapes(p, m)) shapes.push_back(s);

    StepCostReport r;
    r.scheme = p.scheme;
    for (const Shape& s : shapes) {
        r.phases.push_back(make_cost(p.topology, s, alpha));
        const auto& c = r.phases.back();
        for (std::size_t i = 0; i < 3; ++i) r.class_totals[i] += c.by_class[i];
        r.total_time += c.est_time;
    }
    return r;
}

StepCostReport step_cost(const ShardingPlan& p, const ModelSpec& m, double alpha) {
    return step_cost(p, m, QuantConfig::defaults_for(p.scheme), alpha);
}

bool ReconcileReport::ok() const noexcept {
    for (const auto& e : entries) {
        if (e.delta() != 0) return false;
    }
    return true;
}

std::vector<ReconcileEntry> ReconcileReport::mismatches() const {
    std::vector<ReconcileEntry> out;
    for (const auto& e : entries) {
        if (e.delta() != 0) out.push_back(e);
    }
    return out;
}

std::string ReconcileReport::describe() const {
    std::string out;
    for (const auto& e : mismatches()) {
        out += fmt::format("{} {}: expected {} bytes, ledger {} (delta {})\n", to_string(e.phase),
                           to_string(e.link), e.expected, e.observed, e.delta());
    }
    return out;
}

ReconcileReport reconcile(const StepCostReport& report, const TrafficLedger& ledger) {
    const double scale = static_cast<double>(ledger.device_count()) * static_cast<double>(ledger.steps());
    ReconcileReport out;
    for (Phase ph : kAllPhases) {
        const CollectiveCost* cost = nullptr;
        for (const auto& c : report.phases) {
            if (c.phase == ph) cost = &c;
        }
        for (LinkClass lc : kAllLinkClasses) {
            const double per_device = cost ? cost->by_class[static_cast<std::size_t>(lc)] : 0.0;
            const double expected = per_device * scale;
            if (expected != std::floor(expected)) {
                throw std::invalid_argument(fmt::format("{} {}: analytic volume {} is not whole bytes",
                                                        to_string(ph), to_string(lc), expected));
            }
            out.entries.push_back({ph, lc, static_cast<std::int64_t>(expected),
                                   static_cast<std::int64_t>(ledger.at(lc, ph).payload_bytes)});
        }
    }
    return out;
}

namespace {

struct Row {
    std::string phase, volume, d, link, bw, time, gcd, intra, inter;
};

std::vector<Row> rows(const StepCostReport& r) {
    std::vector<Row> out;
    for (const auto& c : r.phases) {
        const bool active = c.d > 1;
        out.push_back({std::string(to_string(c.phase)), bytes_str(c.volume_bytes), fmt::format("{}", c.d),
                       active ? std::string(to_string(c.link)) : "-",
                       active ? fmt::format("{:g}", c.bandwidth) : "-", micros_str(c.est_time),
                       bytes_str(c.by_class[0]), bytes_str(c.by_class[1]), bytes_str(c.by_class[2])});
    }
    out.push_back({"total", bytes_str(r.total_volume()), "-", "-", "-", micros_str(r.total_time),
                   bytes_str(r.class_totals[0]), bytes_str(r.class_totals[1]), bytes_str(r.class_totals[2])});
    return out;
}

}  // namespace

std::string to_tsv(const StepCostReport& r) {
    std::string out = "scheme\tphase\tvolume_bytes\td\tlink\tbandwidth_gbps\test_time_us\tgcd_pair_bytes\t"
                      "intra_node_bytes\tinter_node_bytes\n";
    for (const Row& row : rows(r)) {
        out += fmt::format("{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n", to_string(r.scheme), row.phase, row.volume,
                           row.d, row.link, row.bw, row.time, row.gcd, row.intra, row.inter);
    }
    return out;
}

std::string to_markdown(const StepCostReport& r) {
    std::string out = "| scheme | phase | volume (B) | d | link | bandwidth (GB/s) | est. time (us) | gcd_pair (B) "
                      "| intra_node (B) | inter_node (B) |\n"
                      "|---|---|---:|---:|---|---:|---:|---:|---:|---:|\n";
    for (const Row& row : rows(r)) {
        out += fmt::format("| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |\n", to_string(r.scheme), row.phase,
                           row.volume, row.d, row.link, row.bw, row.time, row.gcd, row.intra, row.inter);
    }
    return out;
}

}  // namespace zerotopo
