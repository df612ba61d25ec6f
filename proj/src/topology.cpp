// Copyright (c) 2026, The zerotopo Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "zerotopo/topology.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fmt/core.h>
#include <json.hpp>

#include "zerotopo/error.hpp"

namespace zerotopo {

std::string_view to_string(LinkClass c) {
    switch (c) {
        case LinkClass::GcdPair: return "gcd_pair";
        case LinkClass::IntraNode: return "intra_node";
        case LinkClass::InterNode: return "inter_node";
    }
    return "unknown";
}

namespace {

void require_count(std::size_t v, const char* field) {
    if (v < 1) {
        throw ConfigError(field, fmt::format("non-positive count: {}", field));
    }
}

void require_bandwidth(double v, const char* field) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw ConfigError(field, fmt::format("non-positive bandwidth: {}", field));
    }
}

}  // namespace

Topology::Topology(std::size_t num_nodes, std::size_t gpus_per_node, std::size_t gcds_per_gpu,
                   double bandwidth_gcd, double bandwidth_intra, double bandwidth_inter)
    : mNodes(num_nodes), mGpus(gpus_per_node), mGcds(gcds_per_gpu),
      mBwGcd(bandwidth_gcd), mBwIntra(bandwidth_intra), mBwInter(bandwidth_inter) {
    require_count(mNodes, "num_nodes");
    require_count(mGpus, "gpus_per_node");
    require_count(mGcds, "gcds_per_gpu");
    require_bandwidth(mBwGcd, "bandwidth_gcd");
    require_bandwidth(mBwIntra, "bandwidth_intra");
    require_bandwidth(mBwInter, "bandwidth_inter");
}

double Topology::bandwidth(LinkClass c) const noexcept {
    switch (c) {
        case LinkClass::GcdPair: return mBwGcd;
        case LinkClass::IntraNode: return mBwIntra;
        case LinkClass::InterNode: return mBwInter;
    }
    return mBwInter;
}

bool Topology::contains(const DeviceId& d) const noexcept {
    return d.node < mNodes && d.gpu < mGpus && d.gcd < mGcds;
}

std::size_t Topology::rank_of(const DeviceId& d) const {
    if (!contains(d)) {
        throw std::invalid_argument(
            fmt::format("device n{}.g{}.c{} outside topology", d.node, d.gpu, d.gcd));
    }
    return (d.node * mGpus + d.gpu) * mGcds + d.gcd;
}

DeviceId Topology::device(std::size_t rank) const {
    if (rank >= device_count()) {
        throw std::invalid_argument(fmt::format("rank {} outside topology of {} devices", rank,
                                                device_count()));
    }
    return DeviceId{rank / devices_per_node(), (rank % devices_per_node()) / mGcds, rank % mGcds};
}

LinkClass Topology::link_class(const DeviceId& a, const DeviceId& b) const {
    if (!contains(a) || !contains(b)) {
        throw std::invalid_argument("link_class: device outside topology");
    }
    if (a == b) {
        throw std::invalid_argument("link_class: no self link");
    }
    if (a.node != b.node) return LinkClass::InterNode;
    if (a.gpu != b.gpu) return LinkClass::IntraNode;
    return LinkClass::GcdPair;
}

LinkClass Topology::link_class(std::size_t rank_a, std::size_t rank_b) const {
    return link_class(device(rank_a), device(rank_b));
}

namespace {

constexpr std::array<const char*, 3> kCountFields = {"num_nodes", "gpus_per_node", "gcds_per_gpu"};
constexpr std::array<const char*, 3> kBandwidthFields = {"bandwidth_gcd", "bandwidth_intra",
                                                         "bandwidth_inter"};

std::size_t read_count(const nlohmann::json& doc, const char* field) {
    const auto& v = doc.at(field);
    if (v.is_number_unsigned()) {
        return v.get<std::size_t>();
    }
    if (v.is_number_integer()) {
        if (v.get<long long>() <= 0) {
            throw ConfigError(field, fmt::format("non-positive count: {}", field));
        }
        return static_cast<std::size_t>(v.get<long long>());
    }
    throw ConfigError(field, fmt::format("field {} must be an integer", field));
}

double read_bandwidth(const nlohmann::json& doc, const char* field) {
    const auto& v = doc.at(field);
    if (!v.is_number()) {
        throw ConfigError(field, fmt::format("field {} must be a number", field));
    }
    return v.get<double>();
}

}  // namespace

Topology load_topology(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("<document>", fmt::format("parse failure: {}", e.what()));
    }
    if (!doc.is_object()) {
        throw ConfigError("<document>", "parse failure: topology must be a JSON object");
    }
    for (const auto& item : doc.items()) {
        bool known = false;
        for (const char* f : kCountFields) known = known || item.key() == f;
        for (const char* f : kBandwidthFields) known = known || item.key() == f;
        if (!known) {
            throw ConfigError(item.key(), fmt::format("unknown field: {}", item.key()));
        }
    }
    for (const char* f : kCountFields) {
        if (!doc.contains(f)) throw ConfigError(f, fmt::format("missing field: {}", f));
    }
    for (const char* f : kBandwidthFields) {
        if (!doc.contains(f)) throw ConfigError(f, fmt::format("missing field: {}", f));
    }
    return Topology(read_count(doc, "num_nodes"), read_count(doc, "gpus_per_node"),
                    read_count(doc, "gcds_per_gpu"), read_bandwidth(doc, "bandwidth_gcd"),
                    read_bandwidth(doc, "bandwidth_intra"), read_bandwidth(doc, "bandwidth_inter"));
}

Topology load_topology_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("topology", fmt::format("cannot open topology file {}", path));
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return load_topology(ss.str());
}

Topology builtin_frontier(std::size_t nodes) {
    if (nodes == 0) throw ConfigError("nodes", "non-positive count: nodes");
    return Topology(nodes, 4, 2, 200.0, 50.0, 100.0);
}

Topology builtin_dgx(std::size_t nodes) {
    if (nodes == 0) throw ConfigError("nodes", "non-positive count: nodes");
    return Topology(nodes, 8, 1, 600.0, 600.0, 200.0);
}

}  // namespace zerotopo
